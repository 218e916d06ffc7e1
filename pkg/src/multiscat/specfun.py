"""Cylindrical and half-integer-order Bessel functions of real argument.

Integer orders are evaluated through ``scipy.special`` (AMOS), wrapped with
the order cap, reflection and domain checks the rest of the package relies
on.  Half-integer orders ``J_{m+1/2}`` are computed here from their closed
forms and three-term recurrences, since they feed the analytic arc
integrals of the DtN assembly.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy import special

#: Largest DtN cutoff the package expects to meet in practice.
N_MAX = 256
#: Default order cap, ``2 * N_MAX + 8``.
DEFAULT_ORDER_CAP = 2 * N_MAX + 8


class CylKind(enum.Enum):
    J = "J"
    Y = "Y"
    H1 = "H1"


class BesselDomainError(ValueError):
    pass


class BesselOverflowError(OverflowError):
    pass


def _check(kind, n, x, order_cap):
    cap = DEFAULT_ORDER_CAP if order_cap is None else order_cap
    if np.any(np.abs(n) > cap):
        raise ValueError(f"order {np.max(np.abs(n))} exceeds order cap {cap}")
    if kind is CylKind.J:
        if np.any(x < 0):
            raise BesselDomainError("J_n needs x >= 0 for real evaluation")
    elif np.any(x <= 0):
        raise BesselDomainError(f"{kind.value}_n needs x > 0")


def cyl_bessel(kind: CylKind, n, x, order_cap: int | None = None):
    """J_n(x), Y_n(x) or H^(1)_n(x) for integer order ``n`` (broadcasts).

    Negative orders use ``C_{-n} = (-1)^n C_n``.
    """
    kind = CylKind(kind)
    n = np.asarray(n)
    x = np.asarray(x, dtype=float)
    if not np.issubdtype(n.dtype, np.integer):
        if np.any(n != np.round(n)):
            raise ValueError("cyl_bessel only takes integer orders")
        n = n.astype(int)
    _check(kind, n, x, order_cap)
    m = np.abs(n)
    sign = np.where((n < 0) & (m % 2 == 1), -1.0, 1.0)
    if kind is CylKind.J:
        out = special.jv(m, x) + 0j
    else:
        y = special.yv(m, x)
        if not np.all(np.isfinite(y)):
            raise BesselOverflowError("Y_n(x) overflows for this (n, x)")
        if kind is CylKind.Y:
            out = y + 0j
        else:
            out = special.jv(m, x) + 1j * y
    out = sign * out
    return out[()] if out.ndim == 0 else out


def cyl_bessel_deriv(kind: CylKind, n, x, order_cap: int | None = None):
    """Derivative d/dx C_n(x) via ``C'_n = C_{n-1} - (n/x) C_n``."""
    kind = CylKind(kind)
    n = np.asarray(n)
    x = np.asarray(x, dtype=float)
    cap = DEFAULT_ORDER_CAP if order_cap is None else order_cap
    _check(kind, n, x, cap)
    # order n-1 may sit one past the cap when n = -cap
    lower = cyl_bessel(kind, n - 1, x, order_cap=cap + 1)
    if kind is CylKind.J:
        # J'_0(0) = 0 and J'_1(0) = 1/2; avoid n/x at the origin
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(
                x == 0,
                0.5 * (cyl_bessel(kind, n - 1, x, cap + 1)
                       - cyl_bessel(kind, n + 1, x, cap + 1)),
                lower - n / np.where(x == 0, 1.0, x) * cyl_bessel(kind, n, x, cap),
            )
    else:
        out = lower - n / x * cyl_bessel(kind, n, x, cap)
    out = np.asarray(out)
    return out[()] if out.ndim == 0 else out


def hankel_table(nmax: int, x, derivative: bool = False):
    """``H[..., n] = H^(1)_n(x)`` for ``n = 0..nmax`` by upward recurrence.

    The recurrence is stable for the Hankel function because ``Y_n``
    dominates once ``n > x``.  With ``derivative`` also returns ``H'_n(x)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise BesselDomainError("H_n needs x > 0")
    if nmax > DEFAULT_ORDER_CAP:
        raise ValueError(f"order {nmax} exceeds order cap {DEFAULT_ORDER_CAP}")
    out = np.empty(x.shape + (max(nmax, 1) + 1,), dtype=complex)
    out[..., 0] = special.hankel1(0, x)
    out[..., 1] = special.hankel1(1, x)
    for n in range(1, nmax):
        out[..., n + 1] = (2 * n / x) * out[..., n] - out[..., n - 1]
    if not np.all(np.isfinite(out)):
        raise BesselOverflowError("H_n(x) overflows for this (n, x)")
    out = out[..., : nmax + 1]
    if not derivative:
        return out
    d = np.empty_like(out)
    d[..., 0] = -out[..., 1] if nmax >= 1 else -special.hankel1(1, x)
    n = np.arange(1, nmax + 1)
    d[..., 1:] = out[..., :-1] - n / x[..., None] * out[..., 1:]
    return out, d


def halfint_table(mmax: int, z) -> np.ndarray:
    """Table ``T[..., m] = J_{m+1/2}(z)`` for ``m = 0..mmax`` and ``z > 0``.

    Upward recurrence where ``mmax <= z``; otherwise downward (Miller)
    recurrence normalized against the closed forms of orders 1/2 and 3/2.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise BesselDomainError("J_{m+1/2}(z) needs z > 0")
    flat = z.ravel()
    want = mmax
    mmax = max(mmax, 1)
    out = np.empty((flat.size, mmax + 1))
    amp = np.sqrt(2.0 / (np.pi * flat))
    j0 = amp * np.sin(flat)
    j1 = amp * (np.sin(flat) / flat - np.cos(flat))

    up = flat >= mmax
    if np.any(up):
        zu = flat[up]
        t = out[up]
        t[:, 0] = j0[up]
        t[:, 1] = j1[up]
        for m in range(1, mmax):
            t[:, m + 1] = (2 * m + 1) / zu * t[:, m] - t[:, m - 1]
        out[up] = t

    down = ~up
    if np.any(down):
        zd = flat[down]
        top = int(np.ceil(mmax + 20 + 2.0 * np.sqrt(mmax + 1.0)))
        nxt = np.zeros_like(zd)  # order top+1
        cur = np.full_like(zd, 1e-300)  # order top
        t = np.zeros((zd.size, mmax + 1))
        if top <= mmax:
            t[:, top] = cur
        for m in range(top, 0, -1):
            # J_{(m-1)+1/2} = (2m+1)/z J_{m+1/2} - J_{m+3/2}
            prev = (2 * m + 1) / zd * cur - nxt
            nxt, cur = cur, prev
            if m - 1 <= mmax:
                t[:, m - 1] = cur
            big = np.abs(cur) > 1e250
            if np.any(big):
                s = np.where(big, 1e-250, 1.0)
                cur = cur * s
                nxt = nxt * s
                t *= s[:, None]
        # normalize with whichever low-order closed form is better conditioned
        use0 = np.abs(j0[down]) >= np.abs(j1[down])
        ref = np.where(use0, j0[down], j1[down])
        raw = np.where(use0, t[:, 0], t[:, 1])
        out[down] = t * (ref / raw)[:, None]
    return out[:, : want + 1].reshape(z.shape + (want + 1,))


def sph_bessel_halfint(m: int, z):
    """J_{m+1/2}(z) for integer ``m >= 0`` and real ``z > 0``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    tab = halfint_table(m, z)
    return tab[..., m]
