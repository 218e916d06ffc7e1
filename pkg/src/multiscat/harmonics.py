"""Circular harmonics on artificial circles.

Traces live on the LGL grid of a circle (``E_theta * p`` nodes, shared
element endpoints stored once).  Fourier coefficients are exact moments of
the piecewise-polynomial trace, so no resampling onto a uniform grid is
involved.  Outside its circle a purely outgoing wave is the Hankel series

    w(r, theta) = sum_n a_n H_n(kappa r) / H_n(kappa R) e^{i n theta},

whose trace on the circle is ``sum_n a_n e^{i n theta}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sem import SubdomainOperator, build_dtn_block, dtn_symbol, lgl_rule
from .specfun import hankel_table


class InsideSourceDisk(ValueError):
    pass


@dataclass(frozen=True)
class CircleGrid:
    """Nodal grid on one artificial circle plus its Fourier moment matrix."""

    center: np.ndarray
    R: float
    kappa: float
    N: int
    theta: np.ndarray
    weights: np.ndarray  # arc-length LGL weights
    moments: np.ndarray  # (2N+1, n_theta)
    modes: np.ndarray
    symbol: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.center + self.R * np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)

    @property
    def normals(self) -> np.ndarray:
        return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)

    @property
    def size(self) -> int:
        return self.theta.size

    @classmethod
    def from_operator(cls, op: SubdomainOperator) -> "CircleGrid":
        d = op.dtn
        return cls(np.asarray(op.mesh.center, dtype=float), op.mesh.R, op.kappa, op.N,
                   op.theta_nodes, op.gamma_weights, d.moments, d.modes, d.symbol)

    @classmethod
    def from_mesh(cls, mesh, p: int, kappa: float, N: int) -> "CircleGrid":
        rule = lgl_rule(p)
        d = build_dtn_block(mesh, rule, kappa, N)
        th = np.concatenate([mesh.theta_hat[s] * rule.nodes[:-1] + mesh.beta[s]
                             for s in range(mesh.E_theta)])
        w = np.zeros(th.size)
        for s in range(mesh.E_theta):
            idx = (s * p + np.arange(p + 1)) % th.size
            np.add.at(w, idx, rule.weights * mesh.R * mesh.theta_hat[s])
        return cls(np.asarray(mesh.center, dtype=float), mesh.R, kappa, N, th, w,
                   d.moments, d.modes, d.symbol)


@dataclass
class BoundaryTrace:
    grid: CircleGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.theta.shape:
            raise ValueError("trace length does not match its circle grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trace contains non-finite values")


@dataclass
class FourierTrace:
    grid: CircleGrid
    modes: np.ndarray
    coeffs: np.ndarray

    def evaluate(self, theta) -> np.ndarray:
        """Inverse transform ``sum_n c_n e^{i n theta}``."""
        theta = np.asarray(theta, dtype=float)
        return np.exp(1j * theta[..., None] * self.modes) @ self.coeffs


def fourier_coeffs(trace: BoundaryTrace, N: int | None = None) -> FourierTrace:
    g = trace.grid
    N = g.N if N is None else N
    if N > g.N:
        raise ValueError(f"grid carries moments up to |n| = {g.N}, asked for {N}")
    sel = np.abs(g.modes) <= N
    c = g.moments[sel] @ trace.values / (2 * np.pi)
    return FourierTrace(g, g.modes[sel], c)


def inverse_transform(ft: FourierTrace) -> BoundaryTrace:
    return BoundaryTrace(ft.grid, ft.evaluate(ft.grid.theta))


def dtn_apply(ft: FourierTrace, kappa: float | None = None, R: float | None = None) -> FourierTrace:
    g = ft.grid
    kappa = g.kappa if kappa is None else kappa
    R = g.R if R is None else R
    if kappa == g.kappa and R == g.R:
        z = g.symbol[np.searchsorted(g.modes, ft.modes)]
    else:
        z = dtn_symbol(kappa, R, ft.modes)
    return FourierTrace(g, ft.modes, z * ft.coeffs)


def tprime_apply(values: BoundaryTrace, normal_derivs: BoundaryTrace, N: int | None = None) -> BoundaryTrace:
    """``dn f - T f`` on the grid; zero for outgoing waves of this circle."""
    tf = inverse_transform(dtn_apply(fourier_coeffs(values, N)))
    return BoundaryTrace(values.grid, np.asarray(normal_derivs.values) - tf.values)


@dataclass
class OutgoingExpansion:
    center: np.ndarray
    R: float
    kappa: float
    modes: np.ndarray
    coeffs: np.ndarray

    def __call__(self, pts, want_gradient=False):
        return eval_outgoing(self, pts, want_gradient)


def outgoing_from_trace(ft: FourierTrace) -> OutgoingExpansion:
    g = ft.grid
    return OutgoingExpansion(np.asarray(g.center, dtype=float), g.R, g.kappa,
                             ft.modes.copy(), ft.coeffs.copy())


def outgoing_basis(center, R, kappa, modes, pts, want_gradient=False, tol=1e-12):
    """Matrix ``B[q, n] = H_n(kappa r_q) / H_n(kappa R) e^{i n theta_q}``.

    With ``want_gradient`` also returns ``(Bx, By)``, the Cartesian
    derivatives of each column.  Points inside the source disk are rejected.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    modes = np.asarray(modes)
    d = pts - np.asarray(center, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    if np.any(r < R * (1 - tol)):
        raise InsideSourceDisk("outgoing expansion evaluated inside its source disk")
    th = np.arctan2(d[:, 1], d[:, 0])
    m = np.abs(modes)
    mmax = int(m.max())
    # H_{-n} = (-1)^n H_n, so ratios depend on |n| only
    HR = hankel_table(mmax, np.array([kappa * R]))[0]
    E = np.exp(1j * th[:, None] * modes)
    if not want_gradient:
        H = hankel_table(mmax, kappa * r)
        return (H / HR)[:, m] * E
    H, dH = hankel_table(mmax, kappa * r, derivative=True)
    B = (H / HR)[:, m] * E
    dr = kappa * (dH / HR)[:, m] * E
    dth = 1j * modes * B / r[:, None]
    c, s = np.cos(th)[:, None], np.sin(th)[:, None]
    return B, (c * dr - s * dth, s * dr + c * dth)


def eval_outgoing(exp: OutgoingExpansion, pts, want_gradient: bool = False, tol: float = 1e-12):
    """Value (and Cartesian gradient) of an outgoing Hankel series."""
    out = outgoing_basis(exp.center, exp.R, exp.kappa, exp.modes, pts, want_gradient, tol)
    if not want_gradient:
        return out @ exp.coeffs
    B, (Bx, By) = out
    return B @ exp.coeffs, np.stack([Bx @ exp.coeffs, By @ exp.coeffs], axis=-1)


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave ``amplitude * exp(i kappa y)``."""

    kappa: float
    amplitude: complex = 1.0

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.amplitude * np.exp(1j * self.kappa * pts[:, 1])

    def gradient(self, pts):
        u = self(pts)
        return np.stack([np.zeros_like(u), 1j * self.kappa * u], axis=-1)


def incident_data(wave: IncidentWave, pts, normals):
    """Values and normal derivatives of the incident wave at boundary samples."""
    u = wave(pts)
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    return u, 1j * wave.kappa * normals[:, 1] * u
