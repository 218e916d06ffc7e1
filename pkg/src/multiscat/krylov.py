"""Matrix-free GMRES (Arnoldi with modified Gram-Schmidt, Givens rotations)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np


@dataclass
class IterationReport:
    residuals: list[float] = field(default_factory=list)  # relative, index 0 = initial
    iterations: int = 0
    wall_time: float = 0.0
    converged: bool = False

    def is_monotone(self) -> bool:
        r = np.asarray(self.residuals)
        return bool(np.all(np.diff(r) <= 1e-12 * r[:-1] + 1e-300))


def weighted_inner(weights):
    """Inner product ``(u, v) = sum_k w_k conj(u_k) v_k`` with fixed reduction order."""
    w = np.asarray(weights, dtype=float)

    def inner(u, v):
        return complex(np.dot(w * np.conj(u), v))

    return inner


def gmres(apply, b, tol=1e-10, max_iter=200, x0=None, weights=None, callback=None):
    """Solve ``apply(x) = b`` without restarts.

    Stops at the first iterate whose relative residual (in the weighted
    norm) is at most ``tol``.  Returns ``(x, report)``; when ``max_iter``
    is exhausted the best iterate is returned with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    inner = weighted_inner(np.ones(b.size) if weights is None else weights)

    def norm(v):
        return np.sqrt(max(inner(v, v).real, 0.0))

    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=complex).copy()
    report = IterationReport()
    bnorm = norm(b)
    if bnorm == 0.0:
        report.residuals = [0.0]
        report.converged = True
        return np.zeros_like(b), report
    r = b - apply(x) if np.any(x) else b.copy()
    beta = norm(r)
    report.residuals.append(beta / bnorm)
    if beta / bnorm <= tol:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    V = [r / beta]
    H = np.zeros((max_iter + 1, max_iter), dtype=complex)
    cs = np.zeros(max_iter, dtype=complex)
    sn = np.zeros(max_iter, dtype=complex)
    g = np.zeros(max_iter + 1, dtype=complex)
    g[0] = beta
    k = 0
    for k in range(max_iter):
        w = apply(V[k])
        for j in range(k + 1):
            H[j, k] = inner(V[j], w)
            w = w - H[j, k] * V[j]
        H[k + 1, k] = norm(w)
        breakdown = H[k + 1, k].real <= 1e-14 * abs(H[k, k])
        if not breakdown:
            V.append(w / H[k + 1, k])
        for j in range(k):
            t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
            H[j + 1, k] = -np.conj(sn[j]) * H[j, k] + cs[j] * H[j + 1, k]
            H[j, k] = t
        a, c = H[k, k], H[k + 1, k]
        den = np.hypot(abs(a), abs(c))
        cs[k] = abs(a) / den
        sn[k] = (a / abs(a)) * np.conj(c) / den if abs(a) > 0 else 1.0
        H[k, k] = cs[k] * a + sn[k] * c
        H[k + 1, k] = 0.0
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]
        rel = abs(g[k + 1]) / bnorm
        report.residuals.append(float(rel))
        if callback is not None:
            callback(k + 1, rel)
        if rel <= tol or breakdown:
            report.converged = bool(rel <= tol or breakdown)
            break
    m = k + 1
    y = np.linalg.solve(np.triu(H[:m, :m]), g[:m])
    for j in range(m):
        x = x + y[j] * V[j]
    report.iterations = m
    report.wall_time = time.perf_counter() - t0
    return x, report
