"""Spectral element discretization of the annular subdomain problems.

Weak form on ``B \\ Omega`` with test functions ``w``::

    -(grad v, grad w) + kappa^2 (n v, w) + <T_N v, w>_Gamma + h <v, w>_dOmega
        = <psi, w>_dOmega - <g, w>_Gamma

``psi`` is Neumann/Robin data on the scatterer (Dirichlet data is imposed by
lifting instead), ``g`` is the datum of ``dv/dn - T v = g`` on the artificial
circle.  ``h`` is zero except for Robin scatterers.

Volume terms use collocated tensor LGL quadrature.  The truncated DtN term
couples every pair of nodes on the circle; it is built from exact Fourier
moments of the nodal basis (Legendre expansion + closed-form arc integrals).
Element-interior unknowns are condensed out, so each subdomain reduces to a
dense skeleton system that is LU-factorized once and reused for every
right-hand side.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre as npleg

from .geometry import AnnularMesh, ArcEdge, shape_eval
from .specfun import CylKind, cyl_bessel, cyl_bessel_deriv, halfint_table


class SingularOperatorError(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# LGL machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LglRule:
    p: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.p + 1


def _legendre(p, x):
    return npleg.legval(x, np.eye(p + 1)[p])


def lgl_rule(p: int) -> LglRule:
    """Legendre-Gauss-Lobatto nodes and weights of degree ``p``."""
    if p < 1:
        raise ValueError("LGL rule needs p >= 1")
    if p == 1:
        x = np.array([-1.0, 1.0])
    else:
        inner = npleg.Legendre.basis(p).deriv().roots().real
        # polish the interior roots of P'_p by Newton
        dP = npleg.Legendre.basis(p).deriv()
        d2P = dP.deriv()
        for _ in range(3):
            inner = inner - dP(inner) / d2P(inner)
        inner = np.sort(inner)
        inner = 0.5 * (inner - inner[::-1])  # exact symmetry
        x = np.concatenate([[-1.0], inner, [1.0]])
    w = 2.0 / (p * (p + 1) * _legendre(p, x) ** 2)
    return LglRule(p, x, w)


def diff_matrix(rule: LglRule) -> np.ndarray:
    """``D[i, j] = l_j'(x_i)`` for the LGL Lagrange basis."""
    p, x = rule.p, rule.nodes
    L = _legendre(p, x)
    with np.errstate(divide="ignore"):
        D = (L[:, None] / L[None, :]) / (x[:, None] - x[None, :])
    np.fill_diagonal(D, 0.0)
    D[0, 0] = -p * (p + 1) / 4.0
    D[p, p] = p * (p + 1) / 4.0
    return D


def lagrange_to_legendre(rule: LglRule) -> np.ndarray:
    """Matrix ``A`` with ``l_k = sum_m A[m, k] P_m``."""
    V = npleg.legvander(rule.nodes, rule.p)
    return np.linalg.inv(V)


def _bary_weights(x):
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    return 1.0 / np.prod(d, axis=1)


def lagrange_eval(rule: LglRule, t, deriv=False):
    """Basis values ``l_k(t)`` (shape t.shape + (n,)) and optionally ``l_k'(t)``."""
    x = rule.nodes
    t = np.asarray(t, dtype=float)
    bw = _bary_weights(x)
    diff = t[..., None] - x
    hit = np.abs(diff) < 1e-15
    safe = np.where(hit, 1.0, diff)
    q = bw / safe
    L = q / np.sum(q, axis=-1, keepdims=True)
    onnode = np.any(hit, axis=-1)
    L = np.where(onnode[..., None], hit.astype(float), L)
    if not deriv:
        return L
    # l_k'(t) = l_k(t) * sum_{j != k} 1/(t - x_j) away from nodes; the nearest
    # node's term is kept out of the sum so t a few ulps off a node does not cancel
    inv = np.where(hit, 0.0, 1.0 / safe)
    near = np.argmin(np.abs(diff), axis=-1)[..., None]
    is_near = np.arange(x.size) == near
    rest = np.sum(np.where(is_near, 0.0, inv), axis=-1, keepdims=True)
    inv_near = np.take_along_axis(inv, near, axis=-1)
    dL = L * np.where(is_near, rest, rest + inv_near - inv)
    if np.any(onnode):
        D = diff_matrix(rule)
        idx = np.argmax(hit, axis=-1)
        dL = np.where(onnode[..., None], D[idx], dL)
    return L, dL


# ---------------------------------------------------------------------------
# DtN pieces
# ---------------------------------------------------------------------------


def legendre_moments(theta_hat: float, beta: float, n_modes, mmax: int) -> np.ndarray:
    """``I[n, m] = theta_hat e^{-i n beta} int P_m(xi) e^{-i n theta_hat xi} dxi``.

    Uses ``int_{-1}^{1} P_m(t) e^{-izt} dt = 2 (-i)^m sqrt(pi/(2z)) J_{m+1/2}(z)``
    for ``z > 0`` and conjugation for negative modes.
    """
    n_modes = np.asarray(n_modes, dtype=int)
    out = np.zeros((n_modes.size, mmax + 1), dtype=complex)
    an = np.abs(n_modes)
    pos = an > 0
    if np.any(pos):
        z = an[pos] * theta_hat
        tab = halfint_table(mmax, z)
        jm = np.sqrt(np.pi / (2 * z))[:, None] * tab
        phase = (-1j) ** np.arange(mmax + 1)
        base = 2.0 * theta_hat * phase[None, :] * jm * np.exp(-1j * an[pos] * beta)[:, None]
        base = np.where((n_modes[pos] < 0)[:, None], np.conj(base), base)
        out[pos] = base
    out[~pos, 0] = 2.0 * theta_hat
    return out


def dtn_integrals(edge: ArcEdge, n: int, m: int) -> complex:
    """Arc moment ``int_{-1}^{1} P_m(xi) e^{-i n theta(xi)} theta'(xi) dxi``."""
    return complex(legendre_moments(edge.theta_hat, edge.beta, [n], m)[0, m])


def dtn_symbol(kappa: float, R: float, modes) -> np.ndarray:
    """``z_n = kappa H_n'(kappa R) / H_n(kappa R)``."""
    modes = np.asarray(modes)
    cap = int(np.max(np.abs(modes))) + 2
    x = kappa * R
    return kappa * cyl_bessel_deriv(CylKind.H1, modes, x, cap) / cyl_bessel(CylKind.H1, modes, x, cap)


def default_cutoff(kappa: float, R: float) -> int:
    return int(math.ceil(kappa * R)) + 20


@dataclass
class DtnBlock:
    """Truncated DtN coupling on the circle's nodal grid.

    ``moments[n, j] = int_0^{2pi} phi_j(theta) e^{-i n theta} dtheta`` for the
    nodal basis functions ``phi_j`` restricted to the circle, so that the
    Fourier coefficients of a nodal trace are ``moments @ v / (2 pi)``.
    """

    N: int
    kappa: float
    R: float
    modes: np.ndarray
    symbol: np.ndarray
    moments: np.ndarray

    def matrix(self) -> np.ndarray:
        """Galerkin block ``<T_N phi_j, phi_i>`` (complex symmetric)."""
        C = self.moments
        return (self.R / (2 * np.pi)) * (np.conj(C).T * self.symbol) @ C


def build_dtn_block(mesh: AnnularMesh, rule: LglRule, kappa: float, N: int) -> DtnBlock:
    p = rule.p
    modes = np.arange(-N, N + 1)
    A = lagrange_to_legendre(rule)
    n_theta = mesh.E_theta * p
    C = np.zeros((modes.size, n_theta), dtype=complex)
    for sec, edge in enumerate(mesh.gamma_edges()):
        Inm = legendre_moments(edge.theta_hat, edge.beta, modes, p)
        local = Inm @ A  # column k: moment of l_k
        cols = (sec * p + np.arange(p + 1)) % n_theta
        np.add.at(C, (slice(None), cols), local)
    return DtnBlock(N, kappa, mesh.R, modes, dtn_symbol(kappa, mesh.R, modes), C)


# ---------------------------------------------------------------------------
# subdomain operator
# ---------------------------------------------------------------------------


def _element_matrix(D, w, jac, coef_mass):
    """Local ``-K + mass`` for one element, indices flattened as (xi, eta)."""
    n = len(w)
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)  # inv[..., s, r] = d ref_s / d x_r
    W = np.outer(w, w) * np.abs(det)
    G = np.einsum("ijsr,ijtr->ijst", inv, inv) * W[..., None, None]
    G11, G12, G21, G22 = G[..., 0, 0], G[..., 0, 1], G[..., 1, 0], G[..., 1, 1]
    I = np.eye(n)
    K = np.einsum("bd,ia,ib,ic->abcd", I, D, G11, D, optimize=True)
    K += np.einsum("ca,cb,bd->abcd", D, G12, D, optimize=True)
    K += np.einsum("db,ad,ac->abcd", D, G21, D, optimize=True)
    K += np.einsum("ac,jb,aj,jd->abcd", I, D, G22, D, optimize=True)
    A = -K.reshape(n * n, n * n).astype(complex)
    A[np.diag_indices(n * n)] += (coef_mass * W).ravel()
    return A


class SubdomainOperator:
    """Assembled, condensed and factorized annular subdomain problem.

    Global nodes are numbered ``ir * n_theta + it`` with ``ir`` the radial
    grid line (0 on the scatterer, ``E_r p`` on the circle) and ``it`` the
    angular index (0 at theta = 0, counterclockwise).
    """

    def __init__(self, mesh: AnnularMesh, p: int, kappa: float, index=None,
                 N: int | None = None, bc=None):
        self.mesh = mesh
        self.p = p
        self.kappa = float(kappa)
        self.bc = bc if bc is not None else mesh.spec.bc
        self.N = default_cutoff(kappa, mesh.R) if N is None else int(N)
        if self.N < math.ceil(kappa * mesh.R):
            warnings.warn(f"DtN cutoff N={self.N} below kappa*R={kappa * mesh.R:.2f}")
        self.rule = lgl_rule(p)
        self.D = diff_matrix(self.rule)
        n = p + 1
        self.n_theta = mesh.E_theta * p
        self.n_rad = mesh.E_r * p + 1
        self.n_nodes = self.n_rad * self.n_theta
        self.scat_idx = np.arange(self.n_theta)
        self.gamma_idx = (self.n_rad - 1) * self.n_theta + np.arange(self.n_theta)

        # local -> global numbering, local index = k * n + l (k along xi, l along eta)
        k, l = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        self.l2g = np.empty((mesh.n_elements, n * n), dtype=int)
        for e, el in enumerate(mesh.elements):
            ir = el.ring * p + l
            it = (el.sector * p + k) % self.n_theta
            self.l2g[e] = (ir * self.n_theta + it).ravel()
        on_edge = ((k == 0) | (k == p) | (l == 0) | (l == p)).ravel()
        self.loc_b = np.flatnonzero(on_edge)
        self.loc_i = np.flatnonzero(~on_edge)

        # node geometry
        X = mesh.node_points(self.rule.nodes)  # (E, n, n, 2)
        self.node_xy = np.empty((self.n_nodes, 2))
        self.node_xy[self.l2g.ravel()] = X.reshape(-1, 2)
        th = np.concatenate([mesh.theta_hat[s] * self.rule.nodes[:-1] + mesh.beta[s]
                             for s in range(mesh.E_theta)])
        self.theta_nodes = th
        self.gamma_points = self.node_xy[self.gamma_idx]
        self.gamma_normals = np.stack([np.cos(th), np.sin(th)], axis=-1)
        self.scat_points, self.scat_normals = shape_eval(mesh.spec, th)
        self.gamma_weights = self._edge_weights(lambda s, t: np.full_like(t, mesh.R * mesh.theta_hat[s]))
        sp = mesh.spec

        def scat_speed(s, t):
            tt = mesh.theta_hat[s] * t + mesh.beta[s]
            return mesh.theta_hat[s] * np.hypot(sp.radius(tt), sp.dradius(tt))

        self.scat_weights = self._edge_weights(scat_speed)

        if index is None:
            self.index_values = np.ones((mesh.n_elements, n, n))
        else:
            self.index_values = np.asarray(index(X.reshape(-1, 2)), dtype=float).reshape(X.shape[:-1])
        if not np.all(np.isfinite(self.index_values)):
            raise ValueError("refraction index is not finite at all quadrature points")

        self.dtn = build_dtn_block(mesh, self.rule, self.kappa, self.N)
        self._assemble()

    def _edge_weights(self, speed):
        w = np.zeros(self.n_theta)
        t = self.rule.nodes
        for s in range(self.mesh.E_theta):
            idx = (s * self.p + np.arange(self.p + 1)) % self.n_theta
            np.add.at(w, idx, self.rule.weights * speed(s, t))
        return w

    # -- assembly ---------------------------------------------------------

    def _assemble(self):
        mesh, rule = self.mesh, self.rule
        XI, ETA = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
        skel = np.unique(self.l2g[:, self.loc_b])
        self.skel = skel
        g2s = -np.ones(self.n_nodes, dtype=int)
        g2s[skel] = np.arange(skel.size)
        self.g2s = g2s
        S = np.zeros((skel.size, skel.size), dtype=complex)
        self.recover = []
        self.local_mats = []
        for e, el in enumerate(mesh.elements):
            _, jac = el.map_eval(XI, ETA)
            A = _element_matrix(self.D, rule.weights, jac, self.kappa ** 2 * self.index_values[e])
            self.local_mats.append(A)
            bi, ii = self.loc_b, self.loc_i
            Aii = A[np.ix_(ii, ii)]
            Aib = A[np.ix_(ii, bi)]
            X = -np.linalg.solve(Aii, Aib) if ii.size else np.zeros((0, bi.size))
            Sb = A[np.ix_(bi, bi)] + A[np.ix_(bi, ii)] @ X
            rows = g2s[self.l2g[e, bi]]
            S[np.ix_(rows, rows)] += Sb
            self.recover.append(X)
        gs = g2s[self.gamma_idx]
        S[np.ix_(gs, gs)] += self.dtn.matrix()
        if self.bc.kind == "robin":
            ss = g2s[self.scat_idx]
            S[ss, ss] += self.bc.h * self.scat_weights
        self.S = S
        if self.bc.kind == "dirichlet":
            self.free = np.flatnonzero(np.isin(skel, self.scat_idx, invert=True))
            self.fixed = g2s[self.scat_idx]
        else:
            self.free = np.arange(skel.size)
            self.fixed = np.zeros(0, dtype=int)
        Sff = S[np.ix_(self.free, self.free)]
        self.S_fd = S[np.ix_(self.free, self.fixed)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self.lu = sla.lu_factor(Sff, check_finite=False)
        d = np.abs(np.diag(self.lu[0]))
        if d.min() <= 1e-13 * d.max():
            raise SingularOperatorError(
                f"subdomain system is singular (kappa={self.kappa}, p={self.p}, N={self.N}):"
                " interior resonance or under-resolution")

    def full_matrix(self):
        """Uncondensed global matrix (dense); meant for checks on small meshes."""
        Afull = np.zeros((self.n_nodes, self.n_nodes), dtype=complex)
        for e, A in enumerate(self.local_mats):
            g = self.l2g[e]
            Afull[np.ix_(g, g)] += A
        Afull[np.ix_(self.gamma_idx, self.gamma_idx)] += self.dtn.matrix()
        if self.bc.kind == "robin":
            Afull[self.scat_idx, self.scat_idx] += self.bc.h * self.scat_weights
        return Afull

    # -- solves -----------------------------------------------------------

    def load_vector(self, scatterer_data=None, gamma_data=None):
        """Global right-hand side and Dirichlet values for the given data."""
        b = np.zeros(self.n_nodes, dtype=complex)
        dvals = None
        if scatterer_data is not None:
            psi = np.asarray(scatterer_data, dtype=complex)
            if psi.shape != (self.n_theta,):
                raise ValueError(f"scatterer data has shape {psi.shape}, expected ({self.n_theta},)")
            if self.bc.kind == "dirichlet":
                dvals = psi
            else:
                b[self.scat_idx] += psi * self.scat_weights
        if gamma_data is not None:
            g = np.asarray(gamma_data, dtype=complex)
            if g.shape != (self.n_theta,):
                raise ValueError(f"circle data has shape {g.shape}, expected ({self.n_theta},)")
            b[self.gamma_idx] -= g * self.gamma_weights
        return b, dvals

    def solve(self, scatterer_data=None, gamma_data=None) -> "InteriorSolution":
        b, dvals = self.load_vector(scatterer_data, gamma_data)
        rhs = b[self.skel]  # interior nodes carry no load
        vs = np.zeros(self.skel.size, dtype=complex)
        if self.fixed.size:
            if dvals is None:
                dvals = np.zeros(self.n_theta, dtype=complex)
            vs[self.fixed] = dvals
        rhs_f = rhs[self.free] - (self.S_fd @ vs[self.fixed] if self.fixed.size else 0.0)
        vs[self.free] = sla.lu_solve(self.lu, rhs_f, check_finite=False)
        v = np.zeros(self.n_nodes, dtype=complex)
        v[self.skel] = vs
        for e, X in enumerate(self.recover):
            g = self.l2g[e]
            v[g[self.loc_i]] = X @ v[g[self.loc_b]]
        return InteriorSolution(self, v)


def assemble_subdomain(mesh: AnnularMesh, p: int, kappa: float, index=None,
                       bc=None, N: int | None = None) -> SubdomainOperator:
    return SubdomainOperator(mesh, p, kappa, index=index, N=N, bc=bc)


def solve_subdomain(op: SubdomainOperator, scatterer_data=None, gamma_data=None):
    return op.solve(scatterer_data, gamma_data)


@dataclass
class InteriorSolution:
    op: SubdomainOperator
    values: np.ndarray  # global nodal values

    def coefficients(self) -> np.ndarray:
        """Per-element nodal grids, shape (E, p+1, p+1) indexed [xi, eta]."""
        n = self.op.p + 1
        return self.values[self.op.l2g].reshape(-1, n, n)

    @property
    def gamma_trace(self) -> np.ndarray:
        return self.values[self.op.gamma_idx]

    @property
    def scatterer_trace(self) -> np.ndarray:
        return self.values[self.op.scat_idx]

    def residual(self, scatterer_data=None, gamma_data=None) -> float:
        """Relative residual of the uncondensed system (free rows only)."""
        op = self.op
        A = op.full_matrix()
        b, _ = op.load_vector(scatterer_data, gamma_data)
        r = A @ self.values - b
        if op.bc.kind == "dirichlet":
            r[op.scat_idx] = 0.0
        return float(np.linalg.norm(r) / max(np.linalg.norm(b), np.linalg.norm(A @ self.values), 1e-300))

    def eval(self, pts, gradient=False):
        return eval_solution(self, pts, gradient)


def eval_solution(sol: InteriorSolution, pts, gradient: bool = False):
    """Evaluate the SEM field (and optionally its gradient) at physical points."""
    op = sol.op
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    ids, ref = op.mesh.locate(pts)
    coef = sol.coefficients()
    val = np.empty(len(pts), dtype=complex)
    grad = np.empty((len(pts), 2), dtype=complex) if gradient else None
    for e in np.unique(ids):
        sel = ids == e
        xi, eta = ref[sel, 0], ref[sel, 1]
        C = coef[e]
        if gradient:
            Lx, dLx = lagrange_eval(op.rule, xi, deriv=True)
            Ly, dLy = lagrange_eval(op.rule, eta, deriv=True)
        else:
            Lx = lagrange_eval(op.rule, xi)
            Ly = lagrange_eval(op.rule, eta)
        val[sel] = np.einsum("qk,kl,ql->q", Lx, C, Ly)
        if gradient:
            g_xi = np.einsum("qk,kl,ql->q", dLx, C, Ly)
            g_eta = np.einsum("qk,kl,ql->q", Lx, C, dLy)
            _, J = op.mesh.elements[e].map_eval(xi, eta)
            Jinv = np.linalg.inv(J)
            # grad_x = J^{-T} grad_ref
            grad[sel, 0] = Jinv[:, 0, 0] * g_xi + Jinv[:, 1, 0] * g_eta
            grad[sel, 1] = Jinv[:, 0, 1] * g_xi + Jinv[:, 1, 1] * g_eta
    return (val, grad) if gradient else val
