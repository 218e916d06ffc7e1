"""Scatterer curves, artificial disks and structured annular meshes.

Each scatterer is a star-shaped curve ``r(theta) = a sin k(theta - theta0) + b``
around its center.  The annulus between that curve and the enclosing
artificial circle is split into ``E_r x E_theta`` curvilinear quadrilaterals.
Every element is a Gordon-Hall blend of four parametric edges, ordered so
that

    pi1(-1) = pi4(1),  pi1(1) = pi2(1),  pi2(-1) = pi3(1),  pi3(-1) = pi4(-1),

with ``pi1`` the outer edge (eta = 1), ``pi3`` the inner edge (eta = -1),
``pi2``/``pi4`` the radial sides at xi = +1/-1.  Along every curved edge the
polar angle is linear in the edge parameter, ``theta(xi) = theta_hat*xi + beta``,
which is what makes the arc integrals of the DtN map analytic.

With ``xi`` running counterclockwise and ``eta`` outward the maps reverse
orientation: ``det J < 0`` everywhere.  Quadrature uses ``|det J|``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    pass


class PointNotInDomain(GeometryError):
    pass


@dataclass(frozen=True)
class BoundaryCondition:
    """Scatterer boundary operator: u, du/dn, or du/dn + h u."""

    kind: str = "dirichlet"
    h: complex = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "robin"):
            raise GeometryError(f"unknown boundary condition {self.kind!r}")

    def check_impedance(self, kappa: float) -> bool:
        """Sign condition ``Im(conj(kappa) h) >= 0`` for Robin data."""
        if self.kind != "robin":
            return True
        ok = (np.conj(kappa) * self.h).imag >= 0
        if not ok:
            warnings.warn(f"Robin coefficient h={self.h} violates Im(conj(kappa) h) >= 0")
        return bool(ok)


@dataclass(frozen=True)
class ScattererSpec:
    center: tuple[float, float]
    a: float
    b: float
    k: int = 0
    theta0: float = 0.0
    bc: BoundaryCondition = field(default_factory=BoundaryCondition)

    def __post_init__(self):
        if not self.b > self.a >= 0:
            raise GeometryError(f"scatterer needs b > a >= 0, got a={self.a}, b={self.b}")

    def radius(self, theta):
        return self.a * np.sin(self.k * (np.asarray(theta) - self.theta0)) + self.b

    def dradius(self, theta):
        return self.a * self.k * np.cos(self.k * (np.asarray(theta) - self.theta0))

    @property
    def max_radius(self) -> float:
        return self.b + self.a if self.k != 0 else float(self.radius(0.0))


@dataclass(frozen=True)
class ArtificialDisk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("disk radius must be positive")

    def gap(self, other: "ArtificialDisk") -> float:
        d = np.hypot(self.center[0] - other.center[0], self.center[1] - other.center[1])
        return float(d - self.radius - other.radius)


def shape_eval(spec: ScattererSpec, theta):
    """Boundary point and unit outward normal at polar angle ``theta``."""
    theta = np.asarray(theta, dtype=float)
    r = spec.radius(theta)
    dr = spec.dradius(theta)
    c, s = np.cos(theta), np.sin(theta)
    pt = np.stack([spec.center[0] + r * c, spec.center[1] + r * s], axis=-1)
    nrm = np.stack([r * c + dr * s, r * s - dr * c], axis=-1)
    nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
    return pt, nrm


# ---------------------------------------------------------------------------
# parametric edges on [-1, 1]
# ---------------------------------------------------------------------------


class PolarEdge:
    """Curve ``c + rho(theta) e_r(theta)`` with ``theta = theta_hat*t + beta``.

    ``rho`` blends the scatterer radius and the disk radius:
    ``rho = (1 - s) r(theta) + s R``; ``s = 0`` is the scatterer, ``s = 1`` the arc.
    """

    def __init__(self, spec: ScattererSpec, disk: ArtificialDisk, s: float,
                 theta_hat: float, beta: float):
        self.spec = spec
        self.center = np.asarray(disk.center, dtype=float)
        self.R = disk.radius
        self.s = s
        self.theta_hat = theta_hat
        self.beta = beta

    def theta(self, t):
        return self.theta_hat * np.asarray(t) + self.beta

    def _rho(self, th):
        s = self.s
        if s == 1.0:
            return np.full_like(th, self.R), np.zeros_like(th)
        return (1 - s) * self.spec.radius(th) + s * self.R, (1 - s) * self.spec.dradius(th)

    def __call__(self, t):
        th = self.theta(np.asarray(t, dtype=float))
        rho, _ = self._rho(th)
        return self.center + np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1)

    def deriv(self, t):
        th = self.theta(np.asarray(t, dtype=float))
        rho, drho = self._rho(th)
        c, s = np.cos(th), np.sin(th)
        return self.theta_hat * np.stack([drho * c - rho * s, drho * s + rho * c], axis=-1)


class ArcEdge(PolarEdge):
    """Exact arc of the artificial circle, ``theta(xi) = theta_hat*xi + beta``."""

    def __init__(self, spec, disk, theta_hat, beta):
        super().__init__(spec, disk, 1.0, theta_hat, beta)


class SegmentEdge:
    def __init__(self, p0, p1):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return 0.5 * (1 - t) * self.p0 + 0.5 * (1 + t) * self.p1

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(0.5 * (self.p1 - self.p0), t.shape + (2,)).copy()


@dataclass
class Element:
    """Curvilinear quad given by edges (pi1, pi2, pi3, pi4)."""

    edges: tuple
    ring: int
    sector: int
    tags: tuple = ("interior", "interior", "interior", "interior")

    def corners(self):
        p1, p2, p3, p4 = self.edges
        return p1(-1.0), p1(1.0), p3(-1.0), p3(1.0)

    def check_corners(self, tol=1e-12):
        p1, p2, p3, p4 = self.edges
        pairs = [(p1(-1.0), p4(1.0)), (p1(1.0), p2(1.0)),
                 (p2(-1.0), p3(1.0)), (p3(-1.0), p4(-1.0))]
        return all(np.linalg.norm(a - b) <= tol for a, b in pairs)

    def map_eval(self, xi, eta):
        """Gordon-Hall map and Jacobian ``J[..., i, j] = d x_i / d (xi, eta)_j``."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        xi, eta = np.broadcast_arrays(xi, eta)
        p1, p2, p3, p4 = self.edges
        a1, b1 = p1(-1.0), p1(1.0)
        a3, b3 = p3(-1.0), p3(1.0)
        X, E = xi[..., None], eta[..., None]
        up, lo = 0.5 * (1 + E), 0.5 * (1 - E)
        rt, lt = 0.5 * (1 + X), 0.5 * (1 - X)
        P1, P3 = p1(xi), p3(xi)
        P2, P4 = p2(eta), p4(eta)
        top_lin = a1 * lt + b1 * rt
        bot_lin = a3 * lt + b3 * rt
        x = P1 * up + P3 * lo + rt * P2 + lt * P4 - top_lin * up - bot_lin * lo
        dxi = (p1.deriv(xi) * up + p3.deriv(xi) * lo + 0.5 * (P2 - P4)
               - 0.5 * (b1 - a1) * up - 0.5 * (b3 - a3) * lo)
        deta = (0.5 * (P1 - P3) + rt * p2.deriv(eta) + lt * p4.deriv(eta)
                - 0.5 * top_lin + 0.5 * bot_lin)
        jac = np.stack([dxi, deta], axis=-1)
        return x, jac


class AnnularMesh:
    """Structured ``E_r x E_theta`` mesh of the annulus between scatterer and disk.

    Elements are stored ring-major: ``elements[ring * E_theta + sector]``.
    Ring 0 touches the scatterer, ring ``E_r - 1`` the artificial circle.
    """

    def __init__(self, spec: ScattererSpec, disk: ArtificialDisk, E_r: int, E_theta: int):
        self.spec = spec
        self.disk = disk
        self.E_r = E_r
        self.E_theta = E_theta
        self.center = np.asarray(disk.center, dtype=float)
        self.R = disk.radius
        self.breaks = np.linspace(0.0, TWO_PI, E_theta + 1)
        self.levels = np.linspace(0.0, 1.0, E_r + 1)
        self.theta_hat = 0.5 * np.diff(self.breaks)
        self.beta = 0.5 * (self.breaks[:-1] + self.breaks[1:])
        self.elements: list[Element] = []
        for ring in range(E_r):
            s_lo, s_hi = self.levels[ring], self.levels[ring + 1]
            for sec in range(E_theta):
                th, be = self.theta_hat[sec], self.beta[sec]
                top = (ArcEdge(spec, disk, th, be) if ring == E_r - 1
                       else PolarEdge(spec, disk, s_hi, th, be))
                bot = PolarEdge(spec, disk, s_lo, th, be)
                right = SegmentEdge(bot(1.0), top(1.0))
                left = SegmentEdge(bot(-1.0), top(-1.0))
                tags = ("gamma" if ring == E_r - 1 else "interior", "interior",
                        "scatterer" if ring == 0 else "interior", "interior")
                el = Element((top, right, bot, left), ring, sec, tags)
                if not el.check_corners():
                    raise GeometryError(f"corner mismatch in element ({ring}, {sec})")
                self.elements.append(el)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element(self, ring: int, sector: int) -> Element:
        return self.elements[ring * self.E_theta + sector]

    def gamma_edges(self) -> list[ArcEdge]:
        return [self.element(self.E_r - 1, s).edges[0] for s in range(self.E_theta)]

    def scatterer_edges(self) -> list[PolarEdge]:
        return [self.element(0, s).edges[2] for s in range(self.E_theta)]

    def polar(self, pts):
        d = np.asarray(pts, dtype=float) - self.center
        rho = np.hypot(d[..., 0], d[..., 1])
        th = np.mod(np.arctan2(d[..., 1], d[..., 0]), TWO_PI)
        return rho, th

    def contains(self, pts, tol=1e-10):
        rho, th = self.polar(pts)
        r_in = self.spec.radius(th)
        return (rho >= r_in - tol) & (rho <= self.R + tol)

    def locate(self, pts, tol=1e-10, max_iter=30):
        """Vectorized inverse map: element ids and reference coordinates.

        Raises :class:`PointNotInDomain` if any point lies outside the annulus.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rho, th = self.polar(pts)
        r_in = self.spec.radius(th)
        s = (rho - r_in) / (self.R - r_in)
        bad = (s < -tol) | (s > 1 + tol)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise PointNotInDomain(f"point {pts[i]} is outside the meshed annulus")
        s = np.clip(s, 0.0, 1.0)
        dth = TWO_PI / self.E_theta
        sec = np.clip((th // dth).astype(int), 0, self.E_theta - 1)
        ring = np.clip((s * self.E_r).astype(int), 0, self.E_r - 1)
        xi0 = np.clip((th - self.beta[sec]) / self.theta_hat[sec], -1, 1)
        eta0 = np.clip(2 * (s * self.E_r - ring) - 1, -1, 1)
        ids = ring * self.E_theta + sec
        ref = np.stack([xi0, eta0], axis=-1)
        for e in np.unique(ids):
            sel = ids == e
            ref[sel] = _newton_invert(self.elements[e], pts[sel], ref[sel], max_iter)
        # points that landed on a neighbour's side of a shared edge
        out = np.any(np.abs(ref) > 1 + 1e-8, axis=-1)
        for i in np.flatnonzero(out):
            ids[i], ref[i] = self._search(pts[i], max_iter)
        return ids, ref

    def _search(self, x, max_iter):
        best = (None, None, np.inf)
        for e, el in enumerate(self.elements):
            r = _newton_invert(el, x[None], np.zeros((1, 2)), max_iter)[0]
            excess = np.max(np.abs(r)) - 1
            if excess < best[2]:
                best = (e, r, excess)
        if best[2] > 1e-8:
            raise PointNotInDomain(f"point {x} is not inside any element")
        return best[0], np.clip(best[1], -1, 1)

    def node_points(self, nodes):
        """Physical coordinates of tensor nodes, shape (E, n, n, 2) ordered [xi, eta]."""
        XI, ETA = np.meshgrid(nodes, nodes, indexing="ij")
        return np.stack([el.map_eval(XI, ETA)[0] for el in self.elements])


def _newton_invert(el: Element, x, ref0, max_iter):
    ref = ref0.copy()
    for _ in range(max_iter):
        f, J = el.map_eval(ref[:, 0], ref[:, 1])
        res = f - x
        nr = np.linalg.norm(res, axis=-1)
        if np.all(nr < 1e-14 * (1 + np.linalg.norm(x, axis=-1))):
            break
        step = np.linalg.solve(J, res[..., None])[..., 0]
        # damp steps that do not reduce the residual (guards concave petals)
        lam = np.ones(len(ref))
        for _ in range(8):
            trial = ref - lam[:, None] * step
            ft, _ = el.map_eval(trial[:, 0], trial[:, 1])
            worse = np.linalg.norm(ft - x, axis=-1) > nr
            if not np.any(worse):
                break
            lam = np.where(worse, 0.5 * lam, lam)
        ref = ref - lam[:, None] * step
    return ref


def default_E_theta(spec: ScattererSpec) -> int:
    return max(8, 4 * int(spec.k))


def build_annular_mesh(spec: ScattererSpec, disk: ArtificialDisk,
                       E_r: int = 2, E_theta: int | None = None) -> AnnularMesh:
    if E_theta is None:
        E_theta = default_E_theta(spec)
    if E_r < 1 or E_theta < 4:
        raise GeometryError("need E_r >= 1 and E_theta >= 4")
    if np.hypot(spec.center[0] - disk.center[0], spec.center[1] - disk.center[1]) > 1e-14:
        raise GeometryError("artificial disk must share the scatterer center")
    th = np.linspace(0, TWO_PI, 4096, endpoint=False)
    if not disk.radius > max(spec.max_radius, float(np.max(spec.radius(th)))):
        raise GeometryError(
            f"disk radius {disk.radius} does not strictly contain the scatterer "
            f"(max radius {spec.max_radius})")
    return AnnularMesh(spec, disk, E_r, E_theta)


def map_eval(element: Element, xi, eta):
    return element.map_eval(xi, eta)


def locate_point(mesh: AnnularMesh, x):
    ids, ref = mesh.locate(np.asarray(x, dtype=float)[None])
    return int(ids[0]), (float(ref[0, 0]), float(ref[0, 1]))
