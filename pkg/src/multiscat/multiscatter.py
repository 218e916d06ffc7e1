"""Outer coupled system for several scatterers and its GMRES solution.

The scattered field is split into one purely outgoing wave ``w_i`` per
scatterer.  Two formulations are provided:

* homogeneous media: the unknowns are boundary data ``W_i = B_i[w_i]`` on
  each scatterer boundary; ``w_i`` is obtained by a subdomain solve on the
  annulus around scatterer ``i`` and continued outside the circle by its
  Hankel series;
* locally inhomogeneous media: the unknowns are traces of ``w_i`` on the
  artificial circles, and each annulus solve recovers the total field
  inside its disk from the incoming part ``dn f - T f`` of everything else.

Subdomain solves within one operator application are independent and are
mapped over a thread pool.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import build_annular_mesh, default_E_theta
from .harmonics import CircleGrid, IncidentWave, outgoing_basis
from .krylov import gmres
from .scenes import SceneConfig, refraction_eval
from .sem import SubdomainOperator, eval_solution


class NotConverged(RuntimeError):
    pass


@dataclass
class TraceVector:
    """Per-scatterer blocks stacked in scene order."""

    blocks: list
    weights: list

    @classmethod
    def zeros_like(cls, other: "TraceVector") -> "TraceVector":
        return cls([np.zeros_like(b) for b in other.blocks], other.weights)

    @property
    def sizes(self):
        return [len(b) for b in self.blocks]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def with_flat(self, x) -> "TraceVector":
        cuts = np.cumsum(self.sizes)[:-1]
        return TraceVector(list(np.split(np.asarray(x, dtype=complex), cuts)), self.weights)

    def norm(self) -> float:
        return float(np.sqrt(sum(np.dot(w, np.abs(b) ** 2) for w, b in zip(self.weights, self.blocks))))


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class _Transfer:
    """Linear map from one disk's Fourier coefficients to data at foreign points."""

    def __init__(self, grid: CircleGrid, pts, normals=None, h=None):
        d = pts - grid.center
        r = np.hypot(d[:, 0], d[:, 1])
        self.outside = r >= grid.R - 1e-12
        self.inside = ~self.outside
        q = pts[self.outside]
        if normals is None:
            self.B = outgoing_basis(grid.center, grid.R, grid.kappa, grid.modes, q)
            self.dB = None
        else:
            B, (Bx, By) = outgoing_basis(grid.center, grid.R, grid.kappa, grid.modes, q, True)
            nrm = normals[self.outside]
            self.B = B
            self.dB = nrm[:, :1] * Bx + nrm[:, 1:] * By
        self.pts = pts
        self.normals = normals


class MultipleScatteringSolver:
    """Meshes, factorized subdomain operators and transfer maps for a scene."""

    def __init__(self, scene: SceneConfig, threads: int = 1):
        self.scene = scene
        self.threads = max(1, int(threads))
        self.kappa = scene.kappa
        self.mode = scene.mode
        self.wave = IncidentWave(scene.kappa, scene.amplitude)
        self.timings = {}
        t0 = time.perf_counter()
        sp = scene.solver
        index = None if scene.index.is_constant else (lambda x: refraction_eval(scene.index, x))

        def build(i):
            s, d = scene.scatterers[i], scene.disks[i]
            Et = sp.E_theta if sp.E_theta is not None else default_E_theta(s)
            mesh = build_annular_mesh(s, d, sp.E_r, Et)
            return SubdomainOperator(mesh, sp.p, scene.kappa, index=index, N=sp.N, bc=s.bc)

        self.ops = self._map(build, range(scene.M))
        self.grids = [CircleGrid.from_operator(op) for op in self.ops]
        self.timings["assembly"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        if self.mode == "homogeneous":
            self._setup_hom()
        else:
            self._setup_inhom()
        self.timings["transfer_setup"] = time.perf_counter() - t0

    # -- helpers ----------------------------------------------------------

    def _map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    @property
    def M(self) -> int:
        return self.scene.M

    def weights(self):
        if self.mode == "homogeneous":
            return [op.scat_weights for op in self.ops]
        return [op.gamma_weights for op in self.ops]

    def coeffs(self, i, gamma_values):
        g = self.grids[i]
        return g.moments @ gamma_values / (2 * np.pi)

    # -- homogeneous formulation -------------------------------------------

    def _setup_hom(self):
        self.scat_normals = [_unit(op.scat_normals) for op in self.ops]
        self.transfer = {}
        for i, opi in enumerate(self.ops):
            bc = opi.bc
            need_grad = bc.kind != "dirichlet"
            for j in range(self.M):
                if j == i:
                    continue
                tr = _Transfer(self.grids[j], opi.scat_points,
                               self.scat_normals[i] if need_grad else None)
                if np.any(tr.inside):
                    # overlapping disks: check the points are in the annulus of j
                    self.ops[j].mesh.locate(opi.scat_points[tr.inside])
                self.transfer[i, j] = tr

    def _bc_apply(self, i, vals, dn):
        bc = self.ops[i].bc
        if bc.kind == "dirichlet":
            return vals
        if bc.kind == "neumann":
            return dn
        return dn + bc.h * vals

    def _cross_hom(self, i, sols, coeffs):
        out = np.zeros(self.ops[i].n_theta, dtype=complex)
        for j in range(self.M):
            if j == i:
                continue
            tr = self.transfer[i, j]
            vals = np.zeros(len(tr.pts), dtype=complex)
            dn = np.zeros(len(tr.pts), dtype=complex) if tr.dB is not None else None
            vals[tr.outside] = tr.B @ coeffs[j]
            if dn is not None:
                dn[tr.outside] = tr.dB @ coeffs[j]
            if np.any(tr.inside):
                if dn is None:
                    vals[tr.inside] = eval_solution(sols[j], tr.pts[tr.inside])
                else:
                    v, g = eval_solution(sols[j], tr.pts[tr.inside], gradient=True)
                    vals[tr.inside] = v
                    dn[tr.inside] = np.sum(g * tr.normals[tr.inside], axis=-1)
            out += self._bc_apply(i, vals, dn)
        return out

    def apply_hom(self, W: TraceVector) -> TraceVector:
        sols = self._map(lambda j: self.ops[j].solve(W.blocks[j]), range(self.M))
        coeffs = [self.coeffs(j, s.gamma_trace) for j, s in enumerate(sols)]
        cross = self._map(lambda i: self._cross_hom(i, sols, coeffs), range(self.M))
        return TraceVector([W.blocks[i] + cross[i] for i in range(self.M)], W.weights)

    def rhs_hom(self) -> TraceVector:
        blocks = []
        for i, op in enumerate(self.ops):
            u = self.wave(op.scat_points)
            dn = np.sum(self.wave.gradient(op.scat_points) * self.scat_normals[i], axis=-1)
            blocks.append(-self._bc_apply(i, u, dn))
        return TraceVector(blocks, self.weights())

    # -- inhomogeneous formulation -----------------------------------------

    def _setup_inhom(self):
        for i in range(self.M):
            for j in range(i + 1, self.M):
                if not self.scene.disks[i].gap(self.scene.disks[j]) > 0:
                    raise ValueError(f"disks {i} and {j} intersect; the inhomogeneous formulation "
                                     "needs disjoint disks")
        self.transfer = {}
        for i, g in enumerate(self.grids):
            for j in range(self.M):
                if j != i:
                    self.transfer[i, j] = _Transfer(self.grids[j], g.points, g.normals)
        self.incident_solutions = None

    def _tprime(self, i, vals, dn):
        g = self.grids[i]
        c = g.moments @ vals / (2 * np.pi)
        tf = np.exp(1j * g.theta[:, None] * g.modes) @ (g.symbol * c)
        return dn - tf

    def _foreign(self, i, coeffs):
        n = self.grids[i].size
        vals = np.zeros(n, dtype=complex)
        dn = np.zeros(n, dtype=complex)
        for j in range(self.M):
            if j != i:
                tr = self.transfer[i, j]
                vals += tr.B @ coeffs[j]
                dn += tr.dB @ coeffs[j]
        return vals, dn

    def _inhom_block(self, i, W, coeffs):
        f, dn = self._foreign(i, coeffs)
        if self.M == 1:
            return W.blocks[i]
        sol = self.ops[i].solve(None, self._tprime(i, f, dn))
        return W.blocks[i] + f - sol.gamma_trace

    def apply_inhom(self, W: TraceVector) -> TraceVector:
        coeffs = [self.coeffs(j, W.blocks[j]) for j in range(self.M)]
        return TraceVector(self._map(lambda i: self._inhom_block(i, W, coeffs), range(self.M)), W.weights)

    def _incident_solve(self, i):
        g = self.grids[i]
        u = self.wave(g.points)
        dn = np.sum(self.wave.gradient(g.points) * g.normals, axis=-1)
        return self.ops[i].solve(None, self._tprime(i, u, dn))

    def rhs_inhom(self) -> TraceVector:
        self.incident_solutions = self._map(self._incident_solve, range(self.M))
        blocks = [-self.wave(g.points) + s.gamma_trace for g, s in zip(self.grids, self.incident_solutions)]
        return TraceVector(blocks, self.weights())

    # -- driver -----------------------------------------------------------

    def apply(self, W: TraceVector) -> TraceVector:
        return self.apply_hom(W) if self.mode == "homogeneous" else self.apply_inhom(W)

    def rhs(self) -> TraceVector:
        return self.rhs_hom() if self.mode == "homogeneous" else self.rhs_inhom()

    def solve(self, tol=None, max_iter=None, callback=None):
        sp = self.scene.solver
        tol = sp.tol if tol is None else tol
        max_iter = sp.max_iter if max_iter is None else max_iter
        t0 = time.perf_counter()
        b = self.rhs()
        self.timings["rhs"] = time.perf_counter() - t0
        weights = np.concatenate(b.weights)
        x, report = gmres(lambda v: self.apply(b.with_flat(v)).flat(), b.flat(), tol=tol,
                          max_iter=max_iter, weights=weights, callback=callback)
        self.timings["gmres"] = report.wall_time
        W = b.with_flat(x)
        t0 = time.perf_counter()
        ev = FieldEvaluator(self, W)
        self.timings["finalize"] = time.perf_counter() - t0
        return W, report, ev


class FieldEvaluator:
    """Scattered and total fields of a solved scene at arbitrary points.

    ``evaluator(pts)`` returns ``(scattered, total, masked)``; points inside a
    scatterer are masked and carry NaN values.
    """

    def __init__(self, solver: MultipleScatteringSolver, W: TraceVector):
        self.solver = solver
        self.W = W
        M = solver.M
        if solver.mode == "homogeneous":
            self.solutions = solver._map(lambda j: solver.ops[j].solve(W.blocks[j]), range(M))
            self.coeffs = [solver.coeffs(j, s.gamma_trace) for j, s in enumerate(self.solutions)]
        else:
            self.coeffs = [solver.coeffs(j, W.blocks[j]) for j in range(M)]

            def total(i):
                f, dn = solver._foreign(i, self.coeffs)
                lin = solver.ops[i].solve(None, solver._tprime(i, f, dn))
                inc = solver.incident_solutions[i]
                return type(lin)(lin.op, lin.values + inc.values)

            self.solutions = solver._map(total, range(M))

    def masked(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mask = np.zeros(len(pts), dtype=bool)
        for s in self.solver.scene.scatterers:
            d = pts - np.asarray(s.center)
            r = np.hypot(d[:, 0], d[:, 1])
            mask |= r < s.radius(np.arctan2(d[:, 1], d[:, 0])) * (1 - 1e-12)
        return mask

    def _outgoing(self, j, pts):
        g = self.solver.grids[j]
        return outgoing_basis(g.center, g.R, g.kappa, g.modes, pts) @ self.coeffs[j]

    def scattered(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mask = self.masked(pts)
        out = np.full(len(pts), np.nan + 0j)
        live = ~mask
        q = pts[live]
        val = np.zeros(len(q), dtype=complex)
        inside_any = np.zeros(len(q), dtype=bool)
        wave = self.solver.wave
        for j, g in enumerate(self.solver.grids):
            r = np.hypot(q[:, 0] - g.center[0], q[:, 1] - g.center[1])
            inner = r < g.R - 1e-12
            if self.solver.mode == "homogeneous":
                if np.any(~inner):
                    val[~inner] += self._outgoing(j, q[~inner])
                if np.any(inner):
                    val[inner] += eval_solution(self.solutions[j], q[inner])
            else:
                if np.any(inner):
                    val[inner] = eval_solution(self.solutions[j], q[inner]) - wave(q[inner])
                inside_any |= inner
        if self.solver.mode != "homogeneous":
            far = ~inside_any
            for j in range(self.solver.M):
                if np.any(far):
                    val[far] += self._outgoing(j, q[far])
        out[live] = val
        return out

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        sc = self.scattered(pts)
        mask = np.isnan(sc.real)
        tot = sc + self.solver.wave(pts)
        return sc, tot, mask

    def total(self, pts) -> np.ndarray:
        return self(pts)[1]


def apply_operator_hom(solver: MultipleScatteringSolver, W: TraceVector) -> TraceVector:
    return solver.apply_hom(W)


def apply_operator_inhom(solver: MultipleScatteringSolver, W: TraceVector) -> TraceVector:
    return solver.apply_inhom(W)


def build_rhs(solver: MultipleScatteringSolver) -> TraceVector:
    return solver.rhs()


def solve_scene(scene: SceneConfig, threads: int = 1, tol=None, max_iter=None, callback=None):
    """Solve a validated scene; returns ``(W, report, evaluator)``."""
    solver = MultipleScatteringSolver(scene, threads=threads)
    return solver.solve(tol=tol, max_iter=max_iter, callback=callback)


def bc_residual(evaluator: FieldEvaluator) -> list[float]:
    """Per scatterer ``||B[u_total]|| / ||u_in||`` in the weighted boundary norm.

    In the homogeneous formulation the own-scatterer contribution is the
    imposed datum ``W_i``; in the inhomogeneous one the trace comes from the
    interior total-field solve (exact at Dirichlet nodes).
    """
    s = evaluator.solver
    out = []
    for i, op in enumerate(s.ops):
        w = op.scat_weights
        u_in = s.wave(op.scat_points)
        if s.mode == "homogeneous":
            r = evaluator.W.blocks[i] - s.rhs_hom().blocks[i] + s._cross_hom(i, evaluator.solutions,
                                                                               evaluator.coeffs)
        else:
            sol = evaluator.solutions[i]
            if op.bc.kind == "dirichlet":
                r = sol.scatterer_trace
            else:
                v, g = eval_solution(sol, op.scat_points, gradient=True)
                dn = np.sum(g * _unit(op.scat_normals), axis=-1)
                r = s._bc_apply(i, v, dn)
        out.append(float(np.sqrt(np.dot(w, np.abs(r) ** 2) / np.dot(w, np.abs(u_in) ** 2))))
    return out
