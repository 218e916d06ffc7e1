"""Scene documents, refraction-index profiles and result files.

A scene is a JSON document with top-level keys ``scene``, ``scatterers``,
``disks``, ``index``, ``solver`` and ``outputs``; see ``README.md`` for the
schema.  Parsing validates the whole document and reports every problem at
once.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import ArtificialDisk, BoundaryCondition, GeometryError, ScattererSpec

PROFILES = ("constant-one", "bump-annulus", "x-weighted-bump", "custom-table")


class SceneParseError(ValueError):
    pass


class SceneValidationError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scene:\n  " + "\n  ".join(self.errors))


# ---------------------------------------------------------------------------
# refraction index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RefractionIndexSpec:
    """Index ``n(x)``, equal to 1 away from the annuli around ``centers``.

    ``bump-annulus`` is ``amplitude * exp(-1 / (1 - sharpness (rho - rho0)^2)) + 1``
    on ``r_in < rho < r_out`` (``rho = |x - c|``); ``x-weighted-bump`` multiplies
    the bump by the Cartesian ``x`` coordinate; ``custom-table`` interpolates
    tabulated ``(r, n)`` samples with a cubic spline.
    """

    profile: str = "constant-one"
    r_in: float = 0.0
    r_out: float = 0.0
    rho0: float | None = None
    sharpness: float = 16.0
    amplitude: float = 1.0
    table_r: tuple = ()
    table_n: tuple = ()
    centers: tuple = ()

    @property
    def is_constant(self) -> bool:
        return self.profile == "constant-one"

    def with_centers(self, centers) -> "RefractionIndexSpec":
        d = asdict(self)
        d["centers"] = tuple(tuple(map(float, c)) for c in centers)
        return RefractionIndexSpec(**d)

    def __call__(self, pts):
        return refraction_eval(self, pts)


def refraction_eval(spec: RefractionIndexSpec, x) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.ones(len(pts))
    if spec.is_constant:
        return out if np.ndim(x) > 1 else out[0]
    rho0 = 0.5 * (spec.r_in + spec.r_out) if spec.rho0 is None else spec.rho0
    spline = None
    if spec.profile == "custom-table":
        spline = CubicSpline(np.asarray(spec.table_r), np.asarray(spec.table_n))
    for c in spec.centers:
        rho = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
        inside = (rho > spec.r_in) & (rho < spec.r_out)
        if not np.any(inside):
            continue
        ri = rho[inside]
        if spline is not None:
            out[inside] = spline(ri)
            continue
        q = 1.0 - spec.sharpness * (ri - rho0) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            bump = np.where(q > 0, np.exp(-1.0 / np.where(q > 0, q, 1.0)), 0.0)
        if spec.profile == "x-weighted-bump":
            bump = pts[inside, 0] * bump
        out[inside] = spec.amplitude * bump + 1.0
    return out if np.ndim(x) > 1 else out[0]


# ---------------------------------------------------------------------------
# scene config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverParams:
    p: int = 20
    E_r: int = 2
    E_theta: int | None = None
    N: int | None = None
    tol: float = 1e-11
    max_iter: int = 200


@dataclass(frozen=True)
class OutputSpec:
    window: tuple | None = None  # (x0, x1, y0, y1)
    resolution: tuple | None = None  # (W, H)
    field: str = "scattered"
    probes: tuple = ()


@dataclass(frozen=True)
class SceneConfig:
    kappa: float
    mode: str
    scatterers: tuple
    disks: tuple
    index: RefractionIndexSpec = field(default_factory=RefractionIndexSpec)
    solver: SolverParams = field(default_factory=SolverParams)
    outputs: OutputSpec = field(default_factory=OutputSpec)
    scatterer_ids: tuple = ()
    disk_ids: tuple = ()
    amplitude: complex = 1.0

    @property
    def M(self) -> int:
        return len(self.scatterers)

    def replace(self, **kw) -> "SceneConfig":
        from dataclasses import replace
        return replace(self, **kw)

    def with_solver(self, **kw) -> "SceneConfig":
        from dataclasses import replace
        return replace(self, solver=replace(self.solver, **kw))


def _complex(v):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _point(v, what, errors):
    try:
        x, y = (float(t) for t in v)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError
        return (x, y)
    except (TypeError, ValueError):
        errors.append(f"{what}: expected a point [x, y], got {v!r}")
        return (0.0, 0.0)


def _exterior_samples(disks, n=1000):
    """Deterministic sample of points outside every disk."""
    rng = np.random.default_rng(12345)
    cs = np.array([d.center for d in disks], dtype=float)
    rs = np.array([d.radius for d in disks])
    ring = []
    per = max(1, (n // 2) // len(disks))
    for c, r in zip(cs, rs):
        t = np.linspace(0, 2 * np.pi, per, endpoint=False)
        ring.append(c + r * (1 + 1e-9) * np.stack([np.cos(t), np.sin(t)], -1))
    ring = np.concatenate(ring)
    lo = cs.min(axis=0) - rs.max() - 1.0
    hi = cs.max(axis=0) + rs.max() + 1.0
    box = []
    while sum(len(b) for b in box) < n - len(ring):
        cand = rng.uniform(lo, hi, size=(n, 2))
        d = np.hypot(cand[:, None, 0] - cs[:, 0], cand[:, None, 1] - cs[:, 1])
        box.append(cand[np.all(d > rs * (1 + 1e-9), axis=1)])
    box = np.concatenate(box)[: n - len(ring)]
    pts = np.concatenate([ring, box])
    keep = np.ones(len(pts), bool)
    for c, r in zip(cs, rs):
        keep &= np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) > r
    return pts[keep]


def _parse_index(doc, errors) -> RefractionIndexSpec:
    if doc is None:
        return RefractionIndexSpec()
    if not isinstance(doc, dict):
        errors.append("index: expected an object")
        return RefractionIndexSpec()
    prof = doc.get("profile", "constant-one")
    if prof not in PROFILES:
        errors.append(f"index.profile: unknown profile {prof!r} (choose from {', '.join(PROFILES)})")
        return RefractionIndexSpec()
    if prof == "constant-one":
        return RefractionIndexSpec()
    kw = {"profile": prof}
    try:
        if prof == "custom-table":
            r = tuple(float(v) for v in doc["r"])
            n = tuple(float(v) for v in doc["n"])
            if len(r) != len(n) or len(r) < 4 or np.any(np.diff(r) <= 0):
                errors.append("index: custom-table needs >= 4 increasing r samples matching n")
                return RefractionIndexSpec()
            kw.update(table_r=r, table_n=n, r_in=r[0], r_out=r[-1])
        else:
            kw["r_in"] = float(doc["r_in"])
            kw["r_out"] = float(doc["r_out"])
            if "rho0" in doc and doc["rho0"] is not None:
                kw["rho0"] = float(doc["rho0"])
            for key in ("sharpness", "amplitude"):
                if key in doc:
                    kw[key] = float(doc[key])
            if not kw["r_out"] > kw["r_in"] >= 0:
                errors.append("index: need r_out > r_in >= 0")
        if "centers" in doc:
            kw["centers"] = tuple(_point(c, "index.centers", errors) for c in doc["centers"])
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"index: malformed {prof} parameters ({exc})")
        return RefractionIndexSpec()
    return RefractionIndexSpec(**kw)


def parse_scene(text) -> SceneConfig:
    """Parse and validate a scene document (JSON text, path, or dict)."""
    if isinstance(text, dict):
        doc = text
    else:
        if isinstance(text, Path) or (isinstance(text, str) and not text.lstrip().startswith("{")
                                      and os.path.exists(text)):
            text = Path(text).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SceneParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SceneParseError("line 1, column 1: top level must be an object")
    try:
        return _build_scene(doc)
    except SceneValidationError:
        raise
    except (AttributeError, KeyError, TypeError, ValueError, IndexError, OverflowError) as exc:
        # a section of the wrong shape (e.g. a number where an object belongs)
        raise SceneValidationError([f"malformed document: {type(exc).__name__}: {exc}"]) from None


def _build_scene(doc: dict) -> SceneConfig:
    errors: list[str] = []

    sc = doc.get("scene", {})
    kappa = sc.get("kappa")
    if not isinstance(kappa, (int, float)) or not kappa > 0:
        errors.append(f"scene.kappa: wavenumber must be a positive number, got {kappa!r}")
        kappa = 1.0
    mode = sc.get("mode", "homogeneous")
    if mode not in ("homogeneous", "inhomogeneous"):
        errors.append(f"scene.mode: expected 'homogeneous' or 'inhomogeneous', got {mode!r}")
        mode = "homogeneous"
    amplitude = _complex(sc.get("incident", {}).get("amplitude", 1.0))

    scatterers, sids = [], []
    raw = doc.get("scatterers", [])
    if not isinstance(raw, list) or not raw:
        errors.append("scatterers: need a non-empty list")
        raw = []
    for i, s in enumerate(raw):
        sid = str(s.get("id", f"scatterer{i}"))
        sids.append(sid)
        c = _point(s.get("center"), f"scatterers[{sid}].center", errors)
        sh = s.get("shape", {})
        bcd = s.get("bc", {"type": "dirichlet"})
        try:
            kind = bcd.get("type", "dirichlet")
            h = _complex(bcd.get("h", 0.0))
            bc = BoundaryCondition(kind, h)
            k = sh.get("k", 0)
            if int(k) != k or k < 0:
                raise GeometryError(f"petal count k must be a non-negative integer, got {k!r}")
            spec = ScattererSpec(c, float(sh.get("a", 0.0)), float(sh.get("b", 1.0)), int(k),
                                 float(sh.get("theta0", 0.0)), bc)
            spec.bc.check_impedance(float(kappa))
            scatterers.append(spec)
        except (GeometryError, TypeError, ValueError) as exc:
            errors.append(f"scatterers[{sid}]: {exc}")
            scatterers.append(None)

    disks, dids = [], []
    rawd = doc.get("disks", [])
    if len(rawd) != len(raw):
        errors.append(f"disks: need one disk per scatterer ({len(raw)}), got {len(rawd)}")
    for i, d in enumerate(rawd):
        did = str(d.get("id", f"disk{i}"))
        dids.append(did)
        c = _point(d.get("center"), f"disks[{did}].center", errors)
        try:
            disks.append(ArtificialDisk(c, float(d.get("radius"))))
        except (GeometryError, TypeError, ValueError) as exc:
            errors.append(f"disks[{did}]: {exc}")
            disks.append(None)
    for i, (s, d) in enumerate(zip(scatterers, disks)):
        if s is None or d is None:
            continue
        if np.hypot(s.center[0] - d.center[0], s.center[1] - d.center[1]) > 1e-12:
            errors.append(f"disks[{dids[i]}]: center must coincide with scatterer {sids[i]} center")
        elif not d.radius > s.max_radius:
            errors.append(f"disks[{dids[i]}]: radius {d.radius} does not contain scatterer "
                          f"{sids[i]} (max radius {s.max_radius})")
    good = [d for d in disks if d is not None]
    if mode == "inhomogeneous":
        for i in range(len(disks)):
            for j in range(i + 1, len(disks)):
                if disks[i] is not None and disks[j] is not None and not disks[i].gap(disks[j]) > 0:
                    errors.append(f"disks {dids[i]} and {dids[j]} overlap "
                                  f"(gap {disks[i].gap(disks[j]):.3g}); inhomogeneous mode needs disjoint disks")

    index = _parse_index(doc.get("index"), errors)
    if not index.is_constant and not index.centers:
        index = index.with_centers([s.center for s in scatterers if s is not None])
    if mode == "homogeneous" and not index.is_constant:
        errors.append("index: homogeneous mode requires the constant-one profile")
    if good and not index.is_constant:
        ext = _exterior_samples(good)
        nv = refraction_eval(index, ext)
        bad = np.abs(nv - 1.0) >= 1e-12
        if np.any(bad):
            i = int(np.argmax(bad))
            errors.append(f"index: n != 1 outside the disks, e.g. n({ext[i, 0]:.6g}, {ext[i, 1]:.6g})"
                          f" = {nv[i]:.6g}")
        if index.profile == "x-weighted-bump":
            probe = np.concatenate([
                np.array(c) + r * np.stack([np.cos(t), np.sin(t)], -1)
                for c in index.centers
                for r, t in [(index.rho0 if index.rho0 is not None else 0.5 * (index.r_in + index.r_out),
                              np.linspace(0, 2 * np.pi, 64))]])
            if np.min(refraction_eval(index, probe)) <= 0:
                warnings.warn("x-weighted index profile takes values <= 0")

    so = doc.get("solver", {})
    try:
        solver = SolverParams(
            p=int(so.get("p", 20)), E_r=int(so.get("E_r", 2)),
            E_theta=None if so.get("E_theta") is None else int(so["E_theta"]),
            N=None if so.get("N") is None else int(so["N"]),
            tol=float(so.get("tol", 1e-11)), max_iter=int(so.get("max_iter", 200)))
        if solver.p < 1:
            errors.append("solver.p: degree must be >= 1")
        if solver.E_r < 1:
            errors.append("solver.E_r: must be >= 1")
        if solver.E_theta is not None and solver.E_theta < 4:
            errors.append("solver.E_theta: must be >= 4")
        if not solver.tol > 0:
            errors.append("solver.tol: must be positive")
        if solver.max_iter < 1:
            errors.append("solver.max_iter: must be >= 1")
    except (TypeError, ValueError) as exc:
        errors.append(f"solver: {exc}")
        solver = SolverParams()
    if solver.N is not None:
        for did, d in zip(dids, disks):
            if d is not None and solver.N < math.ceil(kappa * d.radius):
                warnings.warn(f"disk {did}: N={solver.N} < kappa R = {kappa * d.radius:.2f}")

    out = doc.get("outputs", {}) or {}
    try:
        grid = out.get("grid")
        window = tuple(float(v) for v in grid["window"]) if grid else None
        res = tuple(int(v) for v in grid["resolution"]) if grid else None
        if window is not None and (len(window) != 4 or window[1] <= window[0] or window[3] <= window[2]):
            errors.append("outputs.grid.window: expected [x0, x1, y0, y1] with x0 < x1, y0 < y1")
        if res is not None and (len(res) != 2 or min(res) < 1):
            errors.append("outputs.grid.resolution: expected [W, H] positive")
        fieldname = out.get("field", "scattered")
        if fieldname not in ("scattered", "total"):
            errors.append("outputs.field: expected 'scattered' or 'total'")
        probes = tuple(_point(p, "outputs.probes", errors) for p in out.get("probes", []))
        outputs = OutputSpec(window, res, fieldname, probes)
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"outputs: {exc}")
        outputs = OutputSpec()

    if errors:
        raise SceneValidationError(errors)
    return SceneConfig(float(kappa), mode, tuple(scatterers), tuple(disks), index, solver, outputs,
                       tuple(sids), tuple(dids), amplitude)


def scene_to_document(scene: SceneConfig) -> dict:
    """Inverse of :func:`parse_scene` (up to defaults)."""

    def cplx(z):
        z = complex(z)
        return [z.real, z.imag] if z.imag else z.real

    scat = []
    for sid, s in zip(scene.scatterer_ids or [f"scatterer{i}" for i in range(scene.M)], scene.scatterers):
        bc = {"type": s.bc.kind}
        if s.bc.kind == "robin":
            bc["h"] = cplx(s.bc.h)
        scat.append({"id": sid, "center": list(s.center),
                     "shape": {"a": s.a, "b": s.b, "k": s.k, "theta0": s.theta0}, "bc": bc})
    disks = [{"id": did, "center": list(d.center), "radius": d.radius}
             for did, d in zip(scene.disk_ids or [f"disk{i}" for i in range(scene.M)], scene.disks)]
    ix = scene.index
    if ix.is_constant:
        index = {"profile": "constant-one"}
    elif ix.profile == "custom-table":
        index = {"profile": ix.profile, "r": list(ix.table_r), "n": list(ix.table_n),
                 "centers": [list(c) for c in ix.centers]}
    else:
        index = {"profile": ix.profile, "r_in": ix.r_in, "r_out": ix.r_out, "rho0": ix.rho0,
                 "sharpness": ix.sharpness, "amplitude": ix.amplitude,
                 "centers": [list(c) for c in ix.centers]}
    o = scene.outputs
    outputs = {"field": o.field, "probes": [list(p) for p in o.probes]}
    if o.window is not None:
        outputs["grid"] = {"window": list(o.window), "resolution": list(o.resolution)}
    return {
        "scene": {"kappa": scene.kappa, "mode": scene.mode, "incident": {"amplitude": cplx(scene.amplitude)}},
        "scatterers": scat,
        "disks": disks,
        "index": index,
        "solver": asdict(scene.solver),
        "outputs": outputs,
    }


# ---------------------------------------------------------------------------
# built-in scenes
# ---------------------------------------------------------------------------


def _petal_scene(centers, a, b, k, theta0, R, kappa, mode, index=None, bc=None, **solver):
    bc = bc or BoundaryCondition()
    scat = tuple(ScattererSpec(tuple(map(float, c)), a, b, k, theta0, bc) for c in centers)
    disks = tuple(ArtificialDisk(tuple(map(float, c)), R) for c in centers)
    index = RefractionIndexSpec() if index is None else index.with_centers(centers)
    return SceneConfig(float(kappa), mode, scat, disks, index, SolverParams(**solver), OutputSpec(),
                       tuple(f"s{i + 1}" for i in range(len(centers))),
                       tuple(f"d{i + 1}" for i in range(len(centers))))


#: Index with a bump on 1.0 < |x - c| < 1.25 around each center.
EXAMPLE5_INDEX = RefractionIndexSpec("bump-annulus", r_in=1.0, r_out=1.25, rho0=1.0, sharpness=16.0)
#: x-weighted bump on 0.25 < |x - c| < 0.75.
EXAMPLE6_INDEX = RefractionIndexSpec("x-weighted-bump", r_in=0.25, r_out=0.75, rho0=0.5, sharpness=16.0)
#: Bump on 0.25 < |x - c| < 0.75.
EXAMPLE7_INDEX = RefractionIndexSpec("bump-annulus", r_in=0.25, r_out=0.75, rho0=0.5, sharpness=16.0)


def example1_scene(kappa=10.0, p=20, R=1.25, mode="homogeneous", **solver) -> SceneConfig:
    """Two two-petal sound-soft scatterers centred at (0, 0) and (2.6, 0)."""
    return _petal_scene([(0.0, 0.0), (2.6, 0.0)], 0.3, 0.7, 2, np.pi / 4, R, kappa, mode,
                        p=p, **solver)


def example5_scene(kappa=10.0, p=20, R=1.25, **solver) -> SceneConfig:
    """The two-scatterer scene in a medium with a bump index around each scatterer."""
    return _petal_scene([(0.0, 0.0), (2.6, 0.0)], 0.3, 0.7, 2, np.pi / 4, R, kappa,
                        "inhomogeneous", EXAMPLE5_INDEX, p=p, **solver)


def grid_scene(n=3, spacing=2.2, kappa=10.0, p=12, R=1.0, a=0.2, b=0.7, k=5, theta0=0.0,
               mode="homogeneous", index=None, bc=None, **solver) -> SceneConfig:
    """``n x n`` array of petal scatterers on a square lattice."""
    centers = [(spacing * i, spacing * j) for j in range(n) for i in range(n)]
    return _petal_scene(centers, a, b, k, theta0, R, kappa, mode, index, bc, p=p, **solver)


def disk_scene(kappa=10.0, radius=1.0, R=1.5, p=20, E_r=2, E_theta=12, N=None, bc=None, **solver):
    """Single circular scatterer (the separation-of-variables test case)."""
    N = int(math.ceil(kappa * radius)) + 20 if N is None else N
    return _petal_scene([(0.0, 0.0)], 0.0, radius, 0, 0.0, R, kappa, "homogeneous", None, bc,
                        p=p, E_r=E_r, E_theta=E_theta, N=N, **solver)


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def grid_points(window, resolution):
    x0, x1, y0, y1 = window
    W, H = resolution
    xs = np.linspace(x0, x1, W)
    ys = np.linspace(y0, y1, H)
    Y, X = np.meshgrid(ys, xs, indexing="ij")  # row-major over y, then x
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def write_grid(path, pts, values, masked):
    data = np.column_stack([pts[:, 0], pts[:, 1], values.real, values.imag, masked.astype(int)])
    np.savetxt(path, data, fmt=["%.10g", "%.10g", "%.16e", "%.16e", "%d"], header="x y re im masked",
               comments="# ")


def write_residuals(path, residuals):
    data = np.column_stack([np.arange(len(residuals)), np.asarray(residuals, dtype=float)])
    np.savetxt(path, data, fmt=["%d", "%.16e"], header="iter residual", comments="# ")


def read_table(path):
    return np.loadtxt(path, comments="#", ndmin=2)


def write_outputs(scene: SceneConfig, report, evaluator, outdir, outputs: OutputSpec | None = None,
                  extra_meta: dict | None = None) -> dict:
    """Write the field grid, residual history and run metadata into ``outdir``."""
    outputs = scene.outputs if outputs is None else outputs
    extra = dict(extra_meta or {})
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        files = {}
        rpath = outdir / "residuals.dat"
        write_residuals(rpath, report.residuals)
        files["residuals"] = str(rpath)
        if outputs.window is not None:
            pts = grid_points(outputs.window, outputs.resolution)
            sc, tot, mask = evaluator(pts)
            gpath = outdir / "field.dat"
            write_grid(gpath, pts, sc if outputs.field == "scattered" else tot, mask)
            files["grid"] = str(gpath)
        if outputs.probes:
            pts = np.asarray(outputs.probes, dtype=float)
            sc, tot, mask = evaluator(pts)
            ppath = outdir / "probes.dat"
            write_grid(ppath, pts, sc if outputs.field == "scattered" else tot, mask)
            files["probes"] = str(ppath)
        meta = {
            "scene": scene_to_document(scene),
            "iterations": report.iterations,
            "converged": report.converged,
            "final_residual": report.residuals[-1] if report.residuals else None,
            "timings": {"gmres_wall_time": report.wall_time, **extra.pop("timings", {})},
            **extra,
        }
        mpath = outdir / "metadata.json"
        mpath.write_text(json.dumps(meta, indent=2, sort_keys=True))
        files["metadata"] = str(mpath)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {outdir}: {exc}") from exc
    return files
