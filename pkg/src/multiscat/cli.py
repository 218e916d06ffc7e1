"""Command-line front end: ``multiscat {run,validate,sweep,compare}``.

Exit status: 0 success, 2 usage error, 3 validation failure, 4 GMRES did
not converge, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .geometry import GeometryError
from .scenes import (
    OutputSpec,
    SceneParseError,
    SceneValidationError,
    grid_points,
    parse_scene,
    write_outputs,
)

OUTPUT_ENV = "MULTISCAT_OUTPUT_DIR"

EXIT_USAGE, EXIT_VALIDATION, EXIT_NOT_CONVERGED, EXIT_IO = 2, 3, 4, 5


class CliFailure(Exception):
    def __init__(self, status, message):
        super().__init__(message)
        self.status = status


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _grid(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")


def _window(text):
    try:
        v = tuple(float(t) for t in text.split(","))
    except ValueError:
        v = ()
    if len(v) != 4:
        raise argparse.ArgumentTypeError(f"expected x0,x1,y0,y1, got {text!r}")
    return v


def _solver_flags(p):
    p.add_argument("--tol", type=float, help="GMRES relative residual tolerance")
    p.add_argument("--max-iter", type=int, help="GMRES iteration cap")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for subdomain solves (default: all cores)")
    p.add_argument("--N", type=int, help="DtN truncation order")


def build_parser():
    ap = argparse.ArgumentParser(prog="multiscat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a scene and write field/residual/metadata files")
    r.add_argument("scene")
    r.add_argument("outdir", nargs="?", help=f"output directory (default ${OUTPUT_ENV} or ./out)")
    _solver_flags(r)
    r.add_argument("--p", type=int, help="polynomial degree")
    r.add_argument("--grid", type=_grid, help="field grid resolution WxH")
    r.add_argument("--window", type=_window, help="field window x0,x1,y0,y1")

    v = sub.add_parser("validate", help="machinery checks against exact references")
    v.add_argument("--which", choices=["mie", "dtn", "integrals"], default="mie")
    v.add_argument("--kappa", type=float, default=10.0)
    v.add_argument("--p", type=int, default=20)
    v.add_argument("--N", type=int)
    v.add_argument("--threshold", type=float, help="failure threshold on the reported error")

    s = sub.add_parser("sweep", help="iterations and self-convergence error over degrees")
    s.add_argument("scene")
    s.add_argument("--p", type=_ints, default=[5, 10, 15, 20], help="degrees, e.g. 5,10,15,20")
    s.add_argument("--ref-p", type=int, help="reference degree (default max(p) + 5)")
    _solver_flags(s)
    s.add_argument("--out", help="write the table to this file")

    c = sub.add_parser("compare", help="both formulations on an n = 1 scene")
    c.add_argument("scene")
    _solver_flags(c)
    c.add_argument("--p", type=int)
    c.add_argument("--probes", type=int, default=200)
    return ap


def _load(path, args, p=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliFailure(EXIT_IO, f"cannot read scene {path}: {exc}")
    try:
        scene = parse_scene(text)
    except SceneParseError as exc:
        raise CliFailure(EXIT_VALIDATION, f"{path}: {exc}")
    except SceneValidationError as exc:
        raise CliFailure(EXIT_VALIDATION, f"{path}: {exc}")
    kw = {}
    if getattr(args, "tol", None) is not None:
        kw["tol"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter"] = args.max_iter
    if getattr(args, "N", None) is not None:
        kw["N"] = args.N
    if p is not None:
        kw["p"] = p
    return scene.with_solver(**kw) if kw else scene


def _solve(scene, threads):
    from .multiscatter import solve_scene

    return solve_scene(scene, threads=threads)


def _default_window(scene):
    cs = np.array([d.center for d in scene.disks])
    R = max(d.radius for d in scene.disks)
    lo, hi = cs.min(axis=0) - R - 1.0, cs.max(axis=0) + R + 1.0
    return (lo[0], hi[0], lo[1], hi[1])


def cmd_run(args):
    scene = _load(args.scene, args, args.p)
    outdir = args.outdir or os.environ.get(OUTPUT_ENV) or "out"
    outputs = scene.outputs
    if args.grid or args.window:
        window = args.window or outputs.window or _default_window(scene)
        res = args.grid or outputs.resolution or (200, 200)
        outputs = OutputSpec(window, res, outputs.field, outputs.probes)
    t0 = time.perf_counter()
    W, report, ev = _solve(scene, args.threads)
    wall = time.perf_counter() - t0
    meta = {"threads": args.threads, "timings": {**ev.solver.timings, "total": wall}}
    try:
        files = write_outputs(scene, report, ev, outdir, outputs, meta)
    except OSError as exc:
        raise CliFailure(EXIT_IO, str(exc))
    print(f"iterations {report.iterations}  final residual {report.residuals[-1]:.3e}  "
          f"converged {report.converged}  wall {wall:.2f}s")
    for k, v in files.items():
        print(f"{k}: {v}")
    if not report.converged:
        raise CliFailure(EXIT_NOT_CONVERGED, f"GMRES did not reach tol {scene.solver.tol} "
                                             f"in {report.iterations} iterations")


def mie_error(kappa, p=20, N=None, radii=(1.25, 2.0), n_probe=256):
    """Relative L2 error of the sound-soft disk solve against the exact series."""
    from .multiscatter import solve_scene
    from .scenes import disk_scene
    from .specfun import CylKind, cyl_bessel

    scene = disk_scene(kappa, p=p, N=N, tol=1e-13)
    _, _, ev = solve_scene(scene)
    th = np.linspace(0, 2 * np.pi, n_probe, endpoint=False)
    nmax = int(np.ceil(kappa)) + 40
    n = np.arange(-nmax, nmax + 1)
    errs = []
    for r in radii:
        pts = r * np.stack([np.cos(th), np.sin(th)], -1)
        coef = -cyl_bessel(CylKind.J, n, kappa) / cyl_bessel(CylKind.H1, n, kappa)
        exact = (cyl_bessel(CylKind.H1, n, kappa * r) * coef) @ np.exp(1j * np.outer(n, th))
        num = ev.scattered(pts)
        errs.append(np.linalg.norm(num - exact) / np.linalg.norm(exact))
    return max(errs)


def dtn_error(kappa, p=20, N=None):
    """Worst error of the DtN eigenrelation and of dn - T on own outgoing modes."""
    from .geometry import ArtificialDisk, ScattererSpec, build_annular_mesh
    from .harmonics import (BoundaryTrace, CircleGrid, OutgoingExpansion, dtn_apply,
                            eval_outgoing, fourier_coeffs, tprime_apply)
    from .sem import default_cutoff

    R = 1.5
    mesh = build_annular_mesh(ScattererSpec((0.0, 0.0), 0.0, 1.0), ArtificialDisk((0.0, 0.0), R), 2, 12)
    N = default_cutoff(kappa, R) if N is None else N
    g = CircleGrid.from_mesh(mesh, p, kappa, N)
    worst_eig = worst_tp = 0.0
    for n in range(-int(kappa * R), int(kappa * R) + 1):
        ft = fourier_coeffs(BoundaryTrace(g, np.exp(1j * n * g.theta)))
        t = dtn_apply(ft)
        sym = g.symbol[g.modes == n][0]
        ref = np.zeros_like(t.coeffs)
        ref[t.modes == n] = sym
        worst_eig = max(worst_eig, np.max(np.abs(t.coeffs - ref)) / abs(sym))
        c = (g.modes == n).astype(complex)
        v, gr = eval_outgoing(OutgoingExpansion(g.center, R, kappa, g.modes, c), g.points, True)
        dn = np.sum(gr * g.normals, axis=-1)
        tp = tprime_apply(BoundaryTrace(g, v), BoundaryTrace(g, dn))
        worst_tp = max(worst_tp, np.max(np.abs(tp.values)) / np.max(np.abs(dn)))
    return worst_eig, worst_tp


def integrals_error(nmax=40, mmax=20, theta_hat=np.pi / 8, beta=0.3):
    """Closed-form arc moments against adaptive quadrature."""
    from scipy.integrate import IntegrationWarning, quad
    from scipy.special import eval_legendre

    from .sem import legendre_moments

    modes = np.arange(-nmax, nmax + 1)
    I = legendre_moments(theta_hat, beta, modes, mmax)
    worst = 0.0
    for a, n in enumerate(modes):
        for m in range(mmax + 1):
            def f(t, part):
                z = np.exp(-1j * n * (theta_hat * t + beta)) * eval_legendre(m, t) * theta_hat
                return z.real if part == 0 else z.imag
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IntegrationWarning)
                re = quad(f, -1, 1, args=(0,), epsabs=1e-15, epsrel=1e-14, limit=200)[0]
                im = quad(f, -1, 1, args=(1,), epsabs=1e-15, epsrel=1e-14, limit=200)[0]
            worst = max(worst, abs(I[a, m] - complex(re, im)))
    return worst


def cmd_validate(args):
    if args.which == "mie":
        err = mie_error(args.kappa, args.p, args.N)
        thr = 1e-7 if args.threshold is None else args.threshold
        print(f"mie kappa={args.kappa} p={args.p}: relative L2 error {err:.3e} (threshold {thr:g})")
    elif args.which == "dtn":
        e1, e2 = dtn_error(args.kappa, args.p, args.N)
        err = max(e1, e2)
        thr = 1e-9 if args.threshold is None else args.threshold
        print(f"dtn kappa={args.kappa} p={args.p}: eigenrelation {e1:.3e}, "
              f"dn - T on outgoing modes {e2:.3e} (threshold {thr:g})")
    else:
        err = integrals_error()
        thr = 1e-12 if args.threshold is None else args.threshold
        print(f"arc integrals n<=40, m<=20: max abs error {err:.3e} (threshold {thr:g})")
    if not err < thr:
        raise CliFailure(EXIT_VALIDATION, f"{args.which} check failed: {err:.3e} >= {thr:g}")


def _probe_points(scene, n=200):
    cs = np.array([d.center for d in scene.disks])
    mid = 0.5 * (cs.min(axis=0) + cs.max(axis=0))
    rad = max(np.hypot(*(np.asarray(d.center) - mid)) + d.radius for d in scene.disks) + 0.5
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return mid + rad * np.stack([np.cos(th), np.sin(th)], -1)


def sweep_table(scene, ps, ref_p=None, threads=1):
    """Rows ``(p, iterations, converged, error vs reference)``."""
    ref_p = max(ps) + 5 if ref_p is None else ref_p
    probes = grid_points(_default_window(scene), (40, 40))
    _, _, ev = _solve(scene.with_solver(p=ref_p), threads)
    ref = ev.total(probes)
    live = ~np.isnan(ref)
    rows = []
    for p in ps:
        _, rep, ev = _solve(scene.with_solver(p=p), threads)
        u = ev.total(probes)
        err = np.linalg.norm(u[live] - ref[live]) / np.linalg.norm(ref[live])
        rows.append((p, rep.iterations, rep.converged, float(err)))
    return ref_p, rows


def cmd_sweep(args):
    scene = _load(args.scene, args)
    ref_p, rows = sweep_table(scene, args.p, args.ref_p, args.threads)
    lines = [f"# p iterations converged rel_error_vs_p{ref_p}"]
    lines += [f"{p} {it} {int(c)} {e:.6e}" for p, it, c, e in rows]
    print("\n".join(lines))
    errs = [r[3] for r in rows]
    if not all(b < a for a, b in zip(errs, errs[1:])):
        print("warning: error does not decay monotonically", file=sys.stderr)
    if args.out:
        try:
            Path(args.out).write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise CliFailure(EXIT_IO, f"cannot write {args.out}: {exc}")
    if not all(r[2] for r in rows):
        raise CliFailure(EXIT_NOT_CONVERGED, "some runs did not converge")


def compare_runs(scene, threads=1, n_probes=200):
    if not scene.index.is_constant:
        raise CliFailure(EXIT_VALIDATION, "compare needs a scene with the constant-one index")
    pts = _probe_points(scene, n_probes)
    out = {}
    for mode in ("homogeneous", "inhomogeneous"):
        _, rep, ev = _solve(scene.replace(mode=mode), threads)
        out[mode] = (rep, ev.total(pts))
    u1, u2 = out["homogeneous"][1], out["inhomogeneous"][1]
    diff = float(np.linalg.norm(u1 - u2) / np.linalg.norm(u1))
    return diff, out["homogeneous"][0], out["inhomogeneous"][0]


def cmd_compare(args):
    scene = _load(args.scene, args, args.p)
    for i in range(scene.M):
        for j in range(i + 1, scene.M):
            if not scene.disks[i].gap(scene.disks[j]) > 0:
                raise CliFailure(EXIT_VALIDATION, "compare needs pairwise disjoint disks")
    diff, r1, r2 = compare_runs(scene, args.threads, args.probes)
    print(json.dumps({"relative_l2_difference": diff,
                      "iterations_boundary_traces": r1.iterations,
                      "iterations_circle_traces": r2.iterations}, indent=2))
    if not (r1.converged and r2.converged):
        raise CliFailure(EXIT_NOT_CONVERGED, "a formulation did not converge")


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status
    except (SceneValidationError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
