import numpy as np
import pytest

from multiscat.geometry import ArtificialDisk, ScattererSpec, build_annular_mesh
from multiscat.harmonics import (
    BoundaryTrace,
    CircleGrid,
    IncidentWave,
    InsideSourceDisk,
    OutgoingExpansion,
    dtn_apply,
    eval_outgoing,
    fourier_coeffs,
    incident_data,
    inverse_transform,
    outgoing_from_trace,
    tprime_apply,
)
from multiscat.specfun import CylKind, cyl_bessel

KAPPA = 8.0


@pytest.fixture(scope="module")
def grid():
    spec = ScattererSpec((0.5, -0.2), 0.3, 0.7, 2, np.pi / 4)
    mesh = build_annular_mesh(spec, ArtificialDisk((0.5, -0.2), 1.25), 2, 8)
    return CircleGrid.from_mesh(mesh, 20, KAPPA, 30)


def _mode(grid, n):
    c = (grid.modes == n).astype(complex)
    return OutgoingExpansion(grid.center, grid.R, grid.kappa, grid.modes, c)


def test_grid_weights_sum_to_circumference(grid):
    assert grid.weights.sum() == pytest.approx(2 * np.pi * grid.R, rel=1e-14)
    assert np.allclose(np.linalg.norm(grid.points - grid.center, axis=1), grid.R)


@pytest.mark.parametrize("n", [-7, 0, 3, 12])
def test_fourier_roundtrip_band_limited(grid, n):
    ft = fourier_coeffs(BoundaryTrace(grid, np.exp(1j * n * grid.theta)))
    assert np.max(np.abs(ft.coeffs - (ft.modes == n))) < 1e-12
    back = inverse_transform(ft)
    assert np.max(np.abs(back.values - np.exp(1j * n * grid.theta))) < 1e-12


@pytest.mark.parametrize("n", [-9, 0, 4, 15])
def test_dtn_eigenrelation(grid, n):
    ft = dtn_apply(fourier_coeffs(BoundaryTrace(grid, np.exp(1j * n * grid.theta))))
    z = grid.symbol[grid.modes == n][0]
    ref = np.where(ft.modes == n, z, 0)
    assert np.max(np.abs(ft.coeffs - ref)) < 1e-9 * abs(z)


@pytest.mark.parametrize("n", [-11, -2, 0, 5, 10])
def test_tprime_annihilates_own_outgoing_mode(grid, n):
    v, g = eval_outgoing(_mode(grid, n), grid.points, want_gradient=True)
    dn = np.sum(g * grid.normals, axis=-1)
    tp = tprime_apply(BoundaryTrace(grid, v), BoundaryTrace(grid, dn))
    assert np.max(np.abs(tp.values)) < 1e-9 * np.max(np.abs(dn))


def test_tprime_of_incident_is_not_zero(grid):
    u, dn = incident_data(IncidentWave(KAPPA), grid.points, grid.normals)
    tp = tprime_apply(BoundaryTrace(grid, u), BoundaryTrace(grid, dn))
    assert np.max(np.abs(tp.values)) > 1.0


def test_jacobi_anger(grid):
    u, _ = incident_data(IncidentWave(KAPPA), grid.points, grid.normals)
    ft = fourier_coeffs(BoundaryTrace(grid, u))
    ref = np.exp(1j * KAPPA * grid.center[1]) * cyl_bessel(CylKind.J, ft.modes, KAPPA * grid.R)
    assert np.max(np.abs(ft.coeffs - ref)) < 1e-10


def test_outgoing_trace_reproduces_data(grid):
    vals = np.exp(2j * grid.theta) + 0.5 * np.exp(-5j * grid.theta)
    exp = outgoing_from_trace(fourier_coeffs(BoundaryTrace(grid, vals)))
    assert np.max(np.abs(eval_outgoing(exp, grid.points) - vals)) < 1e-12


def test_outgoing_radial_profile(grid):
    exp = _mode(grid, 3)
    x = grid.center + np.array([[2.7, 0.0]])
    expect = cyl_bessel(CylKind.H1, 3, KAPPA * 2.7) / cyl_bessel(CylKind.H1, 3, KAPPA * grid.R)
    assert eval_outgoing(exp, x)[0] == pytest.approx(expect, rel=1e-13)


def test_outgoing_gradient_by_finite_differences(grid):
    c = np.exp(1j * np.arange(grid.modes.size)) / (1 + np.abs(grid.modes)) ** 2
    exp = OutgoingExpansion(grid.center, grid.R, KAPPA, grid.modes, c)
    x = np.array([[2.9, 1.1]])
    _, g = eval_outgoing(exp, x, want_gradient=True)
    h = 1e-6
    for d in range(2):
        e = np.zeros((1, 2))
        e[0, d] = h
        fd = (eval_outgoing(exp, x + e) - eval_outgoing(exp, x - e)) / (2 * h)
        assert abs(g[0, d] - fd[0]) < 1e-7 * max(1, abs(fd[0]))


def test_inside_source_disk_rejected(grid):
    with pytest.raises(InsideSourceDisk):
        eval_outgoing(_mode(grid, 0), grid.center[None] + 0.3)


def test_transfer_reciprocity():
    # n = 0 mode of A seen at B equals n = 0 mode of B seen at A
    a = OutgoingExpansion(np.array([0.0, 0.0]), 1.1, 6.0, np.array([0]), np.array([1.0 + 0j]))
    b = OutgoingExpansion(np.array([3.1, -0.7]), 1.1, 6.0, np.array([0]), np.array([1.0 + 0j]))
    assert abs(eval_outgoing(a, b.center[None])[0] - eval_outgoing(b, a.center[None])[0]) < 1e-11


def test_trace_rejects_bad_shapes(grid):
    with pytest.raises(ValueError):
        BoundaryTrace(grid, np.zeros(3))
    with pytest.raises(ValueError):
        BoundaryTrace(grid, np.full(grid.size, np.nan))


def test_incident_wave_gradient():
    w = IncidentWave(4.0, 2.0)
    x = np.array([[0.3, 0.9]])
    assert w(x)[0] == pytest.approx(2.0 * np.exp(4j * 0.9))
    assert np.allclose(w.gradient(x), [[0, 4j * w(x)[0]]])
