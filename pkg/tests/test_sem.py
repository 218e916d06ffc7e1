import numpy as np
import pytest
from numpy.polynomial import legendre as npleg
from scipy.integrate import quad

from multiscat.geometry import ArtificialDisk, ScattererSpec, build_annular_mesh
from multiscat.sem import (
    SubdomainOperator,
    diff_matrix,
    dtn_integrals,
    dtn_symbol,
    eval_solution,
    lagrange_eval,
    lagrange_to_legendre,
    legendre_moments,
    lgl_rule,
)
from multiscat.specfun import CylKind, cyl_bessel


@pytest.mark.parametrize("p", [1, 2, 5, 12, 25])
def test_lgl_integrates_degree_2p_minus_1(p):
    r = lgl_rule(p)
    assert r.nodes[0] == -1 and r.nodes[-1] == 1
    assert np.allclose(r.nodes, -r.nodes[::-1], atol=0)
    for deg in range(2 * p):
        exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert np.dot(r.weights, r.nodes ** deg) == pytest.approx(exact, abs=1e-13)


def test_lgl_interior_nodes_are_roots_of_derivative():
    r = lgl_rule(10)
    dP = npleg.Legendre.basis(10).deriv()
    assert np.max(np.abs(dP(r.nodes[1:-1]))) < 1e-11


def test_diff_matrix_exact_on_polynomials():
    r = lgl_rule(9)
    D = diff_matrix(r)
    x = r.nodes
    for k in range(10):
        assert np.allclose(D @ x ** k, k * x ** max(k - 1, 0) if k else 0 * x, atol=1e-11)


def test_lagrange_basis_cardinal_and_derivative():
    r = lgl_rule(7)
    assert np.allclose(lagrange_eval(r, r.nodes), np.eye(8))
    t = np.array([-0.77, 0.1, 0.5])
    L, dL = lagrange_eval(r, t, deriv=True)
    f = lambda s: s ** 5 - 2 * s ** 2 + 1
    assert np.allclose(L @ f(r.nodes), f(t), atol=1e-13)
    assert np.allclose(dL @ f(r.nodes), 5 * t ** 4 - 4 * t, atol=1e-12)


@pytest.mark.parametrize("off", [0.0, 2.3e-16, 4.4e-16, 3e-15])
def test_lagrange_derivative_stable_next_to_nodes(off):
    # located points come back a few ulps off element edges
    r = lgl_rule(14)
    D = diff_matrix(r)
    t = np.clip(r.nodes + off, -1, 1)
    _, dL = lagrange_eval(r, t, deriv=True)
    assert np.max(np.abs(dL - D)) < 1e-9


def test_lagrange_to_legendre_roundtrip():
    r = lgl_rule(6)
    A = lagrange_to_legendre(r)
    V = npleg.legvander(r.nodes, 6)
    assert np.allclose(V @ A, np.eye(7), atol=1e-12)


def _quad_moment(theta_hat, beta, n, m):
    def f(t, part):
        z = np.exp(-1j * n * (theta_hat * t + beta)) * npleg.legval(t, np.eye(m + 1)[m]) * theta_hat
        return z.real if part == 0 else z.imag

    re = quad(f, -1, 1, args=(0,), epsabs=1e-15, epsrel=1e-14, limit=200)[0]
    im = quad(f, -1, 1, args=(1,), epsabs=1e-15, epsrel=1e-14, limit=200)[0]
    return complex(re, im)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("n", [-40, -17, -1, 0, 1, 3, 22, 40])
def test_arc_moments_against_quadrature(n):
    theta_hat, beta = np.pi / 8, 1.1
    I = legendre_moments(theta_hat, beta, [n], 20)[0]
    for m in range(21):
        assert abs(I[m] - _quad_moment(theta_hat, beta, n, m)) < 1e-12


def test_zero_mode_moment():
    I = legendre_moments(0.3, 0.2, [0], 4)[0]
    assert np.allclose(I, [0.6, 0, 0, 0, 0])


def test_dtn_integrals_scalar_wrapper():
    mesh = build_annular_mesh(ScattererSpec((0, 0), 0.0, 1.0), ArtificialDisk((0, 0), 1.5), 1, 8)
    edge = mesh.gamma_edges()[3]
    assert dtn_integrals(edge, 5, 2) == pytest.approx(legendre_moments(edge.theta_hat, edge.beta, [5], 2)[0, 2])


def test_dtn_symbol_matches_definition():
    k, R = 7.0, 1.3
    n = np.arange(-10, 11)
    h = cyl_bessel(CylKind.H1, n, k * R)
    dh = 0.5 * (cyl_bessel(CylKind.H1, n - 1, k * R) - cyl_bessel(CylKind.H1, n + 1, k * R))
    assert np.allclose(dtn_symbol(k, R, n), k * dh / h, rtol=1e-13)
    # radiating: Im z_n > 0
    assert np.all(dtn_symbol(k, R, n).imag > 0)


@pytest.fixture(scope="module")
def disk_op():
    mesh = build_annular_mesh(ScattererSpec((0, 0), 0.0, 1.0), ArtificialDisk((0, 0), 1.5), 2, 12)
    return SubdomainOperator(mesh, 14, 6.0)


def test_dtn_block_is_complex_symmetric(disk_op):
    B = disk_op.dtn.matrix()
    assert np.allclose(B, B.T, atol=1e-13 * np.abs(B).max())


def test_moments_give_fourier_coefficients(disk_op):
    # a band-limited trace is reproduced exactly by the piecewise polynomial moments up to p-accuracy
    th = disk_op.theta_nodes
    v = np.exp(3j * th)
    c = disk_op.dtn.moments @ v / (2 * np.pi)
    ref = (disk_op.dtn.modes == 3).astype(float)
    assert np.max(np.abs(c - ref)) < 1e-10


def test_outgoing_mode_reproduced(disk_op):
    """Dirichlet data H_n(kappa r) e^{in theta} on r=1 gives that field back."""
    k, n = disk_op.kappa, 4
    th = disk_op.theta_nodes
    data = cyl_bessel(CylKind.H1, n, k * 1.0) * np.exp(1j * n * th)
    sol = disk_op.solve(data)
    pts = disk_op.node_xy
    r, t = np.hypot(pts[:, 0], pts[:, 1]), np.arctan2(pts[:, 1], pts[:, 0])
    exact = cyl_bessel(CylKind.H1, n, k * r) * np.exp(1j * n * t)
    assert np.max(np.abs(sol.values - exact)) / np.max(np.abs(exact)) < 1e-9


def test_condensed_solve_satisfies_full_system(disk_op, rng):
    data = rng.standard_normal(disk_op.n_theta) + 1j * rng.standard_normal(disk_op.n_theta)
    g = rng.standard_normal(disk_op.n_theta) + 0j
    sol = disk_op.solve(data, g)
    assert sol.residual(data, g) < 1e-12
    assert np.allclose(sol.scatterer_trace, data)


def test_eval_solution_gradient_by_finite_differences(disk_op):
    k, n = disk_op.kappa, 2
    data = cyl_bessel(CylKind.H1, n, k) * np.exp(1j * n * disk_op.theta_nodes)
    sol = disk_op.solve(data)
    x = np.array([[0.9, 0.6]])
    v, g = eval_solution(sol, x, gradient=True)
    h = 1e-6
    for d in range(2):
        e = np.zeros((1, 2))
        e[0, d] = h
        fd = (eval_solution(sol, x + e) - eval_solution(sol, x - e)) / (2 * h)
        assert abs(g[0, d] - fd[0]) < 1e-6 * max(1, abs(fd[0]))


def test_mie_single_disk():
    k = 10.0
    mesh = build_annular_mesh(ScattererSpec((0, 0), 0.0, 1.0), ArtificialDisk((0, 0), 1.5), 2, 12)
    op = SubdomainOperator(mesh, 20, k, N=int(np.ceil(k)) + 20)
    th = op.theta_nodes
    sol = op.solve(-np.exp(1j * k * np.sin(th)))
    n = np.arange(-50, 51)
    coef = -cyl_bessel(CylKind.J, n, k) / cyl_bessel(CylKind.H1, n, k)
    ang = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    pts = 1.3 * np.stack([np.cos(ang), np.sin(ang)], -1)
    exact = (cyl_bessel(CylKind.H1, n, k * 1.3) * coef) @ np.exp(1j * np.outer(n, ang))
    num = sol.eval(pts)
    assert np.linalg.norm(num - exact) / np.linalg.norm(exact) < 1e-10


def test_index_enters_mass_term():
    mesh = build_annular_mesh(ScattererSpec((0, 0), 0.0, 1.0), ArtificialDisk((0, 0), 1.5), 1, 8)
    k = 3.0
    a = SubdomainOperator(mesh, 6, k)
    b = SubdomainOperator(mesh, 6, k, index=lambda x: np.full(len(x), 2.0))
    # raising n by 1 adds k^2 * (collocated mass), which integrates to k^2 * area
    total = 0.0
    for A, B in zip(a.local_mats, b.local_mats):
        D = B - A
        assert np.allclose(D, np.diag(np.diag(D)), atol=1e-12)
        total += np.sum(np.diag(D)).real
    assert total == pytest.approx(k ** 2 * np.pi * (1.5 ** 2 - 1.0), rel=1e-12)


def test_nonfinite_index_rejected():
    mesh = build_annular_mesh(ScattererSpec((0, 0), 0.0, 1.0), ArtificialDisk((0, 0), 1.5), 1, 8)
    with pytest.raises(ValueError):
        SubdomainOperator(mesh, 4, 3.0, index=lambda x: np.full(len(x), np.nan))


def test_low_cutoff_warns():
    mesh = build_annular_mesh(ScattererSpec((0, 0), 0.0, 1.0), ArtificialDisk((0, 0), 1.5), 1, 8)
    with pytest.warns(UserWarning):
        SubdomainOperator(mesh, 4, 10.0, N=5)
