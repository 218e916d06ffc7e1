import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiscat.geometry import (
    ArtificialDisk,
    BoundaryCondition,
    GeometryError,
    PointNotInDomain,
    ScattererSpec,
    build_annular_mesh,
    default_E_theta,
    locate_point,
    map_eval,
    shape_eval,
)

PETAL = ScattererSpec((0.4, -0.3), 0.3, 0.7, 2, np.pi / 4)
DISK = ArtificialDisk((0.4, -0.3), 1.25)


@pytest.fixture(scope="module")
def mesh():
    return build_annular_mesh(PETAL, DISK, 2, 8)


def test_radius_formula():
    th = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(PETAL.radius(th), 0.3 * np.sin(2 * (th - np.pi / 4)) + 0.7)
    assert PETAL.max_radius == pytest.approx(1.0)


def test_normals_are_unit_outward_and_orthogonal_to_tangent():
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    pts, nrm = shape_eval(PETAL, th)
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)
    h = 1e-6
    tan = (shape_eval(PETAL, th + h)[0] - shape_eval(PETAL, th - h)[0]) / (2 * h)
    assert np.max(np.abs(np.sum(tan * nrm, axis=1))) < 1e-8
    # outward: stepping along the normal increases the distance ratio r / radius
    d = pts + 1e-3 * nrm - PETAL.center
    r = np.hypot(d[:, 0], d[:, 1])
    assert np.all(r > PETAL.radius(np.arctan2(d[:, 1], d[:, 0])))


def test_invalid_shapes_rejected():
    with pytest.raises(GeometryError):
        ScattererSpec((0, 0), 0.7, 0.7)
    with pytest.raises(GeometryError):
        ScattererSpec((0, 0), -0.1, 0.7)
    with pytest.raises(GeometryError):
        BoundaryCondition("dirichlet-ish")


def test_impedance_sign_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert BoundaryCondition("robin", 2j).check_impedance(5.0)
    with pytest.warns(UserWarning):
        assert not BoundaryCondition("robin", -2j).check_impedance(5.0)


def test_disk_must_contain_scatterer():
    with pytest.raises(GeometryError):
        build_annular_mesh(PETAL, ArtificialDisk((0.4, -0.3), 0.95), 2, 8)


def test_disk_gap():
    a = ArtificialDisk((0, 0), 1.25)
    b = ArtificialDisk((2.6, 0), 1.25)
    assert a.gap(b) == pytest.approx(0.1)


def test_default_sector_count():
    assert default_E_theta(ScattererSpec((0, 0), 0.2, 0.7, 5)) == 20
    assert default_E_theta(ScattererSpec((0, 0), 0.0, 1.0, 0)) == 8


def test_mesh_counts_and_ordering(mesh):
    assert mesh.n_elements == 16
    assert [el.ring for el in mesh.elements[:8]] == [0] * 8
    assert [el.sector for el in mesh.elements[:8]] == list(range(8))


def test_element_corners_conform(mesh):
    for el in mesh.elements:
        assert el.check_corners()


def test_edges_reproduced_exactly(mesh):
    # Gordon-Hall interpolates the four edge curves
    t = np.linspace(-1, 1, 11)
    for el in mesh.elements:
        top, right, bottom, left = el.edges
        assert np.allclose(map_eval(el, t, np.full_like(t, -1.0))[0], bottom(t), atol=1e-14)
        assert np.allclose(map_eval(el, t, np.full_like(t, 1.0))[0], top(t), atol=1e-14)
        assert np.allclose(map_eval(el, np.full_like(t, 1.0), t)[0], right(t), atol=1e-14)
        assert np.allclose(map_eval(el, np.full_like(t, -1.0), t)[0], left(t), atol=1e-14)


def test_jacobian_matches_finite_differences(mesh):
    el = mesh.elements[5]
    xi, eta, h = 0.31, -0.47, 1e-6
    _, J = map_eval(el, np.array(xi), np.array(eta))
    dxi = (map_eval(el, np.array(xi + h), np.array(eta))[0] - map_eval(el, np.array(xi - h), np.array(eta))[0]) / (2 * h)
    deta = (map_eval(el, np.array(xi), np.array(eta + h))[0] - map_eval(el, np.array(xi), np.array(eta - h))[0]) / (2 * h)
    assert np.allclose(J[:, 0], dxi, atol=1e-8)
    assert np.allclose(J[:, 1], deta, atol=1e-8)


def test_jacobian_sign_uniform_and_nonzero(mesh):
    t = np.linspace(-1, 1, 21)
    XI, ETA = np.meshgrid(t, t, indexing="ij")
    dets = np.concatenate([np.linalg.det(map_eval(el, XI, ETA)[1]).ravel() for el in mesh.elements])
    assert np.all(np.abs(dets) > 1e-4)
    assert np.all(np.sign(dets) == np.sign(dets[0]))


@given(xi=st.floats(-1, 1), eta=st.floats(-1, 1), e=st.integers(0, 15))
@settings(max_examples=150, deadline=None)
def test_locate_roundtrip(xi, eta, e):
    mesh = build_annular_mesh(PETAL, DISK, 2, 8)
    x = map_eval(mesh.elements[e], np.array(xi), np.array(eta))[0]
    eid, ref = locate_point(mesh, x)
    x2 = map_eval(mesh.elements[eid], np.array(ref[0]), np.array(ref[1]))[0]
    assert np.linalg.norm(x2 - x) < 1e-12


def test_locate_rejects_outside_points(mesh):
    with pytest.raises(PointNotInDomain):
        mesh.locate(np.array([[0.4, -0.3]]))  # scatterer center
    with pytest.raises(PointNotInDomain):
        mesh.locate(np.array([[3.0, 3.0]]))


def test_centers_must_coincide():
    with pytest.raises(GeometryError):
        build_annular_mesh(PETAL, ArtificialDisk((0.5, -0.3), 1.25), 2, 8)
