import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dotsurf.diagnostics import cone_membership_pair, qcoeff_dense, random_q
from dotsurf.discretization import Discretization
from dotsurf.mesh import TriMesh, compute_geometry, generate_icosphere
from dotsurf.socp import (
    ConeLayout,
    DecoupledVec,
    apply_copy,
    apply_copy_adjoint,
    qcoeff_diagonal,
    soc_project,
    z_size,
    z_weights,
)
from dotsurf.solver import constraint_value


@pytest.fixture(scope="module")
def disc():
    return Discretization(compute_geometry(generate_icosphere(1)), 4)


def single_face(N=3):
    return Discretization(compute_geometry(TriMesh(np.eye(3), np.array([[0, 1, 2]]))), N)


def test_sizes(disc):
    lay = ConeLayout(disc)
    assert lay.total_size == z_size(disc.N, disc.nV, disc.nT)
    assert lay.dims.sum() == lay.slice_size
    np.testing.assert_array_equal(np.sort(lay.index), np.arange(lay.total_size))


def test_copy_blocks():
    d = single_face(2)
    A = np.array([[0.5, -1, 2], [0, 1, -2]])
    B = np.arange(9.0).reshape(3, 1, 3)
    z = apply_copy(A, B)
    np.testing.assert_allclose(z.z1, 1 - A)
    np.testing.assert_allclose(z.z3, 1 + A)
    for b in range(3):
        np.testing.assert_allclose(z.z2[b], B[:-1] / np.sqrt(3))
        np.testing.assert_allclose(z.z2[3 + b], B[1:] / np.sqrt(3))
    assert d.N == 2


def test_qcoeff_single_face_dense():
    d = single_face(3)
    M = qcoeff_dense(d)
    dA, dB = qcoeff_diagonal(d.weights, d.N)
    off = M - np.diag(np.diag(M))
    assert np.abs(off).max() <= 1e-14
    np.testing.assert_allclose(np.diag(M), np.concatenate([dA.ravel(), dB.ravel()]), rtol=1e-14)
    # end slices of B appear in one copy group, inner slices in two
    np.testing.assert_allclose(dB[:, 0, 0] / d.weights.face[0], [2, 3, 3, 2])


def test_copy_adjoint_weighted(disc):
    rng = np.random.default_rng(5)
    A = rng.standard_normal((disc.N, disc.nV))
    B = rng.standard_normal((disc.N + 1, disc.nT, 3))
    zeta = DecoupledVec(rng.standard_normal(z_size(disc.N, disc.nV, disc.nT)), disc.N, disc.nV, disc.nT)
    w = z_weights(disc).flat
    aA, aB = apply_copy_adjoint(zeta, disc.weights)
    lhs = w @ (apply_copy(A, B, shift=False).flat * zeta.flat)
    assert lhs == pytest.approx(np.vdot(A, aA) + np.vdot(B, aB), rel=1e-12)


def test_gather_scatter_roundtrip(disc):
    lay = ConeLayout(disc)
    z = DecoupledVec(np.random.default_rng(1).standard_normal(lay.total_size), disc.N, disc.nV, disc.nT)
    np.testing.assert_array_equal(lay.scatter(lay.gather(z, scaled=False), scaled=False).flat, z.flat)
    back = lay.scatter(lay.gather(z)).flat
    assert np.abs((back - z.flat) / z.flat).max() <= np.finfo(float).eps


def test_scaled_cone_norm_is_weighted_norm(disc):
    # |v|/N times the squared Euclidean norm of each gathered cone equals the
    # weighted z-space norm of the entries that cone collects
    lay = ConeLayout(disc)
    rng = np.random.default_rng(2)
    z = DecoupledVec(rng.standard_normal(lay.total_size), disc.N, disc.nV, disc.nT)
    y = lay.gather(z)
    w = z_weights(disc).flat
    idx = lay.index.reshape(disc.N, -1)
    for k, v, sl in list(lay.cone_slices())[::7]:
        lhs = disc.weights.vertex[v] * np.sum(y[k, sl] ** 2)
        rhs = np.sum(w[idx[k, sl]] * z.flat[idx[k, sl]] ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-13)


def test_cone_equivalence(disc):
    lay = ConeLayout(disc)
    rng = np.random.default_rng(7)
    seen = np.zeros(2, int)
    for _ in range(200):
        A, B = random_q(rng, disc.N, disc.nV, disc.nT, scale=rng.uniform(0.1, 2))
        d, c = cone_membership_pair(disc, lay, A, B)
        np.testing.assert_array_equal(d, c)
        seen += [d.sum(), (~d).sum()]
    assert seen.min() > 0  # both feasible and infeasible cones exercised


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=12))
def test_soc_projection_properties(vals):
    y = np.array(vals)
    p = soc_project(y)
    # feasible, idempotent, and the residual is orthogonal to the projection
    assert p[0] >= np.linalg.norm(p[1:]) - 1e-9 * (1 + abs(p[0]))
    np.testing.assert_allclose(soc_project(p), p, atol=1e-9 * (1 + np.abs(y).max()))
    assert abs(np.dot(y - p, p)) <= 1e-7 * (1 + np.dot(y, y))


def test_soc_projection_cases():
    np.testing.assert_array_equal(soc_project(np.array([2.0, 1.0, 0.0])), [2, 1, 0])
    np.testing.assert_array_equal(soc_project(np.array([-2.0, 1.0, 0.0])), [0, 0, 0])
    np.testing.assert_allclose(soc_project(np.array([0.0, 2.0])), [1, 1])
    with pytest.raises(ValueError):
        soc_project(np.array([1.0]))


def test_layout_project_matches_per_cone(disc):
    lay = ConeLayout(disc)
    rng = np.random.default_rng(4)
    y = rng.standard_normal((disc.N, lay.slice_size))
    y[:, lay.starts] += rng.uniform(-3, 3, (disc.N, disc.nV))
    ref = y.copy()
    lay.project(y)
    for k, v, sl in lay.cone_slices():
        np.testing.assert_allclose(y[k, sl], soc_project(ref[k, sl]), atol=1e-14)
    assert lay.feasible(y, atol=1e-12).all()


def test_cone_feasibility_of_copy_tracks_constraint(disc):
    A = np.full((disc.N, disc.nV), -0.5)
    B = np.zeros((disc.N + 1, disc.nT, 3))
    assert (constraint_value(disc, A, B) <= 0).all()
    lay = ConeLayout(disc)
    assert lay.feasible(lay.gather(apply_copy(A, B))).all()
    assert not lay.feasible(lay.gather(apply_copy(-A, B))).any()
