import numpy as np
import pytest

from dotsurf.mesh import (
    MeshError,
    TriMesh,
    compute_geometry,
    generate_grid_mesh,
    generate_icosphere,
    load_mesh,
    validate_mesh,
    write_off,
)


def unit_triangle():
    return TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))


def test_unit_triangle_geometry():
    g = compute_geometry(unit_triangle())
    assert g.face_area[0] == pytest.approx(0.5)
    np.testing.assert_allclose(g.vertex_area, [1 / 6] * 3)
    np.testing.assert_allclose(g.hat_grad[0], [[-1, -1, 0], [1, 0, 0], [0, 1, 0]], atol=1e-15)


def test_hat_gradients_sum_to_zero_and_reproduce_linear():
    mesh = generate_icosphere(2)
    g = compute_geometry(mesh)
    assert np.abs(g.hat_grad.sum(axis=1)).max() < 1e-12
    # gradient of the restriction of a linear function is tangential
    a = np.array([0.3, -1.2, 0.7])
    X = mesh.vertices
    grads = np.einsum("fi,fid->fd", (X @ a)[mesh.faces], g.hat_grad)
    n = np.cross(X[mesh.faces[:, 1]] - X[mesh.faces[:, 0]], X[mesh.faces[:, 2]] - X[mesh.faces[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    np.testing.assert_allclose(grads, a - (n @ a)[:, None] * n, atol=1e-12)


def test_vertex_areas_partition_total_area():
    g = compute_geometry(generate_grid_mesh(7))
    assert g.vertex_area.sum() == pytest.approx(g.face_area.sum())
    assert g.face_area.sum() == pytest.approx(1.0)


def test_grid_counts_and_index_order():
    m = generate_grid_mesh(4)
    assert m.n_vertices == 25 and m.n_faces == 32
    # vertex j*(n+1)+i sits at (i/n, j/n)
    np.testing.assert_allclose(m.vertices[7], [2 / 4, 1 / 4, 0])
    with pytest.raises(ValueError):
        generate_grid_mesh(0)


def test_grid_96_matches_demo_size():
    m = generate_grid_mesh(96)
    assert (m.n_vertices, m.n_faces) == (9409, 18432)


@pytest.mark.parametrize("s", [0, 1, 2, 3])
def test_icosphere_closed_and_counts(s):
    m = generate_icosphere(s)
    assert m.n_faces == 20 * 4**s
    assert m.n_vertices == 10 * 4**s + 2
    d = validate_mesh(m)
    assert d.n_boundary_edges == 0 and d.connected and d.manifold
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 1.0)


def test_icosphere_area_converges():
    g = compute_geometry(generate_icosphere(4))
    assert g.face_area.sum() / (4 * np.pi) == pytest.approx(1.0, abs=2e-3)


def test_degenerate_face_named():
    m = TriMesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]]), np.array([[0, 1, 3], [0, 1, 2]]))
    with pytest.raises(MeshError, match="face 1"):
        compute_geometry(m)


def test_bad_index_rejected():
    with pytest.raises(MeshError):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), np.array([[0, 1, 1]]))


def test_disconnected_and_nonmanifold():
    a = unit_triangle()
    two = TriMesh(np.vstack([a.vertices, a.vertices + 5]), np.array([[0, 1, 2], [3, 4, 5]]))
    with pytest.raises(MeshError, match="disconnected"):
        validate_mesh(two)
    assert validate_mesh(two, strict=False).n_components == 2
    fan = TriMesh(
        np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]),
        np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]]),
    )
    with pytest.raises(MeshError, match="non-manifold"):
        validate_mesh(fan)


def test_off_roundtrip(tmp_path):
    m = generate_icosphere(1)
    p = tmp_path / "s.off"
    write_off(m, p)
    back = load_mesh(p)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, rtol=0, atol=0)


def test_obj_reader(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 -1//1\n")
    with pytest.warns(UserWarning):
        m = load_mesh(p)
    np.testing.assert_array_equal(m.faces, [[0, 1, 2]])


def test_obj_quad_and_empty(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="non-triangular"):
        load_mesh(p)
    e = tmp_path / "e.off"
    e.write_text("OFF\n0 0 0\n")
    with pytest.raises(MeshError, match="empty"):
        load_mesh(e)


def test_star_structure():
    m = generate_icosphere(1)
    g = compute_geometry(m)
    assert g.degree.sum() == 3 * m.n_faces
    for v in (0, 17, 41):
        for f, loc in g.star(v):
            assert m.faces[f, loc] == v
