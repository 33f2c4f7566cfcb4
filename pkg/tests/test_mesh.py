import numpy as np
import pytest

from plateopt.mesh import Mesh, MeshFormatError, MeshTopologyError, \
    build_uniform, load_mesh, refine, save_mesh


def test_single_square_counts():
    m = build_uniform(1)
    assert (m.num_vertices, m.num_triangles, m.num_edges) == (4, 2, 5)
    assert m.h == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_level4_counts_and_euler():
    # counting formulas for n = 8: V = (n+1)^2, T = 2n^2, E = 3n^2 + 2n,
    # cross-checked by the Euler relation V - E + T = 1
    m = build_uniform(4)
    n = 8
    assert m.num_vertices == (n + 1) ** 2 == 81
    assert m.num_triangles == 2 * n ** 2 == 128
    assert m.num_edges == 3 * n ** 2 + 2 * n == 208
    assert m.num_vertices - m.num_edges + m.num_triangles == 1
    assert m.h == pytest.approx(np.sqrt(2.0) / 8, abs=1e-15)
    assert m.h == pytest.approx(0.17678, abs=5e-6)


def test_level6_mesh_size():
    m = build_uniform(6)
    assert m.h == pytest.approx(np.sqrt(2.0) * 2.0 ** -5, rel=1e-14)
    assert m.h == pytest.approx(0.04419, abs=5e-6)


def test_rejects_bad_level():
    with pytest.raises(ValueError):
        build_uniform(0)
    with pytest.raises(ValueError):
        build_uniform(-2)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_mesh_invariants(k):
    m = build_uniform(k)
    assert m.num_vertices - m.num_edges + m.num_triangles == 1
    assert abs(m.areas.sum() - 1.0) <= 1e-12
    assert (m.areas > 0).all()
    inner = ~m.boundary_edge
    assert (m.edge_tris[inner] >= 0).all()
    assert (m.edge_tris[m.boundary_edge, 1] == -1).all()


def test_refine_counts_and_h():
    m = build_uniform(1)
    f, _ = refine(m)
    assert f.num_triangles == 8
    assert f.h == pytest.approx(np.sqrt(2.0) / 2, rel=1e-14)
    assert abs(f.areas.sum() - 1.0) <= 1e-12


def test_refine_matches_uniform_family():
    f, _ = refine(build_uniform(4))
    u = build_uniform(5)
    assert f.num_vertices == u.num_vertices
    assert f.num_edges == u.num_edges
    assert f.num_triangles == u.num_triangles
    got = np.array(sorted(map(tuple, np.round(f.vertices, 12))))
    want = np.array(sorted(map(tuple, np.round(u.vertices, 12))))
    assert np.allclose(got, want, atol=1e-12)


def test_refine_twice_counts():
    m = build_uniform(2)
    f, _ = refine(m)
    ff, _ = refine(f)
    u = build_uniform(4)
    assert (ff.num_vertices, ff.num_edges, ff.num_triangles) == \
        (u.num_vertices, u.num_edges, u.num_triangles)


def test_prolongation_data():
    m = build_uniform(3)
    f, pro = refine(m)
    assert pro.check_containment()
    assert pro.vertex_bary.min() >= -1e-15
    assert pro.vertex_bary.max() <= 1 + 1e-15
    assert np.abs(pro.vertex_bary.sum(axis=1) - 1.0).max() <= 1e-12
    assert pro.parent.shape == (f.num_triangles,)
    assert (pro.parent == np.repeat(np.arange(m.num_triangles), 4)).all()


def test_mesh_immutability():
    m = build_uniform(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 7.0
    with pytest.raises(ValueError):
        m.triangles[0, 0] = 3


def test_save_load_roundtrip(tmp_path):
    m = build_uniform(1)
    path = tmp_path / "unit.mesh"
    save_mesh(m, path)
    back = load_mesh(path)
    assert (back.num_vertices, back.num_triangles, back.num_edges) == (4, 2, 5)
    assert np.allclose(back.vertices, m.vertices)


def test_load_flipped_triangle_names_element(tmp_path):
    path = tmp_path / "flip.mesh"
    path.write_text("4 5 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 3 2\n")
    with pytest.raises(MeshTopologyError, match="triangle 1"):
        load_mesh(path)


def test_load_dangling_vertex_warns(tmp_path):
    path = tmp_path / "dangling.mesh"
    path.write_text("5 5 2\n0 0\n1 0\n1 1\n0 1\n0.3 0.3\n0 1 2\n0 2 3\n")
    with pytest.warns(UserWarning, match="not used"):
        m = load_mesh(path)
    assert m.num_vertices == 5
    assert m.num_triangles == 2


def test_load_parse_error_reports_line(tmp_path):
    path = tmp_path / "broken.mesh"
    path.write_text("4 5 2\n0 0\n1 zero\n1 1\n0 1\n0 1 2\n0 2 3\n")
    with pytest.raises(MeshFormatError, match=":3:"):
        load_mesh(path)


def test_load_header_edge_count_checked(tmp_path):
    path = tmp_path / "badheader.mesh"
    path.write_text("4 9 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n")
    with pytest.raises(MeshTopologyError, match="edges"):
        load_mesh(path)


def test_nonconforming_mesh_rejected():
    # three triangles sharing one edge
    verts = [(0, 0), (1, 0), (0.5, 1), (0.5, -1), (1.5, 1)]
    tris = [(0, 1, 2), (0, 3, 1), (0, 1, 4)]
    with pytest.raises(MeshTopologyError, match="conforming"):
        Mesh(np.array(verts, float), np.array(tris))
