import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from graspkit.geometry import (Aabb, GeometryError, MeshQuery, TriangleMesh, box_mesh, closest_points_on_triangles,
                               cylinder_mesh, farthest_point_sampling, icosphere, load_obj, nearest_vertex,
                               nearest_vertices, point_mesh_distance, point_mesh_distances, points_inside_mesh,
                               save_obj, unsigned_mesh_distance, voxelized_intersection_volume)

from oracles import brute_point_triangle, winding_inside

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


def test_nearest_vertex_single_point():
    idx, disp = nearest_vertex([1.0, 0, 0], [[0.0, 0, 0]])
    assert idx == 0
    np.testing.assert_array_equal(disp, [-1.0, 0, 0])


def test_nearest_vertex_tie_lowest_index():
    idx, _ = nearest_vertex([0.0, 0, 0], [[1.0, 0, 0], [-1.0, 0, 0]])
    assert idx == 0


def test_nearest_vertices_empty_cloud():
    with pytest.raises(GeometryError):
        nearest_vertices(np.zeros((1, 3)), np.zeros((0, 3)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (7, 3), elements=finite), arrays(np.float64, (11, 3), elements=finite))
def test_nearest_vertices_matches_scan(q, cloud):
    idx, disp = nearest_vertices(q, cloud)
    for i, p in enumerate(q):
        d = [np.sum((c - p) ** 2) for c in cloud]
        assert idx[i] == int(np.argmin(d))
        np.testing.assert_allclose(disp[i], cloud[idx[i]] - p)


def test_fps_properties(rng):
    pts = rng.normal(size=(200, 3))
    sel = farthest_point_sampling(pts, 20)
    assert sel[0] == 0 and len(set(sel.tolist())) == 20
    # greedy rule: every pick is the farthest from the previous picks
    for j in range(1, 20):
        d = np.min(np.linalg.norm(pts[:, None] - pts[sel[:j]][None], axis=-1), axis=1)
        assert sel[j] == int(np.argmax(d))


def test_fps_bad_k():
    with pytest.raises(GeometryError):
        farthest_point_sampling(np.zeros((3, 3)), 4)


def test_mesh_validation():
    with pytest.raises(GeometryError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 5]])
    assert box_mesh().is_watertight
    open_mesh = TriangleMesh(box_mesh().vertices, box_mesh().faces[:-1])
    assert not open_mesh.is_watertight


def test_box_distance_values():
    box = box_mesh()
    assert point_mesh_distance([0.5, 0.5, 0.5], box) == pytest.approx(-0.5)
    assert point_mesh_distance([2.0, 0.5, 0.5], box) == pytest.approx(1.0)
    assert point_mesh_distance([2.0, 2.0, 0.5], box) == pytest.approx(np.sqrt(2))


def test_closest_point_matches_projection_oracle(rng):
    for _ in range(200):
        a, b, c, p = rng.normal(size=(4, 3))
        q = closest_points_on_triangles(p[None], a[None], b[None], c[None])[0]
        assert np.linalg.norm(q - p) == pytest.approx(brute_point_triangle(p, a, b, c), abs=1e-12)


def test_tree_and_brute_distances_agree(rng):
    mesh = icosphere(0.05, 2).transformed(np.eye(3), [0.01, 0, 0])
    pts = rng.normal(size=(300, 3)) * 0.06
    np.testing.assert_allclose(unsigned_mesh_distance(pts, mesh, "tree"),
                               unsigned_mesh_distance(pts, mesh, "brute"), atol=1e-12)
    q = MeshQuery(mesh)
    capped = q.unsigned(pts, cap=0.01)
    np.testing.assert_allclose(capped, np.minimum(unsigned_mesh_distance(pts, mesh, "brute"), 0.01), atol=1e-12)


def test_inside_matches_winding_oracle(rng):
    for mesh in (icosphere(1.0, 2), box_mesh((-1, -1, -1), (1, 1, 1), 3), cylinder_mesh(0.8, 2.0, 16, 4)):
        pts = rng.uniform(-1.3, 1.3, size=(500, 3))
        np.testing.assert_array_equal(points_inside_mesh(pts, mesh), winding_inside(pts, mesh))


def test_signed_needs_watertight_only_for_sign():
    box = box_mesh()
    open_mesh = TriangleMesh(box.vertices, box.faces[:-2])
    d = point_mesh_distances([[0.5, 0.5, 0.5]], open_mesh)
    assert d[0] > 0


def test_iv_box_overlap_analytic():
    a = box_mesh((0, 0, 0), (0.02, 0.02, 0.02))
    b = box_mesh((0.01, 0.01, 0.01), (0.03, 0.03, 0.03))
    for voxel, tol in ((0.002, 0.10), (0.001, 0.05)):
        iv = voxelized_intersection_volume(a, b, voxel)
        assert abs(iv - 1.0) <= tol * 1.0
    assert voxelized_intersection_volume(a, b) == voxelized_intersection_volume(b, a)


def test_iv_disjoint_and_open():
    a = box_mesh((0, 0, 0), (0.01, 0.01, 0.01))
    b = box_mesh((0.02, 0, 0), (0.03, 0.01, 0.01))
    assert voxelized_intersection_volume(a, b) == 0.0
    with pytest.raises(GeometryError, match="open mesh"):
        voxelized_intersection_volume(TriangleMesh(a.vertices, a.faces[:-1]), b)


def test_iv_self_equals_volume():
    s = icosphere(0.03, 3)
    assert voxelized_intersection_volume(s, s) == pytest.approx(s.volume() * 1e6, rel=0.1)


def test_aabb_corners_and_intersection():
    box = Aabb.of([[0, 0, 0], [1, 2, 3]])
    c = box.corners()
    assert c.shape == (8, 3)
    assert {tuple(x) for x in c} == {(x, y, z) for x in (0, 1) for y in (0, 2) for z in (0, 3)}
    assert box.intersection(Aabb.of([[5, 5, 5], [6, 6, 6]])) is None


def test_obj_roundtrip(tmp_path):
    mesh = icosphere(1.0, 1)
    save_obj(mesh, tmp_path / "m.obj")
    back = load_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_primitive_volumes():
    assert box_mesh((0, 0, 0), (1, 2, 3), 2).volume() == pytest.approx(6.0)
    assert icosphere(1.0, 4).volume() == pytest.approx(4 / 3 * np.pi, rel=0.01)
    assert cylinder_mesh(1.0, 2.0, 64, 2).volume() == pytest.approx(2 * np.pi, rel=0.01)


def test_nearest_vertex_examples():
    idx, disp = nearest_vertex([0.9, 0, 0], [[0.0, 0, 0], [1.0, 0, 0]])
    assert idx == 1
    np.testing.assert_allclose(disp, [0.1, 0, 0], atol=1e-15)
    cloud = np.random.default_rng(0).normal(size=(10, 3))
    idx, disp = nearest_vertex(cloud[4], cloud)
    assert idx == 4 and not disp.any()
    with pytest.raises(GeometryError, match="empty point cloud"):
        nearest_vertex([0, 0, 0], np.zeros((0, 3)))


def test_fps_hand_traced_and_exhaustive():
    cloud = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [9, 0, 0]])
    assert farthest_point_sampling(cloud, 3, start=0).tolist() == [0, 3, 2]
    assert sorted(farthest_point_sampling(cloud, 4).tolist()) == [0, 1, 2, 3]


def test_iv_shifted_box():
    a = box_mesh((0, 0, 0), (0.02, 0.02, 0.02))
    b = a.transformed(np.eye(3), [0.01, 0, 0])
    assert voxelized_intersection_volume(a, b) == pytest.approx(4.0, rel=0.10)
    assert voxelized_intersection_volume(a, b, 0.001) == pytest.approx(4.0, rel=0.05)


def test_distance_zero_at_vertex_and_sign(rng):
    s = icosphere(1.0, 2)
    assert point_mesh_distance(s.vertices[5], s) == pytest.approx(0.0, abs=1e-15)
    pts = rng.normal(size=(100, 3))
    d = point_mesh_distances(pts, s)
    inside = winding_inside(pts, s)
    assert np.all(d[inside] <= 0) and np.all(d[~inside] >= 0)
