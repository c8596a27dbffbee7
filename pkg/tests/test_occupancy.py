import numpy as np
import pytest

from autolabel3d.boxes import Box3D
from autolabel3d.geometry import rigid
from autolabel3d.occupancy import (FREE, UNLABELED_OCCUPIED, AreaAccumulator, GridConfig, GridSpec, OccupancyGrid,
                                   attach_flow, box_velocity, grid_spec_for_poses, horizontal_rect_areas,
                                   occupancy_miou, polygon_voxel_areas, read_grid, rigid_flow, voxelize, write_grid)

SPEC = GridSpec((0.0, 0.0, 0.0), 1.0, (4, 4, 2))


def test_spec_validation_and_indexing():
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), 0.0, (1, 1, 1))
    ijk, ok = SPEC.voxel_of([[0.5, 1.5, 0.5], [4.0, 0.0, 0.0], [-0.1, 0, 0]])
    assert ok.tolist() == [True, False, False]
    lin = SPEC.linear(ijk[:1])
    np.testing.assert_allclose(SPEC.centers(lin), [[0.5, 1.5, 0.5]])


def test_majority_vote_with_smallest_label_on_ties():
    pts = np.array([[0.5, 0.5, 0.5]] * 4 + [[1.5, 0.5, 0.5]] * 3 + [[2.5, 0.5, 0.5]])
    sem = np.array([3, 3, 1, 1, 2, 2, 5, -1])
    inst = np.array([0, 0, 7, 7, 4, 9, 9, 0])
    g = voxelize(pts, sem, inst, SPEC)
    assert g.n_occupied == 3
    assert g.semantic.tolist() == [1, 2, UNLABELED_OCCUPIED]
    assert g.instance.tolist() == [7, 9, 0]


def test_min_points_gate():
    pts = np.array([[0.5, 0.5, 0.5]] * 2 + [[1.5, 0.5, 0.5]])
    g = voxelize(pts, [0, 0, 0], [0, 0, 0], SPEC, min_points=2)
    assert g.n_occupied == 1


def test_dense_and_lookup():
    g = voxelize([[0.5, 0.5, 0.5], [3.5, 3.5, 1.5]], [2, 4], [0, 0], SPEC)
    d = g.dense_semantic()
    assert d[0, 0, 0] == 2 and d[3, 3, 1] == 4 and (d == FREE).sum() == SPEC.size - 2
    assert g.lookup(np.array([0, 5, g.index[1]])).tolist() == [0, -1, 1]
    assert OccupancyGrid(SPEC, 0).lookup(np.array([3])).tolist() == [-1]


def test_grid_file_roundtrip(tmp_path):
    g = voxelize([[0.5, 0.5, 0.5], [3.5, 3.5, 1.5], [1.5, 0.5, 0.5]], [2, -1, 70], [5, 0, 0], SPEC, frame_index=9)
    g.flow = np.arange(9, dtype=float).reshape(3, 3)
    write_grid(tmp_path / "g.occ", g)
    back = read_grid(tmp_path / "g.occ")
    assert back.spec == g.spec and back.frame_index == 9
    np.testing.assert_array_equal(back.index, g.index)
    np.testing.assert_array_equal(back.semantic, g.semantic)
    np.testing.assert_array_equal(back.instance, g.instance)
    np.testing.assert_allclose(back.flow, g.flow)
    (tmp_path / "bad.occ").write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_grid(tmp_path / "bad.occ")


def test_rigid_flow_of_rotation():
    f = rigid_flow([[1.0, 0, 0], [0, 2.0, 0]], np.zeros(3), [1.0, 0, 0], 0.5)
    np.testing.assert_allclose(f, [[1.0, 0.5, 0], [0.0, 0, 0]])


def test_box_velocity_wraps_heading():
    a = Box3D([0, 0, 0], [4, 2, 1], np.pi - 0.05)
    b = Box3D([1, 0, 0], [4, 2, 1], -np.pi + 0.05)
    v, w = box_velocity(a, b, 0.1)
    np.testing.assert_allclose(v, [10, 0, 0])
    assert w == pytest.approx(1.0)


def test_attach_flow_only_inside_boxes():
    g = voxelize([[0.5, 0.5, 0.5], [3.5, 3.5, 0.5]], [1, 1], [1, 0], SPEC)
    attach_flow(g, [(Box3D([0.5, 0.5, 0.5], [1.2, 1.2, 1.2], 0.0), np.array([2.0, 0, 0]), 0.0)])
    np.testing.assert_allclose(g.flow, [[2, 0, 0], [0, 0, 0]])


def test_miou():
    a = voxelize([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5]], [1, 2], [0, 0], SPEC)
    b = voxelize([[0.5, 0.5, 0.5], [2.5, 0.5, 0.5]], [1, 2], [0, 0], SPEC)
    per, m = occupancy_miou(a, b, [1, 2, 3])
    assert per == {1: 1.0, 2: 0.0} and m == 0.5
    with pytest.raises(ValueError):
        occupancy_miou(a, OccupancyGrid(GridSpec((0, 0, 0), 2.0, (1, 1, 1)), 0), [1])


def test_polygon_areas_sum_to_polygon_area():
    spec = GridSpec((0.0, 0.0, 0.0), 0.4, (20, 20, 10))
    tri = np.array([[0.1, 0.2, 0.3], [3.1, 0.7, 1.9], [1.3, 2.9, 3.5]])
    _, areas = polygon_voxel_areas(tri, spec)
    ref = 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    assert areas.sum() == pytest.approx(ref, rel=1e-9)


def test_horizontal_fast_path_matches_general():
    spec = GridSpec((0.0, 0.0, 0.0), 0.4, (20, 20, 10))
    i1, a1 = horizontal_rect_areas(0.3, 2.9, 0.5, 1.7, 0.9, spec)
    quad = np.array([[0.3, 0.5, 0.9], [2.9, 0.5, 0.9], [2.9, 1.7, 0.9], [0.3, 1.7, 0.9]])
    i2, a2 = polygon_voxel_areas(quad, spec)
    d1, d2 = dict(zip(i1.tolist(), a1)), dict(zip(i2.tolist(), a2))
    assert d1.keys() == d2.keys()
    for k in d1:
        assert d1[k] == pytest.approx(d2[k])


def test_accumulator_subtracts_and_votes_by_area():
    acc = AreaAccumulator(SPEC)
    acc.add(np.array([0, 1]), np.array([0.4, 0.3]), semantic=2)
    acc.add(np.array([0]), np.array([0.5]), semantic=3, instance=6)
    acc.add(np.array([1]), np.array([0.3]), semantic=2, sign=-1.0)
    g = acc.grid()
    assert g.index.tolist() == [0]
    assert g.semantic.tolist() == [3] and g.instance.tolist() == [6]
    assert AreaAccumulator(SPEC).grid().n_occupied == 0


def test_grid_spec_covers_trajectory():
    poses = [rigid(0.0, (x, 0.0, 1.8)) for x in (0.0, 10.0)]
    spec = grid_spec_for_poses(poses, GridConfig(voxel_size=0.5, xy_margin=5.0))
    assert spec.origin[0] <= -5.0 and spec.origin[0] + spec.dims[0] * 0.5 >= 15.0
    assert spec.origin[2] == pytest.approx(1.8 - 2.2)
