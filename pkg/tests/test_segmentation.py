import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autolabel3d.scene import MaskTrack2D, PointCloudFrame, tight_box
from autolabel3d.segmentation import (UNLABELED, LabeledPointSet, ParallaxConfig, assign_by_projection, dbscan,
                                      denoise_instances, filter_scene, parallax_filter, read_labels, write_labels)

from conftest import make_calib


def _mask(view, iid, cat, u0, v0, u1, v1):
    uu, vv = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
    px = np.column_stack([uu.ravel(), vv.ravel()])
    return MaskTrack2D(view, 0, iid, cat, px, tight_box(px), [1.0, 0.0])


def test_config_validation():
    with pytest.raises(ValueError):
        ParallaxConfig(kernel_size=0)
    with pytest.raises(ValueError):
        ParallaxConfig(depth_ratio_threshold=0)
    assert ParallaxConfig().rect_width == 15.0
    assert ParallaxConfig(pseudo_width=4).rect_width == 4.0


def test_far_points_below_near_points_are_rejected():
    # near object in the top rows, a far wall seen through the lower part of the window
    near = np.array([[u, v] for u in range(0, 20, 2) for v in range(0, 6, 2)], dtype=float)
    far = np.array([[u + 1, v] for u in range(0, 20, 2) for v in range(6, 14, 2)], dtype=float)
    uv = np.vstack([near, far])
    depth = np.r_[np.full(len(near), 10.0), np.full(len(far), 30.0)]
    kept, rej = parallax_filter(uv, depth, ParallaxConfig())
    assert set(rej.tolist()) <= set(range(len(near), len(uv)))
    assert len(rej) > 0.8 * len(far)
    assert set(range(len(near))) <= set(kept.tolist())


def test_uniform_depth_is_untouched(rng):
    uv = rng.uniform(0, 50, size=(200, 2))
    depth = 10 + rng.uniform(0, 2, 200)  # spread below the ratio threshold
    kept, rej = parallax_filter(uv, depth, ParallaxConfig())
    assert len(rej) == 0 and len(kept) == 200


def test_far_points_above_near_points_survive():
    near = np.array([[u, v] for u in range(0, 14, 2) for v in range(8, 14, 2)], dtype=float)
    far = np.array([[u, v] for u in range(0, 14, 2) for v in range(0, 6, 2)], dtype=float)
    uv = np.vstack([near, far])
    depth = np.r_[np.full(len(near), 10.0), np.full(len(far), 30.0)]
    _, rej = parallax_filter(uv, depth, ParallaxConfig())
    assert len(rej) == 0


def test_degenerate_inputs():
    kept, rej = parallax_filter(np.zeros((1, 2)), [5.0], ParallaxConfig())
    assert kept.tolist() == [0] and len(rej) == 0


def _two_point_frame():
    calib = make_calib(width=200, height=100, f=100.0)
    pts = np.array([[10.0, 0.0, -0.5], [20.0, 0.0, -0.5], [10.0, 3.0, -0.5]])
    return calib, PointCloudFrame(0, 0.0, pts)


def test_projection_prefers_nearest_foreground():
    calib, frame = _two_point_frame()
    car = _mask("cam0", 1, "car", 90, 40, 110, 60)
    road = _mask("cam0", None, "road", 0, 0, 200, 100)
    out = assign_by_projection(frame, [calib], [road, car], None, ["road", "car"])
    assert out.semantic.tolist() == [1, 1, 0]
    assert out.instance.tolist() == [1, 1, 0]
    np.testing.assert_allclose(out.depth, [10.0, 20.0, 10.0])


def test_filter_scene_falls_back_to_background():
    calib = make_calib(width=200, height=100, f=100.0)
    # car band in front, wall behind it visible just below the car in the same window
    car_pts = [[10.0, y, z] for y in np.linspace(-0.3, 0.3, 7) for z in (-0.40, -0.45, -0.5)]
    wall_pts = [[30.0, y, z] for y in np.linspace(-0.9, 0.9, 7) for z in (-1.2, -1.4)]
    frame = PointCloudFrame(0, 0.0, np.array(car_pts + wall_pts))
    car = _mask("cam0", 1, "car", 90, 40, 110, 80)
    wall = _mask("cam0", None, "building", 0, 0, 200, 100)
    raw = assign_by_projection(frame, [calib], [wall, car], None, ["building", "car"])
    assert (raw.instance[len(car_pts):] == 1).any()
    out = filter_scene(raw, None, ParallaxConfig())
    assert (out.instance[:len(car_pts)] == 1).all()
    back = out.instance[len(car_pts):] == 0
    assert back.any()
    assert (out.semantic[len(car_pts):][back] == 0).all()


def test_dbscan_small_cases():
    pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [5, 5, 5]])
    assert dbscan(pts, 0.15, 2).tolist() == [0, 0, 0, -1]
    assert dbscan(np.zeros((0, 3)), 1.0, 1).tolist() == []
    with pytest.raises(ValueError):
        dbscan(pts, 0, 2)


def test_dbscan_is_permutation_equivariant(rng):
    pts = np.vstack([rng.normal(0, 0.2, (40, 3)), rng.normal(4, 0.2, (40, 3)), rng.uniform(-8, 8, (5, 3))])
    a = dbscan(pts, 0.5, 5)
    perm = rng.permutation(len(pts))
    b = dbscan(pts[perm], 0.5, 5)
    # same partition up to cluster renaming
    pairs = {(x, y) for x, y in zip(a[perm], b)}
    assert len(pairs) == len(set(a))


def test_denoise_keeps_largest_cluster(rng):
    pts = np.vstack([rng.normal(0, 0.1, (50, 3)), rng.normal(3, 0.1, (10, 3))])
    ls = LabeledPointSet.unlabeled(pts, ["car"])
    ls.semantic[:] = 0
    ls.instance[:] = 7
    out = denoise_instances(ls, eps=0.5, min_pts=3)
    assert (out.instance[:50] == 7).all()
    assert (out.instance[50:] == 0).all() and (out.semantic[50:] == UNLABELED).all()
    assert (ls.instance == 7).all()  # input untouched


def test_label_file_roundtrip(tmp_path, rng):
    ls = LabeledPointSet.unlabeled(rng.normal(size=(20, 3)), ["road", "car"])
    ls.semantic[[1, 4, 9]] = [0, 1, 1]
    ls.instance[[4, 9]] = [3, 70000]
    write_labels(tmp_path / "l.bin", ls)
    sem, inst = read_labels(tmp_path / "l.bin", 20)
    np.testing.assert_array_equal(sem, ls.semantic)
    np.testing.assert_array_equal(inst, ls.instance)
    with pytest.raises(ValueError):
        read_labels(tmp_path / "l.bin", 5)


@settings(max_examples=60, deadline=None)
@given(st.floats(3.0, 30.0), st.floats(1.05, 4.0), st.integers(0, 2 ** 31 - 1))
def test_rejection_shrinks_as_threshold_grows_on_two_layers(near_depth, ratio, seed):
    # near layer on top, far layer below it, 1% depth jitter inside each. Thresholds
    # that cut through a layer's jitter band are skipped: there part of the far
    # layer turns near and widens the rectangle, so the count can rise.
    rng = np.random.default_rng(seed)
    near = np.column_stack([rng.uniform(0, 40, 60), rng.uniform(0, 12, 60)])
    far = np.column_stack([rng.uniform(0, 40, 60), rng.uniform(12, 30, 60)])
    uv = np.vstack([near, far])
    depth = np.r_[near_depth * rng.uniform(1.0, 1.01, 60), near_depth * ratio * rng.uniform(1.0, 1.01, 60)]
    thetas = [t for t in (0.02, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0) if not ratio / 1.0102 <= 1 + t <= ratio * 1.0102]
    counts = [len(parallax_filter(uv, depth, ParallaxConfig(depth_ratio_threshold=t))[1]) for t in thetas]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
