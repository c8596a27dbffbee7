import sys

import numpy as np
import pytest

from autolabel3d.boxes import Box3D
from autolabel3d.completion import (COMPLETE, PARTIAL, ExternalCompleter, MirrorCompleter, augment, chamfer,
                                    complete_points, completeness, hidden_point_mask, make_pair, make_partial,
                                    read_xyz, write_xyz)
from autolabel3d.synth import sample_box_surface

CAR = Box3D([0.0, 0.0, 0.75], [4.0, 1.8, 1.5], 0.0)


def _car(density=60, seed=0):
    return sample_box_surface(CAR, density=density, seed=seed)


def _chamfer_brute(a, b):
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return d.min(1).mean() + d.min(0).mean()


def test_chamfer_matches_brute_force(rng):
    for _ in range(20):
        a, b = rng.normal(size=(rng.integers(1, 40), 3)), rng.normal(size=(rng.integers(1, 40), 3))
        assert chamfer(a, b) == pytest.approx(_chamfer_brute(a, b), rel=1e-12)
    assert chamfer(a, a) == 0.0
    with pytest.raises(ValueError):
        chamfer(a, np.zeros((0, 3)))


def test_make_partial_is_an_ordered_deterministic_subset():
    pts = _car()
    part = make_partial(pts, [10.0, 0.0, 1.0], 0.5, seed=3)
    assert len(part) == len(pts) - round(0.5 * len(pts))
    rows = {tuple(p): i for i, p in enumerate(pts)}
    idx = [rows[tuple(p)] for p in part]
    assert idx == sorted(idx)
    np.testing.assert_array_equal(part, make_partial(pts, [10.0, 0.0, 1.0], 0.5, seed=3))
    np.testing.assert_array_equal(make_partial(pts, [10.0, 0.0, 1.0], 0.0), pts)


def test_partial_keeps_the_near_side():
    part = make_partial(_car(), [10.0, 0.0, 1.0], 0.5, dropout_share=0.0)
    assert (part[:, 0] > 0).mean() > 0.9


def test_hidden_point_removal_sees_front_face():
    pts = _car()
    vis = hidden_point_mask(pts, [10.0, 0.0, 0.75])
    assert (pts[vis, 0] > 1.9).mean() > 0.5
    assert not vis[pts[:, 0] < -1.99].any()


def test_make_pair_structure_points():
    pair = make_pair(_car(), [0.0, 10.0, 1.0], n_structure=64)
    assert pair.structure.shape == (64, 3)
    assert len(pair.partial) < len(pair.complete)


def test_augment_keeps_correspondence():
    pair = make_pair(_car(), [0.0, 10.0, 1.0], n_structure=32)
    aug = augment(pair, seed=4, epsilon=0.0)
    assert -np.pi / 2 <= aug.rotation <= np.pi / 2
    # a pure rotation about the centroid keeps pairwise geometry
    assert chamfer(aug.partial, aug.complete) == pytest.approx(chamfer(pair.partial, pair.complete), rel=1e-9)
    np.testing.assert_allclose(aug.complete.mean(0), pair.complete.mean(0), atol=1e-9)
    a2 = augment(pair, seed=4, epsilon=0.05)
    np.testing.assert_array_equal(a2.complete, augment(pair, seed=4, epsilon=0.05).complete)


def test_completeness_verdicts():
    full = completeness(sample_box_surface(CAR, density=200, seed=0), CAR, threshold=0.2)
    assert full.verdict == COMPLETE
    half = _car(density=200)
    half = half[half[:, 1] > 0.85]
    assert completeness(half, CAR, threshold=0.2).verdict == PARTIAL
    with pytest.raises(ValueError):
        completeness(np.zeros((0, 3)), CAR)


def test_mirror_restores_a_half_seen_side():
    pts = _car(density=100)
    seen = pts[pts[:, 1] >= 0.0]
    out = complete_points(seen, "car")
    assert out[:, 1].min() < -0.8
    assert chamfer(out, pts) < chamfer(seen, pts)


def test_mirror_skips_degenerate_input():
    line = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
    np.testing.assert_array_equal(MirrorCompleter()(line), line)
    with pytest.raises(ValueError):
        MirrorCompleter()(np.zeros((0, 3)))


def test_xyz_roundtrip(tmp_path, rng):
    pts = rng.normal(size=(10, 3))
    write_xyz(tmp_path / "a.bin", pts)
    np.testing.assert_allclose(read_xyz(tmp_path / "a.bin"), pts, atol=1e-6)


def test_external_completer(tmp_path):
    script = tmp_path / "shift.py"
    script.write_text("import sys, numpy as np\n"
                      "p = np.fromfile(sys.argv[1], '<f4').reshape(-1, 3)\n"
                      "np.vstack([p, p + 1]).astype('<f4').tofile(sys.argv[3])\n")
    out = ExternalCompleter([sys.executable, str(script)])(np.zeros((4, 3)), "car")
    assert out.shape == (8, 3) and out[4:].min() == 1.0
    bad = tmp_path / "bad.py"
    bad.write_text("import sys; sys.exit(4)\n")
    with pytest.raises(RuntimeError, match="exited 4"):
        ExternalCompleter([sys.executable, str(bad)])(np.zeros((4, 3)))
