import itertools

import numpy as np
import pytest

from autolabel3d.association import (AssociationConfig, GlobalIdMap, assign_pairs, associate_frame, pair_similarity,
                                     panoramic_u, unify_sequence, view_offsets)
from autolabel3d.scene import MaskTrack2D
from autolabel3d.synth import association_scene, generate

from conftest import make_calib


def _views(n=3, width=100):
    return [make_calib(f"v{i}", yaw=-2 * np.pi * i / n, width=width, height=50, index=i) for i in range(n)]


def _m(view, iid, u, app, cat="car"):
    return MaskTrack2D(view, 0, iid, cat, [[u, 10]], (u, 10, u + 1, 11), app)


def test_config_validation():
    for bad in ({"appearance_weight": 1.5}, {"location_scale": 0.0}, {"match_threshold": -0.1}):
        with pytest.raises(ValueError):
            AssociationConfig(**bad)
    cfg = AssociationConfig().resolved(_views())
    assert cfg.panorama_width == 300 and cfg.location_scale == pytest.approx(15.0)


def test_offsets_follow_panoramic_order():
    calibs = _views()[::-1]
    assert view_offsets(calibs) == {"v0": 0.0, "v1": 100.0, "v2": 200.0}
    assert panoramic_u(_m("v1", 1, 10, [1, 0]), calibs) == pytest.approx(110.5)


def test_similarity_wraps_around_the_panorama():
    calibs = _views()
    cfg = AssociationConfig(appearance_weight=0.0)
    a = _m("v0", 1, 0, [1, 0])
    b = _m("v2", 1, 99, [1, 0])
    c = _m("v1", 1, 49, [1, 0])
    assert pair_similarity(a, b, cfg, calibs) == pytest.approx(np.exp(-1 / 15))
    assert pair_similarity(a, b, cfg, calibs) == pytest.approx(pair_similarity(b, a, cfg, calibs))
    assert pair_similarity(a, c, cfg, calibs) < pair_similarity(a, b, cfg, calibs)


def test_negative_appearance_is_clipped():
    calibs = _views()
    cfg = AssociationConfig(appearance_weight=1.0)
    assert pair_similarity(_m("v0", 1, 0, [1, 0]), _m("v1", 1, 0, [-1, 0]), cfg, calibs) == 0.0


def test_assign_pairs_respects_threshold():
    S = np.array([[0.9, 0.8], [0.85, 0.1]])
    assert assign_pairs(S, 0.5) == [(0, 1), (1, 0)]
    assert assign_pairs(S, 0.86) == [(0, 0)]
    assert assign_pairs(np.zeros((0, 3)), 0.5) == []


def test_assign_pairs_is_optimal(rng):
    for _ in range(50):
        S = rng.uniform(size=(4, 4))
        got = sum(S[r, c] for r, c in assign_pairs(S, 0.3))
        best = 0.0
        for perm in itertools.permutations(range(4)):
            best = max(best, sum(S[i, j] for i, j in enumerate(perm) if S[i, j] >= 0.3))
        assert got == pytest.approx(best)


def test_same_view_masks_never_merge():
    calibs = _views(2)
    masks = [_m("v0", 1, 99, [1, 0]), _m("v0", 2, 98, [1, 0]), _m("v1", 7, 0, [1, 0])]
    ids = associate_frame(masks, calibs, AssociationConfig())
    assert ids["v0", 1] != ids["v0", 2]
    assert len(set(ids.mapping.values())) == 2


def test_categories_must_agree():
    calibs = _views(2)
    masks = [_m("v0", 1, 99, [1, 0]), _m("v1", 1, 0, [1, 0], cat="pedestrian")]
    ids = associate_frame(masks, calibs, AssociationConfig())
    assert ids["v0", 1] != ids["v1", 1]


def test_frame_association_ignores_mask_order(rng):
    bundle, _ = generate(association_scene(seed=3))
    calibs = bundle.calib_by_view
    masks = bundle.masks_of_frame(0)
    ref = associate_frame(masks, calibs, AssociationConfig())
    for _ in range(5):
        shuffled = [masks[i] for i in rng.permutation(len(masks))]
        got = associate_frame(shuffled, calibs, AssociationConfig())
        assert got.mapping == ref.mapping


def test_id_map_json_roundtrip():
    ids = GlobalIdMap({("v0", 1): 1, ("v1", 3): 1, ("v1", 4): 2}, {(("v0", 1), ("v1", 3)): 0.9})
    back = GlobalIdMap.from_json(ids.to_json())
    assert back.mapping == ids.mapping and back.scores == ids.scores
    assert ids.groups() == {1: [("v0", 1), ("v1", 3)], 2: [("v1", 4)]}
    assert ids.get("v9", 1, -1) == -1


def test_sequence_ids_cover_every_track():
    bundle, _ = generate(association_scene(seed=5))
    ids = unify_sequence(bundle, AssociationConfig())
    keys = {(m.view_id, m.instance_id) for m in bundle.mask_tracks if m.is_thing}
    assert set(ids.mapping) == keys
    for members in ids.groups().values():
        views = [v for v, _ in members]
        assert len(views) == len(set(views))
