import numpy as np
import pytest

from autolabel3d.boxes import Box3D
from autolabel3d.evaluation import (BEV_DISTANCE, IOU, Detection, MatchSpec, average_precision, bin_of,
                                    detection_report, fov_filter, interpolated_ap, match_detections, merge_labels,
                                    range_breakdown, recall_avg, segmentation_miou)

from conftest import make_calib


def _det(frame, x, y=0.0, cat="car", conf=1.0):
    return Detection(frame, cat, Box3D([x, y, 0.75], [4.0, 1.8, 1.5], 0.0), conf)


def test_spec_validation():
    with pytest.raises(ValueError):
        MatchSpec(criterion="chamfer")
    with pytest.raises(ValueError):
        MatchSpec(distance_thresholds=(1.0, 0.5))
    with pytest.raises(ValueError):
        MatchSpec(range_bins=(0.0, 30.0, 30.0))
    spec = MatchSpec()
    assert spec.iou_threshold("Car") == 0.7 and spec.iou_threshold("dog") == 0.5
    assert spec.bins()[-1] == (50.0, np.inf)


def test_interpolated_ap_by_hand():
    # precisions 1, 1/2, 2/3 at recalls 1/2, 1/2, 1: envelope 1 up to r = 0.5, then 2/3
    assert interpolated_ap([True, False, True], 2) == pytest.approx((51 + 50 * 2 / 3) / 101)
    assert interpolated_ap([True, True], 2) == pytest.approx(1.0)
    assert interpolated_ap([], 3) == 0.0
    assert np.isnan(interpolated_ap([True], 0))


def test_greedy_matching_prefers_closest_pair():
    spec = MatchSpec(distance_thresholds=(1.0,))
    preds = [_det(0, 0.6), _det(0, 0.1)]
    truths = [_det(0, 0.0)]
    res = match_detections(preds, truths, spec)
    assert res.pairs == [(1, 0, pytest.approx(0.1))]
    assert (res.tp, res.fp, res.fn) == (1, 1, 0)


def test_matching_respects_frame_and_class():
    spec = MatchSpec(distance_thresholds=(1.0,))
    res = match_detections([_det(1, 0.0), _det(0, 0.0, cat="bus")], [_det(0, 0.0)], spec)
    assert res.tp == 0 and res.fn == 1 and res.fp == 2


def test_iou_matching_uses_class_threshold():
    spec = MatchSpec(criterion=IOU)
    shifted = _det(0, 0.8)  # IoU (3.2/4.8) = 2/3 below 0.7 for cars
    assert match_detections([shifted], [_det(0, 0.0)], spec).tp == 0
    ped = Detection(0, "pedestrian", Box3D([0.05, 0, 0.9], [0.6, 0.6, 1.8], 0.0))
    truth = Detection(0, "pedestrian", Box3D([0, 0, 0.9], [0.6, 0.6, 1.8], 0.0))
    assert match_detections([ped], [truth], spec).tp == 1


def test_recall_avg_per_threshold():
    spec = MatchSpec(distance_thresholds=(0.5, 1.0, 2.0, 4.0))
    truths = [_det(f, 0.0) for f in range(4)]
    preds = [_det(0, 0.3), _det(1, 0.8), _det(2, 1.5), _det(3, 3.0)]
    rec = recall_avg(preds, truths, spec)
    assert rec["car"][1] == [0.25, 0.5, 0.75, 1.0]
    assert rec["car"][0] == pytest.approx(0.625)
    with pytest.raises(ValueError):
        recall_avg(preds, truths, MatchSpec(criterion=IOU))


def test_ap_orders_by_confidence():
    spec = MatchSpec(distance_thresholds=(1.0,))
    truths = [_det(0, 0.0)]
    good_first = average_precision([_det(0, 0.1, conf=0.9), _det(0, 5.0, conf=0.1)], truths, spec)
    bad_first = average_precision([_det(0, 0.1, conf=0.1), _det(0, 5.0, conf=0.9)], truths, spec)
    assert good_first["car"] == pytest.approx(1.0)
    assert bad_first["car"] == pytest.approx(0.5)


def test_range_bins():
    spec = MatchSpec(distance_thresholds=(1.0,), range_bins=(0.0, 30.0))
    truths = [_det(0, 10.0), _det(0, 40.0)]
    out = range_breakdown([_det(0, 10.2)], truths, spec)
    assert out[(0.0, 30.0)]["car"] == 1.0 and out[(30.0, np.inf)]["car"] == 0.0
    assert bin_of(30.0, spec.bins()) == (30.0, np.inf)
    assert bin_of(-1.0, spec.bins()) is None


def test_fov_filter():
    calibs = [make_calib()]
    dets = [_det(0, 10.0), _det(0, -10.0)]
    assert fov_filter(dets, calibs) == dets[:1]
    with pytest.raises(ValueError):
        fov_filter(dets, None)
    spec = MatchSpec(distance_thresholds=(1.0,), fov_mask=True)
    assert match_detections(dets, dets, spec, calibs=calibs).tp == 1


def test_merge_labels_and_miou():
    vocab = ["road", "car", "truck", "pedestrian"]
    merged, new_vocab = merge_labels([0, 1, 2, 3, -1], vocab)
    assert new_vocab == ["road", "vehicle", "pedestrian"]
    assert merged.tolist() == [0, 1, 1, 2, -1]
    per, m = segmentation_miou(np.array([0, 1, 1, 2]), np.array([0, 1, 2, 2]), [0, 1, 2, 5])
    assert per == {0: 1.0, 1: 0.5, 2: 0.5} and m == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        segmentation_miou(np.zeros(2), np.zeros(3), [0])


def test_report_mentions_every_class():
    truths = [_det(0, 0.0), Detection(0, "pedestrian", Box3D([5, 5, 0.9], [0.6, 0.6, 1.8], 0.0))]
    text = detection_report([_det(0, 0.2)], truths, MatchSpec(criterion=BEV_DISTANCE))
    assert "car" in text and "pedestrian" in text
