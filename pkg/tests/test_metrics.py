import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from precm.group import rotate
from precm.metrics import (
    ConfusionCounts,
    MetricError,
    confusion,
    confusion_per_class,
    dice,
    iou,
    label_difference,
    macro_iou,
    miou,
    rd,
    rd_arbitrary,
    rd_continuous,
)


def test_confusion_examples():
    ones = np.ones((4, 4), int)
    assert confusion(ones, ones) == ConfusionCounts(tp=16)
    c = confusion(1 - ones, ones)
    assert c.tp == c.tn == 0 and c.fn == 16


def test_confusion_matches_loop():
    rng = np.random.default_rng(0)
    p, g = rng.integers(0, 2, (16, 16)), rng.integers(0, 2, (16, 16))
    tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for a, b in zip(p.ravel(), g.ravel()):
        tally[{(1, 1): "tp", (1, 0): "fp", (0, 0): "tn", (0, 1): "fn"}[(a, b)]] += 1
    c = confusion(p, g)
    assert c == ConfusionCounts(**tally) and c.total == 256


def test_confusion_validation():
    with pytest.raises(MetricError):
        confusion(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(MetricError):
        confusion(np.full((2, 2), 2), np.zeros((2, 2)))
    with pytest.raises(MetricError):
        ConfusionCounts(tp=-1)


def test_metric_spot_values():
    c = ConfusionCounts(1, 1, 1, 1)
    assert iou(c) == 1 / 3 and dice(c) == 1 / 2 and miou(c) == 1 / 3
    perfect = confusion(np.eye(3, dtype=int), np.eye(3, dtype=int))
    assert iou(perfect) == miou(perfect) == dice(perfect) == 1


def test_empty_class_is_flagged():
    flags = []
    assert iou(ConfusionCounts(tn=9), flags) == 1.0
    assert dice(ConfusionCounts(tn=9), flags) == 1.0
    assert len(flags) == 2


counts = st.builds(ConfusionCounts, *[st.integers(0, 10**6)] * 4)


@given(counts)
def test_dice_iou_identity(c):
    if c.tp + c.fp + c.fn == 0:
        return
    i, d = iou(c), dice(c)
    assert math.isclose(d, 2 * i / (1 + i), rel_tol=1e-12, abs_tol=1e-15)


def test_multiclass():
    rng = np.random.default_rng(1)
    onehot = rng.integers(0, 3, (8, 8))
    assert macro_iou(confusion_per_class(onehot, onehot, 3)) == 1.0
    p, g = rng.integers(0, 3, (16, 16)), rng.integers(0, 3, (16, 16))
    per = confusion_per_class(p, g, 3)
    for k, c in enumerate(per):
        assert c.tp == np.sum((p == k) & (g == k)) and c.fp == np.sum((p == k) & (g != k))
        assert c.fn == np.sum((p != k) & (g == k)) and c.total == 256
    b = rng.integers(0, 2, (6, 6))
    assert confusion_per_class(b, 1 - b, 2)[1] == confusion(b, 1 - b)
    with pytest.raises(MetricError):
        confusion_per_class(np.full((2, 2), 3), np.zeros((2, 2)), 3)


def test_rd_examples():
    rng = np.random.default_rng(2)
    a = rng.integers(0, 2, (1, 9, 9))
    assert rd(a, a, 0) == 0.0
    assert label_difference(a, 1 - a) == 1.0
    for t in range(4):
        assert rd(rotate(t, a), a, t) == 0.0
    assert rd_continuous(rotate(1, a), a, 1) == 0.0


@given(st.integers(0, 1000), st.integers(0, 3))
def test_rd_range(seed, t):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 3, (1, 7, 7)), rng.integers(0, 3, (1, 7, 7))
    assert 0.0 <= rd(a, b, t) <= 1.0


def test_rd_arbitrary_masks_outside():
    a = np.random.default_rng(3).integers(0, 2, (1, 16, 16))
    v = rd_arbitrary(a, a, 30.0)
    assert 0.0 <= v <= 1.0
    assert rd_arbitrary(rotate(1, a), a, 90.0) == 0.0
