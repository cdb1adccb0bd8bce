"""Segmentation metrics: IOU, MIOU, DICE and the rotation difference (RD)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .group import element, inverse, rotate


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise MetricError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


@dataclass
class MetricReport:
    iou: float
    miou: float
    dice: float
    rd_by_angle: dict[str, object] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"iou": self.iou, "miou": self.miou, "dice": self.dice, "rd": self.rd_by_angle, "flags": self.flags}


def _labels(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if not np.all(arr == np.round(arr)):
        raise MetricError(f"{name} contains non-integer labels")
    return arr.astype(np.int64)


def confusion(pred, gt) -> ConfusionCounts:
    pred, gt = _labels(pred, "pred"), _labels(gt, "gt")
    if pred.shape != gt.shape:
        raise MetricError(f"dim mismatch: {pred.shape} vs {gt.shape}")
    if not (np.isin(pred, (0, 1)).all() and np.isin(gt, (0, 1)).all()):
        raise MetricError("binary confusion needs values in {0, 1}")
    p, g = pred == 1, gt == 1
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        tn=int(np.count_nonzero(~p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
    )


def _ratio(num: int, den: int, flags: list | None, what: str) -> float:
    if den == 0:
        # only possible when the class is absent from both maps: count it as perfect
        if flags is not None:
            flags.append(f"{what}: class absent in prediction and ground truth, defined as 1.0")
        return 1.0
    return num / den


def iou(c: ConfusionCounts, flags: list | None = None) -> float:
    return _ratio(c.tp, c.tp + c.fn + c.fp, flags, "iou")


def miou(c: ConfusionCounts, flags: list | None = None) -> float:
    fg = _ratio(c.tp, c.tp + c.fn + c.fp, flags, "miou/foreground")
    bg = _ratio(c.tn, c.tn + c.fn + c.fp, flags, "miou/background")
    return (fg + bg) / 2


def dice(c: ConfusionCounts, flags: list | None = None) -> float:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, flags, "dice")


# ---- multiclass ----------------------------------------------------------------


def confusion_per_class(pred, gt, num_classes: int) -> list[ConfusionCounts]:
    pred, gt = _labels(pred, "pred"), _labels(gt, "gt")
    if pred.shape != gt.shape:
        raise MetricError(f"dim mismatch: {pred.shape} vs {gt.shape}")
    for name, a in (("pred", pred), ("gt", gt)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise MetricError(f"{name} has labels outside 0..{num_classes - 1}")
    return [confusion((pred == k).astype(np.int64), (gt == k).astype(np.int64)) for k in range(num_classes)]


def macro_iou(counts: list[ConfusionCounts], flags: list | None = None) -> float:
    return sum(iou(c, flags) for c in counts) / len(counts)


def macro_dice(counts: list[ConfusionCounts], flags: list | None = None) -> float:
    return sum(dice(c, flags) for c in counts) / len(counts)


# ---- rotation difference -----------------------------------------------------------


def rd(out_rotated_input, out_base, t) -> float:
    """Fraction of label pixels that change, after rotating the rotated-input output back by ``t``."""
    aligned = rotate(inverse(element(t)), np.asarray(out_rotated_input))
    base = np.asarray(out_base)
    if aligned.shape != base.shape:
        raise MetricError(f"dim mismatch after back-rotation: {aligned.shape} vs {base.shape}")
    return label_difference(aligned, base)


def label_difference(a, b, valid=None) -> float:
    """Share of (valid) pixels whose labels differ; spatial size is the last two axes."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise MetricError(f"dim mismatch: {a.shape} vs {b.shape}")
    diff = a != b
    if valid is None:
        return float(np.count_nonzero(diff)) / diff.size
    valid = np.broadcast_to(np.asarray(valid, dtype=bool), diff.shape)
    n = int(np.count_nonzero(valid))
    return float(np.count_nonzero(diff & valid)) / n if n else 0.0


def rd_continuous(out_rotated_input, out_base, t) -> float:
    """Non-canonical variant: mean absolute difference of raw (aligned) output maps."""
    aligned = rotate(inverse(element(t)), np.asarray(out_rotated_input, dtype=np.float64))
    base = np.asarray(out_base, dtype=np.float64)
    if aligned.shape != base.shape:
        raise MetricError(f"dim mismatch after back-rotation: {aligned.shape} vs {base.shape}")
    return float(np.mean(np.abs(aligned - base)))


def rd_arbitrary(out_rotated_input, out_base, degrees: float) -> float:
    """RD for an arbitrary input rotation.

    The rotated-input labels are rotated back by ``-degrees`` with nearest
    sampling; pixels whose source lies outside the map are excluded.
    """
    from .data import rotate_arbitrary, rotation_support

    a = np.asarray(out_rotated_input)
    aligned = rotate_arbitrary(a.astype(np.float64), -degrees, interp="nearest", fill="zero")
    valid = rotation_support(a.shape[-2:], -degrees)
    return label_difference(aligned.astype(a.dtype), np.asarray(out_base), valid)
