"""Training and evaluation on the synthetic shapes task."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import autodiff as ad
from .data import Sample, gen_shapes, rotate_arbitrary
from .group import rotate
from .layers import CONV_TYPES, NetConfig, PrecmNet, build_net, forward, save_params
from .metrics import (
    ConfusionCounts,
    confusion_per_class,
    dice,
    iou,
    label_difference,
    rd,
    rd_arbitrary,
)

log = logging.getLogger(__name__)

_PAIR = {"oneOf": [{"type": "integer", "minimum": 1},
                   {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2}]}

NET_SCHEMA = {
    "type": "object",
    "required": ["layers"],
    "additionalProperties": False,
    "properties": {
        "layers": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["type"],
                "additionalProperties": False,
                "properties": {
                    "type": {"enum": ["precm1", "precm2", "precm3", "relu", "sigmoid"]},
                    "kernel": _PAIR,
                    "stride": _PAIR,
                    "dilation": _PAIR,
                    "channels": {"type": ["integer", "null"], "minimum": 1},
                    "bias": {"type": "boolean"},
                },
            },
        },
        "in_channels": {"type": "integer", "minimum": 1},
        "flavor": {"enum": ["precm", "baseline"]},
        "seed": {"type": "integer"},
        "dtype": {"enum": ["f32", "f64"]},
    },
}

RUN_SCHEMA = {
    "type": "object",
    "required": ["net", "data", "train"],
    "additionalProperties": False,
    "properties": {
        "net": NET_SCHEMA,
        "data": {
            "type": "object",
            "required": ["seed", "count", "size", "classes"],
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer"},
                "count": {"type": "integer", "minimum": 0},
                "size": {"type": "integer", "minimum": 16},
                "classes": {"type": "integer", "minimum": 2, "maximum": 10},
            },
        },
        "train": {
            "type": "object",
            "required": ["epochs", "lr", "momentum", "batch", "seed"],
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "minimum": 0},
                "momentum": {"type": "number", "minimum": 0, "maximum": 1},
                "batch": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "angles": {"type": "array", "items": {"type": "number"}},
                "random_angle_count": {"type": "integer", "minimum": 0},
            },
        },
    },
}

_NUM = {"type": "number", "minimum": 0, "maximum": 1}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["iou", "miou", "dice", "rd", "flags"],
    "additionalProperties": False,
    "properties": {
        "iou": _NUM,
        "miou": _NUM,
        "dice": _NUM,
        "rd": {
            "type": "object",
            "required": ["random"],
            "properties": {
                "random": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["angle", "rd"],
                        "additionalProperties": False,
                        "properties": {"angle": {"type": "number"}, "rd": _NUM},
                    },
                },
            },
            "additionalProperties": _NUM,
        },
        "flags": {"type": "array", "items": {"type": "string"}},
    },
}


class SchemaError(ValueError):
    pass


def validate(doc: dict, schema: dict, what: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaError(f"{what}: {path}: {e.message}") from None


@dataclass
class RunConfig:
    net: NetConfig
    data: dict
    train: dict
    eval: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        validate(doc, RUN_SCHEMA, "run config")
        ev = {"angles": [90, 180, 270], "random_angle_count": 0}
        ev.update(doc.get("eval", {}))
        return cls(NetConfig.from_dict(doc["net"]), dict(doc["data"]), dict(doc["train"]), ev)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def output_channels(cfg: NetConfig) -> int:
    return [layer for layer in cfg.layers if layer.type in CONV_TYPES][-1].channels


def check_classes(cfg: NetConfig, num_classes: int) -> None:
    want = 1 if num_classes == 2 else num_classes
    if output_channels(cfg) != want:
        raise SchemaError(
            f"network emits {output_channels(cfg)} channels; {num_classes} classes need {want}"
        )


def targets(masks: np.ndarray, num_classes: int, dtype) -> np.ndarray:
    """Binary tasks train one sigmoid channel; K > 2 classes train K one-vs-rest channels."""
    if num_classes == 2:
        return masks.astype(dtype)
    return (masks == np.arange(num_classes)[None, :, None, None]).astype(dtype)


def predict_labels(logits: np.ndarray) -> np.ndarray:
    """(B, 1, H, W) label maps: logit > 0 for one channel, channel argmax otherwise."""
    if logits.shape[1] == 1:
        return (logits > 0).astype(np.int64)
    return np.argmax(logits, axis=1)[:, None].astype(np.int64)


def stack(samples: list[Sample], dtype) -> tuple[np.ndarray, np.ndarray]:
    x = np.concatenate([s.image for s in samples]).astype(dtype)
    y = np.concatenate([s.mask for s in samples])
    return x, y


def loss_and_grads(net: PrecmNet, x: np.ndarray, y: np.ndarray):
    tape = ad.Tape()
    P = {k: tape.var(v) for k, v in net.params.items()}
    loss = ad.bce_loss(ad.sigmoid(forward(net, x, P)), y)
    grads = ad.backward(tape, loss)
    return float(loss.value), {k: ad.grad_of(grads, v) for k, v in P.items()}


def train(net: PrecmNet, samples: list[Sample], num_classes: int, epochs: int, lr: float,
          momentum: float = 0.9, batch: int = 4, seed: int = 0) -> list[float]:
    """Momentum SGD on mean BCE; mutates ``net.params`` and returns per-epoch mean loss."""
    check_classes(net.config, num_classes)
    dtype = net.config.np_dtype
    x_all, m_all = stack(samples, dtype) if samples else (None, None)
    y_all = targets(m_all, num_classes, dtype) if samples else None
    rng = np.random.default_rng(seed)
    velocity: dict = {}
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), batch):
            idx = np.sort(order[start : start + batch])
            loss, grads = loss_and_grads(net, x_all[idx], y_all[idx])
            net.params, velocity = ad.sgd_step(net.params, grads, lr, momentum, velocity)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else float("nan"))
        log.info("epoch %d loss %.6f", epoch + 1, history[-1])
    return history


def write_training(out_dir, net: PrecmNet, history: list[float]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,loss"] + [f"{i + 1},{v!r}" for i, v in enumerate(history)]
    (out_dir / "loss.csv").write_text("\n".join(lines) + "\n")
    save_params(net, out_dir)


def run_training(cfg: RunConfig, out_dir) -> list[float]:
    d, t = cfg.data, cfg.train
    net = build_net(cfg.net)
    check_classes(net.config, d["classes"])
    samples = gen_shapes(d["seed"], d["count"], d["size"], d["classes"])
    history = train(net, samples, d["classes"], t["epochs"], t["lr"], t["momentum"], t["batch"], t["seed"])
    write_training(out_dir, net, history)
    return history


# ---- evaluation ---------------------------------------------------------------------


def predict(net: PrecmNet, x: np.ndarray, batch: int = 8) -> np.ndarray:
    x = x.astype(net.config.np_dtype)
    outs = [predict_labels(forward(net, x[i : i + batch])) for i in range(0, len(x), batch)]
    return np.concatenate(outs)


def rd_at_angle(net: PrecmNet, x: np.ndarray, base_labels: np.ndarray, degrees: float) -> float:
    """Mean RD over samples when every input is rotated by ``degrees``."""
    if float(degrees) % 90 == 0:
        t = int(degrees // 90) % 4
        rot = predict(net, rotate(t, x))
        return float(np.mean([rd(rot[i], base_labels[i], t) for i in range(len(x))]))
    xr = rotate_arbitrary(x, degrees, interp="bilinear", fill="symmetric")
    rot = predict(net, xr)
    return float(np.mean([rd_arbitrary(rot[i], base_labels[i], degrees) for i in range(len(x))]))


def angle_key(degrees: float) -> str:
    return str(int(degrees)) if float(degrees).is_integer() else repr(float(degrees))


def evaluate(net: PrecmNet, samples: list[Sample], num_classes: int, angles=(90, 180, 270),
             random_angles: int = 0, seed: int = 0) -> dict:
    """Report JSON: pooled IOU/MIOU/DICE at 0 degrees plus RD per requested angle."""
    flags: list[str] = []
    if not samples:
        report = {"iou": 1.0, "miou": 1.0, "dice": 1.0, "rd": {angle_key(a): 0.0 for a in angles}, "flags": []}
        report["rd"]["random"] = []
        report["flags"].append("empty dataset: metrics defined as 1.0 and RD as 0.0")
        return report
    x, masks = stack(samples, net.config.np_dtype)
    labels = predict(net, x)
    counts = confusion_per_class(labels, masks, num_classes)
    fg = counts[1:]
    report = {
        "iou": sum(iou(c, flags) for c in fg) / len(fg),
        "miou": sum(iou(c, flags) for c in counts) / len(counts),
        "dice": sum(dice(c, flags) for c in fg) / len(fg),
        "rd": {},
        "flags": flags,
    }
    for a in angles:
        report["rd"][angle_key(a)] = rd_at_angle(net, x, labels, a)
    rng = np.random.default_rng(seed)
    report["rd"]["random"] = []
    for a in rng.uniform(0.0, 360.0, random_angles):
        a = round(float(a), 3)
        report["rd"]["random"].append({"angle": a, "rd": rd_at_angle(net, x, labels, a)})
    validate(report, REPORT_SCHEMA, "report")
    return report


__all__ = [
    "ConfusionCounts",
    "RunConfig",
    "evaluate",
    "label_difference",
    "run_training",
    "train",
]
