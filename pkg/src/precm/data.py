"""Synthetic segmentation data, arbitrary-angle rotation and PGM dataset I/O."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


@dataclass
class Sample:
    image: np.ndarray  # (1, C, H, W) float32 in [0, 1]
    mask: np.ndarray  # (1, 1, H, W) int64 labels
    id: str

    def __post_init__(self):
        if self.image.ndim != 4 or self.mask.ndim != 4:
            raise ValueError("image and mask must be 4-axis tensors")
        if self.image.shape[-2:] != self.mask.shape[-2:]:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} differ spatially")


# ---- generation ------------------------------------------------------------------


def _grid(size: int):
    return np.mgrid[0:size, 0:size].astype(np.float64)


def _stripes(yy, xx, angle: float, period: float, phase: float) -> np.ndarray:
    return np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase)


def _ellipse(rng, yy, xx, size):
    cy, cx = rng.uniform(0.15, 0.85, 2) * size
    a, b = rng.uniform(size / 12, size / 4, 2)
    th = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(th) + dy * np.sin(th)
    v = -dx * np.sin(th) + dy * np.cos(th)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _rectangle(rng, yy, xx, size):
    cy, cx = rng.uniform(0.15, 0.85, 2) * size
    hw, hh = rng.uniform(size / 14, size / 5, 2)
    th = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(th) + dy * np.sin(th)
    v = -dx * np.sin(th) + dy * np.cos(th)
    return (np.abs(u) <= hw) & (np.abs(v) <= hh)


def _polyline(rng, yy, xx, size):
    """1-px wide open polyline, a stand-in for thin vessel-like branches."""
    out = np.zeros(yy.shape, dtype=bool)
    pts = rng.uniform(0.05, 0.95, (int(rng.integers(3, 6)), 2)) * (size - 1)
    for (y0, x0), (y1, x1) in zip(pts[:-1], pts[1:]):
        n = int(math.ceil(max(abs(y1 - y0), abs(x1 - x0)))) + 1
        ys = np.rint(np.linspace(y0, y1, n)).astype(int)
        xs = np.rint(np.linspace(x0, x1, n)).astype(int)
        out[ys, xs] = True
    return out


_SHAPES = (_ellipse, _rectangle, _polyline)


def _one_sample(rng: np.random.Generator, size: int, num_classes: int):
    yy, xx = _grid(size)
    mask = np.zeros((size, size), dtype=np.int64)
    image = 0.25 + 0.08 * _stripes(yy, xx, rng.uniform(0, np.pi), rng.uniform(3, 7), rng.uniform(0, 2 * np.pi))
    for k in range(1, num_classes):
        level = 0.35 + 0.6 * k / (num_classes - 1)
        # texture orientation is tied to the class, so a rotated scene looks different
        angle = np.pi * k / num_classes
        for _ in range(int(rng.integers(1, 3))):
            region = _SHAPES[int(rng.integers(len(_SHAPES)))](rng, yy, xx, size)
            mask[region] = k
            tex = level + 0.1 * _stripes(yy, xx, angle, 4.0, rng.uniform(0, 2 * np.pi))
            image[region] = tex[region]
    image = image + rng.normal(0, 0.02, image.shape)
    return np.clip(image, 0.0, 1.0), mask


def _balanced(mask: np.ndarray, num_classes: int) -> bool:
    freq = np.bincount(mask.reshape(-1), minlength=num_classes) / mask.size
    return bool(np.all((freq > 0.01) & (freq < 0.99)))


def gen_shapes(seed: int, count: int, size: int = 64, num_classes: int = 2) -> list[Sample]:
    """Reproducible images of textured ellipses, rectangles and thin polylines with masks.

    Each sample draws from its own ``(seed, index)`` stream and is redrawn until
    every class covers more than 1% and less than 99% of the pixels.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if not 2 <= num_classes <= 10:
        raise ValueError(f"num_classes must be in 2..10, got {num_classes}")
    samples = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        for _ in range(1000):
            image, mask = _one_sample(rng, size, num_classes)
            if _balanced(mask, num_classes):
                break
        else:  # pragma: no cover - never observed for the supported sizes
            raise RuntimeError(f"could not draw a balanced sample {i}")
        samples.append(Sample(image[None, None].astype(np.float32), mask[None, None], f"s{i:05d}"))
    return samples


# ---- arbitrary-angle rotation --------------------------------------------------------


def _cos_sin(degrees: float) -> tuple[float, float]:
    if float(degrees) % 90 == 0:
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[int(degrees // 90) % 4]
    r = math.radians(degrees)
    return math.cos(r), math.sin(r)


def _source_coords(shape, degrees: float):
    h, w = shape
    c, s = _cos_sin(degrees)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map of a counterclockwise rotation in (row-down) image coordinates
    return cy + c * dy + s * dx, cx - s * dy + c * dx


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    """Symmetric (edge-repeating) reflection of integer indices into 0..n-1."""
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def _gather(x: np.ndarray, iy: np.ndarray, ix: np.ndarray, fill: str):
    h, w = x.shape[-2:]
    if fill == "symmetric":
        return x[..., _reflect(iy, h), _reflect(ix, w)]
    inside = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    vals = x[..., np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    return np.where(inside, vals, 0)


def rotate_arbitrary(x: np.ndarray, degrees: float, interp: str = "bilinear", fill: str = "symmetric") -> np.ndarray:
    """Rotate the last two axes CCW by ``degrees`` about the centre, keeping dims."""
    if interp not in ("nearest", "bilinear"):
        raise ValueError(f"unknown interpolation {interp!r}")
    if fill not in ("symmetric", "zero"):
        raise ValueError(f"unknown fill {fill!r}")
    x = np.asarray(x)
    if float(degrees) % 360 == 0:
        return x.copy()
    sy, sx = _source_coords(x.shape[-2:], degrees)
    if interp == "nearest":
        return _gather(x, np.floor(sy + 0.5).astype(int), np.floor(sx + 0.5).astype(int), fill).astype(x.dtype)
    y0, x0 = np.floor(sy).astype(int), np.floor(sx).astype(int)
    fy, fx = sy - y0, sx - x0
    out = (
        _gather(x, y0, x0, fill) * (1 - fy) * (1 - fx)
        + _gather(x, y0, x0 + 1, fill) * (1 - fy) * fx
        + _gather(x, y0 + 1, x0, fill) * fy * (1 - fx)
        + _gather(x, y0 + 1, x0 + 1, fill) * fy * fx
    )
    return out.astype(x.dtype)


def rotation_support(shape, degrees: float) -> np.ndarray:
    """Output pixels whose nearest source pixel lies inside the original map."""
    h, w = shape
    sy, sx = _source_coords((h, w), degrees)
    iy, ix = np.floor(sy + 0.5), np.floor(sx + 0.5)
    return (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)


# ---- PGM and dataset files -------------------------------------------------------------

_PGM_HEADER = re.compile(rb"\A(P\d)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def save_pgm(path, values: np.ndarray) -> None:
    """Write a 2-D array of integers 0..255 as binary (P5) 8-bit PGM."""
    values = np.asarray(values)
    if values.ndim != 2:
        values = values.reshape(values.shape[-2:])
    if values.size and (values.min() < 0 or values.max() > 255):
        raise FormatError("PGM values must lie in 0..255")
    h, w = values.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + values.astype(np.uint8).tobytes())


def load_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise FormatError(f"{path}: malformed PGM header")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if magic != b"P5":
        raise FormatError(f"{path}: unsupported PGM variant {magic.decode()} (only binary P5)")
    if not 0 < maxval <= 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    payload = raw[m.end():]
    if len(payload) < w * h:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {w * h} bytes)")
    return np.frombuffer(payload[: w * h], dtype=np.uint8).reshape(h, w).copy()


def save_sample(root, sample: Sample) -> None:
    root = Path(root)
    if sample.mask.max() > 255 or sample.mask.min() < 0:
        raise FormatError("mask labels must fit in 0..255")
    img = np.rint(np.clip(sample.image[0, 0], 0, 1) * 255).astype(np.uint8)
    save_pgm(root / f"{sample.id}.img.pgm", img)
    save_pgm(root / f"{sample.id}.mask.pgm", sample.mask[0, 0])


def load_sample(root, sample_id: str) -> Sample:
    root = Path(root)
    img = load_pgm(root / f"{sample_id}.img.pgm").astype(np.float32) / 255
    mask = load_pgm(root / f"{sample_id}.mask.pgm").astype(np.int64)
    return Sample(img[None, None], mask[None, None], sample_id)


def write_dataset(root, samples: list[Sample], seed: int, size: int, num_classes: int) -> None:
    """Write every sample, then ``manifest.json`` last as the completion marker."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for s in samples:
        save_sample(root, s)
    manifest = {"ids": [s.id for s in samples], "seed": seed, "size": size, "num_classes": num_classes}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(root) -> tuple[list[Sample], dict]:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    samples = [load_sample(root, i) for i in manifest["ids"]]
    k = manifest["num_classes"]
    for s in samples:
        if s.mask.max() >= k:
            raise FormatError(f"sample {s.id} has a label >= num_classes={k}")
    return samples, manifest
