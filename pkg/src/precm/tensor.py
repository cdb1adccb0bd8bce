"""Dense 4-axis (batch, channel, height, width) tensors.

Tensors are plain C-contiguous numpy arrays; this module supplies checked
constructors, cell access, deterministic reductions and the PRT1 file format.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable

import numpy as np

F32 = np.float32
F64 = np.float64
DTYPE_CODES = {0: F32, 1: F64}
PRT1_MAGIC = b"PRT1\0\0\0\0"
_MAX_ELEMENTS = 2**31 - 1


class TensorError(ValueError):
    pass


def _check_dims(dims) -> tuple[int, int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4:
        raise TensorError(f"expected 4 dims (B, C, H, W), got {dims}")
    if any(d < 1 for d in dims):
        raise TensorError(f"all dims must be >= 1, got {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > _MAX_ELEMENTS:
        raise TensorError(f"dimension product {total} overflows")
    return dims


def as_tensor(x, dtype=None) -> np.ndarray:
    """Validate ``x`` as a 4-axis tensor and return a C-contiguous copy-if-needed."""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise TensorError(f"expected a 4-axis tensor, got shape {arr.shape}")
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (F32, F64) else F32
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise TensorError("tensor contains non-finite values")
    return arr


def new_filled(dims, value: float, dtype=F32) -> np.ndarray:
    return np.full(_check_dims(dims), value, dtype=dtype)


def layout_index(dims, b: int, c: int, y: int, x: int) -> int:
    _, C, H, W = dims
    return ((b * C + c) * H + y) * W + x


def unravel(dims, flat: int) -> tuple[int, int, int, int]:
    _, C, H, W = dims
    flat, x = divmod(flat, W)
    flat, y = divmod(flat, H)
    b, c = divmod(flat, C)
    return b, c, y, x


def _check_coords(t: np.ndarray, coords) -> None:
    for axis, (i, n) in enumerate(zip(coords, t.shape)):
        if not 0 <= i < n:
            raise IndexError(f"coordinate {i} out of bounds for axis {axis} of size {n}")


def index(t: np.ndarray, b: int, c: int, y: int, x: int) -> float:
    _check_coords(t, (b, c, y, x))
    return t[b, c, y, x].item()


def set_value(t: np.ndarray, b: int, c: int, y: int, x: int, v: float) -> np.ndarray:
    """Return a copy of ``t`` with one cell replaced; ``t`` itself is untouched."""
    _check_coords(t, (b, c, y, x))
    out = t.copy()
    out[b, c, y, x] = v
    return out


def map_(fn: Callable[[np.ndarray], np.ndarray], t: np.ndarray) -> np.ndarray:
    out = np.asarray(fn(t), dtype=t.dtype)
    if out.shape != t.shape:
        raise TensorError("map function must preserve shape")
    return out


def zip_(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise TensorError(f"dim mismatch: {a.shape} vs {b.shape}")
    return np.asarray(fn(a, b), dtype=np.result_type(a, b))


def sequential_sum(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` strictly left to right, starting from +0.0."""
    terms = np.asarray(terms)
    if terms.shape[axis] == 0:
        return np.zeros(np.delete(terms.shape, axis), dtype=terms.dtype)
    # add.accumulate is a serial loop; the trailing +0.0 matches a +0.0 start
    return np.take(np.cumsum(terms, axis=axis), -1, axis=axis) + terms.dtype.type(0.0)


def canonical_sum(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` in ascending value order.

    The result depends only on the multiset of summands, so any permutation
    of the terms along ``axis`` gives a bitwise-identical result.
    """
    return sequential_sum(np.sort(terms, axis=axis), axis=axis)


def tsum(t: np.ndarray) -> float:
    """Whole-tensor sum, accumulated in layout order."""
    return float(sequential_sum(np.ascontiguousarray(t).reshape(-1)))


def tmean(t: np.ndarray) -> float:
    return tsum(t) / t.size


def argmax_channels(t: np.ndarray) -> np.ndarray:
    """Per-pixel index of the largest channel; ties resolve to the lowest index."""
    return np.argmax(t, axis=1).astype(np.int64)


def save_prt1(path, t: np.ndarray) -> None:
    t = as_tensor(t)
    code = 1 if t.dtype == F64 else 0
    header = PRT1_MAGIC + struct.pack("<5I", code, *t.shape)
    Path(path).write_bytes(header + t.astype(t.dtype.newbyteorder("<"), copy=False).tobytes())


def load_prt1(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 28 or raw[:8] != PRT1_MAGIC:
        raise TensorError(f"{path}: not a PRT1 file")
    code, *dims = struct.unpack("<5I", raw[8:28])
    if code not in DTYPE_CODES:
        raise TensorError(f"{path}: unknown dtype code {code}")
    dims = _check_dims(dims)
    dtype = np.dtype(DTYPE_CODES[code]).newbyteorder("<")
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) - 28 != expected:
        raise TensorError(f"{path}: payload is {len(raw) - 28} bytes, expected {expected}")
    arr = np.frombuffer(raw, dtype=dtype, offset=28).reshape(dims)
    return arr.astype(DTYPE_CODES[code])
