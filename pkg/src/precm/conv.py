"""Padded convolution in the four rotation modes, in direct and flattened form.

"Convolution" is cross-correlation (no kernel flip). Every output cell is the
canonical (value-sorted) sum of its products, so rotating both the input and
the kernel reproduces the rotated output bit for bit: the products are the
same multiset, only visited in a different order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .group import GroupElement, element, rotate, rotate_kernel
from .padplan import ConvSpec, Padding, PlanError, output_shape, plan_for_mode
from .tensor import canonical_sum

# (cos, sin) of t quarter turns
_COS_SIN = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass
class Kernel:
    weights: np.ndarray  # (out_ch, in_ch, h, w)
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ValueError(f"kernel weights must be (out_ch, in_ch, h, w), got {self.weights.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.weights.shape[0], dtype=self.weights.dtype)


def _weights(k) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(k, Kernel):
        return k.weights, k.bias
    return np.asarray(k), None


def pad(f: np.ndarray, p: Padding, fill: float = 0.0) -> np.ndarray:
    widths = [(0, 0)] * (f.ndim - 2) + [(p.above, p.below), (p.left, p.right)]
    return np.pad(f, widths, mode="constant", constant_values=fill)


def im2col(xp: np.ndarray, kh: int, kw: int, stride: tuple[int, int], dilation: tuple[int, int]):
    """Gather receptive fields of a padded (B, C, H, W) map.

    Returns an array of shape (B, out_h, out_w, C * kh * kw) with the last axis
    ordered (channel, kernel row, kernel column).
    """
    sw, sh = stride
    dw, dh = dilation
    B, C, H, W = xp.shape
    oh = (H - dh * (kh - 1) - 1) // sh + 1
    ow = (W - dw * (kw - 1) - 1) // sw + 1
    if oh < 1 or ow < 1:
        raise PlanError(f"kernel footprint exceeds padded input {H}x{W}")
    cols = np.empty((B, C, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        y0 = i * dh
        for j in range(kw):
            x0 = j * dw
            cols[:, :, i, j] = xp[:, :, y0 : y0 + sh * (oh - 1) + 1 : sh, x0 : x0 + sw * (ow - 1) + 1 : sw]
    return np.ascontiguousarray(cols.transpose(0, 4, 5, 1, 2, 3)).reshape(B, oh, ow, C * kh * kw)


def correlate(xp: np.ndarray, weights: np.ndarray, stride=(1, 1), dilation=(1, 1)) -> np.ndarray:
    """Cross-correlate an already padded map with ``weights`` (no padding added)."""
    cout, cin, kh, kw = weights.shape
    if xp.shape[1] != cin:
        raise ValueError(f"input has {xp.shape[1]} channels, kernel expects {cin}")
    cols = im2col(xp, kh, kw, stride, dilation)
    flat_k = weights.reshape(cout, -1)
    products = np.multiply(cols[:, None, :, :, :], flat_k[None, :, None, None, :], order="C")
    return canonical_sum(products, axis=-1)


def conv_padded(f: np.ndarray, k, p: Padding, stride=(1, 1), dilation=(1, 1)) -> np.ndarray:
    weights, bias = _weights(k)
    out = correlate(pad(f, p), weights, stride, dilation)
    if bias is not None:
        out = out + bias[None, :, None, None].astype(out.dtype)
    return out


def check_input(f: np.ndarray, mode_spec: ConvSpec) -> None:
    w, h = mode_spec.input
    if f.shape[-2:] != (h, w):
        raise ValueError(f"input map is {f.shape[-1]}x{f.shape[-2]} (w x h), plan expects {w}x{h}")


def conv_sigma(f: np.ndarray, k, spec: ConvSpec, t: GroupElement | int = 0) -> np.ndarray:
    """Convolve ``f`` in mode ``t``: pad with the rotated base padding, then correlate.

    ``spec`` describes the base (mode 0) geometry; ``f`` must have the mode-t
    input dims, i.e. H and W swapped when ``t`` is odd.
    """
    p, mode_spec = plan_for_mode(spec, element(t))
    check_input(f, mode_spec)
    weights, _ = _weights(k)
    if weights.shape[-2:] != (mode_spec.kernel[1], mode_spec.kernel[0]):
        raise ValueError(
            f"kernel is {weights.shape[-1]}x{weights.shape[-2]} (w x h), mode plan expects "
            f"{mode_spec.kernel[0]}x{mode_spec.kernel[1]}"
        )
    shape = output_shape(mode_spec, p)
    if not shape.exact:
        raise PlanError("plan is not exact; the rotated modes would not align")
    return conv_padded(f, k, p, mode_spec.stride, mode_spec.dilation)


def distributive_gap(f: np.ndarray, k: np.ndarray, spec: ConvSpec, t, naive: bool = False) -> float | None:
    """Max |lhs - rhs| of the rotated-convolution identity, or None on a shape mismatch.

    lhs convolves the rotated input with the rotated kernel in mode ``t``; rhs
    rotates the mode-0 output. ``naive`` keeps the unrotated base padding for
    every mode, which is what breaks the identity.
    """
    t = element(t)
    rhs = rotate(t, conv_sigma(f, k, spec, 0))
    if naive:
        base, _ = plan_for_mode(spec, 0)
        mode_spec = spec.swapped() if t.t % 2 else spec
        lhs = conv_padded(rotate(t, f), rotate_kernel(t, k), base, mode_spec.stride, mode_spec.dilation)
    else:
        lhs = conv_sigma(rotate(t, f), rotate_kernel(t, k), spec, t)
    if lhs.shape != rhs.shape:
        return None
    return float(np.max(np.abs(lhs - rhs)))


# ---- flattened (matrix) form -------------------------------------------------


def flatten_feature(f_padded: np.ndarray) -> np.ndarray:
    """Row-major readout of one padded plane (or of each channel, concatenated)."""
    f_padded = np.asarray(f_padded)
    if f_padded.ndim == 4:
        if f_padded.shape[0] != 1:
            raise ValueError("flatten_feature takes a single batch element")
        f_padded = f_padded[0]
    return f_padded.reshape(-1).copy()


def unflatten_feature(vec: np.ndarray, h: int, w: int, channels: int = 1) -> np.ndarray:
    return np.asarray(vec).reshape(1, channels, h, w).copy()


def _kernel_coords(u, v, w_out, w_pad, stride, dilation):
    sw, sh = stride
    dw, dh = dilation
    a = v // w_pad - (u // w_out) * sh
    b = v % w_pad - (u % w_out) * sw
    return a, b, dh, dw


def sparse_kernel_matrix(k, spec: ConvSpec, p: Padding) -> np.ndarray:
    """Dense storage of the mostly-zero kernel matrix mapping padded input to output.

    Single channel: shape (h_out * w_out, h'_in * w'_in). Multi-channel kernels give
    the block matrix with out-channel row blocks and in-channel column blocks.
    """
    weights, _ = _weights(k)
    cout, cin, kh, kw = weights.shape
    shape = output_shape(spec, p)
    h_pad = p.above + p.below + spec.input[1]
    w_pad = p.left + p.right + spec.input[0]
    rows = shape.h * shape.w
    cols = h_pad * w_pad
    u = np.arange(rows)[:, None]
    v = np.arange(cols)[None, :]
    a, b, dh, dw = _kernel_coords(u, v, shape.w, w_pad, spec.stride, spec.dilation)
    ok = (a % dh == 0) & (b % dw == 0)
    a = np.where(ok, a // dh, -1)
    b = np.where(ok, b // dw, -1)
    ok &= (a >= 0) & (a < kh) & (b >= 0) & (b < kw)
    phi = np.zeros((cout, rows, cin, cols), dtype=weights.dtype)
    ai, bi = np.where(ok, a, 0), np.where(ok, b, 0)
    for o in range(cout):
        for c in range(cin):
            phi[o, :, c, :] = np.where(ok, weights[o, c][ai, bi], 0.0)
    return phi.reshape(cout * rows, cin * cols)


def matrix_apply(phi: np.ndarray, f_in: np.ndarray) -> np.ndarray:
    """F_out = Phi . F_in with the same canonical accumulation as the direct form."""
    return canonical_sum(np.multiply(phi, f_in[None, :], order="C"), axis=-1)


def conv_flat(f: np.ndarray, k, spec: ConvSpec, t=0) -> np.ndarray:
    """Mode-t convolution of a single-batch map computed through the matrix form."""
    p, mode_spec = plan_for_mode(spec, element(t))
    check_input(f, mode_spec)
    weights, bias = _weights(k)
    shape = output_shape(mode_spec, p)
    f_in = flatten_feature(pad(f, p))
    out = matrix_apply(sparse_kernel_matrix(weights, mode_spec, p), f_in)
    out = out.reshape(1, weights.shape[0], shape.h, shape.w)
    if bias is not None:
        out = out + bias[None, :, None, None].astype(out.dtype)
    return out


# ---- index maps under rotation ---------------------------------------------------


def _rotate_centered(t: int, r2: int, c2: int) -> tuple[int, int]:
    # doubled coordinates keep the half-integer centres exact
    c, s = _COS_SIN[t]
    return c * r2 + s * c2, -s * r2 + c * c2


def row_transform_out(t, m: int, out_dims: tuple[int, int]) -> int:
    """Index into the flattened base map read by cell ``m`` of the flattened rotated map.

    ``out_dims`` is the base map's (w, h).
    """
    t = element(t).t
    w, h = out_dims
    w_t, h_t = (h, w) if t % 2 else (w, h)
    if not 0 <= m < w_t * h_t:
        raise IndexError(f"row index {m} out of range for a {w_t}x{h_t} map")
    r2, c2 = _rotate_centered(t, 2 * (m // w_t) - (h_t - 1), 2 * (m % w_t) - (w_t - 1))
    row, col = (r2 + h - 1) // 2, (c2 + w - 1) // 2
    return row * w + col


def row_transform_in(t, n: int, spec: ConvSpec) -> int:
    """Row transform on the flattened padded input, same closed form with padded dims."""
    p, _ = plan_for_mode(spec, 0)
    dims = (spec.input[0] + p.left + p.right, spec.input[1] + p.above + p.below)
    return row_transform_out(t, n, dims)


def kernel_index_transform(t, m: int, n: int, spec: ConvSpec) -> tuple[int, int] | None:
    """Base-kernel (row, col) feeding entry (m, n) of the mode-t kernel matrix.

    Returns None where that entry is structurally zero.
    """
    t = element(t)
    p_t, ms = plan_for_mode(spec, t)
    shape_t = output_shape(ms, p_t)
    w_in_t = ms.input[0] + p_t.left + p_t.right
    a = n // w_in_t - (m // shape_t.w) * ms.stride[1]
    b = n % w_in_t - (m % shape_t.w) * ms.stride[0]
    if a % ms.dilation[1] or b % ms.dilation[0]:
        return None
    a //= ms.dilation[1]
    b //= ms.dilation[0]
    kw_t, kh_t = ms.kernel
    kw, kh = spec.kernel
    r2, c2 = _rotate_centered(t.t, 2 * a - (kh_t - 1), 2 * b - (kw_t - 1))
    row, col = (r2 + kh - 1) // 2, (c2 + kw - 1) // 2
    if 0 <= row < kh and 0 <= col < kw and 0 <= a < kh_t and 0 <= b < kw_t:
        return row, col
    return None
