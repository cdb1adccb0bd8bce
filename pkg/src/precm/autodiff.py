"""Tape-based reverse-mode differentiation for the handful of ops PreCM nets use.

Every primitive here accepts plain arrays or :class:`Var` handles. With plain
arrays it just computes; with Vars it computes the same value through the same
code and records a node on the owning tape.

Gradient contributions reaching one variable are combined with the canonical
(value-sorted) sum, and every reduction inside a backward rule is canonical
too. That keeps parameter gradients bit-identical when the input and target
are rotated, as long as the network itself is exactly equivariant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import conv as _conv
from .group import element, inverse, rotate
from .padplan import ConvSpec, plan_for_mode
from .tensor import canonical_sum

BCE_EPS = 1e-7


class Var:
    __slots__ = ("value", "tape", "idx")

    def __init__(self, value: np.ndarray, tape: "Tape", idx: int):
        self.value = value
        self.tape = tape
        self.idx = idx

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(#{self.idx}, shape={self.value.shape})"


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None


class Tape:
    """Ordered record of primitive applications; leaves have no inputs."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.vars: list[Var] = []

    def var(self, value) -> Var:
        return self._push("leaf", (), np.asarray(value), None)

    def _push(self, op, inputs, value, vjp) -> Var:
        v = Var(value, self, len(self.nodes))
        self.nodes.append(Node(op, tuple(inputs), vjp))
        self.vars.append(v)
        return v

    def record(self, op: str, inputs: Sequence[Var], value: np.ndarray, vjp) -> Var:
        for x in inputs:
            if x.tape is not self:
                raise ValueError("input belongs to a different tape")
        return self._push(op, [x.idx for x in inputs], value, vjp)


def _tape_of(*xs) -> Tape | None:
    tapes = {id(x.tape): x.tape for x in xs if isinstance(x, Var)}
    if len(tapes) > 1:
        raise ValueError("inputs come from different tapes")
    return next(iter(tapes.values()), None)


def value(x):
    return x.value if isinstance(x, Var) else x


def _lift(tape: Tape, x) -> Var:
    return x if isinstance(x, Var) else tape.var(x)


def backward(tape: Tape, loss: Var) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` for every recorded variable, keyed by var index."""
    if loss.tape is not tape:
        raise ValueError("loss is not on this tape")
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    pending: dict[int, list[np.ndarray]] = {loss.idx: [np.ones_like(loss.value)]}
    grads: dict[int, np.ndarray] = {}
    for idx in range(loss.idx, -1, -1):
        contribs = pending.pop(idx, None)
        if contribs is None:
            continue
        g = contribs[0] if len(contribs) == 1 else canonical_sum(np.stack(contribs), axis=0)
        grads[idx] = g
        node = tape.nodes[idx]
        if node.vjp is None:
            continue
        for src, gi in zip(node.inputs, node.vjp(g)):
            if gi is None:
                continue
            if src >= idx:
                raise ValueError(f"dangling reference: node {idx} reads {src}")
            pending.setdefault(src, []).append(gi)
    return grads


def grad_of(grads: dict[int, np.ndarray], v: Var) -> np.ndarray:
    g = grads.get(v.idx)
    return np.zeros_like(v.value) if g is None else g


# ---- convolution -------------------------------------------------------------


def conv_backward(g, xp, weights, stride, dilation):
    """Gradients of ``correlate(xp, weights)`` for the padded input and the weights."""
    cout, cin, kh, kw = weights.shape
    sw, sh = stride
    dw, dh = dilation
    B, _, Hp, Wp = xp.shape
    _, _, oh, ow = g.shape
    # input: zero-insert by stride, pad the full kernel footprint, correlate with the 180-degree kernel
    zi = np.zeros((B, cout, (oh - 1) * sh + 1, (ow - 1) * sw + 1), dtype=g.dtype)
    zi[:, :, ::sh, ::sw] = g
    ph, pw = dh * (kh - 1), dw * (kw - 1)
    rh = Hp - (zi.shape[2] + ph)
    rw = Wp - (zi.shape[3] + pw)
    zi = np.pad(zi, [(0, 0), (0, 0), (ph, ph + rh), (pw, pw + rw)])
    flipped = np.ascontiguousarray(rotate(2, weights).transpose(1, 0, 2, 3))
    gx = _conv.correlate(zi, flipped, (1, 1), dilation)
    # weights: products of output grads with receptive fields, reduced over (batch, y, x)
    cols = _conv.im2col(xp, kh, kw, stride, dilation)  # (B, oh, ow, cin*kh*kw)
    cols = np.ascontiguousarray(cols.reshape(-1, cols.shape[-1]).T)  # (cin*kh*kw, B*oh*ow)
    gk = np.empty((cout, cin * kh * kw), dtype=g.dtype)
    gflat = g.transpose(1, 0, 2, 3).reshape(cout, -1)
    for o in range(cout):
        gk[o] = canonical_sum(np.multiply(cols, gflat[o][None, :], order="C"), axis=-1)
    return gx, gk.reshape(weights.shape)


def conv_sigma(x, k, spec: ConvSpec, t=0):
    t = element(t)
    tape = _tape_of(x, k)
    out = _conv.conv_sigma(value(x), value(k), spec, t)
    if tape is None:
        return out
    p, ms = plan_for_mode(spec, t)
    xv, kv = value(x), value(k)

    def vjp(g):
        xp = _conv.pad(xv, p)
        gxp, gk = conv_backward(g, xp, kv, ms.stride, ms.dilation)
        gx = gxp[:, :, p.above : p.above + xv.shape[2], p.left : p.left + xv.shape[3]]
        return np.ascontiguousarray(gx), gk

    return tape.record("conv_sigma", [_lift(tape, x), _lift(tape, k)], out, vjp)


def rotate_kernel(t, k):
    t = element(t)
    out = rotate(t, value(k))
    tape = _tape_of(k)
    if tape is None:
        return out
    return tape.record("rotate_kernel", [k], out, lambda g: (rotate(inverse(t), g),))


def cyclic_kernel(phi2, j: int):
    """Arrange a (4, out, in, h, w) relative-orientation family for output orientation ``j``.

    Input-channel block ``i`` of the result holds ``phi2[(i - j) % 4]``.
    """
    pv = value(phi2)
    order = [(i - j) % 4 for i in range(4)]
    out = np.concatenate([pv[r] for r in order], axis=1)
    tape = _tape_of(phi2)
    if tape is None:
        return out
    cin = pv.shape[2]

    def vjp(g):
        gp = np.empty_like(pv)
        for i, r in enumerate(order):
            gp[r] = g[:, i * cin : (i + 1) * cin]
        return (gp,)

    return tape.record("cyclic_kernel", [phi2], out, vjp)


# ---- structural ops ----------------------------------------------------------


def concat_channels(xs: Sequence):
    out = np.concatenate([value(x) for x in xs], axis=1)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    sizes = [value(x).shape[1] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return [g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs))]

    return tape.record("concat", [_lift(tape, x) for x in xs], out, vjp)


def channel_slice(x, start: int, stop: int):
    xv = value(x)
    out = xv[:, start:stop]
    tape = _tape_of(x)
    if tape is None:
        return out

    def vjp(g):
        full = np.zeros_like(xv)
        full[:, start:stop] = g
        return (full,)

    return tape.record("slice", [x], out, vjp)


def add_n(xs: Sequence):
    """Elementwise canonical sum of equally shaped tensors."""
    out = canonical_sum(np.stack([value(x) for x in xs]), axis=0)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    return tape.record("add_n", [_lift(tape, x) for x in xs], out, lambda g: [g] * len(xs))


def add(a, b):
    return add_n([a, b])


# ---- pointwise ---------------------------------------------------------------


def relu(x):
    xv = value(x)
    out = np.maximum(xv, 0).astype(xv.dtype)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record("relu", [x], out, lambda g: (g * (xv > 0),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e)).astype(z.dtype)


def sigmoid(x):
    out = _sigmoid(value(x))
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record("sigmoid", [x], out, lambda g: (g * out * (1 - out),))


def add_bias(x, b, blocks: int = 1):
    """Add a per-channel bias; with ``blocks`` > 1 the bias is shared by every channel block."""
    xv, bv = value(x), value(b)
    full = np.tile(bv, blocks)
    if full.shape[0] != xv.shape[1]:
        raise ValueError(f"bias of length {bv.shape[0]} x {blocks} blocks does not match {xv.shape[1]} channels")
    out = xv + full[None, :, None, None].astype(xv.dtype)
    tape = _tape_of(x, b)
    if tape is None:
        return out
    B, C, H, W = xv.shape
    c = bv.shape[0]

    def vjp(g):
        # reduce over (batch, block, y, x) jointly per bias entry
        gb = g.reshape(B, blocks, c, H, W).transpose(2, 0, 1, 3, 4).reshape(c, -1)
        return g, canonical_sum(gb, axis=-1)

    return tape.record("add_bias", [_lift(tape, x), _lift(tape, b)], out, vjp)


# ---- reductions and loss -----------------------------------------------------


def tsum(x):
    xv = value(x)
    out = canonical_sum(xv.reshape(-1), axis=0)
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record("sum", [x], np.asarray(out), lambda g: (np.full_like(xv, g),))


def mean(x):
    xv = value(x)
    n = xv.size
    out = canonical_sum(xv.reshape(-1), axis=0) / n
    tape = _tape_of(x)
    if tape is None:
        return out
    return tape.record("mean", [x], np.asarray(out, dtype=xv.dtype), lambda g: (np.full_like(xv, g / n),))


def bce_loss(pred, target):
    """Mean binary cross-entropy of probabilities ``pred`` against 0/1 ``target``.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; the gradient is zero where the
    clamp is active.
    """
    pv = value(pred)
    y = np.asarray(value(target), dtype=pv.dtype)
    if y.shape != pv.shape:
        raise ValueError(f"target shape {y.shape} != prediction shape {pv.shape}")
    p = np.clip(pv, BCE_EPS, 1 - BCE_EPS)
    terms = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    n = terms.size
    out = np.asarray(canonical_sum(terms.reshape(-1), axis=0) / n, dtype=pv.dtype)
    tape = _tape_of(pred)
    if tape is None:
        return out
    inside = (pv >= BCE_EPS) & (pv <= 1 - BCE_EPS)

    def vjp(g):
        return (g * np.where(inside, (p - y) / (p * (1 - p)), 0.0).astype(pv.dtype) / n,)

    return tape.record("bce", [pred], out, vjp)


# ---- optimiser -----------------------------------------------------------------


def sgd_step(params: dict, grads: dict, lr: float, momentum: float = 0.0, velocity: dict | None = None):
    """One momentum-SGD update; returns (new_params, new_velocity)."""
    velocity = {} if velocity is None else velocity
    new_p, new_v = {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        v = momentum * velocity.get(name, np.zeros_like(p)) + g
        new_v[name] = v.astype(p.dtype)
        new_p[name] = (p - lr * v).astype(p.dtype)
    return new_p, new_v
