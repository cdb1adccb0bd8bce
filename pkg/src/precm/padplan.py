"""Padding calculus for the four rotated convolution modes.

All pairs are ``(width, height)``. A plan for mode ``t`` is the base plan seen
through a ``90 * t`` degree CCW rotation: w/h components swap for odd ``t`` and
the four padding amounts cycle around the image.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .group import GroupElement, element


class PlanError(ValueError):
    """A convolution plan that cannot be realised without cropping."""


Pair = tuple[int, int]


@dataclass(frozen=True)
class Padding:
    above: int = 0
    below: int = 0
    left: int = 0
    right: int = 0

    def __post_init__(self):
        for name in ("above", "below", "left", "right"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise PlanError(f"padding {name}={v!r} must be a non-negative integer")
            object.__setattr__(self, name, int(v))

    @property
    def total(self) -> int:
        return self.above + self.below + self.left + self.right

    def as_dict(self) -> dict[str, int]:
        return {"above": self.above, "below": self.below, "left": self.left, "right": self.right}


def _pair(v, name: str) -> Pair:
    if isinstance(v, int):
        v = (v, v)
    w, h = (int(a) for a in v)
    if w < 1 or h < 1:
        raise PlanError(f"{name} components must be >= 1, got {(w, h)}")
    return (w, h)


@dataclass(frozen=True)
class ConvSpec:
    """Kernel, stride, dilation, input and target output sizes, each as (w, h).

    ``output`` defaults to ``ceil(input / stride)`` per axis, raised where needed
    so that the strided grid still reaches the last input pixel.
    """

    kernel: Pair
    input: Pair
    stride: Pair = (1, 1)
    dilation: Pair = (1, 1)
    output: Pair | None = field(default=None)

    def __post_init__(self):
        for name in ("kernel", "input", "stride", "dilation"):
            object.__setattr__(self, name, _pair(getattr(self, name), name))
        if self.output is None:
            out = tuple(
                default_output(i, k, s, d)
                for i, k, s, d in zip(self.input, self.kernel, self.stride, self.dilation)
            )
        else:
            out = _pair(self.output, "output")
        object.__setattr__(self, "output", out)

    def swapped(self) -> "ConvSpec":
        sw = lambda p: (p[1], p[0])  # noqa: E731
        return ConvSpec(
            kernel=sw(self.kernel),
            input=sw(self.input),
            stride=sw(self.stride),
            dilation=sw(self.dilation),
            output=sw(self.output),
        )

    def with_input(self, w: int, h: int, output: Pair | None = None) -> "ConvSpec":
        return replace(self, input=(w, h), output=output)


def default_output(inp: int, k: int, stride: int, dilation: int) -> int:
    smallest = max(0, -(-(inp - dilation * (k - 1) - 1) // stride)) + 1
    return max(math.ceil(inp / stride), smallest)


class OutputShape(NamedTuple):
    w: int
    h: int
    exact: bool


def _needed(out: int, stride: int, dilation: int, k: int, inp: int) -> int:
    return (out - 1) * stride + dilation * (k - 1) + 1 - inp


def derive_base_padding(spec: ConvSpec) -> Padding:
    """Smallest padding that makes the requested output size exact.

    The odd pixel, if any, goes above and to the right. Raises PlanError when the
    output is too small (negative padding) or too large (some output cell would
    read padding only).
    """
    p_ab = _needed(spec.output[1], spec.stride[1], spec.dilation[1], spec.kernel[1], spec.input[1])
    p_rl = _needed(spec.output[0], spec.stride[0], spec.dilation[0], spec.kernel[0], spec.input[0])
    if p_ab < 0:
        raise PlanError(
            f"height axis infeasible: output {spec.output[1]} would need {p_ab} padding "
            f"(input {spec.input[1]}, kernel {spec.kernel[1]}, stride {spec.stride[1]}, "
            f"dilation {spec.dilation[1]}); request a larger output"
        )
    if p_rl < 0:
        raise PlanError(
            f"width axis infeasible: output {spec.output[0]} would need {p_rl} padding "
            f"(input {spec.input[0]}, kernel {spec.kernel[0]}, stride {spec.stride[0]}, "
            f"dilation {spec.dilation[0]}); request a larger output"
        )
    below = p_ab // 2
    left = p_rl // 2
    p = Padding(above=p_ab - below, below=below, left=left, right=p_rl - left)
    # beyond the default size, a side padded past the kernel reach yields output cells
    # that never see the input
    default = [default_output(*a) for a in zip(spec.input, spec.kernel, spec.stride, spec.dilation)]
    reach_h = spec.dilation[1] * (spec.kernel[1] - 1)
    reach_w = spec.dilation[0] * (spec.kernel[0] - 1)
    if spec.output[1] > default[1] and p.above > reach_h:
        raise PlanError(
            f"height axis infeasible: output {spec.output[1]} is larger than achievable "
            f"(padding {p.above} exceeds the kernel reach {reach_h})"
        )
    if spec.output[0] > default[0] and p.right > reach_w:
        raise PlanError(
            f"width axis infeasible: output {spec.output[0]} is larger than achievable "
            f"(padding {p.right} exceeds the kernel reach {reach_w})"
        )
    return p


def rotate_padding(p: Padding, t) -> Padding:
    """Cycle the padding ``t`` times: above<-right, left<-above, below<-left, right<-below."""
    for _ in range(element(t).t):
        p = Padding(above=p.right, left=p.above, below=p.left, right=p.below)
    return p


def output_shape(spec: ConvSpec, p: Padding) -> OutputShape:
    num_w = p.left + p.right + spec.input[0] - spec.dilation[0] * (spec.kernel[0] - 1) - 1
    num_h = p.above + p.below + spec.input[1] - spec.dilation[1] * (spec.kernel[1] - 1) - 1
    if num_w < 0 or num_h < 0:
        raise PlanError(f"kernel footprint exceeds padded input (numerators {num_w}, {num_h})")
    w, rw = divmod(num_w, spec.stride[0])
    h, rh = divmod(num_h, spec.stride[1])
    return OutputShape(w + 1, h + 1, rw == 0 and rh == 0)


def plan_for_mode(spec: ConvSpec, t: GroupElement | int) -> tuple[Padding, ConvSpec]:
    t = element(t)
    base = derive_base_padding(spec)
    mode_spec = spec.swapped() if t.t % 2 else spec
    return rotate_padding(base, t), mode_spec


def all_plans(spec: ConvSpec, detail: bool = False) -> dict[str, dict]:
    """JSON-ready mode paddings keyed ``sigma0``..``sigma3``.

    ``detail`` adds each mode's kernel, input and output dims as [w, h].
    """
    out = {}
    for t in range(4):
        pad, mode_spec = plan_for_mode(spec, t)
        entry: dict = pad.as_dict()
        if detail:
            shape = output_shape(mode_spec, pad)
            entry.update(kernel=list(mode_spec.kernel), input=list(mode_spec.input), output=[shape.w, shape.h])
        out[f"sigma{t}"] = entry
    return out
