"""The cyclic rotation group C4 and its action on feature maps and kernels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=True)
class GroupElement:
    """Rotation by ``90 * t`` degrees counterclockwise."""

    t: int

    def __post_init__(self):
        if not isinstance(self.t, (int, np.integer)) or not 0 <= self.t < 4:
            raise ValueError(f"group index must be an integer in 0..3, got {self.t!r}")
        object.__setattr__(self, "t", int(self.t))

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)

    def __repr__(self) -> str:
        return f"sigma{self.t}"

    @property
    def degrees(self) -> int:
        return 90 * self.t


SIGMA = tuple(GroupElement(t) for t in range(4))
IDENTITY = SIGMA[0]


def element(t) -> GroupElement:
    """Coerce an int (any integer, taken mod 4) or a GroupElement."""
    if isinstance(t, GroupElement):
        return t
    return SIGMA[int(t) % 4]


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    return SIGMA[(a.t + b.t) % 4]


def inverse(a: GroupElement) -> GroupElement:
    return SIGMA[(4 - a.t) % 4]


def rotate(t, x: np.ndarray) -> np.ndarray:
    """Rotate every (batch, channel) plane of ``x`` by ``t`` quarter turns CCW.

    Pure index permutation over the last two axes; odd ``t`` swaps H and W.
    """
    k = element(t).t
    return np.ascontiguousarray(np.rot90(x, k, axes=(-2, -1)))


def rotate_kernel(t, phi: np.ndarray) -> np.ndarray:
    """Rotate an (out_ch, in_ch, h, w) kernel spatially; same action as :func:`rotate`."""
    return rotate(t, phi)
