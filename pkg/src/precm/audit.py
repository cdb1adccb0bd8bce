"""Randomized checks of the rotated-convolution identity and of network RD."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .conv import conv_padded, conv_sigma
from .group import rotate, rotate_kernel
from .padplan import ConvSpec, PlanError, derive_base_padding, plan_for_mode
from .data import rotate_arbitrary
from .experiment import predict_labels
from .layers import PrecmNet, forward
from .metrics import rd, rd_arbitrary


@dataclass(frozen=True)
class LawCase:
    """One audit configuration; pairs are (w, h)."""

    input: tuple[int, int]
    kernel: tuple[int, int]
    stride: tuple[int, int]
    dilation: tuple[int, int]
    output: tuple[int, int]
    in_channels: int = 1
    out_channels: int = 1
    seed: int = 0

    @property
    def spec(self) -> ConvSpec:
        return ConvSpec(kernel=self.kernel, input=self.input, stride=self.stride,
                        dilation=self.dilation, output=self.output)

    def tensors(self, dtype=np.float64):
        rng = np.random.default_rng(self.seed)
        w, h = self.input
        kw, kh = self.kernel
        f = rng.standard_normal((1, self.in_channels, h, w)).astype(dtype)
        k = rng.standard_normal((self.out_channels, self.in_channels, kh, kw)).astype(dtype)
        return f, k

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


# §III-D geometry: 4x3 input, 3x2 kernel, stride 2, 2x2 output (all w x h)
FIG2_SPEC = dict(input=(4, 3), kernel=(3, 2), stride=(2, 2), dilation=(1, 1), output=(2, 2))


def fig2_case() -> LawCase:
    return LawCase(**FIG2_SPEC)


def random_case(rng: np.random.Generator, max_size=16, max_kernel=5, max_stride=3, max_dilation=3) -> LawCase:
    kernel = tuple(int(v) for v in rng.integers(1, max_kernel + 1, 2))
    stride = tuple(int(v) for v in rng.integers(1, max_stride + 1, 2))
    dilation = tuple(int(v) for v in rng.integers(1, max_dilation + 1, 2))
    inp = tuple(int(v) for v in rng.integers(1, max_size + 1, 2))
    base = ConvSpec(kernel=kernel, input=inp, stride=stride, dilation=dilation)
    # sometimes ask for a larger output than the default to exercise bigger paddings
    output = tuple(int(o + rng.integers(0, 2)) for o in base.output)
    try:
        derive_base_padding(ConvSpec(kernel=kernel, input=inp, stride=stride, dilation=dilation, output=output))
    except PlanError:
        output = base.output
    return LawCase(inp, kernel, stride, dilation, output,
                   in_channels=int(rng.integers(1, 3)), out_channels=int(rng.integers(1, 3)),
                   seed=int(rng.integers(2**31)))


def law_sides(case: LawCase, t: int, naive: bool = False, dtype=np.float64):
    """(lhs, rhs) of conv(rotate(f), rotate(k), mode t) vs rotate(conv(f, k, mode 0))."""
    f, k = case.tensors(dtype)
    spec = case.spec
    rhs = rotate(t, conv_sigma(f, k, spec, 0))
    if naive:
        base, _ = plan_for_mode(spec, 0)
        mode_spec = spec.swapped() if t % 2 else spec
        lhs = conv_padded(rotate(t, f), rotate_kernel(t, k), base, mode_spec.stride, mode_spec.dilation)
    else:
        lhs = conv_sigma(rotate(t, f), rotate_kernel(t, k), spec, t)
    return lhs, rhs


def law_holds(case: LawCase, t: int, naive: bool = False, dtype=np.float64, tol: float = 0.0) -> bool:
    try:
        lhs, rhs = law_sides(case, t, naive, dtype)
    except PlanError:
        # only reachable with unrotated padding: the rotated map no longer fits the kernel
        return False
    if lhs.shape != rhs.shape:
        return False
    if tol == 0.0:
        return bool(np.array_equal(lhs, rhs))
    return bool(np.max(np.abs(lhs.astype(np.float64) - rhs)) <= tol)


@dataclass
class LawReport:
    trials: int
    checks: int
    failures: int
    first_failure: dict | None = None

    def summary(self) -> str:
        return f"{self.trials} trials, {self.checks} checks, {self.failures} failures"


def audit_law(trials: int, seed: int = 0, naive: bool = False, dtype=np.float64, tol: float = 0.0,
              cases: list[LawCase] | None = None, **limits) -> LawReport:
    """Check all four modes on ``cases`` followed by ``trials`` random configurations."""
    rng = np.random.default_rng(seed)
    todo = list(cases or []) + [random_case(rng, **limits) for _ in range(trials)]
    report = LawReport(trials=len(todo), checks=0, failures=0)
    for case in todo:
        for t in range(4):
            report.checks += 1
            if not law_holds(case, t, naive, dtype, tol):
                report.failures += 1
                if report.first_failure is None:
                    report.first_failure = {"t": t, **case.to_json()}
    return report


def net_rd(net: PrecmNet, x: np.ndarray, degrees: float) -> float:
    """Mean RD of the net's label maps over the batch ``x`` for one input rotation."""
    x = x.astype(net.config.np_dtype)
    base = predict_labels(forward(net, x))
    if float(degrees) % 90 == 0:
        t = int(degrees // 90) % 4
        rot = predict_labels(forward(net, rotate(t, x)))
        return float(np.mean([rd(rot[i], base[i], t) for i in range(len(x))]))
    rot = predict_labels(forward(net, rotate_arbitrary(x, degrees)))
    return float(np.mean([rd_arbitrary(rot[i], base[i], degrees) for i in range(len(x))]))
