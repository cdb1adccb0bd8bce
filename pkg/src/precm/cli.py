"""Command-line entry point: plans, audits, data generation, training, evaluation."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .audit import audit_law, fig2_case, net_rd
from .data import gen_shapes, load_dataset, write_dataset
from .experiment import RunConfig, SchemaError, check_classes, evaluate, run_training, validate, NET_SCHEMA
from .layers import ConfigError, NetConfig, build_net, load_params
from .padplan import ConvSpec, PlanError, all_plans
from .tensor import TensorError
from .data import FormatError

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_EXPECTED_FAILURE, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("precm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is reserved for infeasible plans
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def wxh(text: str) -> tuple[int, int]:
    try:
        parts = [int(v) for v in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"expected two positive integers WxH, got {text!r}")
    return parts[0], parts[1]


def angle_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated degrees, got {text!r}") from None
    return [int(v) if v.is_integer() else v for v in vals]


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON: {e}") from None


# ---- commands -------------------------------------------------------------------------


def cmd_pad_plan(args) -> int:
    try:
        spec = ConvSpec(kernel=args.kernel, input=args.inp, stride=args.stride,
                        dilation=args.dilation, output=args.out)
        print(_dump(all_plans(spec, detail=args.detail)))
    except PlanError as e:
        print(f"infeasible plan: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_audit_law(args) -> int:
    dtype = np.float32 if args.f32 else np.float64
    tol = args.tol if args.f32 else 0.0
    limits = dict(max_size=args.max_size, max_kernel=args.max_kernel,
                  max_stride=args.max_stride, max_dilation=args.max_dilation)
    cases = [fig2_case()] if args.naive else None
    report = audit_law(args.trials, args.seed, naive=args.naive, dtype=dtype, tol=tol, cases=cases, **limits)
    print(report.summary())
    if report.first_failure is not None:
        print("first counterexample: " + json.dumps(report.first_failure, sort_keys=True))
    if args.naive:
        if report.failures:
            print("expected failure confirmed: unrotated padding breaks the identity")
            return EXIT_EXPECTED_FAILURE
        print("expected a violation with unrotated padding but saw none", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if report.failures == 0 else EXIT_USAGE


def _net_from_args(args):
    if args.params:
        return load_params(args.params)
    doc = _read_json(args.config)
    if "net" in doc:
        return build_net(RunConfig.from_dict(doc).net)
    validate(doc, NET_SCHEMA, "network config")
    return build_net(NetConfig.from_dict(doc))


def cmd_audit_net(args) -> int:
    if not args.config and not args.params:
        raise UsageError("audit-net needs --config FILE or --params DIR")
    net = _net_from_args(args)
    rng = np.random.default_rng(args.seed)
    x = rng.random((args.inputs, net.config.in_channels, args.size, args.size))
    rows = [(a, net_rd(net, x, a)) for a in args.angles]
    for a in rng.uniform(0.0, 360.0, args.random):
        a = round(float(a), 3)
        rows.append((a, net_rd(net, x, a)))
    if args.json:
        print(_dump({"flavor": net.config.flavor, "inputs": args.inputs,
                     "rd": [{"angle": a, "rd": v} for a, v in rows]}))
    else:
        for a, v in rows:
            print(f"rd {a} {v:.4f}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    try:
        samples = gen_shapes(args.seed, args.count, args.size, args.classes)
    except ValueError as e:
        raise UsageError(str(e)) from None
    write_dataset(args.out, samples, args.seed, args.size, args.classes)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    doc = _read_json(args.config)
    cfg = RunConfig.from_dict(doc)
    history = run_training(cfg, args.out)
    (Path(args.out) / "run.json").write_text(_dump(doc) + "\n")
    if history:
        print(f"trained {len(history)} epochs: loss {history[0]:.6f} -> {history[-1]:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_params(args.params)
    samples, manifest = load_dataset(args.data)
    check_classes(net.config, manifest["num_classes"])
    ev = {"angles": [90, 180, 270], "random_angle_count": 0}
    run_file = Path(args.params) / "run.json"
    if run_file.exists():
        ev.update(_read_json(run_file).get("eval", {}))
    if args.angles is not None:
        ev["angles"] = args.angles
    if args.random is not None:
        ev["random_angle_count"] = args.random
    report = evaluate(net, samples, manifest["num_classes"], ev["angles"], ev["random_angle_count"], args.seed)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(_dump(report) + "\n")
    print(f"iou {report['iou']:.4f} miou {report['miou']:.4f} dice {report['dice']:.4f}")
    for key, v in report["rd"].items():
        if key != "random":
            print(f"rd {key} {v:.4f}")
    return EXIT_OK


# ---- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="precm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("pad-plan", help="print the four mode paddings as JSON")
    s.add_argument("--in", dest="inp", type=wxh, required=True, metavar="WxH")
    s.add_argument("--out", type=wxh, default=None, metavar="WxH", help="default: ceil(in/stride)")
    s.add_argument("--kernel", type=wxh, required=True, metavar="WxH")
    s.add_argument("--stride", type=wxh, default=(1, 1), metavar="WxH")
    s.add_argument("--dilation", type=wxh, default=(1, 1), metavar="WxH")
    s.add_argument("--detail", action="store_true", help="also print per-mode kernel/input/output dims")
    s.set_defaults(fn=cmd_pad_plan)

    s = sub.add_parser("audit-law", help="randomized check of the rotated-convolution identity")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-size", type=int, default=16)
    s.add_argument("--max-kernel", type=int, default=5)
    s.add_argument("--max-stride", type=int, default=3)
    s.add_argument("--max-dilation", type=int, default=3)
    s.add_argument("--naive", action="store_true", help="keep the unrotated padding in every mode")
    s.add_argument("--f32", action="store_true", help="run in float32 with a tolerance")
    s.add_argument("--tol", type=float, default=1e-5)
    s.set_defaults(fn=cmd_audit_law)

    s = sub.add_parser("audit-net", help="RD of a network under input rotations")
    s.add_argument("--config", help="network or run config JSON")
    s.add_argument("--params", help="trained parameter directory (instead of --config)")
    s.add_argument("--angles", type=angle_list, default=[90, 180, 270])
    s.add_argument("--random", type=int, default=0, help="number of extra random angles")
    s.add_argument("--inputs", type=int, default=20)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(fn=cmd_audit_net)

    s = sub.add_parser("gen-data", help="write a synthetic segmentation dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=64)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--classes", type=int, default=2)
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("train", help="train a network from a run config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="evaluate trained parameters on a dataset")
    s.add_argument("--params", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--angles", type=angle_list, default=None)
    s.add_argument("--random", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (UsageError, SchemaError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PlanError as e:
        print(f"infeasible plan: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, FormatError, TensorError, KeyError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
