#!/usr/bin/env python3
"""Train the PreCM and plain-conv toy nets and tabulate IOU/MIOU/DICE and RD.

    python3 scripts/compare_flavors.py --out runs/compare [--epochs 5] [--count 64]

Writes <out>/<flavor>/ (parameters, loss.csv, report.json) and <out>/summary.csv.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
from pathlib import Path

from precm.data import gen_shapes
from precm.experiment import RunConfig, evaluate, train, write_training
from precm.layers import build_net

CONFIGS = Path(__file__).parent / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/compare")
    ap.add_argument("--epochs", type=int, default=None, help="override the config's epoch count")
    ap.add_argument("--count", type=int, default=None, help="override the training-set size")
    ap.add_argument("--test-count", type=int, default=16)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    rows = []
    for flavor in ("precm", "baseline"):
        cfg = RunConfig.load(CONFIGS / f"{flavor}_toy.json")
        d, t = cfg.data, cfg.train
        epochs = args.epochs if args.epochs is not None else t["epochs"]
        count = args.count if args.count is not None else d["count"]
        net = build_net(cfg.net)
        hist = train(net, gen_shapes(d["seed"], count, d["size"]), d["classes"], epochs,
                     t["lr"], t["momentum"], t["batch"], t["seed"])
        write_training(out / flavor, net, hist)
        test = gen_shapes(d["seed"] + 1000, args.test_count, d["size"])
        report = evaluate(net, test, d["classes"], cfg.eval["angles"], cfg.eval["random_angle_count"], seed=0)
        (out / flavor / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        rand = [r["rd"] for r in report["rd"]["random"]]
        rows.append({
            "flavor": flavor,
            "params": net.parameter_count(),
            "final_loss": f"{hist[-1]:.4f}" if hist else "",
            "iou": f"{report['iou']:.4f}",
            "miou": f"{report['miou']:.4f}",
            "dice": f"{report['dice']:.4f}",
            **{f"rd_{a}": f"{report['rd'][str(a)]:.4f}" for a in cfg.eval["angles"]},
            "rd_random_mean": f"{sum(rand) / len(rand):.4f}" if rand else "",
        })
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print("  ".join(f"{k}={v}" for k, v in r.items()))


if __name__ == "__main__":
    main()
