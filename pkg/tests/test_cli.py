import hashlib
import json
from pathlib import Path

import pytest

from precm.experiment import REPORT_SCHEMA, validate
from precm.layers import appendix_e_config

GOLDEN = Path(__file__).parent / "golden"


def tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode() + b"\0" + p.read_bytes())
    return h.hexdigest()


def write_run(path: Path, flavor="precm", epochs=1, count=4, size=16, dtype="f32", **eval_):
    doc = {
        "net": appendix_e_config(block_channels=2, flavor=flavor, dtype=dtype).to_dict(),
        "data": {"seed": 0, "count": count, "size": size, "classes": 2},
        "train": {"epochs": epochs, "lr": 0.05, "momentum": 0.9, "batch": 2, "seed": 0},
    }
    if eval_:
        doc["eval"] = eval_
    path.write_text(json.dumps(doc))
    return path


# ---- pad-plan ------------------------------------------------------------------------


def test_pad_plan_golden(run_cli):
    code, out, _ = run_cli("pad-plan", "--in", "4x3", "--out", "2x2", "--kernel", "3x2", "--stride", "2x2")
    assert code == 0
    assert json.loads(out) == json.loads((GOLDEN / "pad_plan_iiid.json").read_text())


def test_pad_plan_detail(run_cli):
    code, out, _ = run_cli("pad-plan", "--in", "4x3", "--out", "2x2", "--kernel", "3x2", "--stride", "2", "--detail")
    doc = json.loads(out)
    assert code == 0 and doc["sigma1"]["kernel"] == [2, 3] and doc["sigma1"]["input"] == [3, 4]


def test_pad_plan_same_size_one_by_one(run_cli):
    code, out, _ = run_cli("pad-plan", "--in", "5x5", "--out", "5x5", "--kernel", "1x1")
    assert code == 0
    assert all(v == 0 for plan in json.loads(out).values() for v in plan.values())


@pytest.mark.parametrize("out_size", ["20x20", "2x2"])
def test_pad_plan_infeasible(run_cli, out_size):
    code, out, err = run_cli("pad-plan", "--in", "8x8", "--out", out_size, "--kernel", "1x1" if out_size == "20x20" else "3x3")
    assert code == 2 and out == "" and "infeasible" in err


@pytest.mark.parametrize("argv", [["pad-plan", "--in", "ax3", "--kernel", "3"], ["pad-plan", "--kernel", "3"], ["nope"], []])
def test_usage_errors_exit_1(run_cli, argv):
    with pytest.raises(SystemExit) as e:
        run_cli(*argv)
    assert e.value.code == 1


# ---- audits ------------------------------------------------------------------------------


def test_audit_law_default(run_cli):
    code, out, _ = run_cli("audit-law", "--trials", 25, "--seed", 3)
    assert code == 0 and out.splitlines()[0] == "25 trials, 100 checks, 0 failures"


def test_audit_law_vacuous(run_cli):
    code, out, _ = run_cli("audit-law", "--trials", 0)
    assert code == 0 and out.startswith("0 trials, 0 checks, 0 failures")


def test_audit_law_f32(run_cli):
    code, out, _ = run_cli("audit-law", "--trials", 10, "--f32", "--tol", "1e-5")
    assert code == 0 and "0 failures" in out


def test_audit_law_naive_confirms_failure(run_cli):
    code, out, _ = run_cli("audit-law", "--naive", "--trials", 0)
    assert code == 3
    assert "first counterexample" in out
    first = json.loads(out.splitlines()[1].split(": ", 1)[1])
    assert first["input"] == [4, 3] and first["kernel"] == [3, 2]


def test_audit_net_precm_and_baseline(run_cli, tmp_path):
    cfg = write_run(tmp_path / "run.json")
    code, out, _ = run_cli("audit-net", "--config", cfg, "--inputs", 3, "--size", 16, "--random", 5)
    lines = out.splitlines()
    assert code == 0 and lines[:3] == ["rd 90 0.0000", "rd 180 0.0000", "rd 270 0.0000"]
    assert len(lines) == 8 and all(0.0 <= float(l.split()[2]) <= 1.0 for l in lines[3:])
    net_only = tmp_path / "net.json"
    net_only.write_text(json.dumps(appendix_e_config(block_channels=2, flavor="baseline", seed=2).to_dict()))
    code, out, _ = run_cli("audit-net", "--config", net_only, "--inputs", 3, "--size", 16, "--json")
    rds = [r["rd"] for r in json.loads(out)["rd"]]
    assert code == 0 and max(rds) > 0


def test_audit_net_schema_violation(run_cli, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"layers": [{"type": "precm1", "channels": 0}]}))
    code, _, err = run_cli("audit-net", "--config", bad)
    assert code == 1 and "network config" in err


# ---- data, train, eval -------------------------------------------------------------------


def test_gen_data_deterministic_and_loadable(run_cli, tmp_path):
    for d in ("a", "b"):
        assert run_cli("gen-data", "--out", tmp_path / d, "--seed", 7, "--count", 3, "--size", 32, "--classes", 3)[0] == 0
    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
    from precm.data import load_dataset

    samples, manifest = load_dataset(tmp_path / "a")
    assert len(samples) == 3 and manifest["num_classes"] == 3
    assert run_cli("gen-data", "--out", tmp_path / "empty", "--count", 0)[0] == 0
    assert [p.name for p in (tmp_path / "empty").iterdir()] == ["manifest.json"]


def test_gen_data_bad_arguments(run_cli, tmp_path):
    assert run_cli("gen-data", "--out", tmp_path / "x", "--size", 8)[0] == 1
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run_cli("gen-data", "--out", blocker / "sub", "--count", 1, "--size", 16)[0] == 4


def test_train_eval_flow(run_cli, tmp_path):
    cfg = write_run(tmp_path / "run.json", epochs=2, angles=[90, 180, 270, 30], random_angle_count=1)
    assert run_cli("gen-data", "--out", tmp_path / "data", "--count", 3, "--size", 16)[0] == 0
    code, out, _ = run_cli("train", "--config", cfg, "--out", tmp_path / "model")
    assert code == 0
    csv = (tmp_path / "model" / "loss.csv").read_text().splitlines()
    assert csv[0] == "epoch,loss" and [l.split(",")[0] for l in csv[1:]] == ["1", "2"]
    assert (tmp_path / "model" / "manifest.json").exists()
    code, out, _ = run_cli("eval", "--params", tmp_path / "model", "--data", tmp_path / "data", "--report", tmp_path / "r.json")
    report = json.loads((tmp_path / "r.json").read_text())
    validate(report, REPORT_SCHEMA, "report")
    assert code == 0 and set(report["rd"]) == {"90", "180", "270", "30", "random"}
    assert report["rd"]["90"] == report["rd"]["180"] == report["rd"]["270"] == 0.0
    assert "rd 90 0.0000" in out


def test_eval_report_golden(run_cli, tmp_path):
    """Untrained f64 net on a fixed tiny dataset; the full report is pinned."""
    cfg = write_run(tmp_path / "run.json", epochs=0, dtype="f64")
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "m")[0] == 0
    assert run_cli("gen-data", "--out", tmp_path / "d", "--seed", 3, "--count", 2, "--size", 16)[0] == 0
    code, _, _ = run_cli("eval", "--params", tmp_path / "m", "--data", tmp_path / "d", "--report", tmp_path / "r.json",
                         "--angles", "90,180,270,45", "--random", 1, "--seed", 2)
    assert code == 0
    assert json.loads((tmp_path / "r.json").read_text()) == json.loads((GOLDEN / "report_untrained.json").read_text())


def test_train_rejects_bad_config(run_cli, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"net": {}}))
    assert run_cli("train", "--config", bad, "--out", tmp_path / "o")[0] == 1
    assert not (tmp_path / "o").exists()
    bad.write_text("{not json")
    assert run_cli("train", "--config", bad, "--out", tmp_path / "o")[0] == 1
    assert run_cli("train", "--config", tmp_path / "missing.json", "--out", tmp_path / "o")[0] == 4


def test_eval_missing_files(run_cli, tmp_path):
    assert run_cli("eval", "--params", tmp_path / "nope", "--data", tmp_path, "--report", tmp_path / "r.json")[0] == 4


def test_eval_class_mismatch(run_cli, tmp_path):
    cfg = write_run(tmp_path / "run.json", epochs=0)
    run_cli("train", "--config", cfg, "--out", tmp_path / "m")
    run_cli("gen-data", "--out", tmp_path / "d", "--count", 1, "--size", 16, "--classes", 3)
    assert run_cli("eval", "--params", tmp_path / "m", "--data", tmp_path / "d", "--report", tmp_path / "r.json")[0] == 1


def test_audit_law_naive_random_trials(run_cli):
    code, out, _ = run_cli("audit-law", "--naive", "--trials", 200, "--seed", 0)
    summary = out.splitlines()[0]
    assert code == 3 and summary.startswith("201 trials, 804 checks") and not summary.endswith(" 0 failures")
