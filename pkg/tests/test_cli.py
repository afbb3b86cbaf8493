import json
import subprocess
import sys

import numpy as np
import pytest

from privest.cli import main
from privest.core import FiniteDistribution, constant_channel, random_channel
from privest.mechanisms import release_one_at_random


@pytest.fixture
def channel_file(tmp_path):
    def write(q, name="q.json"):
        path = tmp_path / name
        path.write_text(q.dumps())
        return str(path)

    return write


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_audit_constant_channel_passes(capsys, channel_file):
    q = constant_channel((0, 1), 2, FiniteDistribution(("a", "b"), [0.3, 0.7]))
    code, out, _ = run(capsys, "audit", channel_file(q), "--definitions", "dp,tv,kl", "--eps", "0.1")
    assert code == 0
    doc = json.loads(out)
    assert [v["definition"] for v in doc["verdicts"]] == ["dp", "tv", "kl"]
    assert all(v["holds"] and "witness" not in v for v in doc["verdicts"])


def test_audit_failure_reports_witness(capsys, channel_file):
    q = release_one_at_random((0, 1, 2), 2)
    code, out, _ = run(capsys, "audit", channel_file(q), "--definitions", "chtp", "--eps-ch", "0.5")
    assert code == 1
    verdict = json.loads(out)["verdicts"][0]
    assert not verdict["holds"]
    assert verdict["witness"]
    code, out, _ = run(capsys, "audit", channel_file(q), "--definitions", "dp", "--eps", "1")
    assert code == 1
    assert json.loads(out)["verdicts"][0]["tight_param"] == "inf"


def test_audit_approx_dp_and_out_file(capsys, channel_file, tmp_path):
    q = random_channel(np.random.default_rng(0), 2, 2, 3)
    out = tmp_path / "verdict.json"
    code, stdout, _ = run(
        capsys, "audit", channel_file(q), "--definitions", "approx_dp", "--eps", "0.2", "--delta", "1", "--out", str(out)
    )
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["verdicts"][0]["holds"]


def test_audit_input_errors(capsys, tmp_path, channel_file):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "audit", str(bad))[0] == 2
    assert run(capsys, "audit", str(tmp_path / "missing.json"))[0] == 2
    bad.write_text(json.dumps({"input_alphabet": [0, 1]}))
    assert run(capsys, "audit", str(bad))[0] == 2
    q = random_channel(np.random.default_rng(1), 2, 1, 2)
    assert run(capsys, "audit", channel_file(q), "--definitions", "nonsense")[0] == 2
    assert run(capsys, "audit", channel_file(q), "--definitions", "chtp")[0] == 2
    assert run(capsys, "audit", channel_file(q), "--definitions", "smooth_dp")[0] == 2


def test_caps(capsys, channel_file):
    q = random_channel(np.random.default_rng(2), 3, 3, 2)
    assert run(capsys, "audit", channel_file(q), "--cap", "10")[0] == 3
    assert run(capsys, "audit", channel_file(q), "--cap", "20000")[0] == 2
    assert run(capsys, "audit", channel_file(q), "--cap", "27")[0] in (0, 1)


def test_bounds_requires_seed(capsys):
    code, _, err = run(capsys, "bounds")
    assert code == 2 and "--seed" in err


def test_bounds_small_config(capsys, tmp_path):
    cfg = tmp_path / "b.json"
    cfg.write_text(
        json.dumps(
            {
                "command": "bounds",
                "contraction": {"instances": 5},
                "mass_everywhere": {"instances": 3},
                "evaluators": True,
            }
        )
    )
    code, out, _ = run(capsys, "bounds", str(cfg), "--seed", "3")
    assert code == 0
    doc = json.loads(out)
    assert doc["ok"]
    uniform = [e for e in doc["evaluators"] if e["evaluator"] == "uniform_support_lower_bound"][0]
    assert uniform["value"] == pytest.approx(0.003125, rel=1e-12)


def test_bounds_bad_config(capsys, tmp_path):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps({"command": "bounds", "contraction": {"instances": -1}}))
    assert run(capsys, "bounds", str(cfg), "--seed", "1")[0] == 2
    cfg.write_text(json.dumps({"command": "bench"}))
    assert run(capsys, "bounds", str(cfg), "--seed", "1")[0] == 2


SMALL_BENCH = {
    "command": "bench",
    "sweeps": [
        {
            "mechanism": {"variant": "kl-gaussian", "r": 1.0, "k_moments": "inf", "d": 2, "n": 10, "eps_kl": 0.5},
            "family": {"family": "bounded-ball", "d": 2},
            "grid": {"axis": "n", "values": [8, 16, 32, 64]},
            "reps": 100,
            "fit_window": [0, 4],
        }
    ],
}


def test_bench_rejects_low_reps(capsys, tmp_path):
    cfg = tmp_path / "bench.json"
    doc = json.loads(json.dumps(SMALL_BENCH))
    doc["sweeps"][0]["reps"] = 0
    cfg.write_text(json.dumps(doc))
    assert run(capsys, "bench", str(cfg), "--seed", "1")[0] == 2
    cfg.write_text(json.dumps(SMALL_BENCH))
    assert run(capsys, "bench", str(cfg))[0] == 2


def test_bench_byte_identical_reruns(capsys, tmp_path):
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps(SMALL_BENCH))
    outs = []
    for i, jobs in enumerate(("1", "2")):
        prefix = tmp_path / f"run{i}"
        assert run(capsys, "bench", str(cfg), "--seed", "42", "--jobs", jobs, "--out", str(prefix))[0] == 0
        outs.append((prefix.with_suffix(".csv").read_bytes(), prefix.with_suffix(".json").read_bytes()))
    assert outs[0] == outs[1]
    report = json.loads(outs[0][1])
    assert report["sweeps"][0]["fitted_slope"] < 0
    assert outs[0][0].count(b"\n") == 5


def test_selftest(capsys, tmp_path):
    out = tmp_path / "self.json"
    code, text, _ = run(capsys, "selftest", "--seed", "0", "--out", str(out))
    assert code == 0
    assert text.count("PASS") == 5
    assert all(r["ok"] for r in json.loads(out.read_text())["results"])
    code, text, _ = run(capsys, "selftest", "--seed", "0", "--inject-fault", "--out", str(out))
    assert code != 0
    failed = [r["check"] for r in json.loads(out.read_text())["results"] if not r["ok"]]
    assert failed == ["testing_equivalence"]
    assert "FAIL testing_equivalence" in text


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "privest.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "audit" in res.stdout and "selftest" in res.stdout
