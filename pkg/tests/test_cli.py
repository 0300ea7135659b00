import json

import pytest

from thinktax.harness.cli import main


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_stats_calculators(capsys):
    code, out, _ = _run(["stats", "wilson", "370", "500"], capsys)
    doc = json.loads(out)
    assert code == 0 and round(doc["lo"], 3) == 0.700 and round(doc["hi"], 3) == 0.777
    code, out, _ = _run(["stats", "mcnemar", "6", "0"], capsys)
    assert json.loads(out)["p"] == 0.03125
    code, out, _ = _run(["stats", "hoeffding", "0.963", "475", "0.05"], capsys)
    assert abs(json.loads(out)["lower"] - 0.907) < 1e-3
    code, out, _ = _run(["stats", "decompose", "0.374", "0.99", "0.318", "--acc-nt", "0.931"], capsys)
    doc = json.loads(out)
    assert abs(doc["truncation_loss"] - 42.07) < 0.01 and abs(doc["predicted"] - 0.5693) < 1e-4


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["nonsense"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        main(["stats", "wilson", "x", "5"])
    assert ei.value.code == 1
    code, _, err = _run(["run", "--policy", "{not json"], capsys)
    assert code == 1 and "valid JSON" in err
    code, _, _ = _run(["stats", "mcnemar", "0", "0"], capsys)
    assert code == 1


def test_run_writes_reports(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, out, _ = _run(
        ["run", "--policy", '{"kind": "town", "b1": 256, "b2": 1024}', "--label", "town", "--n", "40",
         "--checkpoint", str(tmp_path / "ck.jsonl"), "--out", str(out_dir)],
        capsys,
    )
    assert code == 0 and "town" in out
    assert {p.name for p in out_dir.iterdir()} == {"summary.json", "summary.csv", "summary.txt"}
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["cells"][0]["n"] == 40


def test_sweep_diagnose_compare(tmp_path, capsys):
    spec = {
        "policies": [
            {"label": "think", "policy": {"kind": "single", "mode": "think", "budget": 1}, "budgets": [256, 512, 1024]},
            {"label": "nothink", "policy": {"kind": "single", "mode": "nothink", "budget": 1}, "budgets": [256, 512, 1024]},
        ],
        "backend": {"kind": "simulator", "preset": "gsm8k-8b"},
        "synthetic_n": 150,
        "checkpoint": "ck.jsonl",
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    code, out, _ = _run(["sweep", str(path), "--parallelism", "2"], capsys)
    assert code == 0
    ck = str(tmp_path / "ck.jsonl")
    code, out, _ = _run(["diagnose", ck, "--think-label", "think", "--nothink-label", "nothink", "--pilot-size", "25", "--repetitions", "3"], capsys)
    doc = json.loads(out)
    assert code == 0 and len(doc["rows"]) == 3 and "crossover" in doc and "pilot" in doc
    code, out, _ = _run(["compare", ck, "nothink", "think", "--budget-a", "512", "--budget-b", "512", "--iterations", "200"], capsys)
    assert code == 0 and json.loads(out)["n"] == 150


def test_simulate(capsys):
    code, out, _ = _run(["simulate", "gsm8k-8b", "--n", "300", "--budgets", "256", "512"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["configured"]["alpha_c"] == 0.99
    assert all(r["within_3se"] for r in doc["rows"])


def test_data_errors_exit_2(tmp_path, capsys):
    code, _, err = _run(["diagnose", str(tmp_path / "missing.jsonl"), "--think-label", "t"], capsys)
    assert code == 2 and "data error" in err
    bad = tmp_path / "spec.json"
    bad.write_text(json.dumps({"policies": [{"label": "x"}], "backend": {}}))
    code, _, err = _run(["sweep", str(bad)], capsys)
    assert code == 2 and "invalid sweep spec" in err
    ds = tmp_path / "d.jsonl"
    ds.write_text('{"question": "q"}\n')
    code, _, err = _run(["run", "--policy", '{"kind": "single", "mode": "think", "budget": 5}', "--dataset", str(ds)], capsys)
    assert code == 2 and "line 1" in err


def test_backend_failures_exit_3(tmp_path, capsys):
    backend = {
        "kind": "remote",
        "endpoint": {"base_url": "http://127.0.0.1:9", "model": "m", "max_retries": 0, "timeout": 0.5},
    }
    ds = tmp_path / "d.jsonl"
    ds.write_text('{"question": "2+2?", "answer": "#### 4"}\n')
    policy = '{"kind": "single", "mode": "think", "budget": 5}'
    code, _, err = _run(["run", "--policy", policy, "--dataset", str(ds), "--backend", json.dumps(backend)], capsys)
    assert code == 3 and "failed" in err
    code, _, err = _run(["run", "--policy", policy, "--n", "2", "--backend", json.dumps(backend)], capsys)
    assert code == 2 and "simulated backend" in err
