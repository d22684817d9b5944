import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from apcalc import __version__
from apcalc.attribution import attribution_matrix
from apcalc.cli import main
from apcalc.inference import sample_joint
from apcalc.io import SCHEMA_NAMES, read_dataset, save_model, validate_document, write_dataset
from apcalc.network import Dataset, EstimatorConfig
from apcalc.synth import junction_network, net_a, net_d, random_network_model

NETD_IG = [[0.06374009658777982, 0.03315493301544402], [0.05079965766451844, 0.04762280747307344]]


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_model(d / "neta.json", net_a())
    save_model(d / "netd.json", net_d())
    save_model(d / "junction.json", junction_network(0))
    save_model(d / "rand.json", random_network_model(2, 3, 2, 0))
    data, _ = sample_joint(net_a(), 40, 1)
    write_dataset(d / "cont.csv", data)
    ddata, _ = sample_joint(net_d(), 400, 1)
    write_dataset(d / "disc.csv", ddata)
    (d / "queries.json").write_text(json.dumps({"queries": [
        {"feature": 1, "value": 1, "label": 1},
        {"feature": "S2", "value": 0, "label": 2, "method": "backdoor", "adjustment_set": ["S1"]},
        {"feature": 1, "value": 0, "label": 1, "method": "oracle"},
        {"feature": 1, "value": 0, "label": 1, "delta": 1},
    ]}), encoding="utf-8")
    (d / "jq.json").write_text(json.dumps([
        {"feature": "S", "value": 1, "label": 1, "method": "backdoor", "adjustment_set": ["A", "B"]}]),
        encoding="utf-8")
    return d


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    return json.loads(err.strip().splitlines()[-1])


# ---------------------------------------------------------------- metadata and errors

def test_version(capsys):
    code, out, _ = run(["--version"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["version"] == __version__
    assert doc["commands"] == ["attribute", "intervene", "separate", "suppress", "metrics", "benchmark",
                               "validate", "generate"]
    assert doc["schemas"] == list(SCHEMA_NAMES)


@pytest.mark.parametrize("name", SCHEMA_NAMES)
def test_schema_printing(capsys, name):
    code, out, _ = run(["--schema", name], capsys)
    assert code == 0 and json.loads(out)["$schema"].startswith("http://json-schema.org/draft-07")


@pytest.mark.parametrize("argv, status, code", [
    (["--schema", "nope"], 2, "usage"),
    (["frobnicate"], 2, "unknown_command"),
    ([], 2, "usage"),
    (["attribute", "--model", "x.json"], 2, "usage"),
    (["attribute", "--model", "missing.json", "--data", "missing.csv"], 1, "missing_file"),
    (["attribute", "--bogus"], 2, "usage"),
    (["separate", "--data", "d.csv", "--mode", "max"], 2, "usage"),
])
def test_error_exit_codes(capsys, argv, status, code):
    rc, _, err = run(argv, capsys)
    assert rc == status
    assert error_line(err)["error"] == code


def test_schema_violation_exit(ws, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "continuous", "n": 2, "m": 1}), encoding="utf-8")
    rc, _, err = run(["attribute", "--model", bad, "--data", ws / "cont.csv"], capsys)
    assert rc == 1 and error_line(err)["error"] == "schema_violation"


def test_invalid_input_exit(ws, capsys):
    rc, _, err = run(["attribute", "--model", ws / "netd.json", "--data", ws / "disc.csv"], capsys)
    assert rc == 1 and error_line(err)["error"] == "invalid_input"
    rc, _, err = run(["suppress", "--model", ws / "neta.json", "--data", ws / "cont.csv", "--feature", 3,
                      "--label", 1, "--out", ws / "x.json"], capsys)
    assert rc == 1 and error_line(err)["error"] == "invalid_input"


def test_thread_env_validation(ws, capsys, monkeypatch):
    monkeypatch.setenv("APCALC_THREADS", "zero")
    rc, _, err = run(["attribute", "--model", ws / "neta.json", "--data", ws / "cont.csv"], capsys)
    assert rc == 2 and error_line(err)["error"] == "usage"
    monkeypatch.setenv("APCALC_THREADS", "1")
    rc, _, _ = run(["attribute", "--model", ws / "neta.json", "--data", ws / "cont.csv", "--k", 10], capsys)
    assert rc == 0


# ---------------------------------------------------------------- commands

def test_attribute_matches_library(ws, capsys):
    rc, out, _ = run(["attribute", "--model", ws / "neta.json", "--data", ws / "cont.csv", "--k", 300,
                      "--seed", 4], capsys)
    assert rc == 0
    doc = json.loads(out)
    validate_document(doc, "attribution_report")
    data = read_dataset(ws / "cont.csv")
    rep = attribution_matrix(net_a(), data, "marginal", EstimatorConfig(samples_per_point=300, seed=4))
    np.testing.assert_array_equal(doc["scores"], rep.scores)
    assert doc["K"] == 300 and doc["estimator"] == "marginal"


def test_config_precedence(ws, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 50, "estimator": "conditional", "per-point": False}), encoding="utf-8")
    base = ["attribute", "--model", ws / "neta.json", "--data", ws / "cont.csv", "--config", cfg]
    rc, out, _ = run(base, capsys)
    doc = json.loads(out)
    assert rc == 0 and doc["K"] == 50 and doc["estimator"] == "conditional"
    rc, out, _ = run(base + ["--k", 60], capsys)
    assert json.loads(out)["K"] == 60
    cfg.write_text(json.dumps({"kk": 1}), encoding="utf-8")
    rc, _, err = run(base, capsys)
    assert rc == 2 and "kk" in error_line(err)["message"]


def test_intervene_discrete(ws, capsys):
    rc, out, err = run(["intervene", "--model", ws / "netd.json", "--queries", ws / "queries.json",
                        "--data", ws / "disc.csv", "--k", 50, "--oracle"], capsys)
    assert rc == 0, err
    res = json.loads(out)["results"]
    assert [r["method"] for r in res] == ["ap", "backdoor", "oracle", "contrast"]
    assert res[0]["oracle"] == pytest.approx(0.72)
    assert abs(res[0]["estimate"] - 0.72) <= 3 * res[0]["std_error"]
    assert res[1]["abs_error"] <= 1e-10
    assert res[2]["estimate"] == pytest.approx(0.462)
    assert res[3]["oracle"] == pytest.approx(0.72 - 0.462)
    assert res[1]["query"]["feature"] == "S2"


def test_intervene_junction_backdoor(ws, capsys):
    rc, out, _ = run(["intervene", "--model", ws / "junction.json", "--queries", ws / "jq.json", "--oracle"],
                     capsys)
    assert rc == 0
    r = json.loads(out)["results"][0]
    assert r["abs_error"] <= 1e-12


def test_intervene_invalid_adjustment(ws, tmp_path, capsys):
    q = tmp_path / "q.json"
    q.write_text(json.dumps([{"feature": "S", "value": 1, "label": 1, "method": "backdoor",
                              "adjustment_set": ["A"]}]), encoding="utf-8")
    rc, _, err = run(["intervene", "--model", ws / "junction.json", "--queries", q], capsys)
    assert rc == 1 and error_line(err)["error"] == "invalid_input"


def test_intervene_continuous(ws, tmp_path, capsys):
    q = tmp_path / "q.json"
    q.write_text(json.dumps([{"feature": 1, "value": 0.5, "label": 1},
                             {"feature": 2, "value": None, "label": 1, "delta": 0.01}]), encoding="utf-8")
    rc, out, _ = run(["intervene", "--model", ws / "neta.json", "--queries", q, "--data", ws / "cont.csv"],
                     capsys)
    assert rc == 0
    res = json.loads(out)["results"]
    assert 0 < res[0]["estimate"] < 1 and res[1]["estimate"] < 0


def test_separate(ws, capsys):
    rc, out, _ = run(["separate", "--data", ws / "cont.csv", "--labels", 1, 2, "--mode", "dist",
                      "--n-candidates", 4, "--model", ws / "neta.json"], capsys)
    doc = json.loads(out)
    assert rc == 0 and doc["labels"] == [1, 2] and doc["mode"] == "dist"
    assert doc["distance"] > 0 and len(doc["scores"]) == 6


def test_separate_with_candidate_file(ws, tmp_path, capsys):
    c = tmp_path / "c.json"
    c.write_text(json.dumps([{"id": "diff", "kind": "linear-projection", "weight": [1, -1], "unary": "identity"},
                             {"id": "sum", "kind": "linear-projection", "weight": [1, 1], "unary": "identity"}]),
                 encoding="utf-8")
    rc, out, _ = run(["separate", "--data", ws / "cont.csv", "--candidates", c, "--mode", "dist"], capsys)
    assert rc == 0 and json.loads(out)["best"]["id"] == "diff"


def test_suppress(tmp_path, capsys):
    from apcalc.synth import duplicated_feature_scenario

    model, train, holdout = duplicated_feature_scenario(n_train=200, n_holdout=300)
    save_model(tmp_path / "m.json", model)
    write_dataset(tmp_path / "train.csv", train)
    write_dataset(tmp_path / "hold.csv", holdout)
    rc, _, err = run(["suppress", "--model", tmp_path / "m.json", "--data", tmp_path / "train.csv",
                      "--holdout", tmp_path / "hold.csv", "--feature", 2, "--label", 1, "--k", 128,
                      "--out", tmp_path / "out.json", "--trace", tmp_path / "trace.csv"], capsys)
    assert rc == 0, err
    with open(tmp_path / "trace.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["iter", "R", "accuracy"]
    assert float(rows[-1]["R"]) <= 0.05 and float(rows[0]["R"]) >= 0.3
    assert float(rows[-1]["accuracy"]) >= float(rows[0]["accuracy"]) - 0.02


def test_metrics_discrete(ws, capsys):
    rc, out, _ = run(["metrics", "--model", ws / "netd.json", "--data", ws / "disc.csv", "--epsilon", 0.1],
                     capsys)
    doc = json.loads(out)
    assert rc == 0 and doc["info_gain_method"] == "exact" and doc["estimator"] == "do-contrast"
    np.testing.assert_allclose(doc["info_gain"], NETD_IG, atol=1e-14)
    np.testing.assert_allclose(doc["attribution"][0], [0.72 - 0.462, 0.462 - 0.72], atol=1e-12)
    assert doc["fairness"][0]["feature"] == 1 and "within_epsilon" in doc["fairness"][0]


def test_metrics_continuous(ws, capsys):
    rc, out, _ = run(["metrics", "--model", ws / "neta.json", "--data", ws / "cont.csv", "--k", 100], capsys)
    doc = json.loads(out)
    assert rc == 0 and doc["info_gain_method"] == "plug-in"
    assert np.asarray(doc["info_gain"]).shape == (2, 2)
    assert all(0 <= v <= 1 for row in doc["spurious"] for v in row)


def test_benchmark_small(tmp_path, capsys):
    rc, out, _ = run(["benchmark", "--trials", 2, "--n-samples", 500, "--convergence", "--k-grid", 10, 40,
                      "--repeats", 3, "--reference-k", 4000, "--csv-dir", tmp_path / "tables"], capsys)
    doc = json.loads(out)
    assert rc == 0 and len(doc["trials"]) == 2
    assert [r["K"] for r in doc["convergence"]] == [10, 40]
    assert doc["convergence"][0]["ratio"] is None and doc["convergence"][1]["ratio"] > 0
    assert sorted(p.name for p in (tmp_path / "tables").iterdir()) == ["convergence.csv", "trials.csv"]


def test_validate_pass_and_fail(ws, capsys):
    rc, out, _ = run(["validate", "--suite", "axioms", "--model", ws / "neta.json", "--data", ws / "cont.csv",
                      "--k", 100], capsys)
    assert rc == 0 and json.loads(out)["passed"] is True
    rc, out, err = run(["validate", "--suite", "axioms", "--model", ws / "rand.json", "--k", 100], capsys)
    assert rc == 1 and json.loads(out)["passed"] is False
    assert "FAILED dominance[" in err and error_line(err)["error"] == "validation_failed"
    rc, out, _ = run(["validate", "--suite", "oracle", "--model", ws / "netd.json", "--k", 20,
                      "--n-samples", 1000], capsys)
    assert rc == 0


def test_generate_then_attribute(tmp_path, capsys):
    rc, _, _ = run(["generate", "--family", "continuous", "--n", 3, "--m", 2, "--n-samples", 30,
                    "--out", tmp_path / "sc.json", "--model-out", tmp_path / "m.json",
                    "--data-out", tmp_path / "d.csv"], capsys)
    assert rc == 0
    sc = json.loads((tmp_path / "sc.json").read_text(encoding="utf-8"))
    assert sc["columns"] == ["S1", "S2", "S3"] and len(sc["ground_truth"]["attribution"]) == 3
    rc, out, _ = run(["attribute", "--model", tmp_path / "m.json", "--data", tmp_path / "d.csv", "--k", 20],
                     capsys)
    assert rc == 0 and np.asarray(json.loads(out)["scores"]).shape == (3, 2)


def test_generate_junction(tmp_path, capsys):
    rc, _, _ = run(["generate", "--architecture", "junction", "--out", tmp_path / "sc.json",
                    "--data-out", tmp_path / "d.csv"], capsys)
    sc = json.loads((tmp_path / "sc.json").read_text(encoding="utf-8"))
    assert rc == 0 and sc["columns"] == ["S", "A", "B"]
    assert len(sc["ground_truth"]["do_effects"]) == 4
    assert read_dataset(tmp_path / "d.csv").n == 3


def test_stdout_equals_out_file(ws, tmp_path, capsys):
    argv = ["attribute", "--model", ws / "neta.json", "--data", ws / "cont.csv", "--k", 50]
    _, out, _ = run(argv, capsys)
    run(argv + ["--out", tmp_path / "r.json"], capsys)
    assert (tmp_path / "r.json").read_text(encoding="utf-8") == out


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "apcalc.cli", "--version"], capture_output=True, text=True,
                          check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["name"] == "apcalc"


def test_labels_in_files_are_one_based(ws, tmp_path, capsys):
    write_dataset(tmp_path / "bad.csv", Dataset([[0.0, 0.0]], [5]))
    rc, _, err = run(["metrics", "--model", ws / "neta.json", "--data", tmp_path / "bad.csv"], capsys)
    assert rc == 1 and error_line(err)["error"] == "schema_violation"
