import numpy as np
import pytest

from apcalc.inference import sample_joint
from apcalc.network import Dataset, build_model
from apcalc.synth import (ScenarioSpec, convergence_study, duplicated_feature_scenario, fit_mediators, fit_tables,
                          generate_scenario, junction_network, net_a, random_discrete_network,
                          random_network_model, run_arch_benchmark, scaling_study, true_do_effects)

from oracles import bn_do_bf, do_effect_bf


@pytest.mark.parametrize("seed", range(3))
def test_proposed_scenario_ground_truth(seed):
    sc = generate_scenario(ScenarioSpec("proposed", n=3, m=2, sample_count=300, seed=seed))
    assert sc.data.features.shape == (300, 3) and sc.data.labels.shape == (300,)
    assert len(sc.ground_truth["do"]) == 3 * 2 * 2
    for (t, v, l), p in sc.ground_truth["do"].items():
        assert p == pytest.approx(do_effect_bf(sc.model, int(t[1:]) - 1, v, l), abs=1e-10)


@pytest.mark.parametrize("arch", ["junction", "common-cause"])
def test_comparison_scenario_ground_truth(arch):
    sc = generate_scenario(ScenarioSpec(arch, m=2, sample_count=200, seed=4))
    assert sc.data.features.shape == (200, 3)
    assert set(sc.trace) == {"A", "B"}
    np.testing.assert_array_equal(sc.data.features[:, 1], sc.trace["A"])
    for (t, v, l), p in sc.ground_truth["do"].items():
        assert t == "S"
        assert p == pytest.approx(bn_do_bf(sc.model, "S", v, "D", l), abs=1e-10)


def test_continuous_scenario():
    sc = generate_scenario(ScenarioSpec("proposed", family="continuous", n=2, m=3, p=2, sample_count=50, seed=1))
    assert sc.ground_truth["attribution"].shape == (2, 3)
    np.testing.assert_allclose(sc.ground_truth["attribution"].sum(axis=1), 0.0, atol=1e-12)
    assert len(sc.trace) == 3 and sc.trace[0].shape == (50, 2)


def test_scenarios_are_deterministic():
    spec = ScenarioSpec("junction", sample_count=100, seed=9)
    a, b = generate_scenario(spec), generate_scenario(spec)
    assert a.data.features.tobytes() == b.data.features.tobytes()
    assert a.ground_truth == b.ground_truth


def test_scenario_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("mesh")
    with pytest.raises(ValueError):
        ScenarioSpec("junction", family="continuous")
    with pytest.raises(ValueError):
        ScenarioSpec(noise=0.0)
    with pytest.raises(ValueError):
        ScenarioSpec(m=1)


# ---------------------------------------------------------------- fitting

def test_fit_tables_recovers_cpts():
    net = junction_network(3)
    samples = net.sample(200000, np.random.default_rng(0))
    fitted = fit_tables(net, samples)
    for f, g in zip(net.factors, fitted.factors):
        np.testing.assert_allclose(g.table, f.table, atol=0.02)
    truth = true_do_effects(net)
    est = true_do_effects(fitted)
    assert max(abs(est[k] - truth[k]) for k in truth) < 0.02


def test_fit_tables_keeps_discrete_network_type():
    net = random_discrete_network(2, 2, 0)
    data, trace = sample_joint(net, 5000, 0)
    samples = {"S1": data.features[:, 0].astype(int), "S2": data.features[:, 1].astype(int),
               "X1": trace[0], "X2": trace[1], "D": data.labels}
    fitted = fit_tables(net, samples)
    assert type(fitted) is type(net)
    assert fitted.n == 2 and fitted.m == 2


def test_fit_mediators_recovers_weights():
    model = random_network_model(3, 2, 2, 0, noise=0.2)
    data, trace = sample_joint(model, 20000, 1)
    specs = fit_mediators(data.features, trace)
    for spec, med in zip(specs, model.mediators):
        np.testing.assert_allclose(spec.weight, med.weight, atol=0.01)
        np.testing.assert_allclose(spec.noise_scale, 0.2, atol=0.005)


# ---------------------------------------------------------------- benchmark

def test_benchmark_structure_and_determinism():
    a = run_arch_benchmark(trials=3, sample_count=3000, seed=2)
    b = run_arch_benchmark(trials=3, sample_count=3000, seed=2)
    assert a.to_dict() == b.to_dict()
    assert [r["seed"] for r in a.trials] == [2, 3, 4]
    assert set(a.architectures) == {"proposed", "junction", "common-cause"}
    assert set(a.architectures["junction"]) == {"naive", "adjusted", "proposed_fit"}
    assert 0.0 <= a.paired_wins <= 1.0
    assert all("runtime" not in r for r in a.trials)


def test_benchmark_timings_optional():
    rep = run_arch_benchmark(trials=2, sample_count=500, seed=0, timings=True)
    assert set(rep.architectures["proposed"]) == {"own", "runtime"}


def test_benchmark_adjustment_beats_naive():
    rep = run_arch_benchmark(trials=10, sample_count=20000, seed=0)
    jn = rep.architectures["junction"]
    assert jn["adjusted"]["mean"] < jn["naive"]["mean"]
    assert rep.architectures["proposed"]["own"]["mean"] < 0.01


# ---------------------------------------------------------------- studies

def test_convergence_table():
    rows, ref = convergence_study(net_a(), Dataset([[0.0, 0.0]]), 1, 0, [100, 400, 1600], repeats=6,
                                  reference_k=100000)
    assert [r["K"] for r in rows] == [100, 400, 1600]
    assert ref == pytest.approx(-0.248762, abs=1e-3)
    assert rows[-1]["median_abs_error"] < rows[0]["median_abs_error"]
    assert all(set(r) == {"K", "mean_abs_error", "std", "median_abs_error"} for r in rows)


def test_convergence_without_noise():
    # No mediator readout: the attribution is a deterministic sigmoid slope, so every error is 0.
    model = build_model([[[1.0, 0.0]], [[0.0, 1.0]]], 0.5, [[0.0], [0.0]], readouts_c=[[1.0, 0.0], [0.0, 0.0]])
    rows, ref = convergence_study(model, Dataset([[0.0, 0.0]]), 0, 0, [2, 8, 32], repeats=3)
    assert ref == pytest.approx(0.25)
    assert all(r["mean_abs_error"] == pytest.approx(0.0, abs=1e-15) for r in rows)


def test_convergence_grid_validation():
    with pytest.raises(ValueError):
        convergence_study(net_a(), Dataset([[0.0, 0.0]]), 1, 0, [400, 100])
    with pytest.raises(ValueError):
        convergence_study(net_a(), Dataset([[0.0, 0.0]]), 1, 0, [])


def test_scaling_table_shape():
    grid = {"m": [2, 3, 4], "n": [4, 8, 16]}
    table, slopes = scaling_study(grid, base={"m": 2, "n": 4, "p": 4}, repeats=1, min_seconds=0.0)
    assert len(table) == 6 and set(slopes) == {"m", "n"}
    assert all(r["seconds"] > 0 for r in table)
    with pytest.raises(ValueError):
        scaling_study({"q": [1, 2, 3]})
    with pytest.raises(ValueError):
        scaling_study({"m": [2, 4]})


def test_duplicated_feature_scenario():
    model, train, holdout = duplicated_feature_scenario(n_train=100, n_holdout=50)
    np.testing.assert_array_equal(train.features[:, 0], train.features[:, 1])
    np.testing.assert_array_equal(holdout.features[:, 0], holdout.features[:, 1])
    assert len(train) == 100 and len(holdout) == 50
    assert np.all(model.mediators[0].weight[:, 1] == 0)
