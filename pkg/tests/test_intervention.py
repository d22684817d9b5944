import warnings

import numpy as np
import pytest

from apcalc.discrete import DiscreteBN, Factor
from apcalc.inference import sample_joint
from apcalc.intervention import (AdjustmentWarning, InterventionQuery, InterventionResult, InvalidAdjustmentError,
                                 backdoor_adjust, causal_effect, causal_effect_oracle, do_effect_ap,
                                 do_effect_oracle, frontdoor_adjust, run_query)
from apcalc.attribution import attribution_marginal
from apcalc.network import Dataset, EstimatorConfig, build_model
from apcalc.synth import (common_cause_network, confounded_chain_network, junction_network,
                          random_discrete_network, random_network_model)

from oracles import bn_do_bf, do_effect_bf

# P(label 1 | do(S_i = v)) on NET-D, keyed (i, v).
NETD_DO_L0 = {(0, 0): 0.462, (0, 1): 0.72, (1, 0): 0.45, (1, 1): 0.685}


@pytest.mark.parametrize("key", list(NETD_DO_L0))
def test_netd_oracle(netd, key):
    i, v = key
    p = do_effect_oracle(netd, InterventionQuery(i, v, 0)).estimate
    assert p == pytest.approx(NETD_DO_L0[key], abs=1e-12)
    assert do_effect_bf(netd, i, v, 0) == pytest.approx(NETD_DO_L0[key], abs=1e-12)
    assert do_effect_oracle(netd, InterventionQuery(i, v, 1)).estimate == pytest.approx(1 - NETD_DO_L0[key])


def test_netd_do_differs_from_conditioning(netd):
    # The correlated prior makes observational conditioning disagree with do().
    joint = netd.marginal(["S1", "D"])
    cond = joint[1, 0] / joint[1].sum()
    assert abs(cond - NETD_DO_L0[(0, 1)]) > 0.01


@pytest.mark.parametrize("seed", range(4))
def test_ap_within_three_standard_errors(seed):
    net = random_discrete_network(3, 2, seed, correlated=True)
    data, _ = sample_joint(net, 2000, seed)
    cfg = EstimatorConfig(samples_per_point=50, seed=seed)
    for i in range(3):
        for v in (0, 1):
            q = InterventionQuery(i, v, 1)
            res = do_effect_ap(net, data, q, cfg)
            truth = do_effect_bf(net, i, v, 1)
            assert res.samples == 50 * 2000
            assert abs(res.estimate - truth) <= 3 * res.std_error + 1e-12


def test_ap_standard_error_is_calibrated():
    # Over fresh data and draws the z-scores against the oracle are close to standard normal.
    net = random_discrete_network(4, 2, 5, correlated=True)
    q = InterventionQuery(2, 1, 0)
    exact = do_effect_oracle(net, q).estimate
    zs = []
    for rep in range(200):
        data, _ = sample_joint(net, 500, 5000 + rep)
        res = do_effect_ap(net, data, q, EstimatorConfig(samples_per_point=20, seed=rep))
        zs.append((res.estimate - exact) / res.std_error)
    zs = np.asarray(zs)
    assert abs(zs.mean()) < 0.25
    assert 0.85 < zs.std() < 1.15


@pytest.mark.parametrize("seed", range(3))
def test_junction_backdoor_exact(seed):
    net = junction_network(seed)
    for v in (0, 1):
        for l in (0, 1):
            q = InterventionQuery("S", v, l, adjustment_set=("A", "B"))
            truth = bn_do_bf(net, "S", v, "D", l)
            assert backdoor_adjust(net, q).estimate == pytest.approx(truth, abs=1e-12)
            assert do_effect_oracle(net, q).estimate == pytest.approx(truth, abs=1e-12)


@pytest.mark.parametrize("z", [(), ("A",), ("B",)])
def test_junction_incomplete_backdoor_rejected(z):
    with pytest.raises(InvalidAdjustmentError):
        backdoor_adjust(junction_network(0), InterventionQuery("S", 1, 0, adjustment_set=z))


def test_backdoor_rejects_descendants_and_outcome():
    net = common_cause_network(1)
    with pytest.raises(InvalidAdjustmentError):
        backdoor_adjust(net, InterventionQuery("S", 1, 0, adjustment_set=("A",)))
    with pytest.raises(InvalidAdjustmentError):
        backdoor_adjust(net, InterventionQuery("S", 1, 0, adjustment_set=("D",)))
    # No confounding: the empty set is valid and equals the oracle.
    q = InterventionQuery("S", 1, 0, adjustment_set=())
    assert backdoor_adjust(net, q).estimate == pytest.approx(bn_do_bf(net, "S", 1, "D", 0), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_frontdoor_on_confounded_chain(seed):
    net = confounded_chain_network(seed)
    for v in (0, 1):
        q = InterventionQuery("S", v, 1, adjustment_set=("X",))
        truth = bn_do_bf(net, "S", v, "D", 1)
        assert frontdoor_adjust(net, q).estimate == pytest.approx(truth, abs=1e-12)
        assert backdoor_adjust(net, InterventionQuery("S", v, 1, adjustment_set=("U",))).estimate == \
            pytest.approx(truth, abs=1e-12)
        with pytest.raises(InvalidAdjustmentError):
            backdoor_adjust(net, InterventionQuery("S", v, 1, adjustment_set=()))
    # Naive conditioning is biased by U.
    joint = net.marginal(["S", "D"])
    naive = joint[1, 1] / joint[1].sum()
    assert abs(naive - bn_do_bf(net, "S", 1, "D", 1)) > 1e-3


def test_frontdoor_invalid_sets():
    net = junction_network(0)
    with pytest.raises(InvalidAdjustmentError):
        frontdoor_adjust(net, InterventionQuery("S", 1, 0, adjustment_set=("A",)))
    with pytest.raises(InvalidAdjustmentError):
        frontdoor_adjust(net, InterventionQuery("S", 1, 0))
    with pytest.raises(InvalidAdjustmentError):
        frontdoor_adjust(confounded_chain_network(0), InterventionQuery("S", 1, 0, adjustment_set=()))


@pytest.mark.parametrize("seed", range(4))
def test_frontdoor_on_discrete_network_with_product_prior(seed):
    net = random_discrete_network(2, 2, seed)
    for i in range(2):
        q = InterventionQuery(i, 1, 0)
        assert frontdoor_adjust(net, q).estimate == pytest.approx(do_effect_bf(net, i, 1, 0), abs=1e-12)


def test_zero_cell_warning():
    cards = {"A": 2, "S": 2, "D": 2}
    net = DiscreteBN(cards, [
        Factor(("A",), (), [0.5, 0.5]),
        Factor(("S",), ("A",), [[1.0, 0.0], [0.3, 0.7]]),
        Factor(("D",), ("A", "S"), [[[0.9, 0.1], [0.2, 0.8]], [[0.6, 0.4], [0.1, 0.9]]]),
    ])
    q = InterventionQuery("S", 1, 1, adjustment_set=("A",))
    with pytest.warns(AdjustmentWarning):
        res = backdoor_adjust(net, q)
    assert res.warnings == [{"code": "zero_probability_cells", "cells": 1, "dropped_mass": 0.5}]
    # The surviving cell A=1 carries all the weight after renormalization.
    assert res.estimate == pytest.approx(0.9)


def test_no_warning_on_positive_tables():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = backdoor_adjust(junction_network(2), InterventionQuery("S", 0, 0, adjustment_set=("A", "B")))
    assert res.warnings == []


# ---------------------------------------------------------------- continuous models

def test_causal_effect_slope_matches_marginal_attribution():
    model = random_network_model(3, 3, 2, 5, direct=0.3)
    data = Dataset(np.random.default_rng(5).normal(size=(20, 3)))
    cfg = EstimatorConfig(samples_per_point=400, seed=2)
    delta = 1e-5  # forward difference: truncation error ~ |f''| delta / 2
    for i in range(3):
        tau = causal_effect(model, data, InterventionQuery(i, None, 1, delta=delta), cfg)
        assert tau / delta == pytest.approx(attribution_marginal(model, data, i, 1, cfg), abs=1e-6)


def test_disconnected_feature_has_no_effect():
    model = build_model([[[1.0, 0.0]], [[0.5, 0.0]]], 0.3, [[1.0], [1.0]])
    data = Dataset(np.random.default_rng(0).normal(size=(10, 2)))
    assert causal_effect(model, data, InterventionQuery(1, None, 0, delta=2.0)) == 0.0
    assert causal_effect(model, data, InterventionQuery(1, 0.0, 0, delta=2.0)) == 0.0


def test_continuous_do_effect_is_mean_of_marginals(neta):
    data = Dataset(np.random.default_rng(1).normal(size=(50, 2)))
    res = do_effect_ap(neta, data, InterventionQuery(0, 0.0, 0), EstimatorConfig(samples_per_point=2000, seed=0))
    # Symmetric about the diagonal: do(S_1=0) with S_2 ~ data.
    assert 0 < res.estimate < 1 and res.std_error > 0


def test_discrete_contrast_oracle(netd):
    q = InterventionQuery(0, 0, 0, delta=1)
    assert causal_effect_oracle(netd, q) == pytest.approx(NETD_DO_L0[(0, 1)] - NETD_DO_L0[(0, 0)], abs=1e-12)
    data, _ = sample_joint(netd, 4000, 2)
    est = causal_effect(netd, data, q, EstimatorConfig(samples_per_point=100, seed=0))
    assert est == pytest.approx(0.258, abs=0.02)


# ---------------------------------------------------------------- validation

def test_query_validation(netd):
    with pytest.raises(ValueError):
        InterventionQuery(0, 1, 0, delta=0)
    with pytest.raises(ValueError):
        InterventionQuery(0, 1, 0.5)
    with pytest.raises(ValueError):
        do_effect_oracle(netd, InterventionQuery(0, 2, 0))
    with pytest.raises(IndexError):
        do_effect_oracle(netd, InterventionQuery(2, 0, 0))
    with pytest.raises(IndexError):
        do_effect_oracle(netd, InterventionQuery(0, 0, 2))
    with pytest.raises(TypeError):
        backdoor_adjust(random_network_model(2, 2, 1, 0), InterventionQuery(0, 0, 0))
    with pytest.raises(ValueError):
        run_query(netd, None, InterventionQuery(0, 0, 0), method="ipw")
    with pytest.raises(ValueError):
        InterventionResult(0.5, "magic")


def test_run_query_attaches_oracle(netd):
    data, _ = sample_joint(netd, 500, 1)
    res = run_query(netd, data, InterventionQuery(1, 1, 0), "ap", EstimatorConfig(samples_per_point=20), oracle=True)
    assert res.oracle == pytest.approx(NETD_DO_L0[(1, 1)])
    assert res.abs_error == pytest.approx(abs(res.estimate - res.oracle))
    doc = res.to_dict()
    assert set(doc) == {"estimate", "method", "oracle", "abs_error", "samples", "std_error", "warnings"}
