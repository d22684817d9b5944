import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apcalc.network import Dataset, build_model
from apcalc.separation import (SeparationCandidate, conditional_mi, default_candidates, equal_frequency_bins,
                               learn_separation, separation_distance)
from apcalc.synth import random_network_model

from oracles import gaussian_sym_kl


def test_sym_kl_unit_shift():
    # Equal unit variances, means one apart: KL each way is 1/2.
    model = build_model([[[1.0, 0.0]], [[0.0, 0.0]]], 1.0, [[1.0], [1.0]])
    assert separation_distance(model, 0, 1, Dataset([[1.0, 5.0]])) == pytest.approx(1.0, abs=1e-14)


def test_sym_kl_identical_mediators():
    model = build_model([[[1.0, 2.0]], [[1.0, 2.0]]], 0.4, [[1.0], [1.0]])
    assert separation_distance(model, 0, 1, Dataset([[0.3, -1.0], [2.0, 1.0]])) == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.1, 10))
def test_sym_kl_matches_oracle_and_is_symmetric(seed, scale):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(2, 3, 2))
    noise = [rng.uniform(0.2, 2.0, size=3) for _ in range(2)]
    model = build_model(list(w), noise, [np.ones(3)] * 2)
    t = rng.normal(size=(4, 2))
    d = separation_distance(model, 0, 1, Dataset(t))
    assert d == pytest.approx(separation_distance(model, 1, 0, Dataset(t)), rel=1e-12)
    expect = np.mean([gaussian_sym_kl(w[0] @ row, noise[0], w[1] @ row, noise[1]) for row in t])
    assert d == pytest.approx(expect, rel=1e-10, abs=1e-12)
    assert d >= 0
    # With equal noise the divergence is quadratic in the mean gap.
    eq = build_model([w[0], w[1]], 0.7, [np.ones(3)] * 2)
    scaled = build_model([w[0] * scale, w[1] * scale], 0.7, [np.ones(3)] * 2)
    pt = Dataset(t[:1])
    assert separation_distance(scaled, 0, 1, pt) == pytest.approx(scale**2 * separation_distance(eq, 0, 1, pt),
                                                                  rel=1e-9)


def test_hellinger_bounds():
    model = random_network_model(2, 3, 2, 1)
    data = Dataset(np.random.default_rng(1).normal(size=(10, 2)))
    h = separation_distance(model, 0, 2, data, metric="hellinger")
    assert 0 <= h <= 1
    far = build_model([[[100.0, 0.0]], [[-100.0, 0.0]]], 0.1, [[1.0], [1.0]])
    assert separation_distance(far, 0, 1, Dataset([[1.0, 0.0]]), metric="hellinger") == pytest.approx(1.0)


def test_distance_errors():
    model = random_network_model(2, 3, 2, 1)
    data = Dataset([[0.0, 0.0]])
    with pytest.raises(ValueError):
        separation_distance(model, 1, 1, data)
    with pytest.raises(IndexError):
        separation_distance(model, 0, 3, data)
    with pytest.raises(ValueError):
        separation_distance(model, 0, 1, data, metric="wasserstein")
    uneven = build_model([[[1.0, 0.0]], [[0.0, 1.0], [1.0, 1.0]]], 0.1, [[1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        separation_distance(uneven, 0, 1, data)


# ---------------------------------------------------------------- conditional MI

def test_cmi_constant_conditioner_is_ln2():
    dj = np.array([1, 0] * 50)
    assert conditional_mi(dj, 1 - dj, np.zeros(100), bins=4) == pytest.approx(math.log(2), abs=1e-14)


def test_cmi_separating_conditioner_is_zero():
    dj = np.array([1, 0] * 50)
    assert conditional_mi(dj, 1 - dj, dj.astype(float), bins=2) == 0.0


def test_cmi_independent_indicators():
    dj = np.array([0, 0, 1, 1] * 25)
    dk = np.array([0, 1, 0, 1] * 25)
    assert conditional_mi(dj, dk, np.zeros(100)) == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_cmi_invariant_to_monotone_maps(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=200)
    lab = (z + rng.normal(size=200) > 0).astype(int) + (rng.random(200) < 0.3)
    dj, dk = (lab == 0).astype(int), (lab == 1).astype(int)
    base = conditional_mi(dj, dk, z)
    assert conditional_mi(dj, dk, np.exp(z)) == base
    assert conditional_mi(dj, dk, z**3 + 2 * z) == base
    assert base >= 0


def test_cmi_errors():
    with pytest.raises(ValueError):
        conditional_mi([0, 1], [1, 0], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        conditional_mi([0, 1], [1, 0], [0.0, 1.0], bins=8)


def test_equal_frequency_bins_share_ties():
    b = equal_frequency_bins([3.0, 1.0, 1.0, 2.0], 2)
    assert b[1] == b[2] == 0 and b[0] == 1


# ---------------------------------------------------------------- learning

def _labeled(seed=0, n=600):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(n, 2))
    labels = np.where(s[:, 0] + 0.3 * rng.normal(size=n) > 0, 0, 1)
    return Dataset(s, labels)


def test_learn_modes_pick_expected_axis():
    data = _labeled()
    cands = default_candidates(2, count=0)
    assert learn_separation(data, 0, 1, cands, mode="dist").best.id == "axis001"
    # Conditioning on S_1 removes the dependence between the two indicators.
    assert learn_separation(data, 0, 1, cands, mode="neg-mi").best.id == "axis001"
    assert learn_separation(data, 0, 1, cands, mode="literal-mi").best.id == "axis002"


def test_learn_tie_breaks_on_smallest_id():
    data = _labeled()
    cands = [SeparationCandidate("b", [1.0, 0.0]), SeparationCandidate("a", [2.0, 0.0])]
    res = learn_separation(data, 0, 1, cands, mode="neg-mi")
    assert res.scores["a"] == res.scores["b"]
    assert res.best.id == "a"


def test_learn_errors():
    data = _labeled()
    with pytest.raises(ValueError):
        learn_separation(data, 0, 1, mode="max-mi")
    with pytest.raises(ValueError):
        learn_separation(Dataset(data.features), 0, 1)
    with pytest.raises(ValueError):
        learn_separation(data, 0, 2)
    with pytest.raises(ValueError):
        learn_separation(data, 0, 1, candidates=[])
    dup = [SeparationCandidate("a", [1.0, 0.0]), SeparationCandidate("a", [0.0, 1.0])]
    with pytest.raises(ValueError):
        learn_separation(data, 0, 1, dup)


def test_candidate_validation_and_round_trip():
    with pytest.raises(ValueError):
        SeparationCandidate("z", [0.0, 0.0])
    with pytest.raises(ValueError):
        SeparationCandidate("z", [1.0], unary="cube")
    c = SeparationCandidate("t", [0.5, -1.0], unary="tanh")
    back = SeparationCandidate.from_dict(c.to_dict())
    assert back.id == "t" and back.kind == "named-unary"
    np.testing.assert_array_equal(back(np.eye(2)), c(np.eye(2)))


def test_default_candidates_deterministic():
    a = default_candidates(3, 8, seed=5)
    b = default_candidates(3, 8, seed=5)
    assert [c.id for c in a] == [c.id for c in b]
    assert all(np.array_equal(x.weight, y.weight) for x, y in zip(a, b))
    assert len(a) == 11
    np.testing.assert_allclose([np.linalg.norm(c.weight) for c in a], 1.0)
