"""Model-core queries: label marginals, prediction, sampling, dominance, rank checks.

Every query accepts either a :class:`~apcalc.network.NetworkModel` (Monte
Carlo over mediator noise, seeded from the config) or a
:class:`~apcalc.discrete.DiscreteNetwork` (exact enumeration). Features,
labels and mediators are 0-based throughout the Python API.
"""
import numpy as np

from ._gauss import inner_rule, pinned_expectations, softmax
from ._rng import antithetic_normal, derive_rng
from ._validation import as_points, check_index, check_positive, check_positive_int
from .discrete import DiscreteNetwork
from .network import Dataset, EstimatorConfig

TIE_TOL = 1e-12


def argmax_lowest(values, tol=TIE_TOL):
    """Index of the maximum; values within ``tol`` of it count as ties, lowest index wins."""
    values = np.asarray(values, dtype=float)
    best = values.max()
    return int(np.flatnonzero(values >= best - tol)[0])


def _cfg(cfg):
    return EstimatorConfig() if cfg is None else cfg


def marginal_draws(model, cfg):
    """Standard-normal score draws ``(K, m)`` shared by every marginal query."""
    rng = derive_rng(cfg.seed, "marginal")
    return antithetic_normal(rng, cfg.samples_per_point, model.m)


def _softmax_samples(model, points, cfg, gradients=None):
    mu = model.score_means(points, gradients)
    z = marginal_draws(model, cfg)
    return softmax(mu[:, None, :] + model.score_std * z[None, :, :])


def _discrete_mediator_rows(net, s):
    return [t[s] for t in net.cpt_mediators]


def _discrete_label_probs(net, rows):
    m = net.m
    ops = []
    for j, r in enumerate(rows):
        ops += [r, [j]]
    ops += [net.cpt_destination, list(range(m + 1))]
    return np.einsum(*ops, [m])


def label_marginals(model, t, cfg=None):
    """``P(label = l | S = t)`` for every label.

    For a :class:`NetworkModel` this is a K-sample Monte Carlo average of the
    softmax over antithetic mediator-noise draws; ``t`` may be a single tuple
    (returns ``(m,)``) or a batch (returns ``(N, m)``). For a
    :class:`DiscreteNetwork` ``t`` is a source state and the result is exact.
    """
    if isinstance(model, DiscreteNetwork):
        s = model.check_state(t)
        return _discrete_label_probs(model, _discrete_mediator_rows(model, s))
    cfg = _cfg(cfg)
    single = np.ndim(t) == 1
    pts = as_points(t, model.n)
    probs = _softmax_samples(model, pts, cfg).mean(axis=1)
    return probs[0] if single else probs


def predict_label(model, t, cfg=None):
    """Most probable label; ties go to the lowest index."""
    probs = label_marginals(model, t, cfg)
    if probs.ndim == 1:
        return argmax_lowest(probs)
    return np.array([argmax_lowest(p) for p in probs])


def conditional_label_prob(model, t, j, x, cfg=None):
    """``P(label = l | X_j = x, S = t)`` with the other mediators integrated out."""
    if isinstance(model, DiscreteNetwork):
        s = model.check_state(t)
        j = check_index(j, model.m, "j")
        x = int(x)
        if not 0 <= x < model.mediator_cardinalities[j]:
            raise ValueError(f"mediator state {x} out of range")
        rows = _discrete_mediator_rows(model, s)
        rows[j] = np.eye(model.mediator_cardinalities[j])[x]
        return _discrete_label_probs(model, rows)
    cfg = _cfg(cfg)
    j = check_index(j, model.m, "j")
    pt = as_points(t, model.n)
    x = np.asarray(x, dtype=float).reshape(-1)
    med = model.mediators[j]
    if x.shape != (med.p,):
        raise ValueError(f"mediator {j} has dimension {med.p}, got a value of length {x.size}")
    ro = model.destination.readout[j]
    pinned = np.array([[ro.a @ x + ro.c @ pt[0] + ro.b]])
    nodes, weights = inner_rule(model.m - 1, cfg)
    probs, _ = pinned_expectations(j, pinned, model.score_means(pt), model.score_std, nodes, weights)
    return probs[0, 0]


def dominance_scores(model, t, l, cfg=None, rel_tol=1e-9):
    """Variance of ``P(label = l | X_j, S = t)`` as ``X_j`` varies, for every mediator ``j``.

    Returns ``(scores, argmax)``; the network has deconfounder structure at
    ``(t, l)`` when ``argmax == l``. Scores within ``rel_tol`` of the maximum
    are ties and resolve to the lowest index.

    The outer draws of the pinned mediator (and the inner rule for the rest)
    are shared across ``j`` so that symmetric mediators give identical scores.
    """
    if isinstance(model, DiscreteNetwork):
        s = model.check_state(t)
        l = check_index(l, model.m, "l")
        rows = _discrete_mediator_rows(model, s)
        base = _discrete_label_probs(model, rows)[l]
        scores = np.zeros(model.m)
        for j in range(model.m):
            vals = np.array([conditional_label_prob(model, s, j, x)[l]
                             for x in range(model.mediator_cardinalities[j])])
            scores[j] = np.sum(rows[j] * (vals - base) ** 2)
    else:
        cfg = _cfg(cfg)
        l = check_index(l, model.m, "l")
        pt = as_points(t, model.n)
        mu = model.score_means(pt)
        std = model.score_std
        xi = antithetic_normal(derive_rng(cfg.seed, "dominance"), cfg.samples_per_point, 1)[:, 0]
        nodes, weights = inner_rule(model.m - 1, cfg)
        scores = np.zeros(model.m)
        for j in range(model.m):
            pinned = (mu[0, j] + std[j] * xi)[None, :]
            probs, _ = pinned_expectations(j, pinned, mu, std, nodes, weights)
            scores[j] = probs[0, :, l].var()
    tol = rel_tol * float(np.max(np.abs(scores))) + 1e-300
    return scores, argmax_lowest(scores, tol=tol)


def check_dimensional_sufficiency(mediator, tol=1e-8):
    """Numerical rank ``r`` of the mediator weight and whether ``p >= r``."""
    tol = check_positive(tol, "tol")
    w = np.asarray(mediator.weight if hasattr(mediator, "weight") else mediator, dtype=float)
    w = np.atleast_2d(w)
    sv = np.linalg.svd(w, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        r = 0
    else:
        r = int(np.sum(sv > tol * sv[0]))
    return r, bool(w.shape[0] >= r)


def _sample_source(model, count, rng):
    z = rng.standard_normal((count, model.n))
    if model.source.kind == "normal":
        z = np.asarray(model.source.mean) + np.asarray(model.source.std) * z
    return z


def sample_joint(model, count, seed):
    """Draw ``count`` rows from the generative factorization.

    Returns ``(Dataset, trace)`` where ``trace[j]`` holds the realized values
    of mediator ``j`` (``(count, p_j)`` floats for a continuous model, ``(count,)``
    states for a discrete one).
    """
    count = check_positive_int(count, "count")
    if isinstance(model, DiscreteNetwork):
        draws = model.sample(count, derive_rng(seed, "sample_joint"))
        feats = np.stack([draws[v] for v in model.feature_names], axis=1)
        trace = [draws[v] for v in model.mediator_names]
        return Dataset(feats, draws["D"]), trace
    src = _sample_source(model, count, derive_rng(seed, "sample_joint", 0))
    return sample_given_source(model, src, seed)


def sample_given_source(model, features, seed):
    """Draw mediators and labels for fixed source rows; returns ``(Dataset, trace)``."""
    src = as_points(features, model.n)
    count = src.shape[0]
    rng = derive_rng(seed, "sample_joint", 1)
    trace, scores = [], np.empty((count, model.m))
    for j, (med, ro) in enumerate(zip(model.mediators, model.destination.readout)):
        x = src @ med.weight.T + med.noise_scale * rng.standard_normal((count, med.p))
        trace.append(x)
        scores[:, j] = x @ ro.a + src @ ro.c + ro.b
    probs = softmax(scores)
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = derive_rng(seed, "sample_joint", 2).random(count)
    labels = (u[:, None] >= cdf).sum(axis=1)
    return Dataset(src, labels), trace
