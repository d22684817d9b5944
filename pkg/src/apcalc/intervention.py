"""Interventional queries: the sampling do-estimator, exact oracle, backdoor and frontdoor adjustment."""
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ._rng import derive_rng
from ._validation import check_index
from .discrete import LABEL_NODE, DiscreteBN, DiscreteNetwork, feature_node
from .graph import d_separated
from .inference import label_marginals
from .network import EstimatorConfig, NetworkModel

METHODS = ("ap", "backdoor", "frontdoor", "oracle")
_CHUNK_ELEMENTS = 1 << 20


class InvalidAdjustmentError(ValueError):
    """The requested adjustment set or mediator set fails its graphical criterion."""


class AdjustmentWarning(UserWarning):
    """Adjustment cells with zero probability were dropped and the weights renormalized."""


@dataclass(frozen=True)
class InterventionQuery:
    """``do(S_feature = value)`` evaluated for outcome state ``label``.

    ``feature`` is a 0-based source index, or a node name for generic
    :class:`~apcalc.discrete.DiscreteBN` networks. ``outcome`` names the
    outcome node (the label node ``"D"`` by default). ``adjustment_set`` is
    the backdoor set ``Z`` or, for frontdoor adjustment, the mediator set.
    """

    feature: object
    value: object
    label: int
    delta: float = None
    adjustment_set: tuple = None
    outcome: str = None

    def __post_init__(self):
        if self.delta is not None and self.delta == 0:
            raise ValueError("delta must be non-zero")
        if self.adjustment_set is not None:
            object.__setattr__(self, "adjustment_set", tuple(self.adjustment_set))
        if isinstance(self.label, (bool, np.bool_)) or int(self.label) != self.label:
            raise ValueError("label must be an integer index")

    def to_dict(self):
        return {"feature": self.feature, "value": self.value, "label": int(self.label),
                "delta": self.delta,
                "adjustment_set": None if self.adjustment_set is None else list(self.adjustment_set),
                "outcome": self.outcome}


@dataclass(frozen=True)
class InterventionResult:
    estimate: float
    method: str
    oracle: float = None
    abs_error: float = None
    samples: int = None
    std_error: float = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.oracle is not None and self.abs_error is None:
            object.__setattr__(self, "abs_error", abs(self.estimate - self.oracle))

    def with_oracle(self, oracle):
        return InterventionResult(self.estimate, self.method, float(oracle), None, self.samples,
                                  self.std_error, list(self.warnings))

    def to_dict(self):
        return {"estimate": self.estimate, "method": self.method, "oracle": self.oracle,
                "abs_error": self.abs_error, "samples": self.samples, "std_error": self.std_error,
                "warnings": list(self.warnings)}


def _cfg(cfg):
    return EstimatorConfig() if cfg is None else cfg


def _treatment(net, q):
    if isinstance(q.feature, str):
        name = q.feature
    else:
        if not isinstance(net, DiscreteNetwork):
            raise TypeError("integer features need a DiscreteNetwork; use node names otherwise")
        name = feature_node(check_index(q.feature, net.n, "feature"))
    net.axis(name)
    value = int(q.value)
    if value != q.value or not 0 <= value < net.card(name):
        raise ValueError(f"value {q.value!r} is not a state of {name}")
    return name, value


def _outcome(net, q):
    name = q.outcome or LABEL_NODE
    net.axis(name)
    check_index(q.label, net.card(name), "label")
    return name, int(q.label)


def _row_stats(rows):
    n = rows.size
    se = float(rows.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(rows.mean()), se


def _discrete_rows(net, states, l, cfg):
    """Per-row Monte Carlo means of ``P(label = l | X)`` with ``X_j ~ P(X_j | s)``."""
    k = cfg.samples_per_point
    n_rows = states.shape[0]
    chunk = max(1, _CHUNK_ELEMENTS // k)
    idx = tuple(states.T)
    out = np.empty(n_rows)
    dest = net.cpt_destination[..., l]
    for c, start in enumerate(range(0, n_rows, chunk)):
        sl = slice(start, start + chunk)
        xs = []
        for j, cpt in enumerate(net.cpt_mediators):
            probs = cpt[tuple(a[sl] for a in idx)]
            cdf = np.cumsum(probs, axis=1)
            cdf[:, -1] = 1.0
            u = derive_rng(cfg.seed, "do_effect", c, j).random((probs.shape[0], k))
            xs.append((u[:, :, None] >= cdf[:, None, :]).sum(axis=2))
        out[sl] = dest[tuple(xs)].mean(axis=1)
    return out


def _intervened_rows(model, data, i, value):
    if data is None or len(data) == 0:
        raise ValueError("data is empty")
    if data.n != model.n:
        raise ValueError(f"data has {data.n} features, model expects {model.n}")
    rows = data.features.copy()
    rows[:, i] = value
    return rows


def do_effect_rows(model, data, i, l, value, cfg=None):
    """Per-row estimates of ``P(label = l | do(S_i = value), S_-i = row)``."""
    cfg = _cfg(cfg)
    if isinstance(model, DiscreteNetwork):
        i = check_index(i, model.n, "feature")
        l = check_index(l, model.m, "label")
        v = int(value)
        if v != value or not 0 <= v < model.feature_cardinalities[i]:
            raise ValueError(f"value {value!r} is not a state of feature {i}")
        rows = _intervened_rows(model, data, i, v)
        states = rows.astype(np.int64)
        if np.any(states != rows):
            raise ValueError("discrete data must hold integer states")
        for c, card in enumerate(model.feature_cardinalities):
            if np.any((states[:, c] < 0) | (states[:, c] >= card)):
                raise ValueError(f"feature {c} has states outside 0..{card - 1}")
        return _discrete_rows(model, states, l, cfg)
    if not isinstance(model, NetworkModel):
        raise TypeError("do_effect_ap needs a NetworkModel or DiscreteNetwork")
    i = check_index(i, model.n, "feature")
    l = check_index(l, model.m, "label")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError("intervention value must be finite")
    return label_marginals(model, _intervened_rows(model, data, i, value), cfg)[:, l]


def do_effect_ap(model, data, q, cfg=None):
    """``P(label = l | do(S_i = v))`` by truncated-factorization sampling.

    Each data row supplies ``S_-i`` with ``S_i`` overwritten by ``q.value``;
    mediators are drawn from ``P(X_j | S)`` with ``K`` samples per row and the
    destination probability is averaged. The standard error is the spread of
    the row estimates over ``sqrt(N)``, so it covers both the Monte Carlo
    noise and the sampling of ``S_-i`` from the data.
    """
    cfg = _cfg(cfg)
    if isinstance(q.feature, str):
        raise TypeError("do_effect_ap takes a feature index")
    rows = do_effect_rows(model, data, q.feature, q.label, q.value, cfg)
    est, se = _row_stats(rows)
    k = cfg.samples_per_point if isinstance(model, DiscreteNetwork) else 2 * ((cfg.samples_per_point + 1) // 2)
    return InterventionResult(est, "ap", samples=k * rows.size, std_error=se)


def do_effect_oracle(net, q):
    """Exact ``P(Y = l | do(T = v))`` from the truncated factorization."""
    if not isinstance(net, DiscreteBN):
        raise TypeError("the exact oracle needs a discrete network")
    t, v = _treatment(net, q)
    y, l = _outcome(net, q)
    p = float(net.intervene({t: v}).marginal([y])[l])
    return InterventionResult(p, "oracle", oracle=p)


def _outgoing(g, nodes):
    return [(u, w) for u in nodes for w in g.successors(u)]


def _check_names(net, names, t, y, what):
    names = tuple(str(z) for z in names)
    for z in names:
        net.axis(z)
    if t in names or y in names:
        raise InvalidAdjustmentError(f"{what} must not contain the treatment or outcome")
    if len(set(names)) != len(names):
        raise InvalidAdjustmentError(f"{what} has repeated nodes")
    return names


def check_backdoor(net, t, y, z):
    """Raise :class:`InvalidAdjustmentError` unless ``z`` satisfies the backdoor criterion."""
    g = net.graph()
    bad = set(z) & nx.descendants(g, t)
    if bad:
        raise InvalidAdjustmentError(f"adjustment set contains descendants of {t}: {sorted(bad)}")
    if not d_separated(g, t, y, z, removed_edges=_outgoing(g, [t])):
        raise InvalidAdjustmentError(f"adjustment set {list(z)} leaves a backdoor path from {t} to {y} open")


def check_frontdoor(net, t, y, mset):
    """Raise :class:`InvalidAdjustmentError` unless ``mset`` satisfies the frontdoor criterion."""
    g = net.graph()
    if not mset:
        raise InvalidAdjustmentError("frontdoor adjustment needs a non-empty mediator set")
    cut = g.copy()
    cut.remove_nodes_from(mset)
    if nx.has_path(cut, t, y):
        raise InvalidAdjustmentError(f"{list(mset)} does not intercept every directed path {t} -> {y}")
    if not d_separated(g, t, set(mset), (), removed_edges=_outgoing(g, [t])):
        raise InvalidAdjustmentError(f"open backdoor path from {t} into the mediator set")
    if not d_separated(g, set(mset), y, {t}, removed_edges=_outgoing(g, mset)):
        raise InvalidAdjustmentError(f"backdoor path from the mediator set to {y} not blocked by {t}")


def _zero_cell_warning(cells, mass):
    info = {"code": "zero_probability_cells", "cells": int(cells), "dropped_mass": float(mass)}
    warnings.warn(f"{cells} adjustment cells with zero probability dropped "
                  f"(weight {mass:.3g}); weights renormalized", AdjustmentWarning, stacklevel=3)
    return info


def backdoor_adjust(net, q):
    """``sum_z P(Y = l | T = v, Z = z) P(Z = z)`` after checking that ``Z`` is a valid backdoor set."""
    if not isinstance(net, DiscreteBN):
        raise TypeError("backdoor adjustment needs a discrete network")
    t, v = _treatment(net, q)
    y, l = _outcome(net, q)
    z = _check_names(net, q.adjustment_set or (), t, y, "adjustment set")
    check_backdoor(net, t, y, z)
    joint = net.marginal([t, *z, y])[v]
    p_tz = joint.sum(axis=-1)
    p_z = net.marginal(list(z)) if z else np.array(1.0)
    valid = p_tz > 0
    notes = []
    if not np.all(valid | (p_z == 0)):
        dropped = p_z[~valid]
        notes.append(_zero_cell_warning(np.count_nonzero(dropped), dropped.sum()))
    w = np.where(valid, p_z, 0.0)
    if w.sum() <= 0:
        raise ZeroDivisionError(f"{t}={v} has zero probability in every adjustment cell")
    cond = np.where(valid, joint[..., l] / np.where(valid, p_tz, 1.0), 0.0)
    est = float(np.sum(w * cond) / w.sum())
    return InterventionResult(est, "backdoor", warnings=notes)


def frontdoor_adjust(net, q):
    """``sum_x P(x | v) sum_s' P(Y = l | x, s') P(s')`` after checking the frontdoor criterion.

    The mediator set is ``q.adjustment_set``; for a :class:`DiscreteNetwork` it
    defaults to all mediators.
    """
    if not isinstance(net, DiscreteBN):
        raise TypeError("frontdoor adjustment needs a discrete network")
    t, v = _treatment(net, q)
    y, l = _outcome(net, q)
    mset = q.adjustment_set
    if mset is None:
        if not isinstance(net, DiscreteNetwork):
            raise InvalidAdjustmentError("frontdoor adjustment needs an explicit mediator set")
        mset = net.mediator_names
    mset = _check_names(net, mset, t, y, "mediator set")
    check_frontdoor(net, t, y, mset)
    joint = net.marginal([t, *mset, y])
    p_tm = joint.sum(axis=-1)
    p_t = p_tm.reshape(p_tm.shape[0], -1).sum(axis=1)
    if p_t[v] <= 0:
        raise ZeroDivisionError(f"{t}={v} has zero probability")
    p_m_given_v = p_tm[v] / p_t[v]
    valid = p_tm > 0
    cond = np.where(valid, joint[..., l] / np.where(valid, p_tm, 1.0), 0.0)
    shape = (-1,) + (1,) * len(mset)
    w = np.where(valid, p_t.reshape(shape), 0.0)
    wsum = w.sum(axis=0)
    notes = []
    needed = p_m_given_v > 0
    if np.any(needed & (wsum <= 0)):
        raise ZeroDivisionError("a reachable mediator state never occurs with any treatment value")
    short = needed & (wsum < 1.0 - 1e-15)
    if np.any(short):
        notes.append(_zero_cell_warning(np.count_nonzero(short), float(np.sum(1.0 - wsum[short]))))
    inner = np.where(needed, (w * cond).sum(axis=0) / np.where(wsum > 0, wsum, 1.0), 0.0)
    est = float(np.sum(p_m_given_v * inner))
    return InterventionResult(est, "frontdoor", warnings=notes)


def causal_effect(model, data, q, cfg=None):
    """Contrast ``tau = P(l | do(v + delta)) - P(l | do(v))`` averaged over the data.

    With ``q.value`` set, both arms intervene at fixed values. With
    ``q.value=None`` every row is shifted from its observed ``s_i`` to
    ``s_i + delta``, so ``tau / delta`` is a finite-difference slope of the
    marginal. Both arms use the same random draws.
    """
    if q.delta is None:
        raise ValueError("causal_effect needs a non-zero delta")
    cfg = _cfg(cfg)
    i = q.feature
    if q.value is not None:
        hi = do_effect_rows(model, data, i, q.label, q.value + q.delta, cfg)
        lo = do_effect_rows(model, data, i, q.label, q.value, cfg)
        return float(np.mean(hi - lo))
    if isinstance(model, DiscreteNetwork):
        raise ValueError("discrete contrasts need an explicit base value")
    i = check_index(i, model.n, "feature")
    l = check_index(q.label, model.m, "label")
    if data is None or len(data) == 0:
        raise ValueError("data is empty")
    shifted = data.features.copy()
    shifted[:, i] += q.delta
    hi = label_marginals(model, shifted, cfg)[:, l]
    lo = label_marginals(model, data.features, cfg)[:, l]
    return float(np.mean(hi - lo))


def causal_effect_oracle(net, q):
    """Exact ``P(l | do(v + delta)) - P(l | do(v))`` on a discrete network."""
    if q.delta is None or q.value is None:
        raise ValueError("the exact contrast needs a base value and a delta")
    hi = InterventionQuery(q.feature, q.value + q.delta, q.label, outcome=q.outcome)
    lo = InterventionQuery(q.feature, q.value, q.label, outcome=q.outcome)
    return do_effect_oracle(net, hi).estimate - do_effect_oracle(net, lo).estimate


def run_query(model, data, q, method="ap", cfg=None, oracle=False):
    """Dispatch one query to ``method`` and optionally attach the exact oracle."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "ap":
        res = do_effect_ap(model, data, q, cfg)
    elif method == "backdoor":
        res = backdoor_adjust(model, q)
    elif method == "frontdoor":
        res = frontdoor_adjust(model, q)
    else:
        res = do_effect_oracle(model, q)
    if oracle and method != "oracle":
        if not isinstance(model, DiscreteBN):
            raise TypeError("the oracle needs a discrete network")
        res = res.with_oracle(do_effect_oracle(model, q).estimate)
    return res

