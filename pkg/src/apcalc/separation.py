"""Separation distances between mediators and separation-function learning."""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc, rankdata

from ._validation import check_index, check_positive_int
from .network import Dataset, NetworkModel

UNARY = {
    "identity": lambda v: v,
    "tanh": np.tanh,
    "square": np.square,
}
MODES = ("literal-mi", "neg-mi", "dist")


@dataclass(frozen=True, eq=False)
class SeparationCandidate:
    """``phi(t) = unary(weight . t)``."""

    id: str
    weight: np.ndarray
    unary: str = "identity"

    def __post_init__(self):
        w = np.array(self.weight, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(w)) or not np.any(w != 0):
            raise ValueError(f"candidate {self.id!r} needs a finite, non-zero weight vector")
        if self.unary not in UNARY:
            raise ValueError(f"unknown unary transform {self.unary!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @property
    def kind(self):
        return "linear-projection" if self.unary == "identity" else "named-unary"

    def __call__(self, features):
        return UNARY[self.unary](np.asarray(features, dtype=float) @ self.weight)

    def to_dict(self):
        return {"id": self.id, "kind": self.kind, "weight": self.weight.tolist(), "unary": self.unary}

    @classmethod
    def from_dict(cls, doc):
        return cls(str(doc["id"]), doc["weight"], doc.get("unary", "identity"))


@dataclass(frozen=True, eq=False)
class SeparationResult:
    best: SeparationCandidate
    scores: dict = field(default_factory=dict)
    mode: str = "literal-mi"

    def to_dict(self):
        return {"best": self.best.to_dict(), "scores": dict(self.scores), "mode": self.mode}


def _mediator_moments(model, data, j):
    med = model.mediators[j]
    return data @ med.weight.T, med.noise_scale


def separation_distance(model, j, k, data, metric="sym-kl"):
    """Mean over ``data`` of the distance between ``P(X_j | S=t)`` and ``P(X_k | S=t)``.

    ``metric="sym-kl"`` is ``KL(P||Q) + KL(Q||P)`` for the two diagonal
    Gaussians; ``metric="hellinger"`` is the Hellinger distance.
    """
    if not isinstance(model, NetworkModel):
        raise TypeError("separation distances need a continuous NetworkModel")
    j = check_index(j, model.m, "j")
    k = check_index(k, model.m, "k")
    if j == k:
        raise ValueError("j and k must differ")
    if model.mediators[j].p != model.mediators[k].p:
        raise ValueError(f"mediators {j} and {k} have different dimensions")
    pts = data.features if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, float))
    if pts.shape[0] == 0:
        raise ValueError("dataset is empty")
    mu_j, s_j = _mediator_moments(model, pts, j)
    mu_k, s_k = _mediator_moments(model, pts, k)
    vj, vk = s_j**2, s_k**2
    d2 = (mu_j - mu_k) ** 2
    if metric == "sym-kl":
        per = 0.5 * np.sum((vj + d2) / vk + (vk + d2) / vj - 2.0, axis=1)
    elif metric == "hellinger":
        bc = np.prod(np.sqrt(2 * s_j * s_k / (vj + vk))) * np.exp(-0.25 * np.sum(d2 / (vj + vk), axis=1))
        per = np.sqrt(np.maximum(1.0 - bc, 0.0))
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return float(np.mean(per))


def equal_frequency_bins(z, bins):
    """Bin index per value using ranks, so ties share a bin and monotone maps change nothing."""
    z = np.asarray(z, dtype=float)
    ranks = rankdata(z, method="min") - 1
    return np.minimum((ranks * bins) // z.size, bins - 1).astype(np.int64)


def _plugin_mi(a, b):
    """Plug-in mutual information (nats) between two small-alphabet integer arrays."""
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    p = table / table.sum()
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (pa @ pb)[nz])))


def plugin_cmi(a, b, c):
    """Plug-in ``I(a; b | c)`` for discrete arrays, averaged over the strata of ``c``."""
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    total = 0.0
    for v in np.unique(c):
        sel = c == v
        total += sel.mean() * _plugin_mi(a[sel], b[sel])
    return total


def conditional_mi(dj, dk, z, bins=8):
    """``I(D_j; D_k | bin(z))`` in nats with equal-frequency binning of ``z``."""
    dj, dk, z = np.asarray(dj), np.asarray(dk), np.asarray(z, dtype=float)
    bins = check_positive_int(bins, "bins")
    if not (dj.shape == dk.shape == z.shape) or dj.ndim != 1:
        raise ValueError("dj, dk and z must be 1-d sequences of equal length")
    if dj.size < bins:
        raise ValueError(f"need at least bins={bins} observations, got {dj.size}")
    val = plugin_cmi(dj, dk, equal_frequency_bins(z, bins))
    if val < 0:
        if val < -1e-12:
            raise FloatingPointError(f"conditional MI estimate {val} is negative beyond round-off")
        val = 0.0
    return val


def fisher_ratio(values, labels, j, k):
    """``(mean_j - mean_k)^2 / (var_j + var_k)`` of projected values for classes ``j`` and ``k``."""
    a, b = values[labels == j], values[labels == k]
    den = a.var() + b.var()
    num = (a.mean() - b.mean()) ** 2
    if den == 0:
        return np.inf if num > 0 else 0.0
    return float(num / den)


def default_candidates(n, count=32, seed=0):
    """The ``n`` axis projections plus ``count`` quasi-random unit directions."""
    cands = []
    for i in range(n):
        w = np.zeros(n)
        w[i] = 1.0
        cands.append(SeparationCandidate(f"axis{i + 1:03d}", w))
    if count:
        u = qmc.Sobol(d=n, scramble=True, seed=seed).random(count)
        g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        for r, w in enumerate(g):
            cands.append(SeparationCandidate(f"sphere{r:03d}", w))
    return cands


def learn_separation(data, j, k, candidates=None, mode="literal-mi", bins=8):
    """Pick the candidate transform that optimizes the separation score for labels ``j``, ``k``.

    ``literal-mi`` maximizes ``I(D_j; D_k | phi(S))``, ``neg-mi`` minimizes it,
    and ``dist`` maximizes the Fisher ratio between the two classes' projected
    values. Ties go to the lexicographically smallest id.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if data.labels is None:
        raise ValueError("learn_separation needs labeled data")
    if candidates is None:
        candidates = default_candidates(data.n)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate set is empty")
    labels = data.labels
    for c in (j, k):
        if not np.any(labels == c):
            raise ValueError(f"class {c} is missing from the data")
    dj = (labels == j).astype(np.int64)
    dk = (labels == k).astype(np.int64)
    scores = {}
    for cand in candidates:
        if cand.id in scores:
            raise ValueError(f"duplicate candidate id {cand.id!r}")
        z = cand(data.features)
        if mode == "dist":
            scores[cand.id] = fisher_ratio(z, labels, j, k)
        else:
            scores[cand.id] = conditional_mi(dj, dk, z, bins)
    sign = -1.0 if mode == "neg-mi" else 1.0
    best_val = max(sign * v for v in scores.values())
    best_id = min(cid for cid, v in scores.items() if sign * v == best_val)
    best = next(c for c in candidates if c.id == best_id)
    return SeparationResult(best=best, scores=scores, mode=mode)
