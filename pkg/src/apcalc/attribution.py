"""Attribution projections of source features onto labels.

Two estimators are available:

``conditional``
    ``E_{X_l}[d P(label=l | X_l = x_l, S=t) / d t_i]`` with ``x_l`` drawn from
    its conditional distribution and held fixed while differentiating. The
    remaining mediators are integrated out, so the source enters through the
    explicit ``c`` terms and through the other mediators' means.
``marginal``
    ``d P(label=l | S=t) / d t_i``, the total derivative of the label marginal.

Both are averaged over the rows of a dataset. Gradients are analytic for the
softmax-over-Gaussian-scores destination; the Monte Carlo draws are shared
across evaluation points, so finite differences of the corresponding
probability estimates reproduce them to O(h^2).
"""
from dataclasses import dataclass

import numpy as np

from ._gauss import inner_rule, pinned_expectations, softmax
from ._rng import antithetic_normal, derive_rng
from ._validation import as_points, check_index
from .inference import label_marginals, marginal_draws
from .network import Dataset, EstimatorConfig, NetworkModel

ESTIMATORS = ("conditional", "marginal")
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class AttributionReport:
    """Dataset-level attribution matrix, indexed ``[feature, label]``."""

    scores: np.ndarray
    uncertainty: np.ndarray = None
    direct: np.ndarray = None
    indirect: np.ndarray = None
    std_error: np.ndarray = None
    estimator: str = "marginal"
    sample_count: int = 0
    seed: int = 0
    per_point: np.ndarray = None

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def m(self):
        return self.scores.shape[1]

    def to_dict(self):
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        doc = {
            "scores": arr(self.scores),
            "uncertainty": arr(self.uncertainty),
            "direct": arr(self.direct),
            "indirect": arr(self.indirect),
            "std_error": arr(self.std_error),
            "estimator": self.estimator,
            "K": int(self.sample_count),
            "seed": int(self.seed),
        }
        if self.per_point is not None:
            doc["per_point"] = arr(self.per_point)
        return doc

    @classmethod
    def from_dict(cls, doc):
        def arr(key):
            v = doc.get(key)
            return None if v is None else np.asarray(v, dtype=float)

        return cls(scores=arr("scores"), uncertainty=arr("uncertainty"), direct=arr("direct"),
                   indirect=arr("indirect"), std_error=arr("std_error"),
                   estimator=doc.get("estimator", "marginal"), sample_count=int(doc.get("K", 0)),
                   seed=int(doc.get("seed", 0)), per_point=arr("per_point"))


def _check(model, data, i=None, l=None):
    if not isinstance(model, NetworkModel):
        raise TypeError("attribution needs a continuous NetworkModel")
    if not isinstance(data, Dataset):
        data = Dataset(np.asarray(data, dtype=float))
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if data.n != model.n:
        raise ValueError(f"dataset has {data.n} features, model expects {model.n}")
    if i is not None:
        check_index(i, model.n, "i")
    if l is not None:
        check_index(l, model.m, "l")
    return data.features


def _cfg(cfg):
    return EstimatorConfig() if cfg is None else cfg


def _marginal_jacobians(model, points, cfg, gradients, per_point=False):
    """Mean softmax Jacobian ``d p / d u`` over draws, summed over points (and per point if asked)."""
    z = marginal_draws(model, cfg)
    K, m = z.shape
    total = np.zeros((m, m))
    per = np.empty((points.shape[0], m, m)) if per_point else None
    step = max(1, _CHUNK_ELEMENTS // (K * m))
    for lo in range(0, points.shape[0], step):
        chunk = points[lo:lo + step]
        mu = model.score_means(chunk, gradients)
        sig = softmax(mu[:, None, :] + model.score_std * z[None])
        mean_sig = sig.mean(axis=1)
        outer = np.einsum("cki,ckj->cij", sig, sig) / K
        jac = -outer
        idx = np.arange(m)
        jac[:, idx, idx] += mean_sig
        total += jac.sum(axis=0)
        if per is not None:
            per[lo:lo + step] = jac
    return total, per


def _coef_stats(coef, rows):
    """Mean, pooled variance and standard error of the per-draw gradients ``coef @ rows``.

    ``coef`` is ``(N, K, m)`` with antithetic partners in the two halves of
    the K axis; ``rows`` is ``(m, n)``.
    """
    N, K, m = coef.shape
    mean = coef.reshape(-1, m).mean(axis=0) @ rows
    if N * K >= 2:
        cov = np.cov(coef.reshape(-1, m), rowvar=False, ddof=1).reshape(m, m)
        var = np.einsum("ji,jk,ki->i", rows, cov, rows)
        var = np.maximum(var, 0.0)
    else:
        var = np.full(rows.shape[1], np.nan)
    half = K // 2
    if half >= 2:
        pairs = 0.5 * (coef[:, :half] + coef[:, half:])
        centered = pairs - pairs.mean(axis=1, keepdims=True)
        within = np.einsum("npi,npj->ij", centered, centered) / (N * (half - 1))
        se = np.sqrt(np.maximum(np.einsum("ji,jk,ki->i", rows, within, rows), 0.0) / (N * half))
    else:
        se = np.full(rows.shape[1], np.nan)
    return mean, var, se


def _conditional_block(model, points, l, cfg):
    """Per-draw gradient coefficients for label ``l`` under the conditional estimator.

    Returns ``coef (N, K, m)`` and the row blocks such that the per-draw
    gradient is ``coef @ total_rows`` and splits as ``coef @ direct_rows +
    coef @ mediated_rows``.
    """
    mediated = model.mediated_weights()
    direct = model.direct_weights
    total = mediated + direct
    mu = model.score_means(points, total)
    std = model.score_std
    xi = antithetic_normal(derive_rng(cfg.seed, "conditional", l), cfg.samples_per_point, 1)[:, 0]
    pinned = mu[:, l, None] + std[l] * xi[None, :]
    nodes, weights = inner_rule(model.m - 1, cfg)
    probs, cross = pinned_expectations(l, pinned, mu, std, nodes, weights, weight_label=l)
    coef = -cross
    coef[..., l] = probs[..., l] - cross[..., l]
    # X_l is held fixed, so its own row carries only the explicit term.
    total_rows = total.copy()
    total_rows[l] = direct[l]
    mediated_rows = mediated.copy()
    mediated_rows[l] = 0.0
    return coef, total_rows, direct, mediated_rows


def _marginal_block(model, points, l, cfg):
    """Per-draw coefficients ``sigma_l (e_l - sigma)`` for the marginal estimator."""
    mediated = model.mediated_weights()
    direct = model.direct_weights
    total = mediated + direct
    z = marginal_draws(model, cfg)
    mu = model.score_means(points, total)
    sig = softmax(mu[:, None, :] + model.score_std * z[None])
    coef = -sig[..., l, None] * sig
    coef[..., l] += sig[..., l]
    return coef, total, direct, mediated


def attribution_conditional(model, data, i, l, cfg=None):
    """Conditional-gradient attribution of feature ``i`` to label ``l``, averaged over ``data``."""
    pts = _check(model, data, i, l)
    coef, rows, _, _ = _conditional_block(model, pts, l, _cfg(cfg))
    return float(coef.reshape(-1, model.m).mean(axis=0) @ rows[:, i])


def attribution_marginal(model, data, i, l, cfg=None):
    """Mean over ``data`` of ``d P(label=l | S=t) / d t_i``."""
    pts = _check(model, data, i, l)
    cfg = _cfg(cfg)
    total = model.score_gradients()
    jac, _ = _marginal_jacobians(model, pts, cfg, total)
    return float((jac[l] @ total[:, i]) / pts.shape[0])


def attribution_marginal_fd(model, data, i, l, cfg=None, step=None):
    """Central finite-difference counterpart of :func:`attribution_marginal`."""
    pts = _check(model, data, i, l)
    cfg = _cfg(cfg)
    h = cfg.fd_step if step is None else step
    e = np.zeros(model.n)
    e[i] = h
    up = label_marginals(model, pts + e, cfg)[:, l]
    down = label_marginals(model, pts - e, cfg)[:, l]
    return float(np.mean((up - down) / (2 * h)))


def marginal_gradients(model, t, cfg=None):
    """Per-point marginal attribution matrices ``(N, n, m)`` at the rows of ``t``."""
    pts = as_points(t, model.n)
    cfg = _cfg(cfg)
    total = model.score_gradients()
    _, per = _marginal_jacobians(model, pts, cfg, total, per_point=True)
    return np.einsum("nlj,ji->nil", per, total)


def decompose(model, t, i, l, cfg=None):
    """Split the marginal attribution at ``t`` into direct and mediated parts.

    The direct part moves only the explicit ``c`` terms with every mediator
    distribution held fixed; the indirect part flows through ``W_j`` into the
    mediator means. They add up to ``attribution_marginal`` at ``t``.
    """
    pts = _check(model, as_points(t, model.n), i, l)
    cfg = _cfg(cfg)
    mediated = model.mediated_weights()
    direct = model.direct_weights
    jac, _ = _marginal_jacobians(model, pts, cfg, mediated + direct)
    jac = jac / pts.shape[0]
    return float(jac[l] @ direct[:, i]), float(jac[l] @ mediated[:, i])


def attribution_uncertainty(model, data, i, l, cfg=None):
    """Pooled variance of the per-draw conditional gradients for ``(i, l)``."""
    pts = _check(model, data, i, l)
    cfg = _cfg(cfg)
    if cfg.samples_per_point < 2:
        raise ValueError("attribution uncertainty needs at least 2 samples per point")
    coef, rows, _, _ = _conditional_block(model, pts, l, cfg)
    _, var, _ = _coef_stats(coef, rows)
    return float(var[i])


def attribution_matrix(model, data, estimator="marginal", cfg=None, uncertainty=True, per_point=False):
    """Fill the full ``n x m`` attribution report.

    Each label's random draws come from a stream derived from the config seed
    and the label index, so every cell equals the corresponding scalar call
    and the result does not depend on evaluation order.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    pts = _check(model, data)
    cfg = _cfg(cfg)
    if uncertainty and cfg.samples_per_point < 2:
        raise ValueError("attribution uncertainty needs at least 2 samples per point")
    n, m, N = model.n, model.m, pts.shape[0]
    mediated = model.mediated_weights()
    direct_w = model.direct_weights
    total = mediated + direct_w

    unc = np.zeros((n, m)) if uncertainty else None
    se = np.zeros((n, m)) if uncertainty else None
    pp = None
    if estimator == "marginal":
        jac, per = _marginal_jacobians(model, pts, cfg, total, per_point=per_point)
        jac = jac / N
        scores = (jac @ total).T
        direct = (jac @ direct_w).T
        indirect = (jac @ mediated).T
        if per_point:
            pp = np.einsum("nlj,ji->nil", per, total)
        if uncertainty:
            for l in range(m):
                coef, rows, _, _ = _marginal_block(model, pts, l, cfg)
                _, _, se[:, l] = _coef_stats(coef, rows)
    else:
        scores = np.zeros((n, m))
        direct = np.zeros((n, m))
        indirect = np.zeros((n, m))
        for l in range(m):
            coef, rows, d_rows, med_rows = _conditional_block(model, pts, l, cfg)
            mean_coef = coef.reshape(-1, m).mean(axis=0)
            scores[:, l] = mean_coef @ rows
            direct[:, l] = mean_coef @ d_rows
            indirect[:, l] = mean_coef @ med_rows
            if uncertainty:
                _, unc[:, l], se[:, l] = _coef_stats(coef, rows)
    if uncertainty and estimator == "marginal":
        for l in range(m):
            coef, rows, _, _ = _conditional_block(model, pts, l, cfg)
            _, unc[:, l], _ = _coef_stats(coef, rows)
    return AttributionReport(scores=scores, uncertainty=unc, direct=direct, indirect=indirect,
                             std_error=se, estimator=estimator, sample_count=cfg.samples_per_point,
                             seed=cfg.seed, per_point=pp)
