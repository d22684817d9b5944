"""Information gain, fairness disparity, spurious-correlation scores and suppression."""
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_index, check_positive, check_positive_int
from .attribution import attribution_conditional, attribution_marginal
from .discrete import DiscreteNetwork, feature_node, mediator_node
from .inference import predict_label
from .network import EstimatorConfig, NetworkModel
from .separation import _plugin_mi, equal_frequency_bins, plugin_cmi


class DegenerateCorrelationWarning(UserWarning):
    """A correlation was requested for a zero-variance column."""


class SuppressionConvergenceWarning(UserWarning):
    """Spurious-correlation suppression stopped above its threshold."""


def pearson_correlation(x, y):
    """Pearson coefficient; 0 (with a warning) when either column is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("columns must be 1-d and of equal length")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 rows")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        warnings.warn("zero-variance column; correlation set to 0", DegenerateCorrelationWarning,
                      stacklevel=2)
        return 0.0
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def _categorize(values, bins, max_levels=32):
    values = np.asarray(values)
    if values.ndim == 2 and values.shape[1] == 1:
        values = values[:, 0]
    if values.ndim != 1:
        raise ValueError("expected a single column")
    if np.issubdtype(values.dtype, np.integer):
        return values
    if np.all(np.mod(values, 1) == 0) and np.unique(values).size <= max_levels:
        return values.astype(np.int64)
    return equal_frequency_bins(values, bins)


def information_gain(data, trace, i, l, bins=8, readout=None):
    """``I(S_i; D_l) - I(S_i; D_l | X_l)`` by plug-in estimation, in nats.

    ``trace`` is the mediator trace from :func:`~apcalc.inference.sample_joint`
    (a list indexed by mediator) or directly the column block of ``X_l``.
    Integer-valued columns are used as categories; real columns are binned by
    equal frequency. A multi-dimensional ``X_l`` is reduced to ``readout . x``
    (the only part of it the destination sees). The result may be negative.
    """
    if data.labels is None:
        raise ValueError("information gain needs labeled data")
    check_index(i, data.n, "i")
    if trace is None:
        raise ValueError("mediator trace is required")
    x = trace[l] if isinstance(trace, (list, tuple)) else trace
    x = np.asarray(x)
    if x.shape[0] != len(data):
        raise ValueError("trace and data have different lengths")
    if x.ndim == 2 and x.shape[1] > 1:
        if readout is None:
            raise ValueError("a multi-dimensional mediator needs a readout vector to project on")
        x = x @ np.asarray(readout, dtype=float)
    bins = check_positive_int(bins, "bins")
    s = _categorize(data.features[:, i], bins)
    xl = _categorize(x, bins)
    d = (data.labels == l).astype(np.int64)
    return _plugin_mi(s, d) - plugin_cmi(s, d, xl)


def _mi_from_table(p):
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (pa * pb)[nz])))


def information_gain_exact(net, i, l):
    """Exact information gain on a :class:`DiscreteNetwork` from its joint table."""
    if not isinstance(net, DiscreteNetwork):
        raise TypeError("exact information gain needs a DiscreteNetwork")
    check_index(i, net.n, "i")
    check_index(l, net.m, "l")
    joint = net.marginal([feature_node(i), mediator_node(l), "D"])
    # Collapse the label axis to the indicator of label l.
    ind = np.stack([joint.sum(axis=2) - joint[:, :, l], joint[:, :, l]], axis=2)
    mi = _mi_from_table(ind.sum(axis=1))
    cmi = 0.0
    for x in range(ind.shape[1]):
        px = ind[:, x, :].sum()
        if px > 0:
            cmi += px * _mi_from_table(ind[:, x, :] / px)
    return mi - cmi


def fairness_disparity(report, i, l1, l2):
    """``|A(i, l1) - A(i, l2)|`` from an attribution report."""
    check_index(i, report.n, "i")
    check_index(l1, report.m, "l1")
    check_index(l2, report.m, "l2")
    return float(abs(report.scores[i, l1] - report.scores[i, l2]))


def check_fairness(report, i, l1, l2, epsilon):
    """Whether the disparity constraint ``FD <= epsilon`` holds."""
    return fairness_disparity(report, i, l1, l2) <= epsilon


def spurious_value(corr, attribution):
    return abs(corr) * (1.0 - abs(float(np.clip(attribution, -1.0, 1.0))))


def spurious_score(data, report, i, l):
    """``|Corr(S_i, D_l)| * (1 - |clip(A(S_i, l), -1, 1)|)``."""
    if data.labels is None:
        raise ValueError("spurious score needs labeled data")
    check_index(i, report.n, "i")
    check_index(l, report.m, "l")
    if data.n != report.n:
        raise ValueError("report and data disagree on the number of features")
    corr = pearson_correlation(data.features[:, i], data.labels == l)
    return spurious_value(corr, report.scores[i, l])


@dataclass(frozen=True, eq=False)
class MetricsReport:
    info_gain: np.ndarray
    fairness: dict
    spurious: np.ndarray
    correlations: np.ndarray
    raw_attribution: np.ndarray
    estimator: str = "marginal"
    degenerate: list = field(default_factory=list)

    def to_dict(self):
        """JSON form; feature and label indices in ``fairness`` and ``degenerate`` are 1-based."""
        return {
            "info_gain": None if self.info_gain is None else self.info_gain.tolist(),
            "fairness": [{"feature": i + 1, "l1": a + 1, "l2": b + 1, "fd": v}
                         for (i, a, b), v in sorted(self.fairness.items())],
            "spurious": self.spurious.tolist(),
            "correlations": self.correlations.tolist(),
            "attribution": self.raw_attribution.tolist(),
            "estimator": self.estimator,
            "degenerate": [[i + 1, l + 1] for i, l in self.degenerate],
        }


def compute_metrics(data, report, trace=None, bins=8, readouts=None):
    """Bundle correlations, spurious scores, pairwise fairness and (given a trace) information gain."""
    if data.labels is None:
        raise ValueError("metrics need labeled data")
    n, m = report.n, report.m
    corr = np.zeros((n, m))
    degenerate = []
    for i in range(n):
        for l in range(m):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                corr[i, l] = pearson_correlation(data.features[:, i], data.labels == l)
            if any(issubclass(w.category, DegenerateCorrelationWarning) for w in caught):
                degenerate.append((i, l))
    spur = np.array([[spurious_value(corr[i, l], report.scores[i, l]) for l in range(m)]
                     for i in range(n)])
    fair = {(i, a, b): fairness_disparity(report, i, a, b)
            for i in range(n) for a in range(m) for b in range(a + 1, m)}
    ig = None
    if trace is not None:
        ig = np.array([[information_gain(data, trace, i, l, bins,
                                         None if readouts is None else readouts[l])
                        for l in range(m)] for i in range(n)])
    return MetricsReport(info_gain=ig, fairness=fair, spurious=spur, correlations=corr,
                         raw_attribution=np.asarray(report.scores), estimator=report.estimator,
                         degenerate=degenerate)


@dataclass(frozen=True)
class SuppressionConfig:
    epsilon: float = 0.05
    step: float = 1.0
    max_iters: int = 200
    fd_step: float = 1e-4

    def __post_init__(self):
        check_positive(self.epsilon, "epsilon")
        check_positive(self.step, "step")
        check_positive_int(self.max_iters, "max_iters")
        check_positive(self.fd_step, "fd_step")


def _column_params(model, i):
    cols = [med.weight[:, i] for med in model.mediators]
    direct = np.array([r.c[i] for r in model.destination.readout])
    return np.concatenate(cols + [direct])


def _with_params(model, i, theta):
    cols, off = [], 0
    for med in model.mediators:
        cols.append(theta[off:off + med.p])
        off += med.p
    return model.with_feature_column(i, cols, theta[off:])


def _accuracy(model, data, cfg):
    if data is None or data.labels is None:
        return float("nan")
    return float(np.mean(predict_label(model, data.features, cfg) == data.labels))


def suppress_spurious(model, data, i, l, cfg=None, estimator_cfg=None, estimator="marginal",
                      holdout=None):
    """Gradient descent on the spurious score over feature ``i``'s parameters.

    Only column ``i`` of every ``W_j`` and entry ``i`` of every ``c_j`` move.
    Gradients are central finite differences; each step backtracks until the
    score does not increase, so the trace is non-increasing, and the step
    that crosses ``epsilon`` is shortened to the smallest one that still
    meets it. Returns the
    updated model (the same object when no update is needed) and the trace as
    a list of ``{"iter", "R", "accuracy"}`` rows, where accuracy is measured on
    ``holdout`` (or ``data`` when no holdout is given). The final row carries a
    ``status``: ``unchanged``, ``converged``, ``stalled`` or ``max_iters``.
    """
    if not isinstance(model, NetworkModel):
        raise TypeError("suppression needs a parametric NetworkModel")
    if data.labels is None:
        raise ValueError("suppression needs labeled data")
    check_index(i, model.n, "i")
    check_index(l, model.m, "l")
    cfg = SuppressionConfig() if cfg is None else cfg
    ecfg = EstimatorConfig(samples_per_point=256) if estimator_cfg is None else estimator_cfg
    attr = {"marginal": attribution_marginal, "conditional": attribution_conditional}[estimator]
    acc_data = holdout if holdout is not None else data
    corr = pearson_correlation(data.features[:, i], data.labels == l)

    def score(theta):
        return spurious_value(corr, attr(_with_params(model, i, theta), data, i, l, ecfg))

    theta = _column_params(model, i)
    r = score(theta)
    trace = [{"iter": 0, "R": r, "accuracy": _accuracy(model, acc_data, ecfg)}]
    if r <= cfg.epsilon:
        trace[-1]["status"] = "unchanged"
        return model, trace

    h = cfg.fd_step
    status = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        grad = np.empty_like(theta)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            grad[k] = (score(theta + e) - score(theta - e)) / (2 * h)
        if not np.any(grad):
            status = "stalled"
            break
        eta = cfg.step
        for _ in range(40):
            cand = theta - eta * grad
            r_new = score(cand)
            if r_new <= r + 1e-9:
                break
            eta *= 0.5
        else:
            status = "stalled"
            break
        if r_new <= cfg.epsilon:
            # R is flat at 0 once |A| saturates, so a full step can land far past the threshold
            # (for a copied feature, past the point where the model's decisions flip). Shorten
            # the final step to the least change that still meets epsilon.
            lo, hi = 0.0, eta
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                r_mid = score(theta - mid * grad)
                if r_mid <= cfg.epsilon:
                    hi, r_new = mid, r_mid
                else:
                    lo = mid
            cand = theta - hi * grad
        theta, r = cand, r_new
        current = _with_params(model, i, theta)
        trace.append({"iter": it, "R": r, "accuracy": _accuracy(current, acc_data, ecfg)})
        if r <= cfg.epsilon:
            status = "converged"
            break
    trace[-1]["status"] = status
    if status != "converged":
        warnings.warn(f"spurious score {r:.4g} still above epsilon={cfg.epsilon} ({status})",
                      SuppressionConvergenceWarning, stacklevel=2)
    return _with_params(model, i, theta), trace
