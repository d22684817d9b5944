"""Self-check suites: structural axioms, analytic gradients and the interventional oracle."""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attribution import attribution_conditional, attribution_matrix, marginal_gradients
from .discrete import DiscreteNetwork
from .graph import d_separated, feature_name, label_name, model_graph
from .inference import _softmax_samples, dominance_scores
from .intervention import (AdjustmentWarning, InterventionQuery, InvalidAdjustmentError, backdoor_adjust,
                           do_effect_ap, do_effect_oracle, frontdoor_adjust)
from .network import Dataset, EstimatorConfig, NetworkModel
from .separation import default_candidates, learn_separation, separation_distance

SUITES = ("axioms", "gradients", "oracle")


@dataclass
class Check:
    name: str
    status: str
    detail: str = ""
    value: float = None

    def to_dict(self):
        return {"name": self.name, "status": self.status, "detail": self.detail, "value": self.value}


@dataclass
class ValidationReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.status != "fail" for c in self.checks)

    @property
    def failures(self):
        return [c.name for c in self.checks if c.status == "fail"]

    def add(self, name, ok, detail="", value=None, warn=False):
        status = "warn" if warn else ("pass" if ok else "fail")
        self.checks.append(Check(name, status, detail, None if value is None else float(value)))

    def to_dict(self):
        return {"suite": self.suite, "passed": self.passed, "failures": self.failures,
                "checks": [c.to_dict() for c in self.checks]}


def _points(data, limit):
    return data.features[:limit]


def _axioms(model, data, cfg, report, max_points=5):
    if not isinstance(model, NetworkModel):
        raise TypeError("the axioms suite needs a continuous NetworkModel")
    pts = _points(data, max_points)
    # Deconfounder uniqueness and dominance.
    for k, t in enumerate(pts):
        for l in range(model.m):
            scores, arg = dominance_scores(model, t, l, cfg)
            top = scores.max()
            tied = np.flatnonzero(scores >= top - 1e-9 * abs(top) - 1e-300)
            name = f"dominance[point={k + 1},label={l + 1}]"
            if top == 0.0:
                report.add(name, True, "no mediator influences this label (degenerate tie)", 0.0, warn=True)
            elif arg == l:
                report.add(name, True, f"mediator {arg + 1} dominates", top)
            elif l in tied:
                report.add(name, True, f"mediators {[int(j) + 1 for j in tied]} tie for the maximum", top,
                           warn=True)
            else:
                report.add(name, False, f"mediator {arg + 1} dominates instead of {l + 1}", top)
    # Separation audit: symmetric non-negative distances and an auditable optimum.
    for j in range(model.m):
        for k in range(j + 1, model.m):
            if model.mediators[j].p != model.mediators[k].p:
                continue
            djk = separation_distance(model, j, k, data)
            dkj = separation_distance(model, k, j, data)
            ok = djk >= 0 and abs(djk - dkj) <= 1e-12 * max(1.0, abs(djk))
            report.add(f"separation_symmetry[{j + 1},{k + 1}]", ok, f"d={djk:.6g}", djk)
    if data.labels is not None:
        present = np.unique(data.labels)
        if present.size >= 2:
            j, k = int(present[0]), int(present[1])
            res = learn_separation(data, j, k, default_candidates(model.n, count=8))
            best = res.scores[res.best.id]
            ok = best == max(res.scores.values())
            report.add(f"separation_optimum[{j + 1},{k + 1}]", ok, f"best={res.best.id}", best)
    # Per-point zero-sum of marginal attributions over labels.
    grads = marginal_gradients(model, pts, cfg)
    worst = float(np.max(np.abs(grads.sum(axis=2)))) if grads.size else 0.0
    report.add("zero_sum", worst <= 1e-6, f"max |sum_l A| = {worst:.3g}", worst)
    # Disconnected features: attribution vanishes and S_i is d-separated from every D_l.
    for i in range(model.n):
        cut = model.with_feature_column(i, [np.zeros(med.p) for med in model.mediators], np.zeros(model.m))
        g = model_graph(cut)
        rep = attribution_matrix(cut, data, "marginal", cfg, uncertainty=False)
        cond_rep = attribution_matrix(cut, data, "conditional", cfg) if cfg.samples_per_point >= 2 else None
        for l in range(model.m):
            cond = attribution_conditional(cut, data, i, l, cfg)
            se = cond_rep.std_error[i, l] if cond_rep is not None else np.nan
            bound = 3 * se if np.isfinite(se) else 0.0
            sep = d_separated(g, feature_name(i), label_name(l))
            ok = abs(rep.scores[i, l]) <= bound + 1e-12 and abs(cond) <= bound + 1e-12 and sep
            report.add(f"disconnected[feature={i + 1},label={l + 1}]", ok,
                       f"marginal={rep.scores[i, l]:.3g} conditional={cond:.3g} 3se={bound:.3g} dsep={sep}",
                       max(abs(rep.scores[i, l]), abs(cond)))


def _gradients(model, data, cfg, report, tol=1e-5, max_points=50):
    if not isinstance(model, NetworkModel):
        raise TypeError("the gradients suite needs a continuous NetworkModel")
    pts = _points(data, max_points)
    analytic = marginal_gradients(model, pts, cfg)
    h = cfg.fd_step
    worst = 0.0
    for i in range(model.n):
        e = np.zeros(model.n)
        e[i] = h
        up = _softmax_samples(model, pts + e, cfg).mean(axis=1)
        dn = _softmax_samples(model, pts - e, cfg).mean(axis=1)
        fd = (up - dn) / (2 * h)
        num = np.linalg.norm(analytic[:, i, :] - fd, axis=1)
        den = np.maximum(np.linalg.norm(analytic[:, i, :], axis=1), 1e-8)
        worst = max(worst, float(np.max(num / den)))
    report.add("marginal_vs_central_fd", worst <= tol, f"max relative error {worst:.3g} (h={h})", worst)


def _oracle(model, data, cfg, report):
    if not isinstance(model, DiscreteNetwork):
        raise TypeError("the oracle suite needs a DiscreteNetwork")
    for i in range(model.n):
        for v in range(model.feature_cardinalities[i]):
            for l in range(model.m):
                q = InterventionQuery(i, v, l)
                exact = do_effect_oracle(model, q).estimate
                res = do_effect_ap(model, data, q, cfg)
                bound = 3 * res.std_error
                tag = f"[feature={i + 1},value={v},label={l + 1}]"
                report.add(f"ap_vs_oracle{tag}", abs(res.estimate - exact) <= bound,
                           f"ap={res.estimate:.6g} oracle={exact:.6g} 3se={bound:.3g}",
                           abs(res.estimate - exact))
                others = tuple(n for k, n in enumerate(model.feature_names) if k != i)
                for method, fn, qq in (("backdoor", backdoor_adjust, InterventionQuery(i, v, l, adjustment_set=others)),
                                       ("frontdoor", frontdoor_adjust, q)):
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", AdjustmentWarning)
                            est = fn(model, qq).estimate
                    except InvalidAdjustmentError as exc:
                        report.add(f"{method}_vs_oracle{tag}", True, f"criterion not met: {exc}", warn=True)
                        continue
                    err = abs(est - exact)
                    report.add(f"{method}_vs_oracle{tag}", err <= 1e-10, f"error {err:.3g}", err)


def validate_suite(model, data, suite, cfg=None):
    """Run one suite and return a :class:`ValidationReport`.

    ``axioms``: dominance argmax per label (ties that include the label are
    warnings), separation audit, per-point zero-sum of marginal attributions
    and zero attribution plus d-separation for each feature after cutting its
    edges. ``gradients``: analytic marginal gradients against central finite
    differences on the same draws. ``oracle``: the sampling do-estimator and
    the adjustment formulas against exact enumeration.
    """
    if suite not in SUITES:
        raise ValueError(f"unsupported suite {suite!r}; expected one of {SUITES}")
    cfg = EstimatorConfig() if cfg is None else cfg
    if not isinstance(data, Dataset) or len(data) == 0:
        raise ValueError("validation needs a non-empty dataset")
    report = ValidationReport(suite)
    {"axioms": _axioms, "gradients": _gradients, "oracle": _oracle}[suite](model, data, cfg, report)
    return report
