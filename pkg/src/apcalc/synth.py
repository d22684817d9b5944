"""Fixtures, synthetic scenarios, the architecture benchmark and the convergence and scaling studies."""
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ._rng import derive_rng
from ._validation import check_positive, check_positive_int
from .attribution import attribution_conditional, attribution_marginal, attribution_matrix
from .discrete import DiscreteBN, DiscreteNetwork, Factor, feature_node
from .inference import sample_given_source, sample_joint
from .intervention import InterventionQuery, backdoor_adjust, do_effect_oracle
from .network import Dataset, DestinationSpec, EstimatorConfig, MediatorSpec, NetworkModel, Readout, build_model

ARCHITECTURES = ("proposed", "junction", "common-cause")
_CPT_LOW, _CPT_HIGH = 0.05, 0.95


# ---------------------------------------------------------------- fixtures

def net_a(noise=0.1):
    """Two features, two labels, each label's mediator copying one feature."""
    return build_model([[[1.0, 0.0]], [[0.0, 1.0]]], noise, [[1.0], [1.0]])


def net_d():
    """Hand-set binary network with correlated features (n=2, m=2)."""
    prior = [[0.3, 0.2], [0.1, 0.4]]
    p_x1 = np.array([[0.1, 0.4], [0.7, 0.9]])
    p_x2 = np.array([[0.8, 0.3], [0.6, 0.2]])
    p_d0 = np.array([[0.5, 0.2], [0.9, 0.6]])
    return DiscreteNetwork(
        [2, 2], [2, 2], prior,
        [np.stack([1 - p_x1, p_x1], -1), np.stack([1 - p_x2, p_x2], -1)],
        np.stack([p_d0, 1 - p_d0], -1),
    )


def _binary_cpt(rng, parent_shape):
    p = rng.uniform(_CPT_LOW, _CPT_HIGH, parent_shape)
    return np.stack([1 - p, p], axis=-1)


def random_discrete_network(n, m, seed, correlated=False):
    """Binary source -> mediators -> label network with CPT entries in (0.05, 0.95)."""
    n = check_positive_int(n, "n")
    m = check_positive_int(m, "m", minimum=2)
    rng = derive_rng(seed, "discrete_network", n, m)
    fc = (2,) * n
    if correlated:
        prior = rng.uniform(_CPT_LOW, _CPT_HIGH, fc)
        prior /= prior.sum()
    else:
        prior = np.ones(())
        for _ in range(n):
            prior = np.multiply.outer(prior, _binary_cpt(rng, ()))
    meds = [_binary_cpt(rng, fc) for _ in range(m)]
    dest = rng.uniform(_CPT_LOW, _CPT_HIGH, (2,) * m + (m,))
    dest /= dest.sum(axis=-1, keepdims=True)
    return DiscreteNetwork(fc, (2,) * m, prior, meds, dest)


def junction_network(seed):
    """Binary ``A, B -> S``, ``A, B, S -> D``: both ``A`` and ``B`` confound ``S -> D``."""
    rng = derive_rng(seed, "junction")
    cards = {"A": 2, "B": 2, "S": 2, "D": 2}
    return DiscreteBN(cards, [
        Factor(("A",), (), _binary_cpt(rng, ())),
        Factor(("B",), (), _binary_cpt(rng, ())),
        Factor(("S",), ("A", "B"), _binary_cpt(rng, (2, 2))),
        Factor(("D",), ("A", "B", "S"), _binary_cpt(rng, (2, 2, 2))),
    ])


def common_cause_network(seed):
    """Binary ``S -> A``, ``S -> B``, ``A, B -> D``."""
    rng = derive_rng(seed, "common_cause")
    cards = {"S": 2, "A": 2, "B": 2, "D": 2}
    return DiscreteBN(cards, [
        Factor(("S",), (), _binary_cpt(rng, ())),
        Factor(("A",), ("S",), _binary_cpt(rng, (2,))),
        Factor(("B",), ("S",), _binary_cpt(rng, (2,))),
        Factor(("D",), ("A", "B"), _binary_cpt(rng, (2, 2))),
    ])


def confounded_chain_network(seed):
    """``U -> S -> X -> D`` with ``U -> D``: frontdoor through ``X`` is valid, backdoor without ``U`` is not."""
    rng = derive_rng(seed, "confounded_chain")
    cards = {"U": 2, "S": 2, "X": 2, "D": 2}
    return DiscreteBN(cards, [
        Factor(("U",), (), _binary_cpt(rng, ())),
        Factor(("S",), ("U",), _binary_cpt(rng, (2,))),
        Factor(("X",), ("S",), _binary_cpt(rng, (2,))),
        Factor(("D",), ("U", "X"), _binary_cpt(rng, (2, 2))),
    ])


def random_network_model(n, m, p, seed, noise=0.5, scale=1.0, direct=0.0):
    """Gaussian weights ``N(0, scale^2 / n)`` and readouts ``N(0, 1 / p)``; optional direct terms."""
    rng = derive_rng(seed, "network_model", n, m, p)
    meds, ro = [], []
    for _ in range(m):
        w = rng.standard_normal((p, n)) * (scale / np.sqrt(n))
        meds.append(MediatorSpec(w, np.full(p, noise)))
    for _ in range(m):
        a = rng.standard_normal(p) / np.sqrt(p)
        c = direct * rng.standard_normal(n) / np.sqrt(n)
        ro.append(Readout(a, c, rng.standard_normal() * 0.1))
    return NetworkModel(n=n, m=m, mediators=tuple(meds), destination=DestinationSpec(tuple(ro)),
                        seed=int(seed))


def duplicated_feature_scenario(n_train=500, n_holdout=2000, weight=3.0, noise=0.1, seed=0):
    """Two labels driven by ``S_1`` alone, with ``S_2`` an exact copy of ``S_1`` in the data.

    Returns ``(model, train, holdout)``; suppression targets feature index 1
    and label 0.
    """
    model = build_model([[[weight, 0.0]], [[-weight, 0.0]]], noise, [[1.0], [1.0]], seed=seed)
    out = []
    for part, count in enumerate((n_train, n_holdout)):
        s1 = derive_rng(seed, "duplicated", part).standard_normal(count)
        ds, _ = sample_given_source(model, np.stack([s1, s1], axis=1), seed * 2 + part)
        out.append(ds)
    return model, out[0], out[1]


# ---------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class ScenarioSpec:
    architecture: str = "proposed"
    n: int = 2
    m: int = 2
    p: int = 1
    noise: float = 0.5
    sample_count: int = 1000
    seed: int = 0
    family: str = "discrete"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        if self.family not in ("discrete", "continuous"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "continuous" and self.architecture != "proposed":
            raise ValueError("continuous scenarios exist only for the proposed architecture")
        check_positive_int(self.n, "n")
        check_positive_int(self.m, "m", minimum=2 if self.architecture == "proposed" else 1)
        check_positive_int(self.p, "p")
        check_positive(self.noise, "noise")
        check_positive_int(self.sample_count, "sample_count")


@dataclass(frozen=True, eq=False)
class Scenario:
    spec: ScenarioSpec
    model: object
    data: Dataset
    trace: object
    ground_truth: dict = field(default_factory=dict)


def _bn_dataset(samples, features, outcome="D"):
    return Dataset(np.stack([samples[v] for v in features], axis=1), samples[outcome])


def true_do_effects(net):
    """Exact ``P(D = l | do(T = v))`` for every treatment state and label, keyed ``(T, v, l)``."""
    out = {}
    if isinstance(net, DiscreteNetwork):
        for i in range(net.n):
            for v in range(net.feature_cardinalities[i]):
                for l in range(net.m):
                    out[(feature_node(i), v, l)] = do_effect_oracle(net, InterventionQuery(i, v, l)).estimate
    else:
        for v in range(net.card("S")):
            for l in range(net.card("D")):
                out[("S", v, l)] = do_effect_oracle(net, InterventionQuery("S", v, l)).estimate
    return out


def generate_scenario(spec):
    """Build the named architecture, sample ``N`` rows and record the true effects.

    Discrete scenarios store exact do-effects keyed ``(treatment, value, label)``;
    the continuous proposed scenario stores a high-precision marginal
    attribution matrix.
    """
    seed, count = spec.seed, spec.sample_count
    if spec.family == "continuous":
        model = random_network_model(spec.n, spec.m, spec.p, seed, noise=spec.noise)
        data, trace = sample_joint(model, count, seed)
        truth = {"attribution": attribution_matrix(
            model, data, "marginal", EstimatorConfig(samples_per_point=20000, seed=seed),
            uncertainty=False).scores}
        return Scenario(spec, model, data, trace, truth)
    if spec.architecture == "proposed":
        net = random_discrete_network(spec.n, spec.m, seed)
        data, trace = sample_joint(net, count, seed)
    else:
        net = junction_network(seed) if spec.architecture == "junction" else common_cause_network(seed)
        samples = net.sample(count, derive_rng(seed, "sample_joint"))
        cols = [v for v in net.nodes if v not in ("S", "D")]
        data = _bn_dataset(samples, ["S"] + cols)
        trace = {v: samples[v] for v in cols}
    return Scenario(spec, net, data, trace, {"do": true_do_effects(net)})


# ---------------------------------------------------------------- fitting

def fit_tables(template, samples, smoothing=1.0):
    """Re-estimate every factor of ``template`` from sampled states by smoothed counts."""
    factors = []
    for f in template.factors:
        shape = f.table.shape
        counts = np.full(shape, float(smoothing))
        idx = tuple(np.asarray(samples[v], dtype=np.int64) for v in f.variables)
        np.add.at(counts, idx, 1.0)
        nchild = len(f.children)
        lead = shape[: len(shape) - nchild]
        flat = counts.reshape(lead + (-1,))
        factors.append(Factor(f.children, f.parents, (flat / flat.sum(axis=-1, keepdims=True)).reshape(shape)))
    if isinstance(template, DiscreteNetwork):
        return DiscreteNetwork(template.feature_cardinalities, template.mediator_cardinalities,
                               factors[0].table, [f.table for f in factors[1:-1]], factors[-1].table,
                               template.state_cap)
    return DiscreteBN(template.cards, factors, template.state_cap)


def fit_mediators(features, trace):
    """Least-squares ``W_j`` and residual standard deviations for linear-Gaussian mediators."""
    s = np.asarray(features, dtype=float)
    specs = []
    for x in trace:
        x = np.asarray(x, dtype=float).reshape(s.shape[0], -1)
        w, *_ = np.linalg.lstsq(s, x, rcond=None)
        resid = x - s @ w
        specs.append(MediatorSpec(w.T, np.maximum(resid.std(axis=0), 1e-12)))
    return specs


def _naive_effect(samples, treatment, value, outcome, label, smoothing=1.0):
    t = np.asarray(samples[treatment]) == value
    hits = np.count_nonzero(np.asarray(samples[outcome])[t] == label)
    return (hits + smoothing) / (np.count_nonzero(t) + 2 * smoothing)


def _proposed_view(net, samples):
    """Samples relabelled onto the proposed layout ``S -> (A, B) -> D``."""
    view = {"S1": samples["S"], "X1": samples["A"], "X2": samples["B"], "D": samples["D"]}
    template = DiscreteNetwork([2], [2, 2], [0.5, 0.5], [np.full((2, 2), 0.5)] * 2, np.full((2, 2, 2), 0.5))
    return fit_tables(template, view)


@dataclass(frozen=True, eq=False)
class BenchReport:
    """Benchmark tables; every error is a mean absolute deviation from exact ground truth."""

    architectures: dict
    trials: list
    paired_wins: float = None
    convergence: list = field(default_factory=list)
    scaling: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    def to_dict(self):
        return {"architectures": self.architectures, "trials": self.trials,
                "paired_wins": self.paired_wins, "convergence": self.convergence,
                "scaling": self.scaling, "slopes": self.slopes}


def _summary(values):
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}


def _bench_trial(seed, sample_count):
    """One paired trial: the same seed drives every architecture."""
    row = {"seed": int(seed)}
    rng_tag = "bench_sample"

    net = random_discrete_network(2, 2, seed)
    samples = net.sample(sample_count, derive_rng(seed, rng_tag))
    truth = true_do_effects(net)
    t0 = time.perf_counter()
    fitted = fit_tables(net, samples)
    est = true_do_effects(fitted)
    row["proposed_own"] = float(np.mean([abs(est[k] - truth[k]) for k in truth]))
    row["proposed_runtime"] = time.perf_counter() - t0

    for arch, build in (("junction", junction_network), ("common-cause", common_cause_network)):
        bn = build(seed)
        samples = bn.sample(sample_count, derive_rng(seed, rng_tag))
        truth = true_do_effects(bn)
        t0 = time.perf_counter()
        fitted = fit_tables(bn, samples)
        naive, adjusted, cross = [], [], []
        proposed = _proposed_view(bn, samples)
        for (_, v, l), p in sorted(truth.items()):
            naive.append(abs(_naive_effect(samples, "S", v, "D", l) - p))
            if arch == "junction":
                adj = backdoor_adjust(fitted, InterventionQuery("S", v, l, adjustment_set=("A", "B"))).estimate
            else:
                adj = do_effect_oracle(fitted, InterventionQuery("S", v, l)).estimate
            adjusted.append(abs(adj - p))
            cross.append(abs(do_effect_oracle(proposed, InterventionQuery(0, v, l)).estimate - p))
        key = arch.replace("-", "_")
        row[f"{key}_naive"] = float(np.mean(naive))
        row[f"{key}_adjusted"] = float(np.mean(adjusted))
        row[f"{key}_proposed_fit"] = float(np.mean(cross))
        row[f"{key}_runtime"] = time.perf_counter() - t0
    return row


def run_arch_benchmark(trials=100, sample_count=50000, seed=0, timings=False):
    """Paired benchmark over the three architectures.

    Per trial and architecture the generator is seeded identically. The
    proposed network is refitted by smoothed counts and its do-effects are
    compared with the truth (own-data score). Junction data is scored by the
    naive conditional ``P(D | S)`` and by backdoor adjustment on ``{A, B}``;
    common-cause data by the naive conditional and the fitted truncated
    factorization. The cross-data score fits the proposed layout (with
    ``A, B`` as mediators) to each comparison architecture's data.

    Wall-clock summaries are included only with ``timings=True``, so the
    default report is a deterministic function of its arguments.
    """
    trials = check_positive_int(trials, "trials")
    sample_count = check_positive_int(sample_count, "sample_count")
    rows = [_bench_trial(seed + t, sample_count) for t in range(trials)]
    arch = {
        "proposed": {"own": _summary([r["proposed_own"] for r in rows]),
                     "runtime": _summary([r["proposed_runtime"] for r in rows])},
    }
    for key, name in (("junction", "junction"), ("common_cause", "common-cause")):
        arch[name] = {
            "naive": _summary([r[f"{key}_naive"] for r in rows]),
            "adjusted": _summary([r[f"{key}_adjusted"] for r in rows]),
            "proposed_fit": _summary([r[f"{key}_proposed_fit"] for r in rows]),
            "runtime": _summary([r[f"{key}_runtime"] for r in rows]),
        }
    wins = float(np.mean([r["junction_naive"] > r["junction_adjusted"] for r in rows]))
    if not timings:
        for summary in arch.values():
            del summary["runtime"]
    for r in rows:
        for k in list(r):
            if k.endswith("runtime"):
                del r[k]
    return BenchReport(architectures=arch, trials=rows, paired_wins=wins)


# ---------------------------------------------------------------- studies

def convergence_study(model, data, i, l, k_grid, repeats=20, estimator="conditional", seed=0,
                      reference_k=None):
    """Absolute attribution error versus ``K`` against a high-``K`` reference.

    The reference uses ``reference_k`` samples (16 times the largest grid value
    by default). Repeat ``r`` uses seed ``seed + 1 + r``. Returns rows
    ``{"K", "mean_abs_error", "std", "median_abs_error"}`` and the reference.
    """
    k_grid = [check_positive_int(k, "K") for k in k_grid]
    if not k_grid or any(a >= b for a, b in zip(k_grid, k_grid[1:])):
        raise ValueError("K grid must be non-empty and strictly ascending")
    repeats = check_positive_int(repeats, "repeats")
    fn = {"conditional": attribution_conditional, "marginal": attribution_marginal}[estimator]
    ref_k = reference_k or 16 * k_grid[-1]
    ref = fn(model, data, i, l, EstimatorConfig(samples_per_point=ref_k, seed=seed))
    rows = []
    for k in k_grid:
        errs = np.array([abs(fn(model, data, i, l, EstimatorConfig(samples_per_point=k, seed=seed + 1 + r)) - ref)
                         for r in range(repeats)])
        rows.append({"K": k, "mean_abs_error": float(errs.mean()),
                     "std": float(errs.std(ddof=1)) if repeats > 1 else 0.0,
                     "median_abs_error": float(np.median(errs))})
    return rows, ref


def _timer(model, data, cfg, min_seconds):
    def call():
        attribution_matrix(model, data, "marginal", cfg, uncertainty=False)

    t0 = time.perf_counter()
    call()
    loops = max(1, int(np.ceil(min_seconds / max(time.perf_counter() - t0, 1e-9))))

    def run():
        t0 = time.perf_counter()
        for _ in range(loops):
            call()
        return (time.perf_counter() - t0) / loops

    return run


def time_attribution(model, data, cfg, repeats=5, min_seconds=0.02):
    """Median wall time of ``attribution_matrix`` (marginal scores only) after one warm-up call.

    Each of the ``repeats`` measurements loops enough calls to last about
    ``min_seconds`` and reports the per-call time.
    """
    with threadpool_limits(limits=1):
        run = _timer(model, data, cfg, min_seconds)
        return float(np.median([run() for _ in range(repeats)]))


DEFAULT_SCALING_BASE = {"m": 8, "n": 512, "p": 512}
DEFAULT_SCALING_GRID = {"m": [4, 8, 16, 32], "n": [256, 512, 1024, 2048], "p": [256, 512, 1024, 2048]}


def scaling_study(grid=None, base=None, cfg=None, points=2, repeats=5, seed=0, min_seconds=0.02):
    """Time ``attribution_matrix`` along each axis of ``grid`` with the other axes at ``base``.

    The grid points of one axis are timed round-robin (one warm-up call each,
    then ``repeats`` rounds) so slow drifts in machine load hit every point
    alike; each point reports its median. Returns ``(table, slopes)``: rows
    ``{"axis", "m", "n", "p", "seconds"}`` and the least-squares slope of log
    time against log size per axis.
    """
    grid = DEFAULT_SCALING_GRID if grid is None else grid
    base = DEFAULT_SCALING_BASE if base is None else base
    cfg = EstimatorConfig(samples_per_point=8, seed=seed) if cfg is None else cfg
    repeats = check_positive_int(repeats, "repeats")
    table, slopes = [], {}
    for axis, values in grid.items():
        if axis not in ("m", "n", "p"):
            raise ValueError(f"unknown axis {axis!r}")
        if len(values) < 3:
            raise ValueError(f"axis {axis} needs at least 3 grid points")
        dims = [dict(base, **{axis: int(v)}) for v in values]
        with threadpool_limits(limits=1):
            runners = []
            for d in dims:
                model = random_network_model(d["n"], d["m"], d["p"], seed)
                data = Dataset(derive_rng(seed, "scaling_data").standard_normal((points, d["n"])))
                runners.append(_timer(model, data, cfg, min_seconds))
            times = np.array([[run() for run in runners] for _ in range(repeats)])
        secs = np.median(times, axis=0)
        for d, t in zip(dims, secs):
            table.append({"axis": axis, **d, "seconds": float(t)})
        slopes[axis] = float(np.polyfit(np.log(values), np.log(secs), 1)[0])
        del runners
    return table, slopes
