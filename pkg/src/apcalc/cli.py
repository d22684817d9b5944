"""``apcalc`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every failure ends
with one JSON line ``{"error": <code>, "message": ...}`` on stderr. Features
and labels are 1-based on the command line and in every file.

Settings come from flags, then ``--config`` (a JSON object keyed by option
name), then built-in defaults.
"""
import argparse
import json
import logging
import os
import sys
import warnings
from contextlib import nullcontext
from dataclasses import asdict, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .attribution import AttributionReport, attribution_matrix
from .discrete import DiscreteBN, DiscreteNetwork, feature_node
from .inference import sample_given_source, sample_joint
from .intervention import (METHODS, InterventionQuery, causal_effect, causal_effect_oracle,
                           do_effect_oracle, run_query)
from .io import (SCHEMA_NAMES, SchemaViolation, dumps, load_model, load_schema, model_to_dict, read_dataset,
                 read_json, save_model, validate_document, write_dataset, write_json, write_rows)
from .metrics import SuppressionConfig, compute_metrics, information_gain_exact, suppress_spurious
from .network import Dataset, EstimatorConfig, NetworkModel
from .separation import MODES, SeparationCandidate, default_candidates, learn_separation, separation_distance
from .synth import (ARCHITECTURES, ScenarioSpec, convergence_study, generate_scenario, net_a, run_arch_benchmark,
                    scaling_study)
from .validate import SUITES, validate_suite

log = logging.getLogger("apcalc")

COMMANDS = ("attribute", "intervene", "separate", "suppress", "metrics", "benchmark", "validate", "generate")


class UsageError(Exception):
    code = "usage"


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Options:
    """Collects per-command defaults so that flags can override a config file."""

    def __init__(self, parser):
        self.parser = parser
        self.defaults = {}

    def add(self, *flags, default=None, **kw):
        action = self.parser.add_argument(*flags, default=None, **kw)
        self.defaults[action.dest] = default
        if default is not None and kw.get("action") != "store_true":
            action.help = f"{action.help or ''} (default: {default})".strip()
        return action


def _common(opts, k=1000, seed=True):
    opts.add("--k", type=int, default=k, help="Monte Carlo samples per point")
    if seed:
        opts.add("--seed", type=int, default=0, help="master seed")


def _build_parser():
    parser = _Parser(prog="apcalc", description="Attribution projection calculus on structured networks.")
    parser.add_argument("--version", action="store_true", help="print version metadata as JSON")
    parser.add_argument("--schema", metavar="NAME", help=f"print a JSON schema ({', '.join(SCHEMA_NAMES)})")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    registry = {}

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file with option values (flags take precedence)")
        p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        opts = _Options(p)
        registry[name] = opts
        return opts

    o = command("attribute", "Attribution matrix of a continuous model over a dataset.")
    o.add("--model", help="model JSON")
    o.add("--data", help="dataset CSV")
    o.add("--estimator", choices=["marginal", "conditional"], default="marginal")
    _common(o)
    o.add("--per-point", action="store_true", default=False, help="include per-row marginal attributions")
    o.add("--out", help="output JSON (stdout when omitted)")

    o = command("intervene", "Interventional queries: sampling estimator, adjustment formulas or exact oracle.")
    o.add("--model", help="model or discrete network JSON")
    o.add("--queries", help="queries JSON")
    o.add("--data", help="dataset CSV supplying the other features (sampled from the model when omitted)")
    o.add("--n-samples", type=int, default=2000, help="rows to sample when --data is omitted")
    o.add("--method", choices=list(METHODS), default="ap")
    o.add("--oracle", action="store_true", default=False, help="attach the exact oracle (discrete networks)")
    _common(o, k=100)
    o.add("--out", help="output JSON")

    o = command("separate", "Learn a separation function for two labels.")
    o.add("--data", help="labeled dataset CSV")
    o.add("--labels", type=int, nargs=2, metavar=("J", "K"), default=[1, 2], help="the two labels")
    o.add("--mode", choices=list(MODES), default="literal-mi")
    o.add("--bins", type=int, default=8)
    o.add("--candidates", help="candidate set JSON (default: axis projections plus a quasi-random sweep)")
    o.add("--n-candidates", type=int, default=32, help="quasi-random directions in the default set")
    o.add("--seed", type=int, default=0)
    o.add("--model", help="optional model JSON; adds the mediator separation distance")
    o.add("--metric", choices=["sym-kl", "hellinger"], default="sym-kl")
    o.add("--out", help="output JSON")

    o = command("suppress", "Suppress the spurious correlation of one feature with one label.")
    o.add("--model", help="model JSON")
    o.add("--data", help="labeled training CSV")
    o.add("--holdout", help="labeled CSV for accuracy tracking (training data when omitted)")
    o.add("--feature", type=int, help="1-based feature")
    o.add("--label", type=int, help="1-based label")
    o.add("--epsilon", type=float, default=0.05)
    o.add("--step", type=float, default=1.0)
    o.add("--max-iters", type=int, default=200)
    o.add("--fd-step", type=float, default=1e-4)
    o.add("--estimator", choices=["marginal", "conditional"], default="marginal")
    _common(o, k=256)
    o.add("--out", help="updated model JSON")
    o.add("--trace", help="iteration trace CSV (iter,R,accuracy)")

    o = command("metrics", "Information gain, fairness disparity and spurious scores.")
    o.add("--model", help="model or discrete network JSON")
    o.add("--data", help="labeled dataset CSV")
    o.add("--estimator", choices=["marginal", "conditional"], default="marginal")
    o.add("--bins", type=int, default=8)
    o.add("--epsilon", type=float, help="fairness threshold; marks each pair as within or not")
    _common(o)
    o.add("--out", help="output JSON")

    o = command("benchmark", "Architecture benchmark, with optional convergence and scaling studies.")
    o.add("--trials", type=int, default=100)
    o.add("--n-samples", type=int, default=50000)
    o.add("--seed", type=int, default=0)
    o.add("--timings", action="store_true", default=False, help="include wall-clock summaries")
    o.add("--convergence", action="store_true", default=False, help="run the K convergence study on NET-A")
    o.add("--k-grid", type=int, nargs="+", default=[1000, 4000, 16000])
    o.add("--repeats", type=int, default=20)
    o.add("--reference-k", type=int, default=1000000)
    o.add("--scaling", action="store_true", default=False, help="run the scaling study (wall-clock)")
    o.add("--out", help="output JSON")
    o.add("--csv-dir", help="directory for trials/convergence/scaling CSV tables")

    o = command("validate", "Run a self-check suite.")
    o.add("--suite", choices=list(SUITES), help="suite to run")
    o.add("--model", help="model or discrete network JSON")
    o.add("--data", help="dataset CSV (sampled from the model when omitted)")
    o.add("--n-samples", type=int, default=200)
    _common(o)
    o.add("--out", help="output JSON")

    o = command("generate", "Generate a synthetic scenario with ground truth.")
    o.add("--architecture", choices=list(ARCHITECTURES), default="proposed")
    o.add("--family", choices=["discrete", "continuous"], default="discrete")
    o.add("--n", type=int, default=2)
    o.add("--m", type=int, default=2)
    o.add("--p", type=int, default=1)
    o.add("--noise", type=float, default=0.5)
    o.add("--n-samples", type=int, default=1000)
    o.add("--seed", type=int, default=0)
    o.add("--out", help="scenario JSON")
    o.add("--model-out", help="model JSON")
    o.add("--data-out", help="dataset CSV")
    return parser, registry


REQUIRED = {
    "attribute": ("model", "data"),
    "intervene": ("model", "queries"),
    "separate": ("data",),
    "suppress": ("model", "data", "feature", "label", "out"),
    "metrics": ("model", "data"),
    "benchmark": (),
    "validate": ("suite", "model"),
    "generate": ("out",),
}


def _resolve(args, opts):
    """Fill unset options from ``--config`` and then the defaults."""
    config = {}
    if args.config:
        config = _read_config(args.config)
    known = set(opts.defaults)
    unknown = sorted(set(config) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    for dest, default in opts.defaults.items():
        if getattr(args, dest) is None:
            setattr(args, dest, config.get(dest, default))
    missing = [d for d in REQUIRED[args.command] if getattr(args, d) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): "
                         + ", ".join("--" + d.replace("_", "-") for d in missing))
    return args


def _read_config(path):
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaViolation(f"{path}: config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


# ---------------------------------------------------------------- helpers

def _cfg(args):
    return EstimatorConfig(samples_per_point=args.k, seed=args.seed)


def _emit(doc, path, schema):
    if path:
        write_json(path, doc, schema)
    else:
        validate_document(json.loads(dumps(doc)), schema)
        sys.stdout.write(dumps(doc))


def _continuous(model, what):
    if not isinstance(model, NetworkModel):
        raise CliError("invalid_input", f"{what} needs a continuous model")
    return model


def _one_based(value, upper, name):
    if value is None or not 1 <= int(value) <= upper:
        raise CliError("invalid_input", f"{name} must be in 1..{upper}, got {value}")
    return int(value) - 1


def _dataset(path, model):
    data = read_dataset(path, getattr(model, "n", None))
    m = getattr(model, "m", None)
    if m is not None:
        try:
            data.check_labels(m)
        except ValueError as exc:
            raise SchemaViolation(f"{path}: {exc}") from None
    return data


def _data_or_sample(args, model):
    if args.data:
        return _dataset(args.data, model)
    if isinstance(model, (NetworkModel, DiscreteNetwork)):
        return sample_joint(model, args.n_samples, args.seed)[0]
    return None


# ---------------------------------------------------------------- commands

def cmd_attribute(args):
    model = _continuous(load_model(args.model), "attribute")
    data = _dataset(args.data, model)
    rep = attribution_matrix(model, data, args.estimator, _cfg(args), uncertainty=args.k >= 2,
                             per_point=args.per_point)
    doc = rep.to_dict()
    if args.per_point and rep.per_point is None:
        # Conditional attributions are reported per point through the marginal variant only.
        log.warning("per-point attributions are available for the marginal estimator only")
    _emit(doc, args.out, "attribution_report")


def _load_queries(path):
    doc = read_json(path, "intervention_queries")
    return doc["queries"] if isinstance(doc, dict) else doc


def _query(model, raw):
    feature = raw["feature"]
    if isinstance(feature, str):
        if isinstance(model, DiscreteNetwork) and feature in model.feature_names:
            feature = model.feature_names.index(feature)
        elif isinstance(model, NetworkModel):
            raise CliError("invalid_input", "continuous models take integer features")
    else:
        n = model.n if isinstance(model, (NetworkModel, DiscreteNetwork)) else 0
        feature = _one_based(feature, n, "feature")
    value = raw.get("value")
    if value is not None and isinstance(model, DiscreteBN) and float(value) != int(value):
        raise CliError("invalid_input", f"discrete state {value!r} is not an integer")
    if value is not None and isinstance(model, DiscreteBN):
        value = int(value)
    return InterventionQuery(feature, value, int(raw["label"]) - 1, raw.get("delta"),
                             raw.get("adjustment_set"), raw.get("outcome"))


def _run_one(model, data, q, method, oracle, cfg):
    if q.delta is not None:
        if method != "ap":
            raise CliError("invalid_input", "contrasts (delta) use the sampling estimator")
        est = causal_effect(model, data, q, cfg)
        exact = causal_effect_oracle(model, q) if oracle else None
        return {"method": "contrast", "estimate": est, "oracle": exact,
                "abs_error": None if exact is None else abs(est - exact), "samples": None,
                "std_error": None, "warnings": []}
    if q.value is None:
        raise CliError("invalid_input", "a query needs a value (or a delta for a contrast)")
    if method == "ap" and not isinstance(model, (NetworkModel, DiscreteNetwork)):
        raise CliError("invalid_input", "the sampling estimator needs a structured network")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_query(model, data, q, method, cfg, oracle=False)
    for w in caught:
        log.warning(str(w.message))
    if oracle:
        if not isinstance(model, DiscreteBN):
            raise CliError("invalid_input", "--oracle needs a discrete network")
        res = res.with_oracle(do_effect_oracle(model, q).estimate)
    return res.to_dict()


def cmd_intervene(args):
    model = load_model(args.model)
    raw = _load_queries(args.queries)
    needs_data = any(r.get("method", args.method) == "ap" for r in raw)
    data = _data_or_sample(args, model) if needs_data else None
    cfg = _cfg(args)
    results = []
    for r in raw:
        q = _query(model, r)
        out = _run_one(model, data, q, r.get("method", args.method), args.oracle, cfg)
        echo = {k: r[k] for k in ("feature", "value", "label", "delta", "adjustment_set", "outcome", "method")
                if k in r}
        results.append({"query": echo, **out})
    _emit({"results": results, "K": args.k, "seed": args.seed}, args.out, "intervention_results")


def cmd_separate(args):
    data = _dataset(args.data, None)
    j, k = (int(v) - 1 for v in args.labels)
    if args.candidates:
        cands = [SeparationCandidate.from_dict(d) for d in read_json(args.candidates, "candidates")]
    else:
        cands = default_candidates(data.n, args.n_candidates, args.seed)
    res = learn_separation(data, j, k, cands, args.mode, args.bins)
    doc = res.to_dict()
    doc.update(labels=[j + 1, k + 1], bins=args.bins, distance=None)
    if args.model:
        model = _continuous(load_model(args.model), "the separation distance")
        doc["distance"] = separation_distance(model, j, k, data, args.metric)
    _emit(doc, args.out, "separation_result")


def cmd_suppress(args):
    model = _continuous(load_model(args.model), "suppress")
    data = _dataset(args.data, model)
    holdout = _dataset(args.holdout, model) if args.holdout else None
    i = _one_based(args.feature, model.n, "feature")
    l = _one_based(args.label, model.m, "label")
    scfg = SuppressionConfig(args.epsilon, args.step, args.max_iters, args.fd_step)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        updated, trace = suppress_spurious(model, data, i, l, scfg, _cfg(args), args.estimator, holdout)
    for w in caught:
        log.warning(str(w.message))
    save_model(args.out, updated)
    if args.trace:
        write_rows(args.trace, ["iter", "R", "accuracy"], [(r["iter"], r["R"], r["accuracy"]) for r in trace])
    status = trace[-1]["status"]
    log.info("suppression finished: %s after %d iterations, R=%.4g", status, trace[-1]["iter"], trace[-1]["R"])


def _discrete_attribution(net):
    """Exact do-contrast ``P(l | do(S_i = last)) - P(l | do(S_i = 0))`` per state step."""
    scores = np.zeros((net.n, net.m))
    for i in range(net.n):
        top = net.feature_cardinalities[i] - 1
        if top == 0:
            continue
        for l in range(net.m):
            q = InterventionQuery(i, 0, l, delta=top)
            scores[i, l] = causal_effect_oracle(net, q) / top
    return AttributionReport(scores=scores, estimator="do-contrast")


def cmd_metrics(args):
    model = load_model(args.model)
    data = _dataset(args.data, model)
    if data.labels is None:
        raise CliError("invalid_input", "metrics need a label column")
    if isinstance(model, DiscreteNetwork):
        rep = _discrete_attribution(model)
        metrics = compute_metrics(data, rep, bins=args.bins)
        ig = np.array([[information_gain_exact(model, i, l) for l in range(model.m)] for i in range(model.n)])
        metrics = replace(metrics, info_gain=ig)
        method = "exact"
    else:
        model = _continuous(model, "metrics")
        rep = attribution_matrix(model, data, args.estimator, _cfg(args), uncertainty=False)
        # Mediator values are not observed, so they are simulated for the dataset's source rows.
        sim, trace = sample_given_source(model, data.features, args.seed)
        metrics = compute_metrics(data, rep, bins=args.bins)
        readouts = [r.a for r in model.destination.readout]
        sim_metrics = compute_metrics(sim, rep, trace, args.bins, readouts)
        metrics = replace(metrics, info_gain=sim_metrics.info_gain)
        method = "plug-in"
    doc = metrics.to_dict()
    doc["info_gain_method"] = method
    doc["epsilon"] = args.epsilon
    if args.epsilon is not None:
        for row in doc["fairness"]:
            row["within_epsilon"] = row["fd"] <= args.epsilon
    _emit(doc, args.out, "metrics_report")


def cmd_benchmark(args):
    rep = run_arch_benchmark(args.trials, args.n_samples, args.seed, timings=args.timings)
    doc = rep.to_dict()
    if args.convergence:
        # Feature 2 / label 1 at the origin: feature 1 has no conditional path to label 1 on NET-A,
        # so its error is identically 0 and carries no convergence information.
        rows, ref = convergence_study(net_a(), Dataset([[0.0, 0.0]]), 1, 0, args.k_grid, args.repeats,
                                      seed=args.seed, reference_k=args.reference_k)
        for prev, row in zip([None] + rows[:-1], rows):
            row["ratio"] = None if prev is None or prev["median_abs_error"] == 0 else \
                row["median_abs_error"] / prev["median_abs_error"]
        doc["convergence"] = rows
    if args.scaling:
        table, slopes = scaling_study(seed=args.seed)
        doc["scaling"], doc["slopes"] = table, slopes
    _emit(doc, args.out, "bench_report")
    if args.csv_dir:
        os.makedirs(args.csv_dir, exist_ok=True)
        keys = sorted(doc["trials"][0])
        write_rows(os.path.join(args.csv_dir, "trials.csv"), keys, [[r[k] for k in keys] for r in doc["trials"]])
        if doc["convergence"]:
            keys = ["K", "mean_abs_error", "std", "median_abs_error"]
            write_rows(os.path.join(args.csv_dir, "convergence.csv"), keys,
                       [[r[k] for k in keys] for r in doc["convergence"]])
        if doc["scaling"]:
            keys = ["axis", "m", "n", "p", "seconds"]
            write_rows(os.path.join(args.csv_dir, "scaling.csv"), keys, [[r[k] for k in keys] for r in doc["scaling"]])


def cmd_validate(args):
    model = load_model(args.model)
    data = _data_or_sample(args, model)
    if data is None:
        raise CliError("invalid_input", "validation needs a structured or continuous network")
    try:
        rep = validate_suite(model, data, args.suite, _cfg(args))
    except TypeError as exc:
        raise CliError("invalid_input", str(exc)) from None
    doc = rep.to_dict()
    _emit(doc, args.out, "validation_report")
    if not rep.passed:
        for name in rep.failures:
            print(f"FAILED {name}", file=sys.stderr)
        raise CliError("validation_failed", f"{len(rep.failures)} check(s) failed")


def cmd_generate(args):
    spec = ScenarioSpec(args.architecture, args.n, args.m, args.p, args.noise, args.n_samples, args.seed,
                        args.family)
    sc = generate_scenario(spec)
    if isinstance(sc.model, DiscreteNetwork):
        columns = list(sc.model.feature_names)
    elif isinstance(sc.model, DiscreteBN):
        columns = ["S"] + [v for v in sc.model.nodes if v not in ("S", "D")]
    else:
        columns = [feature_node(i) for i in range(spec.n)]
    truth = {}
    if "do" in sc.ground_truth:
        truth["do_effects"] = [{"treatment": t, "value": v, "label": l + 1, "effect": p}
                               for (t, v, l), p in sorted(sc.ground_truth["do"].items())]
    if "attribution" in sc.ground_truth:
        truth["attribution"] = sc.ground_truth["attribution"]
    doc = {"spec": asdict(spec), "model": model_to_dict(sc.model), "columns": columns, "ground_truth": truth}
    write_json(args.out, doc, "scenario")
    if args.model_out:
        save_model(args.model_out, sc.model)
    if args.data_out:
        write_dataset(args.data_out, sc.data)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ---------------------------------------------------------------- entry point

def _fail(code, message, status):
    print(message, file=sys.stderr)
    print(json.dumps({"error": code, "message": message}, sort_keys=True), file=sys.stderr)
    return status


def _threads():
    raw = os.environ.get("APCALC_THREADS")
    if not raw:
        return nullcontext()
    try:
        count = int(raw)
    except ValueError:
        raise UsageError(f"APCALC_THREADS must be a positive integer, got {raw!r}") from None
    if count < 1:
        raise UsageError(f"APCALC_THREADS must be a positive integer, got {raw!r}")
    return threadpool_limits(limits=count)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = _build_parser()
    try:
        first = next((a for a in argv if not a.startswith("-")), None)
        if first is not None and first not in COMMANDS and "--schema" not in argv:
            return _fail("unknown_command", f"unknown command {first!r}; expected one of {', '.join(COMMANDS)}", 2)
        args = parser.parse_args(argv)
        if args.version:
            sys.stdout.write(dumps({"name": "apcalc", "version": __version__, "commands": list(COMMANDS),
                                    "schemas": list(SCHEMA_NAMES)}))
            return 0
        if args.schema:
            try:
                sys.stdout.write(dumps(load_schema(args.schema)))
            except KeyError as exc:
                raise UsageError(exc.args[0]) from None
            return 0
        if args.command is None:
            raise UsageError("a command is required; see apcalc --help")
        args = _resolve(args, registry[args.command])
        logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(message)s",
                            stream=sys.stderr)
        with _threads():
            HANDLERS[args.command](args)
        return 0
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except CliError as exc:
        return _fail(exc.code, str(exc), 1)
    except FileNotFoundError as exc:
        return _fail("missing_file", f"file not found: {exc.filename}", 1)
    except SchemaViolation as exc:
        return _fail("schema_violation", str(exc), 1)
    except (ValueError, TypeError, KeyError, IndexError, ZeroDivisionError) as exc:
        return _fail("invalid_input", f"{type(exc).__name__}: {exc}", 1)
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic line
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 1)


if __name__ == "__main__":
    sys.exit(main())
