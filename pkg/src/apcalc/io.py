"""File formats: model and network JSON, dataset CSV, atomic writes and schema validation.

Labels are 1-based in every file and 0-based in memory.
"""
import csv
import io
import json
import os
import tempfile
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from .discrete import DiscreteBN, DiscreteNetwork
from .network import Dataset, DestinationSpec, MediatorSpec, NetworkModel, Readout, SourceSpec

SCHEMA_NAMES = (
    "model", "discrete_network", "attribution_report", "intervention_queries",
    "intervention_results", "separation_result", "candidates", "metrics_report",
    "bench_report", "validation_report", "scenario",
)


class SchemaViolation(ValueError):
    """A document does not match its published JSON schema."""


@lru_cache(maxsize=None)
def load_schema(name):
    if name not in SCHEMA_NAMES:
        raise KeyError(f"unknown schema {name!r}; available: {', '.join(SCHEMA_NAMES)}")
    text = resources.files("apcalc").joinpath("schemas", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_document(doc, name):
    """Raise :class:`SchemaViolation` when ``doc`` does not match schema ``name``."""
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaViolation(f"{name}: {exc.message} at {where}") from None


# ---------------------------------------------------------------- atomic writes

def _atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _plain(obj):
    """Convert numpy scalars and arrays, and map non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dumps(doc):
    return json.dumps(_plain(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc, schema=None):
    doc = _plain(doc)
    if schema is not None:
        validate_document(doc, schema)
    _atomic_write(path, dumps(doc))


def read_json(path, schema=None):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{path}: not valid JSON ({exc.msg}, line {exc.lineno})") from None
    if schema is not None:
        validate_document(doc, schema)
    return doc


def write_rows(path, header, rows):
    """Atomic CSV write with '.' decimals and ``repr``-exact floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    _atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------- models

def model_to_dict(model):
    if isinstance(model, (DiscreteNetwork, DiscreteBN)):
        return model.to_dict()
    src = {"kind": model.source.kind}
    if model.source.kind == "normal":
        src["mean"] = np.asarray(model.source.mean, float).tolist()
        src["std"] = np.asarray(model.source.std, float).tolist()
    return {
        "kind": "continuous",
        "n": model.n,
        "m": model.m,
        "mediators": [{"p": med.p, "weight": med.weight.reshape(-1).tolist(),
                       "noise_scale": med.noise_scale.tolist()} for med in model.mediators],
        "destination": {"readout": [{"a": r.a.tolist(), "c": r.c.tolist(), "b": r.b}
                                    for r in model.destination.readout]},
        "source": src,
        "seed": int(model.seed),
    }


def model_from_dict(doc):
    kind = doc.get("kind", "continuous")
    if kind == "structured":
        validate_document(doc, "discrete_network")
        return DiscreteNetwork.from_dict(doc)
    if kind == "dag":
        validate_document(doc, "discrete_network")
        return DiscreteBN.from_dict(doc)
    validate_document(doc, "model")
    n, m = int(doc["n"]), int(doc["m"])
    meds = []
    for k, md in enumerate(doc["mediators"]):
        p = int(md["p"])
        w = np.asarray(md["weight"], dtype=float)
        if w.size != p * n:
            raise SchemaViolation(f"mediator {k + 1}: weight has {w.size} entries, expected p*n={p * n}")
        meds.append(MediatorSpec(w.reshape(p, n), md["noise_scale"]))
    ro = tuple(Readout(r["a"], r.get("c", [0.0] * n), r.get("b", 0.0)) for r in doc["destination"]["readout"])
    s = doc.get("source", {"kind": "std_normal"})
    source = SourceSpec(s["kind"], s.get("mean"), s.get("std"))
    return NetworkModel(n=n, m=m, mediators=tuple(meds), destination=DestinationSpec(ro),
                        seed=int(doc.get("seed", 0)), source=source)


def load_model(path):
    return model_from_dict(read_json(path))


def save_model(path, model):
    doc = model_to_dict(model)
    write_json(path, doc, "model" if isinstance(model, NetworkModel) else "discrete_network")


# ---------------------------------------------------------------- datasets

def read_dataset(path, n=None):
    """Read ``f1..fn[,label]`` CSV into a :class:`Dataset` with 0-based labels."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaViolation(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_label = bool(header) and header[-1] == "label"
    feats = header[:-1] if has_label else header
    expect = [f"f{i + 1}" for i in range(len(feats))]
    if not feats or feats != expect:
        raise SchemaViolation(f"{path}: header must be f1,...,fn[,label], got {','.join(header)}")
    if n is not None and len(feats) != n:
        raise SchemaViolation(f"{path}: {len(feats)} feature columns, model expects {n}")
    body = [r for r in rows[1:] if r]
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise SchemaViolation(f"{path}: row {k + 2} has {len(r)} fields, expected {len(header)}")
    try:
        table = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise SchemaViolation(f"{path}: non-numeric value ({exc})") from None
    if table.shape[0] == 0:
        raise SchemaViolation(f"{path}: no data rows")
    labels = None
    if has_label:
        lab = table[:, -1]
        if np.any(lab != np.round(lab)) or np.any(lab < 1):
            raise SchemaViolation(f"{path}: labels must be integers in 1..m")
        labels = lab.astype(np.int64) - 1
        table = table[:, :-1]
    if not np.all(np.isfinite(table)):
        raise SchemaViolation(f"{path}: non-finite feature values")
    return Dataset(table, labels)


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def write_dataset(path, data):
    header = [f"f{i + 1}" for i in range(data.n)]
    if data.labels is not None:
        header.append("label")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k in range(len(data)):
        row = [_fmt(v) for v in data.features[k]]
        if data.labels is not None:
            row.append(str(int(data.labels[k]) + 1))
        w.writerow(row)
    _atomic_write(path, buf.getvalue())
