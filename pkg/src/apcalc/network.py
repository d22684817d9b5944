"""Continuous source -> mediators -> destination network and its value types."""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import check_positive, check_positive_int


@dataclass(frozen=True, eq=False)
class MediatorSpec:
    """Linear-Gaussian mediator ``X = W s + eps`` with ``eps ~ N(0, diag(noise_scale**2))``."""

    weight: np.ndarray
    noise_scale: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight, dtype=float, copy=True)
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"mediator weight must be a non-empty p x n matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("mediator weight must be finite")
        s = np.array(self.noise_scale, dtype=float, copy=True).reshape(-1)
        if s.size == 1 and w.shape[0] > 1:
            s = np.full(w.shape[0], s[0])
        if s.shape != (w.shape[0],):
            raise ValueError(f"noise_scale must have length p={w.shape[0]}, got {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("noise_scale entries must be positive and finite")
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "noise_scale", s)

    @property
    def p(self):
        return self.weight.shape[0]

    @property
    def n(self):
        return self.weight.shape[1]


@dataclass(frozen=True, eq=False)
class Readout:
    """Per-label affine score ``u = a . x + c . s + b``."""

    a: np.ndarray
    c: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        a = np.array(self.a, dtype=float, copy=True).reshape(-1)
        c = np.array(self.c, dtype=float, copy=True).reshape(-1)
        b = float(self.b)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(c)) and np.isfinite(b)):
            raise ValueError("readout parameters must be finite")
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class DestinationSpec:
    """Softmax destination over the per-label readout scores."""

    readout: tuple

    def __post_init__(self):
        object.__setattr__(self, "readout", tuple(self.readout))


@dataclass(frozen=True, eq=False)
class SourceSpec:
    kind: str = "std_normal"
    mean: np.ndarray = None
    std: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("std_normal", "normal"):
            raise ValueError(f"unsupported source kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Structured network with ``m`` linear-Gaussian mediators and a softmax destination.

    Immutable; every query takes an :class:`EstimatorConfig` (or explicit seed)
    and is a pure function of its arguments.
    """

    n: int
    m: int
    mediators: tuple
    destination: DestinationSpec
    seed: int = 0
    source: SourceSpec = field(default_factory=SourceSpec)

    def __post_init__(self):
        check_positive_int(self.n, "n")
        check_positive_int(self.m, "m", minimum=2)
        object.__setattr__(self, "mediators", tuple(self.mediators))
        if len(self.mediators) != self.m:
            raise ValueError(f"expected {self.m} mediators, got {len(self.mediators)}")
        for j, med in enumerate(self.mediators):
            if med.n != self.n:
                raise ValueError(f"mediator {j} weight has {med.n} columns, expected n={self.n}")
        ro = self.destination.readout
        if len(ro) != self.m:
            raise ValueError(f"expected {self.m} readouts, got {len(ro)}")
        for j, (r, med) in enumerate(zip(ro, self.mediators)):
            if r.a.shape != (med.p,):
                raise ValueError(f"readout {j}: a has length {r.a.size}, mediator has p={med.p}")
            if r.c.shape != (self.n,):
                raise ValueError(f"readout {j}: c has length {r.c.size}, expected n={self.n}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.source.kind == "normal":
            mean = np.asarray(self.source.mean, dtype=float).reshape(-1)
            std = np.asarray(self.source.std, dtype=float).reshape(-1)
            if mean.shape != (self.n,) or std.shape != (self.n,) or np.any(std <= 0):
                raise ValueError("normal source needs mean and positive std of length n")

    # Stacked, zero-padded parameter blocks. Padding rows carry a = 0 so they
    # never reach the scores.
    @cached_property
    def p_max(self):
        return max(med.p for med in self.mediators)

    @cached_property
    def weight_stack(self):
        w = np.zeros((self.m, self.p_max, self.n))
        for j, med in enumerate(self.mediators):
            w[j, : med.p] = med.weight
        w.setflags(write=False)
        return w

    @cached_property
    def readout_stack(self):
        a = np.zeros((self.m, self.p_max))
        for j, r in enumerate(self.destination.readout):
            a[j, : r.a.size] = r.a
        a.setflags(write=False)
        return a

    @cached_property
    def noise_stack(self):
        s = np.ones((self.m, self.p_max))
        for j, med in enumerate(self.mediators):
            s[j, : med.p] = med.noise_scale
        s.setflags(write=False)
        return s

    @cached_property
    def direct_weights(self):
        """``(m, n)`` matrix of the explicit source terms ``c_l``."""
        c = np.stack([r.c for r in self.destination.readout])
        c.setflags(write=False)
        return c

    @cached_property
    def biases(self):
        b = np.array([r.b for r in self.destination.readout])
        b.setflags(write=False)
        return b

    @cached_property
    def score_std(self):
        """Standard deviation of each label score induced by mediator noise."""
        return np.sqrt(np.sum((self.readout_stack * self.noise_stack) ** 2, axis=1))

    def mediated_weights(self):
        """``(m, n)`` rows ``W_l^T a_l``: the source gradient of each score through its mediator."""
        w = self.weight_stack
        a = self.readout_stack
        return np.matmul(a[:, None, :], w)[:, 0, :]

    def score_gradients(self):
        """Total source gradient ``W_l^T a_l + c_l`` of each score mean."""
        return self.mediated_weights() + self.direct_weights

    def score_means(self, points, gradients=None):
        """Score means ``(N, m)`` at source points ``(N, n)``."""
        g = self.score_gradients() if gradients is None else gradients
        return points @ g.T + self.biases

    def replace(self, **changes):
        kw = dict(n=self.n, m=self.m, mediators=self.mediators, destination=self.destination,
                  seed=self.seed, source=self.source)
        kw.update(changes)
        return NetworkModel(**kw)

    def with_feature_column(self, i, weight_columns, direct_column):
        """Copy of the model with column ``i`` of every ``W_j`` and ``c_j`` replaced."""
        meds = []
        for j, med in enumerate(self.mediators):
            w = np.array(med.weight)
            w[:, i] = weight_columns[j]
            meds.append(MediatorSpec(w, med.noise_scale))
        ro = []
        for j, r in enumerate(self.destination.readout):
            c = np.array(r.c)
            c[i] = direct_column[j]
            ro.append(Readout(r.a, c, r.b))
        return self.replace(mediators=tuple(meds), destination=DestinationSpec(tuple(ro)))


def build_model(weights, noise, readouts_a, readouts_c=None, biases=None, seed=0):
    """Convenience constructor from plain nested lists.

    ``weights`` is a length-m list of p_l x n matrices; ``noise`` a scalar or a
    length-m list of per-coordinate scales.
    """
    m = len(weights)
    ws = [np.atleast_2d(np.asarray(w, dtype=float)) for w in weights]
    n = ws[0].shape[1]
    if np.isscalar(noise):
        noise = [np.full(w.shape[0], float(noise)) for w in ws]
    meds = tuple(MediatorSpec(w, s) for w, s in zip(ws, noise))
    if readouts_c is None:
        readouts_c = [np.zeros(n)] * m
    if biases is None:
        biases = [0.0] * m
    ro = tuple(Readout(a, c, b) for a, c, b in zip(readouts_a, readouts_c, biases))
    return NetworkModel(n=n, m=m, mediators=meds, destination=DestinationSpec(ro), seed=seed)


@dataclass(frozen=True)
class EstimatorConfig:
    """Monte Carlo settings.

    ``samples_per_point`` is K. Inner expectations over the mediators that are
    not pinned use a Gauss-Hermite product rule with ``quadrature_nodes`` nodes
    per dimension when the grid stays below ``max_quadrature_points``, and
    ``inner_samples`` antithetic draws otherwise.
    """

    samples_per_point: int = 1000
    seed: int = 0
    fd_step: float = 1e-4
    quadrature_nodes: int = 32
    max_quadrature_points: int = 4096
    inner_samples: int = 512

    def __post_init__(self):
        check_positive_int(self.samples_per_point, "samples_per_point")
        check_positive(self.fd_step, "fd_step")
        check_positive_int(self.quadrature_nodes, "quadrature_nodes")
        check_positive_int(self.max_quadrature_points, "max_quadrature_points")
        check_positive_int(self.inner_samples, "inner_samples")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes):
        kw = dict(self.__dict__)
        kw.update(changes)
        return EstimatorConfig(**kw)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of feature tuples with optional 0-based labels."""

    features: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        x = np.array(self.features, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError(f"features must be an N x n matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise ValueError("labels must have one entry per row")
            if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("labels must be integers")
            y = y.astype(np.int64)
            if y.size and y.min() < 0:
                raise ValueError("labels must be non-negative")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    def check_labels(self, m):
        if self.labels is not None and self.labels.size and self.labels.max() >= m:
            raise ValueError(f"label index {self.labels.max()} out of range for m={m}")
        return self

    def subset(self, idx):
        return Dataset(self.features[idx], None if self.labels is None else self.labels[idx])
