"""Small tabular Bayesian networks with exact enumeration.

:class:`DiscreteBN` is a generic factor-based DAG (used for the junction,
common-cause and frontdoor fixtures); :class:`DiscreteNetwork` is the
source -> mediators -> label family built on top of it.
"""
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np

DEFAULT_STATE_CAP = 10**7
_ROW_TOL = 1e-12


class EnumerationCapError(ValueError):
    """Raised when the joint state space exceeds the enumeration cap."""


@dataclass(frozen=True, eq=False)
class Factor:
    """Conditional table ``P(children | parents)``.

    ``table`` has one axis per parent followed by one axis per child, so the
    last axes hold the child states.
    """

    children: tuple
    parents: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "parents", tuple(self.parents))
        t = np.array(self.table, dtype=float, copy=True)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def variables(self):
        return self.parents + self.children


class DiscreteBN:
    """Discrete DAG over named nodes with exact inference by enumeration.

    Parameters
    ----------
    cardinalities : dict
        Ordered mapping ``name -> number of states``.
    factors : sequence of Factor
        Every node must appear as a child of exactly one factor.
    state_cap : int
        Maximum number of joint states; larger networks are rejected.
    """

    def __init__(self, cardinalities, factors, state_cap=DEFAULT_STATE_CAP):
        self.cards = {str(k): int(v) for k, v in cardinalities.items()}
        self.nodes = tuple(self.cards)
        for name, card in self.cards.items():
            if card < 1:
                raise ValueError(f"node {name} must have at least one state")
        total = int(np.prod([float(c) for c in self.cards.values()]))
        if total > state_cap:
            raise EnumerationCapError(f"{total} joint states exceed the cap of {state_cap}")
        self.state_cap = state_cap
        seen = {}
        for f in factors:
            for v in f.variables:
                if v not in self.cards:
                    raise KeyError(f"unknown node {v!r} in factor")
            expect = tuple(self.cards[v] for v in f.variables)
            if f.table.shape != expect:
                raise ValueError(f"factor for {f.children} has shape {f.table.shape}, expected {expect}")
            if np.any(f.table < 0):
                raise ValueError(f"factor for {f.children} has negative entries")
            nchild = len(f.children)
            sums = f.table.reshape(f.table.shape[: f.table.ndim - nchild] + (-1,)).sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > _ROW_TOL):
                raise ValueError(f"factor for {f.children} has rows that do not sum to 1")
            for c in f.children:
                if c in seen:
                    raise ValueError(f"node {c!r} is the child of more than one factor")
                seen[c] = f
        missing = [v for v in self.nodes if v not in seen]
        if missing:
            raise ValueError(f"nodes without a factor: {missing}")
        self.factors = tuple(self._toposort(factors))

    def _toposort(self, factors):
        placed, order, pending = set(), [], list(factors)
        while pending:
            ready = [f for f in pending if set(f.parents) <= placed]
            if not ready:
                raise ValueError("factor graph contains a cycle")
            for f in ready:
                order.append(f)
                placed.update(f.children)
                pending.remove(f)
        return order

    def card(self, name):
        return self.cards[name]

    def axis(self, name):
        try:
            return self.nodes.index(name)
        except ValueError:
            raise KeyError(f"unknown node {name!r}") from None

    @property
    def n_states(self):
        return int(np.prod([self.cards[v] for v in self.nodes]))

    def _broadcast(self, factor):
        axes = [self.axis(v) for v in factor.variables]
        order = np.argsort(axes)
        t = factor.table.transpose(order)
        shape = [1] * len(self.nodes)
        for ax in axes:
            shape[ax] = self.cards[self.nodes[ax]]
        return t.reshape(shape)

    @cached_property
    def joint(self):
        """Full joint table with one axis per node, in ``self.nodes`` order."""
        j = np.ones([self.cards[v] for v in self.nodes])
        for f in self.factors:
            j = j * self._broadcast(f)
        j.setflags(write=False)
        return j

    def marginal(self, names):
        """Joint marginal over ``names`` with axes in the given order."""
        names = list(names)
        keep = [self.axis(v) for v in names]
        drop = tuple(ax for ax in range(len(self.nodes)) if ax not in keep)
        m = self.joint.sum(axis=drop)
        kept_sorted = sorted(keep)
        return m.transpose([kept_sorted.index(ax) for ax in keep])

    def conditional(self, targets, given):
        """``P(targets | given)`` with axes ``given + targets``; NaN where ``P(given) = 0``."""
        targets, given = list(targets), list(given)
        joint = self.marginal(given + targets)
        denom = joint.sum(axis=tuple(range(len(given), len(given) + len(targets))), keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, joint / np.where(denom > 0, denom, 1.0), np.nan)

    def probability(self, event, given=None):
        """Probability of an assignment dict, optionally conditioned on another."""
        given = dict(given or {})
        names = list(given) + [k for k in event if k not in given]
        table = self.marginal(names)
        full = {**given, **event}
        for k, v in full.items():
            if given.get(k, v) != v:
                return 0.0
        num = table[tuple(full[k] for k in names)]
        if not given:
            return float(num)
        den = table.sum(axis=tuple(range(len(given), len(names))))[tuple(given[k] for k in given)]
        if den <= 0:
            raise ZeroDivisionError("conditioning event has zero probability")
        return float(num / den)

    def intervene(self, assignments):
        """Truncated factorization: replace each intervened node's factor by a point mass."""
        assignments = {str(k): int(v) for k, v in assignments.items()}
        for k, v in assignments.items():
            if not 0 <= v < self.card(k):
                raise ValueError(f"state {v} out of range for node {k}")
        new = []
        for f in self.factors:
            hit = [c for c in f.children if c in assignments]
            if not hit:
                new.append(f)
                continue
            t = f.table
            off = len(f.parents)
            for c in hit:
                ax = off + f.children.index(c)
                t = t.sum(axis=ax, keepdims=True)
                point = np.zeros(self.card(c))
                point[assignments[c]] = 1.0
                shape = [1] * t.ndim
                shape[ax] = self.card(c)
                t = t * point.reshape(shape)
            new.append(Factor(f.children, f.parents, t))
        return DiscreteBN(self.cards, new, self.state_cap)

    def _factor_is_independent(self, f):
        if len(f.children) < 2:
            return True
        t = f.table
        off = len(f.parents)
        prod = np.ones_like(t)
        for k in range(len(f.children)):
            ax = off + k
            others = tuple(a for a in range(off, t.ndim) if a != ax)
            prod = prod * t.sum(axis=others, keepdims=True)
        return np.allclose(prod, t, atol=1e-12, rtol=0)

    def graph(self):
        """Directed graph of the factorization.

        Children sharing a factor whose table does not factorize get a common
        latent parent named ``U(child1,child2,...)``. This matches
        :meth:`intervene`, which keeps the other children's marginal when one
        of them is set.
        """
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for f in self.factors:
            for c in f.children:
                for p in f.parents:
                    g.add_edge(p, c)
            if not self._factor_is_independent(f):
                latent = latent_name(f.children)
                for c in f.children:
                    g.add_edge(latent, c)
        return g

    def sample(self, count, rng):
        """Ancestral sample of ``count`` joint states as ``{name: int array}``."""
        out = {}
        for f in self.factors:
            nchild = len(f.children)
            flat = f.table.reshape(f.table.shape[: f.table.ndim - nchild] + (-1,))
            if f.parents:
                rows = flat[tuple(out[p] for p in f.parents)]
            else:
                rows = np.broadcast_to(flat, (count, flat.shape[-1]))
            cdf = np.cumsum(rows, axis=-1)
            cdf[:, -1] = 1.0
            u = rng.random(count)
            idx = (u[:, None] >= cdf).sum(axis=1)
            states = np.unravel_index(idx, tuple(self.cards[c] for c in f.children))
            for c, s in zip(f.children, states):
                out[c] = s.astype(np.int64)
        return out

    def to_dict(self):
        return {
            "kind": "dag",
            "nodes": [{"name": v, "card": self.cards[v]} for v in self.nodes],
            "factors": [
                {"children": list(f.children), "parents": list(f.parents),
                 "table": f.table.reshape(-1).tolist()}
                for f in self.factors
            ],
        }

    @classmethod
    def from_dict(cls, doc, state_cap=DEFAULT_STATE_CAP):
        cards = {d["name"]: int(d["card"]) for d in doc["nodes"]}
        factors = []
        for fd in doc["factors"]:
            shape = tuple(cards[v] for v in list(fd["parents"]) + list(fd["children"]))
            factors.append(Factor(fd["children"], fd["parents"], np.asarray(fd["table"], float).reshape(shape)))
        return cls(cards, factors, state_cap)


def latent_name(children):
    return "U(" + ",".join(children) + ")"


def feature_node(i):
    return f"S{i + 1}"


def mediator_node(j):
    return f"X{j + 1}"


LABEL_NODE = "D"


class DiscreteNetwork(DiscreteBN):
    """Tabular source -> mediators -> label network.

    Parameters
    ----------
    feature_cardinalities : sequence of int
    mediator_cardinalities : sequence of int
        One mediator per label, so ``m = len(mediator_cardinalities)``.
    prior : array, shape feature_cardinalities
        Joint table ``P(S)``.
    cpt_mediators : sequence of arrays, shape feature_cardinalities + (card_j,)
        ``P(X_j | S)``.
    cpt_destination : array, shape mediator_cardinalities + (m,)
        ``P(label | X_1..X_m)``.
    """

    def __init__(self, feature_cardinalities, mediator_cardinalities, prior, cpt_mediators,
                 cpt_destination, state_cap=DEFAULT_STATE_CAP):
        self.feature_cardinalities = tuple(int(c) for c in feature_cardinalities)
        self.mediator_cardinalities = tuple(int(c) for c in mediator_cardinalities)
        n, m = len(self.feature_cardinalities), len(self.mediator_cardinalities)
        if n < 1 or m < 2:
            raise ValueError("need n >= 1 features and m >= 2 mediators")
        if len(cpt_mediators) != m:
            raise ValueError(f"expected {m} mediator tables, got {len(cpt_mediators)}")
        self.feature_names = tuple(feature_node(i) for i in range(n))
        self.mediator_names = tuple(mediator_node(j) for j in range(m))
        cards = {}
        cards.update(zip(self.feature_names, self.feature_cardinalities))
        cards.update(zip(self.mediator_names, self.mediator_cardinalities))
        cards[LABEL_NODE] = m
        fc, mc = self.feature_cardinalities, self.mediator_cardinalities
        prior = np.asarray(prior, dtype=float).reshape(fc)
        meds = [np.asarray(t, dtype=float).reshape(fc + (mc[j],)) for j, t in enumerate(cpt_mediators)]
        dest = np.asarray(cpt_destination, dtype=float).reshape(mc + (m,))
        factors = [Factor(self.feature_names, (), prior)]
        factors += [Factor((self.mediator_names[j],), self.feature_names, t) for j, t in enumerate(meds)]
        factors.append(Factor((LABEL_NODE,), self.mediator_names, dest))
        super().__init__(cards, factors, state_cap)
        self.prior = self.factors[0].table
        self.cpt_mediators = tuple(f.table for f in self.factors[1:-1])
        self.cpt_destination = self.factors[-1].table

    @property
    def n(self):
        return len(self.feature_cardinalities)

    @property
    def m(self):
        return len(self.mediator_cardinalities)

    def check_state(self, s):
        s = tuple(int(v) for v in np.asarray(s).reshape(-1))
        if len(s) != self.n:
            raise ValueError(f"expected a source state of length {self.n}, got {len(s)}")
        for v, c in zip(s, self.feature_cardinalities):
            if not 0 <= v < c:
                raise ValueError(f"source state {s} out of range for cardinalities {self.feature_cardinalities}")
        return s

    def to_dict(self):
        return {
            "kind": "structured",
            "feature_cardinalities": list(self.feature_cardinalities),
            "mediator_cardinalities": list(self.mediator_cardinalities),
            "prior": self.prior.reshape(-1).tolist(),
            "cpt_mediators": [t.reshape(-1).tolist() for t in self.cpt_mediators],
            "cpt_destination": self.cpt_destination.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, doc, state_cap=DEFAULT_STATE_CAP):
        return cls(doc["feature_cardinalities"], doc["mediator_cardinalities"], doc["prior"],
                   doc["cpt_mediators"], doc["cpt_destination"], state_cap)
