"""Expectations of a softmax over independent Gaussian scores.

All continuous-model queries reduce to this: each label score is a scalar
Gaussian ``u_l ~ N(mu_l, s_l^2)`` given the source point.
"""
import numpy as np

from ._rng import antithetic_normal, derive_rng

_CHUNK_ELEMENTS = 1 << 22


def softmax(u, axis=-1):
    z = u - np.max(u, axis=axis, keepdims=True)
    np.exp(z, out=z)
    z /= np.sum(z, axis=axis, keepdims=True)
    return z


def inner_rule(dim, cfg, tag="inner"):
    """Nodes ``(R, dim)`` in standard-normal units and weights ``(R,)`` summing to 1."""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    q = cfg.quadrature_nodes
    if q**dim <= cfg.max_quadrature_points:
        x, w = np.polynomial.hermite_e.hermegauss(q)
        w = w / w.sum()
        grids = np.meshgrid(*([x] * dim), indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
        wgrid = np.meshgrid(*([w] * dim), indexing="ij")
        weights = np.prod(np.stack([g.reshape(-1) for g in wgrid], axis=1), axis=1)
        return nodes, weights
    rng = derive_rng(cfg.seed, tag, dim)
    nodes = antithetic_normal(rng, cfg.inner_samples, dim)
    return nodes, np.full(nodes.shape[0], 1.0 / nodes.shape[0])


def pinned_expectations(pin, pinned_scores, means, std, nodes, weights, weight_label=None):
    """Integrate out every score except ``pin``.

    Parameters
    ----------
    pin : int
        Index of the score held fixed.
    pinned_scores : array (N, K)
        Values of the pinned score.
    means : array (N, m)
    std : array (m,)
    nodes, weights : inner integration rule over the ``m - 1`` free scores.
    weight_label : int, optional
        If given, also return ``E[sigma_label * sigma]`` (needed for gradients).

    Returns
    -------
    probs : array (N, K, m)
        ``E[softmax(u)]`` with ``u_pin`` fixed.
    cross : array (N, K, m) or None
    """
    N, K = pinned_scores.shape
    m = means.shape[1]
    others = [j for j in range(m) if j != pin]
    R = nodes.shape[0]
    free = means[:, None, others] + std[others] * nodes[None, :, :]  # (N, R, m-1)
    probs = np.empty((N, K, m))
    cross = None if weight_label is None else np.empty((N, K, m))
    step = max(1, _CHUNK_ELEMENTS // max(1, N * R * m))
    for lo in range(0, K, step):
        hi = min(K, lo + step)
        u = np.empty((N, hi - lo, R, m))
        u[..., pin] = pinned_scores[:, lo:hi, None]
        u[..., others] = free[:, None, :, :]
        sig = softmax(u)
        probs[:, lo:hi] = np.einsum("nkrm,r->nkm", sig, weights)
        if cross is not None:
            cross[:, lo:hi] = np.einsum("nkrm,nkr,r->nkm", sig, sig[..., weight_label], weights)
    return probs, cross
