"""Attention realized as learnable diagonal inner products on cliques.

For node features ``q`` and a pre-attention score ``ã(q_i, q_j)`` passed
through a positive function ``f``, the edge and node metrics are

    A1[{i,j}] = (f(ã(q_i, q_j)) + f(ã(q_j, q_i))) / 2
    A0[i]     = sum_{j in N(i)} A1[{i,j}]      (+ f(ã(q_i, q_i)) with self-loops)

so that ``A0^-1 A1`` is a row-stochastic attention matrix. The induced dual
derivatives are ``d_k^* = A_k^-1 d_k^T A_{k+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .topology import CliqueComplex, Cochain, curl1_t, div0, grad0

KINDS = ("scaled_dot_product", "cosine_similarity", "pearson_correlation", "exponential_kernel")
POSITIVE_FNS = ("exp", "squareplus")
NORM_EPS = 1e-12


def _canonical_kind(kind: str) -> str:
    k = kind.replace("-", "_").lower()
    if k not in KINDS:
        raise ValueError(f"unknown pre-attention kind {kind!r}; choose from {KINDS}")
    return k


@dataclass(frozen=True)
class PreAttentionConfig:
    kind: str = "scaled_dot_product"
    heads: int = 1
    embed_dim: int = 8
    positive_fn: str | None = None  # None: exp, or the bracket's own default
    self_loops: bool = False
    frozen: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", _canonical_kind(self.kind))
        if self.heads < 1 or self.embed_dim < 1:
            raise ValueError("heads and embed_dim must be >= 1")
        if self.positive_fn is not None and self.positive_fn not in POSITIVE_FNS:
            raise ValueError(f"positive_fn must be one of {POSITIVE_FNS}")

    def with_(self, **kw) -> "PreAttentionConfig":
        return replace(self, **kw)


class MetricPair(NamedTuple):
    """Diagonals of the node, edge and triangle inner products."""

    A0: jax.Array
    A1: jax.Array
    A2: jax.Array


def squareplus(x):
    return 0.5 * (x + jnp.sqrt(x * x + 4.0))


def positive(name: str | None):
    return {"exp": jnp.exp, "squareplus": squareplus}[name or "exp"]


def init_attention_params(config: PreAttentionConfig, n_features: int, key) -> dict:
    """Embedding matrices ``WK, WQ`` of shape ``(heads, embed_dim, n_features)``."""
    kk, kq = jax.random.split(key)
    bound = 1.0 / np.sqrt(n_features)
    shape = (config.heads, config.embed_dim, n_features)
    params = {
        "WK": jax.random.uniform(kk, shape, minval=-bound, maxval=bound),
        "WQ": jax.random.uniform(kq, shape, minval=-bound, maxval=bound),
    }
    if config.kind == "exponential_kernel":
        params.update(sigma_u=jnp.array(1.0), sigma_x=jnp.array(1.0),
                      ell_u=jnp.array(1.0), ell_x=jnp.array(1.0))
    return params


def identity_attention_params(config: PreAttentionConfig, n_features: int) -> dict:
    eye = jnp.broadcast_to(jnp.eye(config.embed_dim, n_features), (config.heads, config.embed_dim, n_features))
    params = {"WK": eye, "WQ": eye}
    if config.kind == "exponential_kernel":
        params.update(sigma_u=jnp.array(1.0), sigma_x=jnp.array(1.0),
                      ell_u=jnp.array(1.0), ell_x=jnp.array(1.0))
    return params


def _norm(v):
    return jnp.sqrt(jnp.sum(v * v, axis=-1) + NORM_EPS)


def pre_attention(config: PreAttentionConfig, params: dict, qi, qj):
    """Head-averaged pre-attention ``ã(q_i, q_j)``; broadcasts over leading axes."""
    k = jnp.einsum("hen,...n->...he", params["WK"], qi)
    q = jnp.einsum("hen,...n->...he", params["WQ"], qj)
    kind = config.kind
    if kind == "scaled_dot_product":
        score = jnp.sum(k * q, axis=-1) / config.embed_dim
    elif kind == "cosine_similarity":
        score = jnp.sum(k * q, axis=-1) / (_norm(k) * _norm(q))
    elif kind == "pearson_correlation":
        kc = k - jnp.mean(k, axis=-1, keepdims=True)
        qc = q - jnp.mean(q, axis=-1, keepdims=True)
        score = jnp.sum(kc * qc, axis=-1) / (_norm(kc) * _norm(qc))
    else:
        # positional features u and x are both taken to be the node features
        sq = jnp.sum((k - q) ** 2, axis=-1)
        amp = (params["sigma_u"] * params["sigma_x"]) ** 2
        score = amp * jnp.exp(-sq / (2 * params["ell_u"] ** 2)) * jnp.exp(-sq / (2 * params["ell_x"] ** 2))
    return jnp.mean(score, axis=-1)


def _require_no_isolated(cx: CliqueComplex, self_loops: bool) -> None:
    if self_loops:
        return
    isolated = np.flatnonzero(cx.degrees() == 0)
    if len(isolated):
        raise ValueError(
            f"node(s) {isolated[:5].tolist()} have no neighbours, so A0 would vanish there; "
            "build the metric with self_loops=True"
        )


def build_metric(config: PreAttentionConfig, params: dict, cx: CliqueComplex, q,
                 self_loops: bool | None = None) -> MetricPair:
    self_loops = config.self_loops if self_loops is None else self_loops
    _require_no_isolated(cx, self_loops)
    f = positive(config.positive_fn)
    qs, qt = q[cx.src], q[cx.tgt]
    a1 = 0.5 * (f(pre_attention(config, params, qs, qt)) + f(pre_attention(config, params, qt, qs)))
    n = cx.n_nodes
    if cx.small:
        a0 = jnp.abs(cx.d0_dense).T @ a1
    else:
        a0 = jax.ops.segment_sum(a1, cx.src, n) + jax.ops.segment_sum(a1, cx.tgt, n)
    if self_loops:
        a0 = a0 + f(pre_attention(config, params, q, q))
    return MetricPair(a0, a1, jnp.ones(cx.n_triangles, dtype=a1.dtype))


def identity_metric(cx: CliqueComplex, dtype=jnp.float64) -> MetricPair:
    return MetricPair(jnp.ones(cx.n_nodes, dtype), jnp.ones(cx.n_edges, dtype), jnp.ones(cx.n_triangles, dtype))


def random_metric(cx: CliqueComplex, rng: np.random.Generator, spread: float = 1.0) -> MetricPair:
    """Log-normal positive diagonals, for property tests."""
    draw = lambda m: jnp.asarray(np.exp(spread * rng.standard_normal(m)))
    return MetricPair(draw(cx.n_nodes), draw(cx.n_edges), draw(cx.n_triangles))


# --- dual derivatives ----------------------------------------------------------

def _bcast(a, x):
    return a.reshape(a.shape + (1,) * (x.ndim - 1))


def dual0(cx: CliqueComplex, metric: MetricPair, p):
    """d0^* p = A0^-1 d0^T A1 p."""
    return div0(cx, _bcast(metric.A1, p) * p) / _bcast(metric.A0, p)


def dual1(cx: CliqueComplex, metric: MetricPair, r):
    """d1^* r = A1^-1 d1^T A2 r."""
    return curl1_t(cx, _bcast(metric.A2, r) * r) / _bcast(metric.A1, r)


def dual_derivative(metric: MetricPair, cx: CliqueComplex, cochain: Cochain) -> Cochain:
    cochain.check(cx)
    vals = jnp.asarray(cochain.values)
    if cochain.degree == 1:
        return Cochain(0, np.asarray(dual0(cx, metric, vals)))
    if cochain.degree == 2:
        return Cochain(1, np.asarray(dual1(cx, metric, vals)))
    raise ValueError("dual derivative takes a cochain of degree 1 or 2")


def laplacian0_apply(cx: CliqueComplex, metric: MetricPair, q):
    """Delta_0 q = d0^* d0 q."""
    return dual0(cx, metric, grad0(cx, q))


def gat_heat_step(metric: MetricPair, cx: CliqueComplex, q, step: float):
    """One forward-Euler step of metric heat flow, ``q - step * Delta_0 q``.

    With a self-looped metric and ``step = 1`` this is the non-activated
    attention layer ``sum_{j in N(i) ∪ {i}} a(q_i, q_j) q_j``.
    """
    q = jnp.asarray(q)
    return q - step * laplacian0_apply(cx, metric, q)


def directed_dual0(config: PreAttentionConfig, params: dict, cx: CliqueComplex, q):
    """Divergence weighted by the raw, unsymmetrized attention numerators.

    Node ``i`` weighs edge ``{i,j}`` by ``f(ã(q_i, q_j))`` and node ``j`` by
    ``f(ã(q_j, q_i))``, as in a standard GAT aggregation. This is *not*
    adjoint to ``d0`` in any inner product unless the two weights agree; it
    exists as a negative control for the structure audit.
    """
    f = positive(config.positive_fn)
    qs, qt = q[cx.src], q[cx.tgt]
    w_src = f(pre_attention(config, params, qs, qt))
    w_tgt = f(pre_attention(config, params, qt, qs))
    n = cx.n_nodes
    a0 = jax.ops.segment_sum(w_src, cx.src, n) + jax.ops.segment_sum(w_tgt, cx.tgt, n)

    def apply(p):
        out = (jax.ops.segment_sum(_bcast(w_tgt, p) * p, cx.tgt, n)
               - jax.ops.segment_sum(_bcast(w_src, p) * p, cx.src, n))
        return out / _bcast(a0, p)

    return apply


# --- higher-order attention (cliques up to triangles) ---------------------------

def higher_order_metric(W, f, cx: CliqueComplex, q) -> MetricPair:
    """Triangle attention ``a2 = f(W(q_i, q_j, q_k))`` summed down to edges and nodes.

    ``a1[{i,j}]`` sums ``a2`` over common neighbours ``k``; ``a0[i]`` sums over
    ordered pairs ``(j, k)`` of neighbours forming a triangle with ``i``, i.e.
    twice the triangle sum, which keeps ``A0^-1 A1`` row-stochastic.
    """
    if isinstance(f, str):
        f = positive(f)
    if cx.n_triangles == 0:
        raise ValueError("higher-order attention needs at least one triangle")
    te = cx.tri_edges
    covered = np.zeros(cx.n_edges, bool)
    covered[te.ravel()] = True
    if not covered.all():
        bad = cx.edges[np.flatnonzero(~covered)[0]]
        raise ValueError(f"edge ({bad[0]}, {bad[1]}) has no common neighbour, so its A1 entry would vanish")
    _require_no_isolated(cx, self_loops=False)
    t = cx.triangles
    a2 = f(jnp.einsum("abc,ta,tb,tc->t", W, q[t[:, 0]], q[t[:, 1]], q[t[:, 2]]))
    m, n = cx.n_edges, cx.n_nodes
    a1 = sum(jax.ops.segment_sum(a2, te[:, c], m) for c in range(3))
    a0 = 2.0 * sum(jax.ops.segment_sum(a2, t[:, c], n) for c in range(3))
    return MetricPair(a0, a1, a2)

