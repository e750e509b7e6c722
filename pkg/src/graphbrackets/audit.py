"""Randomized verification of the algebraic structure behind each bracket.

Violations are reported, never raised. Adjointness and sign checks are
relative (normalized by the magnitudes of the terms involved); the exactness
and degeneracy checks are absolute max-norms.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import jax.numpy as jnp

from .attention import MetricPair
from .brackets import BracketSystem, State, apply_G, apply_L, apply_M, inner, metriplectic_functionals
from .topology import CliqueComplex


def _rel(a, b):
    a, b = float(a), float(b)
    den = abs(a) + abs(b)
    return 0.0 if den == 0.0 else abs(a - b) / den


def _norm_A(metric, x):
    return float(jnp.sqrt(jnp.maximum(inner(metric, x, x), 0.0)))


def random_state(cx: CliqueComplex, n_features: int, rng: np.random.Generator) -> State:
    return State(jnp.asarray(rng.standard_normal((cx.n_nodes, n_features))),
                 jnp.asarray(rng.standard_normal((cx.n_edges, n_features))))


def skew_violation(cx, metric, x, y, d0_star=None) -> float:
    """|<Lx, y>_A + <x, Ly>_A|, relative."""
    lx_y = inner(metric, apply_L(cx, metric, x, d0_star), y)
    x_ly = inner(metric, x, apply_L(cx, metric, y, d0_star))
    return _rel(lx_y, -x_ly)


def selfadjoint_violation(op, metric, x, y) -> float:
    return _rel(inner(metric, op(x), y), inner(metric, x, op(y)))


def psd_violation(op, metric, x) -> float:
    ox = op(x)
    val = float(inner(metric, ox, x))
    den = _norm_A(metric, ox) * _norm_A(metric, x)
    return 0.0 if den == 0.0 else max(0.0, -val) / den


def dual_matrices(cx: CliqueComplex, metric: MetricPair):
    """Explicit ``d0^* = A0^-1 d0^T A1`` and ``d1^* = A1^-1 d1^T A2`` as sparse matrices."""
    A0, A1, A2 = (np.asarray(a, dtype=float) for a in metric)
    d0s = sp.diags(1.0 / A0) @ cx.d0.T.astype(float) @ sp.diags(A1)
    d1s = sp.diags(1.0 / A1) @ cx.d1.T.astype(float) @ sp.diags(A2)
    return d0s.tocsr(), d1s.tocsr()


def dual_exactness(cx: CliqueComplex, metric: MetricPair) -> float:
    """Largest entry of the matrix d0^* d1^*."""
    if cx.n_triangles == 0:
        return 0.0
    d0s, d1s = dual_matrices(cx, metric)
    prod = (d0s @ d1s).tocoo()
    return float(np.max(np.abs(prod.data))) if prod.nnz else 0.0


def structure_audit(system: BracketSystem, params: dict, cx: CliqueComplex, trials: int,
                    metric: MetricPair | None = None, seed: int = 0, n_features: int | None = None) -> dict:
    """Max violation per identity over ``trials`` random states.

    If ``metric`` is None a fresh attention metric is built from a random
    node state on every trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    if n_features is None:
        n_features = int(params["attn"]["WK"].shape[-1])
    worst: dict[str, float] = {}

    def record(name, val):
        worst[name] = max(worst.get(name, 0.0), float(val))

    for _ in range(trials):
        x = random_state(cx, n_features, rng)
        y = random_state(cx, n_features, rng)
        m = system.metric(params, cx, random_state(cx, n_features, rng).q) if metric is None else metric
        G = lambda v: apply_G(cx, m, v)
        M = lambda v: apply_M(cx, m, v)
        L2 = lambda v: apply_L(cx, m, apply_L(cx, m, v))
        record("skew_L", skew_violation(cx, m, x, y))
        record("selfadjoint_G", selfadjoint_violation(G, m, x, y))
        record("psd_G", psd_violation(G, m, x))
        record("selfadjoint_M", selfadjoint_violation(M, m, x, y))
        record("psd_M", psd_violation(M, m, x))
        record("selfadjoint_L2", selfadjoint_violation(L2, m, x, y))
        record("dual_exactness", dual_exactness(cx, m))

        rhs = system.rhs(params, cx, x, m)
        gE = system.grad_energy(params, cx, x, m)
        rate = float(inner(m, rhs, gE))
        scale_ = _norm_A(m, rhs) * _norm_A(m, gE) or 1.0
        if system.kind in ("hamiltonian", "metriplectic"):
            record("energy_conservation", abs(rate) / scale_)
        else:
            record("energy_dissipation", max(0.0, rate) / scale_)
        if system.kind == "metriplectic":
            th = metriplectic_functionals(cx, m, x, params["nets"], system.activation)
            s_rate = float(inner(m, rhs, th.grad_S))
            s_scale = _norm_A(m, rhs) * _norm_A(m, th.grad_S) or 1.0
            record("entropy_production", max(0.0, -s_rate) / s_scale)
            LgS = apply_L(cx, m, th.grad_S)
            MgE = apply_M(cx, m, th.grad_E)
            record("degeneracy_L_gradS", max(float(jnp.max(jnp.abs(LgS.q))), float(jnp.max(jnp.abs(LgS.p)))))
            record("degeneracy_M_gradE", float(jnp.max(jnp.abs(MgE.p))))
    return {"kind": system.kind, "trials": trials, "violations": worst}
