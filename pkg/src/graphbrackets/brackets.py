"""Hamiltonian, gradient, double-bracket and metriplectic dynamics on (q, p).

With ``x = (q, p)`` (node and edge features) and the block inner product
``A = diag(A0, A1)``, the generating operators are

    L = [[0, -d0*], [d0, 0]]                 skew-adjoint
    G = diag(d0* d0, d1* d1 + d0 d0*)        self-adjoint, PSD
    M = diag(0, A1 d1* d1 A1)                self-adjoint, PSD

and the four systems are ``L∇E``, ``-G∇E``, ``L∇E + L²∇E`` and
``L∇E + M∇S``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .attention import (MetricPair, PreAttentionConfig, _bcast, build_metric, dual0, dual1,
                        init_attention_params)
from .topology import CliqueComplex, curl1, curl1_t, div0, grad0

KINDS = ("hamiltonian", "gradient", "double_bracket", "metriplectic")
SCALED_KINDS = ("hamiltonian", "gradient", "double_bracket")
# exp lets A0 underflow once attention scores grow, and the metriplectic
# node update divides by A0
DEFAULT_POSITIVE_FN = {"metriplectic": "squareplus"}


class State(NamedTuple):
    q: jax.Array  # (|V|, n)
    p: jax.Array  # (|E|, n)


def _tmap(f, *xs):
    return jax.tree_util.tree_map(f, *xs)


def add(x: State, y: State) -> State:
    return _tmap(jnp.add, x, y)


def scale(c, x: State) -> State:
    return _tmap(lambda a: c * a, x)


def inner(metric: MetricPair, x: State, y: State):
    """<x, y>_A = q_x^T A0 q_y + p_x^T A1 p_y, summed over feature channels."""
    return (jnp.sum(_bcast(metric.A0, x.q) * x.q * y.q)
            + jnp.sum(_bcast(metric.A1, x.p) * x.p * y.p))


# --- operators ------------------------------------------------------------------

def apply_L(cx: CliqueComplex, metric: MetricPair, x: State, d0_star=None) -> State:
    d0_star = d0_star or (lambda p: dual0(cx, metric, p))
    return State(-d0_star(x.p), grad0(cx, x.q))


def apply_G(cx: CliqueComplex, metric: MetricPair, x: State) -> State:
    dq = dual0(cx, metric, grad0(cx, x.q))
    dp = dual1(cx, metric, curl1(cx, x.p)) + grad0(cx, dual0(cx, metric, x.p))
    return State(dq, dp)


def apply_M(cx: CliqueComplex, metric: MetricPair, x: State) -> State:
    a1 = _bcast(metric.A1, x.p)
    return State(jnp.zeros_like(x.q), a1 * dual1(cx, metric, curl1(cx, a1 * x.p)))


# --- kinetic energy ---------------------------------------------------------------

def energy_kinetic(state: State):
    return 0.5 * (jnp.sum(state.q ** 2) + jnp.sum(state.p ** 2))


def grad_energy_kinetic(state: State, metric: MetricPair) -> State:
    """A-gradient of the kinetic energy, (A0^-1 q, A1^-1 p)."""
    return State(state.q / _bcast(metric.A0, state.q), state.p / _bcast(metric.A1, state.p))


def hamiltonian_rhs(cx: CliqueComplex, metric: MetricPair, state: State) -> State:
    g = grad_energy_kinetic(state, metric)
    return State(-dual0(cx, metric, g.p), grad0(cx, g.q))


def gradient_rhs(cx: CliqueComplex, metric: MetricPair, state: State) -> State:
    g = grad_energy_kinetic(state, metric)
    return scale(-1.0, apply_G(cx, metric, g))


def double_bracket_rhs(cx: CliqueComplex, metric: MetricPair, state: State) -> State:
    g = grad_energy_kinetic(state, metric)
    d0q = grad0(cx, g.q)
    ds_p = dual0(cx, metric, g.p)
    dq = -dual0(cx, metric, d0q) - ds_p
    dp = d0q - grad0(cx, ds_p)
    return State(dq, dp)


# --- metriplectic energy / entropy ------------------------------------------------

def init_mlp(key, sizes) -> list:
    """Dense layers with weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    layers = []
    for k, (m, n) in zip(jax.random.split(key, len(sizes) - 1), zip(sizes[:-1], sizes[1:])):
        kw, kb = jax.random.split(k)
        bound = 1.0 / np.sqrt(m)
        layers.append({"W": jax.random.uniform(kw, (m, n), minval=-bound, maxval=bound),
                       "b": jax.random.uniform(kb, (n,), minval=-bound, maxval=bound)})
    return layers


def leaky_relu(x, slope=0.01):
    return jnp.where(x > 0, x, slope * x)


ACTIVATIONS = {
    "tanh": jnp.tanh,
    "relu": jax.nn.relu,
    "squareplus": lambda x: 0.5 * (x + jnp.sqrt(x * x + 4.0)),
    "sigmoid": jax.nn.sigmoid,
    "leaky_relu": leaky_relu,
}


def mlp(layers, x, activation="tanh"):
    act = ACTIVATIONS[activation]
    for layer in layers[:-1]:
        x = act(x @ layer["W"] + layer["b"])
    return x @ layers[-1]["W"] + layers[-1]["b"]


def _scalar_net(layers, activation):
    return lambda v: mlp(layers, v, activation)[..., 0]


class Thermo(NamedTuple):
    E: jax.Array
    S: jax.Array
    grad_E: State
    grad_S: State


class _Parts(NamedTuple):
    E: jax.Array
    S: jax.Array
    df: jax.Array  # ∇f_E(s(q))
    dg: jax.Array  # ∇g_E(s(d0 d0^T p))
    ds: jax.Array  # ∇g_S(s(d1^T d1 p))
    w_E: jax.Array  # d0 d0^T 1
    w_S: jax.Array  # d1^T d1 1


def _metriplectic_parts(cx, state, nets, activation) -> _Parts:
    q, p = state
    fE = _scalar_net(nets["f_E"], activation)
    gE = _scalar_net(nets["g_E"], activation)
    gS = _scalar_net(nets["g_S"], activation)
    s_q = jnp.sum(q, axis=0)
    s_e = jnp.sum(grad0(cx, div0(cx, p)), axis=0)
    s_s = jnp.sum(curl1_t(cx, curl1(cx, p)), axis=0)
    ones_e = jnp.ones(cx.n_edges, dtype=p.dtype)
    return _Parts(
        E=fE(s_q) + gE(s_e),
        S=gS(s_s),
        df=jax.grad(fE)(s_q),
        dg=jax.grad(gE)(s_e),
        ds=jax.grad(gS)(s_s),
        w_E=grad0(cx, div0(cx, ones_e)),
        w_S=curl1_t(cx, curl1(cx, ones_e)),
    )


def metriplectic_functionals(cx: CliqueComplex, metric: MetricPair, state: State, nets: dict,
                             activation: str = "tanh") -> Thermo:
    """E = f_E(s(q)) + g_E(s(d0 d0^T p)),  S = g_S(s(d1^T d1 p)), with A-gradients.

    The gradients are assembled from per-aggregate network gradients,
    ``∇(f∘s∘B) = B^T 1 ⊗ ∇f``, rather than differentiated end to end.
    """
    pt = _metriplectic_parts(cx, state, nets, activation)
    grad_E = State(jnp.outer(1.0 / metric.A0, pt.df), jnp.outer(pt.w_E / metric.A1, pt.dg))
    grad_S = State(jnp.zeros_like(state.q), jnp.outer(pt.w_S / metric.A1, pt.ds))
    return Thermo(pt.E, pt.S, grad_E, grad_S)


def metriplectic_rhs(cx: CliqueComplex, metric: MetricPair, state: State, nets: dict,
                     activation: str = "tanh") -> State:
    """L∇E + M∇S in closed form, with the A1 A1^-1 pairs cancelled:

        dq = -A0^-1 d0^T (d0 d0^T 1 ⊗ ∇g_E)
        dp = d0 (A0^-1 1 ⊗ ∇f_E) + d1^T A2 d1 (d1^T d1 1 ⊗ ∇g_S)
    """
    pt = _metriplectic_parts(cx, state, nets, activation)
    dq = -div0(cx, jnp.outer(pt.w_E, pt.dg)) / metric.A0[:, None]
    dp = grad0(cx, jnp.outer(1.0 / metric.A0, pt.df))
    dp = dp + curl1_t(cx, metric.A2[:, None] * curl1(cx, jnp.outer(pt.w_S, pt.ds)))
    return State(dq, dp)


# --- the system object -------------------------------------------------------------

@dataclass(frozen=True)
class BracketSystem:
    """One of the four bracket right-hand sides plus its attention metric.

    ``rhs_scale`` multiplies the Hamiltonian, gradient and double-bracket
    right-hand sides by ``sigmoid(alpha)``; it has no effect on the
    metriplectic system.
    """

    kind: str
    attention: PreAttentionConfig = field(default_factory=PreAttentionConfig)
    rhs_scale: bool = False
    net_hidden: int = 32
    activation: str = "tanh"

    def __post_init__(self):
        kind = self.kind.replace("-", "_").lower()
        if kind not in KINDS:
            raise ValueError(f"unknown bracket {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.attention.positive_fn is None:
            fn = DEFAULT_POSITIVE_FN.get(kind, "exp")
            object.__setattr__(self, "attention", self.attention.with_(positive_fn=fn))

    def init_params(self, key, n_features: int) -> dict:
        ka, kf, kg, ks = jax.random.split(key, 4)
        params = {"attn": init_attention_params(self.attention, n_features, ka)}
        if self.rhs_scale and self.kind in SCALED_KINDS:
            params["alpha"] = jnp.array(0.0)
        if self.kind == "metriplectic":
            sizes = (n_features, self.net_hidden, 1)
            params["nets"] = {"f_E": init_mlp(kf, sizes), "g_E": init_mlp(kg, sizes),
                              "g_S": init_mlp(ks, sizes)}
        return params

    def metric(self, params: dict, cx: CliqueComplex, q) -> MetricPair:
        attn = params["attn"]
        if self.attention.frozen:
            attn = jax.lax.stop_gradient(attn)
        return build_metric(self.attention, attn, cx, q)

    def rhs(self, params: dict, cx: CliqueComplex, state: State, metric: MetricPair | None = None) -> State:
        metric = self.metric(params, cx, state.q) if metric is None else metric
        if self.kind == "metriplectic":
            return metriplectic_rhs(cx, metric, state, params["nets"], self.activation)
        fn = {"hamiltonian": hamiltonian_rhs, "gradient": gradient_rhs,
              "double_bracket": double_bracket_rhs}[self.kind]
        out = fn(cx, metric, state)
        if "alpha" in params:
            out = scale(jax.nn.sigmoid(params["alpha"]), out)
        return out

    def energy(self, params: dict, cx: CliqueComplex, state: State, metric: MetricPair | None = None):
        if self.kind == "metriplectic":
            metric = self.metric(params, cx, state.q) if metric is None else metric
            return metriplectic_functionals(cx, metric, state, params["nets"], self.activation).E
        return energy_kinetic(state)

    def entropy(self, params: dict, cx: CliqueComplex, state: State, metric: MetricPair | None = None):
        if self.kind != "metriplectic":
            return jnp.array(0.0)
        metric = self.metric(params, cx, state.q) if metric is None else metric
        return metriplectic_functionals(cx, metric, state, params["nets"], self.activation).S

    def grad_energy(self, params, cx, state, metric):
        if self.kind == "metriplectic":
            return metriplectic_functionals(cx, metric, state, params["nets"], self.activation).grad_E
        return grad_energy_kinetic(state, metric)
