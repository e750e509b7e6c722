"""Reverse-mode gradients, finite-difference checks and Adam.

Parameters are plain nested dicts/lists of arrays (a JAX pytree). Reverse-mode
differentiation is delegated to ``jax.grad``; the recorded tape of a loss is
its jaxpr, which :func:`trace` exposes for inspection.
"""
from __future__ import annotations

from typing import Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree


class NonFiniteError(FloatingPointError):
    pass


def param_count(params) -> int:
    return sum(int(np.prod(np.shape(leaf))) for leaf in jax.tree_util.tree_leaves(params))


def all_finite(tree) -> bool:
    return all(bool(jnp.all(jnp.isfinite(leaf))) for leaf in jax.tree_util.tree_leaves(tree))


def trace(loss_fn: Callable, params, *args) -> list[str]:
    """Primitive names recorded for ``loss_fn(params, *args)``, in program order."""
    jaxpr = jax.make_jaxpr(loss_fn)(params, *args)
    names = []

    def walk(jp):
        for eqn in jp.eqns:
            names.append(eqn.primitive.name)
            for sub in jax.core.jaxprs_in_params(eqn.params):
                walk(sub)

    walk(jaxpr.jaxpr)
    return names


def grad(loss_fn: Callable, params, *args):
    """Return ``(loss, grads)`` for a scalar ``loss_fn(params, *args)``.

    A non-finite forward value is re-run with NaN/Inf checking switched on so
    the error names the primitive that produced it.
    """
    value, g = jax.value_and_grad(loss_fn)(params, *args)
    if not np.isfinite(float(value)):
        try:
            with jax.debug_nans(True), jax.debug_infs(True):
                loss_fn(params, *args)
        except FloatingPointError as exc:
            raise NonFiniteError(f"non-finite loss: {exc}") from exc
        raise NonFiniteError(f"non-finite loss {float(value)}")
    return value, g


def numerical_grad(loss_fn: Callable, params, *args, h: float = 1e-5):
    """Central finite differences over every scalar parameter."""
    flat, unravel = ravel_pytree(params)
    flat = np.asarray(flat, dtype=float)
    f = lambda v: float(loss_fn(unravel(jnp.asarray(v)), *args))
    out = np.empty_like(flat)
    for i in range(flat.size):
        e = flat.copy()
        e[i] += h
        fp = f(e)
        e[i] -= 2 * h
        fm = f(e)
        out[i] = (fp - fm) / (2 * h)
    return unravel(jnp.asarray(out))


def gradient_check(loss_fn: Callable, params, *args, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Max elementwise relative error between reverse mode and central differences.

    Relative error is ``|g - g_fd| / max(|g|, |g_fd|, floor)``.
    """
    _, g = grad(loss_fn, params, *args)
    g_fd = numerical_grad(loss_fn, params, *args, h=h)
    a = np.asarray(ravel_pytree(g)[0])
    b = np.asarray(ravel_pytree(g_fd)[0])
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# --- Adam ----------------------------------------------------------------------------

class AdamState(NamedTuple):
    step: jax.Array
    m: object
    v: object


def adam_init(params) -> AdamState:
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return AdamState(jnp.array(0), zeros, jax.tree_util.tree_map(jnp.zeros_like, params))


def adam_step(params, grads, state: AdamState, lr: float = 1e-3, betas=(0.9, 0.999),
              eps: float = 1e-8, weight_decay: float = 0.0, decoupled: bool = False):
    """One bias-corrected Adam update; returns ``(params, state, applied)``.

    With a non-finite gradient the update is skipped and ``applied`` is False.
    ``decoupled`` selects AdamW-style weight decay; otherwise the decay is
    added to the gradient.
    """
    b1, b2 = betas
    finite = jnp.all(jnp.array([jnp.all(jnp.isfinite(g)) for g in jax.tree_util.tree_leaves(grads)]))
    if weight_decay and not decoupled:
        grads = jax.tree_util.tree_map(lambda g, p: g + weight_decay * p, grads, params)
    t = state.step + 1
    m = jax.tree_util.tree_map(lambda m_, g: b1 * m_ + (1 - b1) * g, state.m, grads)
    v = jax.tree_util.tree_map(lambda v_, g: b2 * v_ + (1 - b2) * g * g, state.v, grads)
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t

    def upd(p, m_, v_):
        new = p - lr * (m_ / c1) / (jnp.sqrt(v_ / c2) + eps)
        if weight_decay and decoupled:
            new = new - lr * weight_decay * p
        return new

    new_params = jax.tree_util.tree_map(upd, params, m, v)
    keep = lambda new, old: jnp.where(finite, new, old)
    new_params = jax.tree_util.tree_map(keep, new_params, params)
    new_state = AdamState(jnp.where(finite, t, state.step),
                          jax.tree_util.tree_map(keep, m, state.m),
                          jax.tree_util.tree_map(keep, v, state.v))
    return new_params, new_state, finite
