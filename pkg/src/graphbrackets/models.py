"""Encode / integrate / decode models for trajectory learning, plus flat baselines.

Bracket models lift node features ``[q ‖ d0ᵀd0 q]`` and edge features
``[p ‖ d0 d0ᵀ p]`` through 3-layer MLPs to a latent ``(q, p)`` pair, run the
bracket dynamics from the first snapshot, and decode every saved state back
with MLPs over the same concatenation of latent features.
``node`` integrates a 4-layer MLP vector field over the flattened features;
``node_ae`` does the same over the flattened latent of the bracket encoders.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .autodiff import NonFiniteError, adam_init, adam_step, param_count
from .brackets import BracketSystem, State, init_mlp, mlp
from .config import ExperimentConfig
from .integrators import integrate_scan
from .pendulum import PendulumGraphData
from .topology import CliqueComplex, div0, grad0

log = logging.getLogger(__name__)

BRACKET_MODELS = ("hamiltonian", "gradient", "double_bracket", "metriplectic")


def node_inputs(cx: CliqueComplex, q):
    if q.ndim > 2:  # leading time axis
        return jax.vmap(lambda x: node_inputs(cx, x))(q)
    return jnp.concatenate([q, div0(cx, grad0(cx, q))], axis=-1)


def edge_inputs(cx: CliqueComplex, p):
    if p.ndim > 2:
        return jax.vmap(lambda x: edge_inputs(cx, x))(p)
    return jnp.concatenate([p, grad0(cx, div0(cx, p))], axis=-1)


@dataclass(frozen=True)
class TrajectoryModel:
    config: ExperimentConfig
    cx: CliqueComplex
    n_channels: int  # physical feature width (2 for planar positions)
    dt: float  # snapshot interval
    pin_anchor: bool = True

    @property
    def kind(self) -> str:
        return self.config.model

    @property
    def system(self) -> BracketSystem | None:
        c = self.config
        if c.model not in BRACKET_MODELS:
            return None
        return BracketSystem(c.model, c.attention, c.rhs_scale,
                             c.net_hidden or c.hidden, c.activation)

    def init_params(self, key) -> dict:
        c, n, h, d = self.config, self.n_channels, self.config.hidden, self.config.latent_dim
        ke, kf, kd, kg, ks = jax.random.split(key, 5)
        if c.model == "node":
            width = (self.cx.n_nodes + self.cx.n_edges) * n
            sizes = (width,) + (c.node_width,) * 3 + (width,)
            return {"field": init_mlp(kf, sizes)}
        params = {"enc_q": init_mlp(ke, (2 * n, h, h, d)),
                  "enc_p": init_mlp(kf, (2 * n, h, h, d)),
                  "dec_q": init_mlp(kd, (2 * d, h, h, n)),
                  "dec_p": init_mlp(kg, (2 * d, h, h, n))}
        if c.model == "node_ae":
            width = (self.cx.n_nodes + self.cx.n_edges) * d
            params["field"] = init_mlp(ks, (width,) + (c.node_ae_width,) * 2 + (width,))
        else:
            params["dyn"] = self.system.init_params(ks, d)
        return params

    # -- pieces --------------------------------------------------------------

    def encode(self, params, q, p) -> State:
        act = self.config.activation
        return State(mlp(params["enc_q"], node_inputs(self.cx, q), act),
                     mlp(params["enc_p"], edge_inputs(self.cx, p), act))

    def decode(self, params, z: State):
        act = self.config.activation
        return (mlp(params["dec_q"], node_inputs(self.cx, z.q), act),
                mlp(params["dec_p"], edge_inputs(self.cx, z.p), act))

    def latent_rhs(self, params):
        if self.kind == "node_ae":
            nv = self.cx.n_nodes
            act = self.config.activation

            def rhs(z: State) -> State:
                flat = jnp.concatenate([z.q, z.p]).reshape(-1)
                out = mlp(params["field"], flat, act).reshape(-1, z.q.shape[-1])
                return State(out[:nv], out[nv:])
            return rhs
        system = self.system
        return lambda z: system.rhs(params["dyn"], self.cx, z)

    def _flat_rhs(self, params):
        act = self.config.activation
        return lambda x: mlp(params["field"], x, act)

    def _step_dt(self):
        return self.dt / self.config.substeps

    # -- full rollout ----------------------------------------------------------

    def rollout_latent(self, params, q0, p0, n_saves: int) -> State:
        z0 = self.encode(params, q0, p0)
        return integrate_scan(self.latent_rhs(params), z0, self._step_dt(), n_saves,
                              self.config.scheme, self.config.substeps)

    def predict(self, params, q0, p0, n_saves: int):
        """Predicted ``(q, p)`` of shape ``(n_saves, |V|, c)`` and ``(n_saves, |E|, c)``."""
        if self.kind == "node":
            nv, c = self.cx.n_nodes, self.n_channels
            x0 = jnp.concatenate([q0, p0]).reshape(-1)
            xs = integrate_scan(self._flat_rhs(params), x0, self._step_dt(), n_saves,
                                self.config.scheme, self.config.substeps)
            xs = xs.reshape(n_saves, -1, c)
            qh, ph = xs[:, :nv], xs[:, nv:]
        else:
            z = self.rollout_latent(params, q0, p0, n_saves)
            qh, ph = self.decode(params, z)
        if self.pin_anchor:
            qh = qh.at[:, 0].set(0.0)
        return qh, ph

    def mae(self, params, q, p):
        qh, ph = self.predict(params, q[0], p[0], q.shape[0])
        mq = jnp.mean(jnp.abs(qh - q))
        mp = jnp.mean(jnp.abs(ph - p))
        return mq, mp

    def loss(self, params, q, p):
        mq, mp = self.mae(params, q, p)
        return 0.5 * (mq + mp)

    def latent_energy(self, params, q, p):
        """Latent energy and entropy along the predicted trajectory (bracket models only)."""
        system = self.system
        if system is None:
            return None
        z = self.rollout_latent(params, q[0], p[0], q.shape[0])
        dyn = params["dyn"]
        E = jax.vmap(lambda zq, zp: system.energy(dyn, self.cx, State(zq, zp)))(z.q, z.p)
        S = jax.vmap(lambda zq, zp: system.entropy(dyn, self.cx, State(zq, zp)))(z.q, z.p)
        return E, S


@dataclass
class TrainResult:
    model: TrajectoryModel
    params: dict  # best-on-train
    metrics: dict
    history: list  # (epoch, loss) pairs

    def predict(self, q0, p0, n_saves):
        return self.model.predict(self.params, jnp.asarray(q0), jnp.asarray(p0), n_saves)


def _metric_dict(model, params, q, p) -> dict:
    mq, mp = model.mae(params, q, p)
    mq, mp = float(mq), float(mp)
    return {"mae_q": mq, "mae_p": mp, "total_mae": 0.5 * (mq + mp)}


def _epoch_chunk(model: TrajectoryModel, lr: float):
    """Jitted scan over epochs, vmapped over a leading seed axis.

    The carry holds the best-so-far weights; losses are measured before each
    update so the best weights are always ones whose loss was observed.
    """
    vg = jax.value_and_grad(model.loss)

    def one(carry, _):
        params, opt, best, best_loss, q, p = carry
        loss, g = vg(params, q, p)
        improved = loss < best_loss
        best = jax.tree_util.tree_map(lambda a, b: jnp.where(improved, a, b), params, best)
        best_loss = jnp.where(improved, loss, best_loss)
        params, opt, _ = adam_step(params, g, opt, lr)
        return (params, opt, best, best_loss, q, p), loss

    def run(params, opt, best, best_loss, q, p, length):
        carry, losses = jax.lax.scan(one, (params, opt, best, best_loss, q, p), None, length=length)
        return carry[:4], losses

    batched = jax.vmap(run, in_axes=(0, 0, 0, 0, None, None, None))
    return jax.jit(batched, static_argnums=6)


def build_model(config: ExperimentConfig, data: PendulumGraphData) -> TrajectoryModel:
    dt = float(data.t[1] - data.t[0]) if len(data.t) > 1 else 1.0
    return TrajectoryModel(config, data.complex, data.q.shape[-1], dt)


def _stack(trees):
    return jax.tree_util.tree_map(lambda *xs: jnp.stack(xs), *trees)


def _unstack(tree, i):
    return jax.tree_util.tree_map(lambda x: x[i], tree)


def train_trajectories(config: ExperimentConfig, data: PendulumGraphData, seeds,
                       chunk: int = 250) -> list[TrainResult]:
    """Full-batch Adam on total MAE, one independent run per seed, batched.

    Each run starts from ``PRNGKey(seed)`` and returns its lowest-loss weights.
    A non-finite loss in any run aborts with the epoch and run named.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    model = build_model(config, data)
    q = jnp.asarray(data.q)
    p = jnp.asarray(data.p)
    inits = [model.init_params(jax.random.PRNGKey(s)) for s in seeds]
    init_metrics = [_metric_dict(model, prm, q, p) for prm in inits]
    t0 = time.perf_counter()

    params = _stack(inits)
    best = params
    best_loss = jnp.full(len(seeds), jnp.inf)
    opt = jax.vmap(adam_init)(params)
    run = _epoch_chunk(model, config.learning_rate)
    histories = [[] for _ in seeds]
    done = 0
    while done < config.epochs:
        n = min(chunk, config.epochs - done)
        (params, opt, best, best_loss), losses = run(params, opt, best, best_loss, q, p, n)
        losses = np.asarray(losses)  # (seeds, n)
        bad = np.argwhere(~np.isfinite(losses))
        if len(bad):
            r, i = bad[0]
            last = float(losses[r, i - 1]) if i > 0 else float("nan")
            raise NonFiniteError(
                f"{config.model} seed {seeds[r]}: loss became non-finite at epoch {done + int(i)} "
                f"(last finite loss {last:.4g}, lr {config.learning_rate:g})")
        stride = max(1, chunk // 5)
        for r in range(len(seeds)):
            histories[r].extend((done + i, float(losses[r, i])) for i in range(0, n, stride))
        done += n
        if config.log_every and done % config.log_every == 0:
            log.info("%s epoch %d loss %s", config.model, done, np.round(losses[:, -1], 5).tolist())
    elapsed = time.perf_counter() - t0

    results = []
    for r, seed in enumerate(seeds):
        last = _unstack(params, r)
        # the last update has not been scored yet
        final = _metric_dict(model, last, q, p)
        chosen = last if final["total_mae"] < float(best_loss[r]) else _unstack(best, r)
        metrics = _metric_dict(model, chosen, q, p)
        metrics.update(
            model=config.model, seed=seed, epochs=config.epochs, lr=config.learning_rate,
            initial=init_metrics[r], final_epoch=final, n_params=param_count(last),
            train_seconds=elapsed / len(seeds),
        )
        ener = model.latent_energy(chosen, q, p)
        if ener is not None:
            E = np.asarray(ener[0])
            metrics["latent_energy_max_step_drift"] = float(np.max(np.abs(np.diff(E)))) if len(E) > 1 else 0.0
            metrics["latent_energy_total_change"] = float(E[-1] - E[0])
        results.append(TrainResult(model, chosen, metrics, histories[r]))
    return results


def train_trajectory(config: ExperimentConfig, data: PendulumGraphData, chunk: int = 250) -> TrainResult:
    return train_trajectories(config, data, [config.seed], chunk)[0]


def evaluate(model: TrajectoryModel, params, data: PendulumGraphData) -> dict:
    return _metric_dict(model, params, jnp.asarray(data.q), jnp.asarray(data.p))


def trajectory_table(model: TrajectoryModel, params, data: PendulumGraphData):
    """Rows ``t, x1, y1, x2, y2`` for truth and prediction, for CSV export."""
    qh, _ = model.predict(params, jnp.asarray(data.q[0]), jnp.asarray(data.p[0]), len(data.t))
    qh = np.asarray(qh)
    pred = np.column_stack([data.t, qh[:, 1, 0], qh[:, 1, 1], qh[:, 2, 0], qh[:, 2, 1]])
    true = np.column_stack([data.t, data.q[:, 1, 0], data.q[:, 1, 1], data.q[:, 2, 0], data.q[:, 2, 1]])
    return true, pred


def energy_table(model: TrajectoryModel, params, data: PendulumGraphData):
    out = model.latent_energy(params, jnp.asarray(data.q), jnp.asarray(data.p))
    if out is None:
        return None
    return np.column_stack([data.t, np.asarray(out[0]), np.asarray(out[1])])
