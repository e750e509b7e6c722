"""Node classification with latent bracket dynamics on synthetic graphs.

Pipeline: affine encoder ``q(0) = phi(x)``, edge features ``p(0) = d0 q(0)``,
bracket dynamics to time ``T``, affine decoder ``psi``, linear head, and
cross-entropy on the training nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .autodiff import adam_init, adam_step
from .brackets import BracketSystem, State, init_mlp
from .config import ConfigError, ExperimentConfig, GraphSpec
from .integrators import integrate_scan
from .topology import CliqueComplex, build_complex, grad0

DEFAULT_CLASSIFY_LR = 1e-2
DEPTHS = (1, 2, 4, 8, 16)


@dataclass(frozen=True)
class GraphDataset:
    complex: CliqueComplex
    features: np.ndarray  # (|V|, F)
    labels: np.ndarray  # (|V|,)
    train_mask: np.ndarray
    test_mask: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def planted_partition(spec: GraphSpec, rng: np.random.Generator) -> GraphDataset:
    """Stochastic block model with Gaussian class-mean features.

    Each community also gets a ring through its members so no node is
    isolated. With ``spec.separable`` there are no cross-community edges and
    node features are the one-hot class indicator, exactly.
    """
    n, C, F = spec.n_nodes, spec.n_classes, spec.n_features
    if C > n:
        raise ConfigError(f"{C} classes cannot fit on {n} nodes")
    labels = np.arange(n) % C
    rng.shuffle(labels)

    edges = set()
    for c in range(C):
        members = np.flatnonzero(labels == c)
        if len(members) > 1:
            for a, b in zip(members, np.roll(members, -1)):
                if a != b:
                    edges.add((min(a, b), max(a, b)))
    p_out = 0.0 if spec.separable else spec.p_out
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, spec.p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges.update(zip(iu[keep].tolist(), ju[keep].tolist()))
    cx = build_complex(n, sorted((int(a), int(b)) for a, b in edges))

    if spec.separable:
        if F < C:
            raise ConfigError("separable graphs need n_features >= n_classes")
        x = np.zeros((n, F))
        x[np.arange(n), labels] = 1.0
    else:
        means = rng.standard_normal((C, F))
        x = means[labels] + spec.feature_noise * rng.standard_normal((n, F))

    train = np.zeros(n, dtype=bool)
    for c in range(C):
        members = rng.permutation(np.flatnonzero(labels == c))
        k = max(1, int(round(spec.train_fraction * len(members))))
        train[members[:k]] = True
    test = ~train
    if not test.any():
        test = train.copy()
    return GraphDataset(cx, x, labels, train, test)


@dataclass(frozen=True)
class NodeClassifier:
    config: ExperimentConfig
    cx: CliqueComplex
    n_features: int
    n_classes: int

    @property
    def system(self) -> BracketSystem:
        c = self.config
        if c.model not in ("hamiltonian", "gradient", "double_bracket", "metriplectic"):
            raise ConfigError(f"node classification needs a bracket model, got {c.model!r}")
        return BracketSystem(c.model, c.attention, c.rhs_scale, c.net_hidden or c.latent_dim, c.activation)

    def init_params(self, key) -> dict:
        d = self.config.latent_dim
        ke, kd, kc, ks = jax.random.split(key, 4)
        return {"enc": init_mlp(ke, (self.n_features, d))[0],
                "dec": init_mlp(kd, (d, d))[0],
                "head": init_mlp(kc, (d, self.n_classes))[0],
                "dyn": self.system.init_params(ks, d)}

    def logits(self, params, x, n_steps: int | None = None):
        c = self.config
        n_steps = c.n_steps if n_steps is None else n_steps
        system = self.system
        q0 = x @ params["enc"]["W"] + params["enc"]["b"]
        z0 = State(q0, grad0(self.cx, q0))
        rhs = lambda z: system.rhs(params["dyn"], self.cx, z)
        zs = integrate_scan(rhs, z0, c.horizon / n_steps, n_steps + 1, c.classify_scheme)
        qT = zs.q[-1]
        h = qT @ params["dec"]["W"] + params["dec"]["b"]
        return h @ params["head"]["W"] + params["head"]["b"]


def cross_entropy(logits, labels, mask):
    logp = jax.nn.log_softmax(logits, axis=-1)
    nll = -jnp.take_along_axis(logp, labels[:, None], axis=-1)[:, 0]
    return jnp.sum(nll * mask) / jnp.maximum(jnp.sum(mask), 1.0)


def accuracy(logits, labels, mask) -> float:
    pred = np.asarray(jnp.argmax(logits, axis=-1))
    mask = np.asarray(mask, dtype=bool)
    return float(np.mean(pred[mask] == np.asarray(labels)[mask]))


@dataclass
class ClassifyResult:
    model: NodeClassifier
    params: dict
    metrics: dict


def train_node_classifier(config: ExperimentConfig, data: GraphDataset) -> ClassifyResult:
    if data.n_classes > data.complex.n_nodes:
        raise ConfigError("more classes than nodes")
    model = NodeClassifier(config, data.complex, data.features.shape[1], data.n_classes)
    params = model.init_params(jax.random.PRNGKey(config.seed))
    x = jnp.asarray(data.features)
    y = jnp.asarray(data.labels)
    tr = jnp.asarray(data.train_mask, dtype=x.dtype)
    lr = config.lr if config.lr is not None else DEFAULT_CLASSIFY_LR

    def loss_fn(prm):
        return cross_entropy(model.logits(prm, x), y, tr)

    @jax.jit
    def run(prm, opt):
        def one(carry, _):
            prm, opt = carry
            loss, g = jax.value_and_grad(loss_fn)(prm)
            prm, opt, _ = adam_step(prm, g, opt, lr)
            return (prm, opt), loss
        (prm, opt), losses = jax.lax.scan(one, (prm, opt), None, length=config.epochs)
        return prm, opt, losses

    predict = jax.jit(lambda prm: model.logits(prm, x))
    init_test = accuracy(predict(params), y, data.test_mask)
    if config.epochs:
        params, _, losses = run(params, adam_init(params))
        losses = np.asarray(losses)
        if not np.all(np.isfinite(losses)):
            bad = int(np.flatnonzero(~np.isfinite(losses))[0])
            raise FloatingPointError(f"classification loss became non-finite at epoch {bad}")
    else:
        losses = np.zeros(0)
    logits = predict(params)
    metrics = {
        "model": config.model, "seed": config.seed, "epochs": config.epochs,
        "n_steps": config.n_steps, "horizon": config.horizon,
        "train_accuracy": accuracy(logits, y, data.train_mask),
        "test_accuracy": accuracy(logits, y, data.test_mask),
        "initial_test_accuracy": init_test,
        "final_loss": float(losses[-1]) if len(losses) else float(loss_fn(params)),
    }
    return ClassifyResult(model, params, metrics)


def depth_study(config: ExperimentConfig, data: GraphDataset, depths=DEPTHS, repeats: int = 1) -> dict:
    """Test accuracy at a fixed horizon for each step count.

    Each step count is trained ``repeats`` times from seeds ``config.seed,
    config.seed + 1, ...`` and the accuracies are averaged; the spread is
    taken over the averages.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for n in depths:
        runs = [train_node_classifier(config.replace(n_steps=int(n), seed=config.seed + r), data).metrics
                for r in range(repeats)]
        test = [m["test_accuracy"] for m in runs]
        rows.append({"n_steps": int(n), "test_accuracy": float(np.mean(test)),
                     "train_accuracy": float(np.mean([m["train_accuracy"] for m in runs])),
                     "test_accuracy_runs": test})
    accs = [r["test_accuracy"] for r in rows]
    return {"model": config.model, "horizon": config.horizon, "repeats": repeats, "rows": rows,
            "spread_points": 100.0 * (max(accs) - min(accs))}
