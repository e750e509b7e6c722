"""Damped double pendulum: ground-truth trajectories and their graph encoding.

State is ``(theta1, theta2, omega1, omega2)``; the damping terms are

    gamma1 = 2 k1 w1 - 2 k2 w2 cos(dth)
    gamma2 = 2 k1 w1 cos(dth) - 2 (m1 + m2) / m2 k2 w2

with ``dth = theta1 - theta2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from .integrators import integrate_scan
from .topology import CliqueComplex, complete_graph


@dataclass(frozen=True)
class PendulumParams:
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 0.9
    g: float = 1.0
    k1: float = 0.1
    k2: float = 0.1
    theta0: tuple = (1.0, float(np.pi / 2), 0.0, 0.0)
    T: float = 50.0
    n_snapshots: int = 500
    substeps: int = 100  # RK4 steps per snapshot interval

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2) <= 0:
            raise ValueError("masses and lengths must be positive")
        if min(self.k1, self.k2) < 0:
            raise ValueError("damping constants must be non-negative")
        if len(self.theta0) != 4:
            raise ValueError("theta0 is (theta1, theta2, omega1, omega2)")
        object.__setattr__(self, "theta0", tuple(float(v) for v in self.theta0))

    @property
    def dt_snapshot(self) -> float:
        return self.T / self.n_snapshots

    def times(self) -> np.ndarray:
        return np.arange(self.n_snapshots) * self.dt_snapshot


def pendulum_rhs(prm: PendulumParams):
    m1, m2, l1, l2, g, k1, k2 = prm.m1, prm.m2, prm.l1, prm.l2, prm.g, prm.k1, prm.k2

    def rhs(s):
        t1, t2, w1, w2 = s[0], s[1], s[2], s[3]
        dth = t1 - t2
        sd, cd = jnp.sin(dth), jnp.cos(dth)
        gam1 = 2 * k1 * w1 - 2 * k2 * w2 * cd
        gam2 = 2 * k1 * w1 * cd - 2 * (m1 + m2) / m2 * k2 * w2
        den = m1 + m2 * sd ** 2
        a1 = (m2 * l1 * w1 ** 2 * jnp.sin(2 * dth) + 2 * m2 * l2 * w2 ** 2 * sd
              + 2 * g * m2 * jnp.cos(t2) * sd + 2 * g * m1 * jnp.sin(t1) + gam1) / (-2 * l1 * den)
        a2 = (m2 * l2 * w2 ** 2 * jnp.sin(2 * dth) + 2 * (m1 + m2) * l1 * w1 ** 2 * sd
              + 2 * g * (m1 + m2) * jnp.cos(t1) * sd + gam2) / (2 * l2 * den)
        return jnp.stack([w1, w2, a1, a2])

    return rhs


def mechanical_energy(states, prm: PendulumParams) -> np.ndarray:
    s = np.asarray(states)
    t1, t2, w1, w2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    kin = (0.5 * (prm.m1 + prm.m2) * prm.l1 ** 2 * w1 ** 2 + 0.5 * prm.m2 * prm.l2 ** 2 * w2 ** 2
           + prm.m2 * prm.l1 * prm.l2 * w1 * w2 * np.cos(t1 - t2))
    pot = -(prm.m1 + prm.m2) * prm.g * prm.l1 * np.cos(t1) - prm.m2 * prm.g * prm.l2 * np.cos(t2)
    return kin + pot


def to_cartesian(states, prm: PendulumParams) -> np.ndarray:
    """Columns ``x1, y1, x2, y2`` with the pivot at the origin."""
    s = np.asarray(states)
    t1, t2 = s[..., 0], s[..., 1]
    x1 = prm.l1 * np.sin(t1)
    y1 = -prm.l1 * np.cos(t1)
    x2 = x1 + prm.l2 * np.sin(t2)
    y2 = y1 - prm.l2 * np.cos(t2)
    return np.stack([x1, y1, x2, y2], axis=-1)


@dataclass(frozen=True)
class PendulumTrajectory:
    params: PendulumParams
    t: np.ndarray
    states: np.ndarray  # (n, 4) angles and angular velocities
    xy: np.ndarray  # (n, 4) x1, y1, x2, y2

    def energy(self) -> np.ndarray:
        return mechanical_energy(self.states, self.params)


def simulate_angles(prm: PendulumParams, substeps: int | None = None) -> np.ndarray:
    substeps = prm.substeps if substeps is None else substeps
    dt = prm.dt_snapshot / substeps
    run = jax.jit(lambda s0: integrate_scan(pendulum_rhs(prm), s0, dt, prm.n_snapshots, "rk4", substeps))
    return np.asarray(run(jnp.asarray(prm.theta0, dtype=jnp.float64)))


def simulate_pendulum(prm: PendulumParams = PendulumParams()) -> PendulumTrajectory:
    states = simulate_angles(prm)
    return PendulumTrajectory(prm, prm.times(), states, to_cartesian(states, prm))


@dataclass(frozen=True)
class PendulumGraphData:
    complex: CliqueComplex
    t: np.ndarray
    q: np.ndarray  # (n, 3, 2) node positions, node 0 is the pivot
    p: np.ndarray  # (n, 3, 2) edge features d0 q
    extra: dict = field(default_factory=dict)


def build_pendulum_graph(xy, t=None) -> PendulumGraphData:
    """Fully connected 3-node graph: pivot, mass 1, mass 2."""
    xy = np.asarray(xy)
    n = len(xy)
    cx = complete_graph(3)
    q = np.zeros((n, 3, 2))
    q[:, 1] = xy[:, 0:2]
    q[:, 2] = xy[:, 2:4]
    p = np.einsum("ev,tvc->tec", cx.d0.toarray().astype(float), q)
    t = np.arange(n, dtype=float) if t is None else np.asarray(t)
    return PendulumGraphData(cx, t, q, p)
