"""Inner loops of the actor-critic: TD(0) critics, projected-SGD actor, dual updates."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, InvariantViolation
from .mdp import ExactEvaluation, StationaryPolicy, TabularMdp, Trajectory
from .neural import DeepNet, _forward_grad_raw, _forward_raw, _project_layers, embedding_matrix, net_table
from .policy import EnergyPolicy, regression_target, anchored_table

Critic = Union[np.ndarray, DeepNet]

MODES = ("exact", "tabular", "dnn")
REWARD, SQUARED = "reward", "squared-reward"


def debug_invariants() -> bool:
    return os.environ.get("VARAC_DEBUG_INVARIANTS", "") not in ("", "0")


@dataclass(frozen=True)
class NetSpec:
    m: int = 64
    H: int = 2
    R: float = 5.0

    def validate(self, name: str) -> None:
        if self.m < 1:
            raise ConfigError(f"{name}.m must be a positive integer")
        if self.H < 1:
            raise ConfigError(f"{name}.H must be a positive integer")
        if not self.R > 0:
            raise ConfigError(f"{name}.R must be positive")


@dataclass(frozen=True)
class LearnerConfig:
    """Hyper-parameters of one VARAC run.

    ``zeta`` and ``delta`` default to T^{-1/2}. ``actor_mode`` and
    ``critic_mode`` pick the function class: ``exact`` (closed-form actor /
    Poisson-solve critics), ``tabular`` (SGD/TD on tables) or ``dnn``.
    """

    K: int = 100
    T: int = 1000
    beta: float = 1.0
    gamma: float = 1.0
    N: float = 5.0
    alpha: float = 0.1
    zeta: Optional[float] = None
    delta: Optional[float] = None
    actor_mode: str = "dnn"
    critic_mode: str = "dnn"
    actor_net: NetSpec = field(default_factory=NetSpec)
    q_net: NetSpec = field(default_factory=NetSpec)
    w_net: NetSpec = field(default_factory=NetSpec)
    burn_in: int = 1000
    warm_start: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("K", "T"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("beta", "gamma", "N"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha!r}")
        for name in ("zeta", "delta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name in ("actor_mode", "critic_mode"):
            if getattr(self, name) not in MODES:
                raise ConfigError(f"{name} must be one of {MODES}, got {getattr(self, name)!r}")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        self.actor_net.validate("actor_net")
        self.q_net.validate("q_net")
        self.w_net.validate("w_net")

    @property
    def sgd_step(self) -> float:
        return self.zeta if self.zeta is not None else self.T ** -0.5

    @property
    def td_step(self) -> float:
        return self.delta if self.delta is not None else self.T ** -0.5


@dataclass(frozen=True, eq=False)
class SaddleIterate:
    k: int
    lambda_bar: float
    y_bar: float
    actor: EnergyPolicy
    critic_q: Optional[Critic]
    critic_w: Optional[Critic]
    beta_k: float
    tau_k1: float
    gamma_k: float
    rho_bar: float
    eta_bar: float


def critic_table(critic: Critic, mdp: TabularMdp) -> np.ndarray:
    if isinstance(critic, DeepNet):
        return net_table(critic, mdp)
    return np.asarray(critic, dtype=np.float64)


def _check_ball(layers, anchor, radius):
    for h, (w, w0) in enumerate(zip(layers, anchor)):
        dist = float(np.linalg.norm(w - w0))
        if dist > radius * (1 + 1e-12) + 1e-12:
            raise InvariantViolation(f"layer {h} left its projection ball: {dist} > {radius}")


def td_policy_evaluation(kind: str, mdp: TabularMdp, traj: Trajectory, z_bar: float,
                         critic: Critic, delta: float, check: Optional[bool] = None) -> Critic:
    """Semi-gradient TD(0) for the differential value of ``r`` or ``r**2``.

    Transitions are consumed in trajectory order. The critic may be a table
    ``[S, A]`` (no projection) or a DeepNet (projected onto its ball after
    every step). Returns the average of the iterates 0..T-1.
    """
    if kind not in (REWARD, SQUARED):
        raise ValueError(f"unknown value kind {kind!r}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    check = debug_invariants() if check is None else check
    n_a = mdp.n_actions
    g = traj.rewards if kind == REWARD else traj.rewards ** 2
    g = g.tolist()
    sa = (traj.states * n_a + traj.actions).tolist()
    sa_next = (traj.next_states * n_a + traj.next_actions).tolist()
    T = len(traj)

    if not isinstance(critic, DeepNet):
        q = np.asarray(critic, dtype=np.float64).ravel().tolist()
        acc = [0.0] * len(q)
        last = [0] * len(q)
        for t in range(T):
            i = sa[t]
            qi = q[i]
            err = qi - g[t] + z_bar - q[sa_next[t]]
            acc[i] += qi * (t + 1 - last[i])
            last[i] = t + 1
            q[i] = qi - delta * err
        avg = [(a + v * (T - l)) / T for a, v, l in zip(acc, q, last)]
        return np.array(avg).reshape(mdp.n_states, n_a)

    layers = [w.copy() for w in critic.layers]
    anchor, signs, radius = critic.anchor, critic.signs, critic.radius
    X = embedding_matrix(mdp)
    acc = [np.zeros_like(w) for w in layers]
    for t in range(T):
        for a_h, w in zip(acc, layers):
            a_h += w
        val, grads = _forward_grad_raw(layers, signs, X[sa[t]])
        err = val - g[t] + z_bar - _forward_raw(layers, signs, X[sa_next[t]])
        step = -delta * err
        for w, gr in zip(layers, grads):
            w += step * gr
        _project_layers(layers, anchor, radius)
        if check:
            _check_ball(layers, anchor, radius)
    return critic.with_layers([a / T for a in acc])


def actor_sgd(mdp: TabularMdp, traj: Trajectory, target: np.ndarray, actor: Union[np.ndarray, DeepNet],
              zeta: float, losses: Optional[list] = None, check: Optional[bool] = None):
    """Projected SGD on E[(f(s, a0) - target(s, a0))^2] along the trajectory.

    ``target`` is the ``[S, A]`` regression target. For a DeepNet the energy
    is its anchored output, so the anchor table is subtracted before fitting.
    Returns the path-averaged parameters (table or DeepNet). Per-step squared
    residuals are appended to ``losses`` when given.
    """
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    check = debug_invariants() if check is None else check
    n_a = mdp.n_actions
    idx = (traj.states * n_a + traj.actions0).tolist()
    tgt = np.asarray(target, dtype=np.float64).ravel().tolist()
    T = len(traj)

    if not isinstance(actor, DeepNet):
        f = np.asarray(actor, dtype=np.float64).ravel().tolist()
        acc = [0.0] * len(f)
        last = [0] * len(f)
        for t in range(T):
            i = idx[t]
            fi = f[i]
            err = fi - tgt[i]
            if losses is not None:
                losses.append(err * err)
            acc[i] += fi * (t + 1 - last[i])
            last[i] = t + 1
            f[i] = fi - zeta * err
        avg = [(a + v * (T - l)) / T for a, v, l in zip(acc, f, last)]
        return np.array(avg).reshape(mdp.n_states, n_a)

    layers = [w.copy() for w in actor.layers]
    anchor, signs, radius = actor.anchor, actor.signs, actor.radius
    f0 = anchored_offset(actor, mdp).ravel().tolist()
    X = embedding_matrix(mdp)
    acc = [np.zeros_like(w) for w in layers]
    for t in range(T):
        for a_h, w in zip(acc, layers):
            a_h += w
        i = idx[t]
        out, grads = _forward_grad_raw(layers, signs, X[i])
        err = out - f0[i] - tgt[i]
        if losses is not None:
            losses.append(err * err)
        step = -zeta * err
        for w, gr in zip(layers, grads):
            w += step * gr
        _project_layers(layers, anchor, radius)
        if check:
            _check_ball(layers, anchor, radius)
    return actor.with_layers([a / T for a in acc])


def anchored_offset(net: DeepNet, mdp: TabularMdp) -> np.ndarray:
    """Output of ``net`` at its anchor, i.e. the constant removed from the energy."""
    return net_table(DeepNet(net.anchor, net.signs, net.anchor, net.radius), mdp)


def actor_target(it: SaddleIterate, mdp: TabularMdp, q_table, w_table, tau_k: float) -> np.ndarray:
    return regression_target(q_table, w_table, it.lambda_bar, it.y_bar, it.beta_k,
                             tau_k, it.tau_k1, it.actor.energy_table(mdp))


def update_lambda(lambda_bar: float, gamma_k: float, alpha: float, y_bar: float,
                  rho_bar: float, eta_bar: float, N: float) -> float:
    """Projected descent on the multiplier; the slope is alpha + 2 y rho - eta - y^2."""
    if not (gamma_k > 0 and N > 0):
        raise ValueError("gamma_k and N must be positive")
    slope = alpha + 2.0 * y_bar * rho_bar - eta_bar - y_bar ** 2
    return float(min(N, max(0.0, lambda_bar - slope / (2.0 * gamma_k))))


def update_y(rho_bar: float) -> float:
    return float(rho_bar)


def lagrangian(lam: float, rho: float, eta: float, y: float, alpha: float) -> float:
    return (1.0 + 2.0 * lam * y) * rho - lam * eta - lam * y ** 2 + lam * alpha


def bellman_mse(mdp: TabularMdp, pi: StationaryPolicy, ev: ExactEvaluation,
                table: np.ndarray, kind: str = REWARD) -> float:
    """E_sigma[(V_hat - T^pi V_hat)^2] with the exact gain and dynamics."""
    g = mdp.reward if kind == REWARD else mdp.reward ** 2
    z = ev.rho if kind == REWARD else ev.eta
    next_v = mdp.transition @ np.sum(pi.probs * table, axis=1)
    resid = table - (g - z + next_v)
    return float(np.sum(ev.sigma * resid ** 2))


def centered_mse(table: np.ndarray, exact: np.ndarray, sigma: np.ndarray) -> float:
    """Mean squared error over all pairs after removing the sigma-mean of ``table``.

    TD(0) in the average-reward setting only identifies values up to an
    additive constant; the exact tables are normalised to sigma-mean zero.
    """
    centered = table - np.sum(sigma * table)
    return float(np.mean((centered - exact) ** 2))
