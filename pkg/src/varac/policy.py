"""Energy-based softmax policies and the KL-penalised improvement step."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import NonFiniteEnergy, SupportViolation
from .mdp import StationaryPolicy, TabularMdp
from .neural import DeepNet, forward_batch, embedding_matrix

Energy = Union[np.ndarray, DeepNet]


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteEnergy("energy contains NaN or infinity")
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def anchored_table(net: DeepNet, mdp: TabularMdp) -> np.ndarray:
    """``f_theta(s, a) - f_theta0(s, a)`` over all pairs.

    Subtracting the network's own output at its initialization makes the
    energy exactly zero before any training step.
    """
    X = embedding_matrix(mdp)
    shape = (mdp.n_states, mdp.n_actions)
    at_init = forward_batch(DeepNet(net.anchor, net.signs, net.anchor, net.radius), X)
    return (forward_batch(net, X) - at_init).reshape(shape)


@dataclass(frozen=True, eq=False)
class EnergyPolicy:
    """pi(a|s) proportional to exp(f(s, a) / temperature).

    ``energy`` is either a table ``[S, A]`` (exact/tabular mode) or a DeepNet
    whose anchored output is used as the energy.
    """

    energy: Energy
    temperature: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if isinstance(self.energy, np.ndarray):
            e = np.array(self.energy, dtype=np.float64)
            e.setflags(write=False)
            object.__setattr__(self, "energy", e)

    def energy_table(self, mdp: TabularMdp) -> np.ndarray:
        if isinstance(self.energy, DeepNet):
            if "table" not in self._cache:
                self._cache["table"] = anchored_table(self.energy, mdp)
            return self._cache["table"]
        if self.energy.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError(f"energy table shape {self.energy.shape} does not match MDP")
        return self.energy

    def stationary(self, mdp: TabularMdp) -> StationaryPolicy:
        return StationaryPolicy(softmax(self.energy_table(mdp) / self.temperature))

    @classmethod
    def uniform(cls, mdp: TabularMdp) -> "EnergyPolicy":
        return cls(np.zeros((mdp.n_states, mdp.n_actions)), 1.0)


def policy_probs(pol: EnergyPolicy, mdp: TabularMdp, s: int) -> np.ndarray:
    return softmax(pol.energy_table(mdp)[s] / pol.temperature)


def kl(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    support = p > 0
    if np.any(q[support] <= 0):
        raise SupportViolation("q vanishes where p is positive")
    return float(max(0.0, np.sum(p[support] * np.log(p[support] / q[support]))))


def expected_kl(p: StationaryPolicy, q: StationaryPolicy, weights) -> float:
    """State-weighted KL(p(.|s) || q(.|s))."""
    return float(sum(w * kl(pr, qr) for w, pr, qr in zip(weights, p.probs, q.probs) if w > 0))


def advantage(q_est, w_est, lambda_bar: float, y_bar: float):
    """The linearised Lagrangian payoff (1 + 2 lambda y) Q - lambda W."""
    return (1.0 + 2.0 * lambda_bar * y_bar) * np.asarray(q_est) - lambda_bar * np.asarray(w_est)


def regression_target(q_est, w_est, lambda_bar, y_bar, beta_k, tau_k, tau_k1, f_prev):
    """Energy the next actor should fit; works on scalars or whole tables."""
    if not (beta_k > 0 and tau_k > 0 and tau_k1 > 0):
        raise ValueError("beta_k, tau_k and tau_k1 must be positive")
    return tau_k1 * (advantage(q_est, w_est, lambda_bar, y_bar) / beta_k
                     + np.asarray(f_prev) / tau_k)


def closed_form_improved_policy(q_est, w_est, lambda_bar, y_bar, beta_k, tau_k, f_prev) -> np.ndarray:
    """Maximiser of <A, pi> - beta_k KL(pi || pi_prev) for energy-based pi_prev.

    Accepts a single state's action vectors or full ``[S, A]`` tables;
    normalisation is along the last axis.
    """
    if not (beta_k > 0 and tau_k > 0):
        raise ValueError("beta_k and tau_k must be positive")
    logits = advantage(q_est, w_est, lambda_bar, y_bar) / beta_k + np.asarray(f_prev) / tau_k
    return softmax(logits)


def improvement_objective(pi_row, adv_row, beta_k, prev_row) -> float:
    """Per-state KL-penalised payoff maximised by the closed-form update."""
    return float(np.dot(adv_row, pi_row) - beta_k * kl(pi_row, prev_row))


def stationarity_norm(pi_row, adv_row, beta_k, prev_row) -> float:
    """Norm of the objective's gradient projected onto the simplex tangent space.

    Zero at an interior maximiser; only meaningful when ``pi_row`` and
    ``prev_row`` are strictly positive.
    """
    pi_row = np.asarray(pi_row, dtype=np.float64)
    grad = np.asarray(adv_row) - beta_k * (np.log(pi_row / np.asarray(prev_row)) + 1.0)
    return float(np.linalg.norm(grad - grad.mean()))
