"""Outer loop of the variance-constrained actor-critic and its metrics stream."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .errors import InvariantViolation
from .io import atomic_write_text
from .learner import (REWARD, SQUARED, LearnerConfig, SaddleIterate, actor_sgd, bellman_mse,
                      critic_table, debug_invariants, lagrangian, td_policy_evaluation,
                      update_lambda, update_y)
from .mdp import TabularMdp, estimate_rho_eta, exact_evaluation, sample_trajectory
from .neural import init_net
from .oracle import SaddleSolution
from .policy import EnergyPolicy, expected_kl, regression_target
from .rng import STREAM_NETS, STREAM_SAMPLE, make_rng

CSV_HEADER = ("k,lambda,y,rho_hat,eta_hat,var_hat,lagrangian,exact_rho,exact_eta,exact_var,"
              "bellman_q_mse,bellman_w_mse,gap,kl_to_opt,wall_time_ms").split(",")


def schedules(k: int, K: int, beta: float, gamma: float) -> tuple[float, float, float]:
    """Temperature tau_{k+1}, KL penalty beta_k and dual step gamma_k."""
    if not 0 <= k < K:
        raise ValueError(f"iteration {k} outside [0, {K})")
    if not (beta > 0 and gamma > 0):
        raise ValueError("beta and gamma must be positive")
    root = math.sqrt(K)
    return beta * root / (k + 1), beta * root, gamma * root


@dataclass
class IterationMetrics:
    k: int
    lambda_bar: float
    y_bar: float
    rho_hat: float
    eta_hat: float
    var_hat: float
    lagrangian_value: float
    exact_rho: Optional[float] = None
    exact_eta: Optional[float] = None
    exact_var: Optional[float] = None
    bellman_q_mse: Optional[float] = None
    bellman_w_mse: Optional[float] = None
    duality_gap_vs_oracle: Optional[float] = None
    kl_to_optimal: Optional[float] = None
    wall_time_ms: float = 0.0

    @property
    def c_k(self) -> Optional[float]:
        return None if self.exact_rho is None else abs(self.exact_rho - self.rho_hat)

    @property
    def d_k(self) -> Optional[float]:
        return None if self.exact_eta is None else abs(self.exact_eta - self.eta_hat)

    def to_row(self) -> list[str]:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def from_row(cls, row: dict) -> "IterationMetrics":
        vals = [row[h] for h in CSV_HEADER]
        kwargs = {}
        for f, v in zip(fields(cls), vals):
            if v == "":
                kwargs[f.name] = None
            elif f.name == "k":
                kwargs[f.name] = int(v)
            else:
                kwargs[f.name] = float(v)
        return cls(**kwargs)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def metrics_csv(metrics: list[IterationMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m in metrics:
        w.writerow(m.to_row())
    return buf.getvalue()


def write_metrics_csv(path, metrics: list[IterationMetrics]) -> None:
    atomic_write_text(path, metrics_csv(metrics))


def read_metrics_csv(path) -> list[IterationMetrics]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected metrics header {reader.fieldnames}")
        return [IterationMetrics.from_row(r) for r in reader]


def _initial_models(mdp: TabularMdp, cfg: LearnerConfig):
    d = mdp.embed_dim
    shape = (mdp.n_states, mdp.n_actions)
    if cfg.actor_mode == "dnn":
        a = cfg.actor_net
        actor_energy = init_net(d, a.m, a.H, a.R, make_rng(cfg.seed, STREAM_NETS, 0))
    else:
        actor_energy = np.zeros(shape)
    critics = []
    for i, spec in ((1, cfg.q_net), (2, cfg.w_net)):
        if cfg.critic_mode == "dnn":
            critics.append(init_net(d, spec.m, spec.H, spec.R, make_rng(cfg.seed, STREAM_NETS, i)))
        elif cfg.critic_mode == "tabular":
            critics.append(np.zeros(shape))
        else:
            critics.append(None)
    return actor_energy, critics[0], critics[1]


def varac_run(mdp: TabularMdp, cfg: LearnerConfig, oracle: Optional[SaddleSolution] = None,
              progress=None) -> tuple[SaddleIterate, list[IterationMetrics]]:
    """Run K outer iterations; one metrics row per iteration.

    Row k describes the iterate (lambda_k, pi_k, y_k) entering iteration k,
    evaluated exactly on the tabular model, plus the Bellman residuals of
    the critics fitted for pi_k.
    """
    check = debug_invariants()
    M = mdp.reward_bound
    actor_energy, q0, w0 = _initial_models(mdp, cfg)
    actor = EnergyPolicy(actor_energy, 1.0)
    critic_q, critic_w = q0, w0
    opt_ev = exact_evaluation(mdp, oracle.pi_star) if oracle is not None else None

    def rollout(k, policy):
        pi = policy.stationary(mdp)
        traj = sample_trajectory(mdp, pi, cfg.T, make_rng(cfg.seed, STREAM_SAMPLE, k),
                                 burn_in=cfg.burn_in)
        return traj, *estimate_rho_eta(traj)

    traj, rho_bar, eta_bar = rollout(0, actor)
    y_bar = update_y(rho_bar)
    lambda_bar = 0.0
    tau_k = 1.0
    metrics: list[IterationMetrics] = []
    beta_k = tau_k1 = gamma_k = math.nan

    for k in range(cfg.K):
        start = time.perf_counter()
        tau_k1, beta_k, gamma_k = schedules(k, cfg.K, cfg.beta, cfg.gamma)
        pi_k = actor.stationary(mdp)
        ev = exact_evaluation(mdp, pi_k)

        if cfg.critic_mode == "exact":
            q_tab, w_tab = ev.q, ev.w
        else:
            critic_q = td_policy_evaluation(REWARD, mdp, traj, rho_bar,
                                            critic_q if cfg.warm_start else q0, cfg.td_step, check)
            critic_w = td_policy_evaluation(SQUARED, mdp, traj, eta_bar,
                                            critic_w if cfg.warm_start else w0, cfg.td_step, check)
            q_tab, w_tab = critic_table(critic_q, mdp), critic_table(critic_w, mdp)

        lambda_next = update_lambda(lambda_bar, gamma_k, cfg.alpha, y_bar, rho_bar, eta_bar, cfg.N)

        f_prev = actor.energy_table(mdp)
        target = regression_target(q_tab, w_tab, lambda_bar, y_bar, beta_k, tau_k, tau_k1, f_prev)
        if cfg.actor_mode == "exact":
            new_energy = target
        else:
            init = actor.energy if cfg.warm_start else actor_energy
            new_energy = actor_sgd(mdp, traj, target, init, cfg.sgd_step, check=check)

        l_exact = lagrangian(lambda_bar, ev.rho, ev.eta, y_bar, cfg.alpha)
        row = IterationMetrics(
            k=k, lambda_bar=lambda_bar, y_bar=y_bar, rho_hat=rho_bar, eta_hat=eta_bar,
            var_hat=eta_bar - rho_bar ** 2, lagrangian_value=l_exact,
            exact_rho=ev.rho, exact_eta=ev.eta, exact_var=ev.variance,
            bellman_q_mse=bellman_mse(mdp, pi_k, ev, q_tab, REWARD),
            bellman_w_mse=bellman_mse(mdp, pi_k, ev, w_tab, SQUARED),
        )
        if oracle is not None:
            row.duality_gap_vs_oracle = abs(oracle.value - l_exact)
            row.kl_to_optimal = expected_kl(oracle.pi_star, pi_k, opt_ev.nu)

        actor = EnergyPolicy(new_energy, tau_k1)
        traj, rho_bar, eta_bar = rollout(k + 1, actor)
        y_bar = update_y(rho_bar)
        lambda_bar = lambda_next
        tau_k = tau_k1
        if check:
            _check_iterate(row, lambda_bar, y_bar, cfg.N, M)
        row.wall_time_ms = (time.perf_counter() - start) * 1e3
        metrics.append(row)
        if progress is not None:
            progress(row)

    final = SaddleIterate(k=cfg.K, lambda_bar=lambda_bar, y_bar=y_bar, actor=actor,
                          critic_q=critic_q, critic_w=critic_w, beta_k=beta_k, tau_k1=tau_k1,
                          gamma_k=gamma_k, rho_bar=rho_bar, eta_bar=eta_bar)
    return final, metrics


def _check_iterate(row: IterationMetrics, lambda_bar: float, y_bar: float, N: float, M: float):
    vals = [v for v in row.to_row() if v != ""]
    if not all(math.isfinite(float(v)) for v in vals):
        raise InvariantViolation(f"non-finite metric at iteration {row.k}")
    if not 0.0 <= lambda_bar <= N:
        raise InvariantViolation(f"lambda {lambda_bar} left [0, {N}]")
    if abs(y_bar) > M * (1 + 1e-12):
        raise InvariantViolation(f"|y| = {abs(y_bar)} exceeds reward bound {M}")
    if row.var_hat < -2 * M ** 2 * np.finfo(float).eps:
        raise InvariantViolation(f"negative variance estimate {row.var_hat}")


def run_summary(mdp: TabularMdp, cfg: LearnerConfig, final: SaddleIterate,
                metrics: list[IterationMetrics], oracle: Optional[SaddleSolution] = None,
                tolerance: float = 0.05) -> dict:
    ev = exact_evaluation(mdp, final.actor.stationary(mdp))
    summary = {
        "config": asdict(cfg),
        "seed": cfg.seed,
        "iterations": len(metrics),
        "final": {
            "lambda": final.lambda_bar,
            "y": final.y_bar,
            "rho_hat": final.rho_bar,
            "eta_hat": final.eta_bar,
            "exact_rho": ev.rho,
            "exact_eta": ev.eta,
            "exact_var": ev.variance,
            "policy": final.actor.stationary(mdp).probs.tolist(),
        },
        "acceptance": {
            "variance_within_budget": ev.variance <= cfg.alpha + tolerance,
            "lambda_in_range": 0.0 <= final.lambda_bar <= cfg.N,
        },
    }
    if oracle is not None:
        gaps = [m.duality_gap_vs_oracle for m in metrics]
        summary["oracle"] = oracle.to_dict()
        summary["final"]["mean_gap"] = float(np.mean(gaps)) if gaps else None
        summary["acceptance"]["rho_near_optimum"] = ev.rho >= exact_evaluation(mdp, oracle.pi_star).rho - tolerance
    return summary


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
