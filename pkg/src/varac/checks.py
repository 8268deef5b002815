"""Built-in identity and invariant suite behind ``varac check``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import EnvSpec, generate
from .learner import lagrangian
from .mdp import StationaryPolicy, chain_stationary, exact_evaluation, induced_chain, poisson_residual
from .neural import _forward_raw, gradient, init_net, project
from .oracle import truncated_value_oracle, verify_performance_difference
from .policy import (advantage, closed_form_improved_policy, improvement_objective, softmax,
                     stationarity_norm)
from .rng import make_rng

CHECK_SEED = 20240


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def random_policy(rng, n_s: int, n_a: int) -> StationaryPolicy:
    return StationaryPolicy.normalized(rng.dirichlet(np.ones(n_a), size=n_s))


def _instances(n: int, n_states: int = 4, n_actions: int = 3):
    return [generate(EnvSpec("random", n_states, n_actions, seed=CHECK_SEED + i)) for i in range(n)]


def check_performance_difference(rng) -> float:
    worst = 0.0
    for mdp in _instances(3):
        for _ in range(20):
            lam, y = rng.uniform(0, 5), rng.uniform(-1, 1)
            p1 = random_policy(rng, mdp.n_states, mdp.n_actions)
            p2 = random_policy(rng, mdp.n_states, mdp.n_actions)
            worst = max(worst, verify_performance_difference(mdp, lam, y, p1, p2))
    return worst


def check_fenchel(rng) -> float:
    """max_y L(lam, pi, y) is attained at y = rho and equals rho - lam (Var - alpha)."""
    worst = 0.0
    for mdp in _instances(2):
        for _ in range(20):
            ev = exact_evaluation(mdp, random_policy(rng, mdp.n_states, mdp.n_actions))
            lam, alpha = rng.uniform(0, 5), rng.uniform(0, 1)
            at_rho = lagrangian(lam, ev.rho, ev.eta, ev.rho, alpha)
            worst = max(worst, abs(at_rho - (ev.rho - lam * (ev.variance - alpha))))
            for y in rng.uniform(-1, 1, size=10):
                worst = max(worst, lagrangian(lam, ev.rho, ev.eta, y, alpha) - at_rho)
    return worst


def check_improvement_optimality(rng, n_perturb: int = 200) -> float:
    """Largest objective gain of a random simplex point over the closed-form policy."""
    worst = 0.0
    for _ in range(5):
        q, w, f = rng.normal(size=(3, 4))
        lam, y, beta, tau = rng.uniform(0, 3), rng.uniform(-1, 1), rng.uniform(0.5, 5), rng.uniform(0.5, 5)
        pi = closed_form_improved_policy(q, w, lam, y, beta, tau, f)
        adv, prev = advantage(q, w, lam, y), softmax(f / tau)
        best = improvement_objective(pi, adv, beta, prev)
        for cand in rng.dirichlet(np.ones(4), size=n_perturb):
            worst = max(worst, improvement_objective(cand, adv, beta, prev) - best)
    return worst


def check_improvement_stationarity(rng) -> float:
    worst = 0.0
    for _ in range(20):
        q, w, f = rng.normal(size=(3, 3))
        lam, y, beta, tau = rng.uniform(0, 3), rng.uniform(-1, 1), rng.uniform(0.5, 5), rng.uniform(0.5, 5)
        pi = closed_form_improved_policy(q, w, lam, y, beta, tau, f)
        worst = max(worst, stationarity_norm(pi, advantage(q, w, lam, y), beta, softmax(f / tau)))
    return worst


def check_poisson(rng) -> float:
    worst = 0.0
    for mdp in _instances(3):
        for _ in range(5):
            pi = random_policy(rng, mdp.n_states, mdp.n_actions)
            worst = max(worst, poisson_residual(mdp, pi, exact_evaluation(mdp, pi)))
    return worst


def check_stationary(rng) -> float:
    worst = 0.0
    for mdp in _instances(3):
        P_pi = induced_chain(mdp, random_policy(rng, mdp.n_states, mdp.n_actions))
        nu = chain_stationary(P_pi)
        worst = max(worst, float(np.max(np.abs(nu @ P_pi - nu))), abs(nu.sum() - 1.0))
    return worst


def check_truncated_sums(rng) -> float:
    mdp = _instances(1)[0]
    pi = random_policy(rng, mdp.n_states, mdp.n_actions)
    ev = exact_evaluation(mdp, pi)
    worst = 0.0
    for kind, exact in (("reward", ev.q), ("squared-reward", ev.w)):
        approx = truncated_value_oracle(mdp, pi, kind, T_trunc=2000)
        worst = max(worst, float(np.max(np.abs(approx - exact))))
    return worst


def finite_difference_error(net, x, rng, n_coords: int = 20, eps: float = 1e-6) -> float:
    """Largest relative error of analytic vs central-difference gradients."""
    grads = gradient(net, x)
    layers = [w.copy() for w in net.layers]
    worst = 0.0
    for _ in range(n_coords):
        h = int(rng.integers(len(layers)))
        i, j = (int(rng.integers(n)) for n in layers[h].shape)
        old = layers[h][i, j]
        layers[h][i, j] = old + eps
        up = _forward_raw(layers, net.signs, x)
        layers[h][i, j] = old - eps
        down = _forward_raw(layers, net.signs, x)
        layers[h][i, j] = old
        fd = (up - down) / (2 * eps)
        g = grads[h][i, j]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
    return worst


def check_gradient(rng) -> float:
    worst = 0.0
    for H in (1, 2, 3):
        for m in (8, 64):
            net = init_net(6, m, H, 1.0, make_rng(CHECK_SEED, H, m))
            x = rng.normal(size=6)
            worst = max(worst, finite_difference_error(net, x / np.linalg.norm(x), rng))
    return worst


def check_projection(rng) -> float:
    """Projected nets lie in the ball, projection is idempotent and leaves interior points alone."""
    worst = 0.0
    for R in (0.5, 2.0):
        net = init_net(5, 16, 2, R, make_rng(CHECK_SEED, 7))
        far = net.with_layers([w + rng.normal(scale=3.0, size=w.shape) for w in net.layers])
        p = project(far)
        worst = max(worst, float(np.max(p.ball_distances() - R)))
        pp = project(p)
        worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in zip(p.layers, pp.layers)))
        near = net.with_layers([w + 1e-3 * R * rng.normal(size=w.shape) / np.sqrt(w.size) for w in net.layers])
        pn = project(near)
        worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in zip(near.layers, pn.layers)))
    return max(worst, 0.0)


CHECKS = (
    ("performance-difference", check_performance_difference, 1e-8),
    ("fenchel-y-maximiser", check_fenchel, 1e-12),
    ("improvement-optimality", check_improvement_optimality, 1e-9),
    ("improvement-stationarity", check_improvement_stationarity, 1e-8),
    ("poisson-residual", check_poisson, 1e-10),
    ("stationary-distribution", check_stationary, 1e-12),
    ("truncated-sum-values", check_truncated_sums, 1e-6),
    ("gradient-finite-difference", check_gradient, 1e-4),
    ("ball-projection", check_projection, 1e-12),
)


def run_checks(tolerance_scale: float = 1.0) -> list[CheckResult]:
    """Run every property on its own seeded stream; tolerances are multiplied by the scale."""
    results = []
    for idx, (name, fn, tol) in enumerate(CHECKS):
        value = float(fn(make_rng(CHECK_SEED, idx)))
        results.append(CheckResult(name, value, tol * tolerance_scale))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'property':<{width}}  {'value':>10}  {'tolerance':>10}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.value:10.3e}  {r.tolerance:10.3e}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
