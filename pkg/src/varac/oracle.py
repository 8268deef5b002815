"""Ground truth for small MDPs: saddle-point search, truncated-sum values, exact identities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivisionBySupportZero
from .learner import lagrangian
from .mdp import (StationaryPolicy, TabularMdp, chain_stationary, exact_evaluation,
                  induced_chain, _poisson)


@dataclass(frozen=True, eq=False)
class SaddleSolution:
    lambda_star: float
    y_star: float
    pi_star: StationaryPolicy
    value: float
    certificate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "y_star": self.y_star,
            "pi_star": self.pi_star.probs.tolist(),
            "value": self.value,
            "certificate": dict(self.certificate),
        }


@dataclass(frozen=True)
class Diagnostics:
    phi_star: float
    psi_star: float
    perf_diff_residual: float
    c_k: float = math.nan
    d_k: float = math.nan


def modified_reward(mdp: TabularMdp, lam: float, y: float) -> np.ndarray:
    r = mdp.reward
    return (1.0 + 2.0 * lam * y) * r - lam * r ** 2


def _gain_bias(mdp: TabularMdp, actions: np.ndarray, reward: np.ndarray):
    n_s = mdp.n_states
    rows = np.arange(n_s)
    P_pi = mdp.transition[rows, actions]
    nu = chain_stationary(P_pi)
    r_pi = reward[rows, actions]
    gain = float(nu @ r_pi)
    return gain, _poisson(P_pi, nu, r_pi, gain)


def howard(mdp: TabularMdp, reward: np.ndarray, start=None, tol: float = 1e-12,
           max_iter: int = 10_000) -> np.ndarray:
    """Average-reward policy iteration for a unichain model; returns actions.

    The incumbent action is kept unless another is strictly better by more
    than ``tol``; switches go to the lowest-index maximiser.
    """
    n_s = mdp.n_states
    pol = np.zeros(n_s, dtype=int) if start is None else np.array(start, dtype=int)
    scale = tol * max(1.0, float(np.max(np.abs(reward))))
    for _ in range(max_iter):
        _, h = _gain_bias(mdp, pol, reward)
        vals = reward + mdp.transition @ h
        best = vals.max(axis=1)
        new = pol.copy()
        for s in range(n_s):
            if vals[s, pol[s]] < best[s] - scale:
                new[s] = int(np.flatnonzero(vals[s] >= best[s] - scale)[0])
        if np.array_equal(new, pol):
            return pol
        pol = new
    raise RuntimeError("policy iteration did not converge")


def inner_max_policy(mdp: TabularMdp, lam: float, y: float, alpha: float = 0.0,
                     start=None) -> tuple[StationaryPolicy, float]:
    """Deterministic maximiser of L(lam, ., y) and the Lagrangian value there."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    actions = howard(mdp, modified_reward(mdp, lam, y), start=start)
    pi = StationaryPolicy.deterministic(actions, mdp.n_actions)
    ev = exact_evaluation(mdp, pi)
    return pi, lagrangian(lam, ev.rho, ev.eta, y, alpha)


def _grid(lo: float, hi: float, res: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / res + 1e-9))
    pts = lo + res * np.arange(n + 1)
    if hi - pts[-1] > 1e-12:
        pts = np.append(pts, hi)
    return pts


def saddle_search(mdp: TabularMdp, alpha: float, N: float, lambda_res: float = 0.01,
                  y_res: float = 0.01) -> SaddleSolution:
    """Grid-certified solution of min_lambda max_{pi, y} L(lambda, pi, y).

    The dual function g(lambda) = max over the y-grid of the exact inner
    maximum is convex (a maximum of affine functions of lambda), so its
    minimiser over the lambda-grid is bracketed by ternary search. Because
    the primal problem can be non-convex, pi* is then chosen among the
    inner maximisers at lambda* (mixing a feasible and an infeasible one
    when needed) to satisfy the variance budget; the remaining duality gap
    is reported in the certificate.
    """
    if not (lambda_res > 0 and y_res > 0):
        raise ValueError("grid resolutions must be positive")
    if N <= 0:
        raise ValueError("N must be positive")
    M = mdp.reward_bound
    lam_grid = _grid(0.0, N, lambda_res)
    y_grid = _grid(-M, M, y_res) if M > 0 else np.array([0.0])
    memo: dict[int, tuple] = {}

    def dual(i: int):
        if i not in memo:
            lam = float(lam_grid[i])
            best = None
            seen = {}
            start = None
            for y in y_grid:
                pi, val = inner_max_policy(mdp, lam, float(y), alpha, start=start)
                start = np.argmax(pi.probs, axis=1)
                seen.setdefault(tuple(start), pi)
                if best is None or val > best[0]:
                    best = (val, pi, float(y))
            memo[i] = (best[0], best[1], best[2], list(seen.values()))
        return memo[i]

    lo, hi = 0, len(lam_grid) - 1
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        g1, g2 = dual(m1)[0], dual(m2)[0]
        if g1 < g2:
            hi = m2 - 1
        elif g1 > g2:
            lo = m1 + 1
        else:
            lo, hi = m1, m2
    i_star = min(range(lo, hi + 1), key=lambda i: (dual(i)[0], i))
    g_star, pi_best, y_best, candidates = dual(i_star)
    lam_star = float(lam_grid[i_star])
    neighbours = [j for j in (i_star - 1, i_star + 1) if 0 <= j < len(lam_grid)]
    for j in neighbours:
        candidates = candidates + dual(j)[3]
    bracket_gap = max((dual(j)[0] - g_star for j in neighbours), default=0.0)

    pi_star = _primal_choice(mdp, alpha, pi_best, candidates)
    ev = exact_evaluation(mdp, pi_star)
    y_star = ev.rho
    value = lagrangian(lam_star, ev.rho, ev.eta, y_star, alpha)
    duality_gap = max(0.0, g_star - value)
    slack = lam_star * abs(alpha - ev.variance)
    y_bound = lam_star * y_res ** 2 / 4
    certificate = {
        "lambda_res": lambda_res,
        "y_res": y_res,
        "dual_value": g_star,
        "bracket_gap": bracket_gap,
        "duality_gap": duality_gap,
        "complementary_slack": slack,
        "y_grid_bound": y_bound,
        "gap": duality_gap + slack + y_bound + bracket_gap,
        "variance_star": ev.variance,
    }
    return SaddleSolution(lam_star, y_star, pi_star, value, certificate)


def _mix(a: StationaryPolicy, b: StationaryPolicy, t: float) -> StationaryPolicy:
    return StationaryPolicy.normalized((1.0 - t) * a.probs + t * b.probs)


def _primal_choice(mdp, alpha, pi_best, candidates, tol: float = 1e-12) -> StationaryPolicy:
    if exact_evaluation(mdp, pi_best).variance <= alpha + tol:
        return pi_best
    evs = [(pi, exact_evaluation(mdp, pi)) for pi in candidates]
    feasible = [(pi, ev) for pi, ev in evs if ev.variance <= alpha + tol]
    infeasible = [(pi, ev) for pi, ev in evs if ev.variance > alpha + tol]
    if not feasible:
        return pi_best
    best_pi, best_rho = max(((pi, ev.rho) for pi, ev in feasible), key=lambda x: x[1])
    for pf, _ in feasible:
        for pinf, ev_inf in infeasible:
            if ev_inf.rho <= best_rho:
                continue
            lo, hi = 0.0, 1.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if exact_evaluation(mdp, _mix(pf, pinf, mid)).variance <= alpha:
                    lo = mid
                else:
                    hi = mid
            pi_t = _mix(pf, pinf, lo)
            rho_t = exact_evaluation(mdp, pi_t).rho
            if rho_t > best_rho:
                best_pi, best_rho = pi_t, rho_t
    return best_pi


def truncated_value_oracle(mdp: TabularMdp, pi: StationaryPolicy, kind: str = "reward",
                           T_trunc: int = 100_000) -> np.ndarray:
    """sum_{t=0}^{T_trunc} E[g(r_t) - z | s0 = s, a0 = a] by forward propagation."""
    if T_trunc < 1:
        raise ValueError("T_trunc must be at least 1")
    g = mdp.reward if kind == "reward" else mdp.reward ** 2
    P_pi = induced_chain(mdp, pi)
    nu = chain_stationary(P_pi)
    g_pi = np.sum(pi.probs * g, axis=1)
    z = float(nu @ g_pi)
    n_s, n_a = mdp.n_states, mdp.n_actions
    total = g - z
    dist = mdp.transition.reshape(n_s * n_a, n_s)
    centered = g_pi - z
    acc = np.zeros(n_s * n_a)
    for _ in range(T_trunc):
        acc += dist @ centered
        dist = dist @ P_pi
    return total + acc.reshape(n_s, n_a)


def verify_performance_difference(mdp: TabularMdp, lam: float, y: float,
                                  pi_ref: StationaryPolicy, pi: StationaryPolicy,
                                  alpha: float = 0.0) -> float:
    ev_ref = exact_evaluation(mdp, pi_ref)
    ev = exact_evaluation(mdp, pi)
    lhs = (lagrangian(lam, ev_ref.rho, ev_ref.eta, y, alpha)
           - lagrangian(lam, ev.rho, ev.eta, y, alpha))
    adv = (1.0 + 2.0 * lam * y) * ev.q - lam * ev.w
    rhs = float(ev_ref.nu @ np.sum(adv * (pi_ref.probs - pi.probs), axis=1))
    return abs(lhs - rhs)


def density_diagnostics(mdp: TabularMdp, pi_ref: StationaryPolicy, pi_k: StationaryPolicy,
                        pi_0: StationaryPolicy, lam: float = 0.0, y: float = 0.0,
                        rho_bar: float | None = None, eta_bar: float | None = None) -> Diagnostics:
    """Density-ratio moments of ``pi_ref`` against the iterate ``pi_k`` under sigma_k."""
    if np.any(pi_0.probs <= 0):
        raise DivisionBySupportZero("reference policy pi_0 has zero entries")
    ev_ref = exact_evaluation(mdp, pi_ref)
    ev_k = exact_evaluation(mdp, pi_k)
    sigma_k = ev_k.sigma
    ratio = (pi_ref.probs - pi_k.probs) / pi_0.probs
    phi = math.sqrt(float(np.sum(sigma_k * ratio ** 2)))
    support = sigma_k > 0
    if np.any((ev_ref.sigma > 0) & ~support):
        raise DivisionBySupportZero("sigma_k vanishes where the reference occupancy does not")
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(support, ev_ref.sigma / sigma_k, 0.0) \
            - np.where(ev_k.nu > 0, ev_ref.nu / ev_k.nu, 0.0)[:, None]
    psi = math.sqrt(float(np.sum(np.where(support, sigma_k * dens ** 2, 0.0))))
    resid = verify_performance_difference(mdp, lam, y, pi_ref, pi_k)
    c_k = abs(ev_k.rho - rho_bar) if rho_bar is not None else math.nan
    d_k = abs(ev_k.eta - eta_bar) if eta_bar is not None else math.nan
    return Diagnostics(phi, psi, resid, c_k, d_k)
