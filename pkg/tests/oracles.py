"""Reference computations that share no code with the package.

Stationary distributions come from an eigen-decomposition and differential
values from the Moore-Penrose pseudo-inverse of I - P, so they exercise a
different numerical path than the library's augmented solve.
"""

import numpy as np


def stationary_eig(P):
    vals, vecs = np.linalg.eig(P.T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, i])
    return v / v.sum()


def evaluate(P, r, probs):
    """(nu, rho, eta, Q, W) for policy ``probs`` on the tabular model (P, r)."""
    n = P.shape[0]
    P_pi = np.einsum("sa,sat->st", probs, P)
    nu = stationary_eig(P_pi)
    out = [nu]
    tables = []
    for g in (r, r ** 2):
        g_pi = (probs * g).sum(axis=1)
        z = nu @ g_pi
        h = np.linalg.pinv(np.eye(n) - P_pi) @ (g_pi - z)
        h -= nu @ h
        out.append(z)
        tables.append(g - z + P @ h)
    return (*out, *tables)


def lagrangian(lam, rho, eta, y, alpha):
    return (1 + 2 * lam * y) * rho - lam * eta - lam * y * y + lam * alpha


def random_model(rng, n_s, n_a):
    P = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    P = 0.9 * P + 0.1 / n_s
    P /= P.sum(axis=2, keepdims=True)
    return P, rng.uniform(-1, 1, size=(n_s, n_a))


def random_probs(rng, n_s, n_a):
    p = rng.dirichlet(np.ones(n_a), size=n_s)
    return p / p.sum(axis=1, keepdims=True)


def portfolio_closed_form(alpha, safe=0.4, high=1.0, low=0.0):
    """Best risky fraction p with Var <= alpha when payoffs are safe or a fair coin over {low, high}."""
    mean_r = 0.5 * (high + low)
    second = 0.5 * (high ** 2 + low ** 2)
    # rho(p) = safe + (mean_r - safe) p ; eta(p) = safe^2 + (second - safe^2) p
    a = -(mean_r - safe) ** 2
    b = (second - safe ** 2) - 2 * safe * (mean_r - safe)
    roots = np.roots([a, b, -alpha])
    feasible = [x.real for x in roots if abs(x.imag) < 1e-12 and 0 <= x.real <= 1]
    p = min(feasible) if feasible else 1.0
    return p, safe + (mean_r - safe) * p
