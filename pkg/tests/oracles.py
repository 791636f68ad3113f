"""Reference computations that share no code with the library.

They are deliberately slow and literal: scalar loops, grid search and a
general-purpose constrained solver.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize


def grid_argmin_1d(fn, lo: float, hi: float, step: float):
    """Brute-force minimiser of a scalar function over an evenly spaced grid."""
    n = int(round((hi - lo) / step))
    xs = np.linspace(lo, hi, n + 1)
    vals = np.array([fn(x) for x in xs])
    k = int(np.argmin(vals))
    return float(xs[k]), float(vals[k])


def brute_force_two_agent(a, d, cap, lo=0.0, hi=2.0, step=1e-3):
    """min sum 1/2 (x_i - a_i)^2 s.t. d1 x1 + d2 x2 <= cap on a grid.

    For each x1 on the grid the best x2 is taken on the same grid, so the
    result is an exact grid optimum.
    """
    xs = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    best = math.inf
    for x1 in xs:
        room = cap - d[0] * x1
        ok = d[1] * xs <= room + 1e-12
        if not ok.any():
            continue
        x2 = xs[ok]
        val = 0.5 * (x1 - a[0]) ** 2 + 0.5 * (x2 - a[1]) ** 2
        best = min(best, float(val.min()))
    return best


def primal_slsqp(centers, weights, slopes, offsets, lower, upper):
    """Scalar agents: min sum w_i/2 (x_i - c_i)^2 s.t. slopes @ x + offsets.sum(0) <= 0 per row."""
    centers = np.asarray(centers, float)
    weights = np.asarray(weights, float)
    slopes = np.atleast_2d(np.asarray(slopes, float))
    total_offset = np.asarray(offsets, float).sum(axis=0)
    cons = [{"type": "ineq", "fun": (lambda x, r=r: -(slopes[r] @ x + total_offset[r])),
             "jac": (lambda x, r=r: -slopes[r])} for r in range(slopes.shape[0])]
    res = minimize(
        lambda x: 0.5 * float(weights @ (x - centers) ** 2),
        np.clip(np.zeros_like(centers), lower, upper),
        jac=lambda x: weights * (x - centers),
        bounds=list(zip(np.broadcast_to(lower, centers.shape), np.broadcast_to(upper, centers.shape))),
        constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000},
    )
    return res.x, float(res.fun)


def scalar_subproblem_argmin(v, w, a, q, d, eta, anchor, lo, hi):
    """argmin over [lo, hi] of v*w/2 (x-a)^2 + q*d*x + eta (x-anchor)^2 via the derivative root."""
    den = v * w + 2 * eta
    x = (v * w * a + 2 * eta * anchor - q * d) / den
    return min(max(x, lo), hi)


def loop_bdpp(a, d, cap, W_rounds, x0, horizon, c, upper=2.0):
    """Literal per-agent B-DPP on the scalar slice instance.

    Returns per-iterate lists of x, queues, the running average objective
    and constraint, and the summed-queue drift.  ``W_rounds`` is a list of
    nested lists, round ``t`` uses ``W_rounds[t % len]``.
    """
    n = len(a)
    share = cap / n
    x = [float(v) for v in x0]
    mu = [0.0] * n
    avg = [0.0] * n
    out = {"x": [], "mu": [], "objective": [], "violation": [], "drift": [], "lemma1": []}
    cum_g = 0.0
    cum_gamma = 0.0
    for t in range(horizon):
        W = W_rounds[t % len(W_rounds)]
        k = t + 1
        v, eta, gamma = math.sqrt(k), float(k), c / math.sqrt(k)
        mu_hat = [sum(W[i][j] * mu[j] for j in range(n)) for i in range(n)]
        new_x = [scalar_subproblem_argmin(v, 1.0, a[i], mu_hat[i], d[i], eta, x[i], 0.0, upper) for i in range(n)]
        g = [d[i] * new_x[i] - share for i in range(n)]
        new_mu = [max(mu_hat[i] + g[i], 0.0) + gamma for i in range(n)]
        out["drift"].append(0.5 * sum(new_mu) ** 2 - 0.5 * sum(mu) ** 2)
        x, mu = new_x, new_mu
        avg = [avg[i] + (x[i] - avg[i]) / k for i in range(n)]
        cum_g += sum(g)
        cum_gamma += gamma
        out["lemma1"].append(sum(mu) - cum_g - n * cum_gamma)
        out["x"].append(list(x))
        out["mu"].append(list(mu))
        out["objective"].append(sum(0.5 * (avg[i] - a[i]) ** 2 for i in range(n)))
        out["violation"].append(sum(d[i] * avg[i] - share for i in range(n)))
    return out


def loop_dpp(a, d, cap, v, horizon, upper=2.0):
    """Literal centralized DPP on the scalar slice instance from x = 0, mu = 0."""
    n = len(a)
    share = cap / n
    mu = 0.0
    xs, mus = [], []
    for _ in range(horizon):
        x = [min(max(a[i] - mu * d[i] / v, 0.0), upper) for i in range(n)]
        mu = max(mu + sum(d[i] * x[i] - share for i in range(n)), 0.0)
        xs.append(x)
        mus.append(mu)
    return xs, mus


def bfs_connected(n, edges) -> bool:
    adj = {i: set() for i in range(n)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, stack = {0}, [0]
    while stack:
        u = stack.pop()
        for w in adj[u] - seen:
            seen.add(w)
            stack.append(w)
    return len(seen) == n


def bounds_reference(F, G, R, eps, N, B, a, p, C):
    """Constants transcribed term by term, sigma taken equal to delta, no clamping."""
    r = (1 - a / (2 * N * N)) ** (-2)
    beta = (1 - a / (2 * N * N)) ** (1 / B)
    delta = F + math.sqrt(p) * eps / (2 * N)
    sigma = delta
    C1 = (8 * delta * delta / eps) * math.log(8 * delta * delta / (eps * eps)) \
        + (4 * N * F * r * math.sqrt(p) + 2 * r * p * eps) / (1 - beta) \
        + (8 * N * G * R + 16 * N * R * R) / eps
    k = 2 * N * C / eps
    C2 = math.sqrt(p) * C * k**2 + (6 + k**4) * delta + 24 * N * F * F / eps \
        + (8 * N * N * F * F * r + 4 * N * F * r * math.sqrt(p)) / (eps * (1 - beta)) \
        + (24 * N * F * p + 8 * p * eps) / N
    Cf = 12 * N * F * F + 16 * N * p * C * C + 16 * N * F * p * C \
        + 4 * N * N * r * (F + math.sqrt(p) * C) ** 2 / (1 - beta) \
        + 2 * p * C * (C1 + C2 + 4 * sigma) + 2 * R * R + 2
    Cg = N * (4 * sigma + C1 + C2 - C)
    C0 = 4 * sigma + C1 + 1
    t1 = math.ceil((C2 / (C - 4 * sigma - C1)) ** 2) if C > 4 * sigma + C1 else math.inf
    return dict(r=r, beta=beta, delta=delta, sigma=sigma, C1=C1, C2=C2, Cf=Cf, Cg=Cg, C0=C0, t1=t1)


def planted_two_agent(rng, step=1e-3):
    """Random binding N=2 slice instance whose optimum is a grid point.

    Pick the optimum on the grid strictly inside [0, 2], a multiplier and
    slopes, then set ``a = x* + lam d`` and ``cap = d @ x*`` so the KKT
    conditions hold at ``x*`` with an active constraint.
    """
    x_star = rng.integers(100, 1500, size=2) * step
    d = rng.uniform(0.5, 1.0, size=2)
    lam = rng.uniform(0.05, 0.5)
    a = x_star + lam * d
    return a, d, float(d @ x_star), x_star, lam
