"""Independent reference implementations used as test oracles.

Everything here recomputes from raw coordinates with explicit Python loops
and ``math.exp``; nothing is shared with the package's vectorised paths.
"""

import itertools
import math

import numpy as np


def k_naive(a, b, sigma_sq):
    return math.exp(-0.5 * sigma_sq * sum((float(p) - float(q)) ** 2 for p, q in zip(a, b)))


def points(X, Xp, Y, Z):
    """``[V_0, V_0', V_1, V_1', ...]`` as plain lists."""
    out = []
    for i in range(len(X)):
        yz = list(np.atleast_1d(Y[i])) + list(np.atleast_1d(Z[i]))
        out.append(list(np.atleast_1d(X[i])) + yz)
        out.append(list(np.atleast_1d(Xp[i])) + yz)
    return out


def gram_naive(X, Xp, Y, Z, sigma_sq):
    P = points(X, Xp, Y, Z)
    m = len(P)
    G = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            G[a, b] = k_naive(P[a], P[b], sigma_sq)
    return G


def g_naive(X, Xp, Y, Z, i, j, sigma_sq):
    P = points(X, Xp, Y, Z)
    vi, vpi, vj, vpj = P[2 * i], P[2 * i + 1], P[2 * j], P[2 * j + 1]
    return (k_naive(vi, vj, sigma_sq) + k_naive(vpi, vpj, sigma_sq)
            - k_naive(vi, vpj, sigma_sq) - k_naive(vpi, vj, sigma_sq))


def zeta_naive(X, Xp, Y, Z, sigma_sq):
    n = len(X)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += g_naive(X, Xp, Y, Z, i, j, sigma_sq)
    return total / (n * (n - 1) / 2)


def swap_naive(X, Xp, pi):
    """``(U, U')`` with ``U_i = X_i`` where ``pi_i = 1`` and ``X_i'`` otherwise."""
    U = np.array([X[i] if pi[i] else Xp[i] for i in range(len(X))])
    Up = np.array([Xp[i] if pi[i] else X[i] for i in range(len(X))])
    return U, Up


def exact_p_naive(X, Xp, Y, Z, sigma_sq, tol=1e-12):
    """Mean over all 2^n rebuilt datasets of ``1{stat(pi) >= stat}``.

    Flip-equivalent datasets (``pi`` and its complement) give equal values in
    exact arithmetic; ``tol`` absorbs the rounding so they count as ties.
    """
    n = len(X)
    obs = zeta_naive(X, Xp, Y, Z, sigma_sq)
    hits = 0
    for pi in itertools.product((0, 1), repeat=n):
        U, Up = swap_naive(X, Xp, pi)
        if zeta_naive(U, Up, Y, Z, sigma_sq) >= obs - tol:
            hits += 1
    return hits / 2 ** n


def ecdf_distance(sample, cdf):
    """Kolmogorov distance between a sample and a continuous cdf."""
    x = np.sort(sample)
    m = len(x)
    F = cdf(x)
    return max(np.max(np.arange(1, m + 1) / m - F), np.max(F - np.arange(m) / m))
