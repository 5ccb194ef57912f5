"""Coordinate-flip calibration of the augmentation test, plus a CRT baseline.

A flip vector ``pi`` in ``{0, 1}^n`` keeps observation ``i`` when
``pi[i] == 1`` and exchanges ``X_i`` with ``X_i'`` when ``pi[i] == 0``.
On the core matrix this is ``g_ij -> s_i s_j g_ij`` with ``s = 2 pi - 1``,
so resampling reuses the one Gram matrix built for the observed data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .estimator import AugmentedDataset, augment, estimate_zeta, pair_sums
from .kernel_core import BandwidthRule, GramMatrix2n, KernelConfig, build_gram
from .models import ConditionalModel, Dataset

N_MAX_EXACT = 20
# rows of sign vectors per matrix product; bounds memory at ~chunk * n doubles
_CHUNK = 4096


class Method(enum.Enum):
    EXACT_FLIP = "exact"
    RANDOMIZED_FLIP = "randomized"
    CRT = "crt"


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    p_value: float
    method: Method
    n_resamples: int
    alpha: float
    reject: bool
    critical_value: float | None = None
    seed: int | None = None

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method.value,
            "n_resamples": self.n_resamples,
            "alpha": self.alpha,
            "reject": self.reject,
            "critical_value": self.critical_value,
            "seed": self.seed,
        }


TestOutcome.__test__ = False  # keep pytest from collecting it


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")


def _signs(pi: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(pi, dtype=float) - 1.0


def _check_flips(pi, n) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape[-1] != n:
        raise ValueError(f"flip vector length {pi.shape[-1]} != n = {n}")
    if not np.all((pi == 0) | (pi == 1)):
        raise ValueError("flip vectors must be 0/1")
    return pi


def _flip_statistics(gram: GramMatrix2n, pi: np.ndarray, observed: float) -> np.ndarray:
    """Statistic for every row of the 0/1 matrix ``pi``.

    Rows are sign-normalised so ``pi`` and its complement (same value in exact
    arithmetic) give bit-identical results; rows equivalent to the identity
    get ``observed`` itself so identity ties are exact.
    """
    upper = gram.upper_core()
    n_pairs = gram.n * (gram.n - 1) / 2
    out = np.empty(pi.shape[0])
    for start in range(0, pi.shape[0], _CHUNK):
        block = np.asarray(pi[start:start + _CHUNK], dtype=np.uint8)
        # 1 where observation i is flipped relative to observation 0
        rel = block ^ block[:, :1]
        signs = rel.astype(float)
        signs *= -2.0
        signs += 1.0
        vals = pair_sums(upper, signs) / n_pairs
        vals[~rel.any(axis=1)] = observed
        out[start:start + _CHUNK] = vals
    return out


def resample_statistic(gram: GramMatrix2n, pi) -> float:
    """Statistic recomputed on the flipped data ``(U_i, U_i', Y_i, Z_i)``."""
    pi = _check_flips(pi, gram.n)
    if pi.ndim != 1:
        raise ValueError("expected a single flip vector")
    s = _signs(pi)
    s *= s[0]
    return float(pair_sums(gram.upper_core(), s[None, :])[0] / (gram.n * (gram.n - 1) / 2))


def resample_statistics(gram: GramMatrix2n, pis) -> np.ndarray:
    """Vectorised :func:`resample_statistic` over the rows of ``pis``."""
    pis = _check_flips(np.atleast_2d(pis), gram.n)
    return _flip_statistics(gram, pis, estimate_zeta(gram).zeta_hat)


def _all_flips_half(n: int):
    """All ``pi`` with ``pi[0] == 1``, in lexicographic order, in chunks.

    The statistic is invariant under complementing ``pi``, so this half
    carries every value of the full ``2^n`` enumeration exactly twice over.
    """
    total = 1 << (n - 1)
    bits = np.arange(n - 1)[::-1]
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        rest = (idx[:, None] >> bits) & 1
        # idx 0 is the identity: rest bits 0 -> keep, so use 1 - bit
        yield np.hstack([np.ones((len(idx), 1), dtype=np.int64), 1 - rest])


def enumerate_statistics(gram: GramMatrix2n) -> np.ndarray:
    """Statistics of the 2^(n-1) flips with ``pi[0] = 1`` (each stands for two)."""
    n = gram.n
    if n > N_MAX_EXACT:
        raise ValueError(f"exact enumeration limited to n <= {N_MAX_EXACT}; "
                         "use randomized_p_value")
    obs = estimate_zeta(gram).zeta_hat
    return np.concatenate([_flip_statistics(gram, pi, obs) for pi in _all_flips_half(n)])


def _quantile_inf(values: np.ndarray, alpha: float) -> float:
    """``inf{t : mean(values <= t) >= 1 - alpha}``."""
    m = len(values)
    # round guards float noise in (1 - alpha) * m, e.g. 0.95 * 500
    k = max(1, math.ceil(round((1.0 - alpha) * m, 9)))
    return float(np.sort(values)[k - 1])


def exact_p_value(gram: GramMatrix2n, alpha: float = 0.05) -> TestOutcome:
    """Fraction of all ``2^n`` flips whose statistic is ``>=`` the observed one."""
    _check_alpha(alpha)
    if gram.n < 2:
        raise ValueError("need at least two observations")
    obs = estimate_zeta(gram).zeta_hat
    vals = enumerate_statistics(gram)
    p = float(np.count_nonzero(vals >= obs)) / len(vals)
    c = _quantile_inf(vals, alpha)
    return TestOutcome(obs, p, Method.EXACT_FLIP, 1 << gram.n, alpha, p < alpha, c)


def draw_flips(n: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """``B`` i.i.d. uniform flip vectors, shape (B, n), dtype uint8.

    Bits are unpacked from raw random bytes, eight flips per byte.
    """
    width = (n + 7) // 8
    raw = np.frombuffer(rng.bytes(B * width), dtype=np.uint8).reshape(B, width)
    return np.unpackbits(raw, axis=1, count=n)


def randomized_p_value(gram: GramMatrix2n, B: int, rng: np.random.Generator,
                       alpha: float = 0.05, seed: int | None = None) -> TestOutcome:
    """Add-one Monte-Carlo p-value ``(1 + #{stat(pi_b) >= obs}) / (B + 1)``.

    The identity is not added to the draws; the ``+1`` plays its role.  The
    reported critical value is the inf-quantile of the same ``B`` draws.
    """
    _check_alpha(alpha)
    if B < 1:
        raise ValueError("B must be positive")
    obs = estimate_zeta(gram).zeta_hat
    vals = _flip_statistics(gram, draw_flips(gram.n, B, rng), obs)
    hits = int(np.count_nonzero(vals >= obs))
    p = (hits + 1) / (B + 1)
    return TestOutcome(obs, p, Method.RANDOMIZED_FLIP, B, alpha, p < alpha,
                       _quantile_inf(vals, alpha), seed)


def critical_value(gram: GramMatrix2n, B: int | None, alpha: float,
                   rng: np.random.Generator | None = None) -> float:
    """Resampling cut-off ``c_{1-alpha}``; ``B=None`` enumerates all flips."""
    _check_alpha(alpha)
    if B is None:
        return _quantile_inf(enumerate_statistics(gram), alpha)
    if B < 1:
        raise ValueError("B must be positive")
    if rng is None:
        raise ValueError("randomized critical value needs an rng")
    obs = estimate_zeta(gram).zeta_hat
    return _quantile_inf(_flip_statistics(gram, draw_flips(gram.n, B, rng), obs), alpha)


def cutoff_bound(n: int, alpha: float) -> float:
    """Deterministic upper bound ``2 / (alpha (n - 1))`` on the cut-off."""
    return 2.0 / (alpha * (n - 1))


def _sq_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched ``||a_i - b_j||^2`` for arrays of shape (M, n, k)."""
    diff = a[:, :, None, :] - b[:, None, :, :]
    return np.einsum("mijk,mijk->mij", diff, diff)


def crt_statistics(x_tilde: np.ndarray, x_prime: np.ndarray, yz: np.ndarray,
                   sigma_sq: float) -> np.ndarray:
    """Statistic for each replicate ``(x_tilde[m], x_prime[m], Y, Z)``.

    ``Y`` and ``Z`` are shared, so ``K = exp(-s/2 Dx) * exp(-s/2 Dyz)`` with
    the second factor computed once.  Agrees with rebuilding each Gram
    matrix up to rounding.
    """
    from scipy.spatial.distance import pdist, squareform

    n = yz.shape[0]
    e_yz = np.exp(-0.5 * sigma_sq * squareform(pdist(yz, "sqeuclidean"))) if yz.shape[1] \
        else np.ones((n, n))
    out = np.empty(x_tilde.shape[0])
    step = max(1, (1 << 22) // (n * n * x_tilde.shape[2]))
    for start in range(0, x_tilde.shape[0], step):
        a = x_tilde[start:start + step]
        b = x_prime[start:start + step]
        k_ee = np.exp(-0.5 * sigma_sq * _sq_cross(a, a))
        k_oo = np.exp(-0.5 * sigma_sq * _sq_cross(b, b))
        k_eo = np.exp(-0.5 * sigma_sq * _sq_cross(a, b))
        c = ((k_ee + k_oo) - (k_eo + k_eo.transpose(0, 2, 1))) * e_yz
        total = c.sum(axis=(1, 2)) - np.einsum("mii->m", c)
        out[start:start + step] = total / (n * (n - 1))
    return out


def crt_p_value(d: Dataset, m: ConditionalModel, cfg: KernelConfig, M: int,
                rng: np.random.Generator, alpha: float = 0.05,
                seed: int | None = None) -> TestOutcome:
    """Conditional randomisation calibration of the same statistic.

    ``T_0`` uses one augmentation of ``d``.  Replicate ``m`` replaces ``X`` by
    a fresh draw from the model, re-augments with another fresh draw and
    recomputes the statistic.  ``p = (1 + #{T_m >= T_0}) / (M + 1)``.
    """
    _check_alpha(alpha)
    if M < 1:
        raise ValueError("M must be positive")
    aug0 = augment(d, m, rng)
    draws = m.sample(np.tile(d.Z, (2 * M, 1)), rng).reshape(M, 2, d.n, d.d_x)
    x_tilde, x_prime = draws[:, 0], draws[:, 1]
    yz = np.hstack([d.Y, d.Z])
    if cfg.bandwidth_rule is BandwidthRule.MEDIAN:
        # bandwidth is data dependent: rebuild each replicate in full
        t0 = estimate_zeta(build_gram(aug0, cfg)).zeta_hat
        t = np.array([
            estimate_zeta(build_gram(AugmentedDataset(Dataset(xt, d.Y, d.Z), xp), cfg)).zeta_hat
            for xt, xp in zip(x_tilde, x_prime)])
    else:
        sigma_sq = cfg.resolve(d.dim)
        t0 = crt_statistics(d.X[None], aug0.x_prime[None], yz, sigma_sq)[0]
        t = crt_statistics(x_tilde, x_prime, yz, sigma_sq)
    hits = int(np.count_nonzero(t >= t0))
    p = (hits + 1) / (M + 1)
    return TestOutcome(float(t0), p, Method.CRT, M, alpha, p < alpha, None, seed)


def aug_test(d: Dataset, m: ConditionalModel, cfg: KernelConfig = KernelConfig(),
             B: int | None = 500, alpha: float = 0.05,
             rng: np.random.Generator | None = None, seed: int | None = None,
             exact: bool = False) -> TestOutcome:
    """Augment once, build the Gram matrix once, calibrate by coordinate flips."""
    if rng is None:
        rng = np.random.default_rng(seed)
    gram = build_gram(augment(d, m, rng), cfg)
    if exact:
        return exact_p_value(gram, alpha)
    return randomized_p_value(gram, B, rng, alpha, seed)
