"""Data augmentation, the U-statistic and a Monte-Carlo population value."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel_core import GramMatrix2n, KernelConfig, BandwidthRule, build_gram
from .models import ConditionalModel, Dataset, Scenario, conditional_model, draw_rows


@dataclass(frozen=True)
class AugmentedDataset:
    """A dataset together with one CI-variant draw ``X_i' ~ X | Z_i`` per row."""

    base: Dataset
    x_prime: np.ndarray

    def __post_init__(self):
        xp = np.asarray(self.x_prime, dtype=float)
        if xp.ndim == 1:
            xp = xp[:, None]
        if xp.shape != self.base.X.shape:
            raise ValueError(f"x_prime has shape {xp.shape}, expected {self.base.X.shape}")
        if not np.all(np.isfinite(xp)):
            raise ValueError("x_prime has non-finite entries")
        xp.setflags(write=False)
        object.__setattr__(self, "x_prime", xp)

    @property
    def n(self) -> int:
        return self.base.n

    def swap(self, keep) -> "AugmentedDataset":
        """Exchange ``X_i`` and ``X_i'`` wherever ``keep[i] == 0``."""
        keep = np.asarray(keep, dtype=bool)[:, None]
        X, Xp = self.base.X, self.x_prime
        U = np.where(keep, X, Xp)
        Up = np.where(keep, Xp, X)
        return AugmentedDataset(Dataset(U, self.base.Y, self.base.Z), Up)


@dataclass(frozen=True)
class Statistic:
    zeta_hat: float
    n: int
    sigma_sq: float


def augment(d: Dataset, m: ConditionalModel, rng: np.random.Generator) -> AugmentedDataset:
    """Draw ``X_i' ~ X | Z_i`` independently for every observation."""
    if m.d_z != d.d_z or m.d_x != d.d_x:
        raise ValueError(f"model expects (d_x={m.d_x}, d_z={m.d_z}), "
                         f"data has (d_x={d.d_x}, d_z={d.d_z})")
    return AugmentedDataset(d, m.sample(d.Z, rng))


def pair_sums(upper: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """``sum_{i<j} s_i s_j upper[i, j]`` for each row ``s`` of ``signs``.

    ``upper`` is the strictly upper-triangular core.  Sign flips act on the
    core as ``g_ij -> s_i s_j g_ij`` exactly, so a whole batch of resamples
    costs one matrix product.
    """
    signs = np.atleast_2d(np.asarray(signs, dtype=float))
    return np.einsum("bj,bj->b", signs @ upper, signs)


def _n_pairs(n):
    return n * (n - 1) / 2


def estimate_zeta(gram: GramMatrix2n) -> Statistic:
    """U-statistic over all pairs ``i < j`` of the symmetrised core."""
    n = gram.n
    if n < 2:
        raise ValueError("need at least two observations")
    total = pair_sums(gram.upper_core(), np.ones((1, n)))[0]
    return Statistic(float(total / _n_pairs(n)), n, gram.sigma_sq)


def zeta_hat(aug: AugmentedDataset, cfg: KernelConfig = KernelConfig()) -> float:
    """Convenience: build the Gram matrix and return the statistic value."""
    return estimate_zeta(build_gram(aug, cfg)).zeta_hat


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_err: float
    n_mc: int


def population_zeta_mc(scenario: Scenario, m: ConditionalModel | None,
                       cfg: KernelConfig, n_mc: int, rng: np.random.Generator) -> MCEstimate:
    """Unbiased Monte-Carlo estimate of the population measure.

    Each iterate draws a fresh independent pair ``(V1, V2)`` from the
    scenario with CI variants from ``m`` and averages the core ``g``.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    if m is None:
        m = conditional_model(scenario)
    rows = draw_rows(scenario, 2 * n_mc, rng)
    xp = m.sample(rows.Z, rng)
    yz = np.hstack([rows.Y, rows.Z])
    V = np.hstack([rows.X, yz])
    Vp = np.hstack([xp, yz])
    if cfg.bandwidth_rule is BandwidthRule.MEDIAN:
        # median over a subsample of points keeps this O(n_mc)
        pts = np.vstack([V[:2000], Vp[:2000]])
        sub = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        sigma_sq = cfg.resolve(V.shape[1], sub[np.triu_indices_from(sub, 1)])
    else:
        sigma_sq = cfg.resolve(V.shape[1])

    def k(a, b):
        return np.exp(-0.5 * sigma_sq * ((a - b) ** 2).sum(axis=1))

    V1, V2 = V[0::2], V[1::2]
    P1, P2 = Vp[0::2], Vp[1::2]
    g = (k(V1, V2) + k(P1, P2)) - (k(V1, P2) + k(P1, V2))
    return MCEstimate(float(g.mean()), float(g.std(ddof=1) / math.sqrt(n_mc)), n_mc)


def variance_bound(n: int, zeta: float) -> float:
    """Upper bound ``[4(n-1) zeta + 4] / C(n, 2)`` on the estimator variance."""
    return (4 * (n - 1) * zeta + 4) / _n_pairs(n)


def standardized(aug: AugmentedDataset) -> AugmentedDataset:
    """Per-coordinate centring and scaling to unit sample variance.

    ``X`` and ``X'`` share one affine map fitted on their pooled values, which
    no coordinate flip can change, so flip calibration stays exact.
    """
    def fit(a):
        sd = a.std(axis=0, ddof=1)
        sd[sd == 0] = 1.0
        return a.mean(axis=0), sd

    b = aug.base
    mx, sx = fit(np.vstack([b.X, aug.x_prime]))
    my, sy = fit(b.Y)
    mz, sz = fit(b.Z)
    base = Dataset((b.X - mx) / sx, (b.Y - my) / sy, (b.Z - mz) / sz)
    return AugmentedDataset(base, (aug.x_prime - mx) / sx)
