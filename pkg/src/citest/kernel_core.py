"""Gaussian kernel, the interleaved 2n x 2n Gram matrix and the U-statistic core.

Point layout: row ``2*i`` of the Gram matrix is ``V_i = (X_i, Y_i, Z_i)`` and
row ``2*i + 1`` is its CI variant ``V_i' = (X_i', Y_i, Z_i)``.  Flipping
observation ``i`` is then the index swap ``2*i <-> 2*i + 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import pdist, squareform

if TYPE_CHECKING:
    from .estimator import AugmentedDataset


class BandwidthRule(enum.Enum):
    FIXED = "fixed"
    INVERSE_DIMENSION = "inverse-dimension"
    MEDIAN = "median"


@dataclass(frozen=True)
class KernelConfig:
    """How to pick the kernel scale ``sigma_sq`` in ``exp(-sigma_sq/2 |x-y|^2)``.

    ``sigma_sq`` is only read for ``BandwidthRule.FIXED``.
    """

    bandwidth_rule: BandwidthRule = BandwidthRule.INVERSE_DIMENSION
    sigma_sq: float | None = None

    def __post_init__(self):
        if self.bandwidth_rule is BandwidthRule.FIXED:
            if self.sigma_sq is None or not self.sigma_sq > 0:
                raise ValueError("FIXED bandwidth needs sigma_sq > 0")

    @classmethod
    def fixed(cls, sigma_sq: float) -> "KernelConfig":
        return cls(BandwidthRule.FIXED, float(sigma_sq))

    def resolve(self, dim: int, sq_dists=None) -> float:
        """Return the numeric ``sigma_sq`` for points of dimension ``dim``.

        ``sq_dists`` (condensed pairwise squared distances) is needed by the
        median rule only.
        """
        if self.bandwidth_rule is BandwidthRule.FIXED:
            return float(self.sigma_sq)
        if self.bandwidth_rule is BandwidthRule.INVERSE_DIMENSION:
            if dim < 1:
                raise ValueError("dimension must be positive")
            return 1.0 / dim
        if sq_dists is None:
            raise ValueError("median rule needs pairwise squared distances")
        med = float(np.median(sq_dists))
        if not med > 0:
            raise ValueError("median pairwise squared distance is zero; "
                             "use a fixed bandwidth")
        return 1.0 / med


def gaussian_kernel(x, y, sigma_sq: float) -> float:
    """``exp(-sigma_sq / 2 * ||x - y||^2)`` for two vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    diff = x - y
    return math.exp(-0.5 * sigma_sq * float(np.dot(diff, diff)))


class _Counter:
    """Counts Gram constructions; tests use it to check matrix reuse."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


gram_builds = _Counter()


class GramMatrix2n:
    """Immutable kernel matrix over the interleaved points ``V_0, V_0', V_1, ...``."""

    __slots__ = ("values", "n", "sigma_sq", "_core", "_upper")

    def __init__(self, values: np.ndarray, sigma_sq: float):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] % 2:
            raise ValueError("Gram matrix must be square with even size")
        values.setflags(write=False)
        self.values = values
        self.n = values.shape[0] // 2
        self.sigma_sq = float(sigma_sq)
        self._core = None
        self._upper = None

    def core_matrix(self) -> np.ndarray:
        """n x n matrix of ``g(i, j)``; the diagonal holds ``g(i, i) >= 0``.

        Grouped as ``(K(Vi,Vj) + K(Vi',Vj')) - (K(Vi,Vj') + K(Vi',Vj))`` so the
        result is exactly symmetric and a flip of ``i`` negates row ``i``
        exactly.
        """
        if self._core is None:
            g = self.values
            c = (g[0::2, 0::2] + g[1::2, 1::2]) - (g[0::2, 1::2] + g[1::2, 0::2])
            c.setflags(write=False)
            self._core = c
        return self._core

    def upper_core(self) -> np.ndarray:
        """``core_matrix()`` with everything on and below the diagonal zeroed."""
        if self._upper is None:
            u = np.triu(self.core_matrix(), k=1)
            u.setflags(write=False)
            self._upper = u
        return self._upper

    def swapped(self, i: int) -> "GramMatrix2n":
        """Gram matrix with the roles of ``V_i`` and ``V_i'`` exchanged."""
        perm = np.arange(2 * self.n)
        perm[[2 * i, 2 * i + 1]] = perm[[2 * i + 1, 2 * i]]
        return GramMatrix2n(self.values[np.ix_(perm, perm)], self.sigma_sq)

    def __repr__(self):
        return f"GramMatrix2n(n={self.n}, sigma_sq={self.sigma_sq:g})"


def interleave(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack rows as ``a[0], b[0], a[1], b[1], ...``."""
    out = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=float)
    out[0::2] = a
    out[1::2] = b
    return out


def pairwise_sq_dists(x: np.ndarray, x_prime: np.ndarray, yz: np.ndarray) -> np.ndarray:
    """Squared distances between all 2n interleaved points.

    ``Y`` and ``Z`` are shared by ``V_i`` and ``V_i'``, so their contribution
    is an n x n block expanded over each 2 x 2 tile.
    """
    dx = squareform(pdist(interleave(x, x_prime), "sqeuclidean"))
    if yz.shape[1]:
        dyz = squareform(pdist(yz, "sqeuclidean"))
        dx += np.repeat(np.repeat(dyz, 2, axis=0), 2, axis=1)
    return dx


def build_gram(aug: "AugmentedDataset", cfg: KernelConfig = KernelConfig()) -> GramMatrix2n:
    """Kernel matrix over the 2n augmented points; computed once per test."""
    base = aug.base
    if base.n < 2:
        raise ValueError("need at least two observations")
    yz = np.hstack([base.Y, base.Z])
    sq = pairwise_sq_dists(base.X, aug.x_prime, yz)
    dim = base.X.shape[1] + yz.shape[1]
    cond = None
    if cfg.bandwidth_rule is BandwidthRule.MEDIAN:
        cond = sq[np.triu_indices_from(sq, k=1)]
    sigma_sq = cfg.resolve(dim, cond)
    values = np.exp(-0.5 * sigma_sq * sq)
    gram_builds.count += 1
    return GramMatrix2n(values, sigma_sq)


def core_g(gram: GramMatrix2n, i: int, j: int) -> float:
    """Core ``K(Vi,Vj) + K(Vi',Vj') - K(Vi,Vj') - K(Vi',Vj)`` for ``i != j``."""
    n = gram.n
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"indices ({i}, {j}) out of range for n={n}")
    if i == j:
        raise ValueError("core_g needs i != j")
    return float(gram.core_matrix()[i, j])
