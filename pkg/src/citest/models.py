"""Model-X conditional samplers and the simulation scenarios.

A conditional model draws ``X' ~ X | Z = z``.  The scenarios reproduce the
regression, geometric-dependence, high-dimensional and local-alternative
designs used in the power studies.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Dataset:
    """n observations of ``(X, Y, Z)`` stored as 2-d float blocks."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        blocks = {}
        for name in ("X", "Y", "Z"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.ndim != 2:
                raise ValueError(f"{name} must be 1-d or 2-d")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
            a.setflags(write=False)
            blocks[name] = a
        if not blocks["X"].shape[0] == blocks["Y"].shape[0] == blocks["Z"].shape[0]:
            raise ValueError("X, Y and Z must have the same number of rows")
        for name, a in blocks.items():
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d_x(self) -> int:
        return self.X.shape[1]

    @property
    def d_y(self) -> int:
        return self.Y.shape[1]

    @property
    def d_z(self) -> int:
        return self.Z.shape[1]

    @property
    def dim(self) -> int:
        return self.d_x + self.d_y + self.d_z


class ConditionalModel:
    """Sampler for ``X | Z``.  Subclasses implement :meth:`sample`."""

    d_x: int
    d_z: int
    descriptor: str = "conditional model"

    def sample(self, Z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One independent draw of ``X`` for every row of ``Z``; shape (m, d_x)."""
        raise NotImplementedError

    def sample_given(self, z, rng: np.random.Generator) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (self.d_z,):
            raise ValueError(f"expected z of length {self.d_z}, got {z.shape}")
        return self.sample(z[None, :], rng)[0]

    def _check_z(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.ndim != 2 or Z.shape[1] != self.d_z:
            raise ValueError(f"expected Z with {self.d_z} columns, got shape {Z.shape}")
        return Z

    def __repr__(self):
        return f"<{type(self).__name__}: {self.descriptor}>"


class GaussianLinearModel(ConditionalModel):
    """``X | Z = z ~ N(intercept + coeff @ z, noise_cov)``."""

    def __init__(self, intercept, coeff, noise_cov):
        coeff = np.atleast_2d(np.asarray(coeff, dtype=float))
        d_x, d_z = coeff.shape
        intercept = np.broadcast_to(np.asarray(intercept, dtype=float), (d_x,)).copy()
        cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
        if cov.shape != (d_x, d_x):
            raise ValueError(f"noise_cov must be {d_x}x{d_x}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("noise_cov must be symmetric")
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("noise_cov must be positive definite") from None
        self.intercept = intercept
        self.coeff = coeff
        self.noise_cov = cov
        self.d_x, self.d_z = d_x, d_z
        self.descriptor = f"gaussian-linear(d_x={d_x}, d_z={d_z})"

    def sample(self, Z, rng):
        Z = self._check_z(Z)
        eps = rng.standard_normal((Z.shape[0], self.d_x)) @ self._chol.T
        return self.intercept + Z @ self.coeff.T + eps


class AdditiveNoiseModel(ConditionalModel):
    """``X | Z = z ~ mean_fn(z) + noise`` with univariate ``X``.

    ``noise`` is any object with ``rvs(size=, random_state=)`` (scipy frozen
    distributions, :class:`GaussianScaleMixture`).
    """

    d_x = 1

    def __init__(self, mean_fn: Callable[[np.ndarray], np.ndarray], noise, d_z: int,
                 descriptor: str):
        self.mean_fn = mean_fn
        self.noise = noise
        self.d_z = d_z
        self.descriptor = descriptor

    def sample(self, Z, rng):
        Z = self._check_z(Z)
        m = Z.shape[0]
        loc = np.asarray(self.mean_fn(Z), dtype=float).reshape(m)
        return (loc + self.noise.rvs(size=m, random_state=rng))[:, None]


class PointMassModel(ConditionalModel):
    """Degenerate ``X | Z = z`` concentrated at ``fn(z)``; consumes no randomness."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], d_x: int, d_z: int,
                 descriptor="point mass"):
        self.fn = fn
        self.d_x, self.d_z = d_x, d_z
        self.descriptor = descriptor

    def sample(self, Z, rng):
        Z = self._check_z(Z)
        return np.asarray(self.fn(Z), dtype=float).reshape(Z.shape[0], self.d_x)


def gaussian_linear_model(intercept, coeff, noise_cov) -> GaussianLinearModel:
    return GaussianLinearModel(intercept, coeff, noise_cov)


class GaussianScaleMixture:
    """Centred univariate normal mixture ``sum_k w_k N(0, v_k)``."""

    def __init__(self, variances, weights=None):
        self.variances = np.asarray(variances, dtype=float)
        if weights is None:
            weights = np.full(len(self.variances), 1.0 / len(self.variances))
        self.weights = np.asarray(weights, dtype=float)

    def rvs(self, size, random_state):
        rng = random_state
        comp = rng.choice(len(self.variances), size=size, p=self.weights)
        return rng.standard_normal(size) * np.sqrt(self.variances[comp])

    def mean(self):
        return 0.0

    def var(self):
        return float(self.weights @ self.variances)

    def __repr__(self):
        return f"GaussianScaleMixture(variances={self.variances.tolist()})"


# ---------------------------------------------------------------------------
# scenarios


class ScenarioName(enum.Enum):
    EX1A = "ex1a"
    EX1B = "ex1b"
    EX1C = "ex1c"
    EX2A = "ex2a"
    EX2B = "ex2b"
    EX3A = "ex3a"
    EX3B = "ex3b"
    EX4A = "ex4a"
    EX4B = "ex4b"
    PITMAN = "pitman"


class Truth(enum.Enum):
    H0 = "H0"
    H1 = "H1"


# Default variances of the two equal-weight noise components in Examples 2-4.
# Read as (sd 1, sd 10); (1.0, 10.0) is the literal variance reading.
DEFAULT_MIX_VARIANCES = (1.0, 100.0)

_EX1_NOISE = {
    ScenarioName.EX1A: stats.norm(),
    ScenarioName.EX1B: stats.t(4),
    ScenarioName.EX1C: stats.cauchy(),
}


@dataclass(frozen=True)
class Scenario:
    """One simulation design.

    ``r`` is the regression strength for ex1*, ``d`` the dimension of ``Z`` for
    ex3*/ex4*, ``beta`` the local-alternative scale for ``pitman``.  For ex4*,
    ``n=None`` means ``n = d**2 + 20``.
    """

    name: ScenarioName
    n: int | None = None
    r: float = 0.0
    d: int = 1
    beta: float = 0.0
    mix_variances: tuple = field(default=DEFAULT_MIX_VARIANCES)

    def __post_init__(self):
        name = self.name
        if isinstance(name, str):
            try:
                name = ScenarioName(name.lower())
            except ValueError:
                raise ValueError(f"unknown scenario {self.name!r}") from None
            object.__setattr__(self, "name", name)
        if name in (ScenarioName.EX4A, ScenarioName.EX4B) and self.n is None:
            object.__setattr__(self, "n", self.d ** 2 + 20)
        if self.n is None:
            raise ValueError(f"{name.value} needs a sample size n")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        object.__setattr__(self, "n", int(self.n))
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be an integer >= 1")
        object.__setattr__(self, "d", int(self.d))
        if name in (ScenarioName.EX1A, ScenarioName.EX1B, ScenarioName.EX1C,
                    ScenarioName.EX2A, ScenarioName.EX2B, ScenarioName.PITMAN) and self.d != 1:
            raise ValueError(f"{name.value} has one-dimensional Z")
        if name is ScenarioName.PITMAN:
            if self.beta < 0 or self.mixing_weight > 1:
                raise ValueError("pitman needs 0 <= beta/sqrt(n) <= 1")
        if not math.isfinite(self.r):
            raise ValueError("r must be finite")
        object.__setattr__(self, "mix_variances", tuple(float(v) for v in self.mix_variances))
        if len(self.mix_variances) != 2 or min(self.mix_variances) <= 0:
            raise ValueError("mix_variances needs two positive values")

    @property
    def mixing_weight(self) -> float:
        return self.beta / math.sqrt(self.n)

    @property
    def truth(self) -> Truth:
        if self.name in _EX1_NOISE:
            return Truth.H0 if self.r == 0 else Truth.H1
        if self.name is ScenarioName.PITMAN:
            return Truth.H0 if self.beta == 0 else Truth.H1
        return Truth.H1

    @property
    def dims(self) -> tuple:
        """``(d_x, d_y, d_z)``."""
        return (1, 1, self.d)

    def with_n(self, n: int) -> "Scenario":
        return replace(self, n=n)

    def label(self) -> str:
        if self.name in _EX1_NOISE:
            extra = f"r={self.r:g}"
        elif self.name is ScenarioName.PITMAN:
            extra = f"beta={self.beta:g}"
        else:
            extra = f"d={self.d}"
        return f"{self.name.value}({extra}, n={self.n})"


def _abs_ratio(Z):
    """``f(u) = sum |u_i| / ||u||``."""
    Z = np.asarray(Z, dtype=float)
    return np.abs(Z).sum(axis=1) / np.linalg.norm(Z, axis=1)


def _identity_mean(Z):
    return Z[:, 0]


def conditional_model(s: Scenario) -> ConditionalModel:
    """The true ``X | Z`` law of scenario ``s``."""
    if s.name in _EX1_NOISE:
        noise = _EX1_NOISE[s.name]
        return AdditiveNoiseModel(_identity_mean, noise, 1, f"{s.name.value}: z + {noise.dist.name}")
    if s.name is ScenarioName.PITMAN:
        return AdditiveNoiseModel(_identity_mean, stats.norm(), 1, "pitman: z + N(0,1)")
    mix = GaussianScaleMixture(s.mix_variances)
    if s.name in (ScenarioName.EX2A, ScenarioName.EX2B):
        return AdditiveNoiseModel(_identity_mean, mix, 1, f"{s.name.value}: z + {mix!r}")
    return AdditiveNoiseModel(_abs_ratio, mix, s.d, f"{s.name.value}: f(z) + {mix!r}")


def _noise_pair(s: Scenario, m: int, rng) -> tuple:
    """``(eta1, eta2)`` from the equal mixture of two centred diagonal normals."""
    lo, hi = s.mix_variances
    first = rng.random(m) < 0.5
    v1 = np.where(first, lo, hi)
    if s.name in (ScenarioName.EX2A, ScenarioName.EX3A, ScenarioName.EX4A):
        v2 = v1
    else:
        v2 = np.where(first, hi, lo)
    eta = rng.standard_normal((m, 2))
    return eta[:, 0] * np.sqrt(v1), eta[:, 1] * np.sqrt(v2)


def draw_rows(s: Scenario, m: int, rng: np.random.Generator) -> Dataset:
    """``m`` i.i.d. rows from the joint law of ``s``.

    The law depends on ``s.n`` only through the pitman mixing weight, so
    ``m`` may differ from ``s.n``.
    """
    if s.name in _EX1_NOISE:
        F = _EX1_NOISE[s.name]
        Z = F.rvs(size=m, random_state=rng)
        X = Z + F.rvs(size=m, random_state=rng)
        Y = s.r * X + Z + F.rvs(size=m, random_state=rng)
        return Dataset(X, Y, Z)
    if s.name is ScenarioName.PITMAN:
        return pitman_rows(s.mixing_weight, m, rng)
    eta1, eta2 = _noise_pair(s, m, rng)
    if s.name in (ScenarioName.EX2A, ScenarioName.EX2B):
        Z = rng.random(m)
        return Dataset(Z + eta1, Z + eta2, Z)
    Z = rng.standard_normal((m, s.d))
    f = _abs_ratio(Z)
    return Dataset(f + eta1, f + eta2, Z)


def pitman_rows(weight: float, m: int, rng, return_labels=False):
    """Rows from ``(1 - w) * model_a + w * model_b``.

    model a: ``X = Z + e1, Y = Z + e2``; model b adds ``X`` to ``Y``.
    With ``return_labels`` also returns the boolean model-b indicator.
    """
    if not 0 <= weight <= 1:
        raise ValueError("mixing weight must lie in [0, 1]")
    Z = rng.standard_normal(m)
    X = Z + rng.standard_normal(m)
    from_b = rng.random(m) < weight
    Y = Z + rng.standard_normal(m) + np.where(from_b, X, 0.0)
    if return_labels:
        return Dataset(X, Y, Z), from_b
    return Dataset(X, Y, Z)


def pitman_mixture(beta: float, n: int, rng: np.random.Generator, return_labels=False):
    if beta < 0:
        raise ValueError("beta must be non-negative")
    w = beta / math.sqrt(n)
    if w > 1:
        raise ValueError(f"beta/sqrt(n) = {w:.4g} exceeds 1")
    return pitman_rows(w, n, rng, return_labels)


def generate_scenario(s: Scenario, rng: np.random.Generator):
    """Return ``(dataset, conditional_model, truth)`` for scenario ``s``."""
    if not isinstance(s, Scenario):
        raise TypeError("expected a Scenario")
    return draw_rows(s, s.n, rng), conditional_model(s), s.truth
