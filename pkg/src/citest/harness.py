"""Replicated size/power studies over scenario grids.

Every replication draws from its own Philox stream keyed by
``(master_seed, cell_index, replication_index)``, so a cell's result does not
depend on the worker count or on which other cells were run.
"""

from __future__ import annotations

import enum
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .calibration import crt_p_value, randomized_p_value
from .estimator import augment
from .kernel_core import KernelConfig, build_gram
from .models import Scenario, ScenarioName, generate_scenario

log = logging.getLogger(__name__)

THREADS_ENV = "CITEST_THREADS"

DEFAULT_R_GRID = (-2, -1.5, -1.2, -0.9, -0.6, -0.3, 0, 0.3, 0.6, 0.9, 1.2, 1.5, 2)


class StudyMethod(enum.Enum):
    AUG = "aug"
    AUG_CRT = "aug-crt"


@dataclass(frozen=True)
class StudySpec:
    scenario_grid: list
    method: StudyMethod = StudyMethod.AUG
    alpha: float = 0.05
    B: int = 500
    n_reps: int = 1000
    master_seed: int = 0
    parallelism: int = 1
    kernel: KernelConfig = field(default_factory=KernelConfig)

    def __post_init__(self):
        if not self.scenario_grid:
            raise ValueError("scenario grid is empty")
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.B < 1:
            raise ValueError("B must be >= 1")


@dataclass(frozen=True)
class PowerCell:
    scenario: Scenario
    method: StudyMethod
    alpha: float
    B: int
    n_reps: int
    rejections: int
    seed: int
    wall_time: float

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.n_reps

    @property
    def mc_std_err(self) -> float:
        p = self.rejection_rate
        return math.sqrt(p * (1 - p) / self.n_reps)


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def cell_seed(master_seed: int, cell_index: int) -> int:
    """Independent 63-bit seed for grid cell ``cell_index``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell_index,))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(rep,))))


def replicate(scenario: Scenario, method: StudyMethod, alpha: float, B: int,
              cfg: KernelConfig, seed: int, rep: int) -> bool:
    """One generate -> augment -> Gram -> calibrate -> decide cycle."""
    rng = replication_rng(seed, rep)
    data, model, _ = generate_scenario(scenario, rng)
    if method is StudyMethod.AUG:
        gram = build_gram(augment(data, model, rng), cfg)
        return randomized_p_value(gram, B, rng, alpha).reject
    return crt_p_value(data, model, cfg, B, rng, alpha).reject


def _run_block(args):
    scenario, method, alpha, B, cfg, seed, reps = args
    with threadpool_limits(1):
        return [replicate(scenario, method, alpha, B, cfg, seed, r) for r in reps]


def run_cell(scenario: Scenario, method: StudyMethod = StudyMethod.AUG, alpha: float = 0.05,
             B: int = 500, n_reps: int = 1000, seed: int = 0,
             cfg: KernelConfig | None = None, workers: int = 1,
             executor: ProcessPoolExecutor | None = None) -> PowerCell:
    """Rejection rate of the test over ``n_reps`` replications of ``scenario``.

    BLAS is pinned to one thread in every replication so that the worker
    count never changes floating-point results.
    """
    if cfg is None:
        cfg = KernelConfig()
    method = StudyMethod(method)
    t0 = time.perf_counter()
    reps = list(range(n_reps))
    if workers <= 1 and executor is None:
        decisions = _run_block((scenario, method, alpha, B, cfg, seed, reps))
    else:
        n_blocks = max(1, min(n_reps, 4 * max(workers, 1)))
        blocks = [reps[i::n_blocks] for i in range(n_blocks)]
        args = [(scenario, method, alpha, B, cfg, seed, b) for b in blocks]
        own = executor is None
        ex = executor or ProcessPoolExecutor(max_workers=workers)
        try:
            results = list(ex.map(_run_block, args))
        finally:
            if own:
                ex.shutdown()
        decisions = [None] * n_reps
        for block, res in zip(blocks, results):
            for r, dec in zip(block, res):
                decisions[r] = dec
    wall = time.perf_counter() - t0
    cell = PowerCell(scenario, method, alpha, B, n_reps, int(sum(decisions)), seed, wall)
    log.info("%s %s: rate=%.3f (se %.3f) in %.1fs", scenario.label(), method.value,
             cell.rejection_rate, cell.mc_std_err, wall)
    return cell


class StudyError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def run_study(spec: StudySpec, on_cell=None) -> list:
    """Run every grid cell in order.

    ``on_cell`` is called with each finished :class:`PowerCell` (used to
    flush rows as they complete).  A failing cell raises :class:`StudyError`
    carrying the cells finished so far.
    """
    cells = []
    executor = ProcessPoolExecutor(spec.parallelism) if spec.parallelism > 1 else None
    try:
        for i, scenario in enumerate(spec.scenario_grid):
            seed = cell_seed(spec.master_seed, i)
            try:
                cell = run_cell(scenario, spec.method, spec.alpha, spec.B, spec.n_reps,
                                seed, spec.kernel, spec.parallelism, executor)
            except Exception as exc:
                raise StudyError(f"cell {i} ({scenario.label()}) failed: {exc}",
                                 cells) from exc
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    finally:
        if executor is not None:
            executor.shutdown()
    return cells


# grids used in the power studies


def ex1_grid(variant="a", rs=DEFAULT_R_GRID, n=50):
    name = ScenarioName("ex1" + variant)
    return [Scenario(name, n=n, r=float(r)) for r in rs]


def ex2_grid(variant="a", ns=range(10, 101, 10)):
    name = ScenarioName("ex2" + variant)
    return [Scenario(name, n=n) for n in ns]


def ex3_grid(variant="a", log2_dims=range(1, 11), n=50):
    name = ScenarioName("ex3" + variant)
    return [Scenario(name, n=n, d=2 ** k) for k in log2_dims]


def ex4_grid(variant="a", log2_dims=range(1, 6)):
    name = ScenarioName("ex4" + variant)
    return [Scenario(name, d=2 ** k) for k in log2_dims]


def pitman_grid(betas=(1, 3, 5, 7, 9), ns=(100, 200, 300, 400, 500)):
    return [Scenario(ScenarioName.PITMAN, n=n, beta=float(b)) for b in betas for n in ns]
