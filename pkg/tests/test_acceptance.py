"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (also collected into the
terminal summary).  Run on its own with::

    pytest tests/test_acceptance.py -v
    python tests/test_acceptance.py

Study settings throughout: alpha = 0.05, B = 500 flips (or CRT draws),
1000 replications per cell, kernel scale 1/d.
"""

import math
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from citest.calibration import (critical_value, cutoff_bound, exact_p_value, randomized_p_value,
                                resample_statistic, aug_test)
from citest.estimator import augment, population_zeta_mc, variance_bound, zeta_hat
from citest.harness import StudyMethod, StudySpec, default_workers, run_study
from citest.kernel_core import KernelConfig, build_gram, gram_builds
from citest.models import Scenario, generate_scenario

from oracles import exact_p_naive, swap_naive, zeta_naive

REPS = 1000
B = 500
ALPHA = 0.05

RESULTS = []


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _rates(grid, seed, method=StudyMethod.AUG):
    spec = StudySpec(grid, method, ALPHA, B, REPS, seed, default_workers())
    return [c.rejection_rate for c in run_study(spec)]


def _mc_tol(p, reps=REPS):
    return 3 * math.sqrt(p * (1 - p) / reps)


def test_c01_size_control():
    aug, = _rates([Scenario("ex1a", n=50, r=0.0)], 101)
    crt, = _rates([Scenario("ex1a", n=50, r=0.0)], 102, StudyMethod.AUG_CRT)
    ok = 0.02 <= aug <= 0.08 and 0.02 <= crt <= 0.08
    report(1, ok, f"ex1a r=0 n=50 size AUG={aug:.3f} AUG.CRT={crt:.3f} (need [0.02, 0.08]; "
                  "reference 0.041 / 0.036)")


def test_c02_power_gaussian():
    p2, pm2 = _rates([Scenario("ex1a", n=50, r=2.0), Scenario("ex1a", n=50, r=-2.0)], 201)
    ok = abs(p2 - 0.884) <= 0.05 and abs(pm2 - 0.983) <= 0.04
    report(2, ok, f"ex1a power r=2 {p2:.3f} (0.884 +- 0.05), r=-2 {pm2:.3f} (0.983 +- 0.04)")


def test_c03_heavy_tails():
    p2, p0 = _rates([Scenario("ex1c", n=50, r=2.0), Scenario("ex1c", n=50, r=0.0)], 301)
    ok = abs(p2 - 0.864) <= 0.06 and 0.02 <= p0 <= 0.08
    report(3, ok, f"ex1c power r=2 {p2:.3f} (0.864 +- 0.06), size r=0 {p0:.3f} ([0.02, 0.08])")


def test_c04_geometric_dependence():
    p, = _rates([Scenario("ex2b", n=100)], 401)
    report(4, abs(p - 0.856) <= 0.06, f"ex2b n=100 power {p:.3f} (0.856 +- 0.06)")


def test_c05_pitman():
    betas, ns = (1, 3, 5, 7, 9), (100, 300, 500)
    grid = [Scenario("pitman", n=n, beta=float(b)) for b in betas for n in ns]
    rates = np.array(_rates(grid, 501)).reshape(len(betas), len(ns))
    b1, b9 = rates[0, 0], rates[-1, 0]
    spread = rates.max(axis=1) - rates.min(axis=1)
    ok = 0.02 <= b1 <= 0.09 and abs(b9 - 0.647) <= 0.06 and np.all(spread <= 0.12)
    table = "; ".join(f"beta={b}: " + "/".join(f"{r:.3f}" for r in row)
                      for b, row in zip(betas, rates))
    report(5, ok, f"pitman n=100 beta=1 {b1:.3f} ([0.02, 0.09]), beta=9 {b9:.3f} "
                  f"(0.647 +- 0.06), max spread over n {spread.max():.3f} (<= 0.12) [{table}]")


def test_c06_high_dimensional_decay():
    dims = [2 ** k for k in range(1, 11)]
    rates = _rates([Scenario("ex3a", n=50, d=d) for d in dims], 601)
    mono = all(b <= a + 2 * _mc_tol(max(a, b)) for a, b in zip(rates, rates[1:]))
    ok = abs(rates[0] - 0.557) <= 0.06 and rates[-1] <= 0.09 and mono
    report(6, ok, f"ex3a n=50 d=2 {rates[0]:.3f} (0.557 +- 0.06), d=1024 {rates[-1]:.3f} "
                  f"(<= 0.09), non-increasing={mono} "
                  f"[{' '.join(f'{r:.3f}' for r in rates)}]")


def test_c07_high_dimensional_consistency():
    p16, p32 = _rates([Scenario("ex4a", d=16), Scenario("ex4a", d=32)], 701)
    report(7, p16 >= 0.95 and p32 >= 0.98,
           f"ex4a n=d^2+20 d=16 {p16:.3f} (>= 0.95), d=32 {p32:.3f} (>= 0.98)")


_FAMILIES = ("ex1a", "ex1b", "ex1c", "pitman", "ex2a", "ex2b")


def test_c08_cutoff_bound():
    rng = np.random.default_rng(801)
    instances, violations, exact_count, worst = 100_000, 0, 0, 0.0
    for k in range(instances):
        name = _FAMILIES[k % len(_FAMILIES)]
        exact = k % 20 == 0
        n = int(rng.integers(3, 13 if exact else 41))
        alpha = float(rng.uniform(0.01, 0.5))
        beta = float(rng.uniform(0, math.sqrt(n)))
        s = Scenario(name, n=n, r=float(rng.uniform(-3, 3)), beta=beta)
        d, m, _ = generate_scenario(s, rng)
        G = build_gram(augment(d, m, rng))
        if exact:
            c = critical_value(G, None, alpha)
            exact_count += 1
        else:
            c = critical_value(G, int(rng.integers(50, 501)), alpha, rng)
        bound = cutoff_bound(n, alpha)
        violations += c > bound
        worst = max(worst, c / bound)
    report(8, violations == 0,
           f"{violations} violations of c <= 2/(alpha(n-1)) over {instances} instances "
           f"({exact_count} by full enumeration); largest c/bound {worst:.3f}")


def test_c09_oracle_equivalence():
    rng = np.random.default_rng(901)
    p_diff = 0.0
    for k in range(12):
        s = Scenario(("ex1a", "ex1b", "ex1c", "pitman")[k % 4], n=8, r=float(k % 3), beta=1.0)
        d, m, _ = generate_scenario(s, rng)
        aug = augment(d, m, rng)
        G = build_gram(aug)
        ref = exact_p_naive(d.X, aug.x_prime, d.Y, d.Z, G.sigma_sq)
        p_diff = max(p_diff, abs(exact_p_value(G).p_value - ref))
    stat_diff = 0.0
    flips = 0
    while flips < 1000:
        n = int(rng.integers(2, 9))
        d, m, _ = generate_scenario(Scenario("ex1a", n=n, r=1.0), rng)
        aug = augment(d, m, rng)
        G = build_gram(aug)
        for _ in range(50):
            pi = rng.integers(0, 2, n)
            U, Up = swap_naive(d.X, aug.x_prime, pi)
            ref = zeta_naive(U, Up, d.Y, d.Z, G.sigma_sq)
            stat_diff = max(stat_diff, abs(resample_statistic(G, pi) - ref))
            flips += 1
    ok = p_diff == 0.0 and stat_diff <= 1e-14
    report(9, ok, f"exact p vs 2^8 rebuild: max diff {p_diff:.1e}; resample_statistic vs "
                  f"rebuild over {flips} flips (n<=8): max diff {stat_diff:.1e}")


def test_c10_randomized_vs_exact():
    rng = np.random.default_rng(1001)
    big_b, runs, close = 10_000, 100, 0
    worst = 0.0
    for k in range(runs):
        d, m, _ = generate_scenario(Scenario("ex1a", n=8, r=float(k % 3)), rng)
        G = build_gram(augment(d, m, rng))
        gap = abs(randomized_p_value(G, big_b, rng).p_value - exact_p_value(G).p_value)
        worst = max(worst, gap)
        close += gap <= 0.02 + 1 / (big_b + 1)
    report(10, close >= 99, f"{close}/{runs} runs with |p_B - p_exact| <= 0.02 + 1/(B+1) at "
                            f"n=8, B=1e4 (need >= 99); largest gap {worst:.4f}")


def test_c11_unbiased_and_variance_bound():
    n, reps = 20, 10_000
    details, ok = [], True
    for r, seed in ((2.0, 1101), (0.0, 1102)):
        s = Scenario("ex1a", n=n, r=r)
        rng = np.random.default_rng(seed)
        z = np.empty(reps)
        for k in range(reps):
            d, m, _ = generate_scenario(s, rng)
            z[k] = zeta_hat(augment(d, m, rng))
        pop = population_zeta_mc(s, None, KernelConfig(), 1_000_000, rng)
        se = math.hypot(z.std(ddof=1) / math.sqrt(reps), pop.std_err)
        bound = variance_bound(n, max(pop.value, 0.0))
        unbiased = abs(z.mean() - pop.value) <= 4 * se
        var_ok = z.var(ddof=1) <= bound
        ok &= unbiased and var_ok
        details.append(f"r={r:g}: mean {z.mean():.5f} vs {pop.value:.5f} "
                       f"({abs(z.mean() - pop.value) / se:.2f} SE), var {z.var(ddof=1):.2e} "
                       f"<= bound {bound:.2e}")
    report(11, ok, "ex1a n=20, 1e4 reps; " + "; ".join(details))


def test_c12_scaling_and_single_gram():
    ns = np.array([100, 200, 400, 800])
    rng = np.random.default_rng(1201)
    times = []
    with threadpool_limits(1):
        for n in ns:
            d, m, _ = generate_scenario(Scenario("ex1a", n=int(n), r=0.5), rng)
            G = build_gram(augment(d, m, rng))
            best = math.inf
            for k in range(15):
                t0 = time.perf_counter()
                randomized_p_value(G, B, np.random.default_rng(k))
                best = min(best, time.perf_counter() - t0)
            times.append(best)
    slope = float(np.polyfit(np.log(ns), np.log(times), 1)[0])
    builds = []
    for k in range(5):
        d, m, _ = generate_scenario(Scenario("ex1a", n=60), np.random.default_rng(k))
        before = gram_builds.count
        aug_test(d, m, B=B, seed=k)
        builds.append(gram_builds.count - before)
    ok = 1.7 <= slope <= 2.3 and builds == [1] * 5
    ms = " ".join(f"{1e3 * t:.2f}" for t in times)
    report(12, ok, f"wall-time exponent {slope:.3f} over n=100..800 at B={B} (need [1.7, 2.3]; "
                   f"ms: {ms}); Gram builds per test {builds}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
