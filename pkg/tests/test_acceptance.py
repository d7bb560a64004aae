"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see only these lines, or
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest
from scipy import integrate

from prefatt import cli
from prefatt.hubs import hub_scaling_experiment, overtaking_probability, persistence_experiment
from prefatt.process import couple_occupation_times, simulate_distribution, simulate_vertex_degrees_many
from prefatt.rates import (
    RateParams,
    SmoothPath,
    approx_J_partition,
    dyadic_partition,
    hub_shape_path,
    lambda_uv_star,
    mdp_occ_rate,
    mdp_occ_threshold,
    mdp_rate_I,
    psi_fn,
    script_I,
    xi_star,
)
from prefatt.rules import Affine, Constant, PowerLaw, phi, psi, psi_inverse_floor, varphi
from prefatt.streams import run_replicas
from prefatt.theory import (
    LimitDistribution,
    expected_distribution_recursion,
    log_mu,
    mu_array,
    stretched_exp_asymptote,
)

SEED = 20240601


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail} [{time.perf_counter() - start:.1f}s]"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def se(x):
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(x.size))


def test_01_mu_tail_identity(report):
    worst = 0.0
    for rule in (Constant(1), PowerLaw(1, 0.4), Affine(0.5)):
        limit = LimitDistribution(rule)
        for K in (0, 1, 10, 100, 1000, 10_000):
            worst = max(worst, abs(math.fsum(mu_array(rule, K)) + limit.tail(K) - 1))
    w = mu_array(Constant(1), 10_000)
    exact = all(w[k] == 2.0 ** (-k - 1) for k in range(w.size))
    report(1, worst < 1e-12 and exact, f"max |sum mu + tail - 1| = {worst:.2e}, Constant(1) powers of 2 exact: {exact}")


def test_02_recursion_vs_simulation(report):
    rule = PowerLaw(1, 0.4)
    cps = [10, 100, 1000]
    reps = 10_000
    exp = expected_distribution_recursion(rule, cps[-1], k_max=256, checkpoints=cps)
    runs = run_replicas(lambda s: simulate_distribution(rule, cps[-1], cps, s), SEED, reps, 1)
    worst, checked = 0.0, 0
    for i, n in enumerate(cps):
        expected = exp[n]
        props = np.zeros((reps, expected.size))
        for r, run in enumerate(runs):
            p = run.states[i].proportions
            props[r, : p.size] = p
        for k in np.flatnonzero(expected > 1e-3):
            z = abs(props[:, k].mean() - expected[k]) / max(se(props[:, k]), 1e-15)
            worst = max(worst, z)
            checked += 1
    report(2, worst <= 3, f"{checked} (n, k) cells, max |z| = {worst:.2f} (need <= 3)")


def test_03_degree_distribution_convergence(report):
    rep = cli.degree_dist_report(PowerLaw(1, 0.4), 10**6, [10**4, 10**5, 10**6], 20, SEED, 1)
    tv = [m for _, m, _ in rep["tv"]]
    ok = tv[-1] <= 0.02 and all(b < a for a, b in zip(tv, tv[1:]))
    report(3, ok, "mean TV at 1e4, 1e5, 1e6 = " + ", ".join(f"{t:.4f}" for t in tv))


def test_04_stretched_exponential_tail(report):
    k = 10**4
    ratio = log_mu(PowerLaw(1, 0.5), k) / stretched_exp_asymptote(1, 0.5, k)
    report(4, 0.9 <= ratio <= 1.1, f"log mu_k / asymptote at k=1e4 = {ratio:.4f}")


def test_05_poisson_outdegree(report):
    rep = cli.outdegree_report(Constant(1), 10**5, 20, SEED, 1)
    report(5, rep["tv"] <= 0.02, f"TV(outdegree, Poisson(1)) = {rep['tv']:.4f} over {rep['vertices']} vertices")


def test_06_law_of_large_numbers(report):
    rule = PowerLaw(1, 0.4)
    n = 10**7
    d = simulate_vertex_degrees_many(rule, 1, [n], SEED, 1000, 1)[:, 0]
    ratio = np.asarray(phi(rule, d.astype(float))) / psi(n)
    m = float(ratio.mean())
    report(6, 0.95 <= m <= 1.05, f"mean Phi(Z[1,n])/Psi(n) at n=1e7 = {m:.4f} (SE {se(ratio):.4f})")


def test_07_martingale_clt(report):
    # start late enough that the 1/i^2 discreteness of the variance is negligible
    rule = Constant(1)
    m = 100
    s = psi(m)
    n = psi_inverse_floor(s + 10)
    span = psi(n) - s
    d = simulate_vertex_degrees_many(rule, m, [n], SEED, 10_000, 1)[:, 0]
    M = np.asarray(phi(rule, d.astype(float))) - span
    mean_ok = abs(M.mean()) <= 3 * se(M)
    vr = float(M.var(ddof=1) / varphi(rule, span))
    report(7, mean_ok and 0.9 <= vr <= 1.1,
           f"t-s = {span:.4f}: mean M = {M.mean():.4f} (3 SE = {3 * se(M):.4f}), Var/varphi = {vr:.4f}")


def test_08_coupling_bound(report):
    rule = PowerLaw(1, 0.3)
    reals = run_replicas(lambda s: couple_occupation_times(rule, 1, 500, s), SEED, 10_000, 1)
    d = np.array([r.discrepancy for r in reals])
    K = reals[0].K
    parts, ok = [], True
    for lm in (1.0, 2.0):
        hit = (d >= lm + math.sqrt(2 * K)).astype(float)
        p = float(hit.mean())
        bound = 4 * math.exp(-lm * lm / (2 * K))
        slack = 3 * se(hit) if hit.any() else 0.0
        ok &= p <= bound + slack
        parts.append(f"lambda={lm:g}: P = {p:.4f} vs bound {bound:.4f}")
    report(8, ok, f"K = {K:.4f}; " + "; ".join(parts))


def test_09_rate_functions(report):
    # (a) transform against the closed form at alpha = 0
    worst_a = 0.0
    for delta in np.geomspace(0.01, 10, 20):
        for t in np.geomspace(0.01, 50, 20):
            worst_a = max(worst_a, abs(lambda_uv_star(1.0, 1.0 + delta, t, 0.0) - delta * xi_star(t / delta)))
    # (b) I of the hub shape
    worst_b = max(
        abs(mdp_rate_I(hub_shape_path(a), RateParams(a)) - 0.5 * (1 - a) / (1 - 2 * a))
        for a in (0.0, 0.1, 0.25, 0.4)
    )
    # (c) dyadic refinement of J on x(t) = t^2 against quadrature
    alpha = 0.25
    e = alpha / (1 - alpha)
    path = SmoothPath(lambda t: np.asarray(t, dtype=float) ** 2, lambda t: 2 * t, 1.0, 2.0)
    J = integrate.quad(lambda t: (t * t) ** e * psi_fn(2 * t), 0, 1, epsabs=1e-15, epsrel=1e-13, limit=500)[0]
    approx = [approx_J_partition(path, dyadic_partition(0, 1, k), alpha) for k in range(4, 13)]
    err_c = abs(approx[-1] - J)
    # (d) branches meet at the threshold
    worst_d = 0.0
    for a, c, f0, v in [(0, 1, 1, 1), (0.25, 2, 0.5, 3), (0.4, 0.7, 1, 0.5)]:
        p = RateParams(a, c, f0)
        ts = mdp_occ_threshold(v, p)
        quad = ts * ts / (2 * script_I(0, v, a))
        lin = p.boundary_weight * ts - 0.5 * script_I(0, v, a) * p.boundary_weight**2
        worst_d = max(worst_d, abs(quad - lin), abs(mdp_occ_rate(0, v, ts, p) - quad))
    ok = worst_a <= 1e-8 and worst_b <= 1e-10 and err_c <= 1e-4 and worst_d <= 1e-9
    report(9, ok, f"(a) {worst_a:.1e} (b) {worst_b:.1e} (c) |approx_J - J| at 2^12 cells = {err_c:.1e} "
                  f"(d) {worst_d:.1e}")


def test_10_dichotomy(report):
    N = 10**6
    weak = persistence_experiment(PowerLaw(1, 0.3), N, 200, SEED, 1)
    med = weak.median_hub
    weak_ok = bool(np.all(np.diff(med) > 0))
    strong = persistence_experiment(PowerLaw(1, 0.7), N, 200, SEED, 1)
    same = strong.fraction_same(1, 2)
    report(10, weak_ok and same >= 0.8,
           f"weak median hub at {weak.checkpoints.tolist()} = {med.tolist()}; "
           f"strong same hub at N^(3/4) and N in {same:.3f} of replicas (need >= 0.8)")


def test_11_overtaking(report):
    est = overtaking_probability(Constant(1), 1, 2, 10**5, 10_000, SEED, 1)
    report(11, 0.47 <= est.estimate <= 0.53,
           f"estimate = {est.estimate:.4f} (SE {est.stderr:.4f}), need [0.47, 0.53]")


def test_12_hub_scaling(report):
    parts, ok = [], True
    for a, rule in ((0.0, Constant(1)), (0.25, PowerLaw(1, 0.25))):
        row = hub_scaling_experiment(rule, [10**7], 40, SEED, 1).as_dicts()[0]
        r = row["ratio_offset"]
        ok &= 0.5 <= r <= 2.0
        parts.append(f"alpha={a}: offset ratio {r:.3f}")
    report(12, ok, "; ".join(parts) + " (band [0.5, 2])")


def test_13_determinism(report, tmp_path, monkeypatch):
    monkeypatch.delenv("PREFATT_SEED", raising=False)
    commands = [
        ["predict", "--rule", "power:gamma=1,alpha=0.4", "--n", "1000"],
        ["simulate", "--rule", "power:gamma=1,alpha=0.4", "--n", "20000", "--replicas", "3"],
        ["degree-dist", "--rule", "power:gamma=1,alpha=0.4", "--n", "100000", "--replicas", "20"],
        ["outdegree", "--rule", "const:c=1", "--n", "20000", "--replicas", "3"],
        ["evolution", "--rule", "power:gamma=1,alpha=0.4", "--n", "100000", "--replicas", "5"],
        ["clock", "--rule", "power:gamma=1,alpha=0.4", "--t-max", "5", "--replicas", "5"],
        ["couple", "--rule", "power:gamma=1,alpha=0.3", "--j-max", "100", "--replicas", "20"],
        ["hub", "--rule", "power:gamma=1,alpha=0.7", "--n", "10000", "--replicas", "5"],
        ["race", "--rule", "const:c=1", "--n", "10000", "--replicas", "50"],
        ["scaling", "--rule", "const:c=1", "--n-grid", "1000,10000", "--replicas", "5"],
    ]
    mismatched = []
    for fmt in ("csv", "json"):
        for argv in commands:
            outs = []
            for run_id, threads in (("a", "1"), ("b", "2")):
                out = tmp_path / fmt / argv[0] / run_id
                code = cli.run([*argv, "--seed", "7", "--threads", threads, "--format", fmt, "--out", str(out)])
                assert code == 0
                outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
            if outs[0] != outs[1] or not outs[0]:
                mismatched.append(f"{argv[0]}/{fmt}")
    report(13, not mismatched, f"{2 * len(commands)} command runs repeated, mismatches: {mismatched or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
