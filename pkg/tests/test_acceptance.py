"""Acceptance suite: every release criterion, one pass/fail line each.

These are the long-running end-to-end checks; run them with
``pytest tests/test_acceptance.py -v``.  Each test prints its verdict
directly to the terminal (bypassing capture) so a full run reads as a
checklist.  Criterion 8 is expected to fail: with the cell-count summary
distance, the mandated terminal tolerance n*m/3 lies far below the
smallest distance any simulated dataset can achieve (the per-cell match
probability is exactly 1/4, so distances concentrate at 0.75*n*m), and
both likelihood-free baselines structurally produce zero acceptances
there.  The companion test demonstrates the intended behavior at the
lowest workable tolerance.
"""

import itertools
import math
import sys
import time

import numpy as np
import pytest
from scipy.special import logsumexp

from phylocp.abc_baselines import (
    AbcConfig,
    ToleranceStallError,
    run_abc_smc_model_selection,
    run_pmmh_abc,
)
from phylocp.changepoint import ChangePointState, PriorSpec, ProposalSpec
from phylocp.diagnostics import (
    autocorrelation,
    geweke_z,
    hpd_interval,
    summarize_chain,
    weighted_ess,
)
from phylocp.likelihood import LikelihoodEngine, SequenceData
from phylocp.pmmh import PmmhConfig, run_pmmh, visit_frequencies
from phylocp.simulate import SimulationSpec, simulate_dataset
from phylocp.smc import make_schedule, run_smc
from phylocp.tree import parse_newick

from _oracles import (
    GammaQuadrature,
    brute_site_log_likelihood,
    enumerate_sequential_proposals,
    exact_model_posterior,
)
from test_likelihood import random_tree_newick

pytestmark = pytest.mark.acceptance


def report(number: int, passed: bool, detail: str) -> bool:
    verdict = "PASS" if passed else "FAIL"
    print(f"[{verdict}] criterion {number}: {detail}", file=sys.__stdout__, flush=True)
    return passed


# ---------------------------------------------------------------------------
# Shared expensive fixtures


@pytest.fixture(scope="module")
def desk_problem(toy_tree):
    """n=4, m=10 dataset used by the evidence and trans-dimensional checks."""
    true = ChangePointState(k=1, s=(6,), theta=(0.5, 1.5))
    data = simulate_dataset(SimulationSpec(tree=toy_tree, state=true, m=10, seed=7))
    return toy_tree, data


@pytest.fixture(scope="module")
def base_chains(base_tree, base_data):
    """Three seeded PMMH runs each at g=4 and g=8 on the shipped base dataset."""
    chains = {}
    for g in (4, 8):
        for seed in (101, 102, 103):
            config = PmmhConfig(
                iterations=3600,
                n_particles=20,
                temper_steps=10,
                prior=PriorSpec(k_support=(0, 1), gamma_shape=2.0, gamma_scale=0.4),
                proposal=ProposalSpec(w_k=3, w_s=3, sigma_rate=0.25),
                g=g,
                seed=seed,
            )
            chains[(g, seed)] = run_pmmh(config, base_data, base_tree)
    return chains


BURN_IN = 500


def test_criterion_1_likelihood_oracle_equivalence(rng):
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 11))
        tree = parse_newick(random_tree_newick(n, rng))
        rate = float(rng.uniform(0.05, 5.0))
        data = SequenceData(rng.integers(0, 4, size=(n, m)).astype(np.uint8))
        engine = LikelihoodEngine(tree)
        fast = engine.site_log_likelihoods(np.array([rate]), data)[0]
        for j in range(m):
            slow = brute_site_log_likelihood(tree, 1, rate, data.x[:, j])
            worst = max(worst, abs(fast[j] - slow) / max(abs(slow), 1.0))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 10.0
    assert report(
        1, ok,
        f"pruning vs exhaustive enumeration, 100 instances: max rel err "
        f"{worst:.2e} (< 1e-10), {elapsed:.1f}s (< 10s)",
    )


def test_criterion_2_evidence_matches_quadrature(toy_tree):
    start = time.perf_counter()
    true = ChangePointState(k=0, s=(), theta=(0.8,))
    data = simulate_dataset(SimulationSpec(tree=toy_tree, state=true, m=10, seed=42))
    engine = LikelihoodEngine(toy_tree)
    prior = PriorSpec(k_support=(0,), gamma_shape=2.0, gamma_scale=0.4)
    quad = GammaQuadrature(2.0, 0.4)
    log_truth = quad.log_integral(
        engine.site_log_likelihoods(quad.nodes, data).sum(axis=1)
    )
    schedule = make_schedule(10)
    estimates = np.array([
        run_smc(0, data, engine, prior, ProposalSpec(), 100, schedule, seed=seed).log_evidence
        for seed in range(500)
    ])
    ratios = np.exp(estimates - log_truth)
    se = ratios.std() / math.sqrt(ratios.size)
    gap = abs(ratios.mean() - 1.0)
    elapsed = time.perf_counter() - start
    ok = gap < 3 * se and elapsed < 300.0
    assert report(
        2, ok,
        f"mean SMC evidence over 500 seeds / quadrature = {ratios.mean():.4f} "
        f"(gap {gap:.4f} < 3 s.e. = {3 * se:.4f}), {elapsed:.0f}s (< 300s)",
    )


def test_criterion_3_variance_collapse(base_tree, base_data):
    start = time.perf_counter()
    prior = PriorSpec(k_support=(0, 1))
    schedule = make_schedule(10)
    variances = {}
    for g in (1, 4):
        engine = LikelihoodEngine(base_tree, g=g)
        values = [
            run_smc(1, base_data, engine, prior, ProposalSpec(), 20, schedule,
                    seed=(g, 0, rep)).log_evidence
            for rep in range(50)
        ]
        variances[g] = float(np.var(values, ddof=1))
    elapsed = time.perf_counter() - start
    ok = variances[4] < variances[1] and elapsed < 1800.0
    assert report(
        3, ok,
        f"var log evidence (k=1): g=4 {variances[4]:.3f} < g=1 {variances[1]:.3f}, "
        f"{elapsed:.0f}s (< 1800s)",
    )


def test_criterion_4_model_selection(base_chains):
    g4_pass, g8_pass, details = 0, 0, []
    for seed in (101, 102, 103):
        p4 = visit_frequencies(base_chains[(4, seed)], BURN_IN).get(1, 0.0)
        p8 = visit_frequencies(base_chains[(8, seed)], BURN_IN).get(1, 0.0)
        g4_pass += p4 > 0.6
        g8_pass += 0.35 < p8 < 0.65
        details.append(f"seed {seed}: g4 {p4:.3f}, g8 {p8:.3f}")
    ok = g4_pass >= 2 and g8_pass >= 2
    assert report(
        4, ok,
        f"P(k=1|data) g=4 > 0.6 in {g4_pass}/3 seeds, g=8 in (0.35, 0.65) in "
        f"{g8_pass}/3 seeds [{'; '.join(details)}]",
    )


def test_criterion_5_changepoint_localization(base_chains):
    modes = []
    for seed in (101, 102, 103):
        summary = summarize_chain(base_chains[(4, seed)], burn_in=BURN_IN, target_k=1)
        modes.append(summary.s_mode.get("s1"))
    hits = sum(mode is not None and 20 <= mode <= 30 for mode in modes)
    ok = hits >= 2
    assert report(
        5, ok, f"posterior mode of s1 given k=1 within [20, 30] in {hits}/3 "
        f"seeds (modes {modes}, truth 25)",
    )


def test_criterion_6_rate_bias_direction(base_chains):
    means = []
    for seed in (101, 102, 103):
        summary = summarize_chain(base_chains[(4, seed)], burn_in=BURN_IN, target_k=1)
        means.append(summary.posterior_means.get("theta1"))
    hits = sum(m is not None and 0.0 < m < 0.75 for m in means)
    ok = hits >= 2
    assert report(
        6, ok,
        f"time-machine posterior mean of theta1 in (0, 0.75) in {hits}/3 seeds "
        f"(means {[f'{m:.3f}' for m in means]}, truth 0.75)",
    )


def test_criterion_7_exact_transdimensional_correctness(desk_problem):
    tree, data = desk_problem
    engine = LikelihoodEngine(tree, g=1)
    prior = PriorSpec(k_support=(0, 1), gamma_shape=2.0, gamma_scale=0.4)
    quad = GammaQuadrature(2.0, 0.4)
    exact, _, _ = exact_model_posterior(engine, data, prior, quad)

    config = PmmhConfig(
        iterations=20_000, n_particles=50, temper_steps=20,
        prior=prior, g=1, seed=5,
    )
    records = run_pmmh(config, data, tree)
    freqs = visit_frequencies(records, burn_in=1000)
    gap = max(abs(freqs.get(k, 0.0) - exact[k]) for k in (0, 1))
    ok = gap < 0.05
    assert report(
        7, ok,
        f"PMMH visit frequencies vs quadrature posterior: max gap {gap:.4f} "
        f"(< 0.05; exact P(k=1) {exact[1]:.4f}, chain {freqs.get(1, 0.0):.4f})",
    )


def test_criterion_8_abc_at_mandated_tolerance(base_tree, base_data):
    # Terminal tolerance n*m/3, as mandated.  The summary distance between
    # the observations and any independent simulation concentrates at
    # 0.75*n*m (match probability per cell is exactly 1/4), so no simulated
    # dataset ever lands within n*m/3 and both methods structurally fail.
    # This criterion is therefore expected to FAIL; the companion test below
    # shows the intended behavior at the lowest workable tolerance.
    prior = PriorSpec(k_support=(0, 1), gamma_shape=2.0, gamma_scale=0.4)
    outcomes = {}
    try:
        records = run_pmmh_abc(
            AbcConfig(prior=prior, seed=31, iterations=400), base_data, base_tree
        )
        outcomes["pmmh-abc"] = visit_frequencies(records, burn_in=50).get(1, 0.0)
    except (RuntimeError, ToleranceStallError) as err:
        outcomes["pmmh-abc"] = err
    try:
        result = run_abc_smc_model_selection(
            AbcConfig(prior=prior, seed=32, n_particles=200, steps=8,
                      max_generation_attempts=100_000),
            base_data, base_tree,
        )
        outcomes["abc-smc"] = result.model_probs.get(1, 0.0)
    except ToleranceStallError as err:
        outcomes["abc-smc"] = err
    ok = all(
        isinstance(v, float) and abs(v - 0.5) < 0.15 for v in outcomes.values()
    )
    assert report(
        8, ok,
        f"|P(k=1) - 0.5| < 0.15 at terminal tolerance nm/3: {outcomes} "
        "(unreachable tolerance: distances concentrate at 0.75*n*m)",
    )


def test_criterion_8_companion_abc_at_workable_tolerance(base_tree, base_data):
    # The behavior the terminal tolerance was meant to elicit - ABC barely
    # separates the models - at the lowest tolerance the distance floor
    # allows (0.7 * n * m).
    prior = PriorSpec(k_support=(0, 1), gamma_shape=2.0, gamma_scale=0.4)
    tol = 0.7 * base_data.n * base_data.m
    records = run_pmmh_abc(
        AbcConfig(prior=prior, seed=31, iterations=400, terminal_tolerance=tol),
        base_data, base_tree,
    )
    p_pmmh = visit_frequencies(records, burn_in=50).get(1, 0.0)
    result = run_abc_smc_model_selection(
        AbcConfig(prior=prior, seed=32, n_particles=300, steps=8,
                  terminal_tolerance=tol, max_generation_attempts=400_000),
        base_data, base_tree,
    )
    p_toni = result.model_probs.get(1, 0.0)
    ok = abs(p_pmmh - 0.5) < 0.15 and abs(p_toni - 0.5) < 0.15
    assert report(
        8, ok,
        f"companion at tolerance 0.7*n*m: PMMH-ABC P(k=1) {p_pmmh:.3f}, "
        f"ABC-SMC P(k=1) {p_toni:.3f} (both within 0.5 +/- 0.15)",
    )


def test_criterion_9_proposal_exactness():
    spec_by_w = {w: ProposalSpec(w_s=w, w_k=w) for w in (3, 5)}
    worst = 0.0
    checked = 0
    for w, spec in spec_by_w.items():
        # model-index windows over every support [0, top]
        for top in range(0, 4):
            prior = PriorSpec(k_support=tuple(range(top + 1)))
            half = (w - 1) // 2
            for k in prior.k_support:
                window = [
                    v for v in range(k - half, k + half + 1)
                    if prior.k_min <= v <= prior.k_max
                ]
                total = sum(1.0 / len(window) for _ in window)
                worst = max(worst, abs(total - 1.0))
                checked += 1
        # sequential change-point proposals, exhaustive over all states
        for m in range(2, 21):
            for k in (1, 2, 3):
                if k > m - 1:
                    continue
                for s in itertools.combinations(range(2, m + 1), k):
                    masses = enumerate_sequential_proposals(list(s), spec, m)
                    worst = max(worst, abs(sum(masses.values()) - 1.0))
                    checked += 1
    ok = worst < 1e-12
    assert report(
        9, ok,
        f"proposal masses sum to 1 over {checked} enumerated windows: "
        f"max deviation {worst:.2e} (< 1e-12)",
    )


def test_criterion_10_diagnostics_fixtures():
    checks = []
    checks.append(weighted_ess([1.0, 1.0, 2.0]) == pytest.approx(16.0 / 6.0))
    checks.append(weighted_ess(np.ones(40)) == pytest.approx(40.0))
    series = np.tile([0.0, 1.0], 2500)
    checks.append(autocorrelation(series, 0) == 1.0)
    checks.append(abs(autocorrelation(series, 1) + 1.0) < 2 / series.size * 10)
    noise = np.random.default_rng(0).normal(size=10_000)
    checks.append(abs(autocorrelation(noise, 25)) < 0.03)
    checks.append(abs(geweke_z(np.arange(10_000.0))) > 10)
    flags = sum(
        abs(geweke_z(np.random.default_rng(seed).normal(size=10_000))) >= 3
        for seed in range(200)
    )
    checks.append(flags <= 2)
    lo, hi = hpd_interval(np.arange(1.0, 101.0), mass=0.95)
    checks.append((lo, hi) == (1.0, 95.0))
    for size in (50, 200):
        samples = np.sort(np.random.default_rng(size).gamma(2.0, 0.4, size=size))
        lo, hi = hpd_interval(samples, mass=0.9)
        needed = math.ceil(0.9 * size)
        best = min(
            samples[i + needed - 1] - samples[i]
            for i in range(size - needed + 1)
        )
        checks.append(hi - lo == pytest.approx(best))
    ok = all(checks)
    assert report(
        10, ok,
        f"ESS/ACF/Geweke/HPD fixtures: {sum(checks)}/{len(checks)} checks hold "
        "(HPD minimality by exhaustive window scan)",
    )


def test_act1_workflow_smoke(tmp_path):
    # End-to-end smoke on the bundled 6-taxon stand-in; no numeric claims.
    from phylocp.cli import EXIT_OK, main

    out = tmp_path / "act1"
    assert main(["simulate", "--preset", "act1-workflow", "--out", str(out)]) == EXIT_OK
    run_config = tmp_path / "run.json"
    run_config.write_text(
        '{"n_particles": 6, "temper_steps": 3, "g": 4, '
        '"prior": {"k_support": [0, 1, 2], "gamma_shape": 1.0, "gamma_scale": 0.3}}'
    )
    code = main([
        "infer", "--tree", str(out / "tree.nwk"),
        "--data", str(out / "sequences.fasta"), "--config", str(run_config),
        "--method", "pmmh", "--iterations", "8", "--seed", "1",
        "--out", str(tmp_path / "run"),
    ])
    assert code == EXIT_OK
    code = main([
        "diagnose", "--chain", str(tmp_path / "run" / "chain.csv"),
        "--summary", str(tmp_path / "run" / "summary.json"),
        "--burn-in", "2", "--out", str(tmp_path / "diag"),
    ])
    assert code == EXIT_OK
    print("[PASS] act1-workflow smoke: simulate -> infer -> diagnose end-to-end",
          file=sys.__stdout__, flush=True)
