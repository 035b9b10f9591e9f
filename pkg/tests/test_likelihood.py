import math

import numpy as np
import pytest

from phylocp.changepoint import ChangePointState, segment_bounds
from phylocp.likelihood import LikelihoodEngine, SequenceData, complexity_probe
from phylocp.simulate import SimulationSpec, simulate_dataset
from phylocp.substitution import transition_matrix
from phylocp.tree import parse_newick

from _oracles import brute_site_log_likelihood


def random_tree_newick(n_leaves, rng):
    """Random binary topology with lengths in (0.05, 2)."""
    items = [f"L{i}" for i in range(n_leaves)]
    while len(items) > 1:
        i, j = sorted(rng.choice(len(items), size=2, replace=False))
        right = items.pop(j)
        left = items.pop(i)
        items.append(
            f"({left}:{rng.uniform(0.05, 2.0):.4f},{right}:{rng.uniform(0.05, 2.0):.4f})"
        )
    return items[0] + ";"


class TestSiteLogLikelihood:
    def test_two_leaf_closed_form(self, rng):
        tree = parse_newick("(A:1.0,B:1.0);")
        engine = LikelihoodEngine(tree)
        for rate in (0.3, 0.8, 2.5):
            mat = transition_matrix(rate, 1.0)
            for x1 in range(4):
                for x2 in range(4):
                    data = SequenceData(np.array([[x1], [x2]], dtype=np.uint8))
                    direct = math.log(
                        sum(0.25 * mat[r, x1] * mat[r, x2] for r in range(4))
                    )
                    got = engine.site_log_likelihood(rate, data, 0)
                    assert got == pytest.approx(direct, rel=1e-12)

    def test_five_leaf_exhaustive_enumeration(self, rng):
        tree = parse_newick(random_tree_newick(5, rng))
        engine = LikelihoodEngine(tree)
        for _ in range(10):
            column = rng.integers(0, 4, size=5)
            data = SequenceData(column.reshape(-1, 1))
            got = engine.site_log_likelihood(0.6, data, 0)
            want = brute_site_log_likelihood(tree, 1, 0.6, column)
            assert got == pytest.approx(want, rel=1e-10)

    def test_zero_rate_degeneracy(self):
        tree = parse_newick("((A:1,B:1):1,(C:1,D:1):1);")
        engine = LikelihoodEngine(tree)
        same = SequenceData(np.zeros((4, 1), dtype=np.uint8))
        assert engine.site_log_likelihood(0.0, same, 0) == pytest.approx(math.log(0.25))
        mixed = SequenceData(np.array([[0], [0], [0], [1]], dtype=np.uint8))
        assert engine.site_log_likelihood(0.0, mixed, 0) == -math.inf

    def test_batched_rates_agree_with_scalar(self, rng):
        tree = parse_newick(random_tree_newick(6, rng))
        engine = LikelihoodEngine(tree)
        data = SequenceData(rng.integers(0, 4, size=(6, 7)).astype(np.uint8))
        rates = np.array([0.2, 0.9, 1.7])
        batch = engine.site_log_likelihoods(rates, data)
        for r, rate in enumerate(rates):
            for j in range(7):
                assert batch[r, j] == pytest.approx(
                    engine.site_log_likelihood(rate, data, j), rel=1e-12
                )

    def test_mismatched_leaf_count_rejected(self, base_tree):
        engine = LikelihoodEngine(base_tree)
        with pytest.raises(ValueError, match="leaves"):
            engine.site_log_likelihoods(
                np.array([1.0]), SequenceData(np.zeros((3, 5), dtype=np.uint8))
            )


class TestSegmentedLogLikelihood:
    def test_no_changepoint_is_column_sum(self, toy_tree, rng):
        engine = LikelihoodEngine(toy_tree)
        data = SequenceData(rng.integers(0, 4, size=(4, 12)).astype(np.uint8))
        state = ChangePointState(k=0, s=(), theta=(0.7,))
        total = engine.segmented_log_likelihood(state, data)
        per_site = sum(
            engine.site_log_likelihood(0.7, data, j) for j in range(12)
        )
        assert total == pytest.approx(per_site, rel=1e-12)

    def test_equal_rates_collapse(self, toy_tree, rng):
        engine = LikelihoodEngine(toy_tree)
        data = SequenceData(rng.integers(0, 4, size=(4, 20)).astype(np.uint8))
        flat = ChangePointState(k=0, s=(), theta=(0.9,))
        split = ChangePointState(k=2, s=(5, 13), theta=(0.9, 0.9, 0.9))
        assert engine.segmented_log_likelihood(split, data) == pytest.approx(
            engine.segmented_log_likelihood(flat, data), rel=1e-12
        )

    def test_base_dataset_matches_naive_loop(self, base_tree, base_data):
        engine = LikelihoodEngine(base_tree)
        state = ChangePointState(k=1, s=(25,), theta=(0.75, 0.85))
        got = engine.segmented_log_likelihood(state, base_data)
        # site 25 starts the second segment: 24 sites at rate 1, 26 at rate 2
        naive = sum(
            engine.site_log_likelihood(0.75, base_data, j) for j in range(24)
        ) + sum(
            engine.site_log_likelihood(0.85, base_data, j) for j in range(24, 50)
        )
        assert got == pytest.approx(naive, rel=1e-12)

    def test_segment_bounds_cover_all_sites(self):
        bounds = segment_bounds((25,), 50)
        assert bounds == [(0, 24), (24, 50)]
        bounds = segment_bounds((2, 50), 50)
        assert bounds == [(0, 1), (1, 49), (49, 50)]
        for s, m in [((25,), 50), ((2, 3, 4), 10), ((), 5)]:
            spans = segment_bounds(s, m)
            covered = [j for a, b in spans for j in range(a, b)]
            assert covered == list(range(m))

    def test_block_permutation_invariance(self, toy_tree, rng):
        # identical columns everywhere: permuting the rates together with
        # equal-length segment boundaries cannot change the total
        engine = LikelihoodEngine(toy_tree)
        column = rng.integers(0, 4, size=4)
        data = SequenceData(np.repeat(column.reshape(-1, 1), 12, axis=1))
        a = ChangePointState(k=2, s=(5, 9), theta=(0.4, 1.1, 2.0))
        b = ChangePointState(k=2, s=(5, 9), theta=(2.0, 0.4, 1.1))
        assert engine.segmented_log_likelihood(a, data) == pytest.approx(
            engine.segmented_log_likelihood(b, data), rel=1e-12
        )

    def test_empty_data(self, toy_tree):
        engine = LikelihoodEngine(toy_tree)
        data = SequenceData(np.zeros((4, 0), dtype=np.uint8))
        state = ChangePointState(k=0, s=(), theta=(0.7,))
        assert engine.segmented_log_likelihood(state, data) == 0.0


class TestTimeMachine:
    def test_g1_identical_to_exact(self, base_tree, base_data):
        exact = LikelihoodEngine(base_tree, g=1)
        state = ChangePointState(k=1, s=(25,), theta=(0.75, 0.85))
        assert exact.time_machine_log_likelihood(
            state, base_data
        ) == exact.segmented_log_likelihood(state, base_data)

    @pytest.mark.parametrize("g", [2, 3, 4, 6, 8])
    def test_matches_boundary_enumeration(self, base_tree, g, rng):
        engine = LikelihoodEngine(base_tree, g=g)
        for _ in range(4):
            rate = rng.uniform(0.1, 2.0)
            column = rng.integers(0, 4, size=8)
            data = SequenceData(column.reshape(-1, 1))
            got = engine.site_log_likelihoods(np.array([rate]), data)[0, 0]
            want = brute_site_log_likelihood(base_tree, g, rate, column)
            assert got == pytest.approx(want, rel=1e-10)

    def test_g_equal_n_keeps_sibling_coupling(self, base_tree, rng):
        # with every internal node removed, sibling leaves still share their
        # marginalized parent, so the value is the enumeration answer rather
        # than an independent-leaves product (1/4)^n
        engine = LikelihoodEngine(base_tree, g=8)
        column = np.zeros(8, dtype=np.uint8)  # identical states: strongest coupling
        data = SequenceData(column.reshape(-1, 1))
        got = engine.site_log_likelihoods(np.array([0.75]), data)[0, 0]
        want = brute_site_log_likelihood(base_tree, 8, 0.75, column)
        assert got == pytest.approx(want, rel=1e-10)
        assert abs(got - 8 * math.log(0.25)) > 1.0

    def test_g_out_of_range(self, base_tree):
        with pytest.raises(ValueError):
            LikelihoodEngine(base_tree, g=0)
        with pytest.raises(ValueError):
            LikelihoodEngine(base_tree, g=9)

    def test_truncation_error_vanishes_with_long_top_branches(self, rng):
        # stretch the branches that cross into the removed region: the
        # boundary states then really are stationary and the approximation
        # becomes exact
        text = (
            "(((A:1.0,B:1.0):1.0,(C:1.0,D:1.0):1.0):50.0,"
            "((E:1.0,F:1.0):1.0,(G:1.0,H:1.0):1.0):50.0);"
        )
        tree = parse_newick(text)
        # g=2 removes the root; nodes 11 and 14 hang off it via 50-long edges
        data = SequenceData(rng.integers(0, 4, size=(8, 30)).astype(np.uint8))
        state = ChangePointState(k=1, s=(12,), theta=(0.6, 1.2))
        exact = LikelihoodEngine(tree, g=1).segmented_log_likelihood(state, data)
        trunc = LikelihoodEngine(tree, g=2).time_machine_log_likelihood(state, data)
        assert abs(exact - trunc) < 1e-6


class TestNumericsAndThreads:
    def test_log_space_safety_large_problem(self, rng):
        newick = random_tree_newick(64, rng)
        tree = parse_newick(newick)
        state = ChangePointState(k=1, s=(5000,), theta=(0.8, 1.3))
        data = simulate_dataset(
            SimulationSpec(tree=tree, state=state, m=10_000, seed=5)
        )
        engine = LikelihoodEngine(tree)
        total = engine.segmented_log_likelihood(state, data)
        assert np.isfinite(total)

    def test_thread_count_invariance_is_bitwise(self, base_tree, base_data):
        rates = np.array([0.4, 0.9, 1.6])
        single = LikelihoodEngine(base_tree, n_threads=1).site_log_likelihoods(
            rates, base_data
        )
        for n_threads in (2, 3, 7):
            multi = LikelihoodEngine(
                base_tree, n_threads=n_threads
            ).site_log_likelihoods(rates, base_data)
            assert np.array_equal(single, multi)


class TestComplexityProbe:
    def test_doubling_sites_roughly_doubles_time(self, base_tree, base_truth):
        small = simulate_dataset(
            SimulationSpec(tree=base_tree, state=base_truth, m=4000, seed=1)
        )
        big = simulate_dataset(
            SimulationSpec(tree=base_tree, state=base_truth, m=8000, seed=1)
        )
        engine = LikelihoodEngine(base_tree)
        t_small = complexity_probe(engine, small, 0.8, repeats=5)
        t_big = complexity_probe(engine, big, 0.8, repeats=5)
        assert 1.0 < t_big / t_small < 3.0

    def test_full_truncation_is_faster(self, base_tree, base_truth):
        data = simulate_dataset(
            SimulationSpec(tree=base_tree, state=base_truth, m=20_000, seed=2)
        )
        t_exact = complexity_probe(LikelihoodEngine(base_tree, g=1), data, 0.8, repeats=5)
        t_trunc = complexity_probe(LikelihoodEngine(base_tree, g=8), data, 0.8, repeats=5)
        assert t_trunc < t_exact
