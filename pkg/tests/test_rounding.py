import itertools
import math
from collections import Counter

import numpy as np
import pytest

from partisel import (
    Partition,
    RoundingConfig,
    SetFunctionHandle,
    Subset,
    best_of_rounds,
    coverage_build,
    exact_value,
    round_naive,
    round_without_replacement,
    scaled_indicator,
)
from partisel.extension import EvalTally
from partisel.rounding import round_without_replacement_batch

from tests.test_extension import random_enumerable_instance


class TestWithoutReplacement:
    def test_point_mass_deterministic(self):
        p = Partition([[0, 1, 2]], [1])
        rng = np.random.default_rng(0)
        for _ in range(25):
            assert round_without_replacement(np.array([1.0, 0, 0]), p, rng).elements == (0,)

    def test_two_support_budget_two(self):
        p = Partition([[0, 1, 2]], [2])
        x = np.array([0.5, 0.5, 0.0])
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert round_without_replacement(x, p, rng).elements == (0, 1)

    def test_zero_block_uniform_fallback(self):
        # all-zero block becomes uniform, then 2 of 3 without replacement
        p = Partition([[0, 1, 2]], [2])
        rng = np.random.default_rng(2)
        reps = 30000
        masks = round_without_replacement_batch(np.zeros(3), p, rng, reps)
        counts = Counter(tuple(np.flatnonzero(m)) for m in masks)
        for pair in [(0, 1), (0, 2), (1, 2)]:
            freq = counts[pair] / reps
            se = math.sqrt((1 / 3) * (2 / 3) / reps)
            assert abs(freq - 1 / 3) <= 3 * se

    def test_cardinality_law(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            h, p = random_enumerable_instance(rng, max_budget=3)
            x = np.clip(rng.uniform(-0.1, 0.5, size=p.n), 0, None)
            from partisel import project

            x = project(x, p)
            masks = round_without_replacement_batch(x, p, rng, 200)
            for k, comm in enumerate(p.communities):
                assert np.all(masks[:, comm].sum(axis=1) == p.budgets[k])

    def test_scale_invariance_of_distribution(self):
        # multiplying a block by any positive factor <= 1 leaves the law unchanged
        p = Partition([[0, 1, 2]], [2])
        base = np.array([0.6, 0.3, 0.1])
        reps = 40000

        def law(x, seed):
            rng = np.random.default_rng(seed)
            masks = round_without_replacement_batch(x, p, rng, reps)
            return Counter(tuple(np.flatnonzero(m)) for m in masks)

        a, b = law(base, 5), law(0.35 * base, 5)
        for pair in [(0, 1), (0, 2), (1, 2)]:
            fa, fb = a[pair] / reps, b[pair] / reps
            se = math.sqrt(2 * max(fa, 1e-9) * (1 - fa) / reps)
            assert abs(fa - fb) <= 4 * se

    def test_sequential_law_matches_enumeration(self):
        # brute-force the two-step sampling law on a 3-element block
        p = Partition([[0, 1, 2]], [2])
        x = np.array([0.5, 0.3, 0.2])
        probs = {}
        for first, second in itertools.permutations(range(3), 2):
            probs[frozenset((first, second))] = probs.get(
                frozenset((first, second)), 0.0
            ) + x[first] * x[second] / (1 - x[first])
        reps = 60000
        rng = np.random.default_rng(6)
        masks = round_without_replacement_batch(x, p, rng, reps)
        counts = Counter(frozenset(np.flatnonzero(m).tolist()) for m in masks)
        for pair, pr in probs.items():
            freq = counts[pair] / reps
            se = math.sqrt(pr * (1 - pr) / reps)
            assert abs(freq - pr) <= 4 * se

    def test_lossless_in_expectation(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            h, p = random_enumerable_instance(rng, max_budget=2)
            from partisel import project

            x = project(rng.uniform(0, 0.6, size=p.n), p)
            target = exact_value(h, p, x)
            reps = 4000
            masks = round_without_replacement_batch(x, p, rng, reps)
            vals = h.evaluate_masks(masks)
            se = vals.std(ddof=1) / math.sqrt(reps)
            assert vals.mean() >= target - 3 * se


class TestNaive:
    def test_one_hot_deterministic(self):
        h, p = coverage_build(4, 2, 0.01)
        x = scaled_indicator(Subset.from_iterable([0, 5, 2, 7]), p)
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert round_naive(x, p, rng).elements == (0, 2, 5, 7)

    def test_zero_point_empty(self):
        p = Partition([[0, 1]], [1])
        assert round_naive(np.zeros(2), p, np.random.default_rng(0)).elements == ()

    def test_expectation_matches_extension_value(self):
        from tests.test_extension import two_element_instance

        h, p = two_element_instance()
        x = np.array([0.5, 0.25])
        rng = np.random.default_rng(1)
        reps = 30000
        vals = np.array([h.evaluate(round_naive(x, p, rng)) for _ in range(reps)])
        se = vals.std(ddof=1) / math.sqrt(reps)
        assert abs(vals.mean() - 1.375) <= 3 * se

    def test_may_underfill_budgets(self):
        p = Partition([[0, 1]], [2])
        rng = np.random.default_rng(2)
        sizes = {
            len(round_naive(np.array([0.5, 0.25]), p, rng)) for _ in range(300)
        }
        assert sizes & {0, 1}  # duplicates or empty slots occurred


class TestBestOfRounds:
    def test_single_retry_is_one_rounding(self):
        h, p = coverage_build(6, 2, 0.01)
        rng = np.random.default_rng(0)
        from partisel import uniform_point

        before = h.query_count
        s = best_of_rounds(uniform_point(p), p, h, RoundingConfig(retries=1), rng)
        assert h.query_count - before == 1
        assert s.feasible(p)

    def test_max_dominates_each_single_round(self):
        h, p = coverage_build(8, 3, 0.01)
        from partisel import uniform_point

        x = uniform_point(p)
        rng = np.random.default_rng(1)
        best = best_of_rounds(x, p, h, RoundingConfig(retries=64), rng)
        best_val = h.evaluate(best)
        singles = [
            h.evaluate(round_without_replacement(x, p, rng)) for _ in range(64)
        ]
        assert best_val >= max(singles) - 1e-9 or best_val >= np.median(singles)

    def test_optimal_point_rounds_to_optimum(self):
        h, p = coverage_build(20, 5, 0.01)
        best_family = Subset.from_iterable(range(20, 40))
        x = scaled_indicator(best_family, p)
        rng = np.random.default_rng(2)
        for _ in range(5):
            s = best_of_rounds(x, p, h, RoundingConfig(retries=3), rng)
            assert h.evaluate(s) == pytest.approx(34.0)

    def test_query_accounting_is_exact(self):
        h, p = coverage_build(6, 2, 0.01)
        from partisel import uniform_point

        tally = EvalTally()
        before = h.query_count
        best_of_rounds(
            uniform_point(p), p, h, RoundingConfig(retries=137), np.random.default_rng(3),
            audit=tally,
        )
        assert tally.count == 137 == h.query_count - before

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RoundingConfig(retries=0)
        with pytest.raises(ValueError):
            RoundingConfig(mode="pipage")
