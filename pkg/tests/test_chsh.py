import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semantic_bell import chsh
from semantic_bell.agents import LocalHiddenVariableAgents, QuantumAgents
from semantic_bell.chsh import (
    CorrelationTable,
    OutcomeVector,
    Setting,
    bootstrap_ci,
    chsh_s,
    correlation_table,
    pair_expectation,
    running_s,
    s_odd,
    signaling_report,
)

P, M = OutcomeVector(1, 1), OutcomeVector(-1, -1)


def table(*e):
    return CorrelationTable(*e, n_trials=1, marginals=np.zeros((4, 2, 2)))


def constant_trials(n, quad=None):
    quad = quad or [(P, P)] * 4
    return [quad] * n


outcome_arrays = st.integers(min_value=1, max_value=40).flatmap(
    lambda n: arrays(np.int8, (n, 4, 2, 2), elements=st.sampled_from([-1, 1]))
)


class TestOutcomeVector:
    @pytest.mark.parametrize("bad", [0, 2, -2, True, 1.5])
    def test_rejects_non_sign(self, bad):
        with pytest.raises(ValueError):
            OutcomeVector(bad, 1)

    def test_dot_is_normalized(self):
        assert P.dot(P) == 1
        assert P.dot(M) == -1
        assert P.dot(OutcomeVector(1, -1)) == 0


class TestPairExpectation:
    def test_identical(self):
        assert pair_expectation([(P, P), (OutcomeVector(1, -1), OutcomeVector(1, -1))]) == 1

    def test_orthogonal(self):
        assert pair_expectation([(P, OutcomeVector(1, -1))]) == 0

    def test_mixed_pairs(self):
        pairs = [(P, P), (OutcomeVector(1, -1), OutcomeVector(-1, 1))]
        assert pair_expectation(pairs) == (1 + (-1)) / 2

    def test_empty(self):
        with pytest.raises(ValueError):
            pair_expectation([])

    @given(st.lists(st.tuples(*[st.sampled_from([1, -1])] * 4), min_size=1, max_size=30))
    def test_range_and_extremes(self, raw):
        pairs = [(OutcomeVector(a, b), OutcomeVector(c, d)) for a, b, c, d in raw]
        e = pair_expectation(pairs)
        assert -1 <= e <= 1
        assert (e == 1) == all(a == b for a, b in pairs)
        assert (e == -1) == all(a.word1 == -b.word1 and a.word2 == -b.word2 for a, b in pairs)


class TestChshS:
    def test_pr_pattern(self):
        assert chsh_s(table(1, -1, 1, 1)) == 4

    def test_singlet_tsirelson(self):
        h = math.sqrt(2) / 2
        assert chsh_s(table(-h, h, -h, -h)) == pytest.approx(-2 * math.sqrt(2), abs=1e-12)

    def test_arithmetic(self):
        assert chsh_s(table(0.5, 0.5, 0.5, 0.5)) == 1.0

    def test_table_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            table(1.2, 0, 0, 0)

    def test_empty_trials(self):
        with pytest.raises(ValueError):
            correlation_table(np.zeros((0, 4, 2, 2), dtype=np.int8))

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            correlation_table(np.ones((3, 4, 2), dtype=np.int8))

    def test_table_matches_pair_expectation(self, rng):
        outcomes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(50, 4, 2, 2))
        t = correlation_table(outcomes)
        for c in range(4):
            pairs = [(OutcomeVector(*map(int, o[c, 0])), OutcomeVector(*map(int, o[c, 1]))) for o in outcomes]
            assert t.expectations[c] == pytest.approx(pair_expectation(pairs), abs=1e-12)

    def test_nested_input_matches_array(self):
        quad = [(P, P), (P, M), (M, M), (OutcomeVector(1, -1), P)]
        arr = chsh.as_outcomes([quad])
        assert correlation_table([quad]).expectations == (1.0, -1.0, 1.0, 0.0)
        assert arr.dtype == np.int8 and arr.shape == (1, 4, 2, 2)

    def test_marginal_lookup(self):
        quad = [(P, M), (P, P), (M, M), (M, P)]
        t = correlation_table([quad])
        assert list(t.marginal(Setting.B, Setting.A)) == [-1, -1]
        assert list(t.marginal(Setting.B, Setting.A_PRIME)) == [-1, -1]
        assert list(t.marginal(Setting.A_PRIME, Setting.B_PRIME)) == [-1, -1]
        assert list(t.marginal(Setting.B_PRIME, Setting.A)) == [1, 1]

    @settings(max_examples=80, deadline=None)
    @given(outcome_arrays)
    def test_algebraic_bound(self, outcomes):
        assert abs(chsh_s(correlation_table(outcomes))) <= 4

    @settings(max_examples=50, deadline=None)
    @given(outcome_arrays, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, outcomes, rnd):
        perm = list(range(outcomes.shape[0]))
        rnd.shuffle(perm)
        a = chsh_s(correlation_table(outcomes))
        b = chsh_s(correlation_table(outcomes[perm]))
        assert a == pytest.approx(b, abs=1e-12)

    def test_deterministic_strategies_brute_force(self):
        # every assignment of +/-1 to (A, A', B, B'), evaluated from the raw definition
        values = []
        for a, ap, b, bp in itertools.product((1, -1), repeat=4):
            quad = [
                (OutcomeVector(a, a), OutcomeVector(b, b)),
                (OutcomeVector(a, a), OutcomeVector(bp, bp)),
                (OutcomeVector(ap, ap), OutcomeVector(b, b)),
                (OutcomeVector(ap, ap), OutcomeVector(bp, bp)),
            ]
            values.append(chsh_s(correlation_table([quad])))
        assert max(abs(v) for v in values) == 2
        assert sorted(set(values)) == [-2, 2]


class TestRunningS:
    def test_single_trial(self):
        assert running_s(constant_trials(1)) == [(1, 2.0)]

    def test_flat_for_constant_trials(self):
        series = running_s(constant_trials(7))
        assert [k for k, _ in series] == list(range(1, 8))
        assert {v for _, v in series} == {2.0}

    def test_empty(self):
        with pytest.raises(ValueError):
            running_s(np.zeros((0, 4, 2, 2), dtype=np.int8))

    @settings(max_examples=50, deadline=None)
    @given(outcome_arrays)
    def test_prefixes(self, outcomes):
        series = running_s(outcomes)
        assert series[-1][1] == pytest.approx(chsh_s(correlation_table(outcomes)), abs=1e-12)
        for k in {1, len(outcomes) // 2 or 1}:
            assert series[k - 1][1] == pytest.approx(chsh_s(correlation_table(outcomes[:k])), abs=1e-12)


class TestBootstrap:
    def test_constant_zero_width(self):
        low, high = bootstrap_ci(constant_trials(10), 200, 0.95, np.random.default_rng(0))
        assert low == high == 2.0

    def test_reproducible(self, rng):
        data = rng.choice(np.array([-1, 1], dtype=np.int8), size=(80, 4, 2, 2))
        a = bootstrap_ci(data, 500, 0.95, np.random.default_rng(42))
        b = bootstrap_ci(data, 500, 0.95, np.random.default_rng(42))
        assert a == b

    def test_contains_point_estimate(self, rng):
        data = rng.choice(np.array([-1, 1], dtype=np.int8), size=(200, 4, 2, 2))
        low, high = bootstrap_ci(data, 1000, 0.95, np.random.default_rng(1))
        assert low <= chsh_s(correlation_table(data)) <= high

    def test_blocking_does_not_change_replicates(self, rng):
        data = rng.choice(np.array([-1, 1], dtype=np.int8), size=(30, 4, 2, 2))
        a = chsh.bootstrap_s(data, 200, np.random.default_rng(3))
        b = chsh.bootstrap_s(data, 200, np.random.default_rng(3), block=90)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("n, resamples, level", [(1, 200, 0.95), (10, 50, 0.95), (10, 200, 1.0), (10, 200, 0.0)])
    def test_preconditions(self, n, resamples, level):
        with pytest.raises(ValueError):
            bootstrap_ci(constant_trials(n), resamples, level, np.random.default_rng(0))

    def test_coverage_on_lhv_data(self):
        rng = np.random.default_rng(8080)
        weights = rng.dirichlet(np.ones(16))
        agents = LocalHiddenVariableAgents(weights)
        true_s = float(agents.expected_correlations() @ chsh.CHSH_SIGNS)
        hits = 0
        for _ in range(100):
            data = agents.sample(500, rng)
            low, high = bootstrap_ci(data, 1000, 0.95, rng)
            hits += low <= true_s <= high
        assert hits >= 90


class TestSignaling:
    def test_s_odd_patterns(self):
        assert len(chsh.ODD_SIGN_PATTERNS) == 8
        # brute-force over all sign patterns with an odd number of minus signs
        e = (0.3, -0.2, 0.9, 0.1)
        best = max(
            sum(s * x for s, x in zip(signs, e))
            for signs in itertools.product((1, -1), repeat=4)
            if signs.count(-1) in (1, 3)
        )
        assert s_odd(e) == pytest.approx(best, abs=1e-12)
        assert s_odd((1, -1, 1, 1)) == 4

    def test_constant_data_no_deltas(self):
        rep = signaling_report(constant_trials(5))
        assert rep.delta_total == 0
        assert rep.s_odd == 2
        assert not rep.contextual_cbd

    def test_bob_flip_detected(self):
        # Bob at B' answers -1 when Alice is at A and +1 when she is at A'
        quad = [(P, P), (P, M), (P, P), (P, P)]
        rep = signaling_report(constant_trials(3, quad))
        assert rep.deltas[Setting.B_PRIME] == 2
        assert rep.deltas[Setting.A] == rep.deltas[Setting.B] == rep.deltas[Setting.A_PRIME] == 0
        assert rep.delta_total == 2
        assert rep.s_odd == 4
        assert not rep.contextual_cbd

    def test_as_dict(self):
        d = signaling_report(constant_trials(2)).as_dict()
        assert set(d["deltas"]) == {"A", "A'", "B", "B'"}
        assert d["contextual_cbd"] is False

    def test_empty(self):
        with pytest.raises(ValueError):
            signaling_report(np.zeros((0, 4, 2, 2), dtype=np.int8))

    @settings(max_examples=80, deadline=None)
    @given(outcome_arrays)
    def test_report_invariants(self, outcomes):
        rep = signaling_report(outcomes)
        assert all(d >= 0 for d in rep.deltas.values())
        assert rep.delta_total == pytest.approx(sum(rep.deltas.values()))
        assert rep.s_odd <= 4
        assert rep.contextual_cbd == (rep.s_odd > 2 + rep.delta_total)

    def test_quantum_is_contextual(self):
        data = QuantumAgents().sample(20_000, np.random.default_rng(5))
        rep = signaling_report(data)
        assert rep.delta_total < 0.1
        assert rep.contextual_cbd

    def test_lhv_never_contextual(self):
        rng = np.random.default_rng(99)
        flagged = 0
        for _ in range(100):
            agents = LocalHiddenVariableAgents(rng.dirichlet(np.ones(16)))
            flagged += signaling_report(agents.sample(10_000, rng)).contextual_cbd
        assert flagged <= 1

    def test_deltas_shrink_like_inverse_sqrt_n(self):
        rng = np.random.default_rng(31337)
        agents = QuantumAgents()

        def mean_delta(n, reps=30):
            return np.mean([signaling_report(agents.sample(n, rng)).delta_total for _ in range(reps)])

        ratio = mean_delta(1_000) / mean_delta(10_000)
        assert math.sqrt(10) * 0.5 <= ratio <= math.sqrt(10) * 1.5
