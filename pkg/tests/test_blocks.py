import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from berrymix.blocks import (
    BlockPartition,
    BoundedSummandBlocker,
    GapBlocker,
    TwoStepBlocker,
    block_covariance_matrix,
    block_sums,
    block_third_moments,
    bounded_summand_constants,
    build_bounded_summand,
    build_two_step,
    build_with_gaps,
    exceptional_set,
    gap_remainder,
    inter_block_covariance_sum,
)
from berrymix.exceptions import DegenerateVarianceError, InfeasibleParametersError
from berrymix.mixing import alpha_profile
from berrymix.processes import IID, CovarianceLedger, Distribution, InhomogeneousMarkov, generate


def iid_ledger(N, var=1.0):
    return CovarianceLedger(bands=np.full((1, N), float(var)))


def random_ledger(rng, N, L=3):
    """Moving-average ledger with random positive weights and scales."""
    w = rng.uniform(0.2, 1.0, L + 1)
    a = rng.uniform(0.5, 2.0, N)
    band = np.array([w[: L + 1 - h] @ w[h:] for h in range(L + 1)])
    bands = np.zeros((L + 1, N))
    for h in range(L + 1):
        bands[h, : N - h] = band[h] * a[: N - h] * a[h:]
    return CovarianceLedger(bands=bands)


def doeblin_markov(seed, S=3, delta=0.3):
    rng = np.random.default_rng(seed)
    mats = tuple(delta / S + (1 - delta) * rng.dirichlet(np.ones(S), S) for _ in range(2))
    return InhomogeneousMarkov(rng.dirichlet(np.ones(S)), mats, np.array([-1.0, 0.0, 2.0])[:S])


class TestExceptional:
    def test_examples(self):
        assert exceptional_set([1.0, 1.0, 0.5], 2.0) == ()
        assert exceptional_set([1.0, 5.0, 1.0], 2.0) == (1,)

    def test_counting(self):
        # sum of moments <= M forces |E_tau| <= M / tau
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rng.pareto(1.5, 500)
            for tau in (1.0, 4.0, 16.0):
                assert len(exceptional_set(m, tau)) <= m.sum() / tau


class TestTwoStep:
    def test_iid_example(self):
        part = build_two_step(iid_ledger(12), None, 2.0)
        assert part.blocks == ((0, 3), (4, 7), (8, 11))
        assert part.k_N == 3

    def test_no_exceptional_is_step_one(self):
        led = iid_ledger(12)
        a = build_two_step(led, np.ones(12), 2.0)
        b = build_two_step(led, None, 2.0)
        assert a.blocks == b.blocks and a.exceptional == ()

    def test_reinsertion_nearest_ties_left(self):
        m = np.ones(12)
        m[[0, 5, 6]] = 10.0
        part = build_two_step(iid_ledger(12), m, 1.5)
        # regular groups 1-3 | 4,7,8 | 9-11; 0 joins 1, 5 joins 4, 6 joins 7
        assert part.blocks == ((0, 3), (4, 8), (9, 11))
        assert part.exceptional == (0, 5, 6)

    def test_reinsertion_tie_goes_left(self):
        m = np.ones(12)
        m[3] = 10.0
        part = build_two_step(iid_ledger(12), m, 1.5)
        # 3 is equidistant from 2 (first block) and 4 (second block)
        assert part.blocks == ((0, 3), (4, 6), (7, 9), (10, 11))

    def test_degenerate(self):
        with pytest.warns(UserWarning):
            part = build_two_step(iid_ledger(3), None, 2.0)
        assert part.degenerate and part.k_N == 1
        with pytest.raises(DegenerateVarianceError):
            build_two_step(iid_ledger(3), None, 2.0, strict=True)

    def test_variances_and_count_on_doeblin_chains(self):
        for seed in range(8):
            spec = doeblin_markov(seed)
            N = 200
            led = spec.ledger(N)
            tau = 3.0
            part = build_two_step(led, None, tau)
            part.check(N)
            v = np.array(part.block_variances)
            assert np.all(v[:-1] >= tau**2 * (1 - 1e-9))
            # each block overshoots tau^2 by at most one index's contribution
            cap = max(led.interval_variance(i, j) for i, j in part.blocks)
            assert v.max() <= cap
            c = cap / tau**2
            V = v.sum()
            assert V / (c * tau**2) <= part.k_N <= V / tau**2 + 1
            # inter-block covariance only changes the total by a bounded factor
            assert V / 2 <= led.total() <= 3 * V

    @settings(max_examples=100, deadline=None)
    @given(st.integers(4, 80), st.floats(0.5, 4.0), st.integers(0, 10**6))
    def test_partition_property(self, N, tau, seed):
        rng = np.random.default_rng(seed)
        led = random_ledger(rng, N)
        m = rng.pareto(1.0, N)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            part = build_two_step(led, m, tau)
        part.check(N)
        if not part.degenerate:
            assert all(v >= tau**2 * (1 - 1e-9) for v in part.block_variances[:-1]) or part.exceptional


class TestGaps:
    def test_beta_to_zero_gap_length_one(self):
        part = build_with_gaps(iid_ledger(100), 1.0, 1e-12)
        assert all(hi == lo for lo, hi in part.gaps)

    def test_lengths_iid(self):
        N = 10_000
        part = build_with_gaps(iid_ledger(N), 1.5, 0.5)
        s = math.sqrt(N)
        blens = [hi - lo + 1 for lo, hi in part.blocks[:-1]]
        glens = [hi - lo + 1 for lo, hi in part.gaps]
        assert all(L == math.ceil(s**1.5) for L in blens)
        assert all(L == math.ceil(s**0.5) for L in glens)
        assert np.mean(blens) / np.mean(glens) == pytest.approx(s, rel=0.02)
        assert part.tau == pytest.approx(s**0.75)

    def test_infeasible(self):
        with pytest.raises(InfeasibleParametersError):
            build_with_gaps(iid_ledger(50), 0.5, 1.0)
        # first block eats almost everything, leaving less than the gap target
        with pytest.raises(InfeasibleParametersError):
            build_with_gaps(iid_ledger(10), 1.9, 1.8)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(20, 300), st.floats(0.6, 1.9), st.floats(0.05, 0.5), st.integers(0, 10**6))
    def test_partition_property(self, N, a, b, seed):
        led = random_ledger(np.random.default_rng(seed), N)
        try:
            part = build_with_gaps(led, a, b)
        except InfeasibleParametersError:
            return
        part.check(N)
        ends = sorted(part.blocks + part.gaps)
        assert ends[-1] in part.blocks

    def test_remainder_exponent(self):
        # E|R_gaps| ~ sigma^(1 - alpha + beta/2) for i.i.d. inputs, below the chain bound exponent
        alpha, beta = 1.5, 0.5
        Ns = [256, 1024, 4096]
        means = []
        for N in Ns:
            X = generate(IID(), N, 4000, root_seed=1).values
            part = GapBlocker(alpha, beta).fit(iid_ledger(N)).partition_
            means.append(np.abs(gap_remainder(part, X)).mean())
        slope = np.polyfit(0.5 * np.log(Ns), np.log(means), 1)[0]
        assert slope <= 2 - 1.5 * alpha + beta + 0.2
        assert slope == pytest.approx(1 - alpha + beta / 2, abs=0.1)


class TestBoundedSummand:
    def test_iid_example(self):
        part = build_bounded_summand(iid_ledger(16), 2.0)
        assert part.blocks == ((0, 3), (4, 7), (8, 11), (12, 15))

    def test_merge_tail(self):
        part = build_bounded_summand(iid_ledger(18), 2.0)
        assert part.blocks[-1] == (12, 17)
        part = build_bounded_summand(iid_ledger(18), 2.0, merge_tail=False)
        assert part.blocks[-1] == (16, 17)

    def test_count_closed_form(self):
        for N in (37, 100, 401):
            for A in (1.5, 2.0, 3.0):
                k = build_bounded_summand(iid_ledger(N), A).k_N
                assert abs(k - N / math.ceil(A * A)) <= 1

    def test_interval_constants_doeblin(self):
        for seed in range(6):
            spec = doeblin_markov(seed)
            N = 300
            led = spec.ledger(N)
            A = 2.0
            part = build_bounded_summand(led, A)
            M = float(np.abs(spec.h(N) - spec.centering(N).offsets[:, None]).max())
            a, b = bounded_summand_constants(A, M)
            C = block_covariance_matrix(part, led)
            k = part.k_N
            for i in range(k):
                for j in range(i, k):
                    v = C[i : j + 1, i : j + 1].sum()
                    assert a * (j - i + 1) <= v <= b * (j - i + 1)
            sigma2 = led.total()
            assert sigma2 / (4 * A * A) <= k <= 4 * sigma2 / (A * A)

    def test_degenerate(self):
        with pytest.warns(UserWarning):
            assert build_bounded_summand(iid_ledger(2), 2.0).degenerate


class TestMoments:
    def test_bounded_single_block(self):
        part = BlockPartition(1.0, ((0, 0),))
        X = np.random.default_rng(0).choice([-1.0, 1.0], size=(100, 1))
        bm = block_third_moments(part, X)
        assert bm.max <= 1.0

    def test_iid_normal_stable(self):
        N = 64
        part = build_two_step(iid_ledger(N), None, 4.0)
        X = np.random.default_rng(1).normal(size=(40_000, N))
        bm = block_third_moments(part, X)
        want = 2 * math.sqrt(2 / math.pi)
        assert np.all(np.abs(bm.moments - want) < 3.5 * bm.se)


class TestInterBlock:
    def test_independent(self):
        part = build_two_step(iid_ledger(20), None, 2.0)
        prof = IID().certified_profile(20)
        rep = inter_block_covariance_sum(part, iid_ledger(20), prof, C3=2.0)
        assert rep.measured == 0.0 and rep.linear

    def test_doeblin_within_bounds(self):
        for seed in range(6):
            spec = doeblin_markov(seed)
            N = 24
            led = spec.ledger(N)
            part = build_two_step(led, None, 1.5)
            X = generate(spec, N, 20_000, root_seed=seed).values
            C3 = block_third_moments(part, X).max
            prof = alpha_profile(spec.chain(N))
            rep = inter_block_covariance_sum(part, led, prof, C3)
            assert rep.measured <= rep.rio_bound
            assert rep.measured <= rep.paper_bound
            assert rep.paper_bound < rep.assumption_bound

    def test_block_covariance_dense_matches_bands(self):
        led = random_ledger(np.random.default_rng(2), 30)
        part = build_two_step(led, None, 2.0)
        dense = CovarianceLedger(dense=led.matrix())
        assert np.allclose(block_covariance_matrix(part, led), block_covariance_matrix(part, dense))

    def test_linearity_identity(self):
        # sum Var(Y_j) >= 4 |sum_{i<j} Cov| forces Var(sum Y_j) within [sv/2, 3 sv/2]
        held = 0
        ledgers = [doeblin_markov(s).ledger(200) for s in range(6)]
        ledgers += [random_ledger(np.random.default_rng(s), 200) for s in range(6)]
        for led in ledgers:
            part = build_two_step(led, None, 4.0)
            C = block_covariance_matrix(part, led) / part.tau**2
            sv = np.trace(C)
            pair = (C.sum() - sv) / 2
            if sv >= 4 * abs(pair):
                held += 1
                assert sv / 2 <= C.sum() <= 1.5 * sv
        assert held >= 3


class TestEstimators:
    def test_two_step_transform(self):
        X = generate(IID(), 12, 5, root_seed=0).values
        bl = TwoStepBlocker(tau=2.0).fit(iid_ledger(12))
        Y = bl.transform(X)
        assert np.allclose(Y, X.reshape(5, 3, 4).sum(axis=2) / 2.0)

    def test_fit_from_samples(self):
        X = generate(IID(), 12, 20_000, root_seed=1).values
        bl = BoundedSummandBlocker(A=2.0).fit(X)
        assert bl.partition_.k_N in (2, 3, 4)

    def test_json_roundtrip(self):
        part = build_with_gaps(iid_ledger(400), 1.5, 0.5)
        again = BlockPartition.from_dict(part.to_dict())
        assert again.blocks == part.blocks and again.gaps == part.gaps

    def test_block_sums_skip_gaps(self):
        part = BlockPartition(1.0, ((0, 1), (3, 4)), gaps=((2, 2),))
        X = np.arange(5.0)[None, :]
        assert block_sums(part, X).tolist() == [[1.0, 7.0]]
        assert gap_remainder(part, X).tolist() == [2.0]

    def test_heavy_tail_process(self):
        spec = IID((Distribution.make("student_t", df=3),))
        X = generate(spec, 16, 100, root_seed=2).values
        part = build_two_step(iid_ledger(16), None, 2.0)
        assert block_sums(part, X).shape == (100, 4)
