import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from berrymix.exceptions import BudgetExceededError, InsufficientDataError, ValidationError
from berrymix.mixing import (
    FiniteChainSpec,
    MixingProfile,
    alpha_markov_exact,
    alpha_profile,
    alpha_upper_from_phi,
    decoupling_bound,
    fit_polynomial_decay,
    joint_path_law,
    phi_exact_enumerated,
    phi_from_joint,
    phi_markov_reduced,
    phi_profile,
    product_lemma_bound,
    random_chain,
    rio_covariance_bound,
)


def copy_chain(N=3):
    return FiniteChainSpec.homogeneous(np.eye(2), N)


def independent_chain(N=4):
    return FiniteChainSpec.homogeneous(np.full((2, 2), 0.5), N)


def brute_force_phi(chain, m):
    """Supremum over every pair of events built from path atoms."""
    P = joint_path_law(chain)
    N = chain.horizon
    best = 0.0
    for k in range(N - m):
        past = P.reshape(chain.state_count ** (k + 1), -1)
        J = past.reshape(past.shape[0], chain.state_count ** (m - 1), -1).sum(axis=1)
        pa, pb = J.sum(axis=1), J.sum(axis=0)
        rows = range(J.shape[0])
        cols = range(J.shape[1])
        for r in range(1, len(rows) + 1):
            for A in itertools.combinations(rows, r):
                PA = pa[list(A)].sum()
                if PA <= 0:
                    continue
                for s in range(1, len(cols) + 1):
                    for B in itertools.combinations(cols, s):
                        PAB = J[np.ix_(list(A), list(B))].sum()
                        best = max(best, abs(PAB / PA - pb[list(B)].sum()))
    return best


def brute_force_alpha(chain, m):
    P = joint_path_law(chain)
    S, N = chain.state_count, chain.horizon
    best = 0.0
    for k in range(N - m):
        J = P.reshape(S ** (k + 1), S ** (m - 1), -1).sum(axis=1)
        pa, pb = J.sum(axis=1), J.sum(axis=0)
        for r in range(1, J.shape[0] + 1):
            for A in itertools.combinations(range(J.shape[0]), r):
                for s in range(1, J.shape[1] + 1):
                    for B in itertools.combinations(range(J.shape[1]), s):
                        d = J[np.ix_(A, B)].sum() - pa[list(A)].sum() * pb[list(B)].sum()
                        best = max(best, abs(d))
    return best


class TestPhi:
    def test_independent_coordinates(self):
        for m in (1, 2, 3):
            assert phi_exact_enumerated(independent_chain(), m) == pytest.approx(0.0, abs=1e-15)

    def test_copy_chain_enumerated(self):
        assert phi_exact_enumerated(copy_chain(), 1) == pytest.approx(0.5, abs=1e-12)

    def test_stationary_rows_give_zero(self):
        pi = np.array([0.3, 0.7])
        chain = FiniteChainSpec.homogeneous(np.tile(pi, (2, 1)), 5, initial_law=pi)
        assert phi_exact_enumerated(chain, 1) == pytest.approx(0.0, abs=1e-15)
        assert phi_markov_reduced(chain, 1) == pytest.approx(0.0, abs=1e-15)

    def test_copy_chain_markov_lag_two(self):
        assert phi_markov_reduced(copy_chain(4), 2) == pytest.approx(0.5, abs=1e-12)
        assert phi_exact_enumerated(copy_chain(4), 2) == pytest.approx(0.5, abs=1e-12)

    def test_brute_force_event_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(6):
            chain = random_chain(rng, 2, 3)
            for m in (1, 2):
                want = brute_force_phi(chain, m)
                assert phi_exact_enumerated(chain, m) == pytest.approx(want, abs=1e-12)
                assert phi_markov_reduced(chain, m) == pytest.approx(want, abs=1e-12)

    def test_doeblin_contraction(self):
        rng = np.random.default_rng(11)
        for delta in (0.2, 0.5, 0.8):
            for S in (2, 3):
                chain = random_chain(rng, S, 8, doeblin=delta)
                for m in range(1, 8):
                    assert phi_markov_reduced(chain, m) <= (1 - delta) ** m + 1e-12

    def test_budget(self):
        chain = random_chain(np.random.default_rng(0), 3, 8)
        with pytest.raises(BudgetExceededError):
            phi_exact_enumerated(chain, 1, budget=100)

    def test_lag_must_be_below_horizon(self):
        with pytest.raises(ValidationError):
            phi_markov_reduced(copy_chain(3), 3)

    def test_zero_probability_atoms_skipped(self):
        chain = FiniteChainSpec.homogeneous(np.eye(3), 3, initial_law=np.array([0.5, 0.5, 0.0]))
        assert phi_exact_enumerated(chain, 1) == pytest.approx(0.5)

    def test_general_joint_law(self):
        J = np.array([[0.25, 0.0], [0.0, 0.75]])
        assert phi_from_joint(J, 1) == pytest.approx(0.75)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 3), st.integers(2, 6))
    def test_markov_matches_enumeration(self, seed, S, N):
        chain = random_chain(np.random.default_rng(seed), S, N)
        for m in range(1, N):
            assert abs(phi_markov_reduced(chain, m) - phi_exact_enumerated(chain, m)) <= 1e-10

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 3), st.integers(3, 8))
    def test_monotone_in_lag(self, seed, S, N):
        chain = random_chain(np.random.default_rng(seed), S, N)
        vals = [phi_markov_reduced(chain, m) for m in range(1, N)]
        assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))


class TestAlpha:
    def test_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            chain = random_chain(rng, 2, 3)
            for m in (1, 2):
                assert alpha_markov_exact(chain, m) == pytest.approx(brute_force_alpha(chain, m), abs=1e-12)

    def test_copy_chain(self):
        assert alpha_markov_exact(copy_chain(), 1) == pytest.approx(0.25)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 3), st.integers(2, 6))
    def test_half_phi_bound(self, seed, S, N):
        chain = random_chain(np.random.default_rng(seed), S, N)
        for m in range(1, N):
            assert alpha_markov_exact(chain, m) <= phi_markov_reduced(chain, m) / 2 + 1e-12

    def test_profile(self):
        prof = alpha_profile(copy_chain(4))
        assert prof.quantity == "alpha"
        assert prof.values == pytest.approx((0.25, 0.25, 0.25))


class TestProfile:
    def test_alpha_upper_halves(self):
        prof = MixingProfile((1,), (0.5,), exactness="exact-enumerated")
        assert alpha_upper_from_phi(prof).values == (0.25,)

    def test_alpha_upper_zero(self):
        prof = MixingProfile((1, 2, 3), (0.0, 0.0, 0.0), exactness="exact-by-construction")
        assert alpha_upper_from_phi(prof).values == (0.0, 0.0, 0.0)

    def test_alpha_upper_carries_decay(self):
        lags = tuple(range(1, 6))
        prof = MixingProfile(lags, tuple(0.8 * m**-3.0 for m in lags), "fitted", decay_model=(0.8, 3.0))
        half = alpha_upper_from_phi(prof)
        assert half.decay_model == (0.4, 3.0)
        assert half.values == pytest.approx(tuple(0.4 * m**-3.0 for m in lags))
        assert half.quantity == "alpha-upper"

    def test_rejects_increasing(self):
        with pytest.raises(ValidationError):
            MixingProfile((1, 2), (0.1, 0.2), "fitted")

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            MixingProfile((1,), (1.5,), "fitted")

    def test_rejects_envelope_violation(self):
        with pytest.raises(ValidationError):
            MixingProfile((1, 2), (0.5, 0.4), "fitted", decay_model=(1.0, 3.0))

    def test_json_roundtrip(self):
        prof = phi_profile(copy_chain(4))
        doc = prof.to_dict()
        assert set(doc) >= {"lags", "values", "exactness"}
        assert MixingProfile.from_json(prof.to_json()) == prof

    def test_enumerate_and_markov_profiles_agree(self):
        chain = random_chain(np.random.default_rng(9), 3, 6)
        a = phi_profile(chain, method="enumerate")
        b = phi_profile(chain, method="markov")
        assert np.allclose(a.values, b.values, atol=1e-12)
        assert a.exactness == "exact-enumerated"


class TestDecayFit:
    def test_exact_model(self):
        lags2 = tuple(range(2, 11))
        prof = MixingProfile(lags2, tuple(2.0 * m**-3.0 for m in lags2), "fitted")
        fit = fit_polynomial_decay(prof)
        assert fit.K == pytest.approx(2.0, abs=1e-9)
        assert fit.p == pytest.approx(3.0, abs=1e-9)
        assert fit.residual < 1e-9

    def test_matches_linregress_on_doeblin_chain(self):
        chain = random_chain(np.random.default_rng(2), 3, 16, doeblin=0.3)
        prof = phi_profile(chain)
        fits = []
        for hi in (6, 10, 15):
            fit = fit_polynomial_decay(prof, lag_range=(1, hi))
            lags = np.array(fit.used_lags, dtype=float)
            vals = np.array([prof[m] for m in fit.used_lags])
            ref = stats.linregress(np.log(lags), np.log(vals))
            assert fit.p == pytest.approx(-ref.slope, rel=1e-10)
            assert fit.K == pytest.approx(np.exp(ref.intercept), rel=1e-10)
            fits.append(fit.p)
        # geometric decay looks steeper the further out the window reaches
        assert fits[0] < fits[1] < fits[2]

    def test_all_zero(self):
        prof = MixingProfile((1, 2, 3), (0.0, 0.0, 0.0), "exact-by-construction")
        with pytest.raises(InsufficientDataError):
            fit_polynomial_decay(prof)

    def test_zeros_excluded_and_reported(self):
        prof = MixingProfile((1, 2, 3, 4), (0.5, 0.25, 0.125, 0.0), "fitted")
        fit = fit_polynomial_decay(prof)
        assert fit.excluded_lags == (4,)


class TestAnalyticBounds:
    def test_decoupling(self):
        assert decoupling_bound(1.0, 0.0) == 0.0
        assert decoupling_bound(2.0, 0.25) == 0.5

    def test_product_lemma(self):
        assert product_lemma_bound([3.0], 0.7) == 0.0
        assert product_lemma_bound([1.0, 1.0], 0.1) == pytest.approx(0.4)
        assert product_lemma_bound([2.0, 1.0, 1.0], 0.0) == 0.0

    def test_rio(self):
        assert rio_covariance_bound(1.0, 1.0) == pytest.approx(6.0)
        assert rio_covariance_bound(5.0, 0.0) == 0.0

    def test_product_lemma_on_enumerated_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            chain = random_chain(rng, 3, 5)
            marg = chain.marginals()
            for t in range(4):
                for s in range(t + 1, 5):
                    f, h = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
                    J = marg[t][:, None] * chain.step_matrix(t, s)
                    cov = f @ J @ h - (marg[t] @ f) * (marg[s] @ h)
                    bound = product_lemma_bound([abs(f).max(), abs(h).max()], alpha_markov_exact(chain, s - t))
                    assert abs(cov) <= bound + 1e-12

    def test_independence_factors_exactly(self):
        chain = independent_chain(4)
        P = joint_path_law(chain)
        f = np.array([1.0, -2.0])
        e = np.einsum("abcd,a,c->", P, f, f)
        assert e == pytest.approx((0.5 * f.sum()) ** 2, abs=1e-15)
        assert alpha_markov_exact(chain, 2) == pytest.approx(0.0, abs=1e-15)

    def test_rio_on_simulated_pairs(self):
        # Doeblin chain observable simulated; covariance within 3 SE of the bound
        chain = random_chain(np.random.default_rng(8), 3, 6, doeblin=0.2)
        rng = np.random.default_rng(1)
        n = 200_000
        U = rng.random((n, 6))
        X = np.empty((n, 6), dtype=int)
        X[:, 0] = (U[:, 0, None] >= np.cumsum(chain.initial_law)).sum(axis=1).clip(max=2)
        for t, P in enumerate(chain.transitions):
            X[:, t + 1] = (U[:, t + 1, None] >= np.cumsum(P, axis=1)[X[:, t]]).sum(axis=1).clip(max=2)
        g = np.array([-1.0, 0.5, 2.0])[X]
        g -= g.mean(axis=0)
        for m in range(1, 6):
            prod = g[:, 0] * g[:, m]
            se = prod.std() / np.sqrt(n)
            rho = max(np.mean(np.abs(g[:, 0]) ** 3), np.mean(np.abs(g[:, m]) ** 3))
            assert abs(prod.mean()) <= rio_covariance_bound(rho, alpha_markov_exact(chain, m)) + 3 * se


def test_chain_validation():
    with pytest.raises(ValidationError):
        FiniteChainSpec(2, 2, np.array([0.5, 0.5]), (np.array([[0.5, 0.6], [0.5, 0.5]]),))
    with pytest.raises(ValidationError):
        FiniteChainSpec(2, 2, np.array([0.5, 0.5]), (np.array([[1.5, -0.5], [0.5, 0.5]]),))
    with pytest.raises(ValidationError):
        FiniteChainSpec(2, 0, np.array([0.5, 0.5]), ())
    # rows off by less than 1e-12 are accepted
    FiniteChainSpec(2, 2, np.array([0.5, 0.5]), (np.array([[0.5, 0.5 + 5e-13], [0.5, 0.5]]),))
