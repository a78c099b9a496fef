"""Enumeration-backed checks of the dependence inequalities on tiny chains.

Every expectation is computed exactly from the chain's pair or triple laws,
so an inequality either holds to rounding or is a genuine counterexample.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int
from .exceptions import ValidationError
from .mixing import (
    alpha_markov_exact,
    decoupling_bound,
    phi_exact_enumerated,
    phi_markov_reduced,
    product_lemma_bound,
    random_chain,
    rio_covariance_bound,
)
from .rng import path_generator

TOL = 1e-10
SUITES = ("oracle", "decoupling", "decoupling-signed", "product", "rio", "rio-mc")


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    violations: list = field(default_factory=list)
    max_ratio: float = 0.0

    def record(self, lhs, rhs, detail):
        self.checked += 1
        if rhs > 0:
            self.max_ratio = max(self.max_ratio, lhs / rhs)
        elif lhs > TOL:
            self.max_ratio = float("inf")
        if lhs > rhs + TOL:
            self.violations.append({"lhs": lhs, "rhs": rhs, **detail})

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {
            "checked": self.checked,
            "violations": self.violations[:50],
            "violation_count": len(self.violations),
            "max_ratio": self.max_ratio,
            "passed": self.passed,
        }


def chain_corpus(n_chains, seed=0, max_states=3, max_horizon=8):
    """Random inhomogeneous chains, every tenth one with a Doeblin floor.

    The corpus always starts with the copy chain, the extremal case of the
    decoupling inequality.
    """
    from .mixing import FiniteChainSpec

    rng = np.random.Generator(np.random.Philox(seed))
    chains = [FiniteChainSpec.homogeneous(np.eye(2), 3)] if n_chains else []
    while len(chains) < n_chains:
        S = int(rng.integers(2, max_states + 1))
        N = int(rng.integers(2, max_horizon + 1))
        doeblin = 0.3 if len(chains) % 10 == 0 else 0.0
        chains.append(random_chain(rng, S, N, doeblin=doeblin))
    return chains


def pair_law(chain, t, s):
    """Joint law of ``(X_t, X_s)`` for ``t < s``."""
    return chain.marginals()[t][:, None] * chain.step_matrix(t, s)


def decoupling_gap(J, nu):
    """``E nu(X, Y) - E nu(X, Y^)`` with ``Y^`` an independent copy of ``Y``."""
    p, q = J.sum(axis=1), J.sum(axis=0)
    return float(np.sum(J * nu) - p @ nu @ q)


def extremal_nu(J):
    """``nu(a, b) = 1{P(b | a) > P(b)}``, which attains ``sum_a p_a TV_a``."""
    p, q = J.sum(axis=1), J.sum(axis=0)
    cond = np.divide(J, p[:, None], out=np.tile(q, (p.size, 1)), where=p[:, None] > 0)
    return (cond > q).astype(float)


def _sign_vectors(S):
    return [np.array(v, dtype=float) for v in itertools.product((-1.0, 1.0), repeat=S)]


def run_suites(
    n_chains=200,
    seed=0,
    budget=10**7,
    max_states=3,
    max_horizon=8,
    phi_scale=1.0,
    mc_paths=20000,
    suites=SUITES,
):
    """Run the inequality suites over a random chain corpus.

    Parameters
    ----------
    phi_scale : float
        Multiplies every phi value before use; ``0.5`` injects a fault that
        the decoupling suite must detect.

    Returns
    -------
    dict
        Per-suite results plus ``literal_signed``, the informational count of
        signed products exceeding ``D phi(m)``.
    """
    n_chains = check_positive_int(n_chains, "chains")
    if not set(suites) <= set(SUITES):
        raise ValidationError(f"unknown suites {sorted(set(suites) - set(SUITES))}")
    chains = chain_corpus(n_chains, seed, max_states, max_horizon)
    res = {name: SuiteResult(name) for name in SUITES}
    literal = SuiteResult("decoupling-literal-signed")
    rng = np.random.Generator(np.random.Philox(seed + 1))

    for c, chain in enumerate(chains):
        N, S = chain.horizon, chain.state_count
        phis = {m: phi_markov_reduced(chain, m) for m in range(1, N)}
        alphas = {m: alpha_markov_exact(chain, m) for m in range(1, N)}
        marg = chain.marginals()
        if "oracle" in suites and chain.atom_count() <= budget:
            for m in range(1, N):
                e = phi_exact_enumerated(chain, m, budget)
                res["oracle"].record(abs(e - phis[m]), 0.0, {"chain": c, "m": m})
        for t in range(N - 1):
            for s in range(t + 1, N):
                m = s - t
                phi = phi_scale * phis[m]
                J = pair_law(chain, t, s)
                det = {"chain": c, "k": t, "m": m}
                if "decoupling" in suites:
                    D = float(rng.uniform(0.5, 2.0))
                    for nu in (D * rng.random((S, S)), D * extremal_nu(J), D * np.outer(rng.random(S), rng.random(S))):
                        gap = abs(decoupling_gap(J, nu))
                        res["decoupling"].record(gap, decoupling_bound(float(nu.max()) if nu.max() > 0 else D, phi), det)
                if "decoupling-signed" in suites:
                    for xi in _sign_vectors(S):
                        for eta in _sign_vectors(S):
                            nu = np.outer(xi, eta)
                            gap = abs(decoupling_gap(J, nu))
                            osc = float(nu.max() - nu.min())
                            res["decoupling-signed"].record(gap, osc * phi, det)
                            literal.record(gap, decoupling_bound(1.0, phi), det)
                if "product" in suites:
                    f, h = rng.uniform(-1, 1, S), rng.uniform(-1, 1, S)
                    C = (np.abs(f).max(), np.abs(h).max())
                    cov = float(f @ J @ h - (marg[t] @ f) * (marg[s] @ h))
                    res["product"].record(abs(cov), product_lemma_bound(C, alphas[m]), {**det, "d": 2})
                    for l in range(s + 1, N):
                        u = rng.uniform(-1, 1, S)
                        K = chain.step_matrix(s, l)
                        e3 = float((marg[t] * f) @ chain.step_matrix(t, s) @ (h * (K @ u)))
                        prod = float((marg[t] @ f) * (marg[s] @ h) * (marg[l] @ u))
                        gap_m = min(m, l - s)
                        bound = product_lemma_bound(C + (np.abs(u).max(),), alphas[gap_m])
                        res["product"].record(abs(e3 - prod), bound, {**det, "d": 3, "l": l})
                if "rio" in suites:
                    f, h = rng.normal(size=S), rng.normal(size=S)
                    fc, hc = f - marg[t] @ f, h - marg[s] @ h
                    cov = float(fc @ J @ hc)
                    rho = max(float(marg[t] @ np.abs(fc) ** 3), float(marg[s] @ np.abs(hc) ** 3))
                    res["rio"].record(abs(cov), rio_covariance_bound(rho, alphas[m]), det)
        if "rio-mc" in suites and c % 10 == 0:
            _rio_mc(chain, alphas, marg, res["rio-mc"], c, seed, mc_paths)
    out = {name: res[name].to_dict() for name in suites}
    out["literal_signed"] = literal.to_dict() if "decoupling-signed" in suites else None
    return out


def _rio_mc(chain, alphas, marg, result, c, seed, n):
    """Rio bound with covariance and third moments estimated from simulated paths.

    The check passes when ``|cov_hat| <= bound(rho_hat) + 3 SE(cov_hat)``.
    """
    N, S = chain.horizon, chain.state_count
    g = path_generator(seed, c, stream=5)
    U = g.random((n, N))
    X = np.empty((n, N), dtype=np.int64)
    X[:, 0] = np.minimum(np.searchsorted(np.cumsum(chain.initial_law), U[:, 0], side="right"), S - 1)
    for t, P in enumerate(chain.transitions):
        cum = np.cumsum(P, axis=1)[X[:, t]]
        X[:, t + 1] = np.minimum((U[:, t + 1, None] >= cum).sum(axis=1), S - 1)
    f = g.normal(size=S)
    Y = f[X]
    Y = Y - Y.mean(axis=0)
    for m in range(1, N):
        a, b = Y[:, 0], Y[:, m]
        prod = a * b
        cov = float(prod.mean())
        se = float(prod.std(ddof=1) / math.sqrt(n))
        rho = max(float(np.mean(np.abs(a) ** 3)), float(np.mean(np.abs(b) ** 3)))
        result.record(abs(cov), rio_covariance_bound(rho, alphas[m]) + 3.0 * se, {"chain": c, "m": m})


def summarize(report):
    """``(passed, failing suite names)`` for a suite report."""
    failing = [k for k, v in report.items() if k in SUITES and not v["passed"]]
    return not failing, failing
