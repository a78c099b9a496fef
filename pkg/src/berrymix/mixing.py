"""Uniform (phi) and strong (alpha) mixing coefficients of finite-state sequences.

Time indices are 0-based: a chain of horizon ``N`` has coordinates
``X_0, ..., X_{N-1}`` and ``transitions[t]`` maps the law of ``X_t`` to that
of ``X_{t+1}``. A lag ``m`` compares the past ``sigma(X_0..X_t)`` with the
future ``sigma(X_{t+m}..X_{N-1})``.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._validation import (
    check_positive_int,
    check_probability_vector,
    check_stochastic_matrix,
    check_unit_interval,
)
from .exceptions import BudgetExceededError, InsufficientDataError, ValidationError

DEFAULT_ATOM_BUDGET = 10**7
EXACTNESS = ("exact-by-construction", "exact-enumerated", "fitted")
QUANTITIES = ("phi", "alpha", "alpha-upper")
_MONOTONE_TOL = 1e-10


@dataclass(frozen=True)
class MixingProfile:
    """Mixing coefficients stored on an explicit list of lags.

    Parameters
    ----------
    lags : sequence of int
        Strictly increasing positive lags.
    values : sequence of float
        Coefficient at each lag, in [0, 1] and non-increasing.
    exactness : str
        One of ``exact-by-construction``, ``exact-enumerated``, ``fitted``.
    decay_model : (K, p) or None
        Envelope ``K * m**-p`` that every stored value must respect.
    quantity : str
        ``phi``, ``alpha`` or ``alpha-upper`` (an upper bound on alpha).
    """

    lags: tuple
    values: tuple
    exactness: str = "exact-enumerated"
    decay_model: Optional[tuple] = None
    quantity: str = "phi"

    def __post_init__(self):
        lags = tuple(int(m) for m in self.lags)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)
        if len(lags) != len(values):
            raise ValidationError("lags and values differ in length")
        if any(m < 1 for m in lags) or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValidationError("lags must be strictly increasing positive integers")
        if self.exactness not in EXACTNESS:
            raise ValidationError(f"unknown exactness {self.exactness!r}")
        if self.quantity not in QUANTITIES:
            raise ValidationError(f"unknown quantity {self.quantity!r}")
        for v in values:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"coefficient {v!r} outside [0, 1]")
        for a, b in zip(values, values[1:]):
            if b > a + _MONOTONE_TOL:
                raise ValidationError("coefficients must be non-increasing in the lag")
        if self.decay_model is not None:
            K, p = (float(x) for x in self.decay_model)
            if K <= 0 or p <= 0:
                raise ValidationError("decay model needs K > 0 and p > 0")
            object.__setattr__(self, "decay_model", (K, p))
            for m, v in zip(lags, values):
                if v > K * m**-p * (1 + 1e-12) + 1e-15:
                    raise ValidationError(f"coefficient at lag {m} exceeds the decay envelope")

    def __getitem__(self, m):
        try:
            return self.values[self.lags.index(int(m))]
        except ValueError:
            raise KeyError(m) from None

    def as_dict(self):
        return dict(zip(self.lags, self.values))

    def to_dict(self):
        out = {
            "lags": list(self.lags),
            "values": list(self.values),
            "exactness": self.exactness,
            "quantity": self.quantity,
        }
        if self.decay_model is not None:
            out["decay_model"] = {"K": self.decay_model[0], "p": self.decay_model[1]}
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        dm = doc.get("decay_model")
        return cls(
            lags=doc["lags"],
            values=doc["values"],
            exactness=doc.get("exactness", "exact-enumerated"),
            decay_model=None if dm is None else (dm["K"], dm["p"]),
            quantity=doc.get("quantity", "phi"),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class FiniteChainSpec:
    """Time-inhomogeneous Markov chain on ``state_count`` states.

    ``transitions`` holds ``horizon - 1`` row-stochastic matrices.
    """

    state_count: int
    horizon: int
    initial_law: np.ndarray
    transitions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        S = check_positive_int(self.state_count, "state_count")
        N = check_positive_int(self.horizon, "horizon")
        init = check_probability_vector(self.initial_law, "initial_law")
        if init.size != S:
            raise ValidationError("initial_law length differs from state_count")
        mats = tuple(check_stochastic_matrix(P, S, f"transitions[{t}]") for t, P in enumerate(self.transitions))
        if len(mats) != N - 1:
            raise ValidationError(f"need {N - 1} transition matrices, got {len(mats)}")
        for P in mats:
            P.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "initial_law", init)
        object.__setattr__(self, "transitions", mats)

    def marginals(self):
        """Laws of X_0..X_{N-1}, shape (N, S)."""
        out = np.empty((self.horizon, self.state_count))
        out[0] = self.initial_law
        for t, P in enumerate(self.transitions):
            out[t + 1] = out[t] @ P
        return out

    def step_matrix(self, start, stop):
        """Transition kernel from time ``start`` to time ``stop``."""
        M = np.eye(self.state_count)
        for P in self.transitions[start:stop]:
            M = M @ P
        return M

    def atom_count(self):
        return self.state_count**self.horizon

    @classmethod
    def homogeneous(cls, P, horizon, initial_law=None):
        P = np.asarray(P, dtype=float)
        S = P.shape[0]
        init = np.full(S, 1.0 / S) if initial_law is None else initial_law
        return cls(S, horizon, init, tuple(P for _ in range(horizon - 1)))

    def to_dict(self):
        return {
            "state_count": self.state_count,
            "horizon": self.horizon,
            "initial_law": self.initial_law.tolist(),
            "transitions": [P.tolist() for P in self.transitions],
        }


def random_chain(rng, state_count, horizon, doeblin=0.0, concentration=0.5):
    """Random inhomogeneous chain whose rows dominate ``doeblin`` times uniform."""
    S = state_count
    init = rng.dirichlet(np.full(S, concentration))
    mats = []
    for _ in range(horizon - 1):
        rows = rng.dirichlet(np.full(S, concentration), size=S)
        mats.append(doeblin / S + (1.0 - doeblin) * rows)
    return FiniteChainSpec(S, horizon, init, tuple(mats))


def joint_path_law(chain, budget=DEFAULT_ATOM_BUDGET):
    """Probability of every path, as an array of shape ``(S,) * N``."""
    if chain.atom_count() > budget:
        raise BudgetExceededError(
            f"{chain.state_count}**{chain.horizon} atoms exceed the enumeration budget {budget}"
        )
    P = chain.initial_law.copy()
    for T in chain.transitions:
        P = P[..., :, None] * T
    return P


def _check_lag(m, horizon):
    m = check_positive_int(m, "m")
    if m >= horizon:
        raise ValidationError(f"lag m={m} must be smaller than the horizon {horizon}")
    return m


def _phi_split(J):
    """sup over past atoms of the total variation between P(future | atom) and P(future)."""
    pa = J.sum(axis=1)
    pb = J.sum(axis=0)
    keep = pa > 0
    cond = J[keep] / pa[keep, None]
    return float(np.max(np.clip(cond - pb, 0.0, None).sum(axis=1)))


def phi_from_joint(P, m):
    """phi(m) of an arbitrary finite joint law by enumeration of atoms.

    ``P`` has one axis per time index. For each split the extremal future
    event collects the atoms whose conditional probability exceeds the
    unconditional one; the supremum over past events is attained on single
    atoms because total variation is convex in the conditioning law.
    """
    P = np.asarray(P, dtype=float)
    N = P.ndim
    m = _check_lag(m, N)
    sizes = P.shape
    best = 0.0
    for t in range(N - m):
        past = math.prod(sizes[: t + 1])
        gap = math.prod(sizes[t + 1 : t + m])
        J = P.reshape(past, gap, -1).sum(axis=1)
        best = max(best, _phi_split(J))
    return min(best, 1.0)


def phi_exact_enumerated(chain, m, budget=DEFAULT_ATOM_BUDGET):
    """Exact phi(m) by enumerating every path of the chain."""
    m = _check_lag(m, chain.horizon)
    return phi_from_joint(joint_path_law(chain, budget), m)


def phi_markov_reduced(chain, m):
    """Exact phi(m) via the Markov property.

    Conditioning on the past reduces to conditioning on ``X_t``, and the
    future path law given ``X_t = x`` differs from the unconditional one only
    through the law of ``X_{t+m}``.
    """
    m = _check_lag(m, chain.horizon)
    marg = chain.marginals()
    best = 0.0
    for t in range(chain.horizon - m):
        M = chain.step_matrix(t, t + m)
        keep = marg[t] > 0
        diff = np.clip(M[keep] - marg[t + m], 0.0, None).sum(axis=1)
        best = max(best, float(diff.max()))
    return min(best, 1.0)


def _alpha_pair(J):
    """max over events U, V of |P(U x V) - P(U)P(V)| for a joint table J."""
    p = J.sum(axis=1)
    q = J.sum(axis=0)
    C = J - np.outer(p, q)
    n = C.shape[0]
    if n > 20:
        raise BudgetExceededError("alpha enumeration limited to 20 conditioning atoms")
    best = 0.0
    for mask in range(1, 2**n):
        rows = [i for i in range(n) if mask >> i & 1]
        col = C[rows].sum(axis=0)
        best = max(best, float(np.clip(col, 0.0, None).sum()))
    return best


def alpha_markov_exact(chain, m):
    """Exact alpha(m) of a finite chain.

    With the Markov property ``P(A & B) - P(A)P(B)`` is bilinear in
    ``P(A | X_t = .)`` and ``P(B | X_{t+m} = .)``, so the supremum is attained
    by events of the form ``{X_t in U}`` and ``{X_{t+m} in V}``.
    """
    m = _check_lag(m, chain.horizon)
    marg = chain.marginals()
    best = 0.0
    for t in range(chain.horizon - m):
        J = marg[t][:, None] * chain.step_matrix(t, t + m)
        best = max(best, _alpha_pair(J))
    return best


def phi_profile(chain, lags=None, method="markov", budget=DEFAULT_ATOM_BUDGET):
    """phi on ``lags`` (default: every lag below the horizon)."""
    lags = list(range(1, chain.horizon)) if lags is None else sorted(int(m) for m in lags)
    if method == "markov":
        vals = [phi_markov_reduced(chain, m) for m in lags]
    elif method == "enumerate":
        P = joint_path_law(chain, budget)
        vals = [phi_from_joint(P, m) for m in lags]
    else:
        raise ValidationError(f"unknown method {method!r}")
    # sup over fewer splits at larger lags keeps the sequence monotone; clip rounding only
    vals = list(np.minimum.accumulate(vals))
    return MixingProfile(tuple(lags), tuple(vals), exactness="exact-enumerated", quantity="phi")


def alpha_profile(chain, lags=None):
    lags = list(range(1, chain.horizon)) if lags is None else sorted(int(m) for m in lags)
    vals = list(np.minimum.accumulate([alpha_markov_exact(chain, m) for m in lags]))
    return MixingProfile(tuple(lags), tuple(vals), exactness="exact-enumerated", quantity="alpha")


def alpha_upper_from_phi(profile):
    """Upper bound alpha(m) <= phi(m) / 2 on every stored lag."""
    if profile.quantity != "phi":
        raise ValidationError("alpha bound needs a phi profile")
    dm = None if profile.decay_model is None else (profile.decay_model[0] / 2, profile.decay_model[1])
    return MixingProfile(
        profile.lags,
        tuple(v / 2 for v in profile.values),
        exactness=profile.exactness,
        decay_model=dm,
        quantity="alpha-upper",
    )


@dataclass(frozen=True)
class DecayFit:
    K: float
    p: float
    residual: float
    used_lags: tuple
    excluded_lags: tuple


def fit_polynomial_decay(profile, lag_range=None):
    """Least-squares fit of log phi(m) = log K - p log m.

    Zero coefficients cannot be represented by the model; they are left out
    and listed in ``excluded_lags``.
    """
    lo, hi = (1, math.inf) if lag_range is None else lag_range
    lags, vals, excluded = [], [], []
    for m, v in zip(profile.lags, profile.values):
        if not lo <= m <= hi:
            continue
        if v > 0:
            lags.append(m)
            vals.append(v)
        else:
            excluded.append(m)
    if len(lags) < 3:
        raise InsufficientDataError(f"need >= 3 lags with positive coefficients, got {len(lags)}")
    x = np.log(lags)
    y = np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    return DecayFit(
        K=float(np.exp(intercept)),
        p=float(-slope),
        residual=float(np.sqrt(np.mean(resid**2))),
        used_lags=tuple(lags),
        excluded_lags=tuple(excluded),
    )


def decoupling_bound(sup_norm_D, phi_m):
    if sup_norm_D < 0:
        raise ValidationError("D must be non-negative")
    return float(sup_norm_D) * check_unit_interval(phi_m, "phi_m")


# There is no explicit constant in the product lemma; 4 is what the
# two-factor covariance step gives, and the enumeration suite checks it.
PRODUCT_LEMMA_CONSTANT = 4.0


def product_lemma_bound(sup_norms: Sequence[float], alpha_m, constant=PRODUCT_LEMMA_CONSTANT):
    norms = [float(c) for c in sup_norms]
    if not norms:
        raise ValidationError("need at least one factor")
    if any(c < 0 for c in norms):
        raise ValidationError("sup norms must be non-negative")
    alpha_m = check_unit_interval(alpha_m, "alpha_m")
    return constant * math.prod(norms) * (len(norms) - 1) * alpha_m


def rio_covariance_bound(rho, alpha_ij):
    if rho < 0:
        raise ValidationError("rho must be non-negative")
    alpha_ij = check_unit_interval(alpha_ij, "alpha_ij")
    return 6.0 * float(rho) ** (2.0 / 3.0) * alpha_ij ** (1.0 / 3.0)

