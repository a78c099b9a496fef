"""Non-stationary weakly dependent sample paths with certified mixing.

Every process produces observables ``g_j(X_j)`` that are centered, either
exactly or by a recorded Monte Carlo offset. Innovation laws are standardized
to mean 0 and variance 1 so covariance ledgers have closed forms.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from ._validation import check_positive_int, check_probability_vector, check_stochastic_matrix
from .exceptions import BudgetExceededError, InfeasibleParametersError, ValidationError
from .mixing import FiniteChainSpec, MixingProfile, phi_profile
from .rng import path_generator

DEFAULT_CHUNK = 512
LEDGER_BUDGET = 10**9


# ---------------------------------------------------------------- innovations


@dataclass(frozen=True)
class Distribution:
    """A standardized (mean 0, variance 1) innovation law.

    Supported names: ``normal``, ``rademacher``, ``uniform``, ``gamma``
    (param ``shape``), ``bernoulli`` (``p``), ``student_t`` (``df`` > 2),
    ``lognormal`` (``sigma``).
    """

    name: str = "normal"
    params: tuple = ()

    _REQUIRED = {
        "normal": (),
        "rademacher": (),
        "uniform": (),
        "gamma": ("shape",),
        "bernoulli": ("p",),
        "student_t": ("df",),
        "lognormal": ("sigma",),
    }

    def __post_init__(self):
        if self.name not in self._REQUIRED:
            raise ValidationError(f"unknown distribution {self.name!r}")
        params = dict(self.params)
        missing = set(self._REQUIRED[self.name]) - set(params)
        if missing:
            raise ValidationError(f"{self.name} needs parameters {sorted(missing)}")
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in params.items())))
        p = dict(self.params)
        if self.name == "gamma" and p["shape"] <= 0:
            raise ValidationError("gamma shape must be positive")
        if self.name == "bernoulli" and not 0 < p["p"] < 1:
            raise ValidationError("bernoulli p must lie in (0, 1)")
        if self.name == "student_t" and p["df"] <= 2:
            raise ValidationError("student_t needs df > 2 for a finite variance")
        if self.name == "lognormal" and p["sigma"] <= 0:
            raise ValidationError("lognormal sigma must be positive")

    @classmethod
    def make(cls, name, **params):
        return cls(name, tuple(params.items()))

    @property
    def symmetric(self):
        return self.name in ("normal", "rademacher", "uniform", "student_t")

    def sample(self, rng, size):
        p = dict(self.params)
        if self.name == "normal":
            return rng.standard_normal(size)
        if self.name == "rademacher":
            return 2.0 * rng.integers(0, 2, size) - 1.0
        if self.name == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
        if self.name == "gamma":
            k = p["shape"]
            return (rng.standard_gamma(k, size) - k) / math.sqrt(k)
        if self.name == "bernoulli":
            q = p["p"]
            return ((rng.random(size) < q) - q) / math.sqrt(q * (1 - q))
        if self.name == "student_t":
            df = p["df"]
            return rng.standard_t(df, size) / math.sqrt(df / (df - 2))
        s = p["sigma"]
        mean = math.exp(s * s / 2)
        sd = math.sqrt((math.exp(s * s) - 1) * math.exp(s * s))
        return (np.exp(s * rng.standard_normal(size)) - mean) / sd

    def scipy_law(self):
        p = dict(self.params)
        if self.name == "normal":
            return stats.norm()
        if self.name == "uniform":
            r3 = math.sqrt(3.0)
            return stats.uniform(loc=-r3, scale=2 * r3)
        if self.name == "gamma":
            k = p["shape"]
            return stats.gamma(k, loc=-math.sqrt(k), scale=1 / math.sqrt(k))
        if self.name == "student_t":
            df = p["df"]
            return stats.t(df, scale=1 / math.sqrt(df / (df - 2)))
        if self.name == "lognormal":
            s = p["sigma"]
            mean = math.exp(s * s / 2)
            sd = math.sqrt((math.exp(s * s) - 1) * math.exp(s * s))
            return stats.lognorm(s, loc=-mean / sd, scale=1 / sd)
        return None

    def abs_moment(self, k=3):
        """E|X|^k of the standardized law."""
        p = dict(self.params)
        if self.name == "normal":
            return 2 ** (k / 2) * math.gamma((k + 1) / 2) / math.sqrt(math.pi)
        if self.name == "rademacher":
            return 1.0
        if self.name == "bernoulli":
            q = p["p"]
            sd = math.sqrt(q * (1 - q))
            return q * ((1 - q) / sd) ** k + (1 - q) * (q / sd) ** k
        law = self.scipy_law()
        return float(law.expect(lambda x: np.abs(x) ** k))

    def to_dict(self):
        return {"name": self.name, **dict(self.params)}

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        name = doc.pop("name")
        return cls(name, tuple(doc.items()))


@dataclass(frozen=True)
class ScaleSchedule:
    """Deterministic per-index scales ``a_1..a_N``.

    ``linear``: ``a_j = base + slope * j / N``; ``periodic``: ``values`` cycled;
    ``constant``: ``base`` everywhere.
    """

    kind: str = "constant"
    base: float = 1.0
    slope: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "periodic"):
            raise ValidationError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "periodic" and not self.values:
            raise ValidationError("periodic schedule needs values")

    def scales(self, N):
        j = np.arange(1, N + 1, dtype=float)
        if self.kind == "constant":
            a = np.full(N, self.base)
        elif self.kind == "linear":
            a = self.base + self.slope * j / N
        else:
            a = np.resize(np.asarray(self.values), N)
        if not np.all(np.isfinite(a)):
            raise ValidationError("scale schedule produced non-finite values")
        return a

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "periodic":
            out["values"] = list(self.values)
        else:
            out["base"] = self.base
            if self.kind == "linear":
                out["slope"] = self.slope
        return out


_TRANSFORMS = {
    "identity": (lambda x: x, True),
    "tanh": (np.tanh, True),
    "cube": (lambda x: x**3, True),
    "sign": (np.sign, True),
    "square": (np.square, False),
}


# ---------------------------------------------------------------- ledgers


class CovarianceLedger:
    """Covariances of ``g_1(X_1), ..., g_N(X_N)``.

    Stored densely, or as bands ``bands[h, i] = Cov(g_i, g_{i+h})`` for
    processes whose covariance vanishes beyond a bandwidth.
    """

    def __init__(self, dense=None, bands=None, exact=True):
        if (dense is None) == (bands is None):
            raise ValidationError("give exactly one of dense or bands")
        self.dense = None if dense is None else np.asarray(dense, dtype=float)
        self.bands = None if bands is None else np.asarray(bands, dtype=float)
        self.exact = exact
        self.n = self.dense.shape[0] if dense is not None else self.bands.shape[1]

    @classmethod
    def from_samples(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(dense=np.atleast_2d(np.cov(values, rowvar=False)), exact=False)

    @property
    def bandwidth(self):
        return self.n - 1 if self.bands is None else self.bands.shape[0] - 1

    def cov(self, i, j):
        if self.dense is not None:
            return float(self.dense[i, j])
        h = abs(j - i)
        return 0.0 if h > self.bandwidth else float(self.bands[h, min(i, j)])

    def diagonal(self):
        return np.diag(self.dense).copy() if self.dense is not None else self.bands[0].copy()

    def matrix(self):
        if self.dense is not None:
            return self.dense
        M = np.diag(self.bands[0])
        for h in range(1, self.bands.shape[0]):
            off = self.bands[h, : self.n - h]
            M += np.diag(off, h) + np.diag(off, -h)
        return M

    def cross(self, k, members):
        """sum_{i in members} Cov(g_i, g_k)."""
        members = np.asarray(members, dtype=int)
        if members.size == 0:
            return 0.0
        if self.dense is not None:
            return float(self.dense[k, members].sum())
        total = 0.0
        for i in members[np.abs(members - k) <= self.bandwidth]:
            total += self.cov(int(i), k)
        return total

    def variance(self, indices):
        idx = np.asarray(sorted(set(int(i) for i in indices)), dtype=int)
        if idx.size == 0:
            return 0.0
        if self.dense is not None:
            return float(self.dense[np.ix_(idx, idx)].sum())
        mask = np.zeros(self.n + self.bandwidth + 1, dtype=bool)
        mask[idx] = True
        total = float(self.bands[0, idx].sum())
        for h in range(1, self.bands.shape[0]):
            both = idx[mask[idx + h]]
            total += 2.0 * float(self.bands[h, both].sum())
        return total

    def interval_variance(self, lo, hi):
        return self.variance(range(lo, hi + 1))

    def total(self):
        """Var(S_N)."""
        if self.dense is not None:
            return float(self.dense.sum())
        return float(self.bands[0].sum() + 2.0 * self.bands[1:].sum())


# ---------------------------------------------------------------- processes


@dataclass(frozen=True)
class Centering:
    offsets: np.ndarray
    se: np.ndarray
    exact: bool


class _Process:
    """Shared driver; subclasses implement ``_raw_paths`` and metadata."""

    def _raw_paths(self, N, gens):
        raise NotImplementedError

    def scales(self, N):
        return np.ones(N)

    def centering(self, N):
        return Centering(np.zeros(N), np.zeros(N), True)

    def paths(self, N, path_ids, root_seed, stream=0):
        gens = [path_generator(root_seed, p, stream) for p in path_ids]
        raw = self._raw_paths(N, gens)
        return raw - self.centering(N).offsets


@dataclass(frozen=True)
class IID(_Process):
    """Independent innovations; ``dists`` are cycled over the indices."""

    dists: tuple = (Distribution(),)

    def __post_init__(self):
        if not self.dists:
            raise ValidationError("IID needs at least one distribution")

    def _raw_paths(self, N, gens):
        idx = np.arange(N) % len(self.dists)
        out = np.empty((len(gens), N))
        for r, g in enumerate(gens):
            for d, dist in enumerate(self.dists):
                cols = idx == d
                out[r, cols] = dist.sample(g, int(cols.sum()))
        return out

    def certified_profile(self, N, max_lag=None):
        lags = tuple(range(1, (max_lag or N - 1) + 1))
        return MixingProfile(lags, (0.0,) * len(lags), exactness="exact-by-construction")

    def ledger(self, N):
        return CovarianceLedger(bands=np.ones((1, N)))

    def third_moments(self, N):
        per = np.array([d.abs_moment(3) for d in self.dists])
        return np.resize(per, N)

    def to_dict(self):
        return {"kind": "iid", "dists": [d.to_dict() for d in self.dists]}


@dataclass(frozen=True)
class MDependent(_Process):
    """A ``window``-dependent sequence built from i.i.d. innovations.

    Without ``lookback_law`` the observable is the moving average
    ``h(sum_r w_r eps_{j-r})``. With ``lookback_law`` (probabilities of
    ``W = 0..window``) it is ``eps_j + coef * 1{W_j >= 1} eps_{j - W_j}`` with
    independent random lookbacks ``W_j``, a mixture over window widths.
    """

    window: int = 1
    dist: Distribution = Distribution()
    weights: Optional[tuple] = None
    transform: str = "identity"
    lookback_law: Optional[tuple] = None
    lookback_coef: float = 1.0

    def __post_init__(self):
        L = check_positive_int(self.window, "window", minimum=0)
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != L + 1:
                raise ValidationError(f"weights need length window+1={L + 1}")
            object.__setattr__(self, "weights", w)
        if self.transform not in _TRANSFORMS:
            raise ValidationError(f"unknown transform {self.transform!r}")
        if self.lookback_law is not None:
            law = tuple(float(x) for x in check_probability_vector(self.lookback_law, "lookback_law", atol=1e-9))
            if len(law) != L + 1:
                raise ValidationError(f"lookback_law needs length window+1={L + 1}")
            if self.transform != "identity" or self.weights is not None:
                raise ValidationError("lookback processes take neither weights nor a transform")
            object.__setattr__(self, "lookback_law", law)

    @property
    def w(self):
        return np.ones(self.window + 1) if self.weights is None else np.asarray(self.weights)

    def _raw_paths(self, N, gens):
        L = self.window
        eps = np.empty((len(gens), N + L))
        if self.lookback_law is not None:
            W = np.empty((len(gens), N), dtype=np.int64)
            for r, g in enumerate(gens):
                eps[r] = self.dist.sample(g, N + L)
                W[r] = g.choice(L + 1, size=N, p=self.lookback_law)
            rows = np.arange(len(gens))[:, None]
            back = eps[rows, L + np.arange(N) - W]
            return eps[:, L:] + self.lookback_coef * np.where(W >= 1, back, 0.0)
        for r, g in enumerate(gens):
            eps[r] = self.dist.sample(g, N + L)
        w = self.w
        lin = sum(w[r] * eps[:, L - r : L - r + N] for r in range(L + 1))
        return _TRANSFORMS[self.transform][0](lin)

    def centering(self, N):
        fn, odd = _TRANSFORMS[self.transform]
        if self.transform == "identity" or (odd and self.dist.symmetric):
            return Centering(np.zeros(N), np.zeros(N), True)
        rng = np.random.Generator(np.random.Philox(20240917))
        n = 10**6
        lin = self.w @ self.dist.sample(rng, (self.window + 1, n))
        vals = fn(lin)
        c = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n))
        return Centering(np.full(N, c), np.full(N, se), False)

    def tail_probabilities(self):
        """P(W >= i) for i = 1..window."""
        law = np.asarray(self.lookback_law)
        return np.cumsum(law[::-1])[::-1][1:]

    def certified_profile(self, N, max_lag=None):
        """Certificate phi(m) <= value; exact zero beyond the window.

        For random lookbacks the future depends on the past only on the event
        that some future index looks back past the split, which is independent
        of the past sigma-algebra; its probability bounds phi.
        """
        max_lag = max_lag or max(N - 1, 1)
        lags = tuple(range(1, max_lag + 1))
        vals = []
        for m in lags:
            if m > self.window:
                vals.append(0.0)
            elif self.lookback_law is None:
                vals.append(1.0)
            else:
                tails = self.tail_probabilities()[m - 1 :]
                vals.append(min(1.0, float(1.0 - np.prod(1.0 - tails))))
        dm = getattr(self, "_decay_model", None)
        return MixingProfile(lags, tuple(vals), exactness="exact-by-construction", decay_model=dm)

    def ledger(self, N):
        L = self.window
        if self.lookback_law is not None:
            q = np.asarray(self.lookback_law)
            lam = self.lookback_coef
            band = np.zeros(L + 1)
            band[0] = 1.0 + lam**2 * q[1:].sum()
            for h in range(1, L + 1):
                band[h] = lam * q[h] + lam**2 * sum(q[r] * q[h + r] for r in range(1, L + 1 - h))
        elif self.transform == "identity":
            w = self.w
            band = np.array([w[: L + 1 - h] @ w[h:] for h in range(L + 1)])
        else:
            raise NotImplementedError("no closed-form ledger for a nonlinear transform")
        bands = np.repeat(band[:, None], N, axis=1)
        for h in range(1, L + 1):
            bands[h, N - h :] = 0.0
        return CovarianceLedger(bands=bands)

    def to_dict(self):
        out = {"kind": "mdependent", "window": self.window, "dist": self.dist.to_dict()}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        if self.transform != "identity":
            out["transform"] = self.transform
        if self.lookback_law is not None:
            out["lookback_law"] = list(self.lookback_law)
            out["lookback_coef"] = self.lookback_coef
        dm = getattr(self, "_decay_model", None)
        if dm is not None:
            out["decay_model"] = {"K": dm[0], "p": dm[1]}
        return out


@dataclass(frozen=True, eq=False)
class InhomogeneousMarkov(_Process):
    """Finite-state chain with a periodic cycle of transition matrices.

    ``observable`` has shape (S,) or (P, S); rows are cycled over time.
    """

    initial_law: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    transitions: tuple = ()
    observable: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))

    def __post_init__(self):
        init = check_probability_vector(self.initial_law, "initial_law")
        S = init.size
        mats = tuple(check_stochastic_matrix(P, S, f"transitions[{t}]") for t, P in enumerate(self.transitions))
        if not mats:
            raise ValidationError("need at least one transition matrix")
        obs = np.atleast_2d(np.asarray(self.observable, dtype=float))
        if obs.shape[1] != S:
            raise ValidationError("observable columns must match the state count")
        object.__setattr__(self, "initial_law", init)
        object.__setattr__(self, "transitions", mats)
        object.__setattr__(self, "observable", obs)

    @property
    def state_count(self):
        return self.initial_law.size

    def chain(self, N):
        mats = tuple(self.transitions[t % len(self.transitions)] for t in range(N - 1))
        return FiniteChainSpec(self.state_count, N, self.initial_law, mats)

    def h(self, N):
        """Uncentered observable table, shape (N, S)."""
        return np.resize(self.observable, (N, self.state_count))

    def _raw_paths(self, N, gens):
        U = np.stack([g.random(N) for g in gens])
        cum_init = np.cumsum(self.initial_law)
        cum = [np.cumsum(P, axis=1) for P in self.transitions]
        n = len(gens)
        states = np.empty((n, N), dtype=np.int64)
        S = self.state_count
        states[:, 0] = np.minimum((U[:, 0, None] >= cum_init[None, :]).sum(axis=1), S - 1)
        rows = np.arange(n)
        for t in range(1, N):
            C = cum[(t - 1) % len(cum)][states[:, t - 1]]
            states[:, t] = np.minimum((U[:, t, None] >= C).sum(axis=1), S - 1)
        h = self.h(N)
        return h[np.arange(N)[None, :], states] + 0.0 * rows[:, None]

    def centering(self, N):
        marg = self.chain(N).marginals()
        c = (marg * self.h(N)).sum(axis=1)
        return Centering(c, np.zeros(N), True)

    def certified_profile(self, N, max_lag=None):
        max_lag = min(max_lag or N - 1, N - 1)
        return phi_profile(self.chain(N), range(1, max_lag + 1))

    def ledger(self, N):
        return exact_cov_linear(self, N)

    def to_dict(self):
        return {
            "kind": "markov",
            "initial_law": self.initial_law.tolist(),
            "transitions": [P.tolist() for P in self.transitions],
            "observable": self.observable.tolist(),
        }


@dataclass(frozen=True)
class ScaledSchedule(_Process):
    """Inner process multiplied index-wise by a deterministic schedule."""

    inner: _Process = IID()
    schedule: ScaleSchedule = ScaleSchedule()

    def scales(self, N):
        return self.schedule.scales(N) * self.inner.scales(N)

    def _raw_paths(self, N, gens):
        return self.inner._raw_paths(N, gens) * self.schedule.scales(N)

    def centering(self, N):
        c = self.inner.centering(N)
        a = self.schedule.scales(N)
        return Centering(c.offsets * a, c.se * np.abs(a), c.exact)

    def certified_profile(self, N, max_lag=None):
        return self.inner.certified_profile(N, max_lag)

    def ledger(self, N):
        a = self.schedule.scales(N)
        inner = self.inner.ledger(N)
        if inner.dense is not None:
            return CovarianceLedger(dense=inner.dense * np.outer(a, a), exact=inner.exact)
        bands = inner.bands.copy()
        for h in range(bands.shape[0]):
            bands[h, : N - h] *= a[: N - h] * a[h:]
        return CovarianceLedger(bands=bands, exact=inner.exact)

    def to_dict(self):
        return {"kind": "scaled", "inner": self.inner.to_dict(), "schedule": self.schedule.to_dict()}


ProcessSpec = (IID, MDependent, InhomogeneousMarkov, ScaledSchedule)


# ---------------------------------------------------------------- batches


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray
    root_seed: int
    stream: int
    path_ids: np.ndarray

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def horizon(self):
        return self.values.shape[1]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "j", "value"])
            for p, row in zip(self.path_ids, self.values):
                for j, v in enumerate(row, start=1):
                    w.writerow([int(p), j, repr(float(v))])


def _chunks(n_paths, chunk_size, start=0):
    return [np.arange(a, min(a + chunk_size, n_paths)) + start for a in range(0, n_paths, chunk_size)]


def generate(spec, N, n_paths, root_seed, stream=0, threads=1, chunk_size=DEFAULT_CHUNK):
    """Centered observables for ``n_paths`` paths of length ``N``.

    Path ``p`` always draws from the stream keyed by ``(root_seed, stream, p)``,
    so the output does not depend on ``threads`` or ``chunk_size``.
    """
    N = check_positive_int(N, "N")
    n_paths = check_positive_int(n_paths, "n_paths")
    chunks = _chunks(n_paths, chunk_size)
    work = lambda ids: spec.paths(N, ids, root_seed, stream)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(ids) for ids in chunks]
    values = np.concatenate(parts, axis=0)
    if not np.all(np.isfinite(values)):
        raise ValidationError("generated values overflowed")
    return SampleBatch(values, int(root_seed), int(stream), np.arange(n_paths))


def generate_vector(spec, N, n_paths, d, root_seed, stream=0, threads=1):
    """``d`` independent copies of the process stacked as (paths, N, d)."""
    parts = [generate(spec, N, n_paths, root_seed, stream=stream * 64 + k + 1, threads=threads).values for k in range(d)]
    return np.stack(parts, axis=-1)


def center_observables(spec, N):
    """Offsets c_j with E[h_j(X_j) - c_j] = 0, and their standard errors."""
    return spec.centering(N)


def exact_cov_linear(spec, N, budget=LEDGER_BUDGET):
    """Exact covariance ledger of a finite-chain observable by joint-law propagation."""
    if isinstance(spec, ScaledSchedule):
        return spec.ledger(N)
    if not isinstance(spec, InhomogeneousMarkov):
        raise ValidationError("exact_cov_linear needs a finite-chain process")
    S = spec.state_count
    if N * N * S * S > budget:
        raise BudgetExceededError(f"N={N} with {S} states exceeds the ledger budget")
    chain = spec.chain(N)
    marg = chain.marginals()
    h = spec.h(N)
    c = (marg * h).sum(axis=1)
    C = np.empty((N, N))
    for i in range(N):
        v = marg[i] * h[i]
        C[i, i] = v @ h[i] - c[i] ** 2
        for j in range(i + 1, N):
            v = v @ chain.transitions[j - 1]
            C[i, j] = C[j, i] = v @ h[j] - c[i] * c[j]
    return CovarianceLedger(dense=C)


def covariance_ledger(spec, N):
    return spec.ledger(N)


def exact_variance(spec, N):
    """Var(S_N) from the closed-form ledger."""
    return spec.ledger(N).total()


def polynomial_mixing_schedule(target_p, K, max_lag, dist=None, coef=1.0):
    """Random-lookback process with certified ``phi(m) <= K m^-p``.

    Lookbacks have tails ``P(W >= i) = min(1, K (i^-p - (i+1)^-p))`` up to
    ``max_lag``, so the certificate ``1 - prod_{i>=m} (1 - P(W >= i))`` is at
    most ``sum_{i>=m} P(W >= i) <= K m^-p``.
    """
    if target_p <= 0 or K <= 0:
        raise InfeasibleParametersError("need target_p > 0 and K > 0")
    L = check_positive_int(max_lag, "max_lag")
    i = np.arange(1, L + 1, dtype=float)
    tails = np.minimum(1.0, K * (i**-target_p - (i + 1) ** -target_p))
    tails = np.append(tails, 0.0)
    law = np.empty(L + 1)
    law[0] = 1.0 - tails[0]
    law[1:] = tails[:-1] - tails[1:]
    law = np.clip(law, 0.0, None)
    law /= law.sum()
    spec = MDependent(
        window=L,
        dist=dist or Distribution(),
        lookback_law=tuple(law),
        lookback_coef=coef,
    )
    object.__setattr__(spec, "_decay_model", (float(K), float(target_p)))
    return spec


def schedule_from_dict(doc):
    doc = dict(doc)
    return ScaleSchedule(
        kind=doc.get("kind", "constant"),
        base=float(doc.get("base", 1.0)),
        slope=float(doc.get("slope", 0.0)),
        values=tuple(doc.get("values", ())),
    )


def process_from_dict(doc):
    """Inverse of ``spec.to_dict()``; also accepts ``polynomial`` schedules."""
    doc = dict(doc)
    kind = doc.get("kind")
    if kind == "iid":
        return IID(tuple(Distribution.from_dict(d) for d in doc.get("dists", [{"name": "normal"}])))
    if kind == "mdependent":
        law = doc.get("lookback_law")
        spec = MDependent(
            window=int(doc.get("window", 1)),
            dist=Distribution.from_dict(doc.get("dist", {"name": "normal"})),
            weights=None if doc.get("weights") is None else tuple(doc["weights"]),
            transform=doc.get("transform", "identity"),
            lookback_law=None if law is None else tuple(law),
            lookback_coef=float(doc.get("lookback_coef", 1.0)),
        )
        if "decay_model" in doc:
            dm = doc["decay_model"]
            object.__setattr__(spec, "_decay_model", (float(dm["K"]), float(dm["p"])))
        return spec
    if kind == "polynomial":
        return polynomial_mixing_schedule(
            float(doc["target_p"]),
            float(doc.get("K", 1.0)),
            int(doc["max_lag"]),
            dist=Distribution.from_dict(doc.get("dist", {"name": "normal"})),
            coef=float(doc.get("coef", 1.0)),
        )
    if kind == "markov":
        return InhomogeneousMarkov(
            np.asarray(doc["initial_law"], dtype=float),
            tuple(np.asarray(P, dtype=float) for P in doc["transitions"]),
            np.asarray(doc["observable"], dtype=float),
        )
    if kind == "scaled":
        return ScaledSchedule(process_from_dict(doc["inner"]), schedule_from_dict(doc["schedule"]))
    raise ValidationError(f"unknown process kind {kind!r}")
