"""Statistics of the form ``T = S + R`` and their bound ingredients.

``S`` is the centered linear part ``sum_j g_j(X_j)`` and ``R`` the non-linear
remainder. Batches are arrays with paths along axis 0 and time along axis 1;
vector-valued samples carry a trailing coordinate axis.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_batch, check_positive_int
from .exceptions import NonFiniteSampleError, UnsupportedStatisticError, ValidationError
from .rng import path_generator

SYMMETRY_ATOL = 1e-12
DEGENERACY_SE_RULE = 4.0


def _sorted_sum(values, axis=-1):
    """Sum that does not depend on the order of the summands."""
    return np.sort(values, axis=axis).sum(axis=axis)


def _mean_se(values, axis=0):
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    mean = values.mean(axis=axis)
    se = values.std(axis=axis, ddof=1) / math.sqrt(n) if n > 1 else np.full_like(mean, np.inf)
    return mean, se


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class Kernel:
    """Symmetric kernel ``psi(x, y)``.

    A kernel with ``factor`` set equals ``factor(x) * factor(y)``, which gives
    an O(N) evaluation of the pair sum.
    """

    name: str
    fn: Callable
    factor: Optional[Callable] = None

    def __call__(self, x, y):
        return self.fn(x, y)


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


KERNELS = {
    "product": Kernel("product", lambda x, y: x * y, factor=lambda x: x),
    "centered_quadratic": Kernel(
        "centered_quadratic", lambda x, y: (x * x - 1.0) * (y * y - 1.0), factor=lambda x: x * x - 1.0
    ),
    "sum": Kernel("sum", lambda x, y: x + y),
    "zero": Kernel("zero", _zero, factor=lambda x: np.zeros_like(x)),
}


def get_kernel(kernel):
    if isinstance(kernel, Kernel):
        return kernel
    if callable(kernel):
        return Kernel(getattr(kernel, "__name__", "custom"), kernel)
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValidationError(f"unknown kernel {kernel!r}; known: {sorted(KERNELS)}") from None


def check_symmetry(kernel, points, atol=SYMMETRY_ATOL):
    """Largest ``|psi(x,y) - psi(y,x)|`` over consecutive pairs of ``points``."""
    kernel = get_kernel(kernel)
    x = np.asarray(points, dtype=float).ravel()
    a, b = x[:-1], x[1:]
    err = float(np.max(np.abs(kernel(a, b) - kernel(b, a)))) if x.size > 1 else 0.0
    if err > atol:
        raise ValidationError(f"kernel {kernel.name!r} is not symmetric (max asymmetry {err:.3g})")
    return err


# ---------------------------------------------------------------- evaluation


def eval_linear(batch):
    """Row sums ``S = sum_j g_j(X_j)``."""
    return check_batch(batch).sum(axis=1)


def _pair_sum(X, kernel):
    """sum_{i<j} psi(X_i, X_j) for each path, invariant under path reversal."""
    n, N = X.shape
    if kernel.factor is not None:
        f = kernel.factor(X)
        tot = _sorted_sum(f)
        sq = _sorted_sum(f * f)
        return 0.5 * (tot * tot - sq)
    iu = np.triu_indices(N, 1)
    out = np.empty(n)
    for p in range(n):
        vals = kernel(X[p, iu[0]], X[p, iu[1]])
        out[p] = _sorted_sum(vals)
    return out


def eval_u_statistic(batch, kernel="product", g=None):
    """Second-order U-statistic ``U' = S' + R'``.

    ``R' = N^{-1} sum_{i<j} psi(X_i, X_j)`` and ``S' = sum_j g(X_j)`` with
    ``g`` the identity by default.

    Returns
    -------
    S, R, T : ndarray
        Per-path values.
    """
    X = check_batch(batch)
    N = X.shape[1]
    if N < 2:
        raise ValidationError("a U-statistic needs N >= 2")
    kernel = get_kernel(kernel)
    G = X if g is None else np.asarray(g(X), dtype=float)
    S = _sorted_sum(G)
    R = _pair_sum(X, kernel) / N
    return S, R, S + R


def studentized_s2(batch, window):
    """``s^2 = sum_j sum_{|j-l| <= m} X_j X_l`` including the diagonal."""
    X = check_batch(batch)
    m = check_positive_int(window, "window")
    s2 = (X * X).sum(axis=1)
    for h in range(1, min(m, X.shape[1] - 1) + 1):
        s2 += 2.0 * (X[:, :-h] * X[:, h:]).sum(axis=1)
    return s2


def eval_studentized(batch, window):
    """Studentized mean ``t = S/s`` with ``t = 0`` whenever ``s = 0``.

    Returns
    -------
    t, s2 : ndarray
    """
    X = check_batch(batch)
    s2 = studentized_s2(X, window)
    s = np.sqrt(np.maximum(s2, 0.0))
    S = X.sum(axis=1)
    pos = s > 0
    t = np.zeros_like(S)
    t[pos] = S[pos] / s[pos]
    return t, s2


def default_window(N, exponent=0.2):
    return int(math.ceil(N**exponent))


@dataclass(frozen=True)
class SmoothMap:
    """Smooth ``H: R^d -> R`` with its gradient at 0 and a Hessian norm bound."""

    name: str
    H: Callable
    grad0: Callable
    hessian_bound: float


SMOOTH_MAPS = {
    "linear": SmoothMap("linear", lambda x: x.sum(axis=-1), lambda d: np.ones(d), 0.0),
    "square": SmoothMap("square", lambda x: (x * x).sum(axis=-1), lambda d: np.zeros(d), 2.0),
    "quadratic": SmoothMap("quadratic", lambda x: (x + 0.5 * x * x).sum(axis=-1), lambda d: np.ones(d), 1.0),
    "sin_sum": SmoothMap("sin_sum", lambda x: np.sin(x).sum(axis=-1), lambda d: np.ones(d), 1.0),
}


def get_smooth_map(H):
    if isinstance(H, SmoothMap):
        return H
    try:
        return SMOOTH_MAPS[H]
    except KeyError:
        raise ValidationError(f"unknown smooth map {H!r}; known: {sorted(SMOOTH_MAPS)}") from None


def _as_vector_batch(batch):
    X = np.asarray(batch, dtype=float)
    if X.ndim == 2:
        X = X[..., None]
    if X.ndim != 3:
        raise ValidationError(f"vector batch must be (paths, N, d), got shape {X.shape}")
    if X.shape[2] > 8:
        raise ValidationError("function-of-mean supports d <= 8")
    return X


def eval_function_of_mean(batch, H="sin_sum"):
    """``S = N H'(0) xbar`` and ``R = N (H(xbar) - H(0) - H'(0) xbar)``."""
    X = _as_vector_batch(batch)
    smap = get_smooth_map(H)
    n, N, d = X.shape
    bad = ~np.isfinite(X)
    if bad.any():
        path = int(np.argwhere(bad)[0][0])
        raise NonFiniteSampleError(f"batch has a non-finite value in path {path}", index=path)
    xbar = X.mean(axis=1)
    grad = np.asarray(smap.grad0(d), dtype=float)
    H0 = float(smap.H(np.zeros(d)))
    lin = xbar @ grad
    Hx = smap.H(xbar)
    bad = ~np.isfinite(Hx)
    if bad.any():
        path = int(np.flatnonzero(bad)[0])
        raise NonFiniteSampleError(f"H is not finite on path {path}", index=path)
    S = N * lin
    R = N * (Hx - H0 - lin)
    return S, R, S + R


# ---------------------------------------------------------------- diagnostics


@dataclass
class DegeneracyReport:
    probes: np.ndarray
    estimates: np.ndarray
    se: np.ndarray
    violations: np.ndarray
    passed: bool

    def to_dict(self):
        return {
            "probes": self.probes.tolist(),
            "estimates": self.estimates.tolist(),
            "se": self.se.tolist(),
            "violations": self.violations.tolist(),
            "passed": self.passed,
        }


def check_degeneracy(kernel, sampler, probe_count=16, n_mc=100_000, seed=0):
    """MC test of ``E[psi(x, X)] = 0`` at probe points drawn from ``sampler``.

    ``sampler(rng, size)`` draws from the marginal law. A probe is flagged
    when its estimate exceeds ``4`` standard errors in absolute value.
    """
    probe_count = check_positive_int(probe_count, "probe_count")
    kernel = get_kernel(kernel)
    probes = np.asarray(sampler(path_generator(seed, 0, stream=7), probe_count), dtype=float)
    draws = np.asarray(sampler(path_generator(seed, 1, stream=7), n_mc), dtype=float)
    est = np.empty(probe_count)
    se = np.empty(probe_count)
    for i, x in enumerate(probes):
        v = kernel(np.full_like(draws, x), draws)
        est[i], se[i] = _mean_se(v)
    # a probe whose kernel section is identically zero has se 0 and passes
    viol = np.abs(est) > DEGENERACY_SE_RULE * se + 1e-12
    return DegeneracyReport(probes, est, se, np.flatnonzero(viol), not viol.any())


@dataclass
class TruncationLedger:
    threshold: float
    mean_abs_shift: np.ndarray
    mean_abs_shift_se: np.ndarray
    mean_sq_shift: np.ndarray
    mean_sq_shift_se: np.ndarray
    rho: np.ndarray
    shift_bound_stated: np.ndarray
    shift_bound: np.ndarray
    variance_bound: np.ndarray

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def truncate_center(values, N=None, means=None):
    """Truncate ``g_j`` at ``sqrt(N)`` and re-center.

    Parameters
    ----------
    values : array (paths, N)
        Centered observables.
    N : int, optional
        Horizon defining the threshold; defaults to ``values.shape[1]``.
    means : array (N,), optional
        Exact ``E[g_j 1{|g_j| <= sqrt(N)}]``; the column means are used
        otherwise.

    Returns
    -------
    truncated : ndarray
    ledger : TruncationLedger
        Measured shifts ``Delta_j = g_j - g~_j`` next to the bounds. The
        provable shift bound is ``2 rho_j / N``; ``shift_bound_stated`` holds
        ``rho_j / N``, which can fail for asymmetric laws.
    """
    G = check_batch(values)
    N = G.shape[1] if N is None else N
    thr = math.sqrt(N)
    kept = np.where(np.abs(G) <= thr, G, 0.0)
    mu = kept.mean(axis=0) if means is None else np.asarray(means, dtype=float)
    out = kept - mu
    delta = G - out
    abs_m, abs_se = _mean_se(np.abs(delta))
    sq_m, sq_se = _mean_se(delta * delta)
    rho = np.mean(np.abs(G) ** 3, axis=0)
    ledger = TruncationLedger(
        thr, abs_m, abs_se, sq_m, sq_se, rho, rho / N, 2.0 * rho / N, 4.0 * rho / math.sqrt(N)
    )
    return out, ledger


@dataclass
class MomentIngredients:
    third_moments: np.ndarray
    third_moments_se: np.ndarray
    rho3: float
    rho3_se: float
    sigma2: float
    sigma2_se: float

    def to_dict(self):
        return {
            "rho3": self.rho3,
            "rho3_se": self.rho3_se,
            "sigma2": self.sigma2,
            "sigma2_se": self.sigma2_se,
            "third_moments": self.third_moments.tolist(),
        }


def variance_with_se(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    c = x - x.mean()
    var = float(c @ c / (n - 1))
    m4 = float(np.mean(c**4))
    se = math.sqrt(max(m4 - var * var, 0.0) / n)
    return var, se


def moment_ingredients(batch):
    """Per-index ``E|g_j|^3``, their max ``rho_3`` and ``Var(S_N)``, all with SEs."""
    G = check_batch(batch)
    if G.shape[0] < 2:
        raise ValidationError("moment ingredients need at least 2 paths")
    m3, se3 = _mean_se(np.abs(G) ** 3)
    j = int(np.argmax(m3))
    var, var_se = variance_with_se(G.sum(axis=1))
    return MomentIngredients(m3, se3, float(m3[j]), float(se3[j]), var, var_se)


# ---------------------------------------------------------------- gamma


@dataclass
class GammaEstimate:
    gamma: float
    se: float
    argmax: tuple
    grid: list
    values: np.ndarray
    epsilon: float
    exhaustive: bool

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "se": self.se,
            "argmax": list(self.argmax),
            "grid": [list(p) for p in self.grid],
            "epsilon": self.epsilon,
            "exhaustive": self.exhaustive,
        }


def gamma_grid(n_units, N, epsilon=0.3, max_pairs=64, seed=0):
    """Pairs ``1 <= j <= k <= n_units`` with ``k - j <= N^epsilon``.

    When more than ``max_pairs`` qualify a seeded subsample is kept.

    Returns
    -------
    pairs : list of (j, k), 1-based
    exhaustive : bool
    """
    reach = N**epsilon
    pairs = [(j, k) for j in range(1, n_units + 1) for k in range(j, n_units + 1) if k - j <= reach]
    if len(pairs) <= max_pairs:
        return pairs, True
    rng = np.random.Generator(np.random.Philox(seed))
    keep = np.sort(rng.choice(len(pairs), size=max_pairs, replace=False))
    return [pairs[i] for i in keep], False


def remainder_increments(batch, kernel, j, k, units=None):
    """``R_{j,k} - R_{j,k-1} = -N^{-1} sum_{i in U_k} sum_{l outside U_j..U_k} psi(X_i, X_l)``.

    ``units`` lists index arrays (blocks); single indices by default. ``j``
    and ``k`` are 1-based unit numbers.
    """
    X = check_batch(batch)
    N = X.shape[1]
    kernel = get_kernel(kernel)
    if units is None:
        lo, hi = j - 1, k - 1
        inner = np.array([k - 1])
    else:
        lo, hi = int(units[j - 1][0]), int(units[k - 1][-1])
        inner = np.asarray(units[k - 1])
    outside = np.r_[0:lo, hi + 1 : N]
    if outside.size == 0:
        return np.zeros(X.shape[0])
    if kernel.factor is not None:
        f = kernel.factor(X)
        return -f[:, inner].sum(axis=1) * f[:, outside].sum(axis=1) / N
    total = np.zeros(X.shape[0])
    for i in inner:
        total += kernel(X[:, [i]], X[:, outside]).sum(axis=1)
    return -total / N


def gamma_estimate(batch, kernel="product", epsilon=0.3, max_pairs=64, units=None, seed=0):
    """MC estimate of ``max E[|R_{j,k} - R_{j,k-1}|^{3/2}]^{2/3}`` over the grid."""
    X = check_batch(batch)
    N = X.shape[1]
    n_units = N if units is None else len(units)
    pairs, exhaustive = gamma_grid(n_units, N, epsilon, max_pairs, seed)
    vals = np.empty(len(pairs))
    ses = np.empty(len(pairs))
    for t, (j, k) in enumerate(pairs):
        d = np.abs(remainder_increments(X, kernel, j, k, units)) ** 1.5
        m, s = _mean_se(d)
        vals[t] = m ** (2.0 / 3.0)
        ses[t] = (2.0 / 3.0) * m ** (-1.0 / 3.0) * s if m > 0 else 0.0
    i = int(np.argmax(vals))
    return GammaEstimate(float(vals[i]), float(ses[i]), pairs[i], pairs, vals, epsilon, exhaustive)


# ---------------------------------------------------------------- estimators


@dataclass
class StatisticResult:
    """Per-path ``T, S, R`` with the normalization and ingredient estimates."""

    T: np.ndarray
    S: np.ndarray
    R: np.ndarray
    sigma: Optional[float] = None
    ingredients: dict = field(default_factory=dict)

    def to_dict(self, include_paths=False):
        absR, absR_se = _mean_se(np.abs(self.R))
        out = {
            "sigma": self.sigma,
            "n_paths": int(self.T.size),
            "E_abs_R": float(absR),
            "E_abs_R_se": float(absR_se),
            "ingredients": self.ingredients,
        }
        if include_paths:
            out.update(T=self.T.tolist(), S=self.S.tolist(), R=self.R.tolist())
        return out

    def to_json(self, include_paths=False):
        return json.dumps(self.to_dict(include_paths), sort_keys=True)


class _Statistic(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping a batch to columns ``[T, S, R]``."""

    kind = "statistic"

    def fit(self, X, y=None):
        self._validate(X)
        self.n_features_in_ = np.shape(X)[1]
        return self

    def _validate(self, X):
        return check_batch(X)

    def _tsr(self, X):
        raise NotImplementedError

    def transform(self, X):
        S, R, T = self._tsr(X)
        return np.column_stack([T, S, R])

    def evaluate(self, X, sigma=None):
        S, R, T = self._tsr(X)
        return StatisticResult(T, S, R, sigma)

    def gamma(self, X, **kw):
        raise UnsupportedStatisticError(f"gamma is not defined for the {self.kind} statistic")

    def spec(self):
        return {"kind": self.kind, **self.get_params()}


class LinearStatistic(_Statistic):
    kind = "linear"

    def _tsr(self, X):
        S = eval_linear(X)
        R = np.zeros_like(S)
        return S, R, S + R

    def gamma(self, X, **kw):
        return GammaEstimate(0.0, 0.0, (1, 1), [], np.zeros(0), kw.get("epsilon", 0.3), True)


class UStatistic(_Statistic):
    """Second-order U-statistic with a named or callable symmetric kernel."""

    kind = "ustatistic"

    def __init__(self, kernel="product"):
        self.kernel = kernel

    def fit(self, X, y=None):
        X = self._validate(X)
        check_symmetry(self.kernel, X[:, : min(X.shape[1], 64)])
        self.n_features_in_ = X.shape[1]
        return self

    def _tsr(self, X):
        return eval_u_statistic(X, self.kernel)

    def gamma(self, X, epsilon=0.3, max_pairs=64, units=None, seed=0):
        return gamma_estimate(X, self.kernel, epsilon, max_pairs, units, seed)

    def spec(self):
        k = self.kernel
        return {"kind": self.kind, "kernel": k if isinstance(k, str) else get_kernel(k).name}


class Studentized(_Statistic):
    """Self-normalized mean, encoded as ``T = sigma * t`` so ``T/sigma = t``.

    ``window=None`` uses ``ceil(N^window_exponent)``.
    """

    kind = "studentized"

    def __init__(self, window=None, window_exponent=0.2):
        self.window = window
        self.window_exponent = window_exponent

    def window_for(self, N):
        return self.window if self.window is not None else default_window(N, self.window_exponent)

    def t(self, X):
        X = check_batch(X)
        return eval_studentized(X, self.window_for(X.shape[1]))[0]

    def evaluate(self, X, sigma=None):
        X = check_batch(X)
        t = self.t(X)
        S = X.sum(axis=1)
        scale = 1.0 if sigma is None else sigma
        T = scale * t
        return StatisticResult(T, S, T - S, sigma)

    def _tsr(self, X):
        res = self.evaluate(X, sigma=float(np.sqrt(check_batch(X).shape[1])))
        return res.S, res.R, res.T


class FunctionOfMean(_Statistic):
    """``T = N (H(xbar) - H(0))`` for a smooth ``H`` on ``R^d``."""

    kind = "function_of_mean"

    def __init__(self, H="sin_sum"):
        self.H = H

    def _validate(self, X):
        return _as_vector_batch(X)

    def _tsr(self, X):
        return eval_function_of_mean(X, self.H)

    def spec(self):
        return {"kind": self.kind, "H": self.H if isinstance(self.H, str) else get_smooth_map(self.H).name}


STATISTICS = {
    "linear": LinearStatistic,
    "ustatistic": UStatistic,
    "studentized": Studentized,
    "function_of_mean": FunctionOfMean,
}


def make_statistic(spec):
    """Build a statistic from ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind", "linear")
    if kind not in STATISTICS:
        raise ValidationError(f"unknown statistic kind {kind!r}")
    return STATISTICS[kind](**spec)
