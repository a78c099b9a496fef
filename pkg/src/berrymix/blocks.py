"""Block decompositions of ``{1..N}`` driven by a variance oracle.

A variance oracle is any object with ``cov(i, j)``, ``cross(k, members)``
and ``variance(indices)``, normally a :class:`~berrymix.processes.CovarianceLedger`.
Indices are 0-based and intervals are inclusive ``(lo, hi)`` pairs.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_batch
from .exceptions import DegenerateVarianceError, InfeasibleParametersError, ValidationError
from .mixing import MixingProfile
from .processes import CovarianceLedger

PAPER_COVARIANCE_CONSTANT = 12.0 * 0.5 ** (1.0 / 3.0)
ASSUMPTION_COVARIANCE_CONSTANT = 24.0 * 0.5 ** (1.0 / 3.0)


@dataclass(frozen=True)
class BlockPartition:
    """Ordered blocks, optional interleaved gaps, and the exceptional set."""

    tau: float
    blocks: tuple
    gaps: tuple = ()
    exceptional: tuple = ()
    block_variances: tuple = ()
    gap_variances: tuple = ()
    degenerate: bool = False
    kind: str = "two-step"

    @property
    def k_N(self):
        return len(self.blocks)

    @property
    def horizon(self):
        ends = [hi for _, hi in self.blocks + self.gaps]
        return max(ends) + 1 if ends else 0

    def block_indices(self, i):
        lo, hi = self.blocks[i]
        return np.arange(lo, hi + 1)

    def check(self, N):
        """Raise unless blocks and gaps tile ``0..N-1`` in order without overlap."""
        segs = sorted(self.blocks + self.gaps)
        pos = 0
        for lo, hi in segs:
            if lo != pos or hi < lo:
                raise ValidationError(f"segments do not tile 0..{N - 1} at index {pos}")
            pos = hi + 1
        if pos != N:
            raise ValidationError(f"segments cover 0..{pos - 1}, expected 0..{N - 1}")
        if any(not 0 <= e < N for e in self.exceptional):
            raise ValidationError("exceptional index out of range")
        return True

    def labels(self, N=None):
        """Block number of each index, ``-1`` on gaps."""
        N = self.horizon if N is None else N
        lab = np.full(N, -1, dtype=np.int64)
        for b, (lo, hi) in enumerate(self.blocks):
            lab[lo : hi + 1] = b
        return lab

    def to_dict(self):
        return {
            "tau": self.tau,
            "blocks": [list(b) for b in self.blocks],
            "gaps": [list(g) for g in self.gaps],
            "exceptional": list(self.exceptional),
            "block_variances": list(self.block_variances),
            "degenerate": self.degenerate,
            "kind": self.kind,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        return cls(
            tau=float(doc["tau"]),
            blocks=tuple(tuple(b) for b in doc["blocks"]),
            gaps=tuple(tuple(g) for g in doc.get("gaps", [])),
            exceptional=tuple(doc.get("exceptional", [])),
            block_variances=tuple(doc.get("block_variances", [])),
            degenerate=bool(doc.get("degenerate", False)),
            kind=doc.get("kind", "two-step"),
        )


def exceptional_set(third_moments, tau):
    """Indices ``j`` with ``E|g_j|^3 > tau``."""
    m = np.asarray(third_moments, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValidationError("third moments must be finite")
    return tuple(int(j) for j in np.flatnonzero(m > tau))


REACH_RTOL = 1e-9


def _reached(var, target):
    return var >= target * (1.0 - REACH_RTOL)


class _Accumulator:
    """Running variance of a growing index set."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.members = []
        self.var = 0.0

    def add(self, k):
        self.var += self.oracle.cov(k, k) + 2.0 * self.oracle.cross(k, self.members)
        self.members.append(k)

    def reset(self):
        self.members, self.var = [], 0.0


def _variances(oracle, segments):
    return tuple(float(oracle.variance(range(lo, hi + 1))) for lo, hi in segments)


def _degenerate(oracle, N, tau, exceptional, kind, reason):
    warnings.warn(f"degenerate block construction: {reason}; returning a single block", stacklevel=3)
    blocks = ((0, N - 1),)
    return BlockPartition(tau, blocks, (), exceptional, _variances(oracle, blocks), (), True, kind)


def build_two_step(oracle, third_moments, tau, N=None, strict=False):
    """Greedy blocks of variance at least ``tau^2`` with exceptional re-insertion.

    Step 1 accumulates non-exceptional indices left to right until the block
    variance reaches ``tau^2``; leftovers form an incomplete final block.
    Step 2 assigns each exceptional index to the block of its nearest
    non-exceptional index, ties going left.

    Parameters
    ----------
    strict : bool
        Raise :class:`DegenerateVarianceError` instead of returning the
        flagged single-block fallback when the total variance is below
        ``tau^2``.
    """
    N = oracle.n if N is None else N
    tau = float(tau)
    if tau <= 0:
        raise ValidationError("tau must be positive")
    exc = exceptional_set(third_moments, tau) if third_moments is not None else ()
    is_exc = np.zeros(N, dtype=bool)
    is_exc[list(exc)] = True
    regular = np.flatnonzero(~is_exc)
    total = oracle.variance(regular) if regular.size else 0.0
    if regular.size == 0 or total < tau * tau:
        if strict:
            raise DegenerateVarianceError(f"total variance {total:.4g} is below tau^2 = {tau * tau:.4g}")
        return _degenerate(oracle, N, tau, exc, "two-step", "total variance below tau^2")

    groups, acc = [], _Accumulator(oracle)
    for k in regular:
        acc.add(int(k))
        if _reached(acc.var, tau * tau):
            groups.append(acc.members)
            acc = _Accumulator(oracle)
    if acc.members:
        groups.append(acc.members)

    owner = np.empty(N, dtype=np.int64)
    for b, g in enumerate(groups):
        owner[g] = b
    # nearest non-exceptional neighbor, ties to the left
    idx = np.arange(N)
    pos = np.searchsorted(regular, idx)
    left = regular[np.clip(pos - 1, 0, regular.size - 1)]
    right = regular[np.clip(pos, 0, regular.size - 1)]
    dl = np.where(pos > 0, idx - left, np.iinfo(np.int64).max)
    dr = np.where(pos < regular.size, right - idx, np.iinfo(np.int64).max)
    nearest = np.where(dl <= dr, left, right)
    owner[is_exc] = owner[nearest[is_exc]]

    cuts = np.flatnonzero(np.diff(owner)) + 1
    starts = np.r_[0, cuts]
    ends = np.r_[cuts - 1, N - 1]
    blocks = tuple((int(a), int(b)) for a, b in zip(starts, ends))
    return BlockPartition(tau, blocks, (), exc, _variances(oracle, blocks), (), False, "two-step")


def build_with_gaps(oracle, alpha_exp, beta_exp, sigma_N=None, N=None):
    """Alternate blocks of variance ``sigma_N^alpha`` and gaps of variance ``sigma_N^beta``.

    The trailing segment, whether block or gap in progress, is closed as a
    block. ``tau`` is set to ``sigma_N^(alpha/2)``.
    """
    if not 0 < beta_exp < alpha_exp < 2:
        raise InfeasibleParametersError("need 0 < beta < alpha < 2")
    N = oracle.n if N is None else N
    if sigma_N is None:
        sigma_N = math.sqrt(oracle.variance(range(N)))
    vb, vg = sigma_N**alpha_exp, sigma_N**beta_exp
    segs, kinds = [], []
    acc, in_block, lo = _Accumulator(oracle), True, 0
    for k in range(N):
        acc.add(k)
        if _reached(acc.var, vb if in_block else vg):
            segs.append((lo, k))
            kinds.append(in_block)
            acc.reset()
            in_block, lo = not in_block, k + 1
            if len(segs) == 1 and k + 1 < N and oracle.variance(range(k + 1, N)) < vg:
                raise InfeasibleParametersError("gap variance target exceeds the remaining variance")
    if lo < N:
        segs.append((lo, N - 1))
        kinds.append(True)
    elif not kinds[-1]:
        kinds[-1] = True
    # a trailing segment closed as a block joins the block before it
    merged_segs, merged_kinds = [], []
    for s, kb in zip(segs, kinds):
        if merged_kinds and kb and merged_kinds[-1]:
            merged_segs[-1] = (merged_segs[-1][0], s[1])
        else:
            merged_segs.append(s)
            merged_kinds.append(kb)
    blocks = tuple(s for s, kb in zip(merged_segs, merged_kinds) if kb)
    gaps = tuple(s for s, kb in zip(merged_segs, merged_kinds) if not kb)
    tau = sigma_N ** (alpha_exp / 2)
    return BlockPartition(
        tau, blocks, gaps, (), _variances(oracle, blocks), _variances(oracle, gaps), False, "gaps"
    )


def build_bounded_summand(oracle, A, N=None, merge_tail=True, strict=False):
    """Cut at each first index where the running block L2 norm reaches ``A``.

    With ``merge_tail`` an incomplete last block (norm below ``A``) is joined
    to its predecessor so every block has variance at least ``A^2``.
    """
    N = oracle.n if N is None else N
    A = float(A)
    if A <= 0:
        raise ValidationError("A must be positive")
    total = oracle.variance(range(N))
    if total < A * A:
        if strict:
            raise DegenerateVarianceError(f"total variance {total:.4g} is below A^2 = {A * A:.4g}")
        return _degenerate(oracle, N, A, (), "bounded-summand", "total variance below A^2")
    segs, acc, lo = [], _Accumulator(oracle), 0
    for k in range(N):
        acc.add(k)
        if _reached(acc.var, A * A):
            segs.append([lo, k])
            acc.reset()
            lo = k + 1
    if lo < N:
        if merge_tail and segs:
            segs[-1][1] = N - 1
        else:
            segs.append([lo, N - 1])
    blocks = tuple(tuple(s) for s in segs)
    return BlockPartition(A, blocks, (), (), _variances(oracle, blocks), (), False, "bounded-summand")


def bounded_summand_constants(A, sup_norm, merge_tail=True):
    """Interval-variance constants ``a = A^2/2`` and ``b = 2 U^2``.

    A complete block has L2 norm in ``[A, A + sup_norm)``, so ``U = A + sup_norm``.
    A merged tail adds less than ``A`` to the last block, giving
    ``U = 2A + sup_norm``. The factor 2 on each side leaves room for the
    inter-block covariances.
    """
    U = (2.0 * A if merge_tail else A) + sup_norm
    return A * A / 2.0, 2.0 * U * U


def block_sums(partition, batch, scale=None):
    """Block sums ``Z_j`` divided by ``scale`` (``tau`` by default)."""
    X = check_batch(batch)
    scale = partition.tau if scale is None else scale
    starts = np.array([lo for lo, _ in partition.blocks])
    lab = partition.labels(X.shape[1])
    Xb = np.where(lab >= 0, X, 0.0)
    csum = np.add.reduceat(Xb, starts, axis=1)
    return csum / scale


def gap_remainder(partition, batch):
    """``R = tau^{-1} sum_{j in gaps} g_j(X_j)`` per path."""
    X = check_batch(batch)
    lab = partition.labels(X.shape[1])
    return X[:, lab < 0].sum(axis=1) / partition.tau


@dataclass
class BlockMoments:
    moments: np.ndarray
    se: np.ndarray
    max: float
    max_se: float
    argmax: int

    def to_dict(self):
        return {"max": self.max, "max_se": self.max_se, "argmax": self.argmax, "moments": self.moments.tolist()}


def block_third_moments(partition, batch):
    """MC ``E|Y_j|^3`` for ``Y_j = Z_j / tau`` with standard errors and the max."""
    Y = np.abs(block_sums(partition, batch)) ** 3
    n = Y.shape[0]
    m = Y.mean(axis=0)
    se = Y.std(axis=0, ddof=1) / math.sqrt(n)
    j = int(np.argmax(m))
    return BlockMoments(m, se, float(m[j]), float(se[j]), j)


def block_covariance_matrix(partition, ledger):
    """``Cov(Z_i, Z_j)`` between blocks from a covariance ledger."""
    k = partition.k_N
    lab = partition.labels(ledger.n)
    if ledger.dense is not None:
        B = np.zeros((k, ledger.n))
        on = lab >= 0
        B[lab[on], np.flatnonzero(on)] = 1.0
        return B @ ledger.dense @ B.T
    C = np.zeros((k, k))
    bands = ledger.bands
    n = ledger.n
    for h in range(bands.shape[0]):
        i = np.arange(n - h)
        li, lj = lab[i], lab[i + h]
        ok = (li >= 0) & (lj >= 0)
        w = bands[h, : n - h][ok]
        np.add.at(C, (li[ok], lj[ok]), w)
        if h:
            np.add.at(C, (lj[ok], li[ok]), w)
    return C


def _lag_value(profile, m):
    if m <= 0:
        return 1.0
    if isinstance(profile, MixingProfile):
        lags = np.asarray(profile.lags)
        vals = np.asarray(profile.values)
        if m in profile.lags:
            return float(vals[list(profile.lags).index(m)])
        if m > lags.max():
            return float(vals[-1])
        # largest stored lag below m bounds a non-increasing profile
        return float(vals[lags[lags < m].argmax()] if np.any(lags < m) else 1.0)
    return float(profile(m))


@dataclass
class InterBlockReport:
    measured: float
    rio_bound: float
    paper_bound: float
    assumption_bound: float
    sum_block_variances: float
    linear: bool
    ratio: float = field(default=float("nan"))

    def to_dict(self):
        return dict(self.__dict__)


def inter_block_covariance_sum(partition, ledger, alpha_profile, C3, c_mix=None):
    """Measured ``2 |sum_{i<j} Cov(Y_i, Y_j)|`` against its bounds.

    ``rio_bound`` sums ``6 C3^{2/3} alpha(d_ij)^{1/3}`` over block pairs with
    ``d_ij`` the index distance between blocks. ``paper_bound`` and
    ``assumption_bound`` use the constants ``12 (1/2)^{1/3}`` and
    ``24 (1/2)^{1/3}`` times ``C3 c_mix k_N``.
    """
    C = block_covariance_matrix(partition, ledger) / partition.tau**2
    k = partition.k_N
    iu = np.triu_indices(k, 1)
    measured = 2.0 * abs(float(C[iu].sum()))
    starts = np.array([lo for lo, _ in partition.blocks])
    ends = np.array([hi for _, hi in partition.blocks])
    rio = 0.0
    for i, j in zip(*iu):
        a = _lag_value(alpha_profile, int(starts[j] - ends[i]))
        rio += 6.0 * C3 ** (2.0 / 3.0) * a ** (1.0 / 3.0)
    rio *= 2.0
    if c_mix is None:
        dm = getattr(alpha_profile, "decay_model", None)
        c_mix = dm[0] if dm else 1.0
    paper = PAPER_COVARIANCE_CONSTANT * C3 * c_mix * k
    assumption = ASSUMPTION_COVARIANCE_CONSTANT * C3 * c_mix * k
    sv = float(np.trace(C))
    ratio = measured / rio if rio > 0 else (0.0 if measured == 0 else float("inf"))
    return InterBlockReport(measured, rio, paper, assumption, sv, sv >= 2.0 * measured, ratio)


# ---------------------------------------------------------------- estimators


def _as_oracle(X):
    if hasattr(X, "variance") and hasattr(X, "cross"):
        return X
    return CovarianceLedger.from_samples(check_batch(X))


class _Blocker(TransformerMixin, BaseEstimator):
    """``fit`` takes a covariance ledger (or a sample batch for an MC ledger);
    ``transform`` maps a batch to block sums divided by ``tau``."""

    def transform(self, X):
        return block_sums(self.partition_, X)


class TwoStepBlocker(_Blocker):
    def __init__(self, tau=1.0):
        self.tau = tau

    def fit(self, X, y=None, third_moments=None):
        oracle = _as_oracle(X)
        self.partition_ = build_two_step(oracle, third_moments, self.tau)
        return self


class GapBlocker(_Blocker):
    def __init__(self, alpha=1.5, beta=0.5):
        self.alpha = alpha
        self.beta = beta

    def fit(self, X, y=None):
        self.partition_ = build_with_gaps(_as_oracle(X), self.alpha, self.beta)
        return self

    def remainder(self, X):
        return gap_remainder(self.partition_, X)


class BoundedSummandBlocker(_Blocker):
    def __init__(self, A=2.0, merge_tail=True):
        self.A = A
        self.merge_tail = merge_tail

    def fit(self, X, y=None):
        self.partition_ = build_bounded_summand(_as_oracle(X), self.A, merge_tail=self.merge_tail)
        return self

    def transform(self, X):
        return block_sums(self.partition_, X, scale=1.0)


BLOCKERS = {"two-step": TwoStepBlocker, "gaps": GapBlocker, "bounded-summand": BoundedSummandBlocker}
