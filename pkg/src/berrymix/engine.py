"""Monte Carlo estimation of Kolmogorov distances and rate exponents.

An experiment generates paths chunk by chunk, evaluates a statistic,
normalizes by ``sigma_N`` and records the Kolmogorov distance to the standard
normal for every horizon in a grid, then fits ``log D_N`` against ``log N``.
"""

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy import optimize, stats
from scipy.special import erfc
from sklearn.base import BaseEstimator

from . import __version__
from .blocks import (
    BLOCKERS,
    block_covariance_matrix,
    block_sums,
    build_bounded_summand,
    build_two_step,
    build_with_gaps,
)
from .exceptions import (
    BerrymixError,
    DegenerateVarianceError,
    InsufficientDataError,
    NonFiniteSampleError,
    UnsupportedStatisticError,
    ValidationError,
)
from .processes import process_from_dict
from .statistics import get_smooth_map, make_statistic

DKW_LEVEL = 0.99
SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------- distances


def std_normal_cdf(x):
    """Standard normal CDF with ``Phi(-x) = 1 - Phi(x)`` by construction."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("std_normal_cdf needs finite input")
    tail = 0.5 * erfc(np.abs(x) / SQRT2)
    out = np.where(x >= 0, 1.0 - tail, tail)
    return out if out.ndim else float(out)


def dkw_band(n, level=DKW_LEVEL):
    """Half-width of the DKW confidence band for an ``n``-sample ECDF."""
    return math.sqrt(math.log(2.0 / (1.0 - level)) / (2.0 * n))


@dataclass(frozen=True)
class KolmogorovResult:
    D: float
    dkw: float
    n: int

    @property
    def above_floor(self):
        return self.D > self.dkw


def kolmogorov_distance(samples, level=DKW_LEVEL):
    """``sup_x |F_n(x) - Phi(x)|`` for the empirical law of ``samples``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise ValidationError("kolmogorov_distance needs at least one sample")
    bad = ~np.isfinite(x)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteSampleError(f"non-finite normalized statistic on path {i}", index=i)
    n = x.size
    F = std_normal_cdf(np.sort(x))
    i = np.arange(1, n + 1)
    D = max(float(np.max(i / n - F)), float(np.max(F - (i - 1) / n)))
    return KolmogorovResult(D, dkw_band(n, level), n)


# ---------------------------------------------------------------- rate fit


class RateFitter(BaseEstimator):
    """Weighted least squares for the decay of ``D_N``.

    ``model="polynomial"`` regresses ``log D`` on ``log N``.
    ``model="log-power"`` regresses ``log D + log(N)/2`` on ``log log N`` so the
    slope is the power of ``log N``. Weights are ``(D / dkw)^2``. Points with
    ``D <= dkw`` are excluded as indistinguishable from MC noise.
    """

    def __init__(self, model="polynomial", level=0.95):
        self.model = model
        self.level = level

    def fit(self, N, D, dkw=None):
        N = np.asarray(N, dtype=float)
        D = np.asarray(D, dtype=float)
        dkw = np.zeros_like(D) if dkw is None else np.asarray(dkw, dtype=float)
        if self.model not in ("polynomial", "log-power"):
            raise ValidationError(f"unknown rate model {self.model!r}")
        if N.size != D.size or N.size != dkw.size:
            raise ValidationError("N, D and dkw must have equal length")
        keep = D > dkw
        self.excluded_ = [float(n) for n in N[~keep]]
        self.slope_ = self.intercept_ = self.se_ = None
        self.ci_ = None
        if not keep.any():
            self.status_ = "noise-floor"
            return self
        if keep.sum() < 3:
            self.status_ = "insufficient-points"
            return self
        x, y = self._design(N[keep], D[keep])
        rel = np.where(dkw[keep] > 0, dkw[keep] / D[keep], 1.0)
        w = 1.0 / rel**2
        X = np.column_stack([np.ones_like(x), x])
        XtW = X.T * w
        beta = np.linalg.solve(XtW @ X, XtW @ y)
        resid = y - X @ beta
        dof = x.size - 2
        s2 = float(w @ resid**2) / dof if dof > 0 else 0.0
        cov = s2 * np.linalg.inv(XtW @ X)
        se = math.sqrt(max(cov[1, 1], 0.0))
        q = stats.t.ppf(0.5 + self.level / 2, dof) if dof > 0 else float("inf")
        self.intercept_, self.slope_ = float(beta[0]), float(beta[1])
        self.se_ = se
        self.ci_ = (self.slope_ - q * se, self.slope_ + q * se)
        self.status_ = "ok"
        return self

    def _design(self, N, D):
        if self.model == "polynomial":
            return np.log(N), np.log(D)
        return np.log(np.log(N)), np.log(D) + 0.5 * np.log(N)

    def predict(self, N):
        N = np.asarray(N, dtype=float)
        if self.slope_ is None:
            raise InsufficientDataError("no fitted rate")
        if self.model == "polynomial":
            return np.exp(self.intercept_ + self.slope_ * np.log(N))
        return np.exp(self.intercept_ + self.slope_ * np.log(np.log(N)) - 0.5 * np.log(N))

    def summary(self):
        return {
            "model": self.model,
            "status": self.status_,
            "slope": self.slope_,
            "intercept": self.intercept_,
            "se": self.se_,
            "ci": None if self.ci_ is None else list(self.ci_),
            "level": self.level,
            "excluded": self.excluded_,
        }


def rate_fit(N, D, dkw=None, model="polynomial", level=0.95):
    return RateFitter(model, level).fit(N, D, dkw).summary()


# ---------------------------------------------------------------- bounds


def theorem1_rhs(A, eps_p, N, E_R, gamma, model="polynomial"):
    """Composite bound ``A N^{-1/2+eps} + A N^{-1/2} E_R + A gamma N^eps``.

    ``model="exponential"`` uses ``(log N)^2`` and ``(log N)^3`` in place of
    ``N^eps`` in the first and last terms.
    """
    if A <= 0 or eps_p < 0:
        raise ValidationError("need A > 0 and eps_p >= 0")
    N = np.asarray(N, dtype=float)
    if model == "exponential":
        L = np.log(N)
        out = A * N**-0.5 * L**2 + A * N**-0.5 * E_R + A * gamma * L**3
    else:
        out = A * N ** (-0.5 + eps_p) + A * N**-0.5 * E_R + A * gamma * N**eps_p
    return out if np.ndim(out) else float(out)


def theorem4_bound(r_N, sigma_prime, sigma, var_Rprime, delta=0.5, C=3.0):
    """``3 r + C |sigma'/sigma - 1|^{1-delta} + C (Var R' / sigma^2)^{1/3}``."""
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    return (
        3.0 * r_N
        + C * abs(sigma_prime / sigma - 1.0) ** (1.0 - delta)
        + C * (var_Rprime / sigma**2) ** (1.0 / 3.0)
    )


def window_shift_width(v):
    """Width ``w`` with ``w^2 p (1 - p) = v`` for ``p = Phi(0) - Phi(-w)``.

    The perturbation ``R' = w sigma 1{T/sigma in (-w, 0)}`` then has
    ``Var(R')/sigma^2 = v`` under a Gaussian baseline.
    """
    if not 0 < v < 0.05:
        raise ValidationError("window-shift perturbation needs 0 < v < 0.05")

    def f(w):
        p = 0.5 - std_normal_cdf(-w)
        return w * w * p * (1 - p) - v

    return float(optimize.brentq(f, 1e-9, 5.0, xtol=1e-15))


@dataclass
class PerturbationOutcome:
    v: float
    width: float
    r_N: float
    measured: float
    sigma_prime: float
    bound: float

    def to_dict(self):
        return dict(self.__dict__)


def perturbation_check(T, sigma, v, delta=0.5, C=3.0):
    """Perturb ``T`` by a window shift of relative variance ``v`` and compare.

    ``measured`` is the Kolmogorov distance of ``T'/sd(T')`` and ``r_N`` that
    of ``T/sigma``; ``Var(R')`` and ``sd(T')`` are the sample values.
    """
    T = np.asarray(T, dtype=float)
    w = window_shift_width(v)
    z = T / sigma
    Rp = w * sigma * ((z > -w) & (z < 0))
    Tp = T + Rp
    sp = float(Tp.std(ddof=1))
    r = kolmogorov_distance(z).D
    measured = kolmogorov_distance(Tp / sp).D
    bound = theorem4_bound(r, sp, sigma, float(Rp.var(ddof=1)), delta, C)
    return PerturbationOutcome(v, w, r, measured, sp, bound)


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's payload.

    ``threads`` and ``chunk_size`` only affect scheduling, not results, and
    are excluded from :meth:`to_dict`.
    """

    process: dict
    statistic: dict = field(default_factory=lambda: {"kind": "linear"})
    N_grid: tuple = (256, 512, 1024)
    n_paths: int = 1000
    root_seed: int = 0
    rate_model: str = "polynomial"
    blocks: dict = None
    normalization: str = "sigma"
    eps_p: float = 0.0
    A: float = 1.0
    gamma: dict = field(default_factory=lambda: {"epsilon": 0.3, "max_pairs": 64, "paths": 2000})
    dimension: int = 1
    dkw_level: float = DKW_LEVEL
    plot: bool = False
    name: str = "experiment"
    threads: int = 1
    chunk_size: int = 256

    def __post_init__(self):
        self.N_grid = tuple(int(n) for n in self.N_grid)
        if any(b <= a for a, b in zip(self.N_grid, self.N_grid[1:])) or not self.N_grid:
            raise ValidationError("N_grid must be non-empty and strictly increasing")
        if self.N_grid[0] < 2:
            raise ValidationError("N_grid entries must be at least 2")
        if self.n_paths < 1000:
            raise ValidationError("n_paths must be at least 1000")
        if self.rate_model not in ("polynomial", "log-power"):
            raise ValidationError(f"unknown rate model {self.rate_model!r}")
        if self.normalization not in ("sigma", "sd"):
            raise ValidationError("normalization must be 'sigma' or 'sd'")
        if self.threads < 1 or self.chunk_size < 1:
            raise ValidationError("threads and chunk_size must be positive")

    def to_dict(self):
        return {
            "name": self.name,
            "process": self.process,
            "statistic": self.statistic,
            "N_grid": list(self.N_grid),
            "n_paths": int(self.n_paths),
            "root_seed": int(self.root_seed),
            "rate_model": self.rate_model,
            "blocks": self.blocks,
            "normalization": self.normalization,
            "eps_p": float(self.eps_p),
            "A": float(self.A),
            "gamma": self.gamma,
            "dimension": int(self.dimension),
            "dkw_level": float(self.dkw_level),
            "plot": bool(self.plot),
        }

    def digest(self):
        return config_digest(self.to_dict())


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=True)


def config_digest(doc):
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- experiments


def sigma_for_normalization(process, N, sums=None, floor=1e-12):
    """``sigma_N = sqrt(Var S_N)`` from the exact ledger, else from path sums.

    Returns
    -------
    sigma : float
    source : {"exact", "mc"}
    se : float
        Standard error of ``sigma`` (0 when exact).
    """
    try:
        var = float(process.ledger(N).total())
        source, se = "exact", 0.0
    except (NotImplementedError, BerrymixError):
        if sums is None:
            raise
        s = np.asarray(sums, dtype=float)
        var = float(s.var(ddof=1))
        c = s - s.mean()
        var_se = math.sqrt(max(float(np.mean(c**4)) - var * var, 0.0) / s.size)
        source, se = "mc", var_se / (2 * math.sqrt(var)) if var > 0 else float("inf")
    if not var >= floor:
        raise DegenerateVarianceError(f"Var(S_N) = {var:.3g} is below the floor {floor:.3g}")
    return math.sqrt(var), source, se


class _Chunk:
    """Per-chunk scalars and column accumulators, reduced in chunk order."""

    def __init__(self, T, S, R, abs3):
        self.T, self.S, self.R, self.abs3 = T, S, R, abs3


def _evaluate_chunk(config, process, statistic, N, ids, partition, sigma):
    if config.dimension > 1:
        X = np.stack(
            [process.paths(N, ids, config.root_seed, stream=k + 1) for k in range(config.dimension)], axis=-1
        )
        first = X[..., 0]
    else:
        X = first = process.paths(N, ids, config.root_seed, stream=0)
    if not np.all(np.isfinite(X)):
        bad = int(ids[np.argwhere(~np.isfinite(X))[0][0]])
        raise NonFiniteSampleError(f"non-finite sample on path {bad}", index=bad)
    abs3 = np.sum(np.abs(first) ** 3, axis=0)
    if partition is not None:
        X = block_sums(partition, X)
    res = statistic.evaluate(X, sigma=sigma)
    return _Chunk(res.T, res.S, res.R, abs3)


def _statistic_sigma(config, process, N, partition):
    """Normalizing sigma for the statistic and its source."""
    if partition is not None:
        ledger = process.ledger(N)
        C = block_covariance_matrix(partition, ledger) / partition.tau**2
        return math.sqrt(float(C.sum())), "exact"
    if config.dimension > 1:
        # coordinates are independent copies, so Var(S) = |H'(0)|^2 Var(S_N)
        grad = np.asarray(get_smooth_map(config.statistic.get("H", "sin_sum")).grad0(config.dimension))
        var = float(process.ledger(N).total()) * float(grad @ grad)
        if var <= 0:
            raise DegenerateVarianceError("the linear part of H has zero variance")
        return math.sqrt(var), "exact"
    sigma, source, _ = sigma_for_normalization(process, N)
    return sigma, source


def _partition_for(config, process, N):
    if not config.blocks:
        return None
    doc = dict(config.blocks)
    kind = doc.pop("kind")
    ledger = process.ledger(N)
    sigma = math.sqrt(ledger.total())
    if kind == "two-step":
        tau = doc.get("tau") or sigma ** float(doc.get("tau_exponent", 0.5))
        moments = None
        if doc.get("exceptional", False):
            moments = _third_moment_profile(process, N)
        return build_two_step(ledger, moments, tau)
    if kind == "gaps":
        return build_with_gaps(ledger, float(doc["alpha"]), float(doc["beta"]), sigma)
    if kind == "bounded-summand":
        return build_bounded_summand(ledger, float(doc["A"]))
    raise ValidationError(f"unknown block construction {kind!r}; known: {sorted(BLOCKERS)}")


def _third_moment_profile(process, N, n=4000):
    X = process.paths(N, np.arange(n), 0, stream=99)
    return np.mean(np.abs(X) ** 3, axis=0)


def _run_point(config, process, statistic, N, threads):
    partition = _partition_for(config, process, N)
    sigma, source = _statistic_sigma(config, process, N, partition)
    ids = np.arange(config.n_paths)
    chunks = [ids[a : a + config.chunk_size] for a in range(0, config.n_paths, config.chunk_size)]
    work = lambda c: _evaluate_chunk(config, process, statistic, N, c, partition, sigma)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    T = np.concatenate([p.T for p in parts])
    R = np.concatenate([p.R for p in parts])
    abs3 = parts[0].abs3.copy()
    for p in parts[1:]:
        abs3 += p.abs3
    rho3 = float(np.max(abs3) / config.n_paths)
    scale = sigma if config.normalization == "sigma" else float(T.std(ddof=1))
    kd = kolmogorov_distance(T / scale, config.dkw_level)
    absR = np.abs(R)
    row = {
        "N": N,
        "sigma_N": sigma,
        "sigma_source": source,
        "D_N": kd.D,
        "dkw": kd.dkw,
        "above_floor": kd.above_floor,
        "E_R": float(absR.mean()),
        "E_R_se": float(absR.std(ddof=1) / math.sqrt(absR.size)),
        "rho3": rho3,
        "gamma": None,
        "gamma_se": None,
    }
    if partition is not None:
        row["k_N"] = partition.k_N
        row["tau"] = partition.tau
    gcfg = config.gamma or {}
    n_g = min(int(gcfg.get("paths", 2000)), config.n_paths)
    try:
        if config.dimension > 1 or partition is not None:
            raise UnsupportedStatisticError("gamma not estimated for vector or blocked runs")
        Xg = process.paths(N, np.arange(n_g), config.root_seed, stream=0)
        g = statistic.gamma(Xg, epsilon=float(gcfg.get("epsilon", 0.3)), max_pairs=int(gcfg.get("max_pairs", 64)))
        row["gamma"], row["gamma_se"] = g.gamma, g.se
    except UnsupportedStatisticError:
        row["gamma"] = "not defined"
    row["theorem1_rhs"] = theorem1_rhs(
        config.A, config.eps_p, N, row["E_R"], row["gamma"] if isinstance(row["gamma"], float) else 0.0
    )
    return row


@dataclass
class ExperimentReport:
    config: dict
    digest: str
    rows: list
    errors: list
    fit: dict
    status: str
    version: str = __version__

    def payload(self):
        """Deterministic content, without timestamps."""
        return {
            "config": self.config,
            "config_digest": self.digest,
            "rows": self.rows,
            "errors": self.errors,
            "fit": self.fit,
            "status": self.status,
            "version": self.version,
        }

    def to_json(self):
        return json.dumps(self.payload(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def table_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "sigma_N", "D_N", "dkw", "E_R", "gamma"])
        for r in self.rows:
            w.writerow([r["N"], repr(r["sigma_N"]), repr(r["D_N"]), repr(r["dkw"]), repr(r["E_R"]), r["gamma"]])
        return buf.getvalue()

    def plot_svg(self):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = "berrymix"
        N = np.array([r["N"] for r in self.rows], dtype=float)
        D = np.array([r["D_N"] for r in self.rows])
        dkw = np.array([r["dkw"] for r in self.rows])
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.errorbar(N, D, yerr=dkw, fmt="o", capsize=3, label="D_N")
        ax.plot(N, dkw, ":", color="grey", label="DKW floor")
        if self.fit.get("slope") is not None and self.fit.get("model") == "polynomial":
            ax.plot(N, np.exp(self.fit["intercept"]) * N ** self.fit["slope"], "-", label=f"slope {self.fit['slope']:.3f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("Kolmogorov distance")
        ax.legend()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        return buf.getvalue()

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(doc["config"], doc["config_digest"], doc["rows"], doc["errors"], doc["fit"], doc["status"], doc["version"])


def build_process(doc):
    return process_from_dict(doc)


def run_experiment(config, threads=None):
    """Run every grid point and fit the rate.

    A failing grid point is recorded in ``errors`` and skipped. Fewer than
    three valid points give status ``no-fit``.
    """
    threads = config.threads if threads is None else threads
    process = build_process(config.process)
    statistic = make_statistic(config.statistic)
    rows, errors = [], []
    for N in config.N_grid:
        try:
            rows.append(_run_point(config, process, statistic, N, threads))
        except (BerrymixError, NotImplementedError) as exc:
            errors.append({"N": N, "error": f"{type(exc).__name__}: {exc}"})
    if len(rows) < 3:
        fit = {"model": config.rate_model, "status": "no-fit", "slope": None, "ci": None}
        status = "no-fit"
    else:
        fit = rate_fit(
            [r["N"] for r in rows], [r["D_N"] for r in rows], [r["dkw"] for r in rows], config.rate_model
        )
        status = fit["status"]
    return ExperimentReport(config.to_dict(), config.digest(), rows, errors, fit, status)


# ---------------------------------------------------------------- persistence


def _atomic_write(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report, out_dir, plot=None, started=None):
    """Write report.json, table.csv, optional plot.svg and manifest.json.

    Every file is written atomically; on failure the files already written
    by this call are removed.
    """
    os.makedirs(out_dir, exist_ok=True)
    plot = report.config.get("plot", False) if plot is None else plot
    files = {"report.json": report.to_json(), "table.csv": report.table_csv()}
    if plot:
        files["plot.svg"] = report.plot_svg()
    written = []
    try:
        for name, text in files.items():
            _atomic_write(os.path.join(out_dir, name), text)
            written.append(name)
        now = datetime.now(timezone.utc).isoformat()
        manifest = {
            "config_digest": report.digest,
            "root_seed": report.config["root_seed"],
            "tool_version": report.version,
            "started": started or now,
            "finished": now,
            "files": {n: hashlib.sha256(files[n].encode("utf-8")).hexdigest() for n in written},
        }
        manifest["files"]["manifest.json"] = None
        _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        written.append("manifest.json")
    except BaseException:
        for name in written:
            p = os.path.join(out_dir, name)
            if os.path.exists(p):
                os.unlink(p)
        raise
    return [os.path.join(out_dir, n) for n in written]
