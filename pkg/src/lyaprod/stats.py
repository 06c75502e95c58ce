"""Reference spectra and Monte-Carlo aggregation over independent chains."""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import (
    ChainConfig,
    ExponentEstimate,
    least_exponent_distance,
    second_exponent_pair,
    top_exponent,
)
from .ensembles import EnsembleSpec, Family
from .structure import DEFAULT_C

EULER_GAMMA = 0.57721566490153286061

# B_2k / 2k for the asymptotic digamma series, k = 1..7
_DIGAMMA_COEFFS = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def digamma(d: float) -> float:
    """Psi(d) = Gamma'(d) / Gamma(d) for d > 0.

    Lifts d to >= 10 with Psi(d + 1) = Psi(d) + 1/d, then sums the asymptotic
    series log d - 1/(2d) - sum_k B_2k / (2k d^2k).
    """
    d = float(d)
    if not d > 0 or not math.isfinite(d):
        raise ValueError(f"digamma needs a finite d > 0, got {d}")
    shift = 0.0
    while d < 10.0:
        shift -= 1.0 / d
        d += 1.0
    inv2 = 1.0 / (d * d)
    series = 0.0
    for c in reversed(_DIGAMMA_COEFFS):
        series = (series + c) * inv2
    return shift + math.log(d) - 0.5 / d - series


def newman_exponents(n: int) -> list[float]:
    """Gaussian-ensemble exponents mu_i = (log 2 + Psi((n - i + 1)/2) - log n) / 2."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return [0.5 * (math.log(2) + digamma((n - i + 1) / 2) - math.log(n)) for i in range(1, n + 1)]


def ssb_exponent(n: int, d: int, lam: float, E: float) -> float:
    """Weak-disorder exponent lam^2 (1 + 2(n - d)) / (8 sin^2 k), E = 2 cos k.

    Second order only; the O(lam^3) remainder is not included.
    """
    if not 1 <= d <= n:
        raise ValueError(f"d must lie in [1, {n}], got {d}")
    if E == 0 or abs(E) >= 2:
        raise ValueError(f"need 0 < |E| < 2, got E={E}")
    k = math.acos(E / 2)
    return lam * lam * (1 + 2 * (n - d)) / (8 * math.sin(k) ** 2)


def reference_spectrum(spec: EnsembleSpec) -> list[float] | None:
    """Closed-form exponents for the ensemble, when one is known.

    Gaussian iid: Newman's formula shifted by log(scale * sqrt(n)).
    Symplectic Wigner: the weak-disorder values and their negatives.
    """
    if spec.family is Family.GAUSSIAN:
        shift = math.log(spec.scale * math.sqrt(spec.n))
        return [m + shift for m in newman_exponents(spec.n)]
    if spec.family is Family.SYMPLECTIC_WIGNER and spec.scale == 1.0:
        p = spec.model_params
        try:
            pos = [ssb_exponent(spec.n, d, p["lambda"], p["E"]) for d in range(1, spec.n + 1)]
        except ValueError:
            return None
        return pos + [-g for g in reversed(pos)]
    return None


@dataclass
class SpectrumReport:
    estimates: list[ExponentEstimate]
    reference: list[float]
    max_abs_dev: float
    within_tolerance: bool


def spectrum_report(estimates, reference, sigmas: float = 3.0, atol: float = 5e-3) -> SpectrumReport:
    """Compare estimates to a reference; each must be within max(sigmas*stderr, atol)."""
    if len(estimates) != len(reference):
        raise ValueError("estimates and reference differ in length")
    devs = [abs(e.value - r) for e, r in zip(estimates, reference)]
    ok = all(d <= max(sigmas * e.stderr, atol) for d, e in zip(devs, estimates))
    return SpectrumReport(list(estimates), list(reference), max(devs, default=0.0), ok)


# -- Monte-Carlo over trials -----------------------------------------------

class EstimatorKind(str, enum.Enum):
    TOP = "top"
    SECOND_SUM = "second_sum"
    LEAST = "least"


def run_estimator(config: ChainConfig, kind: EstimatorKind, backend=None) -> ExponentEstimate:
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.TOP:
        return top_exponent(config, backend=backend)
    if kind is EstimatorKind.SECOND_SUM:
        return second_exponent_pair(config, backend=backend)
    return least_exponent_distance(config, backend=backend)


def deviation_statistic(est: ExponentEstimate, kind: EstimatorKind, dim: int) -> float:
    """Per-trial statistic whose exceedance of t the tail curves count.

    Top / SecondSum: |value|.  Least: -value / log(dim) - 1/2, so that
    ``stat >= t`` is the event value <= -(1/2 + t) log(dim).  A died chain has
    log-norm -inf and exceeds every t.
    """
    if est.died:
        return math.inf
    if EstimatorKind(kind) is EstimatorKind.LEAST:
        return -est.value / math.log(dim) - 0.5
    return abs(est.value)


def _chunk(args):
    config, kind, ids, backend = args
    vals, died = [], []
    for sid in ids:
        est = run_estimator(config.with_stream(sid), kind, backend)
        vals.append(est.value)
        died.append(est.died)
    return vals, died


def trial_values(config: ChainConfig, kind, trials: int, workers: int = 1, backend=None):
    """Estimator values for stream ids 0..trials-1; returns (values, died).

    The result is independent of ``workers``: each trial owns its stream and
    chunks are reassembled in stream order.
    """
    kind = EstimatorKind(kind)
    ids = list(range(trials))
    if workers <= 1 or trials < 2:
        vals, died = _chunk((config, kind, ids, backend))
    else:
        n_chunks = min(trials, 4 * workers)
        bounds = np.linspace(0, trials, n_chunks + 1).astype(int)
        jobs = [(config, kind, ids[a:b], backend) for a, b in zip(bounds[:-1], bounds[1:])]
        vals, died = [], []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for v, d in pool.map(_chunk, jobs):
                vals.extend(v)
                died.extend(d)
    return np.asarray(vals, dtype=float), np.asarray(died, dtype=bool)


@dataclass
class TailCurve:
    t_grid: np.ndarray
    probs: np.ndarray
    stderr: np.ndarray
    trials: int
    N: int
    n: int
    estimator_kind: EstimatorKind
    died_fraction: float


def tail_from_statistics(stats, t_grid, trials, N, n, kind, died_fraction) -> TailCurve:
    t_grid = np.asarray(t_grid, dtype=float)
    probs = np.array([(stats >= t).mean() for t in t_grid])
    stderr = np.sqrt(probs * (1 - probs) / trials)
    return TailCurve(t_grid, probs, stderr, trials, N, n, EstimatorKind(kind), died_fraction)


def tail_curve(config: ChainConfig, kind, t_grid, trials: int, workers: int = 1,
               backend=None) -> TailCurve:
    """Empirical exceedance probabilities P(stat >= t) over independent chains."""
    kind = EstimatorKind(kind)
    t_grid = np.asarray(t_grid, dtype=float)
    if trials < 100:
        raise ValueError(f"tail_curve needs trials >= 100, got {trials}")
    if t_grid.ndim != 1 or not len(t_grid) or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be a non-empty ascending sequence")
    vals, died = trial_values(config, kind, trials, workers, backend)
    dim = config.ensemble.dim
    stats = np.array([
        math.inf if d else deviation_statistic(
            ExponentEstimate(0, v, 0.0, config.N, dim), kind, dim)
        for v, d in zip(vals, died)
    ])
    return tail_from_statistics(stats, t_grid, trials, config.N, config.ensemble.n, kind,
                                float(died.mean()))


def deviation_rate_fit(curve_N: TailCurve, curve_2N: TailCurve, t: float) -> float:
    """log P_N(t) / log P_2N(t); about 0.5 when the tail rate is linear in N.

    Returns nan (with a RuntimeWarning) if either probability is 0 or 1.
    """
    if curve_2N.N != 2 * curve_N.N:
        raise ValueError(f"need curves at N and 2N, got N={curve_N.N} and {curve_2N.N}")
    probs = []
    for c in (curve_N, curve_2N):
        idx = np.flatnonzero(np.isclose(c.t_grid, t, rtol=0, atol=1e-12))
        if not idx.size:
            raise ValueError(f"t={t} not on the curve's t_grid")
        probs.append(float(c.probs[idx[0]]))
    p1, p2 = probs
    if not (0 < p1 < 1 and 0 < p2 < 1):
        warnings.warn(f"rate fit undefined at t={t}: P_N={p1}, P_2N={p2}", RuntimeWarning,
                      stacklevel=2)
        return math.nan
    return math.log(p1) / math.log(p2)


def calibrate_t(curve: TailCurve, lo: float = 0.05, hi: float = 0.5) -> float:
    """Grid t whose probability is the smallest one inside [lo, hi].

    The smallest admissible probability puts the rate fit furthest into the
    large-deviation regime.
    """
    ok = np.flatnonzero((curve.probs >= lo) & (curve.probs <= hi))
    if not ok.size:
        raise ValueError(f"no t on the grid has probability in [{lo}, {hi}]")
    return float(curve.t_grid[ok[np.argmin(curve.probs[ok])]])


@dataclass
class IncrementSummary:
    mean: float
    variance: float
    max_abs: float
    clipped_count: int
    threshold: float


def increment_diagnostics(est: ExponentEstimate, c: float = DEFAULT_C) -> IncrementSummary:
    """Summary of recorded increments; counts |y_i| > 2 log D with D = exp(n^c)."""
    if est.increments is None:
        raise ValueError("estimate has no recorded increments (set record_increments)")
    y = np.asarray(est.increments, dtype=float)
    threshold = 2.0 * est.n**c
    var = float(y.var(ddof=1)) if y.size > 1 else 0.0
    return IncrementSummary(
        mean=float(y.mean()) if y.size else math.nan,
        variance=var,
        max_abs=float(np.abs(y).max()) if y.size else 0.0,
        clipped_count=int((np.abs(y) > threshold).sum()),
        threshold=threshold,
    )
