import itertools
import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyaprod.chain import ChainConfig, ExponentEstimate, spectrum_qr, top_exponent
from lyaprod.ensembles import EnsembleSpec, RngStream, sample_chain, sample_matrix
from lyaprod.stats import (
    EULER_GAMMA,
    EstimatorKind,
    TailCurve,
    calibrate_t,
    deviation_rate_fit,
    deviation_statistic,
    digamma,
    increment_diagnostics,
    newman_exponents,
    reference_spectrum,
    spectrum_report,
    ssb_exponent,
    tail_curve,
    tail_from_statistics,
    trial_values,
)

from conftest import fixed


def series_digamma(d, M=10**7):
    """-gamma + sum_{k<=M} (1/k - 1/(k + d - 1)), summed in float64 chunks."""
    total = 0.0
    for a in range(1, M + 1, 10**6):
        k = np.arange(a, min(a + 10**6, M + 1), dtype=float)
        total += float(np.sum(1.0 / k - 1.0 / (k + d - 1)))
    return -EULER_GAMMA + total


# -- digamma --------------------------------------------------------------------

@pytest.mark.parametrize("d, ref", [(1.0, -0.5772156649), (0.5, -1.9635100260), (2.0, 0.4227843351)])
def test_digamma_examples(d, ref):
    assert digamma(d) == pytest.approx(ref, abs=1e-10)
    # the truncated series has tail ~ (d - 1) / M
    assert digamma(d) == pytest.approx(series_digamma(d), abs=abs(d - 1) * 1e-7 + 1e-12)


def test_digamma_closed_forms():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-14)
    assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2 * math.log(2), abs=1e-14)


@settings(max_examples=300)
@given(st.floats(1e-3, 1e4))
def test_digamma_against_mpmath(d):
    assert abs(digamma(d) - float(mpmath.digamma(d))) <= 1e-10 * max(1.0, abs(digamma(d)))


@given(st.floats(1e-2, 1e3))
def test_digamma_recurrence(d):
    assert digamma(d + 1) - digamma(d) == pytest.approx(1 / d, rel=1e-11, abs=1e-11)


@pytest.mark.parametrize("d", [0.0, -1.0, math.nan, math.inf])
def test_digamma_domain(d):
    with pytest.raises(ValueError):
        digamma(d)


# -- Newman -----------------------------------------------------------------------

def test_newman_n1_against_monte_carlo():
    mu = newman_exponents(1)
    assert mu == pytest.approx([-0.6352], abs=1e-4)
    g = RngStream(77).generator().standard_normal(4_000_000)
    assert mu[0] == pytest.approx(float(np.mean(np.log(np.abs(g)))), abs=3e-3)


def test_newman_n2_first():
    assert newman_exponents(2)[0] == pytest.approx(-EULER_GAMMA / 2, abs=1e-13)


def test_newman_strictly_decreasing():
    for n in range(1, 101):
        mu = newman_exponents(n)
        assert len(mu) == n
        assert all(a > b for a, b in zip(mu, mu[1:]))


@pytest.mark.parametrize("n", [1, 4, 10, 37])
def test_newman_sum_identity(n):
    want = 0.5 * sum(math.log(2) + float(mpmath.digamma(i / 2)) for i in range(1, n + 1)) \
        - n / 2 * math.log(n)
    assert sum(newman_exponents(n)) == pytest.approx(want, abs=1e-10)


def test_newman_sum_matches_determinant_identity():
    n, N = 10, 100_000
    cfg = ChainConfig(EnsembleSpec("gaussian", n), N, seed=404, record_increments=True)
    ests = spectrum_qr(cfg)
    per_step = np.sum([e.increments for e in ests], axis=0)
    stderr = per_step.std(ddof=1) / math.sqrt(N)
    assert abs(per_step.mean() - sum(newman_exponents(n))) <= 3 * stderr


def test_newman_validation():
    for n in (0, -3, 2.5):
        with pytest.raises(ValueError):
            newman_exponents(n)


def test_reference_spectrum_scale_shift():
    base = reference_spectrum(EnsembleSpec("gaussian", 5))
    unit = reference_spectrum(EnsembleSpec("gaussian", 5, scale=1.0))
    assert np.allclose(np.subtract(unit, base), 0.5 * math.log(5), atol=1e-14)
    assert reference_spectrum(EnsembleSpec("rademacher", 5)) is None
    sym = reference_spectrum(EnsembleSpec("symplectic_wigner", 2,
                                          model_params={"lambda": 0.1, "E": 1.0}))
    assert sym == pytest.approx([0.005, 0.01 / 6, -0.01 / 6, -0.005])


# -- SSB ----------------------------------------------------------------------------

def test_ssb_examples():
    assert ssb_exponent(2, 1, 0.1, 1.0) == pytest.approx(0.005, rel=1e-12)
    assert ssb_exponent(2, 2, 0.1, 1.0) == pytest.approx(0.001667, abs=1e-6)
    for d in (1, 2, 3):
        assert ssb_exponent(3, d, 0.0, 0.5) == 0.0


@pytest.mark.parametrize("args", [(2, 0, 0.1, 1.0), (2, 3, 0.1, 1.0), (2, 1, 0.1, 0.0),
                                  (2, 1, 0.1, 2.0), (2, 1, 0.1, -2.5)])
def test_ssb_domain(args):
    with pytest.raises(ValueError):
        ssb_exponent(*args)


# -- tail curves ----------------------------------------------------------------------

def test_tail_deterministic_chain():
    cfg = fixed(2 * np.eye(2), 10)
    curve = tail_curve(cfg, "top", [0.1], 100)
    assert curve.probs.tolist() == [1.0] and curve.stderr.tolist() == [0.0]
    assert curve.died_fraction == 0.0


def test_tail_far_threshold_is_rare():
    curve = tail_curve(ChainConfig(EnsembleSpec("gaussian", 20), 50, seed=3), "top", [0.5], 2000)
    assert curve.probs[0] <= 0.01


def test_tail_curve_properties():
    cfg = ChainConfig(EnsembleSpec("gaussian", 4), 20, seed=1)
    t = np.linspace(0.0, 0.5, 11)
    curve = tail_curve(cfg, "top", t, 300)
    assert np.all(np.diff(curve.probs) <= 0)
    assert np.allclose(curve.stderr, np.sqrt(curve.probs * (1 - curve.probs) / 300))
    assert curve.estimator_kind is EstimatorKind.TOP and curve.N == 20 and curve.n == 4


def test_tail_independent_of_workers():
    cfg = ChainConfig(EnsembleSpec("rademacher", 3), 30, seed=5)
    a = trial_values(cfg, "least", 120, workers=1)
    b = trial_values(cfg, "least", 120, workers=3)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_tail_preconditions():
    cfg = ChainConfig(EnsembleSpec("gaussian", 2), 5)
    with pytest.raises(ValueError):
        tail_curve(cfg, "top", [0.1], 99)
    with pytest.raises(ValueError):
        tail_curve(cfg, "top", [0.2, 0.1], 100)


def test_gaussian_never_dies_in_tail():
    cfg = ChainConfig(EnsembleSpec("gaussian", 3), 40, seed=2)
    assert tail_curve(cfg, "second_sum", [0.1], 100).died_fraction == 0.0


def test_rademacher_n2_dies_often():
    cfg = ChainConfig(EnsembleSpec("rademacher", 2), 20, seed=2)
    assert tail_curve(cfg, "top", [0.1], 100).died_fraction > 0.5


def test_deviation_statistic():
    est = ExponentEstimate(0, -2.0, 0.1, 10, 4)
    assert deviation_statistic(est, "top", 4) == 2.0
    assert deviation_statistic(est, "least", 4) == pytest.approx(2 / math.log(4) - 0.5)
    dead = ExponentEstimate(1, 0.0, 0.0, 10, 4, died=True, died_step=3)
    assert deviation_statistic(dead, "top", 4) == math.inf


def test_concentration_scale():
    n, N = 20, 100
    vals, died = trial_values(ChainConfig(EnsembleSpec("gaussian", n), N, seed=9), "top", 1000)
    assert not died.any()
    assert vals.std(ddof=1) <= 3 / math.sqrt(N * n)


# -- rate fit --------------------------------------------------------------------------

def _curve(N, probs, t=(0.1, 0.2)):
    probs = np.asarray(probs, dtype=float)
    return TailCurve(np.asarray(t), probs, np.zeros_like(probs), 1000, N, 5, EstimatorKind.TOP, 0.0)


@given(st.floats(0.01, 0.5), st.integers(1, 50))
def test_rate_fit_linear_rate(a, N):
    c1 = _curve(N, [math.exp(-a * N)] * 2)
    c2 = _curve(2 * N, [math.exp(-2 * a * N)] * 2)
    assert deviation_rate_fit(c1, c2, 0.2) == pytest.approx(0.5, rel=1e-12)


def test_rate_fit_flat():
    assert deviation_rate_fit(_curve(10, [0.3, 0.2]), _curve(20, [0.3, 0.2]), 0.1) == 1.0


def test_rate_fit_flags_degenerate():
    with pytest.warns(RuntimeWarning):
        r = deviation_rate_fit(_curve(10, [0.3, 0.0]), _curve(20, [0.3, 0.0]), 0.2)
    assert math.isnan(r)
    with pytest.raises(ValueError):
        deviation_rate_fit(_curve(10, [0.3, 0.2]), _curve(30, [0.3, 0.2]), 0.1)
    with pytest.raises(ValueError):
        deviation_rate_fit(_curve(10, [0.3, 0.2]), _curve(20, [0.3, 0.2]), 0.15)


def test_calibrate_t():
    c = _curve(25, [0.9, 0.4, 0.07, 0.01], t=(0.1, 0.2, 0.3, 0.4))
    assert calibrate_t(c) == 0.3
    with pytest.raises(ValueError):
        calibrate_t(_curve(25, [0.9, 0.01]))


# -- increments ----------------------------------------------------------------------------

def test_increment_diagnostics_deterministic():
    est = top_exponent(fixed(2 * np.eye(3), 50, record_increments=True))
    s = increment_diagnostics(est)
    assert s.mean == pytest.approx(math.log(2), abs=1e-15)
    assert s.variance == 0 and s.clipped_count == 0
    assert s.threshold == pytest.approx(2 * 3**0.05)


def test_increment_variance_gaussian_n1():
    N = 100_000
    cfg = ChainConfig(EnsembleSpec("gaussian", 1, scale=1.0), N, seed=17, record_increments=True)
    s = increment_diagnostics(top_exponent(cfg))
    # Monte-Carlo oracle for Var log|N(0,1)| and its sampling spread at size N
    y = np.log(np.abs(RngStream(18).generator().standard_normal(10_000_000)))
    var_mc = y.var()
    spread = math.sqrt(((y - y.mean()) ** 2).var() / N)
    assert var_mc == pytest.approx(math.pi**2 / 8, abs=5e-3)
    assert s.variance == pytest.approx(var_mc, abs=4 * spread)
    assert s.mean * N == pytest.approx(top_exponent(cfg).value * N, rel=1e-12)


def test_increment_diagnostics_requires_increments():
    with pytest.raises(ValueError):
        increment_diagnostics(top_exponent(ChainConfig(EnsembleSpec("gaussian", 2), 10)))


# -- reports and singularity -------------------------------------------------------------------

def test_spectrum_report():
    ests = [ExponentEstimate(i, v, 0.001, 100, 2) for i, v in ((1, 0.1), (2, -0.2))]
    r = spectrum_report(ests, [0.1005, -0.21])
    assert r.max_abs_dev == pytest.approx(0.01) and not r.within_tolerance
    assert spectrum_report(ests, [0.1005, -0.2021]).within_tolerance
    with pytest.raises(ValueError):
        spectrum_report(ests, [0.1])


def test_rademacher_n2_singularity():
    sign_mats = [np.array(s, dtype=float).reshape(2, 2) for s in itertools.product((-1, 1), repeat=4)]
    exact = sum(np.linalg.det(m) == 0 for m in sign_mats) / 16
    assert exact == 0.5
    spec = EnsembleSpec("rademacher", 2, scale=1.0)
    mats = sample_chain(spec, RngStream(10), 10_000)
    freq = float(np.mean(np.linalg.det(mats) == 0))
    assert freq == pytest.approx(exact, abs=0.02)
