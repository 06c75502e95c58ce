"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
All randomness uses the single seed below, fixed before any run.
"""

import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from lyaprod import oracles
from lyaprod.chain import (
    ChainConfig,
    least_exponent_distance,
    second_exponent_pair,
    spectrum_qr,
    top_exponent,
)
from lyaprod.cli import main as cli_main
from lyaprod.ensembles import EnsembleSpec, RngStream, sample_chain
from lyaprod.stats import (
    calibrate_t,
    deviation_rate_fit,
    digamma,
    newman_exponents,
    reference_spectrum,
    ssb_exponent,
    tail_curve,
    trial_values,
)
from lyaprod.structure import LcdQuery, lcd, small_ball_estimate

SEED = 20261016
RESULTS = []


def report(num, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:>2} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def _small_instances():
    for family in ("gaussian", "rademacher"):
        for s in range(50):
            n, N = 2 + s % 5, 1 + (s * 7) % 8
            cfg = ChainConfig(EnsembleSpec(family, n), N, seed=SEED, stream_id=s)
            yield cfg, sample_chain(cfg.ensemble, cfg.rng, N)


def test_01_newman_spectrum():
    t0 = time.perf_counter()
    n = 10
    cfg = ChainConfig(EnsembleSpec("gaussian", n), 100_000, seed=SEED)
    ests = spectrum_qr(cfg, 10)
    elapsed = time.perf_counter() - t0
    ref = reference_spectrum(cfg.ensemble)
    assert ref == pytest.approx(newman_exponents(n))
    slack = [abs(e.value - r) / max(3 * e.stderr, 5e-3) for e, r in zip(ests, ref)]
    worst = int(np.argmax(slack))
    ok = max(slack) <= 1 and elapsed <= 60
    report(1, "Newman spectrum n=10", ok,
           f"max |dev|/tol = {max(slack):.3f} (i={worst + 1}), runtime {elapsed:.1f}s <= 60s")


def test_02_telescoping_oracles():
    t0 = time.perf_counter()
    worst = {"top": 0.0, "pair": 0.0, "least": 0.0}
    skipped = 0
    for cfg, mats in _small_instances():
        e = np.eye(cfg.ensemble.n)
        N = cfg.N
        top, pair, least = top_exponent(cfg), second_exponent_pair(cfg), least_exponent_distance(cfg)
        if top.died or pair.died or least.died:
            skipped += 1
            continue
        worst["top"] = max(worst["top"], _rel(top.value * N, oracles.log_norm_image(mats, e[0])))
        worst["pair"] = max(worst["pair"], _rel(pair.value * N,
                                                oracles.log_wedge_image(mats, e[0], e[1])))
        worst["least"] = max(worst["least"], _rel(least.value * N,
                                                  oracles.log_last_column_distance(mats)))
    elapsed = time.perf_counter() - t0
    ok = (worst["top"] <= 1e-8 and worst["pair"] <= 1e-8 and worst["least"] <= 1e-6
          and elapsed <= 5)
    report(2, "telescoping oracles", ok,
           f"max rel err top {worst['top']:.1e}, pair {worst['pair']:.1e}, "
           f"least {worst['least']:.1e}; {skipped} died runs skipped; {elapsed:.2f}s <= 5s")


def test_03_determinant_identity():
    worst, skipped = 0.0, 0
    for cfg, mats in _small_instances():
        ests = spectrum_qr(cfg, cfg.ensemble.n)
        if ests[0].died:
            skipped += 1
            continue
        worst = max(worst, _rel(sum(e.value for e in ests) * cfg.N, oracles.log_abs_det(mats)))
    report(3, "determinant identity", worst <= 1e-8,
           f"max rel err {worst:.1e} <= 1e-8 ({skipped} died runs skipped)")


def test_04_top_concentration():
    t0 = time.perf_counter()
    n, N = 50, 200
    cfg = ChainConfig(EnsembleSpec("rademacher", n), N, seed=SEED)
    vals, died = trial_values(cfg, "top", 2000)
    elapsed = time.perf_counter() - t0
    mean, sd = float(vals.mean()), float(vals.std(ddof=1))
    bound_sd = 3 / math.sqrt(N * n)
    ok = abs(mean) <= 2 / n and sd <= bound_sd and not died.any() and elapsed <= 120
    report(4, "top concentration, Rademacher n=50", ok,
           f"|mean| {abs(mean):.4f} <= 0.04, sd {sd:.5f} <= {bound_sd:.5f}, "
           f"died {int(died.sum())}, {elapsed:.1f}s <= 120s")


def test_05_rate_in_N():
    n = 10
    spec = EnsembleSpec("gaussian", n)
    t_grid = np.round(np.arange(0.05, 0.40001, 0.0025), 4)
    c25 = tail_curve(ChainConfig(spec, 25, seed=SEED), "top", t_grid, 5000)
    t = calibrate_t(c25)
    c50 = tail_curve(ChainConfig(spec, 50, seed=SEED), "top", t_grid, 5000)
    ratio = deviation_rate_fit(c25, c50, t)
    i = int(np.flatnonzero(t_grid == t)[0])
    ok = 0.35 <= ratio <= 0.65
    report(5, "rate-in-N fit, Gaussian n=10", ok,
           f"t={t:g}: P_25={c25.probs[i]:.4f}, P_50={c50.probs[i]:.4f}, "
           f"ratio {ratio:.3f} in [0.35, 0.65]")


def test_06_least_lower_bound():
    t0 = time.perf_counter()
    n, N = 20, 1000
    cfg = ChainConfig(EnsembleSpec("gaussian", n), N, seed=SEED)
    vals, died = trial_values(cfg, "least", 100)
    elapsed = time.perf_counter() - t0
    floor = -math.log(n)
    mu_n = 0.5 * (math.log(2) + digamma(0.5) - math.log(n))
    ok = (not died.any() and vals.min() >= floor and abs(vals.mean() - mu_n) <= 0.05
          and elapsed <= 60)
    report(6, "least-exponent lower bound, Gaussian n=20", ok,
           f"min {vals.min():.4f} >= {floor:.4f}, mean {vals.mean():.4f} vs mu_n {mu_n:.4f} "
           f"(|dev| {abs(vals.mean() - mu_n):.4f} <= 0.05), {elapsed:.1f}s <= 60s")


def _brute_lcd(x, gamma, kappa, theta_max, step):
    th = np.arange(1, int(theta_max / step) + 1) * step
    tx = th[:, None] * np.asarray(x, dtype=float)[None, :]
    d = np.linalg.norm(tx - np.rint(tx), axis=1)
    ok = np.flatnonzero(d < np.minimum(gamma * th * np.linalg.norm(x), kappa))
    return float(th[ok[0]]) if ok.size else math.inf


def test_07_lcd_oracles():
    t0 = time.perf_counter()
    q = LcdQuery(0.5, 1.0)
    e1 = np.array([1.0, 0.0])
    diag = np.array([1.0, 1.0]) / math.sqrt(2)
    v1, v2 = lcd(e1, q).value, lcd(diag, q).value
    b1, b2 = _brute_lcd(e1, 0.5, 1.0, 3, 1e-5), _brute_lcd(diag, 0.5, 1.0, 3, 1e-5)
    ok_vals = (abs(v1 - 2 / 3) <= 1e-3 and abs(v2 - math.sqrt(2) / 1.5) <= 1e-3
               and abs(v1 - b1) <= 1e-3 and abs(v2 - b2) <= 1e-3)
    rng = np.random.default_rng(SEED)
    worst = 0.0
    fine = LcdQuery(0.5, 1.0, theta_max=100.0, grid_step=0.005)
    for k in range(20):
        x = rng.standard_normal(1 + k % 4)
        x /= np.linalg.norm(x)
        base = lcd(x, fine).value
        for lam in (0.5, 2.0, 10.0):
            tol = (lam + 1) * fine.grid_step * 1e-3
            worst = max(worst, abs(lam * lcd(lam * x, fine).value - base) / tol)
    elapsed = time.perf_counter() - t0
    ok = ok_vals and worst <= 1 and elapsed <= 10
    report(7, "LCD oracles", ok,
           f"lcd(e1)={v1:.5f} (brute {b1:.5f}), lcd(diag)={v2:.5f} (brute {b2:.5f}), "
           f"scaling dev/resolution {worst:.2f} <= 1, {elapsed:.2f}s <= 10s")


def test_08_small_ball_separation():
    spec = EnsembleSpec("rademacher", 10)
    flat = np.ones(10) / math.sqrt(10)
    g = RngStream(SEED, 1).generator().standard_normal(10)
    g /= np.linalg.norm(g)
    a = small_ball_estimate(flat, 0.1, spec, 100_000, RngStream(SEED, 2))
    b = small_ball_estimate(g, 0.1, spec, 100_000, RngStream(SEED, 3))
    exact = math.comb(10, 5) / 2**10
    ok = abs(a - exact) <= 0.01 and a >= 2 * b
    report(8, "small-ball separation", ok,
           f"flat {a:.4f} (exact {exact:.4f} +- 0.01), generic {b:.4f}, ratio {a / b:.2f} >= 2")


def test_09_symplectic_perturbative():
    t0 = time.perf_counter()
    spec = EnsembleSpec("symplectic_wigner", 2, model_params={"lambda": 0.1, "E": 1.0})
    est = top_exponent(ChainConfig(spec, 1_000_000, seed=SEED))
    elapsed = time.perf_counter() - t0
    ref = ssb_exponent(2, 1, 0.1, 1.0)
    rel = abs(est.value - ref) / ref
    ok = rel <= 0.15 and elapsed <= 120
    report(9, "symplectic weak-disorder exponent", ok,
           f"gamma_1 {est.value:.5f} +- {est.stderr:.5f} vs {ref:.5f}, rel dev {rel:.1%} <= 15%, "
           f"{elapsed:.1f}s <= 120s")


def test_10_singularity_enumeration():
    signs = [np.array(s, dtype=float).reshape(2, 2) for s in itertools.product((-1, 1), repeat=4)]
    exact = sum(np.linalg.det(m) == 0 for m in signs) / len(signs)
    mats = sample_chain(EnsembleSpec("rademacher", 2, scale=1.0), RngStream(SEED), 10_000)
    freq = float(np.mean(np.linalg.det(mats) == 0))
    ok = exact == 0.5 and abs(freq - exact) <= 0.02
    report(10, "Rademacher n=2 singularity", ok,
           f"empirical {freq:.4f} vs exact {exact} (16-matrix enumeration) +- 0.02")


def test_11_reproducibility(tmp_path):
    runs = {
        "spectrum": f"seed = {SEED}\n[ensemble]\nfamily = \"gaussian\"\nn = 10\n"
                    "[chain]\nN = 100000\nk = 10\n",
        "tail": f"seed = {SEED}\ntrials = 100\nkind = \"least\"\nt_grid = [0.0, 0.25, 0.5]\n"
                "[ensemble]\nfamily = \"gaussian\"\nn = 20\n[chain]\nN = 1000\n",
    }
    same = []
    for cmd, text in runs.items():
        cfg = tmp_path / f"{cmd}.toml"
        cfg.write_text(text)
        outs = []
        for rep, workers in enumerate((1, 1, 2)):
            out = tmp_path / f"{cmd}-{rep}.csv"
            assert cli_main([cmd, "--config", str(cfg), "--workers", str(workers),
                             "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        same.append(outs[0] == outs[1] == outs[2])
    report(11, "reproducibility", all(same),
           f"byte-identical outputs over repeats and workers 1/2: "
           f"{dict(zip(runs, same))}")


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_"):
            continue
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    print(f"{len(RESULTS) - failed}/{len(RESULTS)} criteria passed")
    sys.exit(1 if failed else 0)
