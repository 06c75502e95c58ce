"""Built-in oracle checks behind ``lyaprod validate``."""

import math

import numpy as np

from . import kernels, oracles
from .chain import (
    ChainConfig,
    least_exponent_distance,
    second_exponent_pair,
    spectrum_qr,
    top_exponent,
)
from .ensembles import EnsembleSpec, sample_chain
from .stats import EULER_GAMMA, digamma, newman_exponents
from .structure import LcdQuery, lcd


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def _telescoping(seed):
    worst = {"top": 0.0, "pair": 0.0, "least": 0.0, "det": 0.0}
    for s in range(20):
        n, N = 2 + s % 5, 1 + s % 8
        cfg = ChainConfig(EnsembleSpec("gaussian", n), N, seed=seed, stream_id=s)
        mats = sample_chain(cfg.ensemble, cfg.rng, N)
        e = np.eye(n)
        worst["top"] = max(worst["top"], _rel(top_exponent(cfg).value * N,
                                              oracles.log_norm_image(mats, e[0])))
        worst["pair"] = max(worst["pair"], _rel(second_exponent_pair(cfg).value * N,
                                                oracles.log_wedge_image(mats, e[0], e[1])))
        worst["least"] = max(worst["least"], _rel(least_exponent_distance(cfg).value * N,
                                                  oracles.log_last_column_distance(mats)))
        total = sum(est.value for est in spectrum_qr(cfg)) * N
        worst["det"] = max(worst["det"], _rel(total, oracles.log_abs_det(mats)))
    return worst


def _digamma_series(d, M=200_000):
    # Psi(d) = -gamma + sum_k (1/k - 1/(k + d - 1)), tail summed in closed form
    k = np.arange(1, M + 1, dtype=float)
    a = d - 1.0
    head = np.sum(1.0 / k - 1.0 / (k + a))
    tail = math.log((M + 0.5 + a) / (M + 0.5))
    return -EULER_GAMMA + float(head) + tail


def run_checks(seed: int = 0):
    """Yield (name, passed, detail) rows."""
    worst = _telescoping(seed)
    for name, tol in (("top", 1e-8), ("pair", 1e-8), ("least", 1e-6), ("det", 1e-8)):
        yield (f"telescoping_{name}", worst[name] <= tol, f"max_rel_err={worst[name]:.3e} tol={tol:g}")

    closed = {1.0: -EULER_GAMMA, 0.5: -EULER_GAMMA - 2 * math.log(2), 2.0: 1 - EULER_GAMMA}
    for d, ref in closed.items():
        err = abs(digamma(d) - ref)
        yield (f"digamma_closed_form_{d:g}", err <= 1e-10, f"abs_err={err:.3e}")
    err = max(abs(digamma(d) - _digamma_series(d)) for d in (0.3, 1.7, 4.5, 12.25))
    yield ("digamma_series_oracle", err <= 1e-9, f"max_abs_err={err:.3e}")

    mu = newman_exponents(50)
    yield ("newman_decreasing", all(a > b for a, b in zip(mu, mu[1:])), "n=50")

    r = lcd([1.0, 0.0], LcdQuery(gamma=0.5, kappa=1.0))
    yield ("lcd_e1", abs(r.value - 2 / 3) <= 1e-3, f"value={r.value:.6f} ref=0.666667")

    if len(kernels.available()) > 1:
        cfg = ChainConfig(EnsembleSpec("gaussian", 6), 500, seed=seed)
        a = [e.value for e in spectrum_qr(cfg, backend="cython")]
        b = [e.value for e in spectrum_qr(cfg, backend="python")]
        dev = max(abs(x - y) for x, y in zip(a, b))
        yield ("backend_agreement", dev <= 1e-10, f"max_abs_dev={dev:.3e}")
