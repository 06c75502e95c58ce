"""Arithmetic structure of vectors: least common denominators and small balls.

For a nonzero x the LCD with parameters (gamma, kappa) is

    inf { theta > 0 : dist(theta x, Z^n) < min(gamma ||theta x||, kappa) }.

It is computed by a theta-grid scan (compiled kernel when available) with a
bisection refinement at the first admissible grid point.  Every witness is
re-checked with the exact inequality before it is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .ensembles import EnsembleSpec, sample_atoms, _as_generator

DEFAULT_C = 0.05
SMALL_BALL_GRID = np.linspace(-3.0, 3.0, 21)


@dataclass(frozen=True)
class LcdQuery:
    gamma: float = 0.5
    kappa: float = 1.0
    theta_max: float = 1e3
    grid_step: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.theta_max <= 0:
            raise ValueError(f"theta_max must be positive, got {self.theta_max}")
        cap = min(self.gamma, 1.0) / 10
        if self.grid_step is None:
            object.__setattr__(self, "grid_step", cap)
        if not 0 < self.grid_step <= cap * (1 + 1e-12):
            raise ValueError(f"grid_step must lie in (0, {cap}], got {self.grid_step}")


@dataclass(frozen=True)
class LcdResult:
    """Outcome of an LCD search.

    With a witness, ``value`` is the bracketing lower end (the infimum is in
    ``[value, witness_theta]``).  Without one, ``value == theta_max`` is a
    certified lower bound at the search's grid resolution.
    """

    value: float
    witness_theta: float | None = None
    witness_lattice_point: tuple[int, ...] | None = None
    witness_phi: float | None = None

    @property
    def certified_lower_bound(self) -> bool:
        return self.witness_theta is None


def lcd_condition(theta: float, x, gamma: float, kappa: float):
    """Evaluate the LCD inequality at theta; returns (holds, lattice point)."""
    tx = theta * np.asarray(x, dtype=float)
    p = np.rint(tx)
    d = float(np.linalg.norm(tx - p))
    return d < min(gamma * float(np.linalg.norm(tx)), kappa), p


def lcd(x, q: LcdQuery | None = None, backend=None) -> LcdResult:
    q = LcdQuery() if q is None else q
    x = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1))
    if not np.any(x):
        raise ValueError("lcd needs a nonzero vector")
    kern = kernels.get(backend)
    step = q.grid_step
    i_stop = int(math.floor(q.theta_max / step)) + 1
    i = 1
    while i < i_stop:
        hit = kern.lcd_scan(x, q.gamma, q.kappa, step, i, i_stop)
        if hit < 0:
            break
        theta = hit * step
        ok, _ = lcd_condition(theta, x, q.gamma, q.kappa)
        if not ok:
            # squared-form scan and exact check disagree at the boundary
            i = hit + 1
            continue
        lo, hi = (hit - 1) * step, theta
        while hi - lo > step * 1e-3:
            mid = 0.5 * (lo + hi)
            if lcd_condition(mid, x, q.gamma, q.kappa)[0]:
                hi = mid
            else:
                lo = mid
        _, p = lcd_condition(hi, x, q.gamma, q.kappa)
        return LcdResult(lo, hi, tuple(int(v) for v in p))
    return LcdResult(float(q.theta_max))


def joint_lcd(x, y, q: LcdQuery | None = None, angle_grid: int = 360, backend=None) -> LcdResult:
    """Minimum of lcd(cos(phi) x + sin(phi) y) over phi = pi k / angle_grid."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same dimension")
    if not (np.any(x) or np.any(y)):
        raise ValueError("x and y must not both be zero")
    if angle_grid < 1:
        raise ValueError("angle_grid must be positive")
    q = LcdQuery() if q is None else q
    tiny = 1e-12 * (np.linalg.norm(x) + np.linalg.norm(y))
    best = None
    for k in range(angle_grid):
        phi = math.pi * k / angle_grid
        z = math.cos(phi) * x + math.sin(phi) * y
        if np.linalg.norm(z) <= tiny:
            continue
        r = lcd(z, q, backend=backend)
        if best is None or r.value < best.value:
            best = LcdResult(r.value, r.witness_theta, r.witness_lattice_point, phi)
    return best


def lcd_net(D0: float, n: int, kappa: float) -> np.ndarray:
    """Directions p/||p|| of the nonzero lattice points with ||p|| <= 3 D0.

    Vectors with LCD in [D0, 2 D0] lie within 2 kappa / D0 of this set.  Rows
    are unit vectors, one per primitive lattice direction, in lexicographic
    order of p.
    """
    if not 1 <= n <= 4:
        raise ValueError(f"lcd_net enumerates only n <= 4, got n={n}")
    if not 0 < D0 <= 50:
        raise ValueError(f"lcd_net needs 0 < D0 <= 50, got {D0}")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    R = int(math.floor(3 * D0))
    if (2 * R + 1) ** n > 2 * 10**7:
        raise ValueError(f"lattice box (2*{R}+1)^{n} too large to enumerate")
    axes = [np.arange(-R, R + 1)] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    r2 = (pts**2).sum(axis=1)
    pts = pts[(r2 > 0) & (r2 <= (3 * D0) ** 2)]
    pts = pts[np.gcd.reduce(np.abs(pts), axis=1) == 1]
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def small_ball_profile(x, eps: float, spec: EnsembleSpec, trials: int, rng,
                       grid=SMALL_BALL_GRID) -> np.ndarray:
    """Empirical P(|sum xi_i x_i - g| <= eps) at each grid point g.

    Only the atom law of ``spec`` is used (unscaled xi); its ``n`` is ignored.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    gen = _as_generator(rng)
    grid = np.asarray(grid, dtype=float)
    counts = np.zeros(grid.shape[0], dtype=np.int64)
    chunk = max(1, 2**20 // max(1, x.shape[0]))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        s = sample_atoms(spec, gen, (m, x.shape[0])) @ x
        counts += (np.abs(s[:, None] - grid[None, :]) <= eps).sum(axis=0)
        done += m
    return counts / trials


def small_ball_estimate(x, eps: float, spec: EnsembleSpec, trials: int, rng) -> float:
    """Sup over a 21-point grid on [-3, 3] of the empirical small-ball probability."""
    return float(small_ball_profile(x, eps, spec, trials, rng).max())


def membership_S(x, c: float = DEFAULT_C, theta_cap: float = 1e6, grid_step=None,
                 backend=None) -> bool:
    """Whether x has LCD_{1/2, n^c} at least exp(n^c) (search truncated at theta_cap).

    For n with exp(n^c) > theta_cap the answer only certifies LCD >= theta_cap.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.shape[0]
    theta_max = min(math.exp(n**c), theta_cap)
    q = LcdQuery(gamma=0.5, kappa=n**c, theta_max=theta_max, grid_step=grid_step)
    return lcd(x, q, backend=backend).certified_lower_bound
