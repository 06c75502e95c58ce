"""Renormalized product-chain estimators.

``B_N = A_N ... A_1`` is never formed.  Each estimator pushes a small state
(one vector, an orthonormal pair, a k-frame, or an (n-1)-frame) through the
chain and accumulates log growth factors, so N can be large without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ensembles import EnsembleSpec, MatrixStream, RngStream

# a step whose growth factor is <= COLLAPSE_RTOL * ||A||_F counts as an exact
# collapse: below this the computed factor is pure rounding noise
COLLAPSE_RTOL = 1e-12


@dataclass(frozen=True)
class ChainConfig:
    ensemble: EnsembleSpec
    N: int
    seed: int = 0
    stream_id: int = 0
    renorm_every: int = 1
    record_increments: bool = False

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.renorm_every < 1 or self.renorm_every > self.N:
            raise ValueError(f"renorm_every must lie in [1, N], got {self.renorm_every}")

    @property
    def rng(self) -> RngStream:
        return RngStream(self.seed, self.stream_id)

    def with_stream(self, stream_id: int) -> "ChainConfig":
        return ChainConfig(self.ensemble, self.N, self.seed, stream_id,
                           self.renorm_every, self.record_increments)


@dataclass
class ExponentEstimate:
    """One estimated exponent (``order`` = k, or 0 for the pair sum gamma_1 + gamma_2).

    ``died_step`` is the 1-based index i of the factor A_i at which the chain
    collapsed; accumulation stops before that factor.
    """

    order: int
    value: float
    stderr: float
    N: int
    n: int
    died: bool = False
    died_step: int | None = None
    increments: np.ndarray | None = field(default=None, repr=False)


class _Accumulator:
    """Running sum and M2 over batches of increments (Chan's merge)."""

    def __init__(self, width, keep):
        self.count = 0
        self.total = np.zeros(width)
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)
        self.kept = [] if keep else None

    def add(self, block):
        if not len(block):
            return
        block = np.asarray(block, dtype=float).reshape(len(block), -1)
        m = len(block)
        bmean = block.mean(axis=0)
        bm2 = ((block - bmean) ** 2).sum(axis=0)
        tot = self.count + m
        delta = bmean - self.mean
        self.m2 += bm2 + delta**2 * self.count * m / tot
        self.mean += delta * m / tot
        self.count = tot
        self.total += block.sum(axis=0)
        if self.kept is not None:
            self.kept.append(block.copy())

    def estimates(self, orders, N, n, died_step, scale_blocks=False):
        out = []
        for j, order in enumerate(orders):
            if self.count > 1:
                sd = math.sqrt(self.m2[j] / (self.count - 1))
                # block sums: sd of the total is sd * sqrt(blocks)
                stderr = sd * math.sqrt(self.count) / N if scale_blocks else sd / math.sqrt(N)
            else:
                stderr = 0.0
            inc = None
            if self.kept is not None:
                inc = np.concatenate(self.kept)[:, j] if self.kept else np.zeros(0)
            out.append(ExponentEstimate(
                order=order, value=float(self.total[j]) / N, stderr=stderr, N=N, n=n,
                died=died_step is not None, died_step=died_step, increments=inc))
        return out


def _frobenius(mats):
    return np.ascontiguousarray(np.sqrt(np.einsum("bij,bij->b", mats, mats)))


def _unit(v, dim, name):
    v = np.array(v, dtype=float).reshape(-1)
    if v.shape != (dim,):
        raise ValueError(f"{name} has dimension {v.shape[0]}, ensemble matrices are {dim}x{dim}")
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError(f"{name} must be nonzero")
    return v / nv


# -- public operations ------------------------------------------------------

def wedge_volume_2(u, v) -> float:
    """Area of the parallelogram spanned by u and v.

    Equals sqrt(|u|^2 |v|^2 - <u, v>^2), evaluated through the 2x2 minors
    u_i v_j - u_j v_i of the unit directions (Lagrange's identity), which
    avoids the cancellation of the Gram form and is exactly 0 for u = v.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same dimension")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    a, b = u / nu, v / nv
    if a.shape[0] > 1024:
        # minors need O(n^2) memory; project instead
        if tuple(b) > tuple(a):
            a, b = b, a
        w = b - (a @ b) * a
        return float(nu * nv * np.linalg.norm(w - (a @ w) * a))
    m = np.outer(a, b)
    return float(nu * nv * math.sqrt(0.5 * np.sum((m - m.T) ** 2)))


def top_exponent(config: ChainConfig, x0=None, backend=None) -> ExponentEstimate:
    """Top exponent from the normalized vector recursion.

    value = N^-1 sum_i log ||A_{i+1} x_i|| with x_i = B_i x0 / ||B_i x0||.
    With ``renorm_every = c > 1`` the vector is renormalized every c steps and
    each increment covers one block of c factors.
    """
    spec = config.ensemble
    dim = spec.dim
    x = _unit(np.eye(dim)[0] if x0 is None else x0, dim, "x0")
    kern = kernels.get(backend)
    acc = _Accumulator(1, config.record_increments)
    every = config.renorm_every
    count = 0
    done = 0
    died_step = None
    for mats in MatrixStream(spec, config.rng).batches(config.N):
        out = np.empty(len(mats))
        steps, n_out, count, died = kern.top_steps(
            mats, _frobenius(mats), x, out, every, count, COLLAPSE_RTOL)
        acc.add(out[:n_out])
        done += steps
        if died:
            died_step = done + 1
            break
    if died_step is None and count:
        nx = float(np.linalg.norm(x))
        acc.add([math.log(nx)])
        x /= nx
    return acc.estimates([1], config.N, spec.n, died_step, scale_blocks=every > 1)[0]


def second_exponent_pair(config: ChainConfig, x0=None, y0=None, backend=None) -> ExponentEstimate:
    """Estimate gamma_1 + gamma_2 from the log growth of ||B_i x0 ^ B_i y0||.

    The pair is kept orthonormal (Gram-Schmidt each step), which leaves the
    spanned plane and therefore every area ratio unchanged.
    """
    spec = config.ensemble
    dim = spec.dim
    if dim < 2:
        raise ValueError("second_exponent_pair needs dimension >= 2")
    eye = np.eye(dim)
    x = _unit(eye[0] if x0 is None else x0, dim, "x0")
    y = _unit(eye[1] if y0 is None else y0, dim, "y0")
    area0 = wedge_volume_2(x, y)
    if area0 <= 1e-12:
        raise ValueError("y0 is parallel to x0: wedge_volume_2(x0, y0) must be > 0")
    frame = np.empty((2, dim))
    frame[0] = x
    w = y - (x @ y) * x
    frame[1] = w / np.linalg.norm(w)
    kern = kernels.get(backend)
    acc = _Accumulator(1, config.record_increments)
    done = 0
    died_step = None
    for mats in MatrixStream(spec, config.rng).batches(config.N):
        out = np.empty(len(mats))
        steps, died = kern.pair_steps(mats, _frobenius(mats), frame, out, COLLAPSE_RTOL)
        acc.add(out[:steps])
        done += steps
        if died:
            died_step = done + 1
            break
    return acc.estimates([0], config.N, spec.n, died_step)[0]


def spectrum_qr(config: ChainConfig, k: int | None = None, backend=None) -> list[ExponentEstimate]:
    """First k exponents by QR (Benettin) renormalization of a k-frame.

    Starts from Q_0 = [e_1 .. e_k]; estimate j accumulates log R_jj with R's
    diagonal positive.
    """
    spec = config.ensemble
    dim = spec.dim
    k = dim if k is None else int(k)
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}], got {k}")
    frame = np.ascontiguousarray(np.eye(dim)[:k])
    kern = kernels.get(backend)
    acc = _Accumulator(k, config.record_increments)
    done = 0
    died_step = None
    for mats in MatrixStream(spec, config.rng).batches(config.N):
        out = np.empty((len(mats), k))
        steps, died = kern.qr_steps(mats, _frobenius(mats), frame, out, COLLAPSE_RTOL)
        acc.add(out[:steps])
        done += steps
        if died:
            died_step = done + 1
            break
    return acc.estimates(list(range(1, k + 1)), config.N, spec.n, died_step)


def orthocomplement_vector(U) -> np.ndarray:
    """Unit normal to the hyperplane spanned by n-1 vectors in R^n.

    Sign convention: the largest-magnitude coordinate is positive (ties, up to
    1e-12, go to the lowest index).
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    m, n = U.shape
    if m != n - 1:
        raise ValueError(f"need n-1 = {n - 1} vectors of length {n}, got {m}")
    if n == 1:
        return np.ones(1)
    _, sv, vt = np.linalg.svd(U, full_matrices=True)
    scale = np.linalg.norm(U)
    if sv[-1] <= 1e-10 * scale:
        raise ValueError("vectors are rank deficient; no unique orthogonal complement")
    v = vt[-1]
    v = v / np.linalg.norm(v)
    mag = np.abs(v)
    # ties (up to rounding) go to the lowest index
    i = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
    return -v if v[i] < 0 else v


def least_exponent_distance(config: ChainConfig, backend=None) -> ExponentEstimate:
    """Least-exponent proxy N^-1 log dist(B_N e_n, span(B_N e_1..e_{n-1})).

    Accumulates log d_i, d_i = 1 / ||A_i^-T v_i|| with v_i the unit normal of
    the evolved (n-1)-frame: A_i^-T v_i is normal to span(A_i frame), so d_i
    is the distance of A_i v_i from that span.  The frame is
    re-orthonormalized each step, which preserves its span.
    """
    spec = config.ensemble
    dim = spec.dim
    if dim < 2:
        raise ValueError("least_exponent_distance needs dimension >= 2")
    frame = np.ascontiguousarray(np.eye(dim)[: dim - 1])
    kern = kernels.get(backend)
    acc = _Accumulator(1, config.record_increments)
    done = 0
    died_step = None
    for mats in MatrixStream(spec, config.rng).batches(config.N):
        out = np.empty(len(mats))
        steps, died = kern.least_steps(mats, _frobenius(mats), frame, out, COLLAPSE_RTOL)
        acc.add(out[:steps])
        done += steps
        if died:
            died_step = done + 1
            break
    return acc.estimates([dim], config.N, spec.n, died_step)[0]
