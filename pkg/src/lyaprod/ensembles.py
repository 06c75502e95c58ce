"""Seedable samplers for the random matrices A_i of a product chain.

Every random draw goes through a Philox-4x64 counter-based generator keyed by
``(seed, stream_id)``, so a trial's matrices depend only on its key and never
on worker count or scheduling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

import numpy as np

RNG_ALGORITHM = "numpy.random.Philox (Philox4x64-10), key = seed + 2**64 * stream_id"


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM_SYM = "uniform_sym"
    TWO_POINT = "two_point"
    SHIFT_COCYCLE = "shift_cocycle"
    SYMPLECTIC_WIGNER = "symplectic_wigner"
    # deterministic test hook: model_params = {"matrix": [[...], ...]}
    FIXED = "fixed"


IID_FAMILIES = frozenset(
    {Family.GAUSSIAN, Family.RADEMACHER, Family.UNIFORM_SYM, Family.TWO_POINT}
)


@dataclass(frozen=True)
class RngStream:
    """Key of one independent random stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class EnsembleSpec:
    """Law of a single random matrix A_i.

    ``scale`` multiplies the whole sampled matrix.  For the iid families it
    defaults to ``1/sqrt(n)`` (entries ``xi/sqrt(n)`` with ``Var(xi) = 1``),
    for the structured families and the fixed hook it defaults to 1.
    """

    family: Family
    n: int
    scale: float | None = None
    subgaussian_K: float | None = None
    model_params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        params = dict(self.model_params)
        fam = self.family
        if fam is Family.TWO_POINT:
            params = _normalize_two_point(params)
        elif fam is Family.SHIFT_COCYCLE:
            params = _check_shift_params(params)
        elif fam is Family.SYMPLECTIC_WIGNER:
            unknown = set(params) - {"lambda", "E"}
            if unknown:
                raise ValueError(f"unknown symplectic_wigner params: {sorted(unknown)}")
            params = {"lambda": float(params.get("lambda", 0.0)), "E": float(params.get("E", 0.0))}
        elif fam is Family.FIXED:
            if "matrix" not in params:
                raise ValueError("fixed family needs model_params['matrix']")
            m = np.asarray(params["matrix"], dtype=float)
            if m.shape != (self.n, self.n):
                raise ValueError(f"fixed matrix must be {self.n}x{self.n}, got {m.shape}")
            params["matrix"] = m.tolist()
        elif params:
            raise ValueError(f"family {fam.value} takes no model_params")
        object.__setattr__(self, "model_params", params)

        if self.scale is None:
            scale = 1.0 / math.sqrt(self.n) if fam in IID_FAMILIES else 1.0
            object.__setattr__(self, "scale", scale)
        if not math.isfinite(self.scale):
            raise ValueError("scale must be finite")
        if self.subgaussian_K is None:
            object.__setattr__(self, "subgaussian_K", _default_K(fam, params))
        if self.subgaussian_K <= 0:
            raise ValueError("subgaussian_K must be positive")

    @property
    def is_iid(self) -> bool:
        return self.family in IID_FAMILIES

    @property
    def dim(self) -> int:
        """Side length of the sampled matrices."""
        if self.family is Family.SHIFT_COCYCLE:
            return 2
        if self.family is Family.SYMPLECTIC_WIGNER:
            return 2 * self.n
        return self.n

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "n": self.n,
            "scale": self.scale,
            "subgaussian_K": self.subgaussian_K,
            "model_params": dict(self.model_params),
        }


def _normalize_two_point(params):
    try:
        p, a, b = float(params["p"]), float(params["a"]), float(params["b"])
    except KeyError as exc:
        raise ValueError(f"two_point needs p, a, b (missing {exc})") from None
    if not 0.0 < p < 1.0:
        raise ValueError("two_point p must lie in (0, 1)")
    if a == b:
        raise ValueError("two_point atoms must differ")
    mean = p * a + (1 - p) * b
    sd = math.sqrt(p * (1 - p)) * abs(a - b)
    # affine normalization to mean 0, variance 1
    return {"p": p, "a": (a - mean) / sd, "b": (b - mean) / sd}


def _check_shift_params(params):
    out = {
        "E": float(params.get("E", 0.0)),
        "omega": float(params.get("omega", 0.0)),
        "x0": None if params.get("x0") is None else float(params["x0"]),
        "cos": [float(c) for c in params.get("cos", [])],
        "sin": [float(c) for c in params.get("sin", [])],
    }
    unknown = set(params) - set(out)
    if unknown:
        raise ValueError(f"unknown shift_cocycle params: {sorted(unknown)}")
    if not 0.0 <= out["omega"] < 1.0:
        raise ValueError("omega must lie in [0, 1)")
    if out["x0"] is not None and not 0.0 <= out["x0"] < 1.0:
        raise ValueError("x0 must lie in [0, 1)")
    return out


def _default_K(family, params):
    if family is Family.TWO_POINT:
        # makes 2 exp(-t^2 / 2K) >= 1 up to the largest atom
        return max(1.0, max(params["a"] ** 2, params["b"] ** 2) / (2 * math.log(2)))
    return 1.0


# -- atoms -------------------------------------------------------------------

def sample_atoms(spec: EnsembleSpec, rng, size) -> np.ndarray:
    """Unscaled atoms xi (mean 0, variance 1) of an iid family."""
    if not spec.is_iid:
        raise ValueError(f"family {spec.family.value} has no iid atom law")
    gen = _as_generator(rng)
    size = tuple(np.atleast_1d(size).tolist())
    fam = spec.family
    if fam is Family.GAUSSIAN:
        return gen.standard_normal(size)
    if fam is Family.RADEMACHER:
        count = math.prod(size)
        bits = np.unpackbits(np.frombuffer(gen.bytes((count + 7) // 8), dtype=np.uint8))
        return (2.0 * bits[:count] - 1.0).reshape(size)
    if fam is Family.UNIFORM_SYM:
        r = math.sqrt(3.0)
        return gen.uniform(-r, r, size)
    p, a, b = spec.model_params["p"], spec.model_params["a"], spec.model_params["b"]
    return np.where(gen.random(size) < p, a, b)


# -- single matrices ---------------------------------------------------------

def sample_matrix(spec: EnsembleSpec, rng) -> np.ndarray:
    """One n x n matrix with iid entries ``scale * xi``."""
    if not spec.is_iid:
        raise ValueError(
            f"sample_matrix handles iid families only; use shift_cocycle_matrix or "
            f"symplectic_matrix for {spec.family.value}"
        )
    return spec.scale * sample_atoms(spec, rng, (spec.n, spec.n))


def trig_poly(coeffs: Mapping[str, Any], x):
    """f(x) = sum_k cos[k] cos(2 pi k x) + sum_k sin[k-1] sin(2 pi k x)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k, c in enumerate(coeffs.get("cos", [])):
        out = out + c * np.cos(2 * np.pi * k * x)
    for k, c in enumerate(coeffs.get("sin", []), start=1):
        out = out + c * np.sin(2 * np.pi * k * x)
    return out


def shift_cocycle_matrix(params: Mapping[str, Any], j: int) -> np.ndarray:
    """Transfer matrix ``[[f(x0 + j omega) - E, -1], [1, 0]]``."""
    x0 = params.get("x0") or 0.0
    pos = (x0 + j * params.get("omega", 0.0)) % 1.0
    v = float(trig_poly(params, pos)) - params.get("E", 0.0)
    return np.array([[v, -1.0], [1.0, 0.0]])


def _wigner_blocks(n, lam, E, gauss):
    """Symplectic blocks for a stack of raw normals ``gauss`` of shape (b, n, n)."""
    b = gauss.shape[0]
    upper = np.triu(gauss)
    w = (upper + np.swapaxes(np.triu(gauss, 1), 1, 2)) / math.sqrt(n)
    eye = np.eye(n)
    out = np.zeros((b, 2 * n, 2 * n))
    out[:, :n, :n] = lam * w - E * eye
    out[:, :n, n:] = -eye
    out[:, n:, :n] = eye
    return out


def symplectic_matrix(params: Mapping[str, Any], rng) -> np.ndarray:
    """``[[lam W - E I, -I], [I, 0]]`` with W symmetric, entries N(0, 1/n)."""
    n = int(params["n"])
    lam = float(params.get("lambda", 0.0))
    E = float(params.get("E", 0.0))
    gen = _as_generator(rng)
    return _wigner_blocks(n, lam, E, gen.standard_normal((1, n, n)))[0]


# -- streams of matrices for chains ------------------------------------------

def batch_size(dim: int) -> int:
    """Fixed per-dimension batch length; part of the reproducibility contract."""
    return int(max(16, min(4096, 2**19 // (dim * dim))))


class MatrixStream:
    """Deterministic source of A_1, A_2, ... for one trial.

    Matrices are drawn in batches; :meth:`take` must be called with the same
    batch lengths to reproduce a sequence (the chain drivers use
    :func:`batch_size`).
    """

    def __init__(self, spec: EnsembleSpec, rng):
        self.spec = spec
        self.dim = spec.dim
        self._gen = _as_generator(rng)
        self._j = 0
        fam = spec.family
        if fam is Family.SHIFT_COCYCLE:
            params = dict(spec.model_params)
            if params["x0"] is None:
                # phase drawn uniformly from the torus, as in the shift model
                params["x0"] = float(self._gen.random())
            self._shift = params
        elif fam is Family.FIXED:
            self._fixed = spec.scale * np.asarray(spec.model_params["matrix"], dtype=float)

    def take(self, count: int) -> np.ndarray:
        spec, fam = self.spec, self.spec.family
        if fam in IID_FAMILIES:
            out = spec.scale * sample_atoms(spec, self._gen, (count, spec.n, spec.n))
        elif fam is Family.SYMPLECTIC_WIGNER:
            p = spec.model_params
            raw = self._gen.standard_normal((count, spec.n, spec.n))
            out = _wigner_blocks(spec.n, p["lambda"], p["E"], raw)
            if spec.scale != 1.0:
                out *= spec.scale
        elif fam is Family.SHIFT_COCYCLE:
            p = self._shift
            j = np.arange(self._j + 1, self._j + count + 1)
            pos = (p["x0"] + j * p["omega"]) % 1.0
            out = np.zeros((count, 2, 2))
            out[:, 0, 0] = trig_poly(p, pos) - p["E"]
            out[:, 0, 1] = -1.0
            out[:, 1, 0] = 1.0
            if spec.scale != 1.0:
                out *= spec.scale
        else:
            out = np.broadcast_to(self._fixed, (count, self.dim, self.dim)).copy()
        self._j += count
        return np.ascontiguousarray(out, dtype=np.float64)

    def batches(self, total: int) -> Iterator[np.ndarray]:
        step = batch_size(self.dim)
        done = 0
        while done < total:
            b = min(step, total - done)
            yield self.take(b)
            done += b


def sample_chain(spec: EnsembleSpec, rng, N: int) -> np.ndarray:
    """A_1..A_N exactly as a chain run with the same stream would see them."""
    return np.concatenate(list(MatrixStream(spec, rng).batches(N)), axis=0)
