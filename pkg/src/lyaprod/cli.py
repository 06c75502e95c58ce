"""Config-driven experiment runner.

    lyaprod <subcommand> --config exp.toml [--seed S] [--workers W] [--out PATH]

Exit codes: 0 ok, 1 failed validation checks, 2 config error, 3 chain death
in a single-run command, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, kernels
from .chain import (
    ChainConfig,
    least_exponent_distance,
    second_exponent_pair,
    spectrum_qr,
    top_exponent,
)
from .ensembles import RNG_ALGORITHM, EnsembleSpec, Family, RngStream
from .stats import EstimatorKind, reference_spectrum, tail_curve
from .structure import LcdQuery, joint_lcd, lcd, small_ball_profile, SMALL_BALL_GRID

COMMANDS = ("estimate", "spectrum", "pair", "least", "tail", "lcd", "smallball", "validate")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_DIED, EXIT_IO = 0, 1, 2, 3, 4


class ConfigError(Exception):
    pass


class ChainDied(Exception):
    pass


# -- schema -------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnsembleTable(_Strict):
    family: Family
    n: int = Field(ge=1)
    scale: float | None = None
    subgaussian_K: float | None = Field(default=None, gt=0)
    model_params: dict[str, Any] = Field(default_factory=dict)


class ChainTable(_Strict):
    N: int = Field(ge=1)
    renorm_every: int = Field(default=1, ge=1)
    record_increments: bool = False
    k: int | None = Field(default=None, ge=1)
    x0: list[float] | None = None
    y0: list[float] | None = None


class VectorTable(_Strict):
    vector: list[float] | None = None
    generator: Literal["gaussian", "ones", "basis"] | None = None
    n: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.vector is None) == (self.generator is None):
            raise ValueError("give exactly one of 'vector' or 'generator'")
        if self.generator is not None and self.n is None:
            raise ValueError("'generator' needs 'n'")
        return self


class LcdTable(VectorTable):
    gamma: float = 0.5
    kappa: float = 1.0
    theta_max: float = 1e3
    grid_step: float | None = None
    y: list[float] | None = None
    angle_grid: int = Field(default=360, ge=1)


class SmallBallTable(VectorTable):
    eps: float = Field(gt=0)


class ExperimentConfig(_Strict):
    command: Literal[COMMANDS] | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    trials: int | None = Field(default=None, ge=1)
    t_grid: list[float] | None = None
    kind: EstimatorKind = EstimatorKind.TOP
    output_path: str | None = None
    format: Literal["csv", "json"] = "csv"
    ensemble: EnsembleTable | None = None
    chain: ChainTable | None = None
    lcd: LcdTable | None = None
    smallball: SmallBallTable | None = None

    @model_validator(mode="after")
    def _required_tables(self):
        need = {
            "estimate": ("ensemble", "chain"),
            "spectrum": ("ensemble", "chain"),
            "pair": ("ensemble", "chain"),
            "least": ("ensemble", "chain"),
            "tail": ("ensemble", "chain", "t_grid", "trials"),
            "lcd": ("lcd",),
            "smallball": ("ensemble", "smallball", "trials"),
        }.get(self.command or "", ())
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"command {self.command!r} requires: {', '.join(missing)}")
        return self


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def load_config(path, command, seed=None, workers=None, out=None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(Path(path).read_text()) if path else {}
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    if raw.get("command") not in (None, command):
        raise ConfigError(f"invalid config:\n  command: file says {raw['command']!r}, "
                          f"CLI subcommand is {command!r}")
    raw["command"] = command
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    if out is not None:
        raw["output_path"] = str(out)
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from None
    # domain-level checks, still before any computation
    try:
        build_ensemble(cfg)
        build_chain(cfg)
        if cfg.lcd is not None:
            LcdQuery(cfg.lcd.gamma, cfg.lcd.kappa, cfg.lcd.theta_max, cfg.lcd.grid_step)
        if command == "smallball" and not build_ensemble(cfg).is_iid:
            raise ValueError("ensemble.family: smallball needs an iid atom family")
        if command == "tail":
            t = cfg.t_grid
            if not t or any(b < a for a, b in zip(t, t[1:])):
                raise ValueError("t_grid: must be a non-empty ascending list")
            if cfg.trials < 100:
                raise ValueError("trials: tail needs trials >= 100")
    except ValueError as exc:
        raise ConfigError(f"invalid config:\n  {exc}") from None
    return cfg


def build_ensemble(cfg: ExperimentConfig) -> EnsembleSpec | None:
    if cfg.ensemble is None:
        return None
    e = cfg.ensemble
    return EnsembleSpec(e.family, e.n, e.scale, e.subgaussian_K, e.model_params)


def build_chain(cfg: ExperimentConfig) -> ChainConfig | None:
    if cfg.chain is None or cfg.ensemble is None:
        return None
    c = cfg.chain
    return ChainConfig(build_ensemble(cfg), c.N, seed=cfg.seed, stream_id=0,
                       renorm_every=c.renorm_every, record_increments=c.record_increments)


def _vector(table: VectorTable, seed: int) -> np.ndarray:
    if table.vector is not None:
        return np.asarray(table.vector, dtype=float)
    n = table.n
    if table.generator == "ones":
        return np.ones(n) / math.sqrt(n)
    if table.generator == "basis":
        return np.eye(n)[0]
    v = RngStream(seed, 0).generator().standard_normal(n)
    return v / np.linalg.norm(v)


# -- experiments --------------------------------------------------------------

@dataclass
class RunRecord:
    config: dict
    seed: int
    seeds: dict
    version: str
    wall_ms: float
    columns: list[str]
    results: list[dict]
    died_step: int | None = None

    def summary(self) -> dict:
        return {"config": self.config, "seeds": self.seeds, "version": self.version,
                "wall_ms": self.wall_ms, "results": self.results}


def version_string() -> str:
    return f"lyaprod {__version__} ({kernels.BACKEND} kernels)"


def config_echo(cfg: ExperimentConfig) -> dict:
    """Config as embedded in result files: everything that determines results.

    ``workers`` and ``output_path`` are execution details and are left out so
    that output bytes do not depend on them.
    """
    return cfg.model_dump(mode="json", exclude={"workers", "output_path"}, exclude_none=True)


def _single(cfg, est):
    row = {"value": est.value, "stderr": est.stderr, "N": est.N, "n": est.n, "died": est.died}
    return ["value", "stderr", "N", "n", "died"], [row], est.died_step


def _run_estimate(cfg):
    x0 = cfg.chain.x0
    return _single(cfg, top_exponent(build_chain(cfg), x0=x0))


def _run_pair(cfg):
    return _single(cfg, second_exponent_pair(build_chain(cfg), cfg.chain.x0, cfg.chain.y0))


def _run_least(cfg):
    return _single(cfg, least_exponent_distance(build_chain(cfg)))


def _run_spectrum(cfg):
    chain = build_chain(cfg)
    ests = spectrum_qr(chain, cfg.chain.k)
    ref = reference_spectrum(chain.ensemble)
    rows = []
    for e in ests:
        r = ref[e.order - 1] if ref is not None else math.nan
        rows.append({"i": e.order, "gamma_hat": e.value, "stderr": e.stderr, "ref": r,
                     "abs_dev": abs(e.value - r)})
    died = ests[0].died_step if ests and ests[0].died else None
    return ["i", "gamma_hat", "stderr", "ref", "abs_dev"], rows, died


def _run_tail(cfg):
    curve = tail_curve(build_chain(cfg), cfg.kind, cfg.t_grid, cfg.trials, cfg.workers)
    rows = [{"t": t, "prob": p, "stderr": s, "trials": curve.trials,
             "died_fraction": curve.died_fraction}
            for t, p, s in zip(curve.t_grid, curve.probs, curve.stderr)]
    return ["t", "prob", "stderr", "trials", "died_fraction"], rows, None


def _run_lcd(cfg):
    t = cfg.lcd
    q = LcdQuery(t.gamma, t.kappa, t.theta_max, t.grid_step)
    x = _vector(t, cfg.seed)
    r = joint_lcd(x, t.y, q, t.angle_grid) if t.y is not None else lcd(x, q)
    pt = "" if r.witness_lattice_point is None else " ".join(map(str, r.witness_lattice_point))
    row = {"value": r.value,
           "witness_theta": math.nan if r.witness_theta is None else r.witness_theta,
           "witness_lattice_point": pt,
           "certified_lower_bound": r.certified_lower_bound,
           "witness_phi": math.nan if r.witness_phi is None else r.witness_phi}
    return list(row), [row], None


def _run_smallball(cfg):
    t = cfg.smallball
    x = _vector(t, cfg.seed)
    prof = small_ball_profile(x, t.eps, build_ensemble(cfg), cfg.trials, RngStream(cfg.seed, 1))
    best = int(np.argmax(prof))
    row = {"estimate": float(prof[best]), "argmax_x": float(SMALL_BALL_GRID[best]),
           "eps": t.eps, "trials": cfg.trials}
    return list(row), [row], None


def _run_validate(cfg):
    from .validation import run_checks
    rows = [{"check": name, "passed": ok, "detail": detail}
            for name, ok, detail in run_checks(cfg.seed)]
    return ["check", "passed", "detail"], rows, None


_RUNNERS = {
    "estimate": _run_estimate, "pair": _run_pair, "least": _run_least,
    "spectrum": _run_spectrum, "tail": _run_tail, "lcd": _run_lcd,
    "smallball": _run_smallball, "validate": _run_validate,
}


def run(cfg: ExperimentConfig) -> RunRecord:
    start = time.perf_counter()
    columns, rows, died_step = _RUNNERS[cfg.command](cfg)
    wall_ms = (time.perf_counter() - start) * 1e3
    seeds = {"seed": cfg.seed, "rng": RNG_ALGORITHM}
    if cfg.command == "tail":
        seeds["stream_ids"] = [0, cfg.trials]
    elif cfg.command in ("estimate", "pair", "least", "spectrum"):
        seeds["stream_ids"] = [0, 1]
    return RunRecord(config_echo(cfg), cfg.seed, seeds, version_string(), wall_ms,
                     columns, rows, died_step)


# -- serialization ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_safe(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(record: RunRecord, fmt: str) -> str:
    if fmt == "json":
        doc = {"config": record.config, "seed": record.seed, "version": record.version,
               "results": [{k: _json_safe(v) for k, v in r.items()} for r in record.results]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# {record.version}\n")
    buf.write(f"# config: {json.dumps(record.config, sort_keys=True)}\n")
    buf.write(f"# seed: {record.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(record.columns)
    for r in record.results:
        w.writerow([_fmt(r[c]) for c in record.columns])
    return buf.getvalue()


def write_outputs(record: RunRecord, cfg: ExperimentConfig) -> None:
    text = render(record, cfg.format)
    if cfg.output_path is None:
        sys.stdout.write(text)
        return
    out = Path(cfg.output_path)
    out.write_text(text)
    summary = record.summary()
    summary["config"] = dict(summary["config"], workers=cfg.workers)
    summary["results"] = [{k: _json_safe(v) for k, v in r.items()} for r in summary["results"]]
    out.with_name(out.name + ".summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lyaprod", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "validate")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, args.seed, args.workers, args.out)
    except ConfigError as exc:
        print(f"lyaprod: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"lyaprod: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    record = run(cfg)
    try:
        write_outputs(record, cfg)
    except OSError as exc:
        print(f"lyaprod: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    if record.died_step is not None:
        print(f"lyaprod: chain died at step {record.died_step} (factor A_{record.died_step} "
              f"collapsed the state)", file=sys.stderr)
        return EXIT_DIED
    if args.command == "validate" and not all(r["passed"] for r in record.results):
        return EXIT_CHECKS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
