"""Perturbation grids, metric tables and log-log scaling fits."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError, FitError
from .gate import both_rails, eta_auto, evaluate
from .model import SystemConfig
from .perturb import Perturbation
from .propagator import IntegratorSettings

log = logging.getLogger(__name__)

AXIS_KINDS = ("rabi_scale", "detuning_offset", "blockade", "blockade_b0", "blockade_b1", "batch_mismatch")
METRICS = ("p_herald", "F_raw", "F_herald", "err_raw", "err_herald", "conjugacy_residual", "max_leak")
FLOOR = 1e-10


@dataclass(frozen=True)
class SweepAxis:
    """One swept perturbation. Values are in internal units (rad/μs for
    detuning and blockade axes, dimensionless otherwise)."""

    kind: str
    min: float
    max: float
    points: int
    spacing: Literal["linear", "log"] = "linear"
    target: str = "both"

    def __post_init__(self):
        if self.kind not in AXIS_KINDS:
            raise ConfigError(f"unknown sweep axis {self.kind!r}")
        if self.points < 2:
            raise ConfigError("a sweep axis needs at least 2 points")
        if not self.min < self.max:
            raise ConfigError(f"sweep axis needs min < max, got [{self.min}, {self.max}]")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "log" and self.min <= 0:
            raise ConfigError("log spacing needs a positive minimum")

    @property
    def name(self) -> str:
        if self.kind in ("rabi_scale", "detuning_offset") and self.target != "both":
            return f"{self.kind}_{self.target}"
        return self.kind

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.min, self.max, self.points)
        return np.linspace(self.min, self.max, self.points)

    def perturbation(self, value: float, base: SystemConfig) -> Perturbation:
        if self.kind == "blockade":
            return Perturbation("blockade_override", (value, value))
        if self.kind == "blockade_b0":
            return Perturbation("blockade_override", (value, base.B1))
        if self.kind == "blockade_b1":
            return Perturbation("blockade_override", (base.B0, value))
        return Perturbation(self.kind, value, self.target)


@dataclass(frozen=True)
class SweepSpec:
    """``eta`` is a number (rad), ``"auto"`` (per point) or ``"calibrated"``
    (η from the unperturbed configuration, held fixed across the grid)."""

    base: SystemConfig
    axes: tuple[SweepAxis, ...]
    eta: float | str = 0.0
    compensate: bool = False
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    workers: int = 1

    def __post_init__(self):
        axes = tuple(self.axes)
        if not 1 <= len(axes) <= 2:
            raise ConfigError("a sweep has one or two axes")
        if len(axes) == 2 and axes[0].kind == axes[1].kind and axes[0].target == axes[1].target:
            raise ConfigError("the two sweep axes must differ")
        object.__setattr__(self, "axes", axes)
        if isinstance(self.eta, str) and self.eta not in ("auto", "calibrated"):
            raise ConfigError(f"unknown eta mode {self.eta!r}")

    def grid(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*(a.values() for a in self.axes)))


@dataclass
class SweepTable:
    """Row-major grid results; ``rows`` are dicts keyed by ``columns``."""

    columns: list[str]
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def __len__(self) -> int:
        return len(self.rows)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    return f"{float(value):.11e}"


def _evaluate_point(args):
    spec, values, eta = args
    perts = tuple(axis.perturbation(v, spec.base) for axis, v in zip(spec.axes, values))
    row = {axis.name: float(v) for axis, v in zip(spec.axes, values)}
    try:
        h = evaluate(spec.base, eta, perts, spec.settings, spec.compensate)
    except Exception as exc:  # recorded per point; the sweep carries on
        log.warning("sweep point %s failed: %s", values, exc)
        row.update({m: math.nan for m in METRICS})
        row.update(eta=math.nan, err_raw_floored=False, err_herald_floored=False, error=f"{type(exc).__name__}: {exc}")
        return row
    err_raw = 1.0 - h.F_raw
    err_her = 1.0 - h.F_herald
    row.update(
        p_herald=h.p_herald,
        F_raw=h.F_raw,
        F_herald=h.F_herald,
        err_raw=max(err_raw, FLOOR),
        err_herald=max(err_her, FLOOR),
        conjugacy_residual=h.conjugacy_residual,
        max_leak=h.max_leak,
        eta=h.eta,
        err_raw_floored=err_raw < FLOOR,
        err_herald_floored=err_her < FLOOR,
        error="",
    )
    return row


def calibrated_eta(config: SystemConfig, settings: IntegratorSettings) -> float:
    r0, r1 = both_rails(config, (), settings)
    return eta_auto(r0, r1)


def run_sweep(spec: SweepSpec) -> SweepTable:
    eta = spec.eta
    if eta == "calibrated":
        eta = calibrated_eta(spec.base, spec.settings)
    jobs = [(spec, values, eta) for values in spec.grid()]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_evaluate_point, jobs))
    else:
        rows = [_evaluate_point(j) for j in jobs]
    columns = [a.name for a in spec.axes] + list(METRICS) + ["eta", "err_raw_floored", "err_herald_floored", "error"]
    return SweepTable(columns, rows)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    n: int


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> ScalingFit:
    """Least-squares slope of log|y| against log|x| over strictly positive values."""
    x = np.abs(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 4:
        raise FitError(f"need at least 4 positive points, have {int(keep.sum())}")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), float(r2), int(keep.sum()))


def fit_scaling(table: SweepTable, metric: str, axis: str) -> ScalingFit:
    """Log-log slope of ``metric`` against ``axis``; floored points are dropped."""
    y = table.column(metric)
    flag = f"{metric}_floored"
    if flag in table.columns:
        y = np.where(table.column(flag) > 0, np.nan, y)
    return fit_loglog(table.column(axis), y)
