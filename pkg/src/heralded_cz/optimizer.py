"""Search for CZ-realizing Fourier waveforms.

Parameters are the cosine coefficients of Ω_1, Δ_1 and Ω_2 (Δ_2 stays zero),
so every candidate is real and even in time and its PT partner is a candidate
too. The search is Nelder-Mead with seeded restarts under a hard evaluation
budget.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from .errors import IntegrationError
from .gate import CZ, avg_gate_fidelity, phase_compensate, rail_amplitudes
from .model import SystemConfig
from .propagator import IntegratorSettings
from .waveform import FourierWaveform, PulsePair

log = logging.getLogger(__name__)

FAILURE_PENALTY = 1e3
INIT_PEAK_RABI = 2 * math.pi * 30.0
WAVEFORMS = ("buffer_rabi", "buffer_detuning", "qubit_rabi")

# step-II signs allowed on each qubit (local Z by 0 or π)
_FLIPS = [np.array([1, s2, s1, s1 * s2]) for s1 in (1, -1) for s2 in (1, -1)]


@dataclass(frozen=True)
class CostSpec:
    """Cost weights, search space and the system being optimized.

    ``compensation`` selects which local phase corrections the fidelity term may
    use: ``"flips"`` (local Z by 0 or π, keeps both rails' phase patterns
    compatible), ``"continuous"`` (arbitrary local Z) or ``"none"``.
    """

    base: SystemConfig
    n_harmonics: int = 8
    w_fid: float = 1.0
    w_leak: float = 0.0
    w_power: float = 0.0
    power_cap: float = math.inf
    bounds: tuple[float, float] = (-150.0, 150.0)
    compensation: Literal["flips", "continuous", "none"] = "flips"
    settings: IntegratorSettings = field(default_factory=lambda: IntegratorSettings("magnus4", steps=1000))

    def __post_init__(self):
        if self.n_harmonics < 1:
            raise ValueError("n_harmonics must be >= 1")
        if min(self.w_fid, self.w_leak, self.w_power) < 0 or self.w_fid <= 0:
            raise ValueError("weights must be non-negative with w_fid > 0")
        if not self.bounds[0] < self.bounds[1]:
            raise ValueError("coefficient bounds must be increasing")
        if self.compensation not in ("flips", "continuous", "none"):
            raise ValueError(f"unknown compensation {self.compensation!r}")

    @property
    def size(self) -> int:
        return 3 * (self.n_harmonics + 1)


def split(x, n_harmonics: int) -> dict[str, list[float]]:
    x = np.asarray(x, dtype=float)
    k = n_harmonics + 1
    return {name: x[i * k : (i + 1) * k].tolist() for i, name in enumerate(WAVEFORMS)}


def join(coeffs: dict) -> np.ndarray:
    return np.concatenate([np.asarray(coeffs[name], dtype=float) for name in WAVEFORMS])


def with_coeffs(base: SystemConfig, coeffs: dict) -> SystemConfig:
    tau = base.tau
    return base.replace(
        buffer_pulse=PulsePair(
            FourierWaveform(tuple(coeffs["buffer_rabi"]), tau), FourierWaveform(tuple(coeffs["buffer_detuning"]), tau)
        ),
        qubit_pulse=PulsePair(FourierWaveform(tuple(coeffs["qubit_rabi"]), tau), FourierWaveform.zero(tau)),
    )


def gate_fidelity(m, compensation: str = "flips") -> float:
    if compensation == "none":
        return avg_gate_fidelity(m, CZ)
    if compensation == "continuous":
        return avg_gate_fidelity(phase_compensate(m)[0], CZ)
    return max(avg_gate_fidelity(s * m, CZ) for s in _FLIPS)


def cost(coeffs, spec: CostSpec) -> float:
    """``w_fid (1 - F) + w_leak Σ leak + w_power Σ overshoot`` for rail 0."""
    if isinstance(coeffs, dict):
        coeffs = join(coeffs)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size != spec.size:
        raise ValueError(f"expected {spec.size} coefficients, got {coeffs.size}")
    cfg = with_coeffs(spec.base, split(coeffs, spec.n_harmonics))
    try:
        amps = rail_amplitudes(cfg, 0, (), spec.settings)
    except IntegrationError as exc:
        log.warning("cost evaluation failed: %s", exc)
        return FAILURE_PENALTY
    value = spec.w_fid * (1.0 - gate_fidelity(amps.m, spec.compensation))
    if spec.w_leak:
        value += spec.w_leak * max(float(np.sum(amps.leak)), 0.0)
    if spec.w_power:
        over = sum(max(p.rabi.peak() - spec.power_cap, 0.0) for p in (cfg.buffer_pulse, cfg.qubit_pulse))
        value += spec.w_power * over
    return max(float(value), 0.0)


@dataclass
class SearchResult:
    coeffs: dict[str, list[float]]
    cost: float
    evaluations: int
    history: list[tuple[int, float]]
    seed: int
    restarts: int

    def config(self, base: SystemConfig) -> SystemConfig:
        return with_coeffs(base, self.coeffs)


class _BudgetExhausted(Exception):
    pass


def random_start(spec: CostSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw in the bounds, Rabi waveforms rescaled to a modest peak."""
    lo, hi = spec.bounds
    x = rng.uniform(lo, hi, spec.size)
    parts = split(x, spec.n_harmonics)
    for name in ("buffer_rabi", "qubit_rabi"):
        peak = FourierWaveform(tuple(parts[name]), spec.base.tau).peak()
        if peak > INIT_PEAK_RABI:
            parts[name] = [c * INIT_PEAK_RABI / peak for c in parts[name]]
    return join(parts)


def optimize(
    spec: CostSpec,
    seed: int = 0,
    max_evals: int = 20_000,
    initial: dict | None = None,
    restart_evals: int = 4000,
    kick: float = 0.02,
    target: float = 0.0,
) -> SearchResult:
    """Nelder-Mead with seeded restarts.

    Restart 0 starts from ``initial`` (or a random draw). Later restarts start
    from the best point plus a Gaussian kick of ``kick`` × bound width when an
    initial guess was given, from a fresh random draw otherwise. Stops at
    ``max_evals`` evaluations or once the cost is ≤ ``target``.
    """
    if max_evals < 1:
        raise ValueError("max_evals must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = spec.bounds
    x0 = np.clip(join(initial), lo, hi) if initial is not None else random_start(spec, rng)
    state = {"n": 0, "best": math.inf, "x": x0.copy()}
    history: list[tuple[int, float]] = []

    def f(x):
        if state["n"] >= max_evals:
            raise _BudgetExhausted
        state["n"] += 1
        c = cost(x, spec)
        if c < state["best"]:
            state["best"], state["x"] = c, np.array(x, dtype=float)
            history.append((state["n"], c))
            if c <= target:
                raise _BudgetExhausted
        return c

    restarts = 0
    try:
        f(x0)
        while state["n"] < max_evals:
            if restarts == 0:
                start = x0
            elif initial is not None:
                start = np.clip(state["x"] + kick * (hi - lo) * rng.standard_normal(spec.size), lo, hi)
            else:
                start = random_start(spec, rng)
            restarts += 1
            minimize(
                f,
                start,
                method="Nelder-Mead",
                bounds=[spec.bounds] * spec.size,
                options={"maxfev": restart_evals, "xatol": 1e-10, "fatol": 1e-14, "adaptive": True},
            )
    except _BudgetExhausted:
        pass
    return SearchResult(
        coeffs=split(state["x"], spec.n_harmonics),
        cost=float(state["best"]),
        evaluations=state["n"],
        history=history,
        seed=seed,
        restarts=restarts,
    )
