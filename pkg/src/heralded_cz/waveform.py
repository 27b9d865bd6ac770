"""Fourier-series modulation waveforms.

A waveform is stored as the real coefficient list ``[a_0, a_1, ..., a_N]`` and a
base period ``tau`` (μs). Its value is

    f(t) = 2π (a_0 + Σ_n 2 a_n cos(2π n t / tau)) / (2N + 1)    [rad/μs]

so the coefficients keep the familiar "2π × MHz" scale of published pulse sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TAU_DEFAULT = 0.25


@dataclass(frozen=True)
class FourierWaveform:
    """Real, even, tau-periodic cosine series.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients ``a_0 .. a_N`` (dimensionless, 2π×MHz scale).
    tau : float
        Base period in μs.
    """

    coeffs: tuple[float, ...]
    tau: float = TAU_DEFAULT
    _harmonics: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        raw = self.coeffs
        if np.iscomplexobj(np.asarray(raw)):
            raise ValueError("waveform coefficients must be real")
        coeffs = tuple(float(c) for c in np.atleast_1d(np.asarray(raw, dtype=float)))
        if len(coeffs) == 0:
            raise ValueError("waveform needs at least one coefficient")
        if not all(np.isfinite(coeffs)):
            raise ValueError("waveform coefficients must be finite")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "_harmonics", np.arange(1, len(coeffs)))

    @classmethod
    def zero(cls, tau: float = TAU_DEFAULT) -> "FourierWaveform":
        return cls((0.0,), tau)

    @property
    def order(self) -> int:
        """Highest harmonic N."""
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def __call__(self, t):
        return eval_waveform(self, t)

    def scaled(self, factor: float) -> "FourierWaveform":
        return FourierWaveform(tuple(factor * c for c in self.coeffs), self.tau)

    def negated(self) -> "FourierWaveform":
        return FourierWaveform(tuple(-c for c in self.coeffs), self.tau)

    def peak(self, samples: int = 512) -> float:
        """Max |f| over one period, sampled."""
        t = np.linspace(0.0, self.tau, samples, endpoint=False)
        return float(np.max(np.abs(eval_waveform(self, t))))


def eval_waveform(w: FourierWaveform, t):
    """Evaluate ``w`` at time(s) ``t`` (μs); returns rad/μs.

    Accepts a scalar or an array of times and evaluates the series exactly.
    """
    c = np.asarray(w.coeffs)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    acc = np.full(t.shape, c[0])
    if w.order:
        phase = (2 * np.pi / w.tau) * np.multiply.outer(t, w._harmonics)
        acc = acc + 2.0 * (np.cos(phase) @ c[1:])
    out = (2 * np.pi / (2 * w.order + 1)) * acc
    return float(out[0]) if scalar else out


def raised_cosine_ramp(t, start: float, stop: float, ramp: float):
    """Envelope rising from 0 to 1 over ``ramp`` μs at both ends of [start, stop]."""
    t = np.asarray(t, dtype=float)
    if ramp <= 0:
        return np.ones_like(t)
    up = np.clip((t - start) / ramp, 0.0, 1.0)
    down = np.clip((stop - t) / ramp, 0.0, 1.0)
    return 0.25 * (1 - np.cos(np.pi * up)) * (1 - np.cos(np.pi * down))


@dataclass(frozen=True)
class PulsePair:
    """Rabi frequency and detuning waveforms driving one transition."""

    rabi: FourierWaveform
    detuning: FourierWaveform

    def __post_init__(self):
        if self.rabi.tau != self.detuning.tau:
            raise ValueError("rabi and detuning must share tau")

    @classmethod
    def from_coeffs(
        cls,
        rabi: Sequence[float],
        detuning: Sequence[float] | None = None,
        tau: float = TAU_DEFAULT,
    ) -> "PulsePair":
        det = FourierWaveform((0.0,), tau) if detuning is None else FourierWaveform(tuple(detuning), tau)
        return cls(FourierWaveform(tuple(rabi), tau), det)

    @property
    def tau(self) -> float:
        return self.rabi.tau


def pt_partner(p: PulsePair) -> PulsePair:
    """Same Rabi waveform, every detuning coefficient negated."""
    if p.detuning.is_zero:
        return p
    return PulsePair(p.rabi, p.detuning.negated())
