"""Controlled error models applied to a :class:`SystemConfig`."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

from .errors import ConfigError
from .model import SystemConfig
from .waveform import PulsePair

Kind = Literal["rabi_scale", "detuning_offset", "blockade_override", "batch_mismatch"]
Target = Literal["buffer", "qubits", "both"]

KINDS = ("rabi_scale", "detuning_offset", "blockade_override", "batch_mismatch")
TARGETS = ("buffer", "qubits", "both")


@dataclass(frozen=True)
class Perturbation:
    """One perturbation.

    ``magnitude`` is ε for ``rabi_scale``/``batch_mismatch``, δ in rad/μs for
    ``detuning_offset`` and a ``(B0, B1)`` pair in rad/μs (entries may be
    ``math.inf``) for ``blockade_override``.
    """

    kind: Kind
    magnitude: float | tuple[float, float]
    target: Target = "both"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"unknown perturbation target {self.target!r}")
        if self.kind == "blockade_override":
            pair = tuple(float(b) for b in self.magnitude)
            if len(pair) != 2 or any(math.isnan(b) or b <= 0 for b in pair):
                raise ConfigError("blockade_override needs two positive (or infinite) values")
            object.__setattr__(self, "magnitude", pair)
        else:
            if not math.isfinite(self.magnitude):
                raise ConfigError("perturbation magnitude must be finite")
            object.__setattr__(self, "magnitude", float(self.magnitude))


def _scale_rabi(p: PulsePair, factor: float) -> PulsePair:
    if factor == 1.0:
        return p
    return PulsePair(p.rabi.scaled(factor), p.detuning)


def apply_perturbation(config: SystemConfig, pert: Perturbation) -> SystemConfig:
    """Return a new configuration with ``pert`` applied."""
    kind, m, target = pert.kind, pert.magnitude, pert.target
    if kind == "rabi_scale":
        factor = 1.0 + m
        changes = {}
        if target in ("buffer", "both"):
            changes["buffer_pulse"] = _scale_rabi(config.buffer_pulse, factor)
        if target in ("qubits", "both"):
            changes["qubit_pulse"] = _scale_rabi(config.qubit_pulse, factor)
        return config.replace(**changes)
    if kind == "detuning_offset":
        changes = {}
        if target in ("buffer", "both"):
            changes["buffer_shift"] = config.buffer_shift + m
        if target in ("qubits", "both"):
            changes["qubit_shift"] = config.qubit_shift + m
        return config.replace(**changes)
    if kind == "blockade_override":
        if config.layout == "all_blockade_ideal" and not all(math.isinf(b) for b in m):
            raise ConfigError("all_blockade_ideal layout has no finite blockade to override")
        return config.replace(B0=m[0], B1=m[1])
    # batch_mismatch
    if config.mode != "sequential":
        raise ConfigError("batch_mismatch only applies to the sequential mode")
    return config.replace(batch2_scale=config.batch2_scale * (1.0 + m))


def apply_all(config: SystemConfig, perts) -> SystemConfig:
    for p in perts or ():
        config = apply_perturbation(config, p)
    return config
