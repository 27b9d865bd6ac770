"""Level schemes, computational blocks and Hamiltonian assembly.

The qubit drive only couples ``|1> <-> |r>``, so the dynamics split into one
block per computational register state ``q`` and per rail. Each block holds a
small product basis over (buffer, control, target) and the static matrices
needed to assemble ``H(t)``.

Rail ``k`` couples buffer ground state ``k`` to its Rydberg level ``r_k``. Rail 0
sees buffer detuning ``-Δ_1(t)``, rail 1 sees ``+Δ_1(t)``. The buffer-qubit
interaction is a diagonal shift ``B_k`` per excited buffer-qubit pair.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import ConfigError, OutOfRangeError
from .waveform import PulsePair, raised_cosine_ramp

Layout = Literal["chain_no_qq", "all_blockade_ideal"]
Mode = Literal["simultaneous", "sequential"]

LAYOUTS = ("chain_no_qq", "all_blockade_ideal")
MODES = ("simultaneous", "sequential")
REGISTER_STATES = ("00", "01", "10", "11")
INF = math.inf

# default buffer-qubit blockade, rad/us
B_DEFAULT = 2 * math.pi * 100.0

_TIME_SLACK = 1e-12


@dataclass(frozen=True)
class SystemConfig:
    """Everything that defines the Hamiltonian family of one gate run.

    Frequencies are angular (rad/μs); ``B0``/``B1`` may be ``math.inf``.
    ``buffer_shift`` is the dc shift δ of Δ_1 (rail 0 sees ``-Δ_1-δ``, rail 1
    ``Δ_1+δ``), ``qubit_shift`` a dc shift of the qubit Rydberg level in both
    rails, ``batch2_scale`` the Rabi factor of pulse batch 2 (sequential only).
    """

    buffer_pulse: PulsePair
    qubit_pulse: PulsePair
    layout: Layout = "chain_no_qq"
    B0: float = B_DEFAULT
    B1: float = B_DEFAULT
    mode: Mode = "simultaneous"
    ramp: float = 0.0
    buffer_shift: float = 0.0
    qubit_shift: float = 0.0
    batch2_scale: float = 1.0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.qubit_pulse.detuning.is_zero:
            raise ConfigError("qubit detuning must be identically zero")
        if self.buffer_pulse.tau != self.qubit_pulse.tau:
            raise ConfigError("buffer and qubit pulses must share tau")
        if self.layout == "all_blockade_ideal":
            object.__setattr__(self, "B0", INF)
            object.__setattr__(self, "B1", INF)
        for name in ("B0", "B1"):
            b = float(getattr(self, name))
            if math.isnan(b) or b <= 0:
                raise ConfigError(f"{name} must be positive or infinite, got {b}")
            object.__setattr__(self, name, b)
        if not 0 <= self.ramp <= self.tau / 2:
            raise ConfigError(f"ramp must lie in [0, tau/2], got {self.ramp}")
        for name in ("buffer_shift", "qubit_shift", "batch2_scale"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def tau(self) -> float:
        return self.buffer_pulse.tau

    def blockade(self, rail: int) -> float:
        return self.B0 if rail == 0 else self.B1

    def window(self, rail: int) -> tuple[float, float]:
        """Time interval (μs) during which ``rail`` is driven."""
        half = self.tau / 2
        if self.mode == "sequential" and rail == 1:
            return (half, 3 * half)
        return (-half, half)

    @property
    def span(self) -> tuple[float, float]:
        """Whole protocol interval (μs)."""
        half = self.tau / 2
        return (-half, 3 * half) if self.mode == "sequential" else (-half, half)

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class BasisBlock:
    """Ordered product basis for register state ``q`` on ``rail``.

    Labels are ``(buffer, control, target)`` with buffer in ``{"g", "r0", "r1"}``
    and qubits in ``{"0", "1", "r"}``. Element 0 is always the register state.
    """

    q: str
    rail: int
    labels: tuple[tuple[str, str, str], ...]

    @property
    def dim(self) -> int:
        return len(self.labels)

    def excitations(self) -> np.ndarray:
        """Rydberg flags, shape (dim, 3): buffer, control, target."""
        return np.array([[lab[0] != "g", lab[1] == "r", lab[2] == "r"] for lab in self.labels], dtype=int)

    def parity(self) -> np.ndarray:
        """+1 for an even number of Rydberg atoms, -1 for odd."""
        return 1 - 2 * (self.excitations().sum(axis=1) % 2)


def build_basis(config: SystemConfig, q: str, rail: int) -> BasisBlock:
    if q not in REGISTER_STATES:
        raise ConfigError(f"unknown register state {q!r}")
    if rail not in (0, 1):
        raise ConfigError(f"rail must be 0 or 1, got {rail}")
    infinite = math.isinf(config.blockade(rail))
    # flags: (buffer, control, target); qubits in |0> never leave it
    choices = [(0, 1)] + [(0, 1) if bit == "1" else (0,) for bit in q]
    flags = []
    for f in itertools.product(*choices):
        if infinite and f[0] and (f[1] or f[2]):
            continue
        if config.layout == "all_blockade_ideal" and sum(f) > 1:
            continue
        flags.append(f)
    flags.sort(key=lambda f: (sum(f), tuple(-x for x in f)))
    rk = f"r{rail}"
    labels = tuple(
        (rk if f[0] else "g", "r" if f[1] else q[0], "r" if f[2] else q[1]) for f in flags
    )
    return BasisBlock(q, rail, labels)


@dataclass(frozen=True)
class HamiltonianBlock:
    """Time-dependent block Hamiltonian.

    ``H(t) = Ω_b(t) X_b + Ω_q(t) X_q + diag(d_b(t) n_b + static)``, zero outside
    the rail's drive window.
    """

    config: SystemConfig
    basis: BasisBlock
    x_buffer: np.ndarray = field(repr=False)
    x_qubit: np.ndarray = field(repr=False)
    n_buffer: np.ndarray = field(repr=False)
    static: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def tau(self) -> float:
        return self.config.tau

    @property
    def window(self) -> tuple[float, float]:
        return self.config.window(self.basis.rail)

    def controls(self, t):
        """(Ω_b, Ω_q, d_b) arrays at times ``t``; zero outside the window."""
        cfg = self.config
        rail = self.basis.rail
        t = np.atleast_1d(np.asarray(t, dtype=float))
        start, stop = self.window
        s = t - start
        scale = cfg.batch2_scale if (cfg.mode == "sequential" and rail == 1) else 1.0
        env = raised_cosine_ramp(t, start, stop, cfg.ramp) * scale
        om_b = cfg.buffer_pulse.rabi(s) * env
        om_q = cfg.qubit_pulse.rabi(s) * env
        sign = -1.0 if rail == 0 else 1.0
        det = sign * (cfg.buffer_pulse.detuning(s) + cfg.buffer_shift)
        inside = (t >= start - _TIME_SLACK) & (t <= stop + _TIME_SLACK)
        if cfg.mode == "sequential":
            # idle rail: no couplings, no phase
            om_b, om_q, det = om_b * inside, om_q * inside, det * inside
        return om_b, om_q, det

    def static_diag(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.config.mode != "sequential":
            return np.broadcast_to(self.static, t.shape + self.static.shape)
        start, stop = self.window
        inside = (t >= start - _TIME_SLACK) & (t <= stop + _TIME_SLACK)
        return inside[:, None] * self.static

    def stack(self, t) -> np.ndarray:
        """H at every time in ``t``; shape (len(t), dim, dim)."""
        om_b, om_q, det = self.controls(t)
        diag = det[:, None] * self.n_buffer + self.static_diag(t)
        h = om_b[:, None, None] * self.x_buffer + om_q[:, None, None] * self.x_qubit
        idx = np.arange(self.dim)
        h[:, idx, idx] += diag
        return h

    def at(self, t: float) -> np.ndarray:
        lo, hi = self.config.span
        if not (lo - _TIME_SLACK <= t <= hi + _TIME_SLACK):
            raise OutOfRangeError(f"t = {t} outside pulse interval [{lo}, {hi}]")
        return self.stack(np.array([t]))[0]

    def __call__(self, t: float) -> np.ndarray:
        return self.at(t)


def build_block(config: SystemConfig, q: str, rail: int) -> HamiltonianBlock:
    basis = build_basis(config, q, rail)
    exc = basis.excitations()
    index = {tuple(f): i for i, f in enumerate(exc)}
    d = basis.dim
    xb = np.zeros((d, d))
    xq = np.zeros((d, d))
    for i, f in enumerate(exc):
        for atom in range(3):
            if atom > 0 and q[atom - 1] == "0":
                continue
            g = list(f)
            g[atom] ^= 1
            j = index.get(tuple(g))
            if j is not None:
                (xb if atom == 0 else xq)[i, j] = 0.5
    n_buffer = exc[:, 0].astype(float)
    n_qubit = (exc[:, 1] + exc[:, 2]).astype(float)
    static = config.qubit_shift * n_qubit
    b = config.blockade(rail)
    if math.isfinite(b):
        static = static + b * n_buffer * n_qubit
    return HamiltonianBlock(config, basis, xb, xq, n_buffer, static)


def hamiltonian_at(config: SystemConfig, block: BasisBlock | HamiltonianBlock, t: float) -> np.ndarray:
    """Hermitian block matrix (rad/μs) at time ``t``."""
    if isinstance(block, BasisBlock):
        block = build_block(config, block.q, block.rail)
    return block.at(t)


def basis_report(config: SystemConfig) -> dict:
    """Basis labels per rail and register state, for JSON diagnostics."""
    return {
        f"rail{rail}": {
            q: ["".join(lab) for lab in build_basis(config, q, rail).labels] for q in REGISTER_STATES
        }
        for rail in (0, 1)
    }
