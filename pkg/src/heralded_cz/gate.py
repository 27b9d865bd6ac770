"""Dual-rail heralded protocol, gate matrices and fidelity metrics.

Protocol:

1. buffer ``|0_b> -> (|0_b> - i|1_b>)/√2`` (ideal π/2 rotation);
2. both rails evolve; rail k multiplies register component ``q`` by ``m^k_q``;
3. buffer gets ``e^{-iη}`` on ``|1_b>``, then the inverse π/2 rotation, and is
   measured.

The ``|0_b>`` branch carries ``M_h = (m^0 + e^{-iη} m^1)/2`` (success) and the
``|1_b>`` branch ``E_h = i (m^0 - e^{-iη} m^1)/2`` (heralded error).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import HeraldStarvedError, NoHeraldError, UndefinedPhaseError
from .model import REGISTER_STATES, SystemConfig, build_block
from .perturb import Perturbation, apply_all
from .propagator import ORACLE, IntegratorSettings, evolve, propagate_block_unitary
from .waveform import raised_cosine_ramp

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
CZ_DIAG = np.array([1.0, 1.0, 1.0, -1.0], dtype=complex)
D = 4

CP_TOLERANCE = 0.05
RETURN_THRESHOLD = 0.99


@dataclass(frozen=True)
class RailAmplitudes:
    """Register-return amplitudes ``m_q`` of one rail, ordered 00, 01, 10, 11."""

    rail: int
    m: np.ndarray

    @property
    def leak(self) -> np.ndarray:
        return 1.0 - np.abs(self.m) ** 2

    @property
    def conditional_phase(self) -> float:
        """arg m00 - arg m01 - arg m10 + arg m11, wrapped to [0, 2π)."""
        return conditional_phase(self.m)


def conditional_phase(m) -> float:
    m = np.asarray(m)
    ph = np.angle(m[0]) - np.angle(m[1]) - np.angle(m[2]) + np.angle(m[3])
    return float(np.mod(ph, 2 * np.pi))


def wrap(angle: float) -> float:
    """Wrap to (-π, π]."""
    return float(-np.mod(-angle + np.pi, 2 * np.pi) + np.pi)


def rail_amplitudes(
    config: SystemConfig,
    rail: int,
    perturbations: Sequence[Perturbation] = (),
    settings: IntegratorSettings = IntegratorSettings(),
) -> RailAmplitudes:
    config = apply_all(config, perturbations)
    m = np.empty(4, dtype=complex)
    for i, q in enumerate(REGISTER_STATES):
        block = build_block(config, q, rail)
        psi0 = np.zeros(block.dim, dtype=complex)
        psi0[0] = 1.0
        m[i] = evolve(block, psi0, None, settings)[0]
    return RailAmplitudes(rail, m)


def both_rails(config, perturbations=(), settings=IntegratorSettings()):
    return tuple(rail_amplitudes(config, k, perturbations, settings) for k in (0, 1))


def eta_auto(m0, m1) -> float:
    """Buffer phase η maximizing the heralding probability."""
    m0 = getattr(m0, "m", m0)
    m1 = getattr(m1, "m", m1)
    overlap = np.vdot(m0, m1)
    if abs(overlap) < 1e-12:
        raise UndefinedPhaseError("rails are orthogonal; relative phase undefined")
    return float(np.angle(overlap))


@dataclass(frozen=True)
class HeraldResult:
    """Heralded (``Mh``) and error-branch (``Eh``) diagonals plus metrics."""

    m0: np.ndarray
    m1: np.ndarray
    Mh: np.ndarray
    Eh: np.ndarray
    eta: float
    conjugacy_residual: float
    p_herald: float | None = None
    F_raw: float | None = None
    F_herald: float | None = None
    compensation: tuple[float, float, float] | None = field(default=None)

    @property
    def Mh_matrix(self) -> np.ndarray:
        return np.diag(self.Mh)

    @property
    def Eh_matrix(self) -> np.ndarray:
        return np.diag(self.Eh)

    @property
    def max_leak(self) -> float:
        return float(max(np.max(1 - np.abs(self.m0) ** 2), np.max(1 - np.abs(self.m1) ** 2)))


def herald_combine(m0, m1, eta: float = 0.0) -> HeraldResult:
    m0 = np.asarray(getattr(m0, "m", m0), dtype=complex)
    m1 = np.asarray(getattr(m1, "m", m1), dtype=complex)
    rotated = np.exp(-1j * eta) * m1
    return HeraldResult(
        m0=m0,
        m1=m1,
        Mh=(m0 + rotated) / 2,
        Eh=1j * (m0 - rotated) / 2,
        eta=float(eta),
        conjugacy_residual=float(np.max(np.abs(m1 - np.conj(m0)))),
    )


def avg_gate_fidelity(M, target=CZ) -> float:
    """Average gate fidelity ``[Tr(M̃†M̃) + |Tr M̃|²] / (d(d+1))``, ``M̃ = target† M``."""
    M = np.asarray(M, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if M.ndim == 1:
        M = np.diag(M)
    if target.ndim == 1:
        target = np.diag(target)
    d = M.shape[0]
    mt = target.conj().T @ M
    f = (np.real(np.trace(mt.conj().T @ mt)) + abs(np.trace(mt)) ** 2) / (d * (d + 1))
    return float(min(max(f, 0.0), 1.0))


def local_phases(phi_g: float, phi_1: float, phi_2: float) -> np.ndarray:
    """Diagonal of ``e^{iφ_g} diag(1, e^{iφ_2}, e^{iφ_1}, e^{i(φ_1+φ_2)})``."""
    return np.exp(1j * (phi_g + np.array([0.0, phi_2, phi_1, phi_1 + phi_2])))


def phase_compensate(M) -> tuple[np.ndarray, float, float, float]:
    """Best local-Z and global phase correction of a diagonal gate.

    Returns ``(M', φ_g, φ_1, φ_2)`` with ``M' = local_phases(φ_g, φ_1, φ_2) * M``
    maximizing the average fidelity to CZ. Angles are wrapped to (-π, π].
    """
    M = np.asarray(M, dtype=complex)
    d = np.diag(M) if M.ndim == 2 else M
    a = np.angle(d)
    z = np.conj(CZ_DIAG) * d

    def overlap(p):
        return np.sum(z * np.exp(1j * np.array([0.0, p[1], p[0], p[0] + p[1]])))

    start = np.array([a[0] - a[2], a[0] - a[1]])
    res = minimize(
        lambda p: -abs(overlap(p)),
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000, "initial_simplex": start + 0.05 * np.array([[0, 0], [1, 0], [0, 1]])},
    )
    phi_1, phi_2 = (wrap(x) for x in res.x)
    tr = overlap((phi_1, phi_2))
    phi_g = wrap(-np.angle(tr)) if abs(tr) > 0 else 0.0
    corrected = local_phases(phi_g, phi_1, phi_2) * d
    out = np.diag(corrected) if M.ndim == 2 else corrected
    return out, phi_g, phi_1, phi_2


def herald_stats(h: HeraldResult, compensate: bool = False) -> HeraldResult:
    """Fill heralding probability and raw/heralded fidelities."""
    p = float(np.sum(np.abs(h.Mh) ** 2) / D)
    if p < 1e-6:
        raise HeraldStarvedError(f"heralding probability {p:.3g} too small")
    M = h.Mh
    comp = None
    if compensate:
        M, *comp = phase_compensate(M)
        comp = tuple(comp)
    f_raw = avg_gate_fidelity(M, CZ)
    f_her = min(max(f_raw / p, 0.0), 1.0)
    return replace(h, p_herald=p, F_raw=f_raw, F_herald=f_her, compensation=comp)


def error_branch_fidelity(h: HeraldResult) -> float:
    """Fidelity of the normalized ``|1_b>`` branch to CZ (0 if empty)."""
    norm = math.sqrt(float(np.sum(np.abs(h.Eh) ** 2)) / D)
    if norm < 1e-15:
        return 0.0
    return avg_gate_fidelity(h.Eh / norm, CZ)


@dataclass(frozen=True)
class ReadoutModel:
    """``q_fp``: reports 0_b when the buffer is in 1_b; ``q_fn``: the converse."""

    q_fp: float = 0.0
    q_fn: float = 0.0

    def __post_init__(self):
        for name in ("q_fp", "q_fn"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def readout_adjusted(F_herald: float, p_herald: float, F_error_branch: float, r: ReadoutModel) -> float:
    """Fidelity of the heralded output once readout errors mix in the error branch."""
    good = p_herald * (1 - r.q_fn)
    bad = (1 - p_herald) * r.q_fp
    if good + bad < 1e-12:
        raise NoHeraldError("readout never reports a successful herald")
    return (good * F_herald + bad * F_error_branch) / (good + bad)


def resolve_eta(eta, m0, m1) -> float:
    """``eta`` may be a number or ``"auto"``."""
    if isinstance(eta, str):
        if eta != "auto":
            raise ValueError(f"unknown eta mode {eta!r}")
        return eta_auto(m0, m1)
    return float(eta)


def evaluate(
    config: SystemConfig,
    eta=0.0,
    perturbations: Sequence[Perturbation] = (),
    settings: IntegratorSettings = IntegratorSettings(),
    compensate: bool = False,
) -> HeraldResult:
    """Both rails, heralding combination and all metrics for one configuration."""
    r0, r1 = both_rails(config, perturbations, settings)
    h = herald_combine(r0, r1, resolve_eta(eta, r0, r1))
    return herald_stats(h, compensate)


# --- first-order deviation analysis --------------------------------------


@dataclass(frozen=True)
class DeviationSplit:
    """Relative deviations ``δ^k_q = m^k_q(ε)/m^k_q(0) - 1`` of both rails.

    ``slope0``/``slope1`` are central-difference first derivatives dδ/dε
    (Richardson-extrapolated from steps ε and ε/2).
    """

    eps: float
    delta0: np.ndarray
    delta1: np.ndarray
    slope0: np.ndarray
    slope1: np.ndarray
    richardson_gap: float

    @property
    def sum_residual(self) -> np.ndarray:
        return np.abs(self.delta0 + self.delta1)

    @property
    def difference(self) -> np.ndarray:
        return np.abs(self.delta0 - self.delta1)

    @property
    def first_order_sum(self) -> np.ndarray:
        return np.abs(self.slope0 + self.slope1)


def deviation_split(
    config: SystemConfig,
    family: Callable[[float], Perturbation],
    eps: float,
    settings: IntegratorSettings = IntegratorSettings(),
    ideal: tuple[RailAmplitudes, RailAmplitudes] | None = None,
    derivatives: bool = True,
) -> DeviationSplit:
    """Deviations at ``+eps``; with ``derivatives`` also the Richardson slopes
    (three extra evaluations, otherwise the slopes are NaN)."""
    if ideal is None:
        ideal = both_rails(config, (), settings)
    ref = [r.m for r in ideal]
    if min(np.min(np.abs(m)) for m in ref) <= 0.5:
        raise UndefinedPhaseError("ideal return amplitudes too small for relative deviations")
    if eps == 0:
        zero = np.zeros(4, dtype=complex)
        return DeviationSplit(0.0, zero, zero, zero, zero, 0.0)

    def deltas(e):
        rails = both_rails(config, (family(e),), settings)
        return [r.m / m - 1 for r, m in zip(rails, ref)]

    plus = deltas(eps)
    if not derivatives:
        nan = np.full(4, np.nan + 0j)
        return DeviationSplit(float(eps), plus[0], plus[1], nan, nan, math.nan)
    minus = deltas(-eps)
    plus_h, minus_h = deltas(eps / 2), deltas(-eps / 2)
    slopes, gaps = [], []
    for k in (0, 1):
        coarse = (plus[k] - minus[k]) / (2 * eps)
        fine = (plus_h[k] - minus_h[k]) / eps
        slopes.append((4 * fine - coarse) / 3)
        gaps.append(np.max(np.abs(fine - coarse)))
    return DeviationSplit(float(eps), plus[0], plus[1], slopes[0], slopes[1], float(max(gaps)))


# --- independent full-space oracle -----------------------------------------

_BUFFER_LEVELS = ("0b", "1b", "r0", "r1")
_QUBIT_LEVELS = ("0", "1", "r")


class FullSpaceHamiltonian:
    """Buffer (0b, 1b, r0, r1) ⊗ control ⊗ target (0, 1, r), built from scratch.

    Independent of :func:`model.build_block`: every coupling is written out on
    the full product space. Infinite blockade removes the forbidden states.
    """

    def __init__(self, config: SystemConfig):
        self.config = config
        states = []
        for b, c, t in itertools.product(_BUFFER_LEVELS, _QUBIT_LEVELS, _QUBIT_LEVELS):
            nb = b.startswith("r")
            nq = (c == "r") + (t == "r")
            rail = int(b[1]) if nb else None
            if nb and nq and math.isinf(config.blockade(rail)):
                continue
            if config.layout == "all_blockade_ideal" and nb + nq > 1:
                continue
            states.append((b, c, t))
        self.labels = states
        self.index = {s: i for i, s in enumerate(states)}
        n = len(states)
        self.dim = n
        self.tau = config.tau
        # coupling operators per rail: buffer k_b <-> r_k, qubits 1 <-> r within the rail-k buffer manifold
        self.xb = np.zeros((2, n, n))
        self.xq = np.zeros((2, n, n))
        self.nb = np.zeros((2, n))
        self.static = np.zeros(n)
        for i, (b, c, t) in enumerate(states):
            k = int(b[1]) if b.startswith("r") else int(b[0])
            if b.startswith("r"):
                self.nb[k, i] = 1.0
            partner = {"0b": "r0", "1b": "r1", "r0": "0b", "r1": "1b"}[b]
            j = self.index.get((partner, c, t))
            if j is not None:
                self.xb[k, i, j] = 0.5
            for pos in (1, 2):
                lev = (c, t)[pos - 1]
                if lev == "0":
                    continue
                flip = "r" if lev == "1" else "1"
                other = (b, flip, t) if pos == 1 else (b, c, flip)
                j = self.index.get(other)
                if j is not None:
                    self.xq[k, i, j] = 0.5
            nq = (c == "r") + (t == "r")
            self.static[i] = config.qubit_shift * nq
            if b.startswith("r") and nq and math.isfinite(config.blockade(k)):
                self.static[i] += config.blockade(k) * nq

    active: tuple[int, ...] = (0, 1)

    def stack(self, times) -> np.ndarray:
        cfg = self.config
        times = np.atleast_1d(np.asarray(times, dtype=float))
        h = np.zeros((len(times), self.dim, self.dim))
        idx = np.arange(self.dim)
        for k in self.active:
            start, stop = cfg.window(k)
            s = times - start
            scale = cfg.batch2_scale if (cfg.mode == "sequential" and k == 1) else 1.0
            env = raised_cosine_ramp(times, start, stop, cfg.ramp) * scale
            om_b = cfg.buffer_pulse.rabi(s) * env
            om_q = cfg.qubit_pulse.rabi(s) * env
            det = (1.0 if k else -1.0) * (cfg.buffer_pulse.detuning(s) + cfg.buffer_shift)
            h += om_b[:, None, None] * self.xb[k] + om_q[:, None, None] * self.xq[k]
            h[:, idx, idx] += det[:, None] * self.nb[k]
        h[:, idx, idx] += self.static
        return h


def _buffer_rotation(sign: float) -> np.ndarray:
    """exp(-i sign π/4 σx) on (0b, 1b)."""
    c = 1 / math.sqrt(2)
    return np.array([[c, -1j * sign * c], [-1j * sign * c, c]])


@dataclass(frozen=True)
class EndToEnd:
    """Joint final state of the full protocol."""

    labels: list
    state: np.ndarray
    p_herald: float

    def register_amplitudes(self, buffer: str) -> np.ndarray:
        """Amplitudes of (buffer, q) for q = 00, 01, 10, 11."""
        idx = {lab: i for i, lab in enumerate(self.labels)}
        return np.array([self.state[idx[(buffer, q[0], q[1])]] for q in REGISTER_STATES])


def protocol_end_to_end(
    config: SystemConfig,
    amplitudes,
    eta: float = 0.0,
    settings: IntegratorSettings = ORACLE,
    propagator: np.ndarray | None = None,
) -> EndToEnd:
    """Brute-force joint simulation of steps I-III for input ``Σ C_q |q>``.

    ``p_herald`` is the probability of finding the buffer in ``0_b``
    (any qubit configuration). Pass ``propagator`` to reuse a full-space
    step-II unitary between calls.
    """
    c = np.asarray(amplitudes, dtype=complex)
    if abs(np.vdot(c, c).real - 1) > 1e-12:
        raise ValueError("input state must be normalized")
    full = FullSpaceHamiltonian(config)
    if propagator is None:
        propagator = full_space_propagator(config, settings, full)
    psi = np.zeros(full.dim, dtype=complex)
    rot1 = _buffer_rotation(+1)
    for i, q in enumerate(REGISTER_STATES):
        for j, b in enumerate(("0b", "1b")):
            psi[full.index[(b, q[0], q[1])]] += rot1[j, 0] * c[i]
    psi = propagator @ psi
    # step III: buffer phase then inverse rotation on the ground manifold
    rot3 = _buffer_rotation(-1) @ np.diag([1.0, np.exp(-1j * eta)])
    out = psi.copy()
    for c_lev, t_lev in itertools.product(_QUBIT_LEVELS, _QUBIT_LEVELS):
        i0 = full.index.get(("0b", c_lev, t_lev))
        i1 = full.index.get(("1b", c_lev, t_lev))
        if i0 is None or i1 is None:
            continue
        out[i0], out[i1] = rot3 @ np.array([psi[i0], psi[i1]])
    p0 = sum(abs(out[i]) ** 2 for i, lab in enumerate(full.labels) if lab[0] == "0b")
    return EndToEnd(full.labels, out, float(p0))


def full_space_propagator(config: SystemConfig, settings: IntegratorSettings = ORACLE, full=None) -> np.ndarray:
    """Step-II unitary on the full space; sequential batches run one after the other."""
    full = full or FullSpaceHamiltonian(config)
    if config.mode == "simultaneous":
        full.active = (0, 1)
        return propagate_block_unitary(full, config.span, settings)
    u = np.eye(full.dim, dtype=complex)
    for k in (0, 1):
        full.active = (k,)
        u = propagate_block_unitary(full, config.window(k), settings) @ u
    return u


# --- dressing patch --------------------------------------------------------


def dressing_phase(omega_r: float, delta_r: float, t_r: float) -> complex:
    """Return amplitude of a constant two-level drive (Ω_r, Δ_r) over ``t_r``.

    Closed form ``e^{-iΔT/2} [cos(Ω_g T/2) + i (Δ/Ω_g) sin(Ω_g T/2)]``.
    """
    og = math.hypot(omega_r, delta_r)
    half = og * t_r / 2
    # (Δ/Ω_g) sin(Ω_g T/2) = (Δ T/2) sinc(Ω_g T / 2π)
    s = delta_r * t_r / 2 * np.sinc(half / np.pi)
    return complex(np.exp(-0.5j * delta_r * t_r) * (math.cos(half) + 1j * s))


# --- PT diagnostics ----------------------------------------------------------


def rail_diagnostics(r: RailAmplitudes) -> dict:
    cp = r.conditional_phase
    populations = np.abs(r.m) ** 2
    phase_error = abs(wrap(cp - np.pi))
    return {
        "rail": r.rail,
        "populations": populations.tolist(),
        "conditional_phase": cp,
        "phase_error": phase_error,
        "F_compensated": avg_gate_fidelity(phase_compensate(r.m)[0], CZ),
        "is_cz": bool(np.all(populations >= RETURN_THRESHOLD) and phase_error <= CP_TOLERANCE),
    }


def pt_check(config: SystemConfig, settings: IntegratorSettings = IntegratorSettings()) -> dict:
    """Both PT orientations: CZ diagnostics and conjugacy residual."""
    r0, r1 = both_rails(config, (), settings)
    return {
        "rails": [rail_diagnostics(r0), rail_diagnostics(r1)],
        "conjugacy_residual": float(np.max(np.abs(r1.m - np.conj(r0.m)))),
        "phase_agreement": abs(wrap(r0.conditional_phase - r1.conditional_phase)),
        "m0": r0.m,
        "m1": r1.m,
    }
