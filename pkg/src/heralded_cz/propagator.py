"""Schrödinger propagation ``i dψ/dt = H(t) ψ`` over one Hamiltonian block.

Three integrators are available:

``dop853``
    Adaptive 8th-order Runge-Kutta (scipy), waveforms evaluated at stage times.
``rk4``
    Fixed-step classical RK4, 10^5 steps by default. Kept deliberately simple
    and independent of the other two; used as the reference oracle.
``magnus4``
    Fixed-step 4th-order Magnus expansion with Gauss-Legendre nodes. Exactly
    unitary per step and much faster; used by the optimizer and long sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, IntegrationError
from .model import HamiltonianBlock

Method = Literal["dop853", "rk4", "magnus4"]
METHODS = ("dop853", "rk4", "magnus4")
NOMINAL_ORDER = {"dop853": 8, "rk4": 4, "magnus4": 4}


@dataclass(frozen=True)
class IntegratorSettings:
    """Integrator choice and accuracy controls.

    ``rtol``/``atol``/``max_step`` apply to ``dop853``; ``steps`` is the number
    of fixed steps per drive window for ``rk4`` and ``magnus4`` (``None`` picks
    the method default).
    """

    method: Method = "dop853"
    rtol: float = 1e-12
    atol: float = 1e-14
    max_step: float = 0.0025
    steps: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown integrator method {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0 and self.max_step > 0):
            raise ConfigError("integrator tolerances and max_step must be positive")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1")

    @property
    def order(self) -> int:
        return NOMINAL_ORDER[self.method]

    def n_steps(self) -> int:
        if self.steps is not None:
            return int(self.steps)
        return 100_000 if self.method == "rk4" else 2000

    def check_tau(self, tau: float) -> None:
        if self.max_step > tau / 100 * (1 + 1e-12):
            raise ConfigError(f"max_step {self.max_step} exceeds tau/100 = {tau / 100}")

    def refined(self) -> "IntegratorSettings":
        """Same method at twice the accuracy (halved tolerance or step)."""
        if self.method == "dop853":
            return replace(self, rtol=self.rtol / 2, atol=self.atol / 2)
        return replace(self, steps=2 * self.n_steps())


ORACLE = IntegratorSettings(method="rk4", steps=100_000)


def _as_span(block: HamiltonianBlock, span):
    return block.window if span is None else (float(span[0]), float(span[1]))


def _check_finite(y: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite amplitudes", t)


def _dop853(block: HamiltonianBlock, y0: np.ndarray, t0: float, t1: float, settings: IntegratorSettings):
    shape = y0.shape
    d = block.dim
    structured = isinstance(block, HamiltonianBlock)
    if structured:
        xb, xq, nb = block.x_buffer, block.x_qubit, block.n_buffer

    def rhs(t, y):
        om_b, om_q, det = block.controls(t)
        diag = det[0] * nb + block.static_diag(t)[0]
        psi = y.reshape(d, -1)
        h_psi = om_b[0] * (xb @ psi) + om_q[0] * (xq @ psi) + diag[:, None] * psi
        return (-1j * h_psi).ravel()

    def rhs_generic(t, y):
        return (-1j * (block.stack(np.array([t]))[0] @ y.reshape(d, -1))).ravel()

    sol = solve_ivp(
        rhs if structured else rhs_generic,
        (t0, t1),
        y0.astype(complex).ravel(),
        method="DOP853",
        rtol=settings.rtol,
        atol=settings.atol,
        max_step=settings.max_step,
    )
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(f"adaptive integration failed: {sol.message}", t_fail)
    y = sol.y[:, -1].reshape(shape)
    _check_finite(y, t1)
    return y


def _rk4(block, y0: np.ndarray, t0: float, t1: float, n: int, chunk: int = 2048):
    h = (t1 - t0) / n
    y = y0.astype(complex)
    for first in range(0, n, chunk):
        last = min(first + chunk, n)
        # nodes t_k, t_k + h/2, ..., t_last
        nodes = t0 + 0.5 * h * np.arange(2 * first, 2 * last + 1)
        hs = -1j * block.stack(nodes)
        for k in range(last - first):
            a, m, b = hs[2 * k], hs[2 * k + 1], hs[2 * k + 2]
            k1 = a @ y
            k2 = m @ (y + 0.5 * h * k1)
            k3 = m @ (y + 0.5 * h * k2)
            k4 = b @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    _check_finite(y, t1)
    return y


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """``mats[-1] @ ... @ mats[0]`` by pairwise reduction."""
    eye = np.eye(mats.shape[-1], dtype=mats.dtype)
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, eye[None]])
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def magnus4_unitary(block, t0: float, t1: float, n: int, chunk: int = 4096) -> np.ndarray:
    h = (t1 - t0) / n
    off = h / (2 * math.sqrt(3))
    u = np.eye(block.dim, dtype=complex)
    for first in range(0, n, chunk):
        mid = t0 + h * (np.arange(first, min(first + chunk, n)) + 0.5)
        h1 = block.stack(mid - off)
        h2 = block.stack(mid + off)
        # exp(-i G) with G = h/2 (H1 + H2) - i (√3/12) h² [H2, H1]
        gen = 0.5 * h * (h1 + h2) - 1j * (math.sqrt(3) / 12) * h * h * (h2 @ h1 - h1 @ h2)
        w, v = np.linalg.eigh(gen)
        steps = (v * np.exp(-1j * w)[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
        u = _ordered_product(steps) @ u
    _check_finite(u, t1)
    return u


def _evolve_columns(block, y0, span, settings):
    t0, t1 = _as_span(block, span)
    settings.check_tau(block.tau)
    if t1 == t0:
        return y0.astype(complex)
    if settings.method == "dop853":
        return _dop853(block, y0, t0, t1, settings)
    if settings.method == "rk4":
        return _rk4(block, y0, t0, t1, settings.n_steps())
    return magnus4_unitary(block, t0, t1, settings.n_steps()) @ y0


def evolve(
    block: HamiltonianBlock,
    psi0,
    span: tuple[float, float] | None = None,
    settings: IntegratorSettings = IntegratorSettings(),
) -> np.ndarray:
    """Final state ψ(t1) starting from ``psi0`` at t0.

    ``span`` defaults to the block's drive window. No renormalization is done.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (block.dim,):
        raise ValueError(f"state has shape {psi0.shape}, block dimension is {block.dim}")
    return _evolve_columns(block, psi0[:, None], span, settings)[:, 0]


def propagate_block_unitary(
    block: HamiltonianBlock,
    span: tuple[float, float] | None = None,
    settings: IntegratorSettings = IntegratorSettings(),
) -> np.ndarray:
    """Propagator over ``span``; column j is ``evolve`` of basis vector j."""
    return _evolve_columns(block, np.eye(block.dim, dtype=complex), span, settings)


def trajectory(
    block: HamiltonianBlock,
    psi0,
    times,
    settings: IntegratorSettings = IntegratorSettings(),
) -> np.ndarray:
    """States at each of ``times`` (sorted, first one is the start); shape (len, dim)."""
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi0, dtype=complex)
    out = [psi]
    for a, b in zip(times[:-1], times[1:]):
        psi = evolve(block, psi, (a, b), settings)
        out.append(psi)
    return np.array(out)
