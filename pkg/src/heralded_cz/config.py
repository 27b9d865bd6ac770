"""TOML run configuration: parsing, validation, writing and hashing.

Frequencies in the file are in units of 2π×MHz (waveform coefficients keep the
published scale), times in μs, angles in radians. Everything is converted to
rad/μs once, here.

Example::

    [waveforms]
    tau = 0.25
    buffer_rabi = [129.82, -33.36, ...]
    buffer_detuning = [-66.80, 3.86, ...]
    qubit_rabi = [97.16, -16.78, ...]

    [system]
    layout = "chain_no_qq"
    B0 = 100.0          # or "inf"
    B1 = 100.0
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .errors import ConfigError
from .gate import ReadoutModel
from .model import SystemConfig
from .propagator import IntegratorSettings
from .waveform import FourierWaveform, PulsePair

TWO_PI = 2 * math.pi

SCHEMA = {
    "waveforms": {"tau", "buffer_rabi", "buffer_detuning", "qubit_rabi", "qubit_detuning", "ramp"},
    "system": {"layout", "B0", "B1", "mode", "buffer_shift", "qubit_shift", "batch2_scale"},
    "protocol": {"eta", "compensate"},
    "integrator": {"method", "rtol", "atol", "max_step", "steps"},
    "readout": {"q_fp", "q_fn"},
    "output": {"dir"},
}
REQUIRED = {"waveforms": ("buffer_rabi", "buffer_detuning", "qubit_rabi")}


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    eta: float | str = 0.0
    compensate: bool = False
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    output_dir: str = "."

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return n
    return None


def _freq(value, where):
    """2π×MHz (or "inf") -> rad/μs."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinite", "infinity"):
            return math.inf
        raise ParseError(f"expected a number or 'inf', got {value!r}", where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    return TWO_PI * float(value)


def _number(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        raise ParseError(f"expected a {'positive ' if positive else ''}finite number, got {value}", where)
    return value


def _coeffs(value, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ParseError("expected a non-empty array of coefficients", where)
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"coefficients must be real numbers, got {v!r}", where)
    return tuple(float(v) for v in value)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(f"malformed config: {exc}", int(m.group(1)) if m else None) from None

    for section, body in data.items():
        if section not in SCHEMA:
            raise ParseError(f"unknown section [{section}]", _line_of(text, section))
        if not isinstance(body, dict):
            raise ParseError(f"[{section}] must be a table", _line_of(text, section, None))
        for key in body:
            if key not in SCHEMA[section]:
                raise ParseError(f"unknown key {section}.{key}", _line_of(text, section, key))
    for section, keys in REQUIRED.items():
        if section not in data:
            raise ParseError(f"missing section [{section}]")
        for key in keys:
            if key not in data[section]:
                raise ParseError(f"missing key {section}.{key}", _line_of(text, section))

    def at(section, key):
        return _line_of(text, section, key)

    wf = data["waveforms"]
    sysd = data.get("system", {})
    tau = _number(wf.get("tau", 0.25), at("waveforms", "tau"), positive=True)
    qd = _coeffs(wf.get("qubit_detuning", [0.0]), at("waveforms", "qubit_detuning"))
    if any(qd):
        raise ParseError("qubit_detuning must be zero (resonant qubit drive)", at("waveforms", "qubit_detuning"))
    ramp = _number(wf.get("ramp", 0.0), at("waveforms", "ramp"))

    try:
        buffer = PulsePair(
            FourierWaveform(_coeffs(wf["buffer_rabi"], at("waveforms", "buffer_rabi")), tau),
            FourierWaveform(_coeffs(wf["buffer_detuning"], at("waveforms", "buffer_detuning")), tau),
        )
        qubit = PulsePair(
            FourierWaveform(_coeffs(wf["qubit_rabi"], at("waveforms", "qubit_rabi")), tau), FourierWaveform.zero(tau)
        )
        system = SystemConfig(
            buffer_pulse=buffer,
            qubit_pulse=qubit,
            layout=sysd.get("layout", "chain_no_qq"),
            B0=_freq(sysd.get("B0", 100.0), at("system", "B0")),
            B1=_freq(sysd.get("B1", 100.0), at("system", "B1")),
            mode=sysd.get("mode", "simultaneous"),
            ramp=ramp,
            buffer_shift=_freq(sysd.get("buffer_shift", 0.0), at("system", "buffer_shift")),
            qubit_shift=_freq(sysd.get("qubit_shift", 0.0), at("system", "qubit_shift")),
            batch2_scale=_number(sysd.get("batch2_scale", 1.0), at("system", "batch2_scale")),
        )
    except ParseError:
        raise
    except (ConfigError, ValueError) as exc:
        raise ParseError(str(exc), _line_of(text, "system") or _line_of(text, "waveforms")) from None

    proto = data.get("protocol", {})
    eta = proto.get("eta", 0.0)
    if isinstance(eta, str):
        if eta not in ("auto", "calibrated"):
            raise ParseError(f"eta must be a number, 'auto' or 'calibrated', got {eta!r}", at("protocol", "eta"))
    else:
        eta = _number(eta, at("protocol", "eta"))
    compensate = proto.get("compensate", False)
    if not isinstance(compensate, bool):
        raise ParseError("compensate must be true or false", at("protocol", "compensate"))

    integ = data.get("integrator", {})
    try:
        steps = integ.get("steps")
        settings = IntegratorSettings(
            method=integ.get("method", "dop853"),
            rtol=_number(integ.get("rtol", 1e-12), at("integrator", "rtol"), positive=True),
            atol=_number(integ.get("atol", 1e-14), at("integrator", "atol"), positive=True),
            max_step=_number(integ.get("max_step", tau / 100), at("integrator", "max_step"), positive=True),
            steps=None if steps is None else int(steps),
        )
        settings.check_tau(tau)
    except ParseError:
        raise
    except (ConfigError, ValueError) as exc:
        raise ParseError(str(exc), _line_of(text, "integrator")) from None

    ro = data.get("readout", {})
    try:
        readout = ReadoutModel(
            q_fp=_number(ro.get("q_fp", 0.0), at("readout", "q_fp")),
            q_fn=_number(ro.get("q_fn", 0.0), at("readout", "q_fn")),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc), _line_of(text, "readout")) from None

    out_dir = data.get("output", {}).get("dir", ".")
    return RunConfig(system, settings, eta, compensate, readout, str(out_dir))


def _num(x: float) -> str:
    if math.isinf(x):
        return '"inf"'
    return repr(float(x))


def _array(values) -> str:
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def format_config(rc: RunConfig) -> str:
    s = rc.system
    st = rc.settings
    lines = [
        "[waveforms]",
        f"tau = {_num(s.tau)}",
        f"buffer_rabi = {_array(s.buffer_pulse.rabi.coeffs)}",
        f"buffer_detuning = {_array(s.buffer_pulse.detuning.coeffs)}",
        f"qubit_rabi = {_array(s.qubit_pulse.rabi.coeffs)}",
        "qubit_detuning = [0.0]",
        f"ramp = {_num(s.ramp)}",
        "",
        "[system]",
        f'layout = "{s.layout}"',
        f"B0 = {_num(s.B0 / TWO_PI)}",
        f"B1 = {_num(s.B1 / TWO_PI)}",
        f'mode = "{s.mode}"',
        f"buffer_shift = {_num(s.buffer_shift / TWO_PI)}",
        f"qubit_shift = {_num(s.qubit_shift / TWO_PI)}",
        f"batch2_scale = {_num(s.batch2_scale)}",
        "",
        "[protocol]",
        f'eta = "{rc.eta}"' if isinstance(rc.eta, str) else f"eta = {_num(rc.eta)}",
        f"compensate = {'true' if rc.compensate else 'false'}",
        "",
        "[integrator]",
        f'method = "{st.method}"',
        f"rtol = {_num(st.rtol)}",
        f"atol = {_num(st.atol)}",
        f"max_step = {_num(st.max_step)}",
    ]
    if st.steps is not None:
        lines.append(f"steps = {int(st.steps)}")
    lines += [
        "",
        "[readout]",
        f"q_fp = {_num(rc.readout.q_fp)}",
        f"q_fn = {_num(rc.readout.q_fn)}",
        "",
    ]
    return "\n".join(lines)


def bundled(name: str) -> Path:
    """Path of a bundled config (``fig2``, ``fig4``)."""
    stem = name[:-5] if name.endswith(".toml") else name
    return Path(str(resources.files("heralded_cz") / "data" / f"{stem}.toml"))


def load_config(path_or_name: str | Path) -> RunConfig:
    p = Path(path_or_name)
    if not p.exists():
        candidate = bundled(p.name.split(".")[0])
        if not candidate.exists():
            raise ConfigError(f"no such config file: {path_or_name}")
        p = candidate
    return parse_config(p.read_text())


def canonical(rc: RunConfig) -> dict:
    """Plain-data view of everything that affects results (no output paths)."""
    s = rc.system
    return {
        "waveforms": {
            "tau": s.tau,
            "buffer_rabi": list(s.buffer_pulse.rabi.coeffs),
            "buffer_detuning": list(s.buffer_pulse.detuning.coeffs),
            "qubit_rabi": list(s.qubit_pulse.rabi.coeffs),
            "ramp": s.ramp,
        },
        "system": {
            "layout": s.layout,
            "B0": "inf" if math.isinf(s.B0) else s.B0,
            "B1": "inf" if math.isinf(s.B1) else s.B1,
            "mode": s.mode,
            "buffer_shift": s.buffer_shift,
            "qubit_shift": s.qubit_shift,
            "batch2_scale": s.batch2_scale,
        },
        "protocol": {"eta": rc.eta, "compensate": rc.compensate},
        "integrator": {
            "method": rc.settings.method,
            "rtol": rc.settings.rtol,
            "atol": rc.settings.atol,
            "max_step": rc.settings.max_step,
            "steps": rc.settings.steps,
        },
        "readout": {"q_fp": rc.readout.q_fp, "q_fn": rc.readout.q_fn},
    }


def config_hash(rc: RunConfig) -> str:
    blob = json.dumps(canonical(rc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def code_version() -> str:
    return __version__
