"""JSON serialization: complex numbers as [re, im], 12 significant digits."""

from __future__ import annotations

import json
import math

import numpy as np

from .gate import HeraldResult

HERALD_KEYS = ("m0", "m1", "Mh", "Eh", "eta", "p_herald", "F_raw", "F_herald", "conjugacy_residual")


def _round(x: float):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_round(obj.real), _round(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def herald_report(h: HeraldResult, **extra) -> dict:
    out = {k: getattr(h, k) for k in HERALD_KEYS}
    out["m0"] = np.asarray(h.m0, dtype=complex)
    out["m1"] = np.asarray(h.m1, dtype=complex)
    out["Mh"] = np.asarray(h.Mh, dtype=complex)
    out["Eh"] = np.asarray(h.Eh, dtype=complex)
    if h.compensation is not None:
        out["compensation"] = {"phi_g": h.compensation[0], "phi_1": h.compensation[1], "phi_2": h.compensation[2]}
    out.update(extra)
    return out


def decode_complex(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs])
