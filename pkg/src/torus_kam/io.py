"""File formats: spectral JSON, run configuration, certificates and CSV tables.

Spectral files store only the nonzero coefficients::

    {"kind": "scalar", "n": 2, "K": 4, "entries": [{"k": [1, -1], "re": 0.5, "im": 0.0}, ...]}

Vector fields use ``"kind": "vector"`` with one entry list per component under
``"components"``; maps (``"kind": "map"``) store their displacement the same way.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .fourier import SpectralScalar, SpectralVectorField, TorusMap

__all__ = [
    "CONFIG_SCHEMA",
    "SPECTRAL_SCHEMA",
    "to_jsonable",
    "dumps",
    "write_json",
    "read_json",
    "spectral_to_dict",
    "spectral_from_dict",
    "save_spectral",
    "load_spectral",
    "load_config",
    "validate_config",
    "write_csv",
]

_ENTRY = {
    "type": "object",
    "required": ["k", "re"],
    "properties": {
        "k": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "re": {"type": "number"},
        "im": {"type": "number"},
    },
    "additionalProperties": False,
}

SPECTRAL_SCHEMA = {
    "type": "object",
    "required": ["kind", "n", "K"],
    "properties": {
        "kind": {"enum": ["scalar", "vector", "map"]},
        "n": {"type": "integer", "minimum": 1},
        "K": {"type": "integer", "minimum": 0},
        "entries": {"type": "array", "items": _ENTRY},
        "components": {"type": "array", "items": {"type": "array", "items": _ENTRY}},
    },
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 0}
_OMEGA = {"oneOf": [{"type": "string"}, {"type": "array", "items": _NUM, "minItems": 1}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "strict": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
        "omega": _OMEGA,
        "input": {"type": "string"},
        "constants": {
            "type": "object", "additionalProperties": False,
            "properties": {"a": _NUM, "kappa": _NUM, "r": _NUM, "tau": _NUM},
        },
        "classify": {
            "type": "object", "additionalProperties": False,
            "properties": {"alpha": {"type": ["string", "number"]}, "a": _NUM, "terms": _INT, "K": _INT,
                           "tau": _NUM, "builder": {"enum": ["power2", "self_power", "stretched"]},
                           "beta": _NUM, "horizon": _INT},
        },
        "cohomology": {
            "type": "object", "additionalProperties": False,
            "properties": {"r": _NUM, "tau": _NUM, "a": _NUM, "K": _INT,
                           "liouville_cutoffs": {"type": "array", "items": _INT}},
        },
        "smoothing": {
            "type": "object", "additionalProperties": False,
            "properties": {"r0": _NUM, "r": _NUM, "a": _NUM, "u0": _POS, "J": _INT,
                           "K_max": {"type": ["integer", "null"], "minimum": 1}},
        },
        "generator": {
            "type": "object", "additionalProperties": False,
            "properties": {"kind": {"enum": ["gevrey_random", "single_mode", "zero"]}, "n": _INT, "K": _INT,
                           "a": _NUM, "r0": _NUM, "epsilon": _NUM,
                           "k": {"type": "array", "items": {"type": "integer"}}},
        },
        "kam": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "a": _NUM, "r0": _NUM, "r": _NUM, "tau": _NUM, "tau0": _NUM, "kappa": _NUM,
                "K_max": _INT, "oversample": _NUM, "tol_residual": _POS, "max_inner": _INT,
                "max_outer": _INT, "C2": _POS, "C4": _POS, "strict": {"type": "boolean"},
                "envelope_slack": _NUM, "u0": {"type": ["number", "null"]}, "grid_N": _INT,
                "calibrate": {"type": "boolean"},
            },
        },
        "analytic": {
            "type": "object", "additionalProperties": False,
            "properties": {"s": _POS, "sigma": _POS},
        },
    },
}


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, complex):
            return {"re": o.real, "im": o.imag}
        if hasattr(o, "to_dict"):
            return o.to_dict()
        return str(o)


def to_jsonable(x):
    """Replace non-finite floats by strings (``inf``) or ``None`` (``nan``), recursively."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if hasattr(x, "to_dict"):
        return to_jsonable(x.to_dict())
    return x


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, strict floats)."""
    return json.dumps(to_jsonable(obj), cls=_Encoder, sort_keys=True, indent=2, allow_nan=False)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --- spectra -----------------------------------------------------------------

def _entries(c: np.ndarray, n: int, K: int) -> list:
    out = []
    for idx in np.argwhere(c != 0):
        v = complex(c[tuple(idx)])
        out.append({"k": [int(i) - K for i in idx], "re": v.real, "im": v.imag})
    return out


def _fill(entries: list, n: int, K: int) -> np.ndarray:
    c = np.zeros((2 * K + 1,) * n, dtype=complex)
    for e in entries:
        k = e["k"]
        if len(k) != n or max(abs(x) for x in k) > K:
            raise ValueError(f"mode {k} does not fit n={n}, K={K}")
        c[tuple(x + K for x in k)] = complex(e["re"], e.get("im", 0.0))
    return c


def spectral_to_dict(obj) -> dict:
    """Serialise a :class:`SpectralScalar`, :class:`SpectralVectorField` or :class:`TorusMap`."""
    if isinstance(obj, TorusMap):
        d = spectral_to_dict(obj.displacement)
        d["kind"] = "map"
        return d
    if isinstance(obj, SpectralVectorField):
        return {"kind": "vector", "n": obj.n, "K": obj.K,
                "components": [_entries(obj.coeffs[i], obj.n, obj.K) for i in range(obj.n)]}
    if isinstance(obj, SpectralScalar):
        return {"kind": "scalar", "n": obj.n, "K": obj.K, "entries": _entries(obj.coeffs, obj.n, obj.K)}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def spectral_from_dict(d: dict):
    """Inverse of :func:`spectral_to_dict`; the payload is schema-checked first."""
    jsonschema.validate(d, SPECTRAL_SCHEMA)
    n, K, kind = d["n"], d["K"], d["kind"]
    if kind == "scalar":
        if "entries" not in d:
            raise ValueError("scalar spectrum needs 'entries'")
        return SpectralScalar(_fill(d["entries"], n, K), n)
    comps = d.get("components")
    if comps is None or len(comps) != n:
        raise ValueError(f"{kind} spectrum needs {n} component lists")
    F = SpectralVectorField(np.stack([_fill(c, n, K) for c in comps]), n)
    return TorusMap(F) if kind == "map" else F


def save_spectral(path, obj) -> Path:
    return write_json(path, spectral_to_dict(obj))


def load_spectral(path):
    return spectral_from_dict(read_json(path))


# --- configuration -----------------------------------------------------------

def validate_config(cfg: dict) -> dict:
    """Schema-check a run configuration; raises ``ValueError`` with the offending path."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"config {where}: {exc.message}") from None
    return cfg


def load_config(path) -> dict:
    try:
        cfg = read_json(path)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path}: {exc}") from None
    return validate_config(cfg)


# --- tables ------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(to_jsonable(v), sort_keys=True)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows: list, columns: list | None = None) -> Path:
    """Write dict rows; nested values become JSON cells, floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(c for c in r if c not in columns)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _cell(r.get(c, "")) for c in columns})
    return path
