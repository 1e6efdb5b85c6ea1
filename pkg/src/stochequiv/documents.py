"""JSON documents for systems, relations, input sequences and box lists.

Every document carries ``"schema_version": "1"``. Matrices are nested
row-major lists; floats are written with Python's shortest round-trip repr,
so save followed by load reproduces the arrays bit for bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, List, Tuple

import numpy as np

from .montecarlo import BoxSet
from .relations import LinearRelation
from .sysmodel import InputSequence, StochasticLinearSystem

__all__ = [
    "SCHEMA_VERSION",
    "DocumentError",
    "read_document",
    "write_document",
    "system_to_dict",
    "system_from_dict",
    "relation_to_dict",
    "relation_from_dict",
    "load_system",
    "save_system",
    "load_relation",
    "save_relation",
    "load_matrix",
    "load_inputs",
    "load_boxes",
]

SCHEMA_VERSION = "1"


class DocumentError(ValueError):
    """A document failed to parse or validate."""


def read_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DocumentError(f"{path}: schema_version must be {SCHEMA_VERSION!r}, got {version!r}")
    return doc


def _dumps(obj, indent: int = 0) -> str:
    # objects and lists of lists are indented; flat lists (matrix rows) stay on one line
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, list) and obj and any(isinstance(v, (list, dict)) for v in obj):
        items = [pad + _dumps(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    return json.dumps(obj)


def write_document(doc: dict, path) -> None:
    out = {"schema_version": SCHEMA_VERSION}
    out.update(doc)
    Path(path).write_text(_dumps(out) + "\n", encoding="utf-8")


def _tolist(M) -> Any:
    return np.asarray(M, dtype=float).tolist()


def _matrix(doc: dict, key: str, rows: int | None, cols: int | None, where: str) -> np.ndarray:
    if key not in doc:
        raise DocumentError(f"{where}: missing field {key!r}")
    raw = doc[key]
    if not isinstance(raw, list) or any(not isinstance(r, list) for r in raw):
        raise DocumentError(f"{where}: field {key!r} must be a list of rows")
    lengths = {len(r) for r in raw}
    if len(lengths) > 1:
        raise DocumentError(f"{where}: field {key!r} has rows of unequal length")
    ncols = lengths.pop() if lengths else (cols or 0)
    try:
        M = np.array(raw, dtype=float).reshape(len(raw), ncols)
    except (TypeError, ValueError) as exc:
        raise DocumentError(f"{where}: field {key!r} contains non-numeric entries") from exc
    if not np.all(np.isfinite(M)):
        raise DocumentError(f"{where}: field {key!r} contains non-finite entries")
    if (rows is not None and M.shape[0] != rows) or (cols is not None and M.shape[1] != cols):
        raise DocumentError(f"{where}: field {key!r} has shape {M.shape}, expected ({rows}, {cols})")
    return M


def _count(doc: dict, key: str, where: str) -> int:
    v = doc.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise DocumentError(f"{where}: field {key!r} must be a non-negative integer")
    return v


def system_to_dict(sys: StochasticLinearSystem) -> dict:
    doc = {
        "n": sys.n, "m": sys.m, "l": sys.l, "p": sys.p,
        "A": _tolist(sys.A), "B": _tolist(sys.B), "C": _tolist(sys.C), "G": _tolist(sys.G),
        "mu": _tolist(sys.mu), "Psi": _tolist(sys.Psi),
    }
    if sys.name:
        doc["name"] = sys.name
    return doc


def system_from_dict(doc: dict, where: str = "system") -> StochasticLinearSystem:
    n, m, l, p = (_count(doc, k, where) for k in ("n", "m", "l", "p"))
    A = _matrix(doc, "A", n, n, where)
    B = _matrix(doc, "B", n, m, where)
    C = _matrix(doc, "C", p, n, where)
    G = _matrix(doc, "G", n, l, where)
    mu = np.zeros(l)
    if doc.get("mu") is not None:
        mu = np.asarray(doc["mu"], dtype=float).reshape(-1)
        if mu.size != l:
            raise DocumentError(f"{where}: field 'mu' has length {mu.size}, expected {l}")
    Psi = _matrix(doc, "Psi", p, p, where) if doc.get("Psi") is not None else np.zeros((p, p))
    if "W" in doc and doc["W"] is not None:
        W = _matrix(doc, "W", l, l, where)
        if not np.array_equal(W, np.eye(l)):
            raise DocumentError(f"{where}: disturbance covariance 'W' must be the identity; fold it into G")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise DocumentError(f"{where}: field 'name' must be a string")
    try:
        return StochasticLinearSystem(A=A, B=B, C=C, G=G, mu=mu, Psi=Psi, name=name)
    except ValueError as exc:
        raise DocumentError(f"{where}: {exc}") from exc


def relation_to_dict(rel: LinearRelation, name: str | None = None) -> dict:
    doc = {"n1": rel.n1, "n2": rel.n2, "R1": _tolist(rel.R1), "R2": _tolist(rel.R2)}
    if name:
        doc["name"] = name
    return doc


def relation_from_dict(doc: dict, where: str = "relation") -> LinearRelation:
    n1 = _count(doc, "n1", where) if "n1" in doc else None
    n2 = _count(doc, "n2", where) if "n2" in doc else None
    R1 = _matrix(doc, "R1", None, n1, where)
    R2 = _matrix(doc, "R2", R1.shape[0], n2, where)
    return LinearRelation(R1, R2)


def load_system(path) -> StochasticLinearSystem:
    return system_from_dict(read_document(path), str(path))


def save_system(sys: StochasticLinearSystem, path) -> None:
    write_document(system_to_dict(sys), path)


def load_relation(path) -> LinearRelation:
    return relation_from_dict(read_document(path), str(path))


def save_relation(rel: LinearRelation, path, name: str | None = None) -> None:
    write_document(relation_to_dict(rel, name), path)


def load_matrix(path, key: str = "T") -> np.ndarray:
    return _matrix(read_document(path), key, None, None, str(path))


def load_inputs(path) -> InputSequence:
    doc = read_document(path)
    return InputSequence(_matrix(doc, "u", None, None, str(path)))


def _bound(v, default: float, where: str) -> float:
    if v is None:
        return default
    if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
        raise DocumentError(f"{where}: box bounds must be numbers or null")
    return float(v)


def load_boxes(path) -> List[Tuple[int, str, BoxSet]]:
    """Boxes as ``(t, condition, BoxSet)``; ``null`` bounds are infinite."""
    doc = read_document(path)
    where = str(path)
    items = doc.get("boxes")
    if not isinstance(items, list):
        raise DocumentError(f"{where}: field 'boxes' must be a list")
    out = []
    for i, item in enumerate(items):
        w = f"{where}: boxes[{i}]"
        if not isinstance(item, dict):
            raise DocumentError(f"{w}: must be an object")
        t = _count(item, "t", w)
        cond = item.get("condition", "i")
        if cond not in ("i", "ii"):
            raise DocumentError(f"{w}: condition must be 'i' or 'ii'")
        lo, hi = item.get("lower"), item.get("upper")
        if not isinstance(lo, list) or not isinstance(hi, list) or len(lo) != len(hi):
            raise DocumentError(f"{w}: 'lower' and 'upper' must be lists of equal length")
        lower = [_bound(v, -np.inf, w) for v in lo]
        upper = [_bound(v, np.inf, w) for v in hi]
        try:
            out.append((t, cond, BoxSet(lower, upper)))
        except ValueError as exc:
            raise DocumentError(f"{w}: {exc}") from exc
    return out
