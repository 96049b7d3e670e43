"""Deterministic CSV/JSON writers shared by the command-line front end."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from typing import Any, Iterable, Sequence


def _plain(v: Any) -> Any:
    """Convert numpy scalars and arrays to builtin types; non-finite floats to strings."""
    if hasattr(v, "tolist"):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def canonical_json(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def _cell(v: Any) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], chash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def render_json(payload: dict, config: dict, chash: str) -> str:
    doc = {"config_hash": chash, "config": config, "result": payload}
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"
