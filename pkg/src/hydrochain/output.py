"""Deterministic CSV and manifest emission for experiment runs.

CSV bodies contain no timestamps and all floats are written with repr
round-trip formatting, so identical spec+seed reruns are byte-identical.
Every output directory gets a ``manifest.json`` with the config hash, seed,
schema (column names per file), package version, and the produced file list;
the generation timestamp lives only in the manifest and is excluded from the
hash.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import __version__


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, columns: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def config_hash(spec: dict) -> str:
    canon = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(out_dir: Path, spec: dict, files: dict[str, list[str]],
                   extra: dict | None = None) -> None:
    """``files`` maps produced filename -> its column list ([] for JSON)."""
    doc = {
        "config_hash": config_hash(spec),
        "seed": spec.get("sim", {}).get("seed"),
        "version": __version__,
        "gaussian_sampler": "numpy Philox counter-based streams, "
                            "standard_normal (ziggurat)",
        "files": sorted(files),
        "schema": {name: cols for name, cols in sorted(files.items())},
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if extra:
        doc.update(extra)
    write_json(Path(out_dir) / "manifest.json", doc)


def write_json(path: Path, doc: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
