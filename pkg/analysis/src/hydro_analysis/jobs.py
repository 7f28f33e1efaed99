"""Plot job description and manifest-backed CSV loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIGURE_KINDS = ("profiles", "work", "equipartition", "bounds")
FORMATS = ("png", "svg", "pdf")


class SchemaError(RuntimeError):
    """A CSV no longer matches the schema recorded in the manifest."""


@dataclass
class PlotJob:
    input_dir: Path
    figures: list[str] = field(default_factory=list)
    format: str = "png"
    output_dir: Path | None = None

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        if self.output_dir is None:
            self.output_dir = self.input_dir
        self.output_dir = Path(self.output_dir)
        for fig in self.figures:
            if fig not in FIGURE_KINDS:
                raise ValueError(f"unknown figure kind {fig!r}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}")

    def manifest(self) -> dict:
        path = self.input_dir / "manifest.json"
        if not path.exists():
            raise SchemaError(f"no manifest.json in {self.input_dir}")
        return json.loads(path.read_text())


def load_csv(job: PlotJob, name: str) -> dict[str, np.ndarray]:
    """Read one CSV as named columns, verifying the header on the way.

    String-valued columns (e.g. the long-format ``field`` tag) come back as
    object arrays; everything else as float.
    """
    manifest = job.manifest()
    schema = manifest.get("schema", {})
    if name not in schema:
        raise SchemaError(f"{name} is not listed in the manifest schema")
    path = job.input_dir / name
    if not path.exists():
        raise SchemaError(f"{name} listed in manifest but missing on disk")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    if header != schema[name]:
        raise SchemaError(
            f"{name}: header {header} does not match manifest {schema[name]}")
    raw = [line.split(",") for line in lines[1:]]
    cols: dict[str, np.ndarray] = {}
    for i, col in enumerate(header):
        values = [row[i] for row in raw]
        try:
            cols[col] = np.array([float(v) for v in values])
        except ValueError:
            cols[col] = np.array(values, dtype=object)
    return cols
