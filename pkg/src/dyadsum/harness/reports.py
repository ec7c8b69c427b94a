"""Experiment reports: deterministic JSON plus CSV tables.

Wall-clock runtime is kept out of the report file (it would break
byte-identical regeneration) and written to a separate timing file.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, complex):
        return [clean(x.real), clean(x.imag)]
    return x


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=1) + "\n"


def stable(a: float, b: float, factor: float = 2.0) -> bool:
    """a and b within the given factor of each other (both zero counts as stable)."""
    if a == b:
        return True
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0 or b <= 0:
        return False
    return max(a, b) / min(a, b) < factor


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    trials: list  # one dict per trial, merged by trial index
    constants: dict  # measured constants (sups of normalized ratios)
    checks: dict = field(default_factory=dict)  # named pass/fail outcomes
    stable: bool | None = None  # refinement-stability flag, None if not run
    tables: dict = field(default_factory=dict)  # name -> list of row dicts, written as CSV
    runtime: float = 0.0

    @property
    def ok(self) -> bool:
        return all(bool(v) for v in self.checks.values())

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "trials": self.trials,
            "constants": self.constants,
            "checks": self.checks,
            "ok": self.ok,
            "stable": self.stable,
        }

    def dumps(self) -> str:
        return dumps(self.to_json())

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.experiment}.json"]
        paths[0].write_text(self.dumps())
        for name, rows in sorted(self.tables.items()):
            p = out / f"{self.experiment}_{name}.csv"
            p.write_text(csv_text(rows))
            paths.append(p)
        (out / f"{self.experiment}.timing.json").write_text(json.dumps({"runtime_s": self.runtime}) + "\n")
        return paths


def csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0].keys())
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in cols})
    return buf.getvalue()


def _cell(v):
    v = clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v
