"""Run report (canonical JSON) and flat CSV views for plotting tools.

Every float is rounded to 12 significant digits before serialization and keys
are sorted, so identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "RunReport",
    "canonical",
    "dumps",
    "emit_report",
    "load_report",
    "file_sha256",
    "emit_curve_csv",
    "emit_grid_csv",
    "emit_table_csv",
    "emit_sensitivity_csv",
    "emit_metrics_csv",
    "emit_history_csv",
    "TABLE_COLUMNS",
]

SCHEMA_VERSION = "1.0"
TABLE_COLUMNS = ["Dataset", "Model", "CleanAcc", "RI_FGSM", "RI_PGD", "DeltaRI"]
SECTIONS = ("provenance", "curves", "metrics", "sensitivity", "drift", "ablation")


def _fmt(v: float) -> str:
    return format(v, ".12g")


def canonical(obj):
    """Plain-JSON copy of ``obj`` with floats rounded to 12 significant digits."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite value {obj!r} cannot be reported")
        return float(_fmt(float(obj)))
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class RunReport:
    provenance: dict = field(default_factory=dict)
    curves: list = field(default_factory=list)
    metrics: list | None = None
    sensitivity: dict | None = None
    drift: dict | None = None
    ablation: dict | None = None
    extra: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        d = {"schema_version": self.schema_version}
        for name in SECTIONS:
            d[name] = getattr(self, name)  # skipped stages stay as explicit nulls
        d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        version = str(d.get("schema_version", ""))
        if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
            raise ValueError(f"unsupported report schema version {version!r}")
        return cls(**{k: d.get(k) for k in SECTIONS}, extra=d.get("extra") or {}, schema_version=version)


def dumps(report: RunReport) -> str:
    return json.dumps(canonical(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit_report(report: RunReport, path) -> Path:
    path = Path(path)
    path.write_text(dumps(report), encoding="utf-8")
    return path


def load_report(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else _fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def emit_curve_csv(curve, path) -> Path:
    """``epsilon,accuracy`` rows."""
    return _write_rows(path, ["epsilon", "accuracy"], zip(map(float, curve.epsilons), map(float, curve.accuracies)))


def emit_grid_csv(drift, path, top_only: bool = True) -> Path:
    """Heatmap layout: one row per epsilon, one column per (top-k) feature."""
    cols = list(drift.top_k) if top_only else list(range(len(drift.feature_names)))
    header = ["epsilon"] + [drift.feature_names[j] for j in cols]
    rows = ([float(e)] + [float(drift.grid[i, j]) for j in cols] for i, e in enumerate(drift.epsilons))
    return _write_rows(path, header, rows)


def emit_table_csv(record, path) -> Path:
    rows = [[r.dataset, r.model, r.clean_acc, r.ri_fgsm, r.ri_pgd, r.delta_ri] for r in record.rows]
    return _write_rows(path, TABLE_COLUMNS, rows)


def emit_sensitivity_csv(sensitivity, delta_phi, path) -> Path:
    """``feature,S_i,delta_phi``; ``delta_phi`` may be None when drift was skipped."""
    rows = []
    for j, name in enumerate(sensitivity.feature_names):
        rows.append([name, float(sensitivity.s[j]), None if delta_phi is None else float(delta_phi[j])])
    return _write_rows(path, ["feature", "S_i", "delta_phi"], rows)


def emit_metrics_csv(metrics: list[dict], path) -> Path:
    """Long-format ``metric,value,epsilon,attack`` rows."""
    rows = [[m["metric"], float(m["value"]), float(m["epsilon"]), m["attack"]] for m in metrics]
    return _write_rows(path, ["metric", "value", "epsilon", "attack"], rows)


def emit_history_csv(history, path) -> Path:
    rows = [[i + 1, float(l), float(a)] for i, (l, a) in enumerate(zip(history.loss, history.accuracy))]
    return _write_rows(path, ["epoch", "loss", "accuracy"], rows)
