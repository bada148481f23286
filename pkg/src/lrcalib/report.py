"""Metrics containers and their JSON-ready layout."""
from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .config import ExperimentConfig, to_flat


def mean_std(values) -> dict:
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "std": std, "n": int(v.size)}


def _curve_stats(curves: list[dict], key: str) -> dict:
    if not curves or not curves[0].get("step"):
        return {"step": [], "mean": [], "std": []}
    steps = curves[0]["step"]
    cols = [mean_std([c[key][i] for c in curves]) for i in range(len(steps))]
    return {"step": list(steps), "mean": [c["mean"] for c in cols], "std": [c["std"] for c in cols]}


class MetricsReport:
    """Per-seed results of one configuration plus their aggregates."""

    def __init__(self, config: ExperimentConfig, results: list):
        self.config = config
        self.results = results

    def values(self, metric: str) -> list[float]:
        return [getattr(r.accuracy, metric) for r in self.results]

    def aggregate(self) -> dict:
        return {f"{m}_acc": mean_std(self.values(m)) for m in ("novel", "base", "overall")}

    def calibration_table(self) -> list[dict]:
        """Per novel class, distance to the similar base center
        without and with LRSamples, averaged over seeds."""
        by_class: dict[int, list] = {}
        for r in self.results:
            for rep in r.calibration:
                by_class.setdefault(rep.class_id, []).append(rep)
        rows = []
        for c in sorted(by_class):
            reps = by_class[c]
            rows.append({
                "class": c,
                "dist_without_lrsamples": mean_std(r.dist_to_similar_before for r in reps),
                "dist_with_lrsamples": mean_std(r.dist_to_similar_after for r in reps),
                "increased": sum(r.dist_to_similar_after > r.dist_to_similar_before for r in reps),
                "n": len(reps),
            })
        return rows

    def to_dict(self, curves: bool = True) -> dict:
        per_seed = []
        for r in self.results:
            entry = {
                "seed": r.seed,
                "accuracy": asdict(r.accuracy),
                "calibration": [rep.row() for rep in r.calibration],
                "weight_stats": r.weight_stats,
            }
            if curves:
                entry["curves"] = r.curves
                entry["base_curves"] = r.base_curves
            if r.importance_rows:
                entry["importance"] = r.importance_rows
            per_seed.append(entry)
        out = {
            "modules": {"ccva": self.config.ccva.enabled, "fdbo": self.config.fdbo.enabled},
            "k_shot": self.config.train.k_shot,
            "per_seed": per_seed,
            "aggregate": self.aggregate(),
            "calibration_table": self.calibration_table(),
        }
        if curves:
            out["loss_curve"] = _curve_stats([r.curves for r in self.results], "total")
        return out


class AblationReport:
    """Results of a grid of configurations run on shared seeds."""

    def __init__(self, config: ExperimentConfig, axes, cells, reports):
        self.config = config
        self.axes = [(a, list(v)) for a, v in axes]
        self.cells = cells
        self.reports = reports

    @staticmethod
    def label(cell: dict) -> str:
        return " ".join(f"{k}={v}" for k, v in cell.items() if k != "shots") or "default"

    def table(self) -> list[dict]:
        """One row per cell, keyed by (shot, cell label)."""
        rows = []
        for cell, rep in zip(self.cells, self.reports):
            rows.append({"shot": rep.config.train.k_shot, "cell": self.label(cell), "params": dict(cell),
                         **rep.aggregate()})
        return rows

    def axis_tables(self) -> dict:
        """Per swept axis: rows ``(value, shot)`` pooling seeds over the other axes."""
        tables = {}
        for axis, values in self.axes:
            if axis == "shots":
                continue
            rows = []
            shots = sorted({rep.config.train.k_shot for rep in self.reports})
            for value in values:
                for shot in shots:
                    reps = [rep for cell, rep in zip(self.cells, self.reports)
                            if str(cell.get(axis)) == str(value) and rep.config.train.k_shot == shot]
                    if not reps:
                        continue
                    row = {"value": value, "shot": shot, "cells": len(reps)}
                    for m in ("novel", "base", "overall"):
                        row[f"{m}_acc"] = mean_std([x for rep in reps for x in rep.values(m)])
                    rows.append(row)
            tables[axis] = rows
        if not tables:
            shots = [a for a in self.axes if a[0] == "shots"]
            if shots:
                tables["shots"] = [
                    {"value": str(rep.config.train.k_shot), "shot": rep.config.train.k_shot, "cells": 1,
                     **{f"{m}_acc": mean_std(rep.values(m)) for m in ("novel", "base", "overall")}}
                    for rep in self.reports]
        return tables

    def to_dict(self) -> dict:
        return {
            "axes": [{"axis": a, "values": v} for a, v in self.axes],
            "cells": [
                {"cell": dict(cell), "config": to_flat(rep.config) | {"run.seeds": list(rep.config.run.seeds)},
                 "result": rep.to_dict(curves=False)}
                for cell, rep in zip(self.cells, self.reports)
            ],
            "table": self.table(),
            "axis_tables": self.axis_tables(),
        }
