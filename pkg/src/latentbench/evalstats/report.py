"""Benchmark cell records, statistical reports and summary tables."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidInput, MalformedFile
from .anova import anova_oneway, tukey_hsd


@dataclass
class BenchCell:
    method: str
    latent_dim: int
    resolution: str
    test_rmse: float = None
    per_target: list = field(default_factory=list)
    wall_time_s: float = 0.0
    seed: int = 0
    status: str = "ok"
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.test_rmse is not None and self.test_rmse < 0:
            raise InvalidInput("test_rmse must be >= 0")
        for entry in self.per_target:
            if entry.get("r2") is not None and entry["r2"] > 1.0 + 1e-12:
                raise InvalidInput(f"R^2 above 1 for target {entry['name']}")

    @property
    def key(self):
        return f"{self.method}_d{self.latent_dim}_{self.resolution}"

    def mean_r2(self):
        vals = [t["r2"] for t in self.per_target if t.get("r2") is not None]
        return float(np.mean(vals)) if vals else None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise MalformedFile(f"not a bench cell record: {exc}") from exc


@dataclass
class StatsReport:
    groups: list
    f_stat: float
    p_value: float
    pairwise: list
    metric: str = "rmse"
    group_sizes: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["pairwise"] = [dict(zip(("group_a", "group_b", "mean_diff", "q_stat", "p_adj"), row))
                         for row in self.pairwise]
        return d

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group_a", "group_b", "mean_diff", "q_stat", "p_adj", "f_stat", "anova_p", "metric"])
        for a, b, diff, q, p in self.pairwise:
            w.writerow([a, b, repr(diff), repr(q), repr(p), repr(self.f_stat), repr(self.p_value), self.metric])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def compare_groups(groups, metric="rmse"):
    """ANOVA plus Tukey-Kramer over ``{label: values}``."""
    labels = list(groups)
    values = [groups[k] for k in labels]
    if len(labels) < 2:
        raise InvalidInput(f"need >= 2 groups, got {len(labels)}")
    short = [k for k in labels if len(groups[k]) < 2]
    if short:
        raise InvalidInput(f"need >= 2 observations per group; too few in {short}")
    f, p = anova_oneway(values)
    return StatsReport(labels, f, p, tukey_hsd(values, labels), metric, [len(v) for v in values])


def cell_observations(cells, metric="rmse", grouping="method"):
    """Observations per group: one test RMSE per cell, or one R^2 per (cell, target)."""
    if grouping != "method":
        raise InvalidInput(f"unsupported grouping {grouping!r}")
    out = {}
    for c in cells:
        if metric == "rmse":
            vals = [c.test_rmse] if c.test_rmse is not None else []
        elif metric == "r2":
            vals = [t["r2"] for t in c.per_target if t.get("r2") is not None]
        else:
            raise InvalidInput(f"unknown metric {metric!r}")
        if vals:
            out.setdefault(c.method, []).extend(vals)
    return out


def _mean_sd(vals):
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return mean, sd


def log2_slope(dims, values):
    """Least-squares slope of ``values`` against ``log2(dims)``."""
    x = np.log2(np.asarray(dims, dtype=np.float64))
    y = np.asarray(values, dtype=np.float64)
    if len(x) < 2 or np.ptp(x) == 0:
        return None
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


AGGREGATE_FIELDS = ("method", "n_cells", "rmse_mean", "rmse_sd", "r2_mean", "r2_sd", "rmse_log2dim_slope")


def aggregate(cells):
    """One summary row per method, in order of first appearance."""
    if not cells:
        raise InvalidInput("no cells to aggregate")
    order = []
    by_method = {}
    for c in cells:
        if c.method not in by_method:
            order.append(c.method)
        by_method.setdefault(c.method, []).append(c)
    rows = []
    for m in order:
        group = by_method[m]
        scored = [c for c in group if c.test_rmse is not None]
        rm, rs = _mean_sd([c.test_rmse for c in scored])
        r2s = [c.mean_r2() for c in group if c.mean_r2() is not None]
        qm, qs = _mean_sd(r2s)
        slope = log2_slope([c.latent_dim for c in scored], [c.test_rmse for c in scored]) if scored else None
        rows.append(dict(zip(AGGREGATE_FIELDS, (m, len(group), rm, rs, qm, qs, slope))))
    return rows


def aggregate_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_FIELDS)
    for r in rows:
        w.writerow(["" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k])
                    for k in AGGREGATE_FIELDS])
    return buf.getvalue()
