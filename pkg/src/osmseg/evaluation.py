"""Per-building fit metrics, aggregates and report serialization."""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

from .errors import EmptyInput
from .geometry import PlanarPolygon, centroid_distance, polygon_iou


@dataclass(frozen=True)
class BuildingMetrics:
    name: str
    iou: float
    centroid_dist: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.iou <= 1.0:
            raise ValueError(f"{self.name!r}: iou {self.iou} outside [0, 1]")
        if self.centroid_dist is not None and self.centroid_dist < 0:
            raise ValueError(f"{self.name!r}: negative centroid distance")


@dataclass(frozen=True)
class ReportConfig:
    radius: Optional[float] = None
    step: Optional[float] = None
    cell_size: Optional[float] = None
    min_points: Optional[int] = None


@dataclass(frozen=True)
class EvaluationReport:
    buildings: tuple[BuildingMetrics, ...]
    mean_iou: float
    median_iou: float
    mean_dist: Optional[float]
    median_dist: Optional[float]
    config: ReportConfig = field(default_factory=ReportConfig)


def evaluate_building(candidate: PlanarPolygon, truth: PlanarPolygon) -> BuildingMetrics:
    return BuildingMetrics(truth.name, polygon_iou(candidate, truth), centroid_distance(candidate, truth))


def aggregate(metrics: Sequence[BuildingMetrics], config: ReportConfig = ReportConfig()) -> EvaluationReport:
    """Mean and median of IoU and centroid distance.

    Even-length medians take the midpoint of the two central values.
    Distance aggregates are None when no building carries a distance.
    """
    if not metrics:
        raise EmptyInput("cannot aggregate an empty metrics list")
    ious = [m.iou for m in metrics]
    dists = [m.centroid_dist for m in metrics if m.centroid_dist is not None]
    return EvaluationReport(
        buildings=tuple(metrics),
        mean_iou=statistics.fmean(ious),
        median_iou=statistics.median(ious),
        mean_dist=statistics.fmean(dists) if dists else None,
        median_dist=statistics.median(dists) if dists else None,
        config=config,
    )


def _num(v):
    return "" if v is None else repr(v)


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def render_report(report: EvaluationReport, format: str = "json") -> bytes:
    """Serialize losslessly; floats keep full precision.

    CSV layout: ``#config,<key>,<value>`` lines, a ``name,iou,centroid_dist``
    header, one row per building, then ``#MEAN`` and ``#MEDIAN`` lines. The
    ``#`` lines are comments to plain CSV readers.
    """
    if format == "json":
        doc = {
            "config": asdict(report.config),
            "buildings": [asdict(m) for m in report.buildings],
            "mean_iou": report.mean_iou,
            "median_iou": report.median_iou,
            "mean_dist": report.mean_dist,
            "median_dist": report.median_dist,
        }
        return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
    if format == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        for key, value in asdict(report.config).items():
            w.writerow(["#config", key, _num(value)])
        w.writerow(["name", "iou", "centroid_dist"])
        for m in report.buildings:
            w.writerow([m.name, repr(m.iou), _num(m.centroid_dist)])
        w.writerow(["#MEAN", repr(report.mean_iou), _num(report.mean_dist)])
        w.writerow(["#MEDIAN", repr(report.median_iou), _num(report.median_dist)])
        return out.getvalue().encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def parse_report(data: Union[bytes, str], format: str = "json") -> EvaluationReport:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if format == "json":
        doc = json.loads(text)
        return EvaluationReport(
            buildings=tuple(BuildingMetrics(**b) for b in doc["buildings"]),
            mean_iou=doc["mean_iou"],
            median_iou=doc["median_iou"],
            mean_dist=doc["mean_dist"],
            median_dist=doc["median_dist"],
            config=ReportConfig(**doc["config"]),
        )
    if format == "csv":
        cfg: dict = {}
        rows = []
        agg = {}
        for row in csv.reader(io.StringIO(text)):
            if not row:
                continue
            if row[0] == "#config":
                val = _opt_float(row[2])
                cfg[row[1]] = int(val) if row[1] == "min_points" and val is not None else val
            elif row[0] in ("#MEAN", "#MEDIAN"):
                agg[row[0]] = (float(row[1]), _opt_float(row[2]))
            elif row[:3] == ["name", "iou", "centroid_dist"]:
                continue
            else:
                rows.append(BuildingMetrics(row[0], float(row[1]), _opt_float(row[2])))
        return EvaluationReport(
            buildings=tuple(rows),
            mean_iou=agg["#MEAN"][0],
            median_iou=agg["#MEDIAN"][0],
            mean_dist=agg["#MEAN"][1],
            median_dist=agg["#MEDIAN"][1],
            config=ReportConfig(**cfg),
        )
    raise ValueError(f"unknown report format {format!r}")


def read_metrics(data: Union[bytes, str], format: str = "csv") -> list[BuildingMetrics]:
    """Load precomputed per-building rows (name, iou[, centroid_dist])."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if format == "json":
        return [BuildingMetrics(d["name"], float(d["iou"]), d.get("centroid_dist")) for d in json.loads(text)]
    out = []
    for row in csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")):
        out.append(BuildingMetrics(row["name"], float(row["iou"]), _opt_float(row.get("centroid_dist") or "")))
    return out


def polygons_to_json(polygons: Sequence[PlanarPolygon]) -> list[dict]:
    return [{"name": p.name, "ring": p.ring.tolist()} for p in polygons]


def polygons_from_json(data: list[dict]) -> list[PlanarPolygon]:
    return [PlanarPolygon(d["name"], d["ring"]) for d in data]
