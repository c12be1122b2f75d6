"""Pipeline stages and the end-to-end run.

Each stage turns inputs into a dict of ``filename -> bytes``. Subcommands
write one stage's artifacts; :func:`run_pipeline` computes every stage in
memory and writes only once all of them succeeded, so a failed run leaves
no partial output.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

from .adjust import AdjustmentResult, SearchConfig, adjust_footprint, search_window, segment_cloud
from .cloud import (
    GroundConfig,
    PointCloud3,
    build_occupancy,
    flatten,
    format_for_path,
    load_cloud,
    remove_ground,
    write_xyz,
)
from .errors import OsmSegError
from .evaluation import (
    ReportConfig,
    aggregate,
    evaluate_building,
    polygons_from_json,
    polygons_to_json,
    render_report,
)
from .geometry import PlanarPolygon
from .geoproject import project_footprint
from .osm_ingest import GeoFootprint, extract_footprints, footprints_to_json, parse_osm
from .registration import apply_affine, estimate_affine, read_control_points

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    osm: Optional[str] = None
    cloud: Optional[str] = None
    control_points: Optional[str] = None
    truth: Optional[str] = None
    out: str = "out"
    ground_mode: str = "local"
    ground_z: float = 0.0
    ground_cell: float = 5.0
    ground_height: float = 1.5
    ground_window: float = 30.0
    cell_size: float = 1.0
    min_points: int = 3
    radius: float = 12.0
    step: float = 0.8
    buildings: Optional[tuple[str, ...]] = None
    format: str = "json"
    threads: int = 1
    # Labeling band around adjusted footprints; None means the search's
    # positional resolution, step / sqrt(2) + cell_size.
    label_tolerance: Optional[float] = None
    registration: str = "affine"

    def __post_init__(self):
        if isinstance(self.buildings, str):
            self.buildings = tuple(n.strip() for n in self.buildings.split(",") if n.strip())
        elif self.buildings is not None:
            self.buildings = tuple(self.buildings)
        if self.format not in ("json", "csv"):
            raise ValueError(f"unknown report format {self.format!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.cell_size <= 0 or self.min_points < 1:
            raise ValueError("cell_size must be > 0 and min_points >= 1")
        self.ground_config()
        self.search_config()

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        norm = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(norm) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**norm)

    def ground_config(self) -> GroundConfig:
        return GroundConfig(self.ground_mode, self.ground_z, self.ground_cell, self.ground_height, self.ground_window)

    def search_config(self) -> SearchConfig:
        return SearchConfig(self.radius, self.step)

    def report_config(self) -> ReportConfig:
        return ReportConfig(self.radius, self.step, self.cell_size, self.min_points)

    @property
    def tolerance(self) -> float:
        if self.label_tolerance is None:
            return self.step / math.sqrt(2) + self.cell_size
        return self.label_tolerance

    def to_json(self) -> dict:
        d = asdict(self)
        d["buildings"] = None if self.buildings is None else list(self.buildings)
        return d


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")


def _unique_names(footprints: list[GeoFootprint]) -> list[GeoFootprint]:
    seen: dict[str, int] = {}
    for f in footprints:
        seen[f.name] = seen.get(f.name, 0) + 1
    return [
        f if seen[f.name] == 1 else GeoFootprint(f"{f.name} [way {f.way_id}]", f.ring, f.way_id)
        for f in footprints
    ]


def stage_parse(osm_xml: bytes, buildings: Optional[Sequence[str]] = None):
    """OSM XML -> geographic footprints."""
    doc = parse_osm(osm_xml)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        footprints = _unique_names(extract_footprints(doc, buildings, on_error="skip"))
    notes = [str(w.message) for w in caught]
    for n in notes:
        log.warning(n)
    summary = {
        "nodes": len(doc.nodes),
        "ways": len(doc.ways),
        "relations": len(doc.relations),
        "footprints": len(footprints),
        "warnings": notes,
    }
    return footprints, {"footprints.json": _json_bytes(footprints_to_json(footprints))}, summary


def stage_register(control_csv: bytes, footprints: Sequence[GeoFootprint], model: str = "affine"):
    """Control points -> global transform; footprints -> model-frame polygons."""
    pairs = read_control_points(control_csv)
    affine, residuals = estimate_affine(pairs, model=model)
    registered: list[PlanarPolygon] = []
    skipped = []
    for f in footprints:
        try:
            registered.append(apply_affine(affine, project_footprint(f)))
        except (OsmSegError, ValueError) as exc:
            log.warning("skipping %s at registration: %s", f.name, exc)
            skipped.append({"name": f.name, "stage": "register", "reason": str(exc)})
    transform = {"model": model, "pairs": len(pairs), **affine.to_json(), **residuals.to_json()}
    artifacts = {
        "transform.json": _json_bytes(transform),
        "registered.json": _json_bytes(polygons_to_json(registered)),
    }
    summary = {"pairs": len(pairs), "rms": residuals.rms, "skipped": skipped}
    return affine, registered, artifacts, summary


def _adjust_one(P: PlanarPolygon, pts2, cfg: PipelineConfig):
    search = cfg.search_config()
    try:
        grid = build_occupancy(pts2, cfg.cell_size, cfg.min_points, search_window(P, search, cfg.cell_size))
        return adjust_footprint(P, grid, search), None
    except OsmSegError as exc:
        return None, str(exc)


def stage_adjust(registered: Sequence[PlanarPolygon], cloud: PointCloud3, cfg: PipelineConfig):
    """Ground removal, rasterization, per-building search and labeling."""
    above = remove_ground(cloud, cfg.ground_config())
    pts2 = flatten(above)
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        outcomes = list(pool.map(lambda P: _adjust_one(P, pts2, cfg), registered))

    results: list[AdjustmentResult] = []
    adjusted: list[PlanarPolygon] = []
    skipped = []
    for P, (res, err) in zip(registered, outcomes):
        if res is None:
            log.warning("skipping %s at adjustment: %s", P.name, err)
            skipped.append({"name": P.name, "stage": "adjust", "reason": err})
            continue
        results.append(res)
        adjusted.append(res.apply(P))

    labels = segment_cloud(cloud, adjusted, tolerance=cfg.tolerance)
    adjustments = {
        "config": {**asdict(cfg.search_config()), "cell_size": cfg.cell_size, "min_points": cfg.min_points},
        "results": [r.to_json() for r in results],
    }
    artifacts = {
        "adjustments.json": _json_bytes(adjustments),
        "adjusted.json": _json_bytes(polygons_to_json(adjusted)),
        "labeled_cloud.xyz": write_xyz(cloud, labels),
    }
    summary = {
        "input_points": len(cloud),
        "above_ground_points": len(above),
        "results": results,
        "skipped": skipped,
    }
    return results, adjusted, labels, artifacts, summary


def _report(candidates: Sequence[PlanarPolygon], truth: Sequence[PlanarPolygon], rcfg: ReportConfig):
    by_name = {t.name: t for t in truth}
    metrics = []
    for c in candidates:
        t = by_name.get(c.name)
        if t is None:
            log.warning("no ground truth for %s", c.name)
            continue
        metrics.append(evaluate_building(c, t))
    return aggregate(metrics, rcfg) if metrics else None


def stage_evaluate(
    candidates: Sequence[PlanarPolygon],
    truth: Sequence[PlanarPolygon],
    rcfg: ReportConfig,
    fmt: str = "json",
    initial: Optional[Sequence[PlanarPolygon]] = None,
):
    """Score candidates (and optionally the pre-adjustment polygons) against truth."""
    artifacts = {}
    reports = {}
    for key, polys in (("report", candidates), ("report_initial", initial)):
        if polys is None:
            continue
        rep = _report(polys, truth, rcfg)
        reports[key] = rep
        if rep is not None:
            artifacts[f"{key}.{fmt}"] = render_report(rep, fmt)
    return reports, artifacts


def _summary(rep) -> Optional[dict]:
    if rep is None:
        return None
    return {
        "buildings": len(rep.buildings),
        "mean_iou": rep.mean_iou,
        "median_iou": rep.median_iou,
        "mean_dist": rep.mean_dist,
        "median_dist": rep.median_dist,
    }


def write_artifacts(out_dir, artifacts: dict[str, bytes]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(artifacts):
        (out / name).write_bytes(artifacts[name])


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage and write artifacts plus ``manifest.json`` to ``cfg.out``.

    Returns the manifest. Hard errors propagate before anything is written.
    """
    required = {"osm": cfg.osm, "cloud": cfg.cloud, "control_points": cfg.control_points}
    if cfg.truth is not None:
        required["truth"] = cfg.truth
    for key, path in required.items():
        if path is None:
            raise FileNotFoundError(f"missing required input: {key}")
        if not Path(path).is_file():
            raise FileNotFoundError(f"{key} file not found: {path}")

    artifacts: dict[str, bytes] = {}
    footprints, arts, parse_summary = stage_parse(Path(cfg.osm).read_bytes(), cfg.buildings)
    artifacts.update(arts)

    affine, registered, arts, reg_summary = stage_register(
        Path(cfg.control_points).read_bytes(), footprints, cfg.registration
    )
    artifacts.update(arts)

    cloud = load_cloud(Path(cfg.cloud).read_bytes(), format_for_path(cfg.cloud))
    results, adjusted, _, arts, adj_summary = stage_adjust(registered, cloud, cfg)
    artifacts.update(arts)

    reports = {}
    if cfg.truth is not None:
        truth = polygons_from_json(json.loads(Path(cfg.truth).read_text()))
        reports, arts = stage_evaluate(adjusted, truth, cfg.report_config(), cfg.format, initial=registered)
        artifacts.update(arts)

    manifest = {
        "config": cfg.to_json(),
        "osm": parse_summary,
        "registration": {"model": cfg.registration, **{k: reg_summary[k] for k in ("pairs", "rms")}},
        "ground": {
            "input_points": adj_summary["input_points"],
            "above_ground_points": adj_summary["above_ground_points"],
        },
        "adjustments": [r.to_json() for r in results],
        "skipped": reg_summary["skipped"] + adj_summary["skipped"],
        "report": _summary(reports.get("report")),
        "report_initial": _summary(reports.get("report_initial")),
        "artifacts": sorted(artifacts) + ["manifest.json"],
    }
    artifacts["manifest.json"] = _json_bytes(manifest)
    write_artifacts(cfg.out, artifacts)
    return manifest
