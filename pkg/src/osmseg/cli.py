"""Command line entry point: ``osmseg <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` (JSON, keys mirror the flags);
flags given on the command line override the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .cloud import format_for_path, load_cloud
from .errors import OsmSegError
from .evaluation import ReportConfig, aggregate, polygons_from_json, read_metrics, render_report
from .osm_ingest import footprints_from_json
from .pipeline import (
    PipelineConfig,
    run_pipeline,
    stage_adjust,
    stage_evaluate,
    stage_parse,
    stage_register,
    write_artifacts,
)
from .synthscene import SceneSpec, campus_spec, generate_scene, write_scene

log = logging.getLogger("osmseg")

S = argparse.SUPPRESS


def _add_io(p, *names):
    flags = {
        "osm": ("--osm", "OSM XML extract"),
        "cloud": ("--cloud", "point cloud (.xyz or .ply, ASCII)"),
        "control_points": ("--control-points", "control-point CSV (lon,lat,model_x,model_y)"),
        "truth": ("--truth", "ground-truth polygons JSON"),
    }
    for n in names:
        flag, help_ = flags[n]
        p.add_argument(flag, dest=n, metavar="PATH", default=S, help=help_)


def _add_buildings(p):
    p.add_argument("--buildings", metavar="NAME[,NAME...]", default=S, help="restrict to these building names")


def _add_adjust_params(p):
    g = p.add_argument_group("ground removal")
    g.add_argument("--ground-mode", choices=("global", "local"), default=S)
    g.add_argument("--ground-z", type=float, metavar="METERS", default=S, help="global threshold z0")
    g.add_argument("--ground-cell", type=float, metavar="METERS", default=S, help="local cell side g")
    g.add_argument("--ground-height", type=float, metavar="METERS", default=S, help="local height offset h")
    g.add_argument("--ground-window", type=float, metavar="METERS", default=S,
                   help="local neighborhood for the ground minimum")
    s = p.add_argument_group("grid and search")
    _add_search_params(s)
    s.add_argument("--threads", type=int, metavar="N", default=S)
    s.add_argument("--label-tolerance", type=float, metavar="METERS", default=S)


def _add_search_params(p):
    p.add_argument("--radius", type=float, metavar="METERS", default=S)
    p.add_argument("--step", type=float, metavar="METERS", default=S)
    p.add_argument("--cell-size", type=float, metavar="METERS", default=S)
    p.add_argument("--min-points", type=int, metavar="N", default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osmseg", description="Segment a geolocated point cloud by aligning OSM building footprints to it."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", metavar="FILE", default=S, help="JSON config mirroring the flags")
        p.add_argument("--out", metavar="DIR", default=S, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", default=S)
        return p

    p = add("run", "full pipeline: parse, register, adjust, segment, evaluate")
    _add_io(p, "osm", "cloud", "control_points", "truth")
    _add_buildings(p)
    _add_adjust_params(p)
    p.add_argument("--format", choices=("json", "csv"), default=S)
    p.add_argument("--registration", choices=("affine", "similarity"), default=S)

    p = add("parse-osm", "OSM XML -> footprints.json")
    _add_io(p, "osm")
    _add_buildings(p)

    p = add("register", "control points -> transform.json (+ registered.json)")
    _add_io(p, "control_points")
    p.add_argument("--footprints", metavar="PATH", default=S, help="footprints.json from parse-osm")
    p.add_argument("--registration", choices=("affine", "similarity"), default=S)

    p = add("adjust", "registered footprints + cloud -> adjustments, labeled cloud")
    p.add_argument("--footprints", metavar="PATH", default=S, help="registered.json from register")
    _add_io(p, "cloud")
    _add_adjust_params(p)

    p = add("evaluate", "score polygons against truth, or aggregate precomputed metrics")
    p.add_argument("--candidates", metavar="PATH", default=S, help="adjusted.json")
    p.add_argument("--initial", metavar="PATH", default=S, help="registered.json (pre-adjustment)")
    _add_io(p, "truth")
    p.add_argument("--metrics", metavar="PATH", default=S, help="CSV/JSON rows of name,iou[,centroid_dist]")
    p.add_argument("--format", choices=("json", "csv"), default=S)
    _add_search_params(p)

    p = add("gen-scene", "write a synthetic scene (cloud, OSM, control points, truth)")
    p.add_argument("--preset", choices=("campus",), default=S)
    p.add_argument("--spec", metavar="PATH", default=S, help="SceneSpec JSON")
    p.add_argument("--seed", type=int, metavar="N", default=S)
    return parser


_EXTRA = {"footprints", "candidates", "initial", "metrics", "preset", "spec", "seed"}


def _settings(args) -> tuple[dict, dict]:
    """Merge config file and flags; returns (pipeline settings, extra settings)."""
    values = {}
    if "config" in args:
        values.update({k.replace("-", "_"): v for k, v in json.loads(Path(args.config).read_text()).items()})
    values.update({k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose")})
    extra = {k: values.pop(k) for k in list(values) if k in _EXTRA}
    return values, extra


def _need(extra: dict, key: str) -> str:
    if key not in extra:
        raise FileNotFoundError(f"--{key} is required")
    path = extra[key]
    if not Path(path).is_file():
        raise FileNotFoundError(f"{key} file not found: {path}")
    return path


def _read(cfg: PipelineConfig, key: str) -> bytes:
    path = getattr(cfg, key)
    if path is None:
        raise FileNotFoundError(f"--{key.replace('_', '-')} is required")
    return Path(path).read_bytes()


def _cmd_run(cfg: PipelineConfig, extra: dict) -> None:
    manifest = run_pipeline(cfg)
    rep = manifest["report"]
    log.info("adjusted %d buildings", len(manifest["adjustments"]))
    if rep:
        log.info("mean IoU %.4f, median IoU %.4f", rep["mean_iou"], rep["median_iou"])


def _cmd_parse(cfg: PipelineConfig, extra: dict) -> None:
    _, artifacts, summary = stage_parse(_read(cfg, "osm"), cfg.buildings)
    write_artifacts(cfg.out, artifacts)
    log.info("%d footprints", summary["footprints"])


def _cmd_register(cfg: PipelineConfig, extra: dict) -> None:
    control = _read(cfg, "control_points")
    footprints = []
    if "footprints" in extra:
        footprints = footprints_from_json(json.loads(Path(_need(extra, "footprints")).read_text()))
    _, _, artifacts, summary = stage_register(control, footprints, cfg.registration)
    if "footprints" not in extra:
        del artifacts["registered.json"]
    write_artifacts(cfg.out, artifacts)
    log.info("RMS residual %.6g m over %d pairs", summary["rms"], summary["pairs"])


def _cmd_adjust(cfg: PipelineConfig, extra: dict) -> None:
    registered = polygons_from_json(json.loads(Path(_need(extra, "footprints")).read_text()))
    cloud = load_cloud(_read(cfg, "cloud"), format_for_path(cfg.cloud))
    _, _, _, artifacts, _ = stage_adjust(registered, cloud, cfg)
    write_artifacts(cfg.out, artifacts)


def _cmd_evaluate(cfg: PipelineConfig, extra: dict, given: dict) -> None:
    rcfg = ReportConfig(*(given.get(k) for k in ("radius", "step", "cell_size", "min_points")))
    if "metrics" in extra:
        path = _need(extra, "metrics")
        fmt = "json" if path.endswith(".json") else "csv"
        report = aggregate(read_metrics(Path(path).read_bytes(), fmt), rcfg)
        write_artifacts(cfg.out, {f"report.{cfg.format}": render_report(report, cfg.format)})
        return
    candidates = polygons_from_json(json.loads(Path(_need(extra, "candidates")).read_text()))
    truth = polygons_from_json(json.loads(_read(cfg, "truth")))
    initial = None
    if "initial" in extra:
        initial = polygons_from_json(json.loads(Path(_need(extra, "initial")).read_text()))
    _, artifacts = stage_evaluate(candidates, truth, rcfg, cfg.format, initial)
    write_artifacts(cfg.out, artifacts)


def _cmd_gen_scene(cfg: PipelineConfig, extra: dict) -> None:
    seed = int(extra.get("seed", 0))
    if "spec" in extra:
        data = json.loads(Path(_need(extra, "spec")).read_text())
        if "seed" in extra:
            data["seed"] = seed
        spec = SceneSpec.from_json(data)
    else:
        spec = campus_spec(seed)
    scene = generate_scene(spec)
    write_scene(scene, cfg.out)
    log.info("%d points, %d buildings", len(scene.cloud), len(scene.truth))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    try:
        values, extra = _settings(args)
        cfg = PipelineConfig.from_dict(values)
        if args.command == "run":
            _cmd_run(cfg, extra)
        elif args.command == "parse-osm":
            _cmd_parse(cfg, extra)
        elif args.command == "register":
            _cmd_register(cfg, extra)
        elif args.command == "adjust":
            _cmd_adjust(cfg, extra)
        elif args.command == "evaluate":
            _cmd_evaluate(cfg, extra, values)
        elif args.command == "gen-scene":
            _cmd_gen_scene(cfg, extra)
    except (OsmSegError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"osmseg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
