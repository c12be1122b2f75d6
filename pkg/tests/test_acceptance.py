"""One test per acceptance criterion; each records a PASS/FAIL line in the terminal summary."""
import json
import math
import shutil
import time

import numpy as np
import pytest

from conftest import (
    REGISTERED_IOU,
    ADJUSTED_R12_IOU,
    adjust_scene,
    brute_force_lattice_count,
    clean_spec,
    half_integer_box,
    is_convex,
    raster_intersection_area,
    star_ring,
)
from osmseg.adjust import UNLABELED, SearchConfig, candidate_lattice, cloud_iou, search_window
from osmseg.cloud import build_occupancy, flatten, read_labels, remove_ground
from osmseg.evaluation import BuildingMetrics, aggregate
from osmseg.geometry import PlanarPolygon, polygon_area, polygon_intersection_area, polygon_iou
from osmseg.geoproject import mercator_to_wgs84, wgs84_to_mercator
from osmseg.pipeline import PipelineConfig, run_pipeline
from osmseg.registration import Affine2D, ControlPointPair, estimate_affine
from osmseg.synthscene import CAMPUS_CLUTTERED, campus_spec, generate_scene, write_scene


def test_criterion_1_mercator(record_criterion):
    t0 = time.perf_counter()
    x, y = wgs84_to_mercator((-6.25532, 53.34380))
    err = math.hypot(x + 696339.0371489801, y - 7012543.77625507)
    rng = np.random.default_rng(1)
    worst = 0.0
    for lon, lat in zip(rng.uniform(-180, 180, 1000), rng.uniform(-89.4, 89.4, 1000)):
        m = wgs84_to_mercator((lon, lat))
        b = wgs84_to_mercator(mercator_to_wgs84(m))
        worst = max(worst, math.hypot(b[0] - m[0], b[1] - m[1]))
    dt = time.perf_counter() - t0
    ok = err <= 1.0 and worst < 1e-6 and dt < 1.0
    record_criterion("1 mercator fidelity", ok, f"anchor err {err:.2e} m, round trip {worst:.2e} m, {dt:.2f} s")
    assert ok


def test_criterion_2_published_aggregates(record_criterion):
    t0 = time.perf_counter()
    reg = aggregate([BuildingMetrics(f"b{k}", v) for k, v in enumerate(REGISTERED_IOU)])
    adj = aggregate([BuildingMetrics(f"b{k}", v) for k, v in enumerate(ADJUSTED_R12_IOU)])
    dt = time.perf_counter() - t0
    ok = (
        abs(reg.mean_iou - 0.567) <= 0.001
        and abs(reg.median_iou - 0.607) <= 0.001
        and abs(adj.mean_iou - 0.791) <= 0.001
        and abs(adj.median_iou - 0.787) <= 0.001
        and dt < 1.0
    )
    record_criterion(
        "2 published aggregates",
        ok,
        f"registered {reg.mean_iou:.4f}/{reg.median_iou:.4f}, adjusted {adj.mean_iou:.4f}/{adj.median_iou:.4f}",
    )
    assert ok


def test_criterion_3_geometry_oracle(record_criterion):
    t0 = time.perf_counter()
    worst_rel = worst_sym = 0.0
    self_ok = True
    for seed in range(50):
        rng = np.random.default_rng(5000 + seed)
        # at least one member of every pair is non-convex
        while True:
            A = star_ring(rng, (0.0, 0.0), int(rng.integers(5, 12)), 3.0)
            if not is_convex(A):
                break
        B = star_ring(rng, rng.uniform(-1.5, 1.5, 2), int(rng.integers(3, 12)), 3.0)
        P, Q = PlanarPolygon("a", A), PlanarPolygon("b", B)
        oracle = raster_intersection_area(P.ring, Q.ring)
        got = polygon_intersection_area(P, Q)
        worst_rel = max(worst_rel, abs(got - oracle) / max(oracle, 1e-12))
        worst_sym = max(worst_sym, abs(polygon_iou(P, Q) - polygon_iou(Q, P)))
        self_ok &= polygon_iou(P, P) == 1.0 and polygon_iou(Q, Q) == 1.0
    dt = time.perf_counter() - t0
    ok = worst_rel < 0.01 and worst_sym <= 1e-12 and self_ok and dt < 30
    record_criterion(
        "3 geometry oracle",
        ok,
        f"50 pairs, max rel err {worst_rel:.2e}, symmetry {worst_sym:.1e}, self IoU exact {self_ok}, {dt:.1f} s",
    )
    assert ok


def test_criterion_4_registration(record_criterion):
    t0 = time.perf_counter()
    worst_rms = worst_exact = 0.0
    for seed in range(100):
        rng = np.random.default_rng(9000 + seed)
        while True:
            lin = rng.uniform(-2, 2, (2, 2))
            if abs(np.linalg.det(lin)) > 0.2:
                break
        truth = Affine2D(lin, rng.uniform(-500, 500, 2))
        src = rng.uniform(-300, 300, (18, 2))
        dst = truth(src)
        exact, _ = estimate_affine([ControlPointPair(tuple(s), tuple(d)) for s, d in zip(src, dst)])
        worst_exact = max(
            worst_exact,
            float(np.max(np.abs(exact.linear - truth.linear))),
            float(np.max(np.abs(exact.translation - truth.translation))),
        )
        noisy = dst + rng.normal(0, 0.1, dst.shape)
        _, rep = estimate_affine([ControlPointPair(tuple(s), tuple(d)) for s, d in zip(src, noisy)])
        worst_rms = max(worst_rms, rep.rms)
    dt = time.perf_counter() - t0
    ok = worst_rms <= 0.2 and worst_exact <= 1e-9 and dt < 5
    record_criterion(
        "4 registration recovery", ok, f"max noisy RMS {worst_rms:.3f} m, exact err {worst_exact:.1e}, {dt:.2f} s"
    )
    assert ok


ON_LATTICE = [(3.0, 0.0), (4.0, -3.0), (-2.0, 4.0), (0.0, -5.0), (1.0, 1.0), (-3.0, -3.0)]


def test_criterion_5_adjustment_oracle(record_criterion):
    t0 = time.perf_counter()
    cfg = SearchConfig(5.5, 1.0)
    exact = True
    worst_gap = 0.0
    identity = True
    for seed, off in enumerate(ON_LATTICE):
        w, h = 14 + 2 * seed, 10 + seed
        spec = clean_spec(seed, [half_integer_box("B", -w // 2, -h // 2, w, h, offset=off)])
        scene = generate_scene(spec)
        (res,), _, _ = adjust_scene(scene, cfg.radius, cfg.step)
        P = scene.osm[0]
        perimeter = 2 * (w + h)
        # (w+1)(h+1) cell centers lie in or on a half-integer box
        poly_cells = polygon_area(P) + perimeter / 2 + 1
        quantum = perimeter / poly_cells
        exact &= res.best == off
        worst_gap = max(worst_gap, (1.0 - res.best_iou) / quantum)
        # identity invariant, re-derived from an independently built grid
        pts = flatten(remove_ground(scene.cloud))
        grid = build_occupancy(pts, 1.0, 3, search_window(P, cfg, 1.0))
        identity &= res.best_iou >= cloud_iou(P, grid) == res.initial_iou
    dt = time.perf_counter() - t0
    ok = exact and worst_gap <= 1.0 and identity and dt < 30
    record_criterion(
        "5a on-lattice offsets recovered",
        ok,
        f"{len(ON_LATTICE)} scenes exact={exact}, 1-IoU within {worst_gap:.2f} quanta, identity ok={identity}, {dt:.1f} s",
    )
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="integer pairs with i^2 + j^2 < 30.25 number 97, not 89; see README",
)
def test_criterion_5_candidate_count(record_criterion):
    n = len(candidate_lattice(SearchConfig(5.5, 1.0)))
    brute = brute_force_lattice_count(5.5, 1.0)
    ok = n == 89
    record_criterion("5b candidate count equals 89", ok, f"implementation {n}, brute force {brute}")
    assert n == brute
    assert ok


@pytest.fixture(scope="module")
def campus(tmp_path_factory):
    base = tmp_path_factory.mktemp("campus")
    scene = generate_scene(campus_spec(0))
    write_scene(scene, base / "scene")

    def run(threads):
        out = base / "out"
        if out.exists():
            shutil.rmtree(out)
        cfg = PipelineConfig(
            osm=str(base / "scene" / "osm.xml"),
            cloud=str(base / "scene" / "cloud.xyz"),
            control_points=str(base / "scene" / "control_points.csv"),
            truth=str(base / "scene" / "truth.json"),
            out=str(out),
            radius=12.0,
            step=0.8,
            threads=threads,
        )
        t0 = time.perf_counter()
        manifest = run_pipeline(cfg)
        dt = time.perf_counter() - t0
        return manifest, {p.name: p.read_bytes() for p in sorted(out.iterdir())}, dt

    return scene, run


def test_criterion_6_campus(campus, record_criterion):
    scene, run = campus
    manifest, files, dt = run(1)
    rep = manifest["report"]
    truth_labels = np.array(scene.labels)
    got = np.array(read_labels(files["labeled_cloud.xyz"]))
    clean = np.isin(truth_labels, [b.name for b in scene.spec.buildings if b.name not in CAMPUS_CLUTTERED])
    accuracy = float((got[clean] == truth_labels[clean]).mean())
    budget = 0.8 + 1.0
    ok = (
        len(manifest["adjustments"]) == 16
        and rep["mean_iou"] >= 0.85
        and rep["mean_dist"] <= budget
        and accuracy >= 0.99
        and dt < 60
    )
    record_criterion(
        "6 synthetic campus",
        ok,
        f"{len(scene.cloud)} pts, mean IoU {manifest['report_initial']['mean_iou']:.3f}->{rep['mean_iou']:.3f}, "
        f"mean dist {rep['mean_dist']:.3f} m, labels {accuracy:.4f}, {dt:.1f} s",
    )
    assert ok
    assert np.count_nonzero(got == UNLABELED) > 0


def test_criterion_7_determinism(campus, record_criterion):
    _, run = campus
    _, one, _ = run(1)
    _, eight, _ = run(8)
    m1, m8 = json.loads(one.pop("manifest.json")), json.loads(eight.pop("manifest.json"))
    assert (m1["config"].pop("threads"), m8["config"].pop("threads")) == (1, 8)
    same_files = one == eight
    same_manifest = m1 == m8
    ok = same_files and same_manifest
    record_criterion(
        "7 determinism threads 1 vs 8",
        ok,
        f"{len(one)} artifacts byte-identical={same_files}, manifest equal apart from thread count={same_manifest}",
    )
    assert ok
