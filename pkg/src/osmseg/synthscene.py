"""Seeded synthetic scenes with known footprints, used as an end-to-end oracle.

Sampling uses ``numpy.random.Generator(PCG64(seed))`` and draws in a fixed
order (ground, then each building's walls and roof, then clutter blobs), so
the same SceneSpec always yields the same cloud. Coordinates are rounded to
0.1 mm so the ASCII XYZ export is exact.

Buildings are sampled as vertical walls (x-y on the footprint edge, z
uniform up to the roof) plus a flat roof. The flattened cloud therefore
concentrates points along footprint edges.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .adjust import UNLABELED
from .cloud import PointCloud3
from .geometry import PlanarPolygon, points_in_ring, polygon_area, polygon_centroid
from .geoproject import mercator_to_wgs84, wgs84_to_mercator
from .osm_ingest import OsmDocument, OsmWay
from .registration import Affine2D

COORD_DECIMALS = 4


@dataclass(frozen=True)
class BuildingSpec:
    name: str
    ring: tuple[tuple[float, float], ...]
    height: float = 12.0
    # Translation that moves the "OSM" polygon back onto the truth.
    offset: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ClutterBlob:
    center: tuple[float, float]
    radius: float
    density: float
    height: float = 8.0


@dataclass(frozen=True)
class GeoFrame:
    """Model frame: ``model = scale * R(rotation) @ (mercator - anchor)``."""

    anchor_lon: float = -6.25532
    anchor_lat: float = 53.34380
    rotation_deg: float = 1.5
    scale: float = math.cos(math.radians(53.34380))

    def model_from_mercator(self) -> Affine2D:
        th = math.radians(self.rotation_deg)
        lin = self.scale * np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        anchor = np.array(wgs84_to_mercator((self.anchor_lon, self.anchor_lat)))
        return Affine2D(lin, -lin @ anchor)

    def model_to_lonlat(self, xy: np.ndarray) -> list[tuple[float, float]]:
        merc = self.model_from_mercator().inverse()(np.asarray(xy, dtype=float).reshape(-1, 2))
        return [tuple(mercator_to_wgs84(m)) for m in merc.tolist()]


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    buildings: tuple[BuildingSpec, ...]
    extent: tuple[float, float, float, float] = (-100.0, -100.0, 100.0, 100.0)
    slope: tuple[float, float] = (0.0, 0.0)
    ground_density: float = 0.2
    edge_density: float = 30.0
    interior_density: float = 6.0
    clutter: tuple[ClutterBlob, ...] = ()
    jitter: float = 0.03
    control_noise: float = 0.0
    frame: GeoFrame = field(default_factory=GeoFrame)

    def __post_init__(self):
        for v in (self.ground_density, self.edge_density, self.interior_density, self.jitter, self.control_noise):
            if v < 0:
                raise ValueError("densities and noise levels must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SceneSpec":
        d = dict(data)
        d["buildings"] = tuple(
            BuildingSpec(b["name"], tuple(map(tuple, b["ring"])), b.get("height", 12.0), tuple(b.get("offset", (0.0, 0.0))))
            for b in d.get("buildings", ())
        )
        d["clutter"] = tuple(
            ClutterBlob(tuple(c["center"]), c["radius"], c["density"], c.get("height", 8.0)) for c in d.get("clutter", ())
        )
        for key in ("extent", "slope"):
            if key in d:
                d[key] = tuple(d[key])
        if "frame" in d:
            d["frame"] = GeoFrame(**d["frame"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Scene:
    cloud: PointCloud3
    truth: list[PlanarPolygon]
    osm: list[PlanarPolygon]
    labels: list[str]
    spec: SceneSpec


def _ground_z(spec: SceneSpec, xy: np.ndarray) -> np.ndarray:
    return spec.slope[0] * xy[..., 0] + spec.slope[1] * xy[..., 1]


def _sample_in_ring(rng, ring: np.ndarray, n: int) -> np.ndarray:
    lo, hi = ring.min(axis=0), ring.max(axis=0)
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - len(out)), 16), 2))
        out = np.vstack((out, cand[points_in_ring(cand, ring)]))
    return out[:n]


def generate_scene(spec: SceneSpec) -> Scene:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    truth = [PlanarPolygon(b.name, b.ring) for b in spec.buildings]
    chunks: list[np.ndarray] = []
    labels: list[str] = []

    # Ground, excluding building interiors.
    xmin, ymin, xmax, ymax = spec.extent
    n = int(round((xmax - xmin) * (ymax - ymin) * spec.ground_density))
    xy = rng.uniform((xmin, ymin), (xmax, ymax), size=(n, 2))
    covered = np.zeros(n, dtype=bool)
    for P in truth:
        covered |= points_in_ring(xy, P.ring)
    xy = xy[~covered]
    z = _ground_z(spec, xy) + rng.uniform(-spec.jitter, spec.jitter, size=len(xy))
    chunks.append(np.column_stack((xy, z)))
    labels += [UNLABELED] * len(xy)

    for b, P in zip(spec.buildings, truth):
        base = float(_ground_z(spec, np.array(polygon_centroid(P))))
        roof = base + b.height
        walls = []
        ring = P.ring
        for k in range(len(ring)):
            a, c = ring[k], ring[(k + 1) % len(ring)]
            m = int(round(math.hypot(*(c - a)) * spec.edge_density))
            t = rng.uniform(0.0, 1.0, size=m)
            wxy = a + t[:, None] * (c - a)
            wz = rng.uniform(_ground_z(spec, wxy), roof)
            walls.append(np.column_stack((wxy, wz)))
        m = int(round(polygon_area(P) * spec.interior_density))
        rxy = _sample_in_ring(rng, ring, m)
        rz = roof + rng.uniform(-spec.jitter, spec.jitter, size=m)
        pts = np.vstack(walls + [np.column_stack((rxy, rz))])
        chunks.append(pts)
        labels += [b.name] * len(pts)

    for blob in spec.clutter:
        m = int(round(math.pi * blob.radius**2 * blob.density))
        r = blob.radius * np.sqrt(rng.uniform(0.0, 1.0, size=m))
        th = rng.uniform(0.0, 2 * math.pi, size=m)
        cxy = np.column_stack((blob.center[0] + r * np.cos(th), blob.center[1] + r * np.sin(th)))
        g = _ground_z(spec, cxy)
        cz = rng.uniform(g + 1.0, g + blob.height)
        chunks.append(np.column_stack((cxy, cz)))
        labels += [UNLABELED] * m

    points = np.round(np.vstack(chunks), COORD_DECIMALS)
    osm = [P.translated(-b.offset[0], -b.offset[1]) for b, P in zip(spec.buildings, truth)]
    return Scene(PointCloud3(points), truth, osm, labels, spec)


def scene_osm(scene: Scene) -> OsmDocument:
    """OSM document holding the perturbed footprints as closed building ways."""
    nodes: dict[int, tuple[float, float]] = {}
    ways = []
    next_node = 1
    for k, P in enumerate(scene.osm):
        ids = []
        for lon, lat in scene.spec.frame.model_to_lonlat(P.ring):
            nodes[next_node] = (lon, lat)
            ids.append(next_node)
            next_node += 1
        ways.append(OsmWay(1000 + k, tuple(ids + ids[:1]), {"building": "yes", "name": P.name}))
    return OsmDocument(nodes, tuple(ways), ())


def scene_control_points(scene: Scene, count: int = 18) -> bytes:
    """Control-point CSV: the model origin (anchor) plus a spread grid."""
    xmin, ymin, xmax, ymax = scene.spec.extent
    cols = (count - 1 + 2) // 3
    gx = np.linspace(xmin * 0.9, xmax * 0.9, cols)
    gy = np.linspace(ymin * 0.9, ymax * 0.9, 3)
    model = [(0.0, 0.0)] + [(x, y) for y in gy for x in gx][: count - 1]
    model = np.array(model)
    lonlat = scene.spec.frame.model_to_lonlat(model)
    if scene.spec.control_noise > 0:
        rng = np.random.Generator(np.random.PCG64(scene.spec.seed + 1))
        model = model + rng.normal(0.0, scene.spec.control_noise, size=model.shape)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["lon", "lat", "model_x", "model_y"])
    for (lon, lat), (x, y) in zip(lonlat, model.tolist()):
        w.writerow([repr(lon), repr(lat), repr(x), repr(y)])
    return out.getvalue().encode("utf-8")


def _rect(cx, cy, w, h):
    return ((cx - w / 2, cy - h / 2), (cx + w / 2, cy - h / 2), (cx + w / 2, cy + h / 2), (cx - w / 2, cy + h / 2))


def _ell(cx, cy, w, h, aw, ah):
    x0, y0 = cx - w / 2, cy - h / 2
    return ((x0, y0), (x0 + w, y0), (x0 + w, y0 + ah), (x0 + aw, y0 + ah), (x0 + aw, y0 + h), (x0, y0 + h))


def _tee(cx, cy, w, h, stem):
    x0, y0 = cx - w / 2, cy - h / 2
    s0, s1 = cx - stem / 2, cx + stem / 2
    top = y0 + h - stem
    return ((s0, y0), (s1, y0), (s1, top), (x0 + w, top), (x0 + w, y0 + h), (x0, y0 + h), (x0, top), (s0, top))


def _you(cx, cy, w, h, arm):
    x0, y0 = cx - w / 2, cy - h / 2
    return (
        (x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0 + w - arm, y0 + h),
        (x0 + w - arm, y0 + arm), (x0 + arm, y0 + arm), (x0 + arm, y0 + h), (x0, y0 + h),
    )


CAMPUS_NAMES = (
    "Chapel", "Regent House", "Berkeley Library", "O'Reilly", "Museum Building",
    "Botany Building", "Campanile", "Trinity Long Room Hub", "The Old Dining Hall",
    "Reading Room", "Old Civil Eng. Building", "FitzGerald Building", "Lloyd Institute",
    "Zoology Building", "Old Library", "Public Theatre",
)

# Buildings given an adjacent vegetation blob.
CAMPUS_CLUTTERED = ("Botany Building", "The Old Dining Hall", "FitzGerald Building")


def campus_spec(seed: int = 0, max_offset: float = 8.0) -> SceneSpec:
    """16 buildings on a 4x4 layout with off-lattice offsets and three tree blobs."""
    rng = np.random.Generator(np.random.PCG64(seed))
    shapes = [
        lambda cx, cy: _rect(cx, cy, 18, 34),
        lambda cx, cy: _ell(cx, cy, 40, 30, 16, 12),
        lambda cx, cy: _rect(cx, cy, 42, 24),
        lambda cx, cy: _tee(cx, cy, 30, 32, 12),
        lambda cx, cy: _rect(cx, cy, 28, 20),
        lambda cx, cy: _you(cx, cy, 36, 30, 10),
        lambda cx, cy: _rect(cx, cy, 12, 12),
        lambda cx, cy: _ell(cx, cy, 30, 36, 14, 14),
    ]
    centers = [(-112.5 + 75 * i, -112.5 + 75 * j) for j in range(4) for i in range(4)]
    buildings = []
    clutter = []
    for k, (name, (cx, cy)) in enumerate(zip(CAMPUS_NAMES, centers)):
        ring = shapes[k % len(shapes)](cx, cy)
        mag = rng.uniform(0.3, 1.0) * max_offset
        ang = rng.uniform(0.0, 2 * math.pi)
        offset = (round(mag * math.cos(ang), 3), round(mag * math.sin(ang), 3))
        height = float(np.round(rng.uniform(10.0, 22.0), 1))
        buildings.append(BuildingSpec(name, tuple(ring), height, offset))
        if name in CAMPUS_CLUTTERED:
            east = max(x for x, _ in ring)
            clutter.append(ClutterBlob((east + 6.0, cy), 5.0, 8.0, 12.0))
    return SceneSpec(
        seed=seed,
        buildings=tuple(buildings),
        extent=(-150.0, -150.0, 150.0, 150.0),
        slope=(0.01, -0.005),
        ground_density=0.25,
        edge_density=15.0,
        interior_density=6.0,
        clutter=tuple(clutter),
    )


def write_scene(scene: Scene, out_dir) -> dict[str, str]:
    """Write cloud.xyz, osm.xml, control_points.csv, truth.json, labels.txt and scene.json."""
    from pathlib import Path

    from .cloud import write_xyz
    from .evaluation import polygons_to_json
    from .osm_ingest import write_osm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "cloud": ("cloud.xyz", write_xyz(scene.cloud)),
        "osm": ("osm.xml", write_osm(scene_osm(scene))),
        "control_points": ("control_points.csv", scene_control_points(scene)),
        "truth": ("truth.json", (json.dumps(polygons_to_json(scene.truth), indent=2) + "\n").encode()),
        "labels": ("labels.txt", ("\n".join(scene.labels) + "\n").encode("utf-8")),
        "scene": ("scene.json", (json.dumps(scene.spec.to_json(), indent=2) + "\n").encode()),
    }
    paths = {}
    for key, (name, data) in files.items():
        (out / name).write_bytes(data)
        paths[key] = str(out / name)
    return paths
