"""Per-building translation search against an occupancy grid, and point labeling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .cloud import OccupancyGrid, PointCloud3
from .errors import WindowTooSmall
from .geometry import PlanarPolygon, distance_to_ring, points_in_ring

UNLABELED = "UNLABELED"

# Candidates evaluated per vectorized batch.
_BATCH = 32


@dataclass(frozen=True)
class SearchConfig:
    radius: float = 12.0
    step: float = 0.8

    def __post_init__(self):
        if not (math.isfinite(self.radius) and math.isfinite(self.step)):
            raise ValueError("radius and step must be finite")
        if self.radius <= 0 or self.step <= 0:
            raise ValueError("radius and step must be positive")
        if self.step > self.radius:
            raise ValueError("step must not exceed radius")


@dataclass(frozen=True)
class AdjustmentResult:
    name: str
    best: tuple[float, float]
    best_iou: float
    initial_iou: float
    evaluated_count: int

    def apply(self, P: PlanarPolygon) -> PlanarPolygon:
        return P.translated(*self.best)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "best": list(self.best),
            "best_iou": self.best_iou,
            "initial_iou": self.initial_iou,
            "evaluated_count": self.evaluated_count,
        }


def candidate_lattice(cfg: SearchConfig) -> np.ndarray:
    """Integer lattice indices (i, j) with (i*step)^2 + (j*step)^2 < radius^2."""
    n = int(math.floor(cfg.radius / cfg.step)) + 1
    ii, jj = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="xy")
    ij = np.column_stack((ii.ravel(), jj.ravel()))
    offsets = ij * cfg.step
    keep = (offsets**2).sum(axis=1) < cfg.radius**2
    return ij[keep]


def search_window(P: PlanarPolygon, cfg: SearchConfig, cell_size: float) -> tuple[float, float, float, float]:
    """Footprint bounding box dilated by the search radius plus one cell."""
    xmin, ymin, xmax, ymax = P.bounds
    pad = cfg.radius + cell_size
    return xmin - pad, ymin - pad, xmax + pad, ymax + pad


def _require_inside(bounds, grid: OccupancyGrid, pad: float, name: str):
    xmin, ymin, xmax, ymax = bounds
    gx0, gy0, gx1, gy1 = grid.bounds
    if xmin - pad < gx0 or ymin - pad < gy0 or xmax + pad > gx1 or ymax + pad > gy1:
        raise WindowTooSmall(f"{name!r}: footprint (dilated by {pad}) exits the grid window")


def _overlap_counts(ring: np.ndarray, grid: OccupancyGrid, shifts: np.ndarray):
    """For each shift, count cells inside the shifted ring and those also occupied."""
    centers = grid.cell_centers().reshape(-1, 2)
    occ = grid.occupied.ravel()
    # Local frame keeps the membership arithmetic small.
    origin = ring.min(axis=0)
    loc_ring = ring - origin
    loc_centers = centers - origin
    poly = np.empty(len(shifts), dtype=np.int64)
    inter = np.empty(len(shifts), dtype=np.int64)
    for start in range(0, len(shifts), _BATCH):
        t = shifts[start : start + _BATCH]
        inside = points_in_ring(loc_centers[None, :, :] - t[:, None, :], loc_ring)
        poly[start : start + len(t)] = inside.sum(axis=1)
        inter[start : start + len(t)] = (inside & occ).sum(axis=1)
    return poly, inter, int(occ.sum())


def _ratio(inter: int, poly: int, occupied: int) -> Fraction:
    union = poly + occupied - inter
    return Fraction(0) if union == 0 else Fraction(inter, union)


def cloud_iou(P: PlanarPolygon, grid: OccupancyGrid) -> float:
    """Cell IoU between the cells whose centers fall in P and the occupied cells."""
    _require_inside(P.bounds, grid, 0.0, P.name)
    poly, inter, occupied = _overlap_counts(P.ring, grid, np.zeros((1, 2)))
    return float(_ratio(int(inter[0]), int(poly[0]), occupied))


def adjust_footprint(P: PlanarPolygon, grid: OccupancyGrid, cfg: SearchConfig) -> AdjustmentResult:
    """Exhaustive lattice search for the translation maximizing :func:`cloud_iou`.

    Every (i*step, j*step) strictly inside the radius is scored. Ties go to the
    smallest norm, then smallest y, then smallest x, so the result does not
    depend on evaluation order.
    """
    _require_inside(P.bounds, grid, cfg.radius, P.name)
    ij = candidate_lattice(cfg)
    shifts = ij * cfg.step
    poly, inter, occupied = _overlap_counts(P.ring, grid, shifts)

    scores = [_ratio(int(a), int(p), occupied) for a, p in zip(inter, poly)]
    keys = [(-s, int(i * i + j * j), int(j), int(i)) for s, (i, j) in zip(scores, ij)]
    best = min(range(len(keys)), key=keys.__getitem__)
    origin = int(np.flatnonzero((ij[:, 0] == 0) & (ij[:, 1] == 0))[0])
    bx, by = (float(v) for v in shifts[best])
    return AdjustmentResult(
        name=P.name,
        best=(bx + 0.0, by + 0.0),
        best_iou=float(scores[best]),
        initial_iou=float(scores[origin]),
        evaluated_count=len(ij),
    )


def segment_cloud(
    cloud: PointCloud3,
    adjusted: Iterable[PlanarPolygon] | Sequence[tuple[str, PlanarPolygon]],
    tolerance: float = 0.0,
) -> list[str]:
    """Label each point with the name of the polygon containing its x-y.

    Points within ``tolerance`` meters of a polygon also count as contained.
    Overlaps resolve to the polygon whose name sorts first.
    """
    polys = []
    for item in adjusted:
        if isinstance(item, PlanarPolygon):
            polys.append((item.name, item))
        else:
            polys.append((item[0], item[1]))
    polys.sort(key=lambda kv: kv[0])

    xy = cloud.points[:, :2]
    labels = np.full(len(xy), None, dtype=object)
    for name, P in polys:
        xmin, ymin, xmax, ymax = P.bounds
        cand = np.flatnonzero(
            (labels == None)  # noqa: E711
            & (xy[:, 0] >= xmin - tolerance)
            & (xy[:, 0] <= xmax + tolerance)
            & (xy[:, 1] >= ymin - tolerance)
            & (xy[:, 1] <= ymax + tolerance)
        )
        if len(cand) == 0:
            continue
        hit = points_in_ring(xy[cand], P.ring)
        if tolerance > 0:
            rest = ~hit
            hit[rest] = distance_to_ring(xy[cand[rest]], P.ring) <= tolerance
        labels[cand[hit]] = name
    labels[labels == None] = UNLABELED  # noqa: E711
    return labels.tolist()
