"""Planar polygon primitives.

All rings are ``(n, 2)`` float arrays without a repeated closing vertex.
:class:`PlanarPolygon` normalizes to counter-clockwise order on
construction, so everything downstream may assume positive signed area.

Intersection area uses Green's theorem on the boundary of ``P & Q``: the
pieces of P's boundary lying inside Q plus the pieces of Q's boundary
lying inside P. Shared collinear edges count once when they run in the
same direction and not at all when they run opposite (edge-only contact).
This handles non-convex rings and vertex-on-edge incidences without
building a clipped polygon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidPolygon, NumericalDegeneracy

# Absolute length tolerance in meters for incidence tests.
LENGTH_TOL = 1e-9


def as_ring(vertices) -> np.ndarray:
    ring = np.array(vertices, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise InvalidPolygon(f"ring must have shape (n, 2), got {ring.shape}")
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    return ring


def _local(*rings: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    # Shift to a shared origin that does not depend on vertex order.
    origin = np.min(np.vstack(rings), axis=0)
    return [r - origin for r in rings], origin


def _edge_terms(ring: np.ndarray) -> np.ndarray:
    nxt = np.roll(ring, -1, axis=0)
    return ring[:, 0] * nxt[:, 1] - nxt[:, 0] * ring[:, 1]


def signed_area(ring: np.ndarray) -> float:
    (loc,), _ = _local(ring)
    return 0.5 * math.fsum(_edge_terms(loc))


def ring_is_simple(ring: np.ndarray) -> bool:
    """True when no two non-adjacent edges touch and no edge has zero length."""
    n = len(ring)
    if n < 3:
        return False
    (loc,), _ = _local(ring)
    a = loc
    b = np.roll(loc, -1, axis=0)
    d = b - a
    lengths = np.hypot(d[:, 0], d[:, 1])
    extent = max(float(np.ptp(loc, axis=0).max()), 1e-300)
    tol = 1e-12 * extent
    if np.any(lengths <= tol):
        return False

    # Adjacent edges folding back onto each other form a spike.
    dn = np.roll(d, -1, axis=0)
    turn = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
    back = (d * dn).sum(axis=1) < 0
    if np.any((np.abs(turn) <= tol * lengths * np.roll(lengths, -1)) & back):
        return False
    if n == 3:
        return abs(signed_area(ring)) > tol * extent

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
            q[..., 1] - p[..., 1]
        ) * (r[..., 0] - p[..., 0])

    ai, bi = a[:, None, :], b[:, None, :]
    aj, bj = a[None, :, :], b[None, :, :]
    d1 = orient(ai, bi, aj)
    d2 = orient(ai, bi, bj)
    d3 = orient(aj, bj, ai)
    d4 = orient(aj, bj, bi)
    eps = tol * extent
    d1, d2, d3, d4 = (np.where(np.abs(v) <= eps, 0.0, v) for v in (d1, d2, d3, d4))

    def within(p, q, r):
        return (
            (np.minimum(p[..., 0], q[..., 0]) - tol <= r[..., 0])
            & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]) + tol)
            & (np.minimum(p[..., 1], q[..., 1]) - tol <= r[..., 1])
            & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1]) + tol)
        )

    hit = ((d1 * d2 < 0) & (d3 * d4 < 0)) | (
        ((d1 == 0) & within(ai, bi, aj))
        | ((d2 == 0) & within(ai, bi, bj))
        | ((d3 == 0) & within(aj, bj, ai))
        | ((d4 == 0) & within(aj, bj, bi))
    )
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    return not bool(np.any(hit[i[keep], j[keep]]))


@dataclass(frozen=True, eq=False)
class PlanarPolygon:
    """A named simple polygon in planar meters, stored counter-clockwise."""

    name: str
    ring: np.ndarray

    def __post_init__(self):
        ring = as_ring(self.ring)
        if len(ring) < 3:
            raise InvalidPolygon(f"{self.name!r}: polygon needs at least 3 vertices")
        if not np.all(np.isfinite(ring)):
            raise InvalidPolygon(f"{self.name!r}: non-finite vertex")
        if not ring_is_simple(ring):
            raise InvalidPolygon(f"{self.name!r}: ring is not simple")
        if signed_area(ring) < 0:
            ring = np.vstack((ring[:1], ring[:0:-1]))
        ring.setflags(write=False)
        object.__setattr__(self, "ring", ring)

    @classmethod
    def _trusted(cls, name: str, ring: np.ndarray) -> "PlanarPolygon":
        # Skips validation; callers guarantee a simple CCW ring.
        obj = object.__new__(cls)
        ring = np.ascontiguousarray(ring, dtype=float)
        ring.setflags(write=False)
        object.__setattr__(obj, "name", name)
        object.__setattr__(obj, "ring", ring)
        return obj

    def translated(self, dx: float, dy: float) -> "PlanarPolygon":
        return PlanarPolygon._trusted(self.name, self.ring + (dx, dy))

    def renamed(self, name: str) -> "PlanarPolygon":
        return PlanarPolygon._trusted(name, self.ring)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.ring.min(axis=0)
        hi = self.ring.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def __len__(self):
        return len(self.ring)


def polygon_area(P: PlanarPolygon) -> float:
    return signed_area(P.ring)


def polygon_centroid(P: PlanarPolygon) -> tuple[float, float]:
    """Area-weighted centroid."""
    (loc,), origin = _local(P.ring)
    nxt = np.roll(loc, -1, axis=0)
    c = _edge_terms(loc)
    a6 = 3.0 * math.fsum(c)
    cx = math.fsum((loc[:, 0] + nxt[:, 0]) * c) / a6
    cy = math.fsum((loc[:, 1] + nxt[:, 1]) * c) / a6
    return float(cx + origin[0]), float(cy + origin[1])


def points_in_ring(points: np.ndarray, ring: np.ndarray, tol: float = LENGTH_TOL) -> np.ndarray:
    """Vectorized even-odd membership; points on the boundary count as inside.

    ``points`` may have any leading shape ending in 2.
    """
    points = np.asarray(points, dtype=float)
    x = points[..., 0]
    y = points[..., 1]
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    n = len(ring)
    for k in range(n):
        x1, y1 = ring[k]
        x2, y2 = ring[(k + 1) % n]
        dy = y2 - y1
        if dy != 0.0:
            crosses = (y1 > y) != (y2 > y)
            xint = x1 + (y - y1) * ((x2 - x1) / dy)
            inside ^= crosses & (x < xint)
        seg_len = math.hypot(x2 - x1, dy)
        cross = (x2 - x1) * (y - y1) - dy * (x - x1)
        on_edge |= (
            (np.abs(cross) <= tol * seg_len)
            & (x >= min(x1, x2) - tol)
            & (x <= max(x1, x2) + tol)
            & (y >= min(y1, y2) - tol)
            & (y <= max(y1, y2) + tol)
        )
    return inside | on_edge


def point_in_polygon(p: Sequence[float], P: PlanarPolygon) -> bool:
    return bool(points_in_ring(np.asarray(p, dtype=float), P.ring))


def distance_to_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the ring boundary."""
    points = np.asarray(points, dtype=float)
    best = np.full(points.shape[:-1], np.inf)
    n = len(ring)
    for k in range(n):
        a = ring[k]
        d = ring[(k + 1) % n] - a
        w = points - a
        t = np.clip((w @ d) / float(d @ d), 0.0, 1.0)
        proj = w - t[..., None] * d
        best = np.minimum(best, np.hypot(proj[..., 0], proj[..., 1]))
    return best


# Classification codes for boundary pieces.
_OUTSIDE, _INSIDE, _SHARED_SAME, _SHARED_OPPOSITE = 0, 1, 2, 3


def _split_pieces(A: np.ndarray, B: np.ndarray, tol: float):
    """Split every edge of A at its contacts with B's boundary.

    Returns start points, end points and edge directions of the pieces.
    """
    a0 = A
    a1 = np.roll(A, -1, axis=0)
    d = a1 - a0
    b0 = B
    b1 = np.roll(B, -1, axis=0)
    e = b1 - b0

    dd = (d * d).sum(axis=1)
    dlen = np.sqrt(dd)
    elen = np.sqrt((e * e).sum(axis=1))

    w = b0[None, :, :] - a0[:, None, :]
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    w_x_e = w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]
    w_x_d = w[..., 0] * d[:, None, 1] - w[..., 1] * d[:, None, 0]
    parallel = np.abs(denom) <= 1e-12 * dlen[:, None] * elen[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(parallel, np.nan, w_x_e / denom)
        u = np.where(parallel, np.nan, w_x_d / denom)
    s_tol = tol / dlen[:, None]
    u_tol = tol / elen[None, :]
    crossing = (
        ~parallel
        & (s >= -s_tol) & (s <= 1 + s_tol)
        & (u >= -u_tol) & (u <= 1 + u_tol)
    )
    # Collinear overlaps contribute B's endpoints projected onto A's edge.
    collinear = parallel & (np.abs(w_x_d) <= tol * dlen[:, None])
    s_b0 = (w * d[:, None, :]).sum(axis=2) / dd[:, None]
    s_b1 = ((b1[None, :, :] - a0[:, None, :]) * d[:, None, :]).sum(axis=2) / dd[:, None]

    starts, ends, dirs = [], [], []
    for i in range(len(A)):
        cuts = [s[i, crossing[i]], s_b0[i, collinear[i]], s_b1[i, collinear[i]]]
        ts = np.concatenate(cuts)
        eps = tol / dlen[i]
        ts = ts[(ts > eps) & (ts < 1 - eps)]
        ts = np.unique(ts)
        if len(ts) > 1:
            keep = np.concatenate(([True], np.diff(ts) > eps))
            ts = ts[keep]
        pts = [a0[i]]
        pts.extend(a0[i] + t * d[i] for t in ts)
        pts.append(a1[i])
        pts = np.array(pts)
        starts.append(pts[:-1])
        ends.append(pts[1:])
        dirs.append(np.broadcast_to(d[i], (len(pts) - 1, 2)))
    return np.vstack(starts), np.vstack(ends), np.vstack(dirs)


def _classify(mids: np.ndarray, dirs: np.ndarray, ring: np.ndarray, tol: float) -> np.ndarray:
    codes = np.where(points_in_ring(mids, ring, tol=0.0), _INSIDE, _OUTSIDE)
    n = len(ring)
    for k in range(n):
        a = ring[k]
        e = ring[(k + 1) % n] - a
        w = mids - a
        elen = math.hypot(*e)
        t = (w @ e) / (elen * elen)
        perp = np.abs(w[:, 0] * e[1] - w[:, 1] * e[0]) / elen
        on = (perp <= tol) & (t >= 0.0) & (t <= 1.0)
        same = (dirs @ e) > 0
        codes = np.where(on, np.where(same, _SHARED_SAME, _SHARED_OPPOSITE), codes)
    return codes


def _intersection_terms(A: np.ndarray, B: np.ndarray, tol: float) -> list[float]:
    terms = []
    for first, (X, Y) in enumerate(((A, B), (B, A))):
        p, q, dirs = _split_pieces(X, Y, tol)
        codes = _classify(0.5 * (p + q), dirs, Y, tol)
        take = codes == _INSIDE
        if first == 0:
            take |= codes == _SHARED_SAME
        terms.extend((p[take, 0] * q[take, 1] - q[take, 0] * p[take, 1]).tolist())
    return terms


def _intersection_area_local(A: np.ndarray, B: np.ndarray, area_a: float, area_b: float) -> float:
    extent = float(np.ptp(np.vstack((A, B)), axis=0).max())
    tol = LENGTH_TOL * max(1.0, extent)
    area = 0.5 * math.fsum(_intersection_terms(A, B, tol))
    upper = min(area_a, area_b)
    slack = 1e-9 * max(upper, 1.0)
    if not math.isfinite(area) or area < -slack or area > upper + slack:
        raise NumericalDegeneracy(f"intersection area {area!r} outside [0, {upper!r}]")
    return min(max(area, 0.0), upper)


def _bbox_disjoint(A: np.ndarray, B: np.ndarray) -> bool:
    return bool(
        np.any(A.max(axis=0) < B.min(axis=0)) or np.any(B.max(axis=0) < A.min(axis=0))
    )


def polygon_intersection_area(P: PlanarPolygon, Q: PlanarPolygon) -> float:
    if _bbox_disjoint(P.ring, Q.ring):
        return 0.0
    (A, B), _ = _local(P.ring, Q.ring)
    area_a = 0.5 * math.fsum(_edge_terms(A))
    area_b = 0.5 * math.fsum(_edge_terms(B))
    return _intersection_area_local(A, B, area_a, area_b)


def polygon_iou(P: PlanarPolygon, Q: PlanarPolygon) -> float:
    """Intersection over union of two polygons, in [0, 1]."""
    if _bbox_disjoint(P.ring, Q.ring):
        return 0.0
    (A, B), _ = _local(P.ring, Q.ring)
    area_a = 0.5 * math.fsum(_edge_terms(A))
    area_b = 0.5 * math.fsum(_edge_terms(B))
    inter = _intersection_area_local(A, B, area_a, area_b)
    union = area_a + area_b - inter
    return min(1.0, inter / union)


def centroid_distance(P: PlanarPolygon, Q: PlanarPolygon) -> float:
    px, py = polygon_centroid(P)
    qx, qy = polygon_centroid(Q)
    return math.hypot(px - qx, py - qy)
