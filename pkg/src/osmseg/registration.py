"""Least-squares affine registration from control-point pairs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .cloud import PointSet2
from .errors import CollinearSources, InsufficientPairs
from .geometry import PlanarPolygon, ring_is_simple, signed_area
from .geoproject import wgs84_to_mercator

CONDITION_LIMIT = 1e10


class ControlPointPair(NamedTuple):
    source: tuple[float, float]
    target: tuple[float, float]


@dataclass(frozen=True, eq=False)
class Affine2D:
    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float).reshape(2, 2)
        t = np.array(self.translation, dtype=float).reshape(2)
        if np.linalg.det(lin) == 0.0:
            raise ValueError("affine linear part must be invertible")
        lin.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls(np.eye(2), np.zeros(2))

    def __call__(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy @ self.linear.T + self.translation

    def inverse(self) -> "Affine2D":
        inv = np.linalg.inv(self.linear)
        return Affine2D(inv, -inv @ self.translation)

    def to_json(self) -> dict:
        return {"linear": self.linear.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Affine2D":
        return cls(data["linear"], data["translation"])


@dataclass(frozen=True)
class ResidualReport:
    residuals: tuple[tuple[float, float], ...]
    norms: tuple[float, ...]
    rms: float

    def to_json(self) -> dict:
        return {"rms": self.rms, "residuals": [list(r) for r in self.residuals], "norms": list(self.norms)}


def _solve_normal(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    normal = design.T @ design
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise CollinearSources(f"control-point sources are degenerate (condition {cond:.3g})")
    return np.linalg.solve(normal, design.T @ rhs)


def estimate_affine(
    pairs: Sequence[ControlPointPair], model: str = "affine"
) -> tuple[Affine2D, ResidualReport]:
    """Fit ``target ~ A @ source + t`` by least squares.

    ``model="affine"`` fits all 6 parameters; ``"similarity"`` restricts the
    linear part to rotation and uniform scale (4 parameters). Sources are
    centered and scaled before forming the normal equations, which keeps the
    system well conditioned for Mercator-sized coordinates.

    Raises:
        InsufficientPairs: fewer than 3 pairs.
        CollinearSources: the normalized normal matrix has condition > 1e10.
    """
    if len(pairs) < 3:
        raise InsufficientPairs(f"need at least 3 control pairs, got {len(pairs)}")
    src = np.array([p.source for p in pairs], dtype=float)
    dst = np.array([p.target for p in pairs], dtype=float)
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("control points must be finite")

    mean = src.mean(axis=0)
    scale = float(np.sqrt(((src - mean) ** 2).sum(axis=1).mean()))
    if scale == 0.0:
        raise CollinearSources("all control-point sources coincide")
    s = (src - mean) / scale
    n = len(s)

    if model == "affine":
        design = np.column_stack((s, np.ones(n)))
        sol = _solve_normal(design, dst)  # (3, 2)
        lin_n = sol[:2].T
        t_n = sol[2]
    elif model == "similarity":
        design = np.zeros((2 * n, 4))
        design[0::2] = np.column_stack((s[:, 0], -s[:, 1], np.ones(n), np.zeros(n)))
        design[1::2] = np.column_stack((s[:, 1], s[:, 0], np.zeros(n), np.ones(n)))
        a, b, tx, ty = _solve_normal(design, dst.reshape(-1))
        lin_n = np.array([[a, -b], [b, a]])
        t_n = np.array([tx, ty])
    else:
        raise ValueError(f"unknown registration model {model!r}")

    linear = lin_n / scale
    affine = Affine2D(linear, t_n - linear @ mean)
    res = affine(src) - dst
    norms = np.hypot(res[:, 0], res[:, 1])
    report = ResidualReport(
        tuple(map(tuple, res.tolist())), tuple(norms.tolist()), float(np.sqrt(np.mean(norms**2)))
    )
    return affine, report


def apply_affine(A: Affine2D, geometry):
    """Apply to a point, an (N, 2) array, a PointSet2 or a PlanarPolygon."""
    if isinstance(geometry, PlanarPolygon):
        ring = A(geometry.ring)
        if not ring_is_simple(ring):
            raise ValueError(f"{geometry.name!r}: transformed ring is not simple")
        if signed_area(ring) < 0:
            ring = np.vstack((ring[:1], ring[:0:-1]))
        return PlanarPolygon._trusted(geometry.name, ring)
    if isinstance(geometry, PointSet2):
        return PointSet2(A(geometry.points))
    arr = np.asarray(geometry, dtype=float)
    out = A(arr)
    return tuple(out.tolist()) if arr.ndim == 1 else out


def read_control_points(source: Union[bytes, str]) -> list[ControlPointPair]:
    """Parse the control-point CSV (header lon,lat,model_x,model_y).

    Geographic sources are projected to Mercator meters.
    """
    text = source.decode("utf-8") if isinstance(source, (bytes, bytearray)) else source
    reader = csv.DictReader(io.StringIO(text))
    missing = {"lon", "lat", "model_x", "model_y"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"control-point file lacks columns: {sorted(missing)}")
    pairs = []
    for row in reader:
        src = wgs84_to_mercator((float(row["lon"]), float(row["lat"])))
        pairs.append(ControlPointPair(tuple(src), (float(row["model_x"]), float(row["model_y"]))))
    return pairs
