"""Point cloud loading, ground removal, 2D flattening and occupancy rasterization."""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import AllPointsRemoved, EmptyCloud, MalformedRecord, UnsupportedFormat


@dataclass(frozen=True, eq=False)
class PointCloud3:
    """``points`` is (N, 3); ``colors`` holds any extra per-point columns or None."""

    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=float).reshape(len(pts), -1)
            object.__setattr__(self, "colors", cols)

    def __len__(self):
        return len(self.points)

    def subset(self, mask: np.ndarray) -> "PointCloud3":
        return PointCloud3(self.points[mask], None if self.colors is None else self.colors[mask])


@dataclass(frozen=True, eq=False)
class PointSet2:
    points: np.ndarray

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Per-cell point counts on a lattice aligned to multiples of ``cell_size``.

    ``counts[row, col]`` covers x in ``origin_x + col * cell_size`` and y in
    ``origin_y + row * cell_size``, each a half-open cell.
    """

    origin: tuple[float, float]
    cell_size: float
    width: int
    height: int
    counts: np.ndarray
    min_points: int

    @property
    def occupied(self) -> np.ndarray:
        return self.counts >= self.min_points

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        ox, oy = self.origin
        return ox, oy, ox + self.width * self.cell_size, oy + self.height * self.cell_size

    def cell_centers(self) -> np.ndarray:
        """(height, width, 2) array of cell center coordinates."""
        ox, oy = self.origin
        xs = ox + (np.arange(self.width) + 0.5) * self.cell_size
        ys = oy + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack((gx, gy), axis=-1)


@dataclass(frozen=True)
class GroundConfig:
    """Ground filter settings.

    ``global`` keeps points with ``z > z0``. ``local`` bins x-y into square
    cells of side ``cell``, takes each cell's minimum z, lowers it to the
    smallest cell minimum within ``window`` meters (so cells entirely covered
    by a roof still see the surrounding ground), and keeps points with
    ``z > ground + height``. ``window=0`` uses the bare per-cell minimum.
    """

    mode: str = "local"
    z0: float = 0.0
    cell: float = 5.0
    height: float = 1.5
    window: float = 30.0

    def __post_init__(self):
        if self.mode not in ("global", "local"):
            raise ValueError(f"unknown ground mode {self.mode!r}")
        if self.cell <= 0 or self.height < 0 or self.window < 0:
            raise ValueError("ground cell must be > 0, height and window >= 0")


def _parse_xyz(text: str) -> PointCloud3:
    rows = []
    extras = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        # Tab separates a trailing label column in labeled output.
        fields = stripped.split("\t", 1)[0].split()
        if len(fields) < 3:
            raise MalformedRecord(line_no, f"expected at least 3 columns, got {len(fields)}")
        try:
            rows.append((float(fields[0]), float(fields[1]), float(fields[2])))
        except ValueError as exc:
            raise MalformedRecord(line_no, str(exc)) from exc
        try:
            extras.append(tuple(float(f) for f in fields[3:]))
        except ValueError:
            extras.append(None)
    if not rows:
        raise EmptyCloud("no points in XYZ input")
    colors = None
    widths = {None if e is None else len(e) for e in extras}
    if len(widths) == 1 and None not in widths and widths != {0}:
        colors = np.array(extras, dtype=float)
    return PointCloud3(np.array(rows, dtype=float), colors)


_COLOR_PROPS = ("red", "green", "blue", "alpha")


def _parse_ply(text: str) -> PointCloud3:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedRecord(1, "missing 'ply' magic")
    elements: list[tuple[str, int, list[str]]] = []
    fmt = None
    i = 1
    while True:
        if i >= len(lines):
            raise MalformedRecord(i, "missing end_header")
        parts = lines[i].split()
        i += 1
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1] if len(parts) > 1 else None
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MalformedRecord(i, "property before element")
            elements[-1][2].append(parts[-1])
        elif parts[0] == "end_header":
            break
    if fmt != "ascii":
        raise UnsupportedFormat(f"PLY format {fmt!r} is not supported (ascii only)")

    points = colors = None
    for name, count, props in elements:
        block = lines[i : i + count]
        if len(block) < count:
            raise MalformedRecord(i + len(block) + 1, f"expected {count} {name} records")
        if name == "vertex":
            try:
                idx = [props.index(c) for c in "xyz"]
            except ValueError as exc:
                raise MalformedRecord(i, "vertex element lacks x/y/z") from exc
            cidx = [props.index(c) for c in _COLOR_PROPS if c in props]
            pts = np.empty((count, 3))
            cols = np.empty((count, len(cidx)))
            for k, line in enumerate(block):
                fields = line.split()
                if len(fields) < len(props):
                    raise MalformedRecord(i + k + 1, f"expected {len(props)} values")
                try:
                    pts[k] = [float(fields[j]) for j in idx]
                    cols[k] = [float(fields[j]) for j in cidx]
                except ValueError as exc:
                    raise MalformedRecord(i + k + 1, str(exc)) from exc
            points = pts
            colors = cols if cidx else None
        i += count
    if points is None or len(points) == 0:
        raise EmptyCloud("PLY input has no vertices")
    return PointCloud3(points, colors)


def load_cloud(source: Union[bytes, str, io.IOBase], format: str = "xyz") -> PointCloud3:
    """Read an ASCII XYZ or ASCII PLY point cloud.

    Raises:
        UnsupportedFormat: unknown ``format`` or a binary PLY.
        MalformedRecord: a record cannot be parsed; carries the 1-based line number.
        EmptyCloud: no points were found.
    """
    if hasattr(source, "read"):
        source = source.read()
    text = source.decode("utf-8") if isinstance(source, (bytes, bytearray)) else source
    if format == "xyz":
        return _parse_xyz(text)
    if format in ("ply", "ply-ascii"):
        return _parse_ply(text)
    raise UnsupportedFormat(f"unknown cloud format {format!r}")


def format_for_path(path) -> str:
    return "ply" if str(path).lower().endswith(".ply") else "xyz"


def write_xyz(cloud: PointCloud3, labels: Optional[Sequence[str]] = None) -> bytes:
    """Serialize as ASCII XYZ; labels, if given, go after a tab on each line."""
    cols = cloud.points if cloud.colors is None else np.hstack((cloud.points, cloud.colors))
    out = io.StringIO()
    for k, row in enumerate(cols.tolist()):
        out.write(" ".join(map(repr, row)))
        if labels is not None:
            out.write("\t")
            out.write(labels[k])
        out.write("\n")
    return out.getvalue().encode("utf-8")


def read_labels(source: Union[bytes, str]) -> list[str]:
    """Labels from the trailing tab column of a labeled XYZ file."""
    text = source.decode("utf-8") if isinstance(source, (bytes, bytearray)) else source
    out = []
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        out.append(line.split("\t", 1)[1] if "\t" in line else "")
    return out


def _cell_index(xy: np.ndarray, size: float) -> np.ndarray:
    return np.floor(xy / size).astype(np.int64)


def remove_ground(cloud: PointCloud3, cfg: GroundConfig = GroundConfig()) -> PointCloud3:
    """Drop ground points by elevation thresholding."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot remove ground from an empty cloud")
    z = cloud.points[:, 2]
    if cfg.mode == "global":
        keep = z > cfg.z0
    else:
        idx = _cell_index(cloud.points[:, :2], cfg.cell)
        idx -= idx.min(axis=0)
        shape = tuple(idx.max(axis=0) + 1)
        cell_min = np.full(shape, np.inf)
        np.minimum.at(cell_min, (idx[:, 0], idx[:, 1]), z)
        reach = int(math.ceil(cfg.window / cfg.cell))
        if reach > 0:
            cell_min = ndimage.minimum_filter(
                cell_min, size=2 * reach + 1, mode="constant", cval=np.inf
            )
        keep = z > cell_min[idx[:, 0], idx[:, 1]] + cfg.height
    if not keep.any():
        warnings.warn("ground removal discarded every point", AllPointsRemoved, stacklevel=2)
    return cloud.subset(keep)


def flatten(cloud: PointCloud3) -> PointSet2:
    return PointSet2(cloud.points[:, :2].copy())


def build_occupancy(
    pts: PointSet2,
    cell_size: float = 1.0,
    min_points: int = 3,
    window: Optional[tuple[float, float, float, float]] = None,
) -> OccupancyGrid:
    """Count points per cell over ``window`` = (xmin, ymin, xmax, ymax).

    The window is snapped outward to whole cells of the global lattice, so
    grids built over different windows share cell boundaries.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if min_points < 1:
        raise ValueError("min_points must be >= 1")
    xy = np.asarray(pts.points, dtype=float).reshape(-1, 2)
    if window is None:
        if len(xy) == 0:
            raise ValueError("window required for an empty point set")
        window = (*xy.min(axis=0), *(xy.max(axis=0) + cell_size))
    xmin, ymin, xmax, ymax = window
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"empty window {window}")
    c0 = math.floor(xmin / cell_size)
    r0 = math.floor(ymin / cell_size)
    width = max(math.ceil(xmax / cell_size) - c0, 1)
    height = max(math.ceil(ymax / cell_size) - r0, 1)

    idx = _cell_index(xy, cell_size) - (c0, r0)
    inside = (idx[:, 0] >= 0) & (idx[:, 0] < width) & (idx[:, 1] >= 0) & (idx[:, 1] < height)
    idx = idx[inside]
    flat = np.bincount(idx[:, 1] * width + idx[:, 0], minlength=width * height)
    counts = flat.reshape(height, width)
    return OccupancyGrid((c0 * cell_size, r0 * cell_size), float(cell_size), width, height, counts, int(min_points))
