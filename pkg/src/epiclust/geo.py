"""Geographic primitives: points, distance metrics, projection and a radius index.

All distances are in kilometres except for the ``euclid`` metric, which works
on raw (lat, lon) degree pairs and is unitless.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError, InvalidParameterError

EARTH_RADIUS_KM = 6371.0

# How a figure-space radius (cm on a printed map) would convert to km.
MAP_SCALE_KM_PER_CM = 5.0

HAVERSINE = "haversine"
EQUIRECT = "equirect"
EUCLID = "euclid"
METRIC_KINDS = (HAVERSINE, EQUIRECT, EUCLID)

# Relative and absolute widening of candidate searches; the exact metric
# filter runs afterwards, so this only has to cover rounding.
_SLACK_REL = 1e-9
_SLACK_ABS = 1e-9


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise InvalidInputError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise InvalidInputError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise InvalidInputError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class CaseRecord:
    """One geocoded case. ``imported`` marks cases infected outside the district."""

    id: str
    location: GeoPoint
    tehsil: str
    onset_date: date | None = None
    imported: bool = False


def dms_to_decimal(degrees: int, minutes: int = 0, seconds: float = 0.0) -> float:
    """Convert degrees/minutes/seconds to decimal degrees.

    Out-of-range sexagesimal fields carry over, so 32°34'60" is read as
    32°35'00".
    """
    sign = -1.0 if degrees < 0 else 1.0
    total_seconds = abs(degrees) * 3600 + minutes * 60 + seconds
    return sign * total_seconds / 3600.0


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on a sphere of radius 6371.0 km."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def project_equirectangular(p: GeoPoint, ref_lat: float, ref_lon: float = 0.0) -> tuple[float, float]:
    """Project to a local plane in km, origin at (ref_lat, ref_lon)."""
    if not math.isfinite(ref_lat) or abs(ref_lat) >= 90.0:
        raise InvalidParameterError(f"degenerate projection at reference latitude {ref_lat}")
    x = EARTH_RADIUS_KM * math.radians(p.lon - ref_lon) * math.cos(math.radians(ref_lat))
    y = EARTH_RADIUS_KM * math.radians(p.lat - ref_lat)
    return x, y


def unproject_equirectangular(x: float, y: float, ref_lat: float, ref_lon: float = 0.0) -> GeoPoint:
    if abs(ref_lat) >= 90.0:
        raise InvalidParameterError(f"degenerate projection at reference latitude {ref_lat}")
    lat = ref_lat + math.degrees(y / EARTH_RADIUS_KM)
    lon = ref_lon + math.degrees(x / (EARTH_RADIUS_KM * math.cos(math.radians(ref_lat))))
    return GeoPoint(lat, lon)


@dataclass(frozen=True)
class Metric:
    """A distance metric over GeoPoints.

    ``equirect`` measures Euclidean km in the plane tangent at ``ref_lat``.
    Without a reference latitude each pair uses its mid latitude; call
    :meth:`resolve` to pin the reference to a dataset's mean latitude, which
    is what every clustering routine does before measuring anything.
    """

    kind: str = HAVERSINE
    ref_lat: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in METRIC_KINDS:
            raise InvalidParameterError(f"unknown metric {self.kind!r}; expected one of {METRIC_KINDS}")
        if self.ref_lat is not None and (not math.isfinite(self.ref_lat) or abs(self.ref_lat) >= 90.0):
            raise InvalidParameterError(f"degenerate projection at reference latitude {self.ref_lat}")

    @property
    def unit(self) -> str:
        return "deg" if self.kind == EUCLID else "km"

    def resolve(self, points: Sequence[GeoPoint]) -> Metric:
        if self.kind != EQUIRECT or self.ref_lat is not None:
            return self
        ref = sum(p.lat for p in points) / len(points) if points else 0.0
        return replace(self, ref_lat=ref)

    def distance(self, a: GeoPoint, b: GeoPoint) -> float:
        if self.kind == HAVERSINE:
            return haversine_distance(a, b)
        if self.kind == EUCLID:
            return math.hypot(a.lat - b.lat, a.lon - b.lon)
        ref = self.ref_lat if self.ref_lat is not None else (a.lat + b.lat) / 2
        dx = EARTH_RADIUS_KM * math.radians(b.lon - a.lon) * math.cos(math.radians(ref))
        dy = EARTH_RADIUS_KM * math.radians(b.lat - a.lat)
        return math.hypot(dx, dy)

    def embed(self, points: Iterable[GeoPoint]) -> np.ndarray:
        """Coordinates in which plain Euclidean distance never exceeds this metric.

        Haversine points go on the 3-D sphere (chord <= arc); the planar
        metrics embed isometrically.
        """
        pts = list(points)
        lat = np.radians([p.lat for p in pts]) if pts else np.zeros(0)
        lon = np.radians([p.lon for p in pts]) if pts else np.zeros(0)
        if self.kind == HAVERSINE:
            return EARTH_RADIUS_KM * np.column_stack(
                (np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat))
            )
        if self.kind == EUCLID:
            return np.array([(p.lat, p.lon) for p in pts], dtype=float).reshape(-1, 2)
        if self.ref_lat is None:
            raise InvalidParameterError("equirect metric must be resolved before embedding")
        return EARTH_RADIUS_KM * np.column_stack((lon * math.cos(math.radians(self.ref_lat)), lat))


def as_metric(metric: Metric | str) -> Metric:
    return metric if isinstance(metric, Metric) else Metric(metric)


def _check_eps(eps: float) -> float:
    try:
        eps = float(eps)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"eps must be a number, got {eps!r}") from exc
    if not math.isfinite(eps) or eps <= 0:
        raise InvalidParameterError(f"eps must be positive and finite, got {eps}")
    return eps


class SpatialIndex:
    """Exact closed-ball radius queries over a fixed point set.

    With ``cell_size`` a uniform grid (cells of that edge length in the
    metric's embedding) is used, otherwise a k-d tree. Both only generate
    candidates; membership is decided with ``metric.distance`` so results
    match a linear scan exactly.
    """

    def __init__(self, points: Sequence[GeoPoint], metric: Metric | str = HAVERSINE,
                 cell_size: float | None = None):
        self.points: tuple[GeoPoint, ...] = tuple(points)
        self.metric = as_metric(metric).resolve(self.points)
        self.cell_size = None if cell_size is None else _check_eps(cell_size)
        self._coords = self.metric.embed(self.points)
        self._tree = None
        self._cells: dict[tuple[int, ...], list[int]] = {}
        if not self.points:
            return
        if self.cell_size is None:
            self._tree = cKDTree(self._coords)
        else:
            cells = defaultdict(list)
            keys = np.floor(self._coords / self.cell_size).astype(np.int64)
            for i, key in enumerate(map(tuple, keys)):
                cells[key].append(i)
            self._cells = dict(cells)

    def __len__(self) -> int:
        return len(self.points)

    def _candidates(self, center: np.ndarray, radius: float) -> Iterable[int]:
        if self._tree is not None:
            return self._tree.query_ball_point(center, radius)
        lo = np.floor((center - radius) / self.cell_size).astype(np.int64)
        hi = np.floor((center + radius) / self.cell_size).astype(np.int64)
        span = int(np.prod(hi - lo + 1))
        if span >= len(self._cells):
            lo, hi = lo.tolist(), hi.tolist()
            keys = [k for k in self._cells if all(l <= c <= h for c, l, h in zip(k, lo, hi))]
        else:
            keys = itertools.product(*[range(l, h + 1) for l, h in zip(lo.tolist(), hi.tolist())])
        out: list[int] = []
        for key in keys:
            out.extend(self._cells.get(key, ()))
        return out

    def _query(self, center: GeoPoint, embedded: np.ndarray | None, eps: float) -> list[tuple[int, float]]:
        if not self.points:
            return []
        dist = self.metric.distance
        pts = self.points
        if eps == math.inf:
            candidates: Iterable[int] = range(len(pts))
        else:
            if embedded is None:
                embedded = self.metric.embed([center])[0]
            candidates = self._candidates(embedded, eps * (1 + _SLACK_REL) + _SLACK_ABS)
        out = []
        for i in sorted(candidates):
            d = dist(center, pts[i])
            if d <= eps:
                out.append((i, d))
        return out

    def query_with_distances(self, center: GeoPoint, eps: float) -> list[tuple[int, float]]:
        """(index, distance) pairs for the closed ball around ``center``, by index.

        ``eps`` may be ``math.inf`` here, meaning every point.
        """
        if not (isinstance(eps, (int, float)) and eps == math.inf):
            eps = _check_eps(eps)
        return self._query(center, None, eps)

    def radius_query(self, center: GeoPoint, eps: float) -> list[int]:
        """Indices of all points within ``eps`` of ``center`` (closed ball), ascending."""
        return [i for i, _ in self._query(center, None, _check_eps(eps))]

    def neighbors(self, i: int, eps: float) -> list[int]:
        return [j for j, _ in self._query(self.points[i], self._coords[i], _check_eps(eps))]


def build_index(points: Sequence[GeoPoint], metric: Metric | str = HAVERSINE,
                eps: float | None = None) -> SpatialIndex:
    """Build a radius index; a known ``eps`` selects the grid structure."""
    for p in points:
        if not (math.isfinite(p.lat) and math.isfinite(p.lon)):
            raise InvalidInputError(f"non-finite coordinate in {p}")
    return SpatialIndex(points, metric, cell_size=eps)


def radius_query(index: SpatialIndex, center: GeoPoint, eps: float) -> list[int]:
    return index.radius_query(center, eps)


def linear_scan(points: Sequence[GeoPoint], metric: Metric, center: GeoPoint, eps: float) -> list[int]:
    """Reference neighbourhood by brute force."""
    eps = _check_eps(eps)
    return [i for i, p in enumerate(points) if metric.distance(center, p) <= eps]
