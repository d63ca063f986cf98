"""k-means, k-medoids (PAM), DBSCAN and OPTICS over GeoPoints.

Every routine is deterministic: ties go to the lowest point index, and the
only randomness (k-means++ seeding) is drawn from a PCG64 stream seeded by the
caller.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .geo import (
    EUCLID,
    GeoPoint,
    Metric,
    SpatialIndex,
    as_metric,
    build_index,
    project_equirectangular,
    unproject_equirectangular,
)

NOISE = -1
UNDEFINED = math.inf


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _positive_radius(name: str, value, allow_inf: bool = False) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"{name} must be a number, got {value!r}") from exc
    if math.isnan(value) or value <= 0 or (value == math.inf and not allow_inf):
        raise InvalidParameterError(f"{name} must be positive{'' if allow_inf else ' and finite'}, got {value}")
    return value


def _seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or not 0 <= value < 2**64:
        raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class KMeansParams:
    k: int
    max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        _positive_int("k", self.k)
        _positive_int("max_iter", self.max_iter)
        if not (math.isfinite(self.tol) and self.tol >= 0):
            raise InvalidParameterError(f"tol must be non-negative, got {self.tol}")
        _seed(self.seed)


@dataclass(frozen=True)
class KMedoidsParams:
    k: int
    max_iter: int = 100
    seed: int = 0
    restarts: int = 8

    def __post_init__(self):
        _positive_int("k", self.k)
        _positive_int("max_iter", self.max_iter)
        if isinstance(self.restarts, bool) or not isinstance(self.restarts, int) or self.restarts < 0:
            raise InvalidParameterError(f"restarts must be a non-negative integer, got {self.restarts!r}")
        _seed(self.seed)


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 3

    def __post_init__(self):
        object.__setattr__(self, "eps", _positive_radius("eps", self.eps))
        _positive_int("min_pts", self.min_pts)


@dataclass(frozen=True)
class OpticsParams:
    max_eps: float = math.inf
    min_pts: int = 3

    def __post_init__(self):
        object.__setattr__(self, "max_eps", _positive_radius("max_eps", self.max_eps, allow_inf=True))
        _positive_int("min_pts", self.min_pts)


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-point labels; ``NOISE`` (-1) marks points outside every cluster.

    ``objective`` is WCSS for k-means and total distance for k-medoids;
    ``trace`` records it after every iteration (k-means) or accepted swap
    (k-medoids, starting from the BUILD cost). ``centers`` holds centroid or
    medoid locations, ``medoids`` the medoid point indices and ``core`` the
    core-point flags of density methods.
    """

    labels: tuple[int, ...]
    num_clusters: int
    iterations: int = 0
    converged: bool = True
    objective: float | None = None
    trace: tuple[float, ...] = ()
    centers: tuple[GeoPoint, ...] = ()
    medoids: tuple[int, ...] = ()
    core: tuple[bool, ...] = ()

    @property
    def noise_count(self) -> int:
        return sum(1 for label in self.labels if label == NOISE)


@dataclass(frozen=True)
class ReachabilityPlot:
    """OPTICS output.

    ``reachability[i]`` belongs to the point ``ordering[i]``;
    ``core_distance[p]`` is indexed by point. ``UNDEFINED`` is ``math.inf``.
    """

    ordering: tuple[int, ...]
    reachability: tuple[float, ...]
    core_distance: tuple[float, ...]
    max_eps: float
    min_pts: int
    unit: str = "km"

    def reachability_by_point(self) -> list[float]:
        out = [UNDEFINED] * len(self.ordering)
        for p, r in zip(self.ordering, self.reachability):
            out[p] = r
        return out


def _check_points(points: Sequence[GeoPoint]) -> None:
    if len(points) == 0:
        raise InvalidInputError("cannot cluster an empty point set")


def _check_k(k: int, n: int) -> None:
    if k > n:
        raise InvalidParameterError(f"k={k} exceeds the number of points ({n})")


def planar_coordinates(points: Sequence[GeoPoint], metric: Metric) -> tuple[np.ndarray, tuple[float, float]]:
    """Coordinates in which k-means takes means and measures distance.

    Geodesic metrics use the equirectangular plane at the dataset's mean
    latitude (origin at the mean coordinate); ``euclid`` uses raw degrees.
    Returns the array and the (lat, lon) origin for mapping centroids back.
    """
    if metric.kind == EUCLID:
        return np.array([(p.lat, p.lon) for p in points], dtype=float), (0.0, 0.0)
    ref_lat = metric.ref_lat if metric.ref_lat is not None else sum(p.lat for p in points) / len(points)
    ref_lon = sum(p.lon for p in points) / len(points)
    xy = np.array([project_equirectangular(p, ref_lat, ref_lon) for p in points], dtype=float)
    return xy, (ref_lat, ref_lon)


def _from_plane(c: np.ndarray, metric: Metric, origin: tuple[float, float]) -> GeoPoint:
    if metric.kind == EUCLID:
        return GeoPoint(float(np.clip(c[0], -90, 90)), float(np.clip(c[1], -180, 180)))
    return unproject_equirectangular(float(c[0]), float(c[1]), *origin)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # every remaining point coincides with a centre
            nxt = next(i for i in range(n) if i not in chosen)
        else:
            cum = np.cumsum(d2)
            nxt = int(np.searchsorted(cum, rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
            while d2[nxt] == 0.0:
                nxt -= 1
        chosen.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    # an emptied cluster takes the point farthest from its own centroid
    for j in range(len(centroids)):
        if np.any(labels == j):
            continue
        own = d2[np.arange(len(x)), labels]
        movable = np.bincount(labels, minlength=len(centroids))[labels] > 1
        far = int(np.argmax(np.where(movable, own, -1.0)))
        labels[far] = j
        centroids[j] = x[far]
        d2[:, j] = ((x - x[far]) ** 2).sum(axis=1)
    return labels, d2[np.arange(len(x)), labels]


def kmeans(points: Sequence[GeoPoint], params: KMeansParams, metric: Metric | str = "haversine") -> ClusterAssignment:
    """Lloyd iteration from k-means++ seeds.

    Stops once no centroid moves more than ``params.tol`` (in plane units) or
    after ``params.max_iter`` updates.
    """
    _check_points(points)
    _check_k(params.k, len(points))
    metric = as_metric(metric).resolve(points)
    x, origin = planar_coordinates(points, metric)
    rng = np.random.Generator(np.random.PCG64(params.seed))
    centroids = _kmeans_pp(x, params.k, rng)

    trace = []
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iter + 1):
        labels, cost = _assign(x, centroids)
        trace.append(float(cost.sum()))
        updated = np.array([x[labels == j].mean(axis=0) for j in range(params.k)])
        shift = float(np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max())
        centroids = updated
        if shift <= params.tol:
            converged = True
            break
    labels, cost = _assign(x, centroids)
    wcss = float(cost.sum())
    trace.append(wcss)
    return ClusterAssignment(
        labels=tuple(int(v) for v in labels),
        num_clusters=params.k,
        iterations=iterations,
        converged=converged,
        objective=wcss,
        trace=tuple(trace),
        centers=tuple(_from_plane(c, metric, origin) for c in centroids),
    )


def distance_matrix(points: Sequence[GeoPoint], metric: Metric) -> np.ndarray:
    n = len(points)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = metric.distance(points[i], points[j])
    return d


def medoid_cost(dist: np.ndarray, medoids: Sequence[int]) -> float:
    return float(dist[:, list(medoids)].min(axis=1).sum())


def _pam_build(dist: np.ndarray, k: int) -> list[int]:
    n = len(dist)
    medoids = [int(np.argmin(dist.sum(axis=0)))]
    nearest = dist[:, medoids[0]].copy()
    while len(medoids) < k:
        best, best_cost = -1, math.inf
        for i in range(n):
            if i in medoids:
                continue
            c = float(np.minimum(nearest, dist[:, i]).sum())
            if c < best_cost:
                best, best_cost = i, c
        medoids.append(best)
        nearest = np.minimum(nearest, dist[:, best])
    return medoids


def _pam_swap(dist: np.ndarray, medoids: list[int], max_iter: int) -> tuple[list[int], list[float], bool]:
    n, k = dist.shape[0], len(medoids)
    medoids = list(medoids)
    cost = medoid_cost(dist, medoids)
    trace = [cost]
    while len(trace) - 1 < max_iter:
        best_swap, best_cost = None, cost
        for pos in range(k):
            others = medoids[:pos] + medoids[pos + 1:]
            base = dist[:, others].min(axis=1) if others else np.full(n, math.inf)
            for o in range(n):
                if o in medoids:
                    continue
                c = float(np.minimum(base, dist[:, o]).sum())
                if c < best_cost:
                    best_swap, best_cost = (pos, o), c
        if best_swap is None:
            return medoids, trace, True
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost
        trace.append(cost)
    return medoids, trace, False


def kmedoids(points: Sequence[GeoPoint], params: KMedoidsParams, metric: Metric | str = "haversine") -> ClusterAssignment:
    """Partitioning Around Medoids: greedy BUILD, then best-improvement SWAP.

    A swap is accepted only when it strictly lowers the total distance of
    points to their nearest medoid. SWAP is a local search, so besides the
    BUILD start it is rerun from ``params.restarts`` random medoid sets drawn
    from ``params.seed``; the cheapest result wins, earlier runs on ties.
    """
    _check_points(points)
    n, k = len(points), params.k
    _check_k(k, n)
    metric = as_metric(metric).resolve(points)
    dist = distance_matrix(points, metric)

    starts = [_pam_build(dist, k)]
    rng = np.random.Generator(np.random.PCG64(params.seed))
    for _ in range(params.restarts):
        starts.append([int(i) for i in rng.choice(n, size=k, replace=False)])

    best = None
    for start in starts:
        medoids, trace, converged = _pam_swap(dist, start, params.max_iter)
        if best is None or trace[-1] < best[1][-1]:
            best = (medoids, trace, converged)
    medoids, trace, converged = best

    medoids = sorted(medoids)
    labels = dist[:, medoids].argmin(axis=1)
    return ClusterAssignment(
        labels=tuple(int(v) for v in labels),
        num_clusters=k,
        iterations=len(trace) - 1,
        converged=converged,
        objective=trace[-1],
        trace=tuple(trace),
        centers=tuple(points[m] for m in medoids),
        medoids=tuple(medoids),
    )


def _index_for(points: Sequence[GeoPoint], metric: Metric, index: SpatialIndex | None,
               cell: float | None) -> SpatialIndex:
    if index is None:
        return build_index(points, metric, eps=cell)
    if len(index) != len(points) or index.metric != metric:
        raise InvalidInputError("spatial index was built over different points or another metric")
    return index


def dbscan(points: Sequence[GeoPoint], params: DbscanParams, metric: Metric | str = "haversine",
           index: SpatialIndex | None = None) -> ClusterAssignment:
    """Density-based clustering with a closed eps-ball that counts the point itself.

    Points are visited in input order and clusters numbered as discovered; a
    border point reachable from several clusters stays with the first.
    """
    metric = as_metric(metric).resolve(points)
    index = _index_for(points, metric, index, params.eps)
    n = len(points)
    labels = [None] * n
    core = [False] * n
    cluster = -1
    for p in range(n):
        if labels[p] is not None:
            continue
        hood = index.neighbors(p, params.eps)
        if len(hood) < params.min_pts:
            labels[p] = NOISE
            continue
        cluster += 1
        core[p] = True
        labels[p] = cluster
        queue = deque(hood)
        while queue:
            q = queue.popleft()
            if labels[q] == NOISE:
                # visited earlier and found non-core: a border point
                labels[q] = cluster
            if labels[q] is not None:
                continue
            labels[q] = cluster
            q_hood = index.neighbors(q, params.eps)
            if len(q_hood) >= params.min_pts:
                core[q] = True
                queue.extend(q_hood)
    return ClusterAssignment(
        labels=tuple(labels),
        num_clusters=cluster + 1,
        core=tuple(core),
    )


def optics(points: Sequence[GeoPoint], params: OpticsParams, metric: Metric | str = "haversine",
           index: SpatialIndex | None = None) -> ReachabilityPlot:
    """Cluster ordering with core and reachability distances.

    The seed list is a heap keyed by (reachability, point index), so ties go
    to the lowest index.
    """
    metric = as_metric(metric).resolve(points)
    cell = params.max_eps if math.isfinite(params.max_eps) else None
    index = _index_for(points, metric, index, cell)
    n = len(points)
    core_dist = [UNDEFINED] * n
    hoods: list[list[tuple[int, float]]] = []
    for p in range(n):
        hood = index.query_with_distances(points[p], params.max_eps)
        hoods.append(hood)
        if len(hood) >= params.min_pts:
            core_dist[p] = sorted(d for _, d in hood)[params.min_pts - 1]

    reach = [UNDEFINED] * n
    processed = [False] * n
    ordering: list[int] = []
    ordered_reach: list[float] = []

    def visit(p: int, seeds: list) -> None:
        processed[p] = True
        ordering.append(p)
        ordered_reach.append(reach[p])
        if core_dist[p] == UNDEFINED:
            return
        for o, d in hoods[p]:
            if processed[o]:
                continue
            r = max(core_dist[p], d)
            if r < reach[o]:
                reach[o] = r
                heapq.heappush(seeds, (r, o))

    for start in range(n):
        if processed[start]:
            continue
        seeds: list[tuple[float, int]] = []
        visit(start, seeds)
        while seeds:
            r, q = heapq.heappop(seeds)
            if processed[q] or r != reach[q]:
                continue
            visit(q, seeds)
    return ReachabilityPlot(
        ordering=tuple(ordering),
        reachability=tuple(ordered_reach),
        core_distance=tuple(core_dist),
        max_eps=params.max_eps,
        min_pts=params.min_pts,
        unit=metric.unit,
    )


def extract_dbscan_clustering(plot: ReachabilityPlot, eps_prime: float, min_pts: int | None = None) -> ClusterAssignment:
    """Flat clustering from a reachability plot cut at ``eps_prime``.

    Core points come out partitioned exactly as ``dbscan(eps_prime)`` would
    partition them. A border point joins whichever cluster precedes it in the
    ordering, which can differ from DBSCAN's first-come rule.
    """
    eps_prime = _positive_radius("eps_prime", eps_prime)
    if eps_prime > plot.max_eps:
        raise InvalidParameterError(f"eps_prime={eps_prime} exceeds the plot's max_eps={plot.max_eps}")
    if min_pts is not None and _positive_int("min_pts", min_pts) != plot.min_pts:
        raise InvalidParameterError(f"min_pts={min_pts} differs from the plot's min_pts={plot.min_pts}")
    n = len(plot.ordering)
    labels = [NOISE] * n
    core = [False] * n
    cluster = NOISE
    for p, r in zip(plot.ordering, plot.reachability):
        is_core = plot.core_distance[p] <= eps_prime
        core[p] = is_core
        if r > eps_prime:
            if is_core:
                cluster += 1
                labels[p] = cluster
            else:
                labels[p] = NOISE
        else:
            labels[p] = cluster
    return ClusterAssignment(labels=tuple(labels), num_clusters=cluster + 1, core=tuple(core))
