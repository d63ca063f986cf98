"""Cluster validity metrics and cross-algorithm comparison."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .clustering import (
    NOISE,
    ClusterAssignment,
    DbscanParams,
    KMeansParams,
    KMedoidsParams,
    OpticsParams,
    ReachabilityPlot,
    dbscan,
    extract_dbscan_clustering,
    kmeans,
    kmedoids,
    optics,
)
from .errors import EpiclustError, InvalidInputError
from .geo import CaseRecord, GeoPoint, Metric, SpatialIndex, as_metric, build_index

ALGORITHMS = ("kmeans", "kmedoids", "dbscan", "optics")


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return "undefined" if math.isinf(value) else f"{value:.10g}"
    return str(value)


def silhouette(points: Sequence[GeoPoint], assignment: ClusterAssignment | Sequence[int],
               metric: Metric | str = "haversine") -> float | None:
    """Mean silhouette over non-noise points, or ``None`` with fewer than two clusters.

    Noise points are left out entirely: they neither receive a score nor
    count towards any cluster's mean distance. Singletons score 0.
    """
    labels = list(getattr(assignment, "labels", assignment))
    if len(labels) != len(points):
        raise InvalidInputError(f"{len(labels)} labels for {len(points)} points")
    metric = as_metric(metric).resolve(points)
    members: dict[int, list[int]] = {}
    for i, label in enumerate(labels):
        if label != NOISE:
            members.setdefault(label, []).append(i)
    if len(members) < 2:
        return None
    total = 0.0
    count = 0
    for i, label in enumerate(labels):
        if label == NOISE:
            continue
        count += 1
        own = members[label]
        if len(own) == 1:
            continue
        a = sum(metric.distance(points[i], points[j]) for j in own if j != i) / (len(own) - 1)
        b = min(
            sum(metric.distance(points[i], points[j]) for j in other) / len(other)
            for other_label, other in members.items() if other_label != label
        )
        denom = max(a, b)
        total += 0.0 if denom == 0 else (b - a) / denom
    return total / count


def _pairs(n: int) -> int:
    return n * (n - 1) // 2


def adjusted_rand_index(a: Sequence[int], b: Sequence[int], exclude_noise: bool = False) -> float:
    """Chance-corrected pair agreement between two labelings.

    NOISE is an ordinary label unless ``exclude_noise`` drops every point
    that either labeling marks as noise.
    """
    if len(a) != len(b):
        raise InvalidInputError(f"label vectors differ in length ({len(a)} vs {len(b)})")
    pairs = list(zip(a, b))
    if exclude_noise:
        pairs = [(x, y) for x, y in pairs if x != NOISE and y != NOISE]
    n = len(pairs)
    joint = sum(_pairs(c) for c in Counter(pairs).values())
    sum_a = sum(_pairs(c) for c in Counter(x for x, _ in pairs).values())
    sum_b = sum(_pairs(c) for c in Counter(y for _, y in pairs).values())
    total = _pairs(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        # both labelings are all-one-cluster or all-singletons
        return 1.0 if sum_a == sum_b else 0.0
    return (joint - expected) / (maximum - expected)


@dataclass(frozen=True)
class TehsilBreakdown:
    total: int
    rows: tuple[tuple[str, int, int | None], ...]

    def percent(self, tehsil: str) -> int | None:
        for name, _, pct in self.rows:
            if name == tehsil:
                return pct
        return 0 if self.total else None

    def count(self, tehsil: str) -> int:
        return next((c for name, c, _ in self.rows if name == tehsil), 0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["tehsil", "count", "percent"])
            for name, count, pct in self.rows:
                w.writerow([name, count, _fmt(pct)])


def tehsil_breakdown(cases: Sequence[CaseRecord], known: Sequence[str] = ()) -> TehsilBreakdown:
    """Counts and half-up rounded integer percentages per tehsil label.

    Rows are ordered by count (descending) then name; names in ``known``
    are listed even with a zero count.
    """
    counts = Counter(c.tehsil for c in cases)
    for name in known:
        counts.setdefault(name, 0)
    total = len(cases)
    rows = []
    for name, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        pct = (200 * count + total) // (2 * total) if total else None
        rows.append((name, count, pct))
    return TehsilBreakdown(total, tuple(rows))


@dataclass(frozen=True)
class SweepRow:
    eps: float
    min_pts: int
    num_clusters: int | None
    noise_fraction: float | None
    ari_vs_baseline: float | None
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    base: DbscanParams
    rows: tuple[SweepRow, ...]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "min_pts", "num_clusters", "noise_fraction", "ari_vs_baseline", "error"])
            for r in self.rows:
                w.writerow([_fmt(r.eps), r.min_pts, _fmt(r.num_clusters), _fmt(r.noise_fraction),
                            _fmt(r.ari_vs_baseline), r.error or ""])


def sensitivity_sweep(points: Sequence[GeoPoint], base: DbscanParams, eps_values: Sequence[float],
                      min_pts_values: Sequence[int], metric: Metric | str = "haversine",
                      index: SpatialIndex | None = None) -> SweepResult:
    """Run DBSCAN over the eps x min_pts grid and compare each run with ``base``.

    A grid entry that fails validation yields a row carrying the error
    message; the sweep carries on.
    """
    metric = as_metric(metric).resolve(points)
    if index is None:
        index = build_index(points, metric, eps=base.eps)
    baseline = dbscan(points, base, metric, index)
    n = len(points)
    rows = []
    seen = set()
    for eps in eps_values:
        for min_pts in min_pts_values:
            if (eps, min_pts) in seen:
                continue
            seen.add((eps, min_pts))
            try:
                result = dbscan(points, DbscanParams(eps, min_pts), metric, index)
            except EpiclustError as exc:
                rows.append(SweepRow(eps, min_pts, None, None, None, str(exc)))
                continue
            rows.append(SweepRow(
                eps=float(eps),
                min_pts=min_pts,
                num_clusters=result.num_clusters,
                noise_fraction=result.noise_count / n if n else 0.0,
                ari_vs_baseline=adjusted_rand_index(baseline.labels, result.labels),
            ))
    return SweepResult(base, tuple(rows))


@dataclass(frozen=True)
class CompareParams:
    kmeans: KMeansParams
    kmedoids: KMedoidsParams
    dbscan: DbscanParams
    optics: OpticsParams
    eps_cut: float


@dataclass(frozen=True)
class AlgorithmResult:
    name: str
    assignment: ClusterAssignment | None
    silhouette: float | None = None
    error: str | None = None
    plot: ReachabilityPlot | None = None

    @property
    def ok(self) -> bool:
        return self.assignment is not None

    @property
    def noise_fraction(self) -> float | None:
        if self.assignment is None:
            return None
        n = len(self.assignment.labels)
        return self.assignment.noise_count / n if n else 0.0


@dataclass(frozen=True)
class ComparisonReport:
    results: tuple[AlgorithmResult, ...]
    ari: tuple[tuple[float | None, ...], ...]
    per_tehsil: dict[str, dict[str, dict[int, int]]] = field(default_factory=dict)

    def result(self, name: str) -> AlgorithmResult:
        return next(r for r in self.results if r.name == name)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.results if not r.ok)

    def write_csv(self, path) -> None:
        names = [r.name for r in self.results]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["algorithm", "status", "num_clusters", "noise_count", "noise_fraction",
                        "silhouette", "objective"] + [f"ari_{n}" for n in names])
            for r, ari_row in zip(self.results, self.ari):
                a = r.assignment
                w.writerow([
                    r.name,
                    "ok" if r.ok else f"failed: {r.error}",
                    _fmt(a.num_clusters if a else None),
                    _fmt(a.noise_count if a else None),
                    _fmt(r.noise_fraction),
                    _fmt(r.silhouette),
                    _fmt(a.objective if a else None),
                ] + [_fmt(v) for v in ari_row])

    def write_contingency_csv(self, path) -> None:
        """Long-format tehsil x cluster counts; noise is cluster ``noise``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["algorithm", "tehsil", "cluster", "count"])
            for algo, table in self.per_tehsil.items():
                for tehsil in sorted(table):
                    for label in sorted(table[tehsil]):
                        w.writerow([algo, tehsil, "noise" if label == NOISE else label, table[tehsil][label]])


def contingency(groups: Sequence[str], labels: Sequence[int]) -> dict[str, dict[int, int]]:
    table: dict[str, dict[int, int]] = {}
    for g, label in zip(groups, labels):
        row = table.setdefault(g, {})
        row[label] = row.get(label, 0) + 1
    return table


def majority_cluster(row: dict[int, int]) -> int:
    """Label holding most of a group's points; lowest label on ties."""
    return min(row, key=lambda label: (-row[label], label))


def compare_algorithms(points: Sequence[GeoPoint], params: CompareParams, metric: Metric | str = "haversine",
                       tehsils: Sequence[str] | None = None) -> ComparisonReport:
    """Run all four algorithms on the same points and tabulate the outcome.

    A failing algorithm is recorded with its error message instead of
    aborting the comparison.
    """
    metric = as_metric(metric).resolve(points)

    def run_optics():
        plot = optics(points, params.optics, metric)
        return extract_dbscan_clustering(plot, params.eps_cut, params.optics.min_pts), plot

    runners = {
        "kmeans": lambda: (kmeans(points, params.kmeans, metric), None),
        "kmedoids": lambda: (kmedoids(points, params.kmedoids, metric), None),
        "dbscan": lambda: (dbscan(points, params.dbscan, metric), None),
        "optics": run_optics,
    }
    results = []
    for name in ALGORITHMS:
        try:
            assignment, plot = runners[name]()
        except EpiclustError as exc:
            results.append(AlgorithmResult(name, None, error=str(exc)))
            continue
        results.append(AlgorithmResult(name, assignment, silhouette(points, assignment, metric), plot=plot))

    ari = tuple(
        tuple(
            adjusted_rand_index(r.assignment.labels, s.assignment.labels) if r.ok and s.ok else None
            for s in results
        )
        for r in results
    )
    per_tehsil = {}
    if tehsils is not None:
        per_tehsil = {r.name: contingency(tehsils, r.assignment.labels) for r in results if r.ok}
    return ComparisonReport(tuple(results), ari, per_tehsil)


def default_compare_params(k: int = 3, eps: float = 1.5, min_pts: int = 3, seed: int = 0,
                           max_eps: float = math.inf, eps_cut: float | None = None) -> CompareParams:
    return CompareParams(
        kmeans=KMeansParams(k, seed=seed),
        kmedoids=KMedoidsParams(k, seed=seed),
        dbscan=DbscanParams(eps, min_pts),
        optics=OpticsParams(max_eps, min_pts),
        eps_cut=eps if eps_cut is None else eps_cut,
    )


def calibrate_eps(cases: Sequence[CaseRecord], min_pts: int = 3, step: float = 0.5, limit: float = 50.0,
                  min_clusters: int = 4, max_noise: float = 0.10,
                  metric: Metric | str = "haversine") -> float | None:
    """Smallest eps on a ``step`` grid giving enough clusters and little noise.

    Noise is measured among non-imported cases only. Returns ``None`` when no
    grid value up to ``limit`` qualifies.
    """
    points = [c.location for c in cases]
    metric = as_metric(metric).resolve(points)
    local = [i for i, c in enumerate(cases) if not c.imported]
    steps = int(round(limit / step))
    for i in range(1, steps + 1):
        eps = round(i * step, 10)
        result = dbscan(points, DbscanParams(eps, min_pts), metric)
        noise = sum(1 for j in local if result.labels[j] == NOISE)
        if result.num_clusters >= min_clusters and noise <= max_noise * len(local):
            return eps
    return None
