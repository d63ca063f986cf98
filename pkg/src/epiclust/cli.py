"""Command-line front end.

Exit codes: 0 success, 2 usage or parameter error, 3 I/O or data error.
Every option can also be set through an ``EPICLUST_<OPTION>`` environment
variable (``--eps-km`` -> ``EPICLUST_EPS_KM``); command-line values win.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from itertools import combinations
from pathlib import Path
from typing import Sequence

from . import plots
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
from .errors import EpiclustError, InvalidParameterError
from .evaluation import (
    ALGORITHMS,
    CompareParams,
    compare_algorithms,
    sensitivity_sweep,
    tehsil_breakdown,
)
from .geo import CaseRecord, GeoPoint, Metric
from .ingestion import generate_synthetic, load_config, read_cases, write_csv, write_geojson

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
ENV_PREFIX = "EPICLUST_"

METRIC_FLAGS = {"haversine": "haversine", "equirect": "equirect", "euclid": "euclid"}

# which tuning flags each algorithm accepts
APPLICABLE = {
    "kmeans": {"k", "seed"},
    "kmedoids": {"k", "seed"},
    "dbscan": {"eps_km", "min_pts"},
    "optics": {"min_pts", "max_eps_km", "eps_cut_km"},
}
TUNING = {"k", "seed", "eps_km", "min_pts", "max_eps_km", "eps_cut_km"}


class UsageError(Exception):
    pass


def _flag(dest: str) -> str:
    return "--" + dest.replace("_", "-")


def _default_eps() -> float:
    eps = load_config().calibrated_eps_km
    return 1.5 if eps is None else eps


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class Outputs:
    """Collects artifacts in a temporary directory and moves them into place together."""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.names: list[str] = []
        self._tmp = None

    def __enter__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(prefix=".epiclust-", dir=self.out_dir))
        return self

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self._tmp / name

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def commit(self, manifest: dict) -> None:
        manifest = dict(manifest, output_dir=str(self.out_dir), artifacts=sorted(self.names + ["manifest.json"]))
        with open(self._tmp / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name in self.names + ["manifest.json"]:
            os.replace(self._tmp / name, self.out_dir / name)

    def __exit__(self, *exc):
        for leftover in self._tmp.iterdir():
            leftover.unlink()
        self._tmp.rmdir()
        return False


def _metric(name: str) -> Metric:
    return Metric(METRIC_FLAGS[name])


def _load_input(path: str) -> list[CaseRecord]:
    records = read_cases(path)
    if not records:
        raise EpiclustError(f"{path} contains no case records")
    return records


def _mean_pairwise(points: Sequence[GeoPoint], metric: Metric) -> float:
    if len(points) < 2:
        return 0.0
    pairs = list(combinations(points, 2))
    return sum(metric.distance(a, b) for a, b in pairs) / len(pairs)


def _centroid(points: Sequence[GeoPoint]) -> GeoPoint:
    return GeoPoint(sum(p.lat for p in points) / len(points), sum(p.lon for p in points) / len(points))


def write_cluster_summary(path, points: Sequence[GeoPoint], assignment: ClusterAssignment, metric: Metric) -> None:
    """One row per cluster (centre = centroid or medoid), then a ``noise`` row when any."""
    metric = metric.resolve(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "size", "center_lat", "center_lon", "mean_pairwise_distance"])
        labels = list(range(assignment.num_clusters)) + ([NOISE] if NOISE in assignment.labels else [])
        for label in labels:
            members = [p for p, l in zip(points, assignment.labels) if l == label]
            if label != NOISE and assignment.centers:
                center = assignment.centers[label]
            elif members:
                center = _centroid(members)
            else:
                center = None
            w.writerow([
                "noise" if label == NOISE else label,
                len(members),
                "" if center is None else f"{center.lat:.6f}",
                "" if center is None else f"{center.lon:.6f}",
                f"{_mean_pairwise(members, metric):.6f}",
            ])


def write_reachability_csv(path, plot: ReachabilityPlot) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["position", "point", "reachability", "core_distance"])
        for pos, (p, r) in enumerate(zip(plot.ordering, plot.reachability)):
            core = plot.core_distance[p]
            w.writerow([pos, p,
                        "undefined" if math.isinf(r) else f"{r:.10g}",
                        "undefined" if math.isinf(core) else f"{core:.10g}"])


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        records = generate_synthetic(config)
    except (EpiclustError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    with Outputs(args.out) as out:
        write_csv(records, out.path("cases.csv"))
        write_geojson(records, out.path("cases.geojson"))
        out.commit({"command": "synth", "config": args.config or "<default>", "seed": config.seed,
                    "records": len(records)})
    print(f"wrote {len(records)} cases to {args.out}")
    return EXIT_OK


def _given(args) -> set[str]:
    return {d for d in TUNING if getattr(args, d, None) is not None}


def _check_applicable(algo: str, args) -> None:
    for dest in sorted(_given(args) - APPLICABLE[algo]):
        raise UsageError(f"{_flag(dest)} is not applicable to --algo {algo}")


def _run(algo: str, points, args, metric):
    k = 3 if args.k is None else args.k
    seed = 0 if args.seed is None else args.seed
    min_pts = 3 if args.min_pts is None else args.min_pts
    eps = _default_eps() if args.eps_km is None else args.eps_km
    max_eps = math.inf if args.max_eps_km is None else args.max_eps_km
    eps_cut = eps if args.eps_cut_km is None else args.eps_cut_km
    if algo == "kmeans":
        return kmeans(points, KMeansParams(k, seed=seed), metric), None, dict(k=k, seed=seed)
    if algo == "kmedoids":
        return kmedoids(points, KMedoidsParams(k, seed=seed), metric), None, dict(k=k, seed=seed)
    if algo == "dbscan":
        return dbscan(points, DbscanParams(eps, min_pts), metric), None, dict(eps=eps, min_pts=min_pts)
    plot = optics(points, OpticsParams(max_eps, min_pts), metric)
    assignment = extract_dbscan_clustering(plot, eps_cut, min_pts)
    return assignment, plot, dict(max_eps=max_eps, min_pts=min_pts, eps_cut=eps_cut)


def cmd_cluster(args) -> int:
    _check_applicable(args.algo, args)
    records = _load_input(args.input)
    points = [r.location for r in records]
    metric = _metric(args.metric)
    try:
        assignment, plot, used = _run(args.algo, points, args, metric)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    with Outputs(args.out) as out:
        write_geojson(records, out.path("clusters.geojson"), assignment)
        write_cluster_summary(out.path("cluster_summary.csv"), points, assignment, metric)
        title = f"{args.algo}: {assignment.num_clusters} clusters, {assignment.noise_count} noise"
        out.write_text("clusters.svg", plots.scatter_svg(points, assignment.labels, title))
        if plot is not None:
            write_reachability_csv(out.path("reachability.csv"), plot)
            out.write_text("reachability.svg", plots.reachability_svg(plot, used["eps_cut"]))
        out.commit({"command": "cluster", "input": args.input, "algorithm": args.algo, "params": used,
                    "metric": args.metric, "seed": used.get("seed"),
                    "num_clusters": assignment.num_clusters, "noise_count": assignment.noise_count})
    print(f"{args.algo}: {assignment.num_clusters} clusters, {assignment.noise_count} noise -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    records = _load_input(args.input)
    points = [r.location for r in records]
    metric = _metric(args.metric)
    k = 3 if args.k is None else args.k
    seed = 0 if args.seed is None else args.seed
    min_pts = 3 if args.min_pts is None else args.min_pts
    eps = _default_eps() if args.eps_km is None else args.eps_km
    max_eps = math.inf if args.max_eps_km is None else args.max_eps_km
    eps_cut = eps if args.eps_cut_km is None else args.eps_cut_km
    try:
        params = CompareParams(KMeansParams(k, seed=seed), KMedoidsParams(k, seed=seed),
                               DbscanParams(eps, min_pts), OpticsParams(max_eps, min_pts), eps_cut)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    report = compare_algorithms(points, params, metric, tehsils=[r.tehsil for r in records])
    breakdown = tehsil_breakdown(records)
    with Outputs(args.out) as out:
        report.write_csv(out.path("comparison.csv"))
        report.write_contingency_csv(out.path("contingency.csv"))
        breakdown.write_csv(out.path("tehsil_breakdown.csv"))
        panels = [(r.name, r.assignment.labels if r.ok else None, r.error) for r in report.results]
        out.write_text("comparison.svg", plots.panel_svg(points, panels))
        out.commit({"command": "compare", "input": args.input, "metric": args.metric, "seed": seed,
                    "params": dict(k=k, eps=eps, min_pts=min_pts, max_eps=max_eps, eps_cut=eps_cut),
                    "failures": report.failures})
    if report.failures:
        print(f"warning: {report.failures} algorithm(s) failed", file=sys.stderr)
    print(f"compared {len(ALGORITHMS)} algorithms on {len(points)} cases -> {args.out}")
    return EXIT_OK


def parse_grid(text: str, cast=float) -> list:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError:
            raise UsageError(f"bad grid {text!r}; expected start:stop:step") from None
        if step <= 0 or stop < start:
            return []
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [cast(round(start + i * step, 10)) for i in range(count)]
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None


def cmd_sweep(args) -> int:
    eps_values = parse_grid(args.eps_grid)
    min_pts_values = parse_grid(args.min_pts_grid, int)
    if not eps_values or not min_pts_values:
        raise UsageError("empty parameter grid")
    records = _load_input(args.input)
    points = [r.location for r in records]
    metric = _metric(args.metric)
    eps = _default_eps() if args.eps_km is None else args.eps_km
    min_pts = 3 if args.min_pts is None else args.min_pts
    try:
        base = DbscanParams(eps, min_pts)
    except InvalidParameterError as exc:
        raise UsageError(str(exc)) from None
    result = sensitivity_sweep(points, base, eps_values, min_pts_values, metric)
    series: dict[int, list[tuple[float, int]]] = {}
    for row in result.rows:
        if row.error is None:
            series.setdefault(row.min_pts, []).append((row.eps, row.num_clusters))
    with Outputs(args.out) as out:
        result.write_csv(out.path("sweep.csv"))
        out.write_text("sweep.svg", plots.sweep_svg(series))
        out.commit({"command": "sweep", "input": args.input, "metric": args.metric,
                    "base": dict(eps=eps, min_pts=min_pts), "eps_grid": args.eps_grid,
                    "min_pts_grid": args.min_pts_grid, "rows": len(result.rows), "seed": None})
    print(f"swept {len(result.rows)} grid points -> {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _tuning(p: argparse.ArgumentParser, with_algo_flags: bool = True) -> None:
    p.add_argument("--k", type=int, help="cluster count for kmeans/kmedoids (default 3)")
    p.add_argument("--seed", type=int, help="seed for kmeans++ / k-medoids restarts (default 0)")
    p.add_argument("--eps-km", type=float, help="DBSCAN radius (default: calibrated district value)")
    p.add_argument("--min-pts", type=int, help="density threshold, point itself included (default 3)")
    p.add_argument("--max-eps-km", type=float, help="OPTICS neighbourhood bound (default unbounded)")
    p.add_argument("--eps-cut-km", type=float, help="OPTICS extraction threshold (default: --eps-km)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epiclust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic case dataset")
    p.add_argument("--config", help="generator TOML (default: shipped district config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="run one algorithm and write labelled outputs")
    p.add_argument("--input", required=True, help="case file (.csv or .geojson)")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--metric", default="haversine", choices=sorted(METRIC_FLAGS))
    _tuning(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("compare", help="run all four algorithms and compare them")
    p.add_argument("--input", required=True, help="case file (.csv or .geojson)")
    p.add_argument("--metric", default="haversine", choices=sorted(METRIC_FLAGS))
    _tuning(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="DBSCAN parameter sensitivity sweep")
    p.add_argument("--input", required=True, help="case file (.csv or .geojson)")
    p.add_argument("--metric", default="haversine", choices=sorted(METRIC_FLAGS))
    p.add_argument("--eps-grid", required=True, help="start:stop:step (inclusive) or comma list")
    p.add_argument("--min-pts-grid", default="3", help="start:stop:step or comma list (default 3)")
    p.add_argument("--eps-km", type=float, help="baseline eps (default: calibrated district value)")
    p.add_argument("--min-pts", type=int, help="baseline min_pts (default 3)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    for sp in sub.choices.values():
        _apply_env(sp)
    return parser


def _apply_env(parser: argparse.ArgumentParser) -> None:
    for action in parser._actions:
        long = [s for s in action.option_strings if s.startswith("--")]
        if not long or action.dest == "help":
            continue
        value = os.environ.get(ENV_PREFIX + action.dest.upper())
        if value is None:
            continue
        if action.type is not None:
            try:
                value = action.type(value)
            except ValueError:
                parser.error(f"{ENV_PREFIX}{action.dest.upper()}: invalid value {value!r}")
        if action.choices is not None and value not in action.choices:
            parser.error(f"{ENV_PREFIX}{action.dest.upper()}: invalid choice {value!r}")
        action.default = value
        action.required = False


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"epiclust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EpiclustError, OSError, ValueError) as exc:
        print(f"epiclust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
