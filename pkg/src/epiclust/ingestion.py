"""Case files (CSV, GeoJSON) and the seeded synthetic outbreak generator."""
from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from .clustering import NOISE, ClusterAssignment
from .errors import (
    DuplicateIdError,
    InvalidInputError,
    InvalidParameterError,
    RowError,
    SchemaError,
    UnsupportedGeometryError,
)
from .geo import MAP_SCALE_KM_PER_CM, CaseRecord, GeoPoint, unproject_equirectangular

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CSV_COLUMNS = ("id", "lat", "lon", "tehsil", "onset_date", "imported")
GEOJSON_PROPERTIES = ("id", "tehsil", "imported")

_TRUE = {"true", "1"}
_FALSE = {"false", "0"}

DEFAULT_CONFIG = "district-jhelum-2011.toml"
VILLAGE_CONFIG = "villages-jhelum-2011.toml"


def _check_unique(records: Sequence[CaseRecord]) -> None:
    seen = set()
    for r in records:
        if r.id in seen:
            raise DuplicateIdError(f"duplicate case id {r.id!r}")
        seen.add(r.id)


# -- CSV ---------------------------------------------------------------------

def _parse_row(row: dict, line: int) -> CaseRecord:
    if not row["id"]:
        raise RowError(line, "empty id")
    try:
        lat, lon = float(row["lat"]), float(row["lon"])
    except ValueError:
        raise RowError(line, f"unparsable coordinate ({row['lat']!r}, {row['lon']!r})") from None
    try:
        location = GeoPoint(lat, lon)
    except InvalidInputError as exc:
        raise RowError(line, str(exc)) from None
    onset = None
    if row["onset_date"]:
        try:
            onset = date.fromisoformat(row["onset_date"])
        except ValueError:
            raise RowError(line, f"bad onset_date {row['onset_date']!r}") from None
    flag = row["imported"].strip().lower()
    if flag not in _TRUE | _FALSE:
        raise RowError(line, f"imported must be one of true/false/1/0, got {row['imported']!r}")
    return CaseRecord(row["id"], location, row["tehsil"], onset, flag in _TRUE)


def read_csv(path) -> list[CaseRecord]:
    """Read a case CSV with header ``id,lat,lon,tehsil,onset_date,imported``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in CSV_COLUMNS:
            if col not in header:
                raise SchemaError(f"missing column {col!r} in {path}")
        records = []
        for row in reader:
            if None in row.values() or None in row:
                raise RowError(reader.line_num, "wrong number of fields")
            records.append(_parse_row(row, reader.line_num))
    _check_unique(records)
    return records


def write_csv(records: Sequence[CaseRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.id,
                repr(r.location.lat),
                repr(r.location.lon),
                r.tehsil,
                r.onset_date.isoformat() if r.onset_date else "",
                "true" if r.imported else "false",
            ])


# -- GeoJSON -----------------------------------------------------------------

def to_feature_collection(records: Sequence[CaseRecord], assignment: ClusterAssignment | None = None) -> dict:
    if assignment is not None and len(assignment.labels) != len(records):
        raise InvalidInputError(
            f"assignment has {len(assignment.labels)} labels for {len(records)} records")
    features = []
    for i, r in enumerate(records):
        props = {
            "id": r.id,
            "tehsil": r.tehsil,
            "onset_date": r.onset_date.isoformat() if r.onset_date else None,
            "imported": r.imported,
        }
        if assignment is not None:
            label = assignment.labels[i]
            props["cluster"] = "noise" if label == NOISE else label
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [r.location.lon, r.location.lat]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def write_geojson(records: Sequence[CaseRecord], path, assignment: ClusterAssignment | None = None) -> None:
    """Write a FeatureCollection; with ``assignment`` each feature gets a ``cluster`` property."""
    doc = to_feature_collection(records, assignment)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _features(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise SchemaError(f"{path} is not a GeoJSON FeatureCollection")
    for n, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise UnsupportedGeometryError(f"feature {n}: geometry {geom.get('type')!r} is not a Point")
        yield n, feat


def read_geojson(path) -> list[CaseRecord]:
    records = []
    for n, feat in _features(path):
        props = feat.get("properties") or {}
        for key in GEOJSON_PROPERTIES:
            if key not in props:
                raise SchemaError(f"feature {n}: missing property {key!r}")
        lon, lat = feat["geometry"]["coordinates"][:2]
        onset = props.get("onset_date")
        records.append(CaseRecord(
            id=str(props["id"]),
            location=GeoPoint(lat, lon),
            tehsil=props["tehsil"],
            onset_date=date.fromisoformat(onset) if onset else None,
            imported=bool(props["imported"]),
        ))
    _check_unique(records)
    return records


def read_cluster_labels(path) -> list[int]:
    """Cluster labels stored by :func:`write_geojson`, NOISE for ``"noise"``."""
    labels = []
    for n, feat in _features(path):
        value = (feat.get("properties") or {}).get("cluster")
        if value is None:
            raise SchemaError(f"feature {n}: missing property 'cluster'")
        labels.append(NOISE if value == "noise" else int(value))
    return labels


def read_cases(path) -> list[CaseRecord]:
    """Dispatch on file extension: ``.geojson``/``.json`` or CSV."""
    suffix = Path(path).suffix.lower()
    if suffix in (".geojson", ".json"):
        return read_geojson(path)
    return read_csv(path)


# -- Synthetic generator -----------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele, Lea & Flood 2014); the generator's only entropy source."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def gauss_pair(self) -> tuple[float, float]:
        """Two independent standard normals by Box-Muller."""
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)


@dataclass(frozen=True)
class Anchor:
    name: str
    location: GeoPoint
    cases: int
    sigma_km: float
    imported: bool = False
    tehsil: str | None = None

    def __post_init__(self):
        if isinstance(self.cases, bool) or not isinstance(self.cases, int) or self.cases < 1:
            raise InvalidParameterError(f"anchor {self.name!r}: case count must be a positive integer")
        if not (math.isfinite(self.sigma_km) and self.sigma_km > 0):
            raise InvalidParameterError(f"anchor {self.name!r}: sigma_km must be positive")


@dataclass(frozen=True)
class SynthConfig:
    """Seeded recipe for a synthetic case dataset.

    Each anchor (district outliers included) draws from its own SplitMix64
    substream whose seed is the anchor's position-th output of
    ``SplitMix64(seed)``, so editing one anchor leaves the others' points
    unchanged.
    """

    seed: int
    anchors: tuple[Anchor, ...]
    outliers: tuple[Anchor, ...] = ()
    calibrated_eps_km: float | None = None
    min_pts: int = 3
    map_scale_km_per_cm: float = MAP_SCALE_KM_PER_CM

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not self.anchors and not self.outliers:
            raise InvalidParameterError("config defines no anchors")

    @property
    def total_cases(self) -> int:
        return sum(a.cases for a in self.anchors + self.outliers)


def generate_synthetic(config: SynthConfig) -> list[CaseRecord]:
    """Draw isotropic Gaussian cases around every anchor.

    Offsets are sampled in km in the equirectangular plane of the anchor's
    own latitude; ids run ``case-0001``, ``case-0002``... in anchor order.
    """
    root = SplitMix64(config.seed)
    records = []
    groups = [(a, False) for a in config.anchors] + [(a, True) for a in config.outliers]
    for anchor, imported in groups:
        stream = SplitMix64(root.next_u64())
        for _ in range(anchor.cases):
            dx, dy = stream.gauss_pair()
            loc = unproject_equirectangular(anchor.sigma_km * dx, anchor.sigma_km * dy,
                                            anchor.location.lat, anchor.location.lon)
            records.append(CaseRecord(
                id=f"case-{len(records) + 1:04d}",
                location=loc,
                tehsil=anchor.tehsil or anchor.name,
                imported=imported or anchor.imported,
            ))
    return records


def _anchor(entry: dict, imported: bool, where: str) -> Anchor:
    try:
        return Anchor(
            name=str(entry["name"]),
            location=GeoPoint(float(entry["lat"]), float(entry["lon"])),
            cases=entry["cases"],
            sigma_km=float(entry["sigma_km"]),
            imported=imported,
            tehsil=entry.get("tehsil"),
        )
    except KeyError as exc:
        raise InvalidParameterError(f"{where}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"{where}: {exc}") from None


def parse_config(doc: dict) -> SynthConfig:
    if "seed" not in doc:
        raise InvalidParameterError("config: missing key 'seed'")
    anchors = tuple(_anchor(a, False, f"anchor {i}") for i, a in enumerate(doc.get("anchor", [])))
    outliers = tuple(_anchor(a, True, f"outlier {i}") for i, a in enumerate(doc.get("outlier", [])))
    eps = doc.get("calibrated_eps_km")
    return SynthConfig(
        seed=doc["seed"],
        anchors=anchors,
        outliers=outliers,
        calibrated_eps_km=None if eps is None else float(eps),
        min_pts=int(doc.get("min_pts", 3)),
        map_scale_km_per_cm=float(doc.get("map_scale_km_per_cm", MAP_SCALE_KM_PER_CM)),
    )


def load_config(path=None) -> SynthConfig:
    """Load a TOML generator config; ``None`` gives the shipped district default."""
    try:
        if path is None:
            text = resources.files("epiclust.data").joinpath(DEFAULT_CONFIG).read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidParameterError(f"malformed config: {exc}") from None
    return parse_config(doc)


def load_village_config() -> SynthConfig:
    text = resources.files("epiclust.data").joinpath(VILLAGE_CONFIG).read_text(encoding="utf-8")
    return parse_config(tomllib.loads(text))


# -- Constructed two-density layout ------------------------------------------

TWO_DENSITY_REF = (33.0, 73.5)
TWO_DENSITY_EPS_KM = 2.0


def _grid(x0: float, y0: float, nx: int, ny: int, step: float) -> list[tuple[float, float]]:
    return [(x0 + i * step, y0 + j * step) for j in range(ny) for i in range(nx)]


def two_density_points() -> list[GeoPoint]:
    """Deterministic layout for parameter-sensitivity checks.

    Two dense 5x5 lattices (1 km pitch) separated by a 2.2 km gap, plus a
    sparse 4x4 lattice (1.9 km pitch) 11 km away. At eps = 2 km DBSCAN finds
    three clusters; at 2.4 km the dense lattices merge and at 1.6 km the
    sparse one dissolves into noise. Distances are exact under
    ``Metric("equirect", ref_lat=TWO_DENSITY_REF[0])``.
    """
    xy = _grid(0.0, 0.0, 5, 5, 1.0) + _grid(6.2, 0.0, 5, 5, 1.0) + _grid(0.0, 15.0, 4, 4, 1.9)
    return [unproject_equirectangular(x, y, *TWO_DENSITY_REF) for x, y in xy]


def two_density_labels() -> list[int]:
    return [0] * 25 + [1] * 25 + [2] * 16
