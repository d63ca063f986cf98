"""Shared fixtures and brute-force oracles.

The oracles deliberately avoid the package's index and traversal code; they
share only ``Metric.distance`` so boundary decisions agree bit for bit.
"""
import math
import random

import pytest

from epiclust.clustering import NOISE
from epiclust.geo import GeoPoint, Metric, unproject_equirectangular
from epiclust.ingestion import generate_synthetic, load_config

REF = (33.0, 73.5)


def random_points(rng: random.Random, n: int, spread_deg: float = 0.3, center=REF):
    return [GeoPoint(center[0] + rng.uniform(-spread_deg, spread_deg),
                     center[1] + rng.uniform(-spread_deg, spread_deg)) for _ in range(n)]


def mixed_density_points(rng: random.Random, n: int = 200):
    """A few Gaussian blobs of different spread over uniform background."""
    pts = []
    blobs = [(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.choice([0.5, 1.0, 3.0])) for _ in range(4)]
    while len(pts) < n:
        if rng.random() < 0.2:
            x, y = rng.uniform(-40, 40), rng.uniform(-40, 40)
        else:
            cx, cy, s = rng.choice(blobs)
            x, y = rng.gauss(cx, s), rng.gauss(cy, s)
        pts.append(unproject_equirectangular(x, y, *REF))
    return pts


def planted_blobs(rng: random.Random, centers_km, n_per: int, sigma_km: float):
    pts, labels = [], []
    for c, (cx, cy) in enumerate(centers_km):
        for _ in range(n_per):
            pts.append(unproject_equirectangular(rng.gauss(cx, sigma_km), rng.gauss(cy, sigma_km), *REF))
            labels.append(c)
    return pts, labels


def naive_dbscan(points, eps, min_pts, metric: Metric):
    """Core flags from a full distance scan, clusters as connected core components.

    Components are numbered by their lowest core index; a border point goes to
    the lowest-numbered cluster owning a core point within eps. This is what
    ascending-order DBSCAN with full expansion produces.
    """
    n = len(points)
    metric = metric.resolve(points)
    # every metric is bitwise symmetric, so one triangle suffices
    hood = [[i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if metric.distance(points[i], points[j]) <= eps:
                hood[i].append(j)
                hood[j].append(i)
    for h in hood:
        h.sort()
    core = [len(h) >= min_pts for h in hood]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        if core[i]:
            for j in hood[i]:
                if core[j]:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    roots = sorted({find(i) for i in range(n) if core[i]})
    cid = {r: k for k, r in enumerate(roots)}
    labels = [NOISE] * n
    for i in range(n):
        if core[i]:
            labels[i] = cid[find(i)]
        else:
            owners = [cid[find(j)] for j in hood[i] if core[j]]
            if owners:
                labels[i] = min(owners)
    return labels, core


def naive_optics(points, max_eps, min_pts, metric: Metric):
    """Textbook OPTICS with O(n) seed scans instead of a heap."""
    n = len(points)
    metric = metric.resolve(points)
    d = [[metric.distance(points[i], points[j]) for j in range(n)] for i in range(n)]
    core = []
    for i in range(n):
        within = sorted(x for x in d[i] if x <= max_eps)
        core.append(within[min_pts - 1] if len(within) >= min_pts else math.inf)
    reach = [math.inf] * n
    done = [False] * n
    order, order_reach = [], []
    for start in range(n):
        if done[start]:
            continue
        current = start
        while current is not None:
            done[current] = True
            order.append(current)
            order_reach.append(reach[current])
            if core[current] < math.inf:
                for o in range(n):
                    if not done[o] and d[current][o] <= max_eps:
                        reach[o] = min(reach[o], max(core[current], d[current][o]))
            pending = [(reach[o], o) for o in range(n) if not done[o] and reach[o] < math.inf]
            current = min(pending)[1] if pending else None
    return order, order_reach, core


def great_circle_atan2(a: GeoPoint, b: GeoPoint, radius=6371.0):
    """Sphere distance via the atan2 (Vincenty special case) form."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    y = math.hypot(math.cos(p2) * math.sin(dl), math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl))
    x = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius * math.atan2(y, x)


def great_circle_cosines(a: GeoPoint, b: GeoPoint, radius=6371.0):
    """Spherical law of cosines."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius * math.acos(max(-1.0, min(1.0, c)))


@pytest.fixture(scope="session")
def district_config():
    return load_config()


@pytest.fixture(scope="session")
def district_cases(district_config):
    return generate_synthetic(district_config)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
