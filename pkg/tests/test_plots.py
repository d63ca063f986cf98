import math
import random
import xml.etree.ElementTree as ET

import pytest

from conftest import planted_blobs
from epiclust import plots
from epiclust.clustering import NOISE, OpticsParams, optics

SVG = "{http://www.w3.org/2000/svg}"


def parse(text):
    return ET.fromstring(text)


def test_scatter_noise_markers_hollow():
    pts, labels = planted_blobs(random.Random(0), [(0, 0), (20, 0)], 10, 1.0)
    labels[3] = labels[12] = NOISE
    root = parse(plots.scatter_svg(pts, labels, "t & <x>"))
    circles = root.iter(SVG + "circle")
    hollow = [c for c in circles if c.get("fill") == "none"]
    assert len(hollow) == 2
    assert all(c.get("stroke") == plots.NOISE_COLOR for c in hollow)
    assert len(list(root.iter(SVG + "circle"))) == 20
    assert "km" in "".join(t.text or "" for t in root.iter(SVG + "text"))


def test_scatter_empty_and_deterministic():
    assert parse(plots.scatter_svg([], [], "empty")) is not None
    pts, labels = planted_blobs(random.Random(1), [(0, 0)], 5, 1.0)
    assert plots.scatter_svg(pts, labels, "a") == plots.scatter_svg(pts, labels, "a")


def test_panel_shows_failure_note():
    pts, labels = planted_blobs(random.Random(2), [(0, 0), (20, 0)], 5, 1.0)
    root = parse(plots.panel_svg(pts, [("kmeans", labels, None), ("kmedoids", None, "k=3 exceeds n=2")]))
    texts = [t.text for t in root.iter(SVG + "text")]
    assert "failed: k=3 exceeds n=2" in texts


def bar_heights(root):
    return [(float(r.get("height")), r.get("fill")) for r in root.iter(SVG + "rect")
            if r.get("fill") in ("url(#hatch)", "#4c72b0")]


def test_reachability_undefined_bars_hatched():
    pts, _ = planted_blobs(random.Random(3), [(0, 0), (30, 0)], 10, 1.0)
    plot = optics(pts, OpticsParams(5.0, 3), "haversine")
    root = parse(plots.reachability_svg(plot))
    bars = bar_heights(root)
    assert len(bars) == len(pts)
    undefined = sum(1 for r in plot.reachability if math.isinf(r))
    hatched = [h for h, f in bars if f == "url(#hatch)"]
    assert len(hatched) == undefined >= 2
    tallest = max(h for h, f in bars if f != "url(#hatch)")
    for h in hatched:
        assert h == pytest.approx(1.05 * tallest, rel=1e-3)
    assert root.find(f".//{SVG}pattern[@id='hatch']") is not None


def test_sweep_svg_parses():
    root = parse(plots.sweep_svg({3: [(1.0, 2), (1.5, 4)], 4: [(1.0, 1), (1.5, 3)]}))
    assert len(list(root.iter(SVG + "polyline"))) == 2
    assert parse(plots.sweep_svg({})) is not None
