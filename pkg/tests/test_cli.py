import csv
import json

import pytest

from epiclust.cli import main, parse_grid
from epiclust.geo import CaseRecord
from epiclust.ingestion import TWO_DENSITY_EPS_KM, read_cluster_labels, two_density_points, write_csv


@pytest.fixture(scope="module")
def cases_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out)]) == 0
    return out / "cases.csv"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_synth_writes_default_dataset(tmp_path, cases_csv):
    assert len(rows(cases_csv)) == 95
    assert main(["synth", "--out", str(tmp_path)]) == 0
    for name in ("cases.csv", "cases.geojson"):
        assert (tmp_path / name).read_bytes() == (cases_csv.parent / name).read_bytes()
    m = manifest(tmp_path)
    assert m["seed"] == 2011 and m["records"] == 95
    assert sorted(p.name for p in tmp_path.iterdir()) == m["artifacts"]


def test_synth_seed_override(tmp_path, cases_csv):
    assert main(["synth", "--seed", "5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "cases.csv").read_bytes() != cases_csv.read_bytes()


def test_synth_malformed_config_leaves_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("seed = [")
    out = tmp_path / "out"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 2
    assert "config" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_cluster_dbscan(tmp_path, cases_csv):
    assert main(["cluster", "--input", str(cases_csv), "--algo", "dbscan", "--out", str(tmp_path)]) == 0
    summary = rows(tmp_path / "cluster_summary.csv")
    clusters = [r for r in summary if r["cluster"] != "noise"]
    assert len(clusters) >= 4
    assert summary[-1]["cluster"] == "noise"
    labels = read_cluster_labels(tmp_path / "clusters.geojson")
    assert len(labels) == 95
    assert sum(int(r["size"]) for r in summary) == 95
    assert manifest(tmp_path)["params"] == {"eps": 1.5, "min_pts": 3}


def test_cluster_kmeans(tmp_path, cases_csv):
    assert main(["cluster", "--input", str(cases_csv), "--algo", "kmeans", "--k", "3", "--out", str(tmp_path)]) == 0
    summary = rows(tmp_path / "cluster_summary.csv")
    assert [r["cluster"] for r in summary if int(r["size"])] == ["0", "1", "2"]
    assert "noise" not in set(read_cluster_labels(tmp_path / "clusters.geojson"))


def test_cluster_rejects_inapplicable_flag(tmp_path, cases_csv, capsys):
    code = main(["cluster", "--input", str(cases_csv), "--algo", "dbscan", "--k", "3", "--out", str(tmp_path)])
    assert code == 2
    assert "--k" in capsys.readouterr().err
    assert not (tmp_path / "manifest.json").exists()


def test_cluster_optics_writes_reachability(tmp_path, cases_csv):
    assert main(["cluster", "--input", str(cases_csv), "--algo", "optics", "--eps-cut-km", "1.5",
                 "--out", str(tmp_path)]) == 0
    reach = rows(tmp_path / "reachability.csv")
    assert len(reach) == 95
    assert (tmp_path / "reachability.svg").exists()
    assert manifest(tmp_path)["params"]["max_eps"] == "inf"


def test_cluster_bad_parameter_is_usage_error(tmp_path, cases_csv):
    assert main(["cluster", "--input", str(cases_csv), "--algo", "dbscan", "--eps-km", "-1",
                 "--out", str(tmp_path)]) == 2


def test_cluster_missing_input_is_data_error(tmp_path):
    assert main(["cluster", "--input", str(tmp_path / "nope.csv"), "--algo", "dbscan", "--out", str(tmp_path)]) == 3


def test_compare(tmp_path, cases_csv):
    assert main(["compare", "--input", str(cases_csv), "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "comparison.csv")
    assert [r["algorithm"] for r in table] == ["kmeans", "kmedoids", "dbscan", "optics"]
    assert all(r["status"] == "ok" for r in table)
    assert "Jhelum,46,48" in (tmp_path / "tehsil_breakdown.csv").read_text()
    assert "Dina,22,23" in (tmp_path / "tehsil_breakdown.csv").read_text()
    for name in ("contingency.csv", "comparison.svg"):
        assert (tmp_path / name).exists()


def test_compare_empty_input(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("id,lat,lon,tehsil,onset_date,imported\n")
    assert main(["compare", "--input", str(empty), "--out", str(tmp_path / "o")]) == 3


def test_sweep_baseline_row(tmp_path, cases_csv):
    assert main(["sweep", "--input", str(cases_csv), "--eps-grid", "1:2:0.5", "--min-pts-grid", "3,4",
                 "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "sweep.csv")
    assert len(table) == 6
    base = [r for r in table if float(r["eps"]) == 1.5 and r["min_pts"] == "3"]
    assert float(base[0]["ari_vs_baseline"]) == 1.0


def test_sweep_single_point_grid(tmp_path, cases_csv):
    assert main(["sweep", "--input", str(cases_csv), "--eps-grid", "1.5", "--out", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "sweep.csv")) == 1


def test_sweep_two_density(tmp_path):
    data = tmp_path / "td.csv"
    write_csv([CaseRecord(f"p{i}", p, "t") for i, p in enumerate(two_density_points())], data)
    eps = TWO_DENSITY_EPS_KM
    grid = f"{0.8 * eps},{eps},{1.2 * eps}"
    assert main(["sweep", "--input", str(data), "--metric", "equirect", "--eps-km", str(eps),
                 "--eps-grid", grid, "--out", str(tmp_path / "o")]) == 0
    aris = [float(r["ari_vs_baseline"]) for r in rows(tmp_path / "o" / "sweep.csv")]
    assert min(aris) < 0.9


def test_sweep_empty_grid(tmp_path, cases_csv):
    assert main(["sweep", "--input", str(cases_csv), "--eps-grid", "2:1:0.5", "--out", str(tmp_path)]) == 2


def test_parse_grid():
    assert parse_grid("1:2:0.5") == [1.0, 1.5, 2.0]
    assert parse_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
    assert parse_grid("3,4", int) == [3, 4]
    assert parse_grid("") == []


def test_environment_overrides(tmp_path, cases_csv, monkeypatch):
    monkeypatch.setenv("EPICLUST_EPS_KM", "0.5")
    monkeypatch.setenv("EPICLUST_OUT", str(tmp_path))
    assert main(["cluster", "--input", str(cases_csv), "--algo", "dbscan"]) == 0
    assert manifest(tmp_path)["params"]["eps"] == 0.5
    assert main(["cluster", "--input", str(cases_csv), "--algo", "dbscan", "--eps-km", "2"]) == 0
    assert manifest(tmp_path)["params"]["eps"] == 2.0


def test_environment_bad_value(monkeypatch, cases_csv, tmp_path):
    monkeypatch.setenv("EPICLUST_MIN_PTS", "three")
    with pytest.raises(SystemExit) as err:
        main(["cluster", "--input", str(cases_csv), "--algo", "dbscan", "--out", str(tmp_path)])
    assert err.value.code == 2


@pytest.mark.parametrize("algo", ["kmeans", "kmedoids", "dbscan", "optics"])
def test_cluster_reruns_byte_identical(tmp_path, cases_csv, algo):
    for run in ("a", "b"):
        assert main(["cluster", "--input", str(cases_csv), "--algo", algo, "--out", str(tmp_path / run)]) == 0
    names = manifest(tmp_path / "a")["artifacts"]
    for name in names:
        assert (tmp_path / "a" / name).exists()
        if name != "manifest.json":
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
