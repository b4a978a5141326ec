import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from zcurve_fdr.cli import main
from zcurve_fdr.estimands import soric_fdr
from zcurve_fdr.exchange import write_reports
from zcurve_fdr.folded_normal import power
from zcurve_fdr.observations import EXACT, PValueReport
from scipy.special import ndtr

from .conftest import significant_z


def _write_obs(path, z, journals=("J1",)):
    p = 2.0 * ndtr(-np.asarray(z))
    reps = [
        PValueReport(float(v), EXACT, source_id=f"s{i}", group_keys={"journal": journals[i % len(journals)], "year": str(2005 + i % 10)})
        for i, v in enumerate(p)
    ]
    write_reports(path, reps)
    return str(path)


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def mu3_file(tmp_path):
    return _write_obs(tmp_path / "mu3.csv", significant_z(3.0, 2000, seed=21), journals=("J1", "J2"))


class TestExtract:
    def test_fixture_corpus(self, in_tmp, corpus_path, capsys):
        assert main(["extract", str(corpus_path), "-o", "obs.csv", "--summary", "table.csv"]) == 0
        with open("obs.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 47
        assert {"journal", "year", "study_type"} <= set(rows[0])
        with open("table.csv") as fh:
            table = list(csv.DictReader(fh))
        assert table[-1]["journal"] == "Total" and table[-1]["abstracts"] == "12"
        assert (in_tmp / "obs.csv.manifest.json").exists()
        assert "47 statistic(s)" in capsys.readouterr().out

    def test_one_per_abstract(self, in_tmp, corpus_path):
        assert main(["extract", str(corpus_path), "-o", "one.jsonl", "--one-per-abstract", "--seed", "3"]) == 0
        lines = (in_tmp / "one.jsonl").read_text().splitlines()
        assert len(lines) == 10
        assert len({json.loads(x)["source_id"] for x in lines}) == 10

    def test_types_none(self, in_tmp, corpus_path, caplog):
        assert main(["extract", str(corpus_path), "-o", "none.csv", "--types", "none"]) == 0
        assert (in_tmp / "none.csv").read_text().splitlines() == ["source_id,kind,value,decimals,lower,upper,level,scale"]
        assert "no abstracts selected" in caplog.text

    def test_missing_file(self, in_tmp):
        assert main(["extract", "missing.jsonl", "-o", "x.csv"]) == 2

    def test_bad_type(self, in_tmp, corpus_path):
        assert main(["extract", str(corpus_path), "-o", "x.csv", "--types", "cohort"]) == 2

    def test_max_errors(self, in_tmp, corpus_path):
        bad = in_tmp / "bad.jsonl"
        bad.write_text(corpus_path.read_text() + "{}\n{}\n")
        assert main(["extract", str(bad), "-o", "x.csv", "--max-errors", "1"]) == 1
        assert main(["extract", str(bad), "-o", "x.csv", "--max-errors", "2"]) == 0


class TestFit:
    def test_single_mu(self, in_tmp, mu3_file, capsys):
        assert main(["fit", mu3_file, "--replicates", "0", "--out", "res.json"]) == 0
        out = json.loads((in_tmp / "res.json").read_text())
        (g,) = out["groups"]
        assert g["group"] == "All" and g["status"] == "ok"
        assert abs(g["result"]["estimands"]["fdr"] - soric_fdr(power(3.0, 0.05))) < 0.02
        assert out["manifest"] == "res.json.manifest.json"
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split()[:4] == ["group", "n", "n_sig", "odr"]
        assert len(lines) == 3

    def test_lower_alpha_lowers_fdr(self, in_tmp, mu3_file):
        fdr = {}
        for a in ("0.05", "0.01"):
            assert main(["fit", mu3_file, "--replicates", "0", "--alpha", a, "--out", f"r{a}.json"]) == 0
            fdr[a] = json.loads((in_tmp / f"r{a}.json").read_text())["groups"][0]["result"]["estimands"]["fdr"]
        assert fdr["0.01"] <= fdr["0.05"]

    def test_groups_bootstrap_plot_data(self, in_tmp, mu3_file, capsys):
        base = in_tmp / "base.csv"
        base.write_text("group,estimate,lower,upper\nJ1,0.2,0.1,0.3\n")
        args = ["fit", mu3_file, "--group-by", "journal", "--replicates", "20", "--seed", "4",
                "--plot-data", "plot_", "--baseline", str(base), "--out", "g.json", "--table", "t.txt"]
        assert main(args) == 0
        out = json.loads((in_tmp / "g.json").read_text())
        assert [g["group"] for g in out["groups"]] == ["J1", "J2", "Combined"]
        res = out["groups"][0]["result"]
        lo, hi = res["intervals"]["edr"]
        assert lo <= res["estimands"]["edr"] <= hi
        assert res["diagnostics"]["bootstrap"]["replicates"] == 20
        with open(in_tmp / "plot_j1_hist.csv") as fh:
            hist = list(csv.reader(fh))
        assert hist[0] == ["bin_lo", "bin_hi", "count", "density"] and len(hist) == 1 + 60 + 2
        with open(in_tmp / "plot_combined_curve.csv") as fh:
            curve = list(csv.DictReader(fh))
        assert len(curve) == 121 and curve[60]["band_lo"] != ""
        assert "baseline" in (in_tmp / "t.txt").read_text()

    def test_year_split(self, in_tmp, mu3_file):
        assert main(["fit", mu3_file, "--group-by", "year-split", "--replicates", "0", "--out", "y.json"]) == 0
        groups = [g["group"] for g in json.loads((in_tmp / "y.json").read_text())["groups"]]
        assert groups == ["<=2010", ">2010", "Combined"]

    def test_insufficient_group_row(self, in_tmp, capsys):
        z = list(significant_z(2.5, 40, seed=2)) + [3.0] * 3
        path = in_tmp / "mix.csv"
        p = 2.0 * ndtr(-np.asarray(z))
        write_reports(path, [PValueReport(float(v), EXACT, group_keys={"journal": "big" if i < 40 else "tiny"})
                             for i, v in enumerate(p)])
        assert main(["fit", str(path), "--group-by", "journal", "--replicates", "0"]) == 0
        assert "insufficient significant observations" in capsys.readouterr().out

    def test_empty_file(self, in_tmp, caplog):
        (in_tmp / "empty.csv").write_text("source_id,kind,value\n")
        assert main(["fit", "empty.csv", "--replicates", "0"]) == 1
        assert "insufficient significant observations" in caplog.text

    def test_bad_input(self, in_tmp):
        (in_tmp / "bad.csv").write_text("kind,value\np_huge,0.1\n")
        assert main(["fit", "bad.csv"]) == 2
        assert main(["fit", "missing.csv"]) == 2

    def test_bad_component_step(self, in_tmp, mu3_file):
        assert main(["fit", mu3_file, "--component-step", "0.7"]) == 2

    def test_unit_grid(self, in_tmp, mu3_file):
        assert main(["fit", mu3_file, "--replicates", "0", "--component-step", "1", "--out", "u.json"]) == 0
        res = json.loads((in_tmp / "u.json").read_text())["groups"][0]["result"]
        assert res["means"] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]


class TestSimulate:
    ARGS = ["simulate", "--scenario", "A", "--grid-step", "0.5", "--n", "500", "--seed", "7"]

    def test_rows_and_determinism(self, in_tmp):
        assert main(self.ARGS + ["--out", "a.csv", "--summary", "a.json"]) == 0
        assert main(self.ARGS + ["--out", "b.csv"]) == 0
        a, b = (in_tmp / "a.csv").read_bytes(), (in_tmp / "b.csv").read_bytes()
        assert a == b
        assert len(a.decode().splitlines()) == 4
        summary = json.loads((in_tmp / "a.json").read_text())
        assert summary["n_points"] == 3 and summary["power_distribution"].startswith("beta(2,5)")

    def test_scenario_d_styles(self, in_tmp):
        assert main(["simulate", "--scenario", "D", "--grid-step", "1", "--n", "2000", "--out", "d.csv"]) == 0
        with open(in_tmp / "d.csv") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            n = {k: int(r[k]) for k in ("n_exact", "n_rounded", "n_censored")}
            assert sum(n.values()) == 2000
            # exact only when picked for neither rounding (20%) nor a ceiling (20%)
            assert n["n_exact"] / 2000 == pytest.approx(0.64, abs=0.03)
            # ceilings alone give 20%; rounding to 0.00 adds more
            assert n["n_censored"] / 2000 > 0.17

    def test_overlay(self, in_tmp):
        (in_tmp / "ext.csv").write_text("true_fdr,estimated_fdr\n0.0,0.11\n1.0,0.9\n")
        assert main(self.ARGS + ["--overlay", "ext.csv", "--out", "o.csv"]) == 0
        with open(in_tmp / "o.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["external_fdr"] for r in rows] == ["0.11", "", "0.9"]

    @pytest.mark.parametrize(
        "extra",
        [["--grid-step", "0"], ["--scenario", "E"], ["--power-dist", "gamma:1"], ["--n", "0"]],
    )
    def test_usage_errors(self, in_tmp, extra):
        assert main(["simulate"] + extra) == 2


class TestAdjustAlpha:
    def test_high_power(self, in_tmp, capsys):
        path = _write_obs(in_tmp / "hp.csv", significant_z(4.5, 400, seed=11))
        assert main(["adjust-alpha", path, "--target-fdr", "0.05", "--alpha-grid", "0.05,0.01", "--out", "aa.json"]) == 0
        assert json.loads((in_tmp / "aa.json").read_text())["alpha_star"] == 0.05

    def test_null(self, in_tmp, capsys):
        path = _write_obs(in_tmp / "null.csv", significant_z(0.0, 400, seed=12))
        assert main(["adjust-alpha", path, "--alpha-grid", "0.05,0.01"]) == 0
        assert "none qualifies" in capsys.readouterr().out

    @pytest.mark.parametrize("grid", ["", "0.05,abc", "0.05,1.5", "0.05,0.05"])
    def test_malformed_grid(self, in_tmp, grid):
        path = _write_obs(in_tmp / "x.csv", [3.0] * 20)
        assert main(["adjust-alpha", path, "--alpha-grid", grid]) == 2


class TestManifest:
    def test_rerun_byte_identical(self, in_tmp, mu3_file):
        args = ["fit", mu3_file, "--replicates", "5", "--seed", "2", "--out", "r.json"]
        assert main(args) == 0
        first = (in_tmp / "r.json").read_bytes()
        manifest = json.loads((in_tmp / "r.json.manifest.json").read_text())
        assert manifest["seed"] == 2 and manifest["config"]["replicates"] == 5
        assert list(manifest["inputs"]) == [mu3_file]
        (in_tmp / "r.json").unlink()
        assert main(["rerun", "r.json.manifest.json"]) == 0
        assert (in_tmp / "r.json").read_bytes() == first

    def test_rerun_bad_manifest(self, in_tmp):
        (in_tmp / "m.json").write_text("{}")
        assert main(["rerun", "m.json"]) == 2

    def test_config_file(self, in_tmp):
        (in_tmp / "cfg.txt").write_text("# defaults\nn = 300\ngrid-step = 1\nseed = 5\n")
        assert main(["--config", "cfg.txt", "simulate", "--out", "c.csv"]) == 0
        assert len((in_tmp / "c.csv").read_text().splitlines()) == 3
        manifest = json.loads((in_tmp / "c.csv.manifest.json").read_text())
        assert (manifest["config"]["n"], manifest["seed"]) == (300, 5)

    def test_bad_config(self, in_tmp):
        (in_tmp / "cfg.txt").write_text("no equals sign\n")
        assert main(["--config", "cfg.txt", "simulate"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "zcurve_fdr.cli", "simulate", "--grid-step", "1", "--n", "200"],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].startswith("scenario,true_fdr")
    assert "RMSE" in proc.stderr


def test_no_command():
    assert main([]) == 2
