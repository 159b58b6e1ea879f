import json
import math
import subprocess
import sys

import numpy as np
import pytest

from saddlescope.cli import _parse_range, main


def run(argv, tmp_path, name="out.json"):
    path = tmp_path / name
    code = main(argv + ["--json", str(path)])
    return code, (json.loads(path.read_text()) if path.exists() else None)


def strip_meta(doc):
    return {k: v for k, v in doc.items() if k != "metadata"}


class TestFixedPoints:
    def test_mu1(self, tmp_path):
        code, doc = run(["fixed-points", "--mu", "1"], tmp_path)
        assert code == 0
        assert doc["schema_version"] == "1.0" and doc["command"] == "fixed-points"
        fps = doc["result"]["fixed_points"]
        assert len(fps) == 2
        origin = next(r for r in fps if np.allclose(r["location"], [0, 0]))
        assert origin["classification"] == "SaddlePositive"

    def test_mu4_degenerate(self, tmp_path, capsys):
        code, doc = run(["fixed-points", "--mu", "4"], tmp_path)
        assert code == 0
        q = next(r for r in doc["result"]["fixed_points"] if np.allclose(r["location"], [0.5, 0]))
        assert q["classification"] == "Degenerate"
        assert "excluded" in capsys.readouterr().err

    def test_mu0_trivial_twist(self, tmp_path, capsys):
        code, doc = run(["fixed-points", "--mu", "0"], tmp_path)
        assert code == 0
        assert doc["result"]["fixed_points"] == []
        assert "trivial twist" in capsys.readouterr().err

    def test_missing_mu(self, tmp_path):
        assert run(["fixed-points"], tmp_path)[0] == 2

    def test_bad_tolerance(self):
        with pytest.raises(SystemExit) as exc:
            main(["homoclinic", "--mu", "1.5", "--tube-tol", "0"])
        assert exc.value.code == 2


class TestHomoclinic:
    def test_excluded_parameter(self, tmp_path, capsys):
        code, doc = run(["homoclinic", "--mu", "4"], tmp_path)
        assert code == 4 and doc is None
        assert "mu = 4" in capsys.readouterr().err

    def test_all_pairs(self, tmp_path):
        code, doc = run(["homoclinic", "--mu", "1.5", "--csv-dir", str(tmp_path / "csv")], tmp_path)
        assert code == 0
        pairs = doc["result"]["pairs"]
        assert len(pairs) == 4 and all(p["transverse"] >= 1 for p in pairs)
        assert doc["result"]["omega"]["component_count"] >= 2
        assert sorted(f.name for f in (tmp_path / "csv").glob("*.csv")) == ["SMinus.csv", "SPlus.csv",
                                                                             "UMinus.csv", "UPlus.csv"]
        header = (tmp_path / "csv" / "UPlus.csv").read_text().splitlines()[0]
        assert header == "t,x,y"

    def test_single_pair(self, tmp_path):
        code, doc = run(["homoclinic", "--mu", "1.5", "--pairs", "UPlus-SPlus", "--no-omega"], tmp_path)
        assert code == 0
        assert [p["pair"] for p in doc["result"]["pairs"]] == ["UPlus-SPlus"]

    def test_bad_pair(self, tmp_path):
        assert run(["homoclinic", "--mu", "1.5", "--pairs", "SPlus-UPlus"], tmp_path)[0] == 2

    def test_tmax(self, tmp_path):
        code, doc = run(["homoclinic", "--mu", "1.5", "--pairs", "UPlus-SPlus", "--tmax", "50", "--no-omega"],
                        tmp_path)
        assert code == 0
        assert doc["result"]["arcs"]["UPlus"]["tmax"] == pytest.approx(50.0)


class TestEntropy:
    def test_cat_growth(self, tmp_path):
        code, doc = run(["entropy", "--map", "cat", "--method", "growth"], tmp_path)
        assert code == 0
        oracle = math.log((3 + math.sqrt(5)) / 2)
        assert abs(doc["result"]["growth"]["bound"] - oracle) <= 0.02 * oracle

    def test_horseshoe_mu08(self, tmp_path):
        mask = tmp_path / "mask.pgm"
        code, doc = run(["entropy", "--mu", "0.8", "--method", "horseshoe", "--mask", str(mask)], tmp_path)
        assert code == 0
        hs = doc["result"]["horseshoe"]
        assert hs["n"] <= 40 and hs["bound"] == math.log(2) / hs["n"]
        assert mask.read_text().startswith("P2")

    @pytest.mark.slow
    def test_mu6_both(self, tmp_path):
        code, doc = run(["entropy", "--mu", "6", "--method", "both"], tmp_path)
        assert code == 0
        assert doc["result"]["growth"]["bound"] > 0 and doc["result"]["horseshoe"]["bound"] > 0


class TestOther:
    @pytest.mark.parametrize("fixture,ends", [("cross.json", 1), ("circle_segments", 2)])
    def test_ends(self, tmp_path, fixture, ends):
        code, doc = run(["ends", "--fixture", fixture], tmp_path)
        assert code == 0 and doc["result"]["ends"] == ends

    def test_ends_missing_fixture(self, tmp_path):
        assert run(["ends", "--fixture", "nope"], tmp_path)[0] == 2

    def test_rotation(self, tmp_path):
        xi = tmp_path / "xi.csv"
        code, doc = run(["rotation", "--mu", "1", "--r0", "1e-3", "--n", "7", "--csv", str(xi)], tmp_path)
        assert code == 0
        trap = doc["result"]["trap"]
        assert trap["closed"] and trap["k"] == 1 and trap["winding_number"] == 1
        assert xi.read_text().splitlines()[0] == "x,y"

    def test_rotation_not_elliptic(self, tmp_path):
        assert run(["rotation", "--mu", "5"], tmp_path)[0] == 2

    def test_sweep_determinism(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SADDLESCOPE_THREADS", raising=False)
        _, a = run(["sweep", "--mu-range", "0.5:2:0.5"], tmp_path, "a.json")
        monkeypatch.setenv("SADDLESCOPE_THREADS", "2")
        _, b = run(["sweep", "--mu-range", "0.5:2:0.5"], tmp_path, "b.json")
        assert a["result"] == b["result"]
        assert [r["mu"] for r in a["result"]["rows"]] == [0.5, 1.0, 1.5, 2.0]

    def test_bad_thread_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SADDLESCOPE_THREADS", "zero")
        assert run(["sweep", "--mu-range", "1:1:1"], tmp_path)[0] == 2

    def test_repeat_runs_identical(self, tmp_path):
        _, a = run(["fixed-points", "--mu", "2", "--seed", "7"], tmp_path, "a.json")
        _, b = run(["fixed-points", "--mu", "2", "--seed", "7"], tmp_path, "b.json")
        assert json.dumps(strip_meta(a)) == json.dumps(strip_meta(b))
        assert a["config"]["seed"] == 7

    def test_parse_range(self):
        assert _parse_range("0.5:6:0.5") == [0.5 * k for k in range(1, 13)]


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "saddlescope", "fixed-points", "--map", "cat"],
                         capture_output=True, text=True, check=True)
    doc = json.loads(out.stdout)
    assert doc["result"]["fixed_points"][0]["classification"] == "SaddlePositive"
