import json

import jsonschema
import pytest

from anisodnl.cli import REPORT_SCHEMA, main


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def constant_config(tmp_path):
    return write_config(tmp_path, "constant.json", {
        "scenario": "constant", "preset": "constant",
        "grid": [9, 9], "n_steps": 4})


INLINE_PROBLEM = {
    "box": [1.0], "T": 0.2, "p": [2.0], "m": [1.5], "sigma": 3.0,
    "coeffs": [{"kind": "constant", "value": 1.0}],
    "f": {"kind": "constant", "value": 0.0},
    "g": {"kind": "constant", "value": 0.0},
    "u0": {"kind": "bump", "amplitude": 0.3},
}


class TestRun:
    def test_constant_scenario_artifacts(self, tmp_path):
        cfg = constant_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        jsonschema.validate(report, REPORT_SCHEMA)
        assert report["violations"] == []
        assert report["results"]["direct_deviation"] <= 1e-9
        assert "wall_time" not in json.dumps(report)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["schema"] == "anisodnl-manifest/1"
        for name in manifest["files"]:
            assert (out / name).exists()

    def test_determinism(self, tmp_path):
        cfg = write_config(tmp_path, "comp.json", {
            "scenario": "comparison", "preset": "porous-cascade",
            "grid": [17], "n_steps": 8, "k": 4})
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["run", "--config", cfg, "--out", str(out),
                         "--seed", "3"]) == 0
            outs.append(json.loads((out / "manifest.json").read_text()))
        assert outs[0] == outs[1]

    def test_inline_problem_cascade(self, tmp_path):
        cfg = write_config(tmp_path, "inline.json", {
            "scenario": "cascade", "ks": [2, 4], "grid": [9],
            "n_steps": 4, "problem": INLINE_PROBLEM})
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["violations"] == []
        assert (out / "distances.csv").read_text().startswith(
            "k_low,k_high,distance")

    def test_grid_and_k_overrides(self, tmp_path):
        cfg = write_config(tmp_path, "casc.json", {
            "scenario": "cascade", "preset": "porous-cascade",
            "n_steps": 4})
        out = tmp_path / "out"
        assert main(["run", "--config", cfg, "--out", str(out),
                     "--grid", "9", "--k", "2,4"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["results"]["ks"] == [2, 4]

    def test_unknown_scenario(self, tmp_path):
        cfg = write_config(tmp_path, "bad.json", {"scenario": "nope"})
        with pytest.raises(SystemExit, match="unknown scenario"):
            main(["run", "--config", cfg, "--out", str(tmp_path / "o")])

    def test_parse_error_diagnostic(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{broken")
        with pytest.raises(SystemExit, match="line 1"):
            main(["run", "--config", str(path),
                  "--out", str(tmp_path / "o")])

    def test_missing_problem_key(self, tmp_path):
        problem = dict(INLINE_PROBLEM)
        del problem["coeffs"]
        cfg = write_config(tmp_path, "inc.json", {
            "scenario": "cascade", "problem": problem})
        with pytest.raises(SystemExit, match="coeffs"):
            main(["run", "--config", cfg, "--out", str(tmp_path / "o")])


class TestValidate:
    def test_admissible_preset(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "v.json", {
            "scenario": "cascade", "preset": "porous-cascade"})
        assert main(["validate", "--config", cfg]) == 0
        text = capsys.readouterr().out
        assert "cascade: enabled" in text

    def test_closeness_violation_disables_cascade(self, tmp_path, capsys):
        problem = {
            "box": [1.0, 1.0], "T": 0.2, "p": [3.0, 2.0],
            "m": [1.0, 2.0], "sigma": 3.0,
            "coeffs": [{"kind": "constant", "value": 1.0},
                       {"kind": "constant", "value": 1.0}],
            "f": {"kind": "constant", "value": 0.0},
            "g": {"kind": "constant", "value": 0.0},
            "u0": {"kind": "constant", "value": 0.5}}
        cfg = write_config(tmp_path, "v.json", {
            "scenario": "cascade", "problem": problem})
        assert main(["validate", "--config", cfg]) == 1
        text = capsys.readouterr().out
        assert "FAIL  closeness" in text
        assert "cascade: disabled" in text


class TestCalibrate:
    def test_writes_fixtures(self, tmp_path):
        out = tmp_path / "cal"
        assert main(["calibrate", "--out", str(out),
                     "--grid", "9,9"]) == 0
        report = json.loads((out / "calibration.json").read_text())
        jsonschema.validate(report, REPORT_SCHEMA)
        res = report["results"]
        assert res["b_sandwich"]["1.0"] == pytest.approx(2.2)
        assert res["power_inequality"]["2.0"] == pytest.approx(2.2)
        assert res["troisi_p2.0_2.0"] > 0.0
