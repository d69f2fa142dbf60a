"""CLI subcommand smoke tests and exit-code taxonomy.

The expensive synthesize/simulate paths are exercised end to end in
test_acceptance; here we run the fast subcommands for real and check
that error conditions map to the documented exit codes.
"""
import json
import shutil

import pytest
import yaml

from musclegait.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SCHEMA, main)
from musclegait.fileio import default_config_path


def run(argv):
    return main(argv)


class TestFitMuscles:
    def test_writes_report_and_manifest(self, tmp_path):
        rc = run(["fit-muscles", "--out", str(tmp_path)])
        assert rc == EXIT_OK
        rep = json.loads((tmp_path / "muscle_fits.json").read_text())
        assert rep["kind"] == "muscle-fits"
        assert len(rep["fits"]) == 10
        for entry in rep["fits"].values():
            assert entry["f_v"]["max_rel_error"] <= 0.02
            assert entry["f_se"]["max_rel_error"] <= 0.02
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["command"] == "fit-muscles"
        assert "muscles" in man["input_hashes"]

    def test_unachievable_tolerance_fails(self, tmp_path):
        rc = run(["fit-muscles", "--out", str(tmp_path), "--tol", "1e-9"])
        assert rc == 1


class TestCheckModel:
    def test_all_checks_pass(self, tmp_path):
        rc = run(["check-model", "--out", str(tmp_path),
                  "--samples", "20"])
        assert rc == EXIT_OK
        rep = json.loads((tmp_path / "model_checks.json").read_text())
        assert rep["ok"]
        assert all(c["ok"] for c in rep["checks"].values())


class TestReport:
    def test_merges_artifacts(self, tmp_path):
        sim = {"schema": "musclegait/report/v1", "kind": "simulation",
               "cycles_completed": 3, "fell": False,
               "residuals": [1e-4], "cycle_times": [1.0]}
        p = tmp_path / "sim_report.json"
        p.write_text(json.dumps(sim))
        rc = run(["report", "--out", str(tmp_path / "out"), str(p)])
        assert rc == EXIT_OK
        merged = json.loads(
            (tmp_path / "out" / "report.json").read_text())
        assert "sim_report" in merged["entries"]
        md = (tmp_path / "out" / "report.md").read_text()
        assert "sim_report" in md and "ok" in md


class TestExitCodes:
    def test_missing_config_file_is_config_error(self, tmp_path):
        rc = run(["fit-muscles", "--out", str(tmp_path),
                  "--muscles", str(tmp_path / "nope.yaml")])
        assert rc == EXIT_CONFIG

    def test_wrong_schema_tag_is_schema_error(self, tmp_path):
        raw = yaml.safe_load(default_config_path("muscles").read_text())
        raw["schema"] = "musclegait/bogus/v9"
        bad = tmp_path / "muscles.yaml"
        bad.write_text(yaml.safe_dump(raw))
        rc = run(["fit-muscles", "--out", str(tmp_path),
                  "--muscles", str(bad)])
        assert rc == EXIT_SCHEMA

    def test_config_root_override(self, tmp_path, monkeypatch):
        root = tmp_path / "root"
        root.mkdir()
        shutil.copy(default_config_path("muscles"), root / "muscles.yaml")
        monkeypatch.setenv("MUSCLEGAIT_CONFIG_ROOT", str(root))
        rc = run(["fit-muscles", "--out", str(tmp_path / "o")])
        assert rc == EXIT_OK
        man = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert str(root / "muscles.yaml") in str(man["config_paths"])

    def test_unknown_variant_is_config_error(self, tmp_path):
        rc = run(["synthesize", "--out", str(tmp_path),
                  "--variant", "bogus"])
        assert rc == EXIT_CONFIG
