"""Config loading, schema checks, canonical serialization."""
import numpy as np
import pytest
import yaml

from musclegait.errors import ConfigError, SchemaError
from musclegait.fileio import (RunManifest, SCHEMAS, canonical_json,
                               default_config_path, load_config, load_json,
                               load_model, load_muscles, load_opt, load_sim,
                               save_json, sha256_file, write_csv)
from musclegait.muscle import MUSCLE_ORDER


class TestLoaders:
    def test_default_muscle_set_complete(self, muscles):
        assert set(muscles) == set(MUSCLE_ORDER)
        for mid, (params, att) in muscles.items():
            assert att.muscle_id == mid
            assert 1 <= len(att.joints) <= 2

    def test_shared_keys_merged(self, muscles):
        # shared curve-shape constants apply to every muscle
        ws = {p.w for p, _ in muscles.values()}
        assert ws == {0.56}

    def test_right_leg_muscles_are_hip_only(self, muscles):
        for mid in ("ham_r", "glu_r", "hfl_r"):
            _, att = muscles[mid]
            assert att.spanned_joints == ("hip_r",)

    def test_model_loads(self, model):
        assert model.params.g == 9.81
        assert model.params.mu == 0.6

    def test_opt_has_variants(self, opt_config):
        assert set(opt_config["variants"]) == {
            "untuned", "untuned_muscles", "tuned", "tuned_muscles"}

    def test_sim_loads(self, sim_config):
        assert sim_config["integrator"]["rtol"] > 0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            default_config_path("nonsense")

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError):
            load_config("model", "/nonexistent/model.yaml")

    def test_wrong_schema_tag_rejected(self, tmp_path):
        p = tmp_path / "model.yaml"
        p.write_text(yaml.safe_dump({"schema": "musclegait/opt/v1"}))
        with pytest.raises(SchemaError):
            load_config("model", p)

    def test_missing_schema_tag_rejected(self, tmp_path):
        p = tmp_path / "m.yaml"
        p.write_text(yaml.safe_dump({"links": {}}))
        with pytest.raises(SchemaError):
            load_config("model", p)

    def test_non_mapping_rejected(self, tmp_path):
        p = tmp_path / "m.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(SchemaError):
            load_config("model", p)

    def test_muscles_missing_key_rejected(self, tmp_path):
        raw = yaml.safe_load(default_config_path("muscles").read_text())
        del raw["shared"]["K"]
        del raw["muscles"]["sol_l"]["joints"]
        p = tmp_path / "muscles.yaml"
        p.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError):
            load_muscles(p)


class TestCanonicalJson:
    def test_key_order_independent(self):
        a = canonical_json({"b": 1, "a": [1, 2]})
        b = canonical_json({"a": [1, 2], "b": 1})
        assert a == b

    def test_numpy_scalars_and_arrays(self):
        s = canonical_json({"x": np.float64(0.5), "v": np.arange(3)})
        assert '"x": 0.5' in s and "[" in s

    def test_roundtrip(self, tmp_path):
        obj = {"a": 1.25, "b": ["x", 2], "c": {"d": None}}
        p = tmp_path / "o.json"
        save_json(obj, p)
        assert load_json(p) == obj

    def test_repeat_serialization_byte_identical(self, tmp_path):
        obj = {"x": 1 / 3, "y": list(range(10))}
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_json(obj, p1)
        save_json(obj, p2)
        assert sha256_file(p1) == sha256_file(p2)


class TestCsvAndManifest:
    def test_csv_roundtrip_exact(self, tmp_path, rng):
        rows = rng.standard_normal((5, 3))
        p = tmp_path / "t.csv"
        write_csv(p, ["a", "b", "c"], rows)
        back = np.loadtxt(p, delimiter=",", skiprows=1)
        assert np.array_equal(back, rows)

    def test_manifest_records_hashes(self, tmp_path):
        m = RunManifest(command="synthesize", variant="tuned", seed=0,
                        tool_version="0.0", out_dir=str(tmp_path))
        m.add_config("model", default_config_path("model"))
        assert len(m.input_hashes["model"]) == 64
        m.save(tmp_path / "manifest.json")
        d = load_json(tmp_path / "manifest.json")
        assert d["schema"] == SCHEMAS["manifest"]
