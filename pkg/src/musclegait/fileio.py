"""Configuration loading and artifact export.

All configs are YAML with a mandatory ``schema`` tag; loaders raise
:class:`SchemaError` for a missing/unknown tag and :class:`ConfigError`
for structurally bad content.  Structured outputs are canonical JSON
(sorted keys, fixed separators) so identical inputs produce identical
bytes; wall-clock timestamps live only in the run manifest.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, SchemaError
from .muscle import MUSCLE_ORDER, JointPath, MuscleAttachment, MuscleParams
from .model import FootParams, LinkParams, ModelParams

__all__ = [
    "SCHEMAS",
    "default_config_path",
    "load_config",
    "load_muscles",
    "load_model",
    "load_domains",
    "load_opt",
    "load_sim",
    "canonical_json",
    "save_json",
    "load_json",
    "write_csv",
    "sha256_file",
    "RunManifest",
]

SCHEMAS = {
    "muscles": "musclegait/muscles/v1",
    "model": "musclegait/model/v1",
    "domains": "musclegait/domains/v1",
    "opt": "musclegait/opt/v1",
    "sim": "musclegait/sim/v1",
    "solution": "musclegait/solution/v1",
    "manifest": "musclegait/manifest/v1",
    "report": "musclegait/report/v1",
}


def default_config_path(kind: str) -> Path:
    """Path of the packaged default config for ``kind``."""
    if kind not in ("muscles", "model", "domains", "opt", "sim"):
        raise ConfigError(f"no packaged default for config kind {kind!r}")
    return Path(str(resources.files("musclegait") / "defaults" / f"{kind}.yaml"))


def load_config(kind: str, path: str | Path | None = None) -> dict:
    """Load and schema-check a YAML config of the given kind."""
    p = Path(path) if path is not None else default_config_path(kind)
    try:
        raw = yaml.safe_load(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}")
    except yaml.YAMLError as exc:
        raise SchemaError(f"unparseable config {p}: {exc}")
    if not isinstance(raw, dict):
        raise SchemaError(f"config {p} must be a mapping")
    tag = raw.get("schema")
    want = SCHEMAS[kind]
    if tag != want:
        raise SchemaError(f"config {p}: schema {tag!r}, expected {want!r}")
    return raw


_MUSCLE_KEYS = ("f_max", "l_opt", "l_slack", "w", "c", "K",
                "n_ecc", "v_max", "eps_ref", "rho")


def load_muscles(path: str | Path | None = None,
                 ) -> dict[str, tuple[MuscleParams, MuscleAttachment]]:
    """Load the muscle set: id -> (params, attachment), in file order."""
    raw = load_config("muscles", path)
    shared = raw.get("shared", {}) or {}
    try:
        entries = raw["muscles"]
    except KeyError:
        raise ConfigError("muscles config lacks a 'muscles' section")
    out: dict[str, tuple[MuscleParams, MuscleAttachment]] = {}
    for mid, spec in entries.items():
        merged = {**shared, **{k: v for k, v in spec.items() if k != "joints"}}
        missing = [k for k in _MUSCLE_KEYS if k not in merged]
        if missing:
            raise ConfigError(f"muscle {mid!r} missing keys {missing}")
        params = MuscleParams(**{k: float(merged[k]) for k in _MUSCLE_KEYS})
        jspecs = spec.get("joints")
        if not jspecs:
            raise ConfigError(f"muscle {mid!r} lists no joints")
        joints = tuple(
            JointPath(joint=j["joint"], r0=float(j["r0"]),
                      theta_ref=float(j["theta_ref"]),
                      theta_max=float(j["theta_max"]),
                      lever=j["lever"], sign=int(j["sign"]))
            for j in jspecs)
        out[mid] = (params, MuscleAttachment(muscle_id=mid, joints=joints))
    unknown = set(out) - set(MUSCLE_ORDER)
    if unknown:
        raise ConfigError(f"unknown muscle ids {sorted(unknown)}")
    return out


def load_model(path: str | Path | None = None) -> ModelParams:
    raw = load_config("model", path)
    try:
        links = {k: LinkParams(**v) for k, v in raw["links"].items()}
        feet = {k: FootParams(**v) for k, v in raw["feet"].items()}
        return ModelParams(
            torso=links["torso"],
            thigh_l=links["thigh_l"], shank_l=links["shank_l"],
            foot_l=feet["foot_l"],
            thigh_r=links["thigh_r"], shank_r=links["shank_r"],
            foot_r=feet["foot_r"],
            g=float(raw["gravity"]), mu=float(raw["friction_mu"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad model config: {exc}")


def load_domains(path: str | Path | None = None) -> dict:
    return load_config("domains", path)


def load_opt(path: str | Path | None = None) -> dict:
    raw = load_config("opt", path)
    for key in ("nodes_per_domain", "solver", "bounds", "variants"):
        if key not in raw:
            raise ConfigError(f"opt config lacks {key!r}")
    return raw


def load_sim(path: str | Path | None = None) -> dict:
    raw = load_config("sim", path)
    if "integrator" not in raw:
        raise ConfigError("sim config lacks 'integrator'")
    return raw


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    """Deterministic JSON text for structured outputs."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1,
                      separators=(",", ": ")) + "\n"


def save_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(canonical_json(obj))


def load_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())


def write_csv(path: str | Path, header: list[str],
              rows: "np.ndarray | list") -> None:
    """Trajectory table with repr-exact floats (round-trippable)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in np.asarray(rows):
            w.writerow([format(float(v), ".17g") for v in row])


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance record for one CLI run.

    Timestamps live here and only here, keeping the data artifacts
    byte-stable across reruns with identical inputs.
    """

    command: str
    variant: str | None
    seed: int | None
    tool_version: str
    out_dir: str
    config_paths: dict[str, str] = field(default_factory=dict)
    input_hashes: dict[str, str] = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    schema: str = SCHEMAS["manifest"]

    @staticmethod
    def now() -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def add_config(self, kind: str, path: str | Path) -> None:
        self.config_paths[kind] = str(path)
        self.input_hashes[kind] = sha256_file(path)

    def save(self, path: str | Path) -> None:
        save_json(self, path)
