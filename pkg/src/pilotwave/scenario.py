"""Scenario documents: schema, parsing and round-trip serialization.

A scenario is a JSON object::

    {"schema_version": 1,
     "preset": "pointer-readout",
     "params": {"c1": 0.5477, "pointer_width": 0.4},
     "ensemble": {"trajectories": 10000, "seed": 7}}

``params`` overrides the preset defaults key by key.  The serialized form
written by :meth:`ScenarioSpec.to_dict` carries every resolved parameter plus
a ``derived`` block (quantities computed from the parameters, such as the
pointer separation guard).  A ``derived`` block in an input file must agree
with the recomputed one, so a stale echo is caught.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field

import jsonschema

from .equilibrium import EnsembleSpec
from .errors import PilotWaveError, SchemaError, SemanticError
from .experiments import PRESETS, _axis, get_preset, measurement_scenario

SCHEMA_VERSION = 1
SEED_MAX = 2**64 - 1

_GRID = {
    "type": "object",
    "properties": {"min": {"type": "number"}, "max": {"type": "number"},
                   "points": {"type": "integer", "minimum": 16}},
    "required": ["min", "max", "points"],
    "additionalProperties": False,
}
_COMPLEX = {"anyOf": [{"type": "number"},
                      {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_SHAPE = {"type": "string", "enum": ["gaussian", "cauchy"]}

# Parameters that must be strictly positive or non-negative.
_POSITIVE = {"system_width", "pointer_width", "camera_width", "pointer_cutoff", "camera_cutoff",
             "coupling_duration", "separation_guard", "localization_tolerance", "snapshot_interval",
             "sigma0", "mass", "duration", "screen_time", "sigma", "transverse_sigma", "step_tolerance",
             "overlap_limit", "prior_sigma", "tv_limit", "omega", "t_mid", "separation", "offset"}
_NONNEGATIVE = {"settle_time", "camera_settle_time", "coupling"}
_NULLABLE_POSITIVE = {"pointer_displacement", "camera_displacement"}


def _param_schema(key: str, default) -> dict:
    if key in ("c1", "c2"):
        return {"anyOf": [_COMPLEX, {"type": "null"}]} if default is None else _COMPLEX
    if key.endswith("_shape"):
        return _SHAPE
    if key.endswith("_grid") or key == "grid":
        return {"anyOf": [_GRID, {"type": "null"}]} if default is None else _GRID
    if key in _NULLABLE_POSITIVE:
        return {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"type": "null"}]}
    if isinstance(default, bool):
        return {"type": "boolean"}
    if isinstance(default, int):
        return {"type": "integer", "minimum": 1}
    if isinstance(default, float):
        s = {"type": "number"}
        if key in _POSITIVE:
            s["exclusiveMinimum"] = 0
        elif key in _NONNEGATIVE:
            s["minimum"] = 0
        return s
    if isinstance(default, list):
        return {"type": "array", "items": {"type": "number"}, "minItems": len(default), "maxItems": len(default)}
    raise TypeError(f"no schema rule for parameter {key!r}")


def params_schema(preset: str) -> dict:
    defaults = get_preset(preset).defaults
    return {"type": "object",
            "properties": {k: _param_schema(k, v) for k, v in defaults.items()},
            "additionalProperties": False}


def scenario_schema() -> dict:
    """The published JSON schema for scenario files (all presets)."""
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "pilotwave scenario",
        "type": "object",
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "preset": {"type": "string", "enum": sorted(PRESETS)},
            "params": {"type": "object"},
            "ensemble": {
                "type": "object",
                "properties": {"trajectories": {"type": "integer", "minimum": 1},
                               "seed": {"type": "integer", "minimum": 0, "maximum": SEED_MAX}},
                "additionalProperties": False,
            },
            "derived": {"type": "object"},
        },
        "required": ["schema_version", "preset"],
        "additionalProperties": False,
        "allOf": [{"if": {"properties": {"preset": {"const": name}}},
                   "then": {"properties": {"params": params_schema(name)}}} for name in sorted(PRESETS)],
    }


@dataclass
class ScenarioSpec:
    preset: str
    params: dict
    trajectories: int
    seed: int = 0
    overrides: dict = field(default_factory=dict, compare=False)

    @property
    def is_measurement(self) -> bool:
        return "c1" in self.params

    def derived(self) -> dict:
        if not self.is_measurement:
            return {}
        s = measurement_scenario(self.params)
        d = {"guard_distance": s.guard_distance, "pointer_displacement": s.pointer_shift,
             "pointer_density_std": s.pointer.density_std}
        if s.camera_axis is not None:
            d["camera_displacement"] = s.camera_shift
        return d

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(self.trajectories, self.seed)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "preset": self.preset, "params": copy.deepcopy(self.params),
                "ensemble": {"trajectories": self.trajectories, "seed": self.seed}, "derived": self.derived()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _schema_error(err: jsonschema.ValidationError) -> SchemaError:
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return SchemaError(f"{path}: {err.message} (constraint: {err.validator})")


def validate_document(doc) -> None:
    """Raise :class:`SchemaError` naming the offending key if ``doc`` is not a valid scenario."""
    validator = jsonschema.Draft202012Validator(scenario_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise _schema_error(err)


def _semantic_checks(spec: ScenarioSpec) -> None:
    p = spec.params
    try:
        if spec.is_measurement:
            measurement_scenario(p)
        for k, v in p.items():
            if (k == "grid" or k.endswith("_grid")) and v is not None:
                _axis(v, k)
    except SemanticError:
        raise
    except PilotWaveError as e:
        raise SemanticError(str(e)) from e
    for k in ("duration", "screen_time", "coupling_duration"):
        if k in p and "snapshot_interval" in p and p["snapshot_interval"] > p[k]:
            raise SemanticError(f"snapshot_interval {p['snapshot_interval']} exceeds {k} {p[k]}")


def from_document(doc: dict, *, trajectories: int | None = None, seed: int | None = None) -> ScenarioSpec:
    validate_document(doc)
    pre = get_preset(doc["preset"])
    params = copy.deepcopy(pre.defaults)
    overrides = copy.deepcopy(doc.get("params", {}))
    params.update(overrides)
    ens = doc.get("ensemble", {})
    n = trajectories if trajectories is not None else ens.get("trajectories", pre.trajectories)
    sd = seed if seed is not None else ens.get("seed", 0)
    if not 0 <= int(sd) <= SEED_MAX:
        raise SchemaError(f"ensemble/seed: {sd} is not a 64-bit unsigned integer")
    if int(n) < 1:
        raise SchemaError(f"ensemble/trajectories: {n} is less than the minimum of 1")
    spec = ScenarioSpec(pre.name, params, int(n), int(sd), overrides)
    _semantic_checks(spec)
    if "derived" in doc:
        fresh = spec.derived()
        for k, v in doc["derived"].items():
            if k not in fresh or not math.isclose(float(v), fresh[k], rel_tol=1e-12, abs_tol=1e-15):
                raise SemanticError(f"derived/{k}: stored value {v} disagrees with recomputed "
                                    f"{fresh.get(k)} from the parameters")
    return spec


def parse_scenario(source, *, trajectories: int | None = None, seed: int | None = None) -> ScenarioSpec:
    """Resolve a preset name, a scenario file path or an already-loaded document."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and source in PRESETS:
        doc = {"schema_version": SCHEMA_VERSION, "preset": source}
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{source}: not valid JSON ({e})") from e
    else:
        raise SchemaError(f"{source!r} is neither a preset name nor an existing scenario file; "
                          f"presets: {', '.join(sorted(PRESETS))}")
    return from_document(doc, trajectories=trajectories, seed=seed)
