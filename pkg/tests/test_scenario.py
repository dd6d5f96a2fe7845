from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotwave.errors import SchemaError, SemanticError
from pilotwave.experiments import PRESETS
from pilotwave.scenario import (SCHEMA_VERSION, from_document, params_schema, parse_scenario, scenario_schema,
                                validate_document)


def _doc(preset="pointer-readout", **params):
    return {"schema_version": SCHEMA_VERSION, "preset": preset, "params": params}


def test_preset_name_resolves_to_defaults():
    spec = parse_scenario("double-slit")
    assert spec.params == PRESETS["double-slit"].defaults
    assert spec.trajectories == PRESETS["double-slit"].trajectories
    assert spec.seed == 0


def test_normalization_violation_is_semantic():
    with pytest.raises(SemanticError, match="normalization"):
        from_document(_doc(c1=1.0, c2=1.0))


def test_unknown_key_names_the_key():
    with pytest.raises(SchemaError, match="pointer_widht"):
        from_document(_doc(pointer_widht=0.3))


def test_wrong_type_names_key_and_constraint():
    with pytest.raises(SchemaError) as exc:
        from_document(_doc(pointer_width=-0.3))
    assert "pointer_width" in str(exc.value) and "exclusiveMinimum" in str(exc.value)


def test_unknown_preset_and_version():
    with pytest.raises(SchemaError):
        validate_document({"schema_version": SCHEMA_VERSION, "preset": "nope"})
    with pytest.raises(SchemaError):
        validate_document({"schema_version": 99, "preset": "numerics"})


def test_seed_range_enforced():
    with pytest.raises(SchemaError):
        from_document({**_doc(), "ensemble": {"seed": 2**64}})
    assert from_document({**_doc(), "ensemble": {"seed": 2**64 - 1}}).seed == 2**64 - 1


def test_pointer_width_override_recomputes_guard():
    spec = from_document(_doc(pointer_width=0.3))
    d = spec.to_dict()
    assert d["params"]["pointer_width"] == 0.3
    assert d["derived"]["guard_distance"] == pytest.approx(1.8)
    assert d["derived"]["pointer_displacement"] == pytest.approx(1.8)


def test_stale_derived_block_rejected():
    d = from_document(_doc(pointer_width=0.3)).to_dict()
    d["params"]["pointer_width"] = 0.4
    with pytest.raises(SemanticError, match="guard_distance"):
        from_document(d)


def test_snapshot_longer_than_run_rejected():
    with pytest.raises(SemanticError):
        from_document(_doc("free-gaussian", duration=0.1, snapshot_interval=0.5))


def test_scenario_file_and_bad_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(_doc(c1=0.6, c2=0.8)))
    assert parse_scenario(str(p)).params["c1"] == 0.6
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        parse_scenario(str(p))
    with pytest.raises(SchemaError):
        parse_scenario(str(tmp_path / "missing.json"))


def test_schema_is_valid_json_schema():
    import jsonschema
    jsonschema.Draft202012Validator.check_schema(scenario_schema())
    for name in PRESETS:
        jsonschema.Draft202012Validator.check_schema(params_schema(name))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_round_trips(name):
    spec = parse_scenario(name, trajectories=17, seed=5)
    again = from_document(json.loads(spec.to_json()))
    assert again == spec
    assert again.to_json() == spec.to_json()


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.2, 0.8), st.floats(0.05, 0.5), st.integers(1, 10**6),
       st.integers(0, 2**64 - 1))
def test_measurement_round_trip_property(p1, w, settle, n, seed):
    doc = {**_doc(c1=p1**0.5, pointer_width=w, settle_time=settle), "ensemble": {"trajectories": n, "seed": seed}}
    spec = from_document(doc)
    text = spec.to_json()
    again = from_document(json.loads(text))
    assert again == spec and again.to_json() == text
    assert again.derived()["guard_distance"] == pytest.approx(6 * w, rel=1e-12)
