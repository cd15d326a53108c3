import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from leafnet.errors import ConfigError
from leafnet.synth import CLASS_NAMES
from leafnet.treatments import (AGENT_TYPES, TreatmentRule, default_treatments, load_treatments,
                                parse_treatments, recommend, rules_to_json)

RULES = [
    {"class_name": "Wheat_Brown_Rust", "agent_type": "fungicide", "treatment": "rust treatment", "notes": "n"},
    {"class_name": "Rice_Bacterial_Blight", "agent_type": "bactericide", "treatment": "copper"},
]


def test_lookup_returns_entry_verbatim(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps(RULES))
    rules = load_treatments(path)
    got = recommend("Wheat_Brown_Rust", rules)
    assert got == TreatmentRule("Wheat_Brown_Rust", "fungicide", "rust treatment", "n")
    assert got.to_json() == {"agent_type": "fungicide", "treatment": "rust treatment", "notes": "n"}
    assert recommend("Rice_Bacterial_Blight", rules).notes is None


def test_unknown_and_case_sensitive():
    rules = parse_treatments(RULES)
    assert recommend("Unknown", rules) is None
    assert recommend("wheat_brown_rust", rules) is None


def test_duplicate_is_config_error(tmp_path):
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(RULES + [RULES[0]]))
    with pytest.raises(ConfigError, match="Wheat_Brown_Rust"):
        load_treatments(path)


@pytest.mark.parametrize("bad", [
    {"class_name": "x", "agent_type": "herbicide", "treatment": "t"},
    {"class_name": "x", "agent_type": "fungicide"},
    {"class_name": "", "agent_type": "fungicide", "treatment": "t"},
    {"class_name": "x", "agent_type": "fungicide", "treatment": "t", "notes": 3},
    "not an object",
])
def test_invalid_rules(bad):
    with pytest.raises(ConfigError):
        parse_treatments([bad])


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_treatments(path)
    with pytest.raises(ConfigError):
        parse_treatments({"class_name": "x"})


def test_shipped_placeholders_cover_all_classes():
    rules = default_treatments()
    assert sorted(r.class_name for r in rules) == sorted(CLASS_NAMES)
    assert all(r.agent_type in AGENT_TYPES for r in rules)
    assert all(r.treatment.startswith("PLACEHOLDER") for r in rules)
    assert recommend("Rice_Bacterial_Blight", rules).agent_type == "bactericide"


def test_json_roundtrip():
    rules = parse_treatments(RULES)
    assert parse_treatments(json.loads(rules_to_json(rules))) == rules


@given(st.text(max_size=30))
def test_recommend_is_pure(name):
    rules = parse_treatments(RULES)
    assert recommend(name, rules) == recommend(name, rules)
