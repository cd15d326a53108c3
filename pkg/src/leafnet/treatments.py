"""Disease-class to treatment lookup backed by a JSON rules file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import ConfigError

AGENT_TYPES = ("pesticide", "fungicide", "bactericide", "other")


@dataclass(frozen=True)
class TreatmentRule:
    class_name: str
    agent_type: str
    treatment: str
    notes: str | None = None

    def to_json(self) -> dict:
        return {"agent_type": self.agent_type, "treatment": self.treatment, "notes": self.notes}


def parse_treatments(obj) -> list[TreatmentRule]:
    if not isinstance(obj, list):
        raise ConfigError("treatments file must hold a JSON array of rule objects")
    rules, seen = [], set()
    for i, entry in enumerate(obj):
        if not isinstance(entry, dict):
            raise ConfigError(f"rule {i} is not an object")
        try:
            rule = TreatmentRule(entry["class_name"], entry["agent_type"], entry["treatment"], entry.get("notes"))
        except KeyError as exc:
            raise ConfigError(f"rule {i} is missing field {exc.args[0]!r}") from exc
        for name in ("class_name", "agent_type", "treatment"):
            v = getattr(rule, name)
            if not isinstance(v, str) or not v.strip():
                raise ConfigError(f"rule {i}: {name} must be a non-empty string")
        if rule.agent_type not in AGENT_TYPES:
            raise ConfigError(f"rule {i}: agent_type must be one of {AGENT_TYPES}, got {rule.agent_type!r}")
        if rule.notes is not None and not isinstance(rule.notes, str):
            raise ConfigError(f"rule {i}: notes must be a string or null")
        if rule.class_name in seen:
            raise ConfigError(f"duplicate class_name {rule.class_name!r} in treatments file")
        seen.add(rule.class_name)
        rules.append(rule)
    return rules


def load_treatments(path: str | Path) -> list[TreatmentRule]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_treatments(obj)


def default_treatments() -> list[TreatmentRule]:
    """The bundled placeholder rules (not agronomic advice)."""
    text = resources.files("leafnet").joinpath("data/treatments.json").read_text(encoding="utf-8")
    return parse_treatments(json.loads(text))


def recommend(class_name: str, rules: Sequence[TreatmentRule]) -> TreatmentRule | None:
    """Exact, case-sensitive match on class name."""
    for rule in rules:
        if rule.class_name == class_name:
            return rule
    return None


def rules_to_json(rules: Sequence[TreatmentRule]) -> str:
    return json.dumps([asdict(r) for r in rules], indent=2) + "\n"
