"""The two user-input specification classes and their parsers.

A design spec (JSON) fixes the function contract the generated code must
satisfy; a behaviour spec (YAML) fixes the dynamic safety checks the
integration monitor evaluates. Both schemas are closed: unknown keys are
rejected so specification typos surface immediately instead of being
silently ignored.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields

import yaml

from .errors import InvariantError, SchemaError, SpecSyntaxError

_IDENTIFIER_RE = re.compile(r"^[A-Za-z_]\w*$")

# Behaviour defaults are configuration, not ground truth: the 10 m nominal
# distance and the 5 m/s^2 acceleration bound come from the ACC requirement
# set; clearance and band values are overridable deployment choices.
BEHAVIOR_DEFAULTS = {
    "c_min": 2.0,
    "tau_min": 1.5,
    "nominal_distance": 10.0,
    "band_low": 8.0,
    "band_high": 12.0,
    "a_limit": 5.0,
    "settle_time": 20.0,
    "band_occupancy_min": 0.9,
    "episode_duration": 120.0,
    "tick_deadline_ms": "disabled",
    "seed": 7,
}


@dataclass(frozen=True)
class PortSpec:
    """One named input or output of the target function."""

    name: str
    kind: str
    unit: str
    lo: float
    hi: float

    def validate(self, path: str) -> None:
        if not self.name:
            raise InvariantError(f"{path}: port name must be nonempty")
        if not self.unit:
            raise InvariantError(f"{path}: unit string must be nonempty")
        if not self.lo <= self.hi:
            raise InvariantError(
                f"{path}: empty range [{self.lo}, {self.hi}] (min > max)"
            )


@dataclass(frozen=True)
class DesignSpec:
    function_name: str
    language_target: str = "cpp"
    inputs: tuple[PortSpec, ...] = ()
    outputs: tuple[PortSpec, ...] = ()
    preconditions: tuple[str, ...] = ()
    postconditions: tuple[str, ...] = ()
    dependencies: tuple[str, ...] = ()
    system_api: tuple[str, ...] = ()

    def validate(self) -> None:
        if not _IDENTIFIER_RE.match(self.function_name):
            raise InvariantError(
                f"function_name {self.function_name!r} is not a valid identifier"
            )
        if self.language_target != "cpp":
            raise InvariantError(
                f"unsupported language_target {self.language_target!r}"
            )
        for i, port in enumerate(self.inputs):
            port.validate(f"$.inputs[{i}]")
        for i, port in enumerate(self.outputs):
            port.validate(f"$.outputs[{i}]")
        shared = {p.name for p in self.inputs} & {p.name for p in self.outputs}
        if shared:
            raise InvariantError(
                f"inputs and outputs must be disjoint by name; shared: {sorted(shared)}"
            )


@dataclass(frozen=True)
class BehaviorSpec:
    c_min: float = 2.0
    tau_min: float = 1.5
    nominal_distance: float = 10.0
    band_low: float = 8.0
    band_high: float = 12.0
    a_limit: float = 5.0
    settle_time: float = 20.0
    band_occupancy_min: float = 0.9
    episode_duration: float = 120.0
    tick_deadline_ms: float | None = None  # None == deadline disabled
    seed: int = 7

    def validate(self) -> None:
        if not self.c_min > 0:
            raise InvariantError(f"c_min must be > 0, got {self.c_min}")
        if not self.tau_min >= 0:
            raise InvariantError(f"tau_min must be >= 0, got {self.tau_min}")
        if not self.a_limit > 0:
            raise InvariantError(f"a_limit must be > 0, got {self.a_limit}")
        if not self.settle_time >= 0:
            raise InvariantError(f"settle_time must be >= 0, got {self.settle_time}")
        if not self.episode_duration > self.settle_time:
            raise InvariantError(
                f"episode_duration ({self.episode_duration}) must exceed "
                f"settle_time ({self.settle_time})"
            )
        if not self.band_low < self.nominal_distance < self.band_high:
            raise InvariantError(
                f"need band_low < nominal_distance < band_high, got "
                f"{self.band_low} / {self.nominal_distance} / {self.band_high}"
            )
        if not 0.0 <= self.band_occupancy_min <= 1.0:
            raise InvariantError(
                f"band_occupancy_min must be in [0,1], got {self.band_occupancy_min}"
            )
        if self.tick_deadline_ms is not None and not self.tick_deadline_ms > 0:
            raise InvariantError(
                f"tick_deadline_ms must be positive or 'disabled', got "
                f"{self.tick_deadline_ms}"
            )
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise InvariantError(f"seed must be a nonnegative integer, got {self.seed}")


_PORT_KEYS = {"name", "kind", "unit", "range"}
_DESIGN_KEYS = {
    "function_name",
    "language_target",
    "inputs",
    "outputs",
    "preconditions",
    "postconditions",
    "dependencies",
    "system_api",
}


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return mapping[key]


def _check_unknown(mapping: dict, allowed: set, path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown field (schemas are closed)")


def _string(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {type(value).__name__}")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _string_list(value, path: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected list, got {type(value).__name__}")
    return tuple(_string(v, f"{path}[{i}]") for i, v in enumerate(value))


def _parse_port(raw, path: str) -> PortSpec:
    if not isinstance(raw, dict):
        raise SchemaError(path, f"expected object, got {type(raw).__name__}")
    _check_unknown(raw, _PORT_KEYS, path)
    rng = _require(raw, "range", path)
    if not (isinstance(rng, list) and len(rng) == 2):
        raise SchemaError(f"{path}.range", "expected [min, max] pair")
    return PortSpec(
        name=_string(_require(raw, "name", path), f"{path}.name"),
        kind=_string(_require(raw, "kind", path), f"{path}.kind"),
        unit=_string(_require(raw, "unit", path), f"{path}.unit"),
        lo=_number(rng[0], f"{path}.range[0]"),
        hi=_number(rng[1], f"{path}.range[1]"),
    )


def parse_design_spec(text: str) -> DesignSpec:
    """Parse and validate a JSON design spec document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("$", "top-level value must be an object")
    _check_unknown(raw, _DESIGN_KEYS, "$")

    def ports(key: str) -> tuple[PortSpec, ...]:
        value = _require(raw, key, "$")
        if not isinstance(value, list):
            raise SchemaError(f"$.{key}", "expected list of ports")
        return tuple(_parse_port(p, f"$.{key}[{i}]") for i, p in enumerate(value))

    spec = DesignSpec(
        function_name=_string(_require(raw, "function_name", "$"), "$.function_name"),
        language_target=_string(raw.get("language_target", "cpp"), "$.language_target"),
        inputs=ports("inputs"),
        outputs=ports("outputs"),
        preconditions=_string_list(raw.get("preconditions", []), "$.preconditions"),
        postconditions=_string_list(raw.get("postconditions", []), "$.postconditions"),
        dependencies=_string_list(raw.get("dependencies", []), "$.dependencies"),
        system_api=_string_list(raw.get("system_api", []), "$.system_api"),
    )
    spec.validate()
    return spec


def parse_behavior_spec(text: str) -> BehaviorSpec:
    """Parse and validate a YAML behaviour spec; omitted fields take defaults."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecSyntaxError(f"malformed YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError("$", "top-level value must be a mapping")
    _check_unknown(raw, set(BEHAVIOR_DEFAULTS), "$")

    merged = dict(BEHAVIOR_DEFAULTS)
    merged.update(raw)

    deadline = merged["tick_deadline_ms"]
    if deadline == "disabled" or deadline is None:
        deadline_val = None
    else:
        deadline_val = _number(deadline, "$.tick_deadline_ms")

    seed = merged["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError("$.seed", f"expected integer, got {type(seed).__name__}")

    spec = BehaviorSpec(
        c_min=_number(merged["c_min"], "$.c_min"),
        tau_min=_number(merged["tau_min"], "$.tau_min"),
        nominal_distance=_number(merged["nominal_distance"], "$.nominal_distance"),
        band_low=_number(merged["band_low"], "$.band_low"),
        band_high=_number(merged["band_high"], "$.band_high"),
        a_limit=_number(merged["a_limit"], "$.a_limit"),
        settle_time=_number(merged["settle_time"], "$.settle_time"),
        band_occupancy_min=_number(merged["band_occupancy_min"], "$.band_occupancy_min"),
        episode_duration=_number(merged["episode_duration"], "$.episode_duration"),
        tick_deadline_ms=deadline_val,
        seed=seed,
    )
    spec.validate()
    return spec


def design_to_json(design: DesignSpec) -> str:
    """Canonical (sorted-keys) JSON rendering; byte-stable for equal specs."""
    doc = {
        "function_name": design.function_name,
        "language_target": design.language_target,
        "inputs": [_port_doc(p) for p in design.inputs],
        "outputs": [_port_doc(p) for p in design.outputs],
        "preconditions": list(design.preconditions),
        "postconditions": list(design.postconditions),
        "dependencies": list(design.dependencies),
        "system_api": list(design.system_api),
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def _port_doc(port: PortSpec) -> dict:
    return {
        "name": port.name,
        "kind": port.kind,
        "unit": port.unit,
        "range": [port.lo, port.hi],
    }


def behavior_to_yaml(behavior: BehaviorSpec) -> str:
    """Canonical YAML rendering (sorted keys, comments dropped)."""
    doc = {}
    for f in fields(behavior):
        value = getattr(behavior, f.name)
        if f.name == "tick_deadline_ms" and value is None:
            value = "disabled"
        doc[f.name] = value
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)


def render_for_prompt(design: DesignSpec, behavior: BehaviorSpec) -> str:
    """Deterministic spec block embedded into every generation prompt.

    Equal inputs render byte-identically regardless of source-document key
    order or comments.
    """
    return (
        "## System design specification (JSON)\n"
        "```json\n"
        f"{design_to_json(design)}\n"
        "```\n\n"
        "## System behaviour specification (YAML)\n"
        "```yaml\n"
        f"{behavior_to_yaml(behavior)}"
        "```\n"
    )
