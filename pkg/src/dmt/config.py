"""JSON experiment configs: schema validation, then model-level checks.

Every error raised here is a :class:`ConfigurationError` whose ``pointer``
locates the offending value inside the document.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ConfigurationError, DmtError
from .model import Dictionary, OperatorSpectrum, SignalSequence, gaussian_stream
from .procedures import TEST_KINDS
from .rates import Partition, detection_constant, separation_radius

SCHEMA_VERSION = 1

_number_array = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_index_array = {"type": "array", "items": {"type": "integer", "minimum": 0}}
_level = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["dictionary", "theta0", "epsilon", "alpha"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "dictionary": {"type": "array", "items": _number_array, "minItems": 1},
        "theta0": _number_array,
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "alpha": _level,
        "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "test_kind": {
            "oneOf": [
                {"enum": list(TEST_KINDS)},
                {"type": "array", "items": {"enum": list(TEST_KINDS)}, "minItems": 1, "uniqueItems": True},
            ]
        },
        "candidate_index": {"type": ["integer", "null"], "minimum": 0},
        "partition": {
            "type": "object",
            "required": ["homogeneous", "rest"],
            "additionalProperties": False,
            "properties": {"homogeneous": _index_array, "rest": _index_array},
        },
        "alternatives": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "explicit": {
                    "type": "array",
                    "items": {
                        "oneOf": [
                            _number_array,
                            {
                                "type": "object",
                                "required": ["theta"],
                                "additionalProperties": False,
                                "properties": {
                                    "theta": _number_array,
                                    "b_index": {"type": "integer", "minimum": 0},
                                    "label": {"type": "string"},
                                },
                            },
                        ]
                    },
                },
                "theta1_boundary": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "constant": {"type": "number", "exclusiveMinimum": 0},
                        "directions": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
                "adversary": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "tau": {"type": "number", "minimum": 0, "maximum": 1},
                        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "true_index": {"type": "integer", "minimum": 0},
                        "mimic_index": {"type": "integer", "minimum": 0},
                        "draws": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                        "lr_replications": {"type": "integer", "minimum": 1},
                        "lr_inner": {"enum": ["auto", "exact", "sampled"]},
                        "lr_inner_draws": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "power_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "replications": {"type": "integer", "minimum": 100},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "coupling": {"enum": ["independent", "common_random_numbers"]},
        "gates": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "type1": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "type2": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "csv": {"type": "string"},
                "svg": {"type": "string"},
            },
        },
    },
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path) or "/"


@dataclass(frozen=True)
class AdversarySpec:
    tau: float | None
    gamma: float | None
    true_index: int
    mimic_index: int
    draws: int
    seed: int
    lr_replications: int
    lr_inner: str
    lr_inner_draws: int


@dataclass(frozen=True)
class BoundarySpec:
    constant: float
    directions: int
    seed: int


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict = field(repr=False)
    dictionary: Dictionary
    theta0: SignalSequence
    epsilon: float
    alpha: float
    beta: float
    test_kinds: tuple[str, ...]
    candidate_index: int | None
    partition: Partition | None
    explicit: tuple[tuple[SignalSequence, int | None, str], ...]
    boundary: BoundarySpec | None
    adversary: AdversarySpec | None
    power_grid: tuple[float, ...]
    replications: int
    seed: int
    coupling: str
    gate_type1: float | None
    gate_type2: float | None
    output: dict

    @property
    def m(self) -> int:
        return self.theta0.m

    def sha256(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def boundary_alternatives(self) -> list[tuple[SignalSequence, int, str]]:
        """Points on the detection boundary ``||theta - theta0||**2 = C * radius(b)``,
        along seeded random directions, one per (direction, member)."""
        if self.boundary is None:
            return []
        out = []
        for d in range(self.boundary.directions):
            u = gaussian_stream(self.boundary.seed, d, self.m)
            u = u / math.sqrt(math.fsum(u**2))
            for j, b in enumerate(self.dictionary):
                r = math.sqrt(self.boundary.constant * separation_radius(b, self.epsilon))
                out.append((SignalSequence(self.theta0.values + r * u), j, f"boundary-d{d}"))
        return out


def _checked(pointer: str, build, *args):
    try:
        return build(*args)
    except DmtError as exc:
        raise ConfigurationError(str(exc), pointer) from None


def validate(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigurationError(err.message, _pointer(err.absolute_path))


def parse_config(doc: Any, seed: int | None = None, replications: int | None = None) -> ExperimentConfig:
    """Validate ``doc`` and build typed objects; ``seed`` and ``replications`` override."""
    validate(doc)
    doc = json.loads(json.dumps(doc))
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigurationError(f"seed must fit in an unsigned 64-bit integer, got {seed}", "/seed")
        doc["seed"] = seed
    if replications is not None:
        if replications < 100:
            raise ConfigurationError(f"replications must be at least 100, got {replications}", "/replications")
        doc["replications"] = replications

    members = [_checked(f"/dictionary/{j}", OperatorSpectrum, b) for j, b in enumerate(doc["dictionary"])]
    dictionary = _checked("/dictionary", Dictionary, tuple(members))
    theta0 = _checked("/theta0", SignalSequence, doc["theta0"])
    if theta0.m != dictionary.m:
        raise ConfigurationError(f"theta0 has length {theta0.m}, dictionary members have {dictionary.m}", "/theta0")
    K = len(dictionary)

    kinds = doc.get("test_kind", "single")
    kinds = (kinds,) if isinstance(kinds, str) else tuple(kinds)

    cand = doc.get("candidate_index")
    if cand is not None and cand >= K:
        raise ConfigurationError(f"candidate_index {cand} out of range for {K} members", "/candidate_index")

    partition = None
    if "partition" in doc:
        p = doc["partition"]
        partition = _checked("/partition", lambda: Partition(tuple(p["homogeneous"]), tuple(p["rest"])).check(K))

    alpha, beta = float(doc["alpha"]), float(doc.get("beta", 0.05))
    alts = doc.get("alternatives", {})
    explicit = []
    for i, item in enumerate(alts.get("explicit", [])):
        ptr = f"/alternatives/explicit/{i}"
        if isinstance(item, list):
            item = {"theta": item}
        theta = _checked(ptr + "/theta", SignalSequence, item["theta"])
        if theta.m != dictionary.m:
            raise ConfigurationError(f"alternative has length {theta.m}, expected {dictionary.m}", ptr + "/theta")
        bi = item.get("b_index")
        if bi is not None and bi >= K:
            raise ConfigurationError(f"b_index {bi} out of range for {K} members", ptr + "/b_index")
        explicit.append((theta, bi, item.get("label", f"explicit{i}")))

    boundary = None
    if "theta1_boundary" in alts:
        spec = alts["theta1_boundary"]
        if "constant" in spec:
            const = float(spec["constant"])
        else:
            const = _checked("/alternatives/theta1_boundary", detection_constant, alpha, beta)
        boundary = BoundarySpec(const, int(spec.get("directions", 3)), int(spec.get("seed", 0)))

    adversary = None
    if "adversary" in alts:
        spec = alts["adversary"]
        for key, default in (("true_index", 0), ("mimic_index", 1)):
            if spec.get(key, default) >= K:
                raise ConfigurationError(f"{key} out of range for {K} members", f"/alternatives/adversary/{key}")
        if spec.get("true_index", 0) == spec.get("mimic_index", 1):
            raise ConfigurationError("true_index and mimic_index must differ", "/alternatives/adversary")
        if alpha + beta >= 1:
            raise ConfigurationError("the adversarial prior needs alpha + beta < 1", "/alternatives/adversary")
        adversary = AdversarySpec(
            tau=spec.get("tau"),
            gamma=spec.get("gamma"),
            true_index=int(spec.get("true_index", 0)),
            mimic_index=int(spec.get("mimic_index", 1)),
            draws=int(spec.get("draws", 20)),
            seed=int(spec.get("seed", doc.get("seed", 0))),
            lr_replications=int(spec.get("lr_replications", 10000)),
            lr_inner=spec.get("lr_inner", "auto"),
            lr_inner_draws=int(spec.get("lr_inner_draws", 512)),
        )

    gates = doc.get("gates", {})
    return ExperimentConfig(
        raw=doc,
        dictionary=dictionary,
        theta0=theta0,
        epsilon=float(doc["epsilon"]),
        alpha=alpha,
        beta=beta,
        test_kinds=kinds,
        candidate_index=cand,
        partition=partition,
        explicit=tuple(explicit),
        boundary=boundary,
        adversary=adversary,
        power_grid=tuple(float(s) for s in doc.get("power_grid", ())),
        replications=int(doc.get("replications", 20000)),
        seed=int(doc.get("seed", 0)),
        coupling=doc.get("coupling", "independent"),
        gate_type1=gates.get("type1", alpha),
        gate_type2=gates.get("type2", beta),
        output=dict(doc.get("output", {})),
    )


def load_config(path: str | Path, seed: int | None = None, replications: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", "") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "") from None
    return parse_config(doc, seed=seed, replications=replications)

