"""Instance files: the problem in the model schema plus a provenance record."""

from __future__ import annotations

import jsonschema

from ..model import ConstrainedProblem, ModelError, problem_from_dict, problem_to_dict
from .traffic import TrafficInstance

_TRIPLETS = {"type": "array", "items": {"type": "integer", "minimum": 0}}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["problem", "provenance"],
    "properties": {
        "problem": {"type": "object"},
        "provenance": {
            "type": "object",
            "required": ["generator", "params", "seed"],
            "properties": {
                "generator": {"type": "string"},
                "params": {"type": "object"},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "traffic": {
            "type": "object",
            "required": ["n_cars", "n_routes", "segment_count", "occupancy", "route_lengths"],
            "properties": {
                "occupancy": {
                    "type": "object",
                    "required": ["e", "mu", "i"],
                    "properties": {"e": _TRIPLETS, "mu": _TRIPLETS, "i": _TRIPLETS},
                },
            },
        },
    },
}


def instance_to_dict(p: ConstrainedProblem, generator: str, params: dict, seed: int,
                     traffic: TrafficInstance | None = None) -> dict:
    d = {"problem": problem_to_dict(p), "provenance": {"generator": generator, "params": dict(params), "seed": seed}}
    if traffic is not None:
        d["traffic"] = traffic.to_dict()
    return d


def instance_from_dict(d: dict):
    """Returns ``(problem, provenance, traffic instance or None)``."""
    try:
        jsonschema.validate(d, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ModelError(f"invalid instance file: {e.message}") from None
    t = TrafficInstance.from_dict(d["traffic"]) if "traffic" in d else None
    return problem_from_dict(d["problem"]), d["provenance"], t
