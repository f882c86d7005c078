"""Instance JSON format (owned by the CLI).

Schema:
    {
      "n": 4, "m": 2,
      "regime": "PositiveLinear",
      "weights": [<m n-by-n nested lists>],
      "externality": {"all": {"family": "Linear"}},
      "diagonally_dominant": false
    }

The externality map is keyed "all" for the uniform case, plus optional
"(i,j)" overrides with 0-based item i and agent j.  Families carry their
parameters: Polynomial {"coefficients": [c_1, ..., c_d]}, PowerConcave
{"exponent": p}, Linear and LogConcave take none.
"""

from __future__ import annotations

import json
from pathlib import Path

from .instance import ExternalityMap, ExternalitySpec, Family, Instance, Regime

__all__ = [
    "instance_from_dict",
    "instance_to_dict",
    "load_instance",
    "save_instance",
]


def _spec_to_dict(spec: ExternalitySpec) -> dict:
    data: dict = {"family": spec.family.value}
    if spec.family is Family.POLYNOMIAL:
        data["coefficients"] = list(spec.coefficients)
    elif spec.family is Family.POWER_CONCAVE:
        data["exponent"] = spec.exponent
    return data


def _spec_from_dict(data: dict) -> ExternalitySpec:
    family = Family(data["family"])
    if family is Family.POLYNOMIAL:
        return ExternalitySpec(family, coefficients=tuple(data["coefficients"]))
    if family is Family.POWER_CONCAVE:
        return ExternalitySpec(family, exponent=float(data.get("exponent", 0.5)))
    return ExternalitySpec(family)


def instance_to_dict(inst: Instance) -> dict:
    externality: dict = {}
    if inst.externality.default is not None:
        externality["all"] = _spec_to_dict(inst.externality.default)
    for (i, j), spec in sorted(inst.externality.overrides.items()):
        externality[f"({i},{j})"] = _spec_to_dict(spec)
    return {
        "n": inst.n,
        "m": inst.m,
        "regime": inst.regime.value,
        "weights": inst.weights.tolist(),
        "externality": externality,
        "diagonally_dominant": inst.diagonally_dominant,
    }


def instance_from_dict(data: dict) -> Instance:
    externality = data["externality"]
    default = None
    overrides = {}
    for key, spec_data in externality.items():
        if key == "all":
            default = _spec_from_dict(spec_data)
        else:
            i, j = (int(part) for part in key.strip("()").split(","))
            overrides[(i, j)] = _spec_from_dict(spec_data)
    return Instance(
        n=int(data["n"]),
        m=int(data["m"]),
        weights=data["weights"],
        externality=ExternalityMap(default=default, overrides=overrides),
        regime=Regime(data["regime"]),
        diagonally_dominant=bool(data.get("diagonally_dominant", False)),
    )


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2, sort_keys=True) + "\n")


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))
