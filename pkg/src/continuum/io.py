"""File formats: JSON documents for systems and PDEs, CSV tables, manifests.

Rationals are written as canonical strings ("3", "-1/2").  JSON documents
are emitted with sorted keys and a trailing newline so that equal objects
produce identical bytes.  Floats in CSV use Python's shortest round-trip
representation.
"""
from __future__ import annotations

import csv
import hashlib
import json
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
from referencing import Registry, Resource

from .extensions import (
    BoundarySpec,
    CoefficientField,
    MultiIndexStencil,
    MultiPdeCoefficients,
    NodeRow,
    SpaceDependentOde,
)
from .graph import ComputationGraph, Node
from .stencil import LinearOdeSpec, PdeCoefficients, as_fraction

__all__ = [
    "SchemaError",
    "SCHEMAS",
    "validate",
    "detect_kind",
    "rational_str",
    "dumps_canonical",
    "write_json",
    "read_json",
    "ode_to_json",
    "ode_from_json",
    "pde_to_json",
    "pde_from_json",
    "graph_from_json",
    "graph_to_json",
    "multidim_from_json",
    "multi_pde_to_json",
    "space_dependent_from_json",
    "coefficient_field_to_json",
    "boundary_to_json",
    "fmt_float",
    "write_csv",
    "sha256_file",
]

SCHEMAS = {
    "linear_ode": "linear_ode.json",
    "pde_coefficients": "pde_coefficients.json",
    "graph": "graph.json",
    "multidim_ode": "multidim_ode.json",
    "space_dependent_ode": "space_dependent_ode.json",
    "unequal_ode": "space_dependent_ode.json",
    "swarm_config": "swarm_config.json",
}


class SchemaError(ValueError):
    """A document does not match its schema."""


@lru_cache(maxsize=None)
def _schema_files() -> dict[str, dict]:
    root = resources.files("continuum") / "schemas"
    return {p.name: json.loads(p.read_text(encoding="utf-8")) for p in root.iterdir() if p.name.endswith(".json")}


@lru_cache(maxsize=None)
def _registry() -> Registry:
    return Registry().with_resources(
        (name, Resource.from_contents(doc)) for name, doc in _schema_files().items()
    )


def validate(doc: Any, kind: str) -> None:
    """Raise SchemaError when ``doc`` violates the schema of ``kind``."""
    try:
        fname = SCHEMAS[kind]
    except KeyError:
        raise SchemaError(f"unknown document kind {kind!r}") from None
    validator = jsonschema.Draft202012Validator(_schema_files()[fname], registry=_registry())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise SchemaError(f"{kind}: {where}: {e.message}")


def detect_kind(doc: Mapping) -> str:
    """Explicit "kind" field, else inferred from the keys present."""
    if not isinstance(doc, Mapping):
        raise SchemaError("top-level JSON value must be an object")
    if "kind" in doc:
        return str(doc["kind"])
    if "nodes" in doc:
        return "graph"
    if "rows" in doc:
        return "unequal_ode" if "positions" in doc else "space_dependent_ode"
    if "coeffs" in doc:
        return "pde_coefficients"
    shifts = doc.get("shifts")
    if isinstance(shifts, list) and shifts and isinstance(shifts[0], list):
        return "multidim_ode"
    return "linear_ode"


# ------------------------------------------------------------------ numbers

def rational_str(q) -> str:
    return str(as_fraction(q))


def _number_out(v):
    return rational_str(v) if isinstance(v, (Fraction, int)) else float(v)


def _number_in(v):
    if isinstance(v, float):
        return v
    return as_fraction(v)


# --------------------------------------------------------------------- JSON

def dumps_canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str | Path, doc: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(doc), encoding="utf-8")
    return path


def read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def ode_to_json(ode: LinearOdeSpec) -> dict:
    return {
        "kind": "linear_ode",
        "shifts": list(ode.shifts),
        "gains": [rational_str(g) for g in ode.gains],
        "dx": rational_str(ode.dx),
    }


def ode_from_json(doc: Mapping) -> LinearOdeSpec:
    validate(doc, "linear_ode")
    shifts, gains = list(doc["shifts"]), [as_fraction(g) for g in doc["gains"]]
    if len(shifts) != len(gains):
        raise SchemaError(f"linear_ode: {len(shifts)} shifts but {len(gains)} gains")
    if not shifts:
        # an empty system is the zero system
        shifts, gains = [0], [Fraction(0)]
    return LinearOdeSpec.from_pairs(shifts, gains, as_fraction(doc.get("dx", 1)))


def pde_to_json(pde: PdeCoefficients) -> dict:
    doc = {
        "kind": "pde_coefficients",
        "coeffs": [rational_str(c) for c in pde.coeffs],
        "dx": rational_str(pde.dx),
        "pretty": pde.pretty(),
    }
    if pde.source_shifts is not None:
        doc["source_shifts"] = list(pde.source_shifts)
    return doc


def pde_from_json(doc: Mapping) -> PdeCoefficients:
    validate(doc, "pde_coefficients")
    src = doc.get("source_shifts")
    return PdeCoefficients(
        tuple(as_fraction(c) for c in doc["coeffs"]),
        as_fraction(doc.get("dx", 1)),
        tuple(src) if src is not None else None,
    )


def graph_from_json(doc: Mapping) -> tuple[ComputationGraph, Fraction]:
    """Graph and its root position."""
    validate(doc, "graph")
    nodes = []
    for nd in doc["nodes"]:
        inputs = tuple((i["id"], as_fraction(i.get("weight", 1))) for i in nd.get("inputs", []))
        nodes.append(
            Node(
                nd["id"],
                nd["kind"],
                shift=as_fraction(nd["shift"]) if "shift" in nd else None,
                fn=nd.get("fn"),
                param=as_fraction(nd["param"]) if "param" in nd else None,
                inputs=inputs,
            )
        )
    return ComputationGraph.from_nodes(nodes, doc["root"]), as_fraction(doc.get("root_position", 0))


def graph_to_json(g: ComputationGraph, root_position=0) -> dict:
    nodes = []
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        item: dict[str, Any] = {"id": n.id, "kind": n.kind}
        if n.kind == "leaf":
            item["shift"] = rational_str(n.shift)
        else:
            item["fn"] = n.fn
            if n.param is not None:
                item["param"] = rational_str(n.param)
            item["inputs"] = [{"id": i, "weight": rational_str(w)} for i, w in n.inputs]
        nodes.append(item)
    return {"kind": "graph", "root": g.root, "root_position": rational_str(root_position), "nodes": nodes}


def multidim_from_json(doc: Mapping) -> MultiIndexStencil:
    validate(doc, "multidim_ode")
    shifts = [tuple(s) for s in doc["shifts"]]
    dim = int(doc.get("dim", len(shifts[0])))
    if any(len(s) != dim for s in shifts):
        raise SchemaError(f"multidim_ode: every shift must have {dim} components")
    dx = doc.get("dx", [1] * dim)
    return MultiIndexStencil(tuple(shifts), tuple(as_fraction(g) for g in doc["gains"]), tuple(as_fraction(v) for v in dx))


def multi_pde_to_json(pde: MultiPdeCoefficients, convention: str = "taylor") -> dict:
    weights = pde.derivative_weights(convention)
    terms = [
        {"h": list(h), "c": rational_str(pde.coeffs[h]), "weight": rational_str(weights[h])}
        for h in sorted(pde.coeffs, key=lambda h: (sum(h), tuple(-v for v in h)))
    ]
    return {
        "kind": "multi_pde_coefficients",
        "dx": [rational_str(v) for v in pde.dx],
        "order": pde.order,
        "convention": convention,
        "terms": terms,
        "pretty": pde.pretty(convention),
    }


def space_dependent_from_json(doc: Mapping) -> tuple[SpaceDependentOde, LinearOdeSpec | None]:
    """System rows and the optional interior template (for boundary extraction)."""
    kind = detect_kind(doc)
    validate(doc, kind)
    rows = tuple(
        NodeRow(
            r["index"],
            tuple(r["shifts"]),
            tuple(_number_in(g) for g in r["gains"]),
            _number_in(r.get("const", 0)),
        )
        for r in doc["rows"]
    )
    positions = doc.get("positions")
    if positions is not None:
        positions = {int(k): _number_in(v) for k, v in positions.items()}
    system = SpaceDependentOde(rows, _number_in(doc.get("dx", 1)), positions)
    template = ode_from_json(doc["template"]) if "template" in doc else None
    return system, template


def coefficient_field_to_json(field_: CoefficientField) -> dict:
    out = []
    for k, fc in enumerate(field_.coefficients):
        out.append(
            {
                "k": k,
                "nodes": [_number_out(v) for v in fc.nodes],
                "samples": [_number_out(v) for v in fc.samples],
                "mode": fc.mode,
                "basis": fc.basis,
                "degree": fc.degree,
                "residual": fc.residual,
            }
        )
    return {"kind": "coefficient_field", "dx": _number_out(field_.dx), "scaling": field_.scaling, "coefficients": out}


def boundary_to_json(spec: BoundarySpec) -> dict:
    cells = []
    for c in spec.cells:
        value = c.value
        if isinstance(value, tuple):
            value = [_number_out(v) for v in value]
        elif value is not None:
            value = _number_out(value)
        cells.append(
            {
                "index": c.index,
                "kind": c.kind,
                "adjacent": c.adjacent,
                "coeffs": {str(k): _number_out(v) for k, v in sorted(c.coeffs.items())},
                "const": _number_out(c.const),
                "value": value,
                "relation": c.describe(),
            }
        )
    return {"kind": "boundary", "cells": cells}


# ---------------------------------------------------------------------- CSV

def fmt_float(v) -> str:
    """Shortest decimal string that round-trips to the same double."""
    if isinstance(v, (int, str)):
        return str(v)
    return repr(float(v))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) for v in row])
    return path


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
