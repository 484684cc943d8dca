import json
from fractions import Fraction as F

import pytest

from continuum import io
from continuum.graph import kuramoto_graph
from continuum.stencil import LinearOdeSpec, continue_linear


def test_ode_round_trip_is_byte_identical():
    ode = LinearOdeSpec.from_pairs([-2, 0, 3], [F(1, 3), -1, F(7, 2)], F(1, 4))
    text = io.dumps_canonical(io.ode_to_json(ode))
    again = io.dumps_canonical(io.ode_to_json(io.ode_from_json(json.loads(text))))
    assert again == text


def test_pde_round_trip():
    ode = LinearOdeSpec.from_pairs([0, 1], [-1, 1], 1)
    pde = continue_linear(ode, 4)
    back = io.pde_from_json(io.pde_to_json(pde))
    assert back.coeffs == pde.coeffs and back.dx == pde.dx


def test_graph_round_trip():
    g = kuramoto_graph()
    doc = io.graph_to_json(g)
    g2, pos = io.graph_from_json(doc)
    assert io.graph_to_json(g2) == doc and pos == 0


def test_schema_rejects_bad_documents():
    with pytest.raises(io.SchemaError):
        io.ode_from_json({"shifts": [0, 1], "gains": "x"})
    with pytest.raises(io.SchemaError):
        io.ode_from_json({"shifts": [0, 1], "gains": ["1"]})
    with pytest.raises(io.SchemaError):
        io.detect_kind([1, 2])
    with pytest.raises(io.SchemaError):
        io.validate({}, "no-such-kind")


def test_empty_system_reads_as_zero():
    ode = io.ode_from_json({"shifts": [], "gains": []})
    assert ode.shifts == (0,) and ode.gains == (0,)


def test_kind_detection():
    assert io.detect_kind({"shifts": [0], "gains": ["1"]}) == "linear_ode"
    assert io.detect_kind({"shifts": [[0, 1]], "gains": ["1"]}) == "multidim_ode"
    assert io.detect_kind({"coeffs": ["0"]}) == "pde_coefficients"
    assert io.detect_kind({"rows": [], "positions": {}}) == "unequal_ode"
    assert io.detect_kind({"nodes": []}) == "graph"


def test_floats_round_trip_through_csv(tmp_path):
    vals = [0.1, 1 / 3, -2.5e-300, 12345.678901234567]
    p = io.write_csv(tmp_path / "a.csv", ["v"], [[v] for v in vals])
    read = [float(s) for s in p.read_text().split()[1:]]
    assert read == vals


def test_invalid_json_is_schema_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(io.SchemaError):
        io.read_json(p)
