import csv
import json

import pytest

from continuum import io
from continuum.cli import EXIT_CHECK, EXIT_DIVERGED, EXIT_INPUT, EXIT_OK, main
from continuum.graph import kuramoto_graph
from continuum.spectral import stable_order_set
from continuum.stencil import LinearOdeSpec


@pytest.fixture
def transport(tmp_path):
    p = tmp_path / "transport.json"
    p.write_text(json.dumps({"kind": "linear_ode", "shifts": [1, 0], "gains": ["1", "-1"], "dx": "1"}))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_continue_prints_pde(transport, capsys):
    assert main(["continue", str(transport), "-d", "1"]) == EXIT_OK
    assert "∂ρ/∂t = ∂ρ/∂x" in capsys.readouterr().out


def test_continue_discretize_round_trip(transport, tmp_path):
    pde_path, back = tmp_path / "pde.json", tmp_path / "ode.json"
    assert main(["continue", str(transport), "--out", str(pde_path)]) == EXIT_OK
    assert (tmp_path / "pde.json.manifest.json").exists()
    assert main(["discretize", str(pde_path), "--out", str(back)]) == EXIT_OK
    ode = io.ode_from_json(io.read_json(back))
    assert ode == io.ode_from_json(io.read_json(transport))


def test_invalid_order_exits_2(transport, capsys):
    assert main(["continue", str(transport), "-d", "0"]) == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_malformed_input_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"shifts": [0, 1], "gains": ["1"]}')
    assert main(["continue", str(bad)]) == EXIT_INPUT
    assert main(["continue", str(tmp_path / "missing.json")]) == EXIT_INPUT


def test_graph_continue_sexpr(tmp_path, capsys):
    p = tmp_path / "graph.json"
    p.write_text(json.dumps(io.graph_to_json(kuramoto_graph())))
    assert main(["graph-continue", str(p)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "sin" in out and "∂ρ/∂t" in out


def test_spectrum_outputs_and_replay(transport, tmp_path):
    outdir = tmp_path / "sp"
    assert main(["spectrum", str(transport), "--orders", "1..6", "--outdir", str(outdir)]) == EXIT_OK
    names = sorted(p.name for p in outdir.glob("*.csv"))
    assert names == ["spectrum_d%d.csv" % d for d in range(1, 7)] + ["spectrum_exact.csv"]
    stab = io.read_json(outdir / "stability.json")
    ode = LinearOdeSpec.from_pairs([1, 0], [1, -1], 1)
    assert stab["stable_orders"] == list(stable_order_set(ode, 6))
    d4 = read_csv(outdir / "spectrum_d4.csv")
    assert max(float(r["re"]) for r in d4) > 0
    again = tmp_path / "again"
    assert main(["replay", str(outdir / "manifest.json"), "--outdir", str(again)]) == EXIT_OK
    for name in names:
        assert (again / name).read_bytes() == (outdir / name).read_bytes()


def test_spectrum_of_zero_system(tmp_path):
    p = tmp_path / "zero.json"
    p.write_text(json.dumps({"shifts": [], "gains": []}))
    assert main(["spectrum", str(p), "--outdir", str(tmp_path / "z")]) == EXIT_OK
    for f in (tmp_path / "z").glob("*.csv"):
        assert all(float(r["re"]) == 0 and float(r["im"]) == 0 for r in read_csv(f))


def test_replay_detects_tampering(transport, tmp_path):
    outdir = tmp_path / "sp"
    main(["spectrum", str(transport), "--orders", "1..2", "--points", "11", "--outdir", str(outdir)])
    man = io.read_json(outdir / "manifest.json")
    man["outputs"]["spectrum_d1.csv"] = "0" * 64
    (outdir / "manifest.json").write_text(json.dumps(man))
    assert main(["replay", str(outdir / "manifest.json")]) == EXIT_CHECK


def test_euler_check_beta(tmp_path):
    out = tmp_path / "beta.json"
    assert main(["euler-check", "--what", "beta", "--n", "2", "--r2-max", "25", "--out", str(out)]) == EXIT_OK
    rep = io.read_json(out)
    assert rep["all_isotropic"]
    by_r2 = {r["r2"]: r for r in rep["records"]}
    assert by_r2[25]["beta"] == "75" and by_r2[3]["count"] == 0


def test_euler_check_pressure_and_identity(tmp_path, capsys):
    assert main(["euler-check", "--what", "pressure", "--topology", "all", "--n", "2"]) == EXIT_OK
    assert main(["euler-check", "--what", "lemma1", "--seeds", "2", "--seed", "5"]) == EXIT_OK


def test_swarm_short_run(tmp_path):
    outdir = tmp_path / "sw"
    argv = [
        "swarm-sim", "--extent", "3,3,3", "--noise", "0", "--scale", "1", "--t-end", "0.2",
        "--initial-velocity", "desired", "--metric-every", "5", "--metric-points", "8", "--outdir", str(outdir),
    ]
    assert main(argv) == EXIT_OK
    rows = read_csv(outdir / "metric.csv")
    assert float(rows[0]["l2_deviation"]) == 0.0
    assert max(float(r["l2_deviation"]) for r in rows) < 1e-3
    assert float(rows[-1]["centroid_x"]) == pytest.approx(0.2, abs=1e-3)
    assert main(["replay", str(outdir / "manifest.json")]) == EXIT_OK


def test_swarm_divergence_exits_3(tmp_path):
    outdir = tmp_path / "sw"
    argv = ["swarm-sim", "--extent", "4,4,4", "--t-end", "0.5", "--metric-every", "1000",
            "--metric-points", "8", "--outdir", str(outdir)]
    assert main(argv) == EXIT_DIVERGED
    assert (outdir / "metric.csv").exists() and (outdir / "events.log").exists()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CONTINUUM_SEED", "7")
    outdir = tmp_path / "sw"
    argv = ["swarm-sim", "--extent", "2,2,2", "--noise", "0.05", "--t-end", "0.02", "--scale", "1",
            "--metric-points", "4", "--outdir", str(outdir)]
    assert main(argv) == EXIT_OK
    assert io.read_json(outdir / "manifest.json")["seed"] == 7
    monkeypatch.delenv("CONTINUUM_SEED")
    assert main(argv + ["--seed", "9"]) == EXIT_OK
    assert io.read_json(outdir / "manifest.json")["seed"] == 9
