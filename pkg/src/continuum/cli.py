"""Command-line entry point: ``continuum <subcommand> ...``.

Exit codes: 0 success, 1 failed check, 2 invalid input or invalid order,
3 numerical divergence.  Every run writes a manifest next to its outputs;
``continuum replay MANIFEST`` re-runs it and compares output hashes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import expr as E
from . import io
from .extensions import (
    FitError,
    IrreconcilableBoundaryError,
    continue_multidim,
    continue_space_dependent,
    continue_unequally_spaced,
    extract_boundary,
    multi_indices,
)
from .graph import GraphStructureError, continue_graph, linear_graph
from .particles import (
    ALL_TO_ALL,
    GRID,
    IDENTITY_CHECKS,
    DivergentTailError,
    ForceLaw,
    PressureModel,
    beta,
    identity_refinement,
    pressure,
)
from .spectral import (
    classify_stability,
    default_omega_grid,
    ode_symbol_eval,
    pde_symbol_eval,
    stable_order_set,
)
from .stencil import (
    ContinuationValidityError,
    DegenerateStencilError,
    InsufficientStencilError,
    continue_linear,
    discretize_pde,
)
from .swarm import SwarmConfig, SwarmDivergenceError, simulate

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3
DEFAULT_SEED = 42
SLOPE_FLOOR = 1.5

_INPUT_ERRORS = (
    io.SchemaError,
    ContinuationValidityError,
    DegenerateStencilError,
    InsufficientStencilError,
    GraphStructureError,
    FitError,
    IrreconcilableBoundaryError,
    DivergentTailError,
)


class UsageError(ValueError):
    pass


# ----------------------------------------------------------------- manifest

def _write_manifest(
    path: Path, command: str, argv: Sequence[str], config: dict, outputs: Sequence[Path], seed, started: float
) -> Path:
    doc = {
        "subcommand": command,
        "argv": list(argv),
        "config": config,
        "version": __version__,
        "seed": seed,
        "outputs": {p.name: io.sha256_file(p) for p in outputs},
        "wall_clock_s": round(time.time() - started, 3),
    }
    return io.write_json(path, doc)


def _resolve_seed(flag, config: dict) -> int:
    if flag is not None:
        return int(flag)
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get("CONTINUUM_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"CONTINUUM_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _parse_orders(text: str) -> list[int]:
    """"1..6" or "1,2,4"."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        out = list(range(int(lo), int(hi) + 1))
    else:
        out = [int(t) for t in text.split(",") if t.strip()]
    if not out or min(out) < 0:
        raise UsageError(f"bad order list {text!r}")
    return out


def _parse_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


# ----------------------------------------------------------------- continue

def _multidim_default_order(count: int, dim: int) -> int:
    d = 0
    while len(multi_indices(dim, d)) < count:
        d += 1
    return d


def cmd_continue(args, argv) -> int:
    started = time.time()
    doc = io.read_json(args.input)
    kind = io.detect_kind(doc)
    out = Path(args.out) if args.out else None
    config = {"input": str(args.input), "kind": kind, "order": args.order, "accuracy": args.accuracy}
    payload: str
    if kind == "linear_ode":
        ode = io.ode_from_json(doc)
        d = args.order if args.order is not None else len(ode) - 1 + args.accuracy
        pde = continue_linear(ode, d)
        pde = type(pde)(pde.coeffs, pde.dx, ode.shifts)
        print(pde.pretty())
        if args.format == "sexpr":
            expr = continue_graph(linear_graph(ode.shifts, ode.gains), acc=d - (len(ode) - 1))
            payload = E.to_sexpr(expr) + "\n"
        else:
            payload = io.dumps_canonical(io.pde_to_json(pde))
    elif kind == "graph":
        g, root_pos = io.graph_from_json(doc)
        expr = continue_graph(g, acc=args.accuracy, d_cap=args.d_cap, root_position=root_pos)
        print("∂ρ/∂t = " + E.to_unicode(expr))
        config["d_cap"] = args.d_cap
        if args.format == "json":
            payload = io.dumps_canonical(
                {"kind": "pde_expression", "sexpr": E.to_sexpr(expr), "unicode": E.to_unicode(expr)}
            )
        else:
            payload = E.to_sexpr(expr) + "\n"
    elif kind == "multidim_ode":
        st = io.multidim_from_json(doc)
        d = args.order if args.order is not None else _multidim_default_order(len(st.shifts), st.dim) + args.accuracy
        pde = continue_multidim(st, d)
        print(pde.pretty(args.convention))
        payload = io.dumps_canonical(io.multi_pde_to_json(pde, args.convention))
    elif kind in ("space_dependent_ode", "unequal_ode"):
        system, template = io.space_dependent_from_json(doc)
        widest = max(len(r.shifts) for r in system.rows)
        d = args.order if args.order is not None else widest - 1 + args.accuracy
        runner = continue_unequally_spaced if kind == "unequal_ode" else continue_space_dependent
        field_ = runner(system, d, args.fit, args.degree)
        result = io.coefficient_field_to_json(field_)
        for fc in field_.coefficients:
            print(f"c_{fc.k}(x): {fc.mode} fit, degree {fc.degree}, residual {fc.residual:.3g}")
        if template is not None:
            spec = extract_boundary(system, template)
            result["boundary"] = io.boundary_to_json(spec)
            for c in spec.cells:
                print(f"{c.kind}: {c.describe()}")
        payload = io.dumps_canonical(result)
    else:
        raise io.SchemaError(f"cannot continue a document of kind {kind!r}")
    outputs = []
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload, encoding="utf-8")
        outputs.append(out)
        _write_manifest(out.with_name(out.name + ".manifest.json"), "continue", argv, config, outputs, None, started)
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_discretize(args, argv) -> int:
    started = time.time()
    pde = io.pde_from_json(io.read_json(args.input))
    if args.stencil:
        stencil = _parse_ints(args.stencil)
    elif pde.source_shifts is not None:
        stencil = list(pde.source_shifts)
    else:
        raise UsageError("no --stencil given and the PDE file records no source shifts")
    ode = discretize_pde(pde, sorted(stencil))
    print("gains: " + ", ".join(f"{s}: {io.rational_str(g)}" for s, g in zip(ode.shifts, ode.gains)))
    payload = io.dumps_canonical(io.ode_to_json(ode))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload, encoding="utf-8")
        _write_manifest(
            out.with_name(out.name + ".manifest.json"), "discretize", argv,
            {"input": str(args.input), "stencil": stencil}, [out], None, started,
        )
    else:
        sys.stdout.write(payload)
    return EXIT_OK


# ----------------------------------------------------------------- spectrum

def cmd_spectrum(args, argv) -> int:
    started = time.time()
    ode = io.ode_from_json(io.read_json(args.input))
    orders = _parse_orders(args.orders)
    valid = [d for d in orders if d + 1 >= len(ode)]
    skipped = sorted(set(orders) - set(valid))
    dx = float(ode.dx)
    omega = default_omega_grid(dx, args.points) * args.range
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = []
    exact = ode_symbol_eval(ode, omega)
    outputs.append(io.write_csv(outdir / "spectrum_exact.csv", ["omega", "re", "im"], zip(omega, exact.real, exact.imag)))
    verdicts = {}
    for d in valid:
        pde = continue_linear(ode, d)
        vals = pde_symbol_eval(pde, omega)
        outputs.append(
            io.write_csv(outdir / f"spectrum_d{d}.csv", ["omega", "re", "im"], zip(omega, vals.real, vals.imag))
        )
        v = classify_stability(pde, ode=ode)
        verdicts[d] = {
            "verdict": v.kind,
            "max_re_on_grid": float(vals.real.max()),
            "witness_omega": v.witness_omega,
            "witness_re": v.witness_real,
        }
        print(f"d={d}: {v.kind:<22} max Re on grid = {vals.real.max():.6g}")
    stable = stable_order_set(ode, max(valid)) if valid else []
    print("non-growing orders: " + (", ".join(map(str, stable)) or "none"))
    if skipped:
        print("skipped (order below N-1): " + ", ".join(map(str, skipped)), file=sys.stderr)
    summary = {
        "orders": valid,
        "skipped": skipped,
        "stable_orders": stable,
        "verdicts": {str(k): v for k, v in verdicts.items()},
        "grid": {"points": args.points, "omega_min": float(omega[0]), "omega_max": float(omega[-1])},
    }
    outputs.append(io.write_json(outdir / "stability.json", summary))
    config = {"input": str(args.input), "orders": orders, "points": args.points, "range": args.range}
    _write_manifest(outdir / "manifest.json", "spectrum", argv, config, outputs, None, started)
    return EXIT_OK


# -------------------------------------------------------------------- swarm

_SWARM_FLAGS = {
    "extent": "extent",
    "alpha": "alpha",
    "beta": "beta",
    "scale": "scale",
    "noise": "noise",
    "dt": "dt",
    "t_end": "t_end",
    "x0": "x0",
    "integrator": "integrator",
    "metric_every": "metric_every",
    "metric_points": "metric_points",
    "record_every": "record_every",
    "initial_velocity": "initial_velocity",
}


def _swarm_config(args) -> tuple[SwarmConfig, dict]:
    base = {"record_every": 100}
    if args.config:
        file_cfg = io.read_json(args.config)
        io.validate(file_cfg, "swarm_config")
        base.update(file_cfg)
    for flag, key in _SWARM_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            base[key] = _parse_ints(val) if flag == "extent" else val
    base["seed"] = _resolve_seed(args.seed, base)
    io.validate(base, "swarm_config")
    cfg = SwarmConfig(**{k: (tuple(v) if k == "extent" else v) for k, v in base.items()})
    resolved = asdict(cfg)
    resolved["extent"] = list(cfg.extent)
    return cfg, resolved


def _write_swarm_outputs(outdir: Path, result, cfg: SwarmConfig) -> list[Path]:
    outputs = []
    rows = zip(result.metric_t, result.deviation, result.centroid_x)
    outputs.append(io.write_csv(outdir / "metric.csv", ["t", "l2_deviation", "centroid_x"], rows))
    if cfg.record_every:
        n = len(cfg.extent)
        axes = "xyz"[:n]
        header = ["t"] + [f"i{k}" for k in range(n)] + list(axes) + [f"v{a}" for a in axes]

        def traj_rows():
            for t, x, v in result.trajectory:
                for idx in np.ndindex(*cfg.extent):
                    yield [t, *idx, *x[idx], *v[idx]]

        outputs.append(io.write_csv(outdir / "trajectory.csv", header, traj_rows()))
    log = outdir / "events.log"
    with log.open("w", encoding="utf-8") as fh:
        for t, idx in result.events:
            fh.write(f"{io.fmt_float(t)} singular-G fallback at agent {list(idx)}\n")
    outputs.append(log)
    return outputs


def cmd_swarm(args, argv) -> int:
    started = time.time()
    cfg, resolved = _swarm_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        result = simulate(cfg)
    except SwarmDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        result = exc.partial
        code = EXIT_DIVERGED
    outputs = _write_swarm_outputs(outdir, result, cfg) if result is not None else []
    if code == EXIT_OK:
        d0, dlast = result.deviation[0], result.deviation[-1]
        print(f"deviation {d0:.6g} -> {dlast:.6g}; centroid x {result.centroid_x[-1]:.4g}; "
              f"{len(result.events)} fallback events")
    _write_manifest(outdir / "manifest.json", "swarm-sim", argv, resolved, outputs, cfg.seed, started)
    return code


# -------------------------------------------------------------- euler-check

def _force_law(name: str, scale: float) -> ForceLaw:
    if name == "exp":
        return ForceLaw.exponential(scale)
    if name == "spring":
        return ForceLaw.spring(rest=scale)
    raise UsageError(f"unknown force law {name!r}")


def cmd_euler_check(args, argv) -> int:
    started = time.time()
    what = args.what
    code = EXIT_OK
    config: dict = {"what": what}
    if what == "beta":
        config.update(n=args.n, r2_max=args.r2_max)
        entries = [beta(r2, args.n, cap=max(args.r2_max, 1)) for r2 in range(1, args.r2_max + 1)]
        records = [
            {"r2": e.r2, "count": e.count, "beta": io.rational_str(e.beta), "isotropic": e.is_isotropic}
            for e in entries
        ]
        ok = all(e.is_isotropic for e in entries)
        nonempty = [e for e in entries if e.count]
        ratios = [float(e.beta) / e.r2 ** (args.n / 2) for e in nonempty]
        report = {
            "what": what,
            "records": records,
            "all_isotropic": ok,
            "ratio_band": [min(ratios), max(ratios)] if ratios else None,
        }
        print(f"{len(nonempty)} nonempty shells, all isotropic: {ok}")
        code = EXIT_OK if ok else EXIT_CHECK
    elif what == "pressure":
        topology = {"grid": GRID, "all": ALL_TO_ALL}[args.topology]
        config.update(n=args.n, l=args.l, law=args.law, scale=args.scale, topology=args.topology, radius=args.radius)
        law = _force_law(args.law, args.scale)
        res = pressure(PressureModel(topology, law, args.radius), args.l, args.n)
        report = {"what": what, "value": res.value, "tail_bound": res.tail_bound, "terms": res.terms}
        print(f"pressure {res.value!r} (tail bound {res.tail_bound:.3g}, {res.terms} shells)")
    else:
        points = _parse_ints(args.points)
        seed0 = _resolve_seed(args.seed, {})
        config.update(seeds=args.seeds, first_seed=seed0, points=points)
        runs = []
        for s in range(seed0, seed0 + args.seeds):
            r = identity_refinement(what, s, points)
            runs.append({"seed": s, "records": r.as_records(), "slope": r.slope})
        worst = min(r["slope"] for r in runs)
        report = {"what": what, "runs": runs, "min_slope": worst, "slope_floor": SLOPE_FLOOR}
        print(f"{what}: min refinement slope over {args.seeds} seeds = {worst:.4f}")
        code = EXIT_OK if worst >= SLOPE_FLOOR else EXIT_CHECK
    text = io.dumps_canonical(report)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        _write_manifest(out.with_name(out.name + ".manifest.json"), "euler-check", argv, config, [out], None, started)
    else:
        sys.stdout.write(text)
    return code


# ------------------------------------------------------------------- replay

_OUTPUT_FLAGS = ("--out", "--outdir")


def _retarget(argv: Sequence[str], target: Path) -> list[str]:
    """Point a recorded command line at a fresh output location."""
    out = list(argv)
    for i, tok in enumerate(out):
        if tok == "--out" and i + 1 < len(out):
            out[i + 1] = str(target / Path(out[i + 1]).name)
        elif tok == "--outdir" and i + 1 < len(out):
            out[i + 1] = str(target)
    return out


def cmd_replay(args, argv) -> int:
    manifest = io.read_json(args.manifest)
    recorded = manifest.get("argv")
    if not recorded:
        raise UsageError("manifest has no recorded command line")
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(args.outdir) if args.outdir else Path(tmp)
        target.mkdir(parents=True, exist_ok=True)
        code = main(_retarget(recorded, target))
        mismatched = []
        for name, digest in manifest.get("outputs", {}).items():
            p = target / name
            if not p.exists() or io.sha256_file(p) != digest:
                mismatched.append(name)
    if mismatched:
        print("replay differs: " + ", ".join(mismatched))
        return EXIT_CHECK
    print(f"replay reproduced {len(manifest.get('outputs', {}))} outputs bit-exactly")
    return code


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="continuum", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("continue", "graph-continue"):
        c = sub.add_parser(name, help="continue a lattice system into a PDE")
        c.add_argument("input", help="JSON system (linear, graph, multidim, space-dependent, unequal)")
        c.add_argument("-d", "--order", type=int, help="continuation order (default: N-1 + accuracy)")
        c.add_argument("--accuracy", type=int, default=0, help="extra orders beyond the minimum")
        c.add_argument("--d-cap", type=int, help="graph inputs: drop terms above this derivative order")
        c.add_argument("--format", choices=("json", "sexpr"), help="output format (graphs default to sexpr)")
        c.add_argument("--convention", choices=("taylor", "total"), default="taylor",
                       help="multidim derivative weights: dx^h/h! or dx^h/|h|!")
        c.add_argument("--fit", choices=("interpolate", "lstsq"), default="interpolate",
                       help="space-dependent coefficient fit")
        c.add_argument("--degree", type=int, help="polynomial degree for --fit lstsq")
        c.add_argument("--out", help="output file (default stdout)")
        c.set_defaults(func=cmd_continue)

    c = sub.add_parser("discretize", help="turn PDE coefficients back into lattice gains")
    c.add_argument("input", help="PDE coefficient JSON")
    c.add_argument("--stencil", help="comma separated shifts (default: recorded source shifts)")
    c.add_argument("--out", help="output file (default stdout)")
    c.set_defaults(func=cmd_discretize)

    c = sub.add_parser("spectrum", help="symbol curves and stability verdicts per order")
    c.add_argument("input", help="linear ODE JSON")
    c.add_argument("--orders", default="1..6", help='"lo..hi" or comma list (default 1..6)')
    c.add_argument("--points", type=int, default=1001, help="frequency samples")
    c.add_argument("--range", type=float, default=2.0,
                   help="grid covers |omega| <= range * pi / dx (default 2)")
    c.add_argument("--outdir", required=True)
    c.set_defaults(func=cmd_spectrum)

    c = sub.add_parser("swarm-sim", help="formation-control simulation")
    c.add_argument("--config", help="JSON config; flags override it")
    c.add_argument("--extent", help="lattice size per axis, e.g. 8,8,8")
    for flag in ("alpha", "beta", "scale", "noise", "dt", "t_end", "x0"):
        c.add_argument("--" + flag.replace("_", "-"), dest=flag, type=float)
    c.add_argument("--seed", type=int, help="noise seed (fallback: CONTINUUM_SEED, then 42)")
    c.add_argument("--integrator", choices=("semi-implicit", "explicit"))
    c.add_argument("--initial-velocity", dest="initial_velocity", choices=("rest", "desired"))
    c.add_argument("--metric-every", dest="metric_every", type=int)
    c.add_argument("--metric-points", dest="metric_points", type=int)
    c.add_argument("--record-every", dest="record_every", type=int,
                   help="trajectory snapshot interval in steps, 0 disables (default 100)")
    c.add_argument("--outdir", required=True)
    c.set_defaults(func=cmd_swarm)

    c = sub.add_parser("euler-check", help="particle-lattice identity checks")
    c.add_argument("--what", required=True, choices=("beta", "pressure") + IDENTITY_CHECKS)
    c.add_argument("--n", type=int, default=2, help="dimension (beta, pressure)")
    c.add_argument("--r2-max", dest="r2_max", type=int, default=100)
    c.add_argument("--topology", choices=("grid", "all"), default="grid")
    c.add_argument("--law", choices=("exp", "spring"), default="exp")
    c.add_argument("--scale", type=float, default=1.0, help="decay length or spring rest length")
    c.add_argument("--l", type=float, default=1.0, help="specific distance")
    c.add_argument("--radius", type=float, default=10.0, help="all-to-all truncation radius")
    c.add_argument("--seeds", type=int, default=10)
    c.add_argument("--seed", type=int, help="first seed (fallback: CONTINUUM_SEED, then 42)")
    c.add_argument("--points", default="32,64,128", help="grid sizes of the refinement study")
    c.add_argument("--out", help="report file (default stdout)")
    c.set_defaults(func=cmd_euler_check)

    c = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    c.add_argument("manifest")
    c.add_argument("--outdir", help="where to write the re-run outputs (default: temporary)")
    c.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (UsageError, *_INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
