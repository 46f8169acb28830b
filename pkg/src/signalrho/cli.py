"""Command-line interface: scenario-driven runs with deterministic outputs.

    signalrho validate     --scenario PATH
    signalrho steady       --scenario PATH [--out DIR]
    signalrho evolve       --scenario PATH [--out DIR] [--dt F]
    signalrho trajectories --scenario PATH [--out DIR] [--seed U64]
                           [--ntraj N] [--dt F]
    signalrho inversion    --panel b|c|d [--out DIR]

Numeric output is CSV (UTF-8, header row, floats at 17 significant
digits, so values round-trip exactly); every run also writes a JSON
manifest with the scenario hash, seed, versions and output checksums.
Identical (scenario, flags, seed) produce byte-identical CSVs; wall-clock
timings live only in the manifest's unhashed "timings_s" field.

Exit codes: 0 ok, 2 configuration or validation, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, engine_jump, inversion, trajectories
from .errors import NumericalError, SignalRhoError, ValidationError
from .scenario import Scenario, parse_scenario

SEED_ENV = "SIGNALRHO_SEED"


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                _fmt(v) if isinstance(v, (int, float, np.floating)) else str(v)
                for v in row
            ])


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, scenario: Scenario | None,
                    flags: dict, outputs: list[Path], timings: dict) -> Path:
    manifest = {
        "command": command,
        "scenario_path": scenario.path if scenario else None,
        "scenario_sha256": scenario.sha256() if scenario else None,
        "flags": flags,
        "versions": {
            "signalrho": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "outputs": {p.name: _sha256_file(p) for p in outputs},
        "timings_s": timings,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(
                f"{SEED_ENV} must be an integer, got {env!r}"
            ) from exc
    raise ValidationError(
        "trajectories need a seed: pass --seed or set " + SEED_ENV
    )


def _state_rows(rho: np.ndarray, prefix: str = "rho"):
    d = rho.shape[0]
    rows = []
    for i in range(d):
        for j in range(d):
            rows.append([f"{prefix}_{i}{j}", rho[i, j].real, rho[i, j].imag])
    for i in range(d):
        rows.append([f"population_{i}", rho[i, i].real, 0.0])
    return rows


def cmd_validate(args) -> int:
    scenario = parse_scenario(args.scenario)
    print(f"PASS: scenario '{scenario.name}' valid "
          f"(dim={scenario.dim}, jumps={sorted(scenario.model.jumps)})")
    return 0


def cmd_steady(args) -> int:
    t0 = time.perf_counter()
    scenario = parse_scenario(args.scenario)
    if scenario.schedule is None:
        raise ValidationError("steady needs a schedule in the scenario")
    route = scenario.run.get("route", "omega")
    rows = []
    if route == "omega":
        omega = engine_jump.omega_map(scenario.schedule)
        rho = engine_jump.steady_unconditional(omega)
        boundary = engine_jump.combined_steady(scenario.schedule)
        weights = engine_jump.channel_weights(scenario.schedule, boundary)
    elif route == "coupled":
        models = {}
        for k, segs in scenario.schedule.channels.items():
            if len(segs) != 1:
                raise ValidationError(
                    "coupled route needs tau-independent feedback "
                    f"(channel {k!r} has {len(segs)} segments)"
                )
            models[k] = segs[0].model
        gen = engine_jump.coupled_generator(models)
        blocks = engine_jump.steady_coupled(gen)
        rho = engine_jump.coupled_marginal(blocks)
        weights = {k: float(np.trace(b).real) for k, b in blocks.items()}
    else:
        raise ValidationError(f"unknown steady route {route!r}")
    rows.extend(_state_rows(rho))
    for k in sorted(weights):
        rows.append([f"channel_weight_{k}", weights[k], 0.0])
    for col, O in scenario.observables.items():
        rows.append([col, np.trace(O @ rho).real, np.trace(O @ rho).imag])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "steady.csv"
    _write_csv(out_csv, ["quantity", "re", "im"], rows)
    _write_manifest(out_dir, "steady", scenario,
                    {"route": route}, [out_csv],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {out_csv}")
    return 0


def cmd_evolve(args) -> int:
    t0 = time.perf_counter()
    scenario = parse_scenario(args.scenario)
    if scenario.schedule is None:
        raise ValidationError("evolve needs a schedule in the scenario")
    run = scenario.run
    tmax = float(run.get("T", 1.0))
    mode = run.get("evolve_with", "coupled")
    k0 = run.get("initial_channel")
    if k0 is None:
        raise ValidationError("evolve needs run.initial_channel")
    rho0 = scenario.initial_state
    obs = scenario.observables
    rows = []
    header = ["t", *obs.keys(), "trace"]
    if mode == "coupled":
        models = {k: segs[0].model
                  for k, segs in scenario.schedule.channels.items()}
        for k, segs in scenario.schedule.channels.items():
            if len(segs) != 1:
                raise ValidationError(
                    "coupled evolution needs tau-independent feedback"
                )
        gen = engine_jump.coupled_generator(models)
        zero = np.zeros_like(rho0)
        blocks = {k: (rho0 if k == k0 else zero) for k in gen.labels}
        nsamp = int(run.get("samples", 101))
        for t in np.linspace(0.0, tmax, nsamp):
            bt = engine_jump.evolve_coupled(gen, blocks, float(t))
            marg = engine_jump.coupled_marginal(bt)
            rows.append([
                t, *[np.trace(O @ marg).real for O in obs.values()],
                np.trace(marg).real,
            ])
    elif mode == "tau_grid":
        dtau = float(args.dt if args.dt is not None else run.get("dtau", 0.01))
        state = engine_jump.tau_grid_initial(scenario.schedule, rho0, k0, dtau)
        nsteps = int(round(tmax / dtau))
        every = max(1, int(run.get("sample_every", 1)))
        tables = engine_jump._TauTables(scenario.schedule, dtau)
        for step in range(nsteps + 1):
            if step % every == 0:
                marg = state.marginal()
                rows.append([
                    state.t,
                    *[np.trace(O @ marg).real for O in obs.values()],
                    state.normalization(),
                ])
            if step < nsteps:
                state = engine_jump.evolve_tau_grid(
                    state, scenario.schedule, dtau, _tables=tables)
    else:
        raise ValidationError(f"unknown evolve_with mode {mode!r}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "evolve.csv"
    _write_csv(out_csv, header, rows)
    _write_manifest(out_dir, "evolve", scenario,
                    {"mode": mode, "dt": args.dt}, [out_csv],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {out_csv}")
    return 0


def cmd_trajectories(args) -> int:
    t0 = time.perf_counter()
    scenario = parse_scenario(args.scenario)
    seed = _resolve_seed(args)
    run = scenario.run
    tmax = float(run.get("T", 1.0))
    dt = float(args.dt if args.dt is not None else run.get("dt", 1e-3))
    ntraj = int(args.ntraj if args.ntraj is not None else run.get("ntraj", 100))
    every = int(run.get("sample_every", 1))
    k0 = run.get("initial_channel")
    system = scenario.schedule if scenario.schedule is not None else scenario.model
    result = trajectories.simulate_ensemble(
        system, scenario.initial_state, tmax, dt, ntraj=ntraj, seed=seed,
        initial_channel=k0, observables=scenario.observables,
        sample_every=every,
    )
    header = ["t"]
    series = []
    for name in scenario.observables:
        times, mean, err = trajectories.ensemble_observable(result, name)
        header += [f"{name}_mean", f"{name}_stderr"]
        series.append((mean, err))
    rows = []
    for i, t in enumerate(result.sample_times):
        row = [t]
        for mean, err in series:
            row += [mean[i], err[i]]
        rows.append(row)
    est = trajectories.ensemble_resolved(result)
    chan_rows = [
        [repr(k), np.trace(est.blocks[k]).real, est.trace_stderr[k]]
        for k in sorted(est.blocks, key=repr)
    ]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "trajectories.csv"
    chan_csv = out_dir / "channel_frequencies.csv"
    _write_csv(out_csv, header, rows)
    _write_csv(chan_csv, ["channel", "frequency", "stderr"], chan_rows)
    _write_manifest(out_dir, "trajectories", scenario,
                    {"seed": seed, "ntraj": ntraj, "dt": dt},
                    [out_csv, chan_csv],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {out_csv} and {chan_csv}")
    return 0


def cmd_inversion(args) -> int:
    t0 = time.perf_counter()
    if args.panel is None:
        raise ValidationError("inversion needs --panel b|c|d")
    header, rows = inversion.sweep_figures(args.panel)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / f"inversion_{args.panel}.csv"
    _write_csv(out_csv, header, rows)
    _write_manifest(out_dir, "inversion", None,
                    {"panel": args.panel}, [out_csv],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {out_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signalrho",
        description="Deterministic feedback simulation of monitored "
                    "open quantum systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="path to a scenario JSON file")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("validate", help="parse and validate a scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("steady", help="steady state (omega or coupled route)")
    common(p)
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("evolve", help="deterministic transient evolution")
    common(p)
    p.add_argument("--dt", type=float, default=None,
                   help="override the tau-grid spacing")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("trajectories", help="Monte Carlo trajectory ensemble")
    common(p)
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (or set {SEED_ENV})")
    p.add_argument("--ntraj", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.set_defaults(func=cmd_trajectories)

    p = sub.add_parser("inversion", help="inversion example sweep tables")
    common(p, scenario=False)
    p.add_argument("--panel", choices=("b", "c", "d"), default=None)
    p.set_defaults(func=cmd_inversion)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SignalRhoError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
