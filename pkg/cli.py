"""Command-line driver: evolve, classify, convert, verify.

Exit codes: 0 ok, 1 verification failed, 2 input error, 3 numerical failure,
4 insufficient data.
"""
import argparse
import dataclasses
import json
import logging
from pathlib import Path

import numpy as np

from analytic_rep import AnalyticFunction, Cell, QuantumState, pair_to_complex, parse_cell, sum_constraint_defect
from errors import ConfigError, TorusZerosError
from evolution import PathBundle, finite_difference_derivatives, track, zero_derivatives
from experiment_config import ExperimentConfig
from paths import PathClassification, classify, compare_classifications
from phase_space import build_X, evolve_displacement, fractional_power, verify_real_shift, verify_shifted_copies
from plotting import render_svg
from zeros import complete_zeros, contour_zero_count, find_zeros, state_from_zeros

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1


# ── Shared helpers ────────────────────────────────────────────────────────

def _read_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ConfigError(str(path), f"cannot read file: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON at line {e.lineno}: {e.msg}") from e


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    logger.info("Wrote %s", path)


def _print_table(title, rows):
    """rows: (label, residual, passed)."""
    print("=" * 80)
    print(title)
    print("=" * 80)
    for label, residual, passed in rows:
        print(f"  {'PASS' if passed else 'FAIL'}  {residual:10.3e}  {label}")
    print("─" * 70)
    failed = sum(1 for *_, ok in rows if not ok)
    print(f"  {len(rows) - failed}/{len(rows)} checks passed")


def _load_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "dt", None) is not None:
        cfg.tracker = dataclasses.replace(cfg.tracker, dt=args.dt)
    if getattr(args, "seed", None) is not None:
        cfg.root = dataclasses.replace(cfg.root, jitter_seed=args.seed)
        cfg.tracker = dataclasses.replace(cfg.tracker, root=cfg.root)
    return cfg


def run_experiment(cfg):
    """PathBundle for an experiment config (tracker or displacement powers)."""
    t_end = cfg.resolved_t_end()
    period = cfg.period()
    if cfg.hamiltonian is not None:
        bundle = track(cfg.hamiltonian, t_end, cfg.tracker, state0=cfg.state, zeros0=cfg.zeros)
    else:
        cell = Cell(cfg.d)
        state = cfg.state if cfg.state is not None else state_from_zeros(cfg.zeros, cell)
        anchor = complete_zeros(cfg.zeros, cell) if cfg.zeros is not None else None
        n_samples = int(round(t_end * cfg.samples_per_unit)) + 1
        times = np.linspace(0.0, t_end, n_samples)
        bundle = evolve_displacement(state, cfg.displacement, times, anchor=anchor, root_cfg=cfg.root)
    config = dict(bundle.config, name=cfg.name, t_end=t_end)
    if period is not None:
        config["period"] = period
    return dataclasses.replace(bundle, config=config)


# ── Subcommands ───────────────────────────────────────────────────────────

def cmd_evolve(args):
    cfg = _load_experiment(args)
    bundle = run_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle.write_csv(out / "paths.csv")
    bundle.write_json(out / "paths.json")
    if args.svg:
        render_svg(bundle, out / "paths.svg")
    defect = float(np.max(bundle.constraint_defects()))
    logger.info("Wrote %d samples of %d paths to %s (max constraint defect %.2e)",
                bundle.times.size, bundle.d, out, defect)
    return EXIT_OK


def cmd_classify(args):
    bundle = PathBundle.read_json(args.bundle)
    period = args.period if args.period is not None else bundle.config.get("period")
    if period is None:
        raise ConfigError("period", "the bundle records no period; pass --period")
    result = classify(bundle, float(period))
    output = result.to_dict()

    print(f"Permutation: {list(result.permutation)}")
    for c in result.cycles:
        print(f"  cycle {list(c.members)}  M={c.M}  winding=({c.winding[0]}, {c.winding[1]})")

    if args.against:
        other = PathClassification.from_dict(_read_json(args.against))
        diff = compare_classifications(other, result)
        output["diff"] = diff.to_dict()
        for line in diff.describe():
            print(f"  {line}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "classification.json", output)
    return EXIT_OK


def _parse_zero_file(data):
    if not isinstance(data, dict) or not isinstance(data.get("d"), int) or data["d"] < 1:
        raise ConfigError("d", "expected a positive integer")
    d = data["d"]
    raw = data["zeros"]
    if not isinstance(raw, list) or len(raw) not in (d - 1, d):
        raise ConfigError("zeros", f"expected {d - 1} or {d} zeros")
    return parse_cell(data, d), [pair_to_complex(p, f"zeros[{i}]") for i, p in enumerate(raw)]


def cmd_convert(args):
    data = _read_json(args.input)
    if isinstance(data, dict) and "g" in data:
        state = QuantumState.from_dict(data)
        zs = find_zeros(state)
        output = zs.to_dict()
        print(f"{zs.d} zeros, constraint defect {sum_constraint_defect(zs):.2e}")
    elif isinstance(data, dict) and "zeros" in data:
        cell, zeros = _parse_zero_file(data)
        completed = complete_zeros(zeros, cell)
        if len(zeros) == cell.d - 1:
            last = completed[-1]
            print(f"Completed zero {cell.d - 1}: {last.real:.10g}{last.imag:+.10g}i")
        output = state_from_zeros(zeros, cell).to_dict()
    else:
        raise ConfigError("input", "expected a state ('g') or a zero set ('zeros')")
    _write_json(args.output, output)
    return EXIT_OK


def _random_state(d, rng):
    return QuantumState.from_coefficients(rng.normal(size=d) + 1j * rng.normal(size=d))


def invariant_rows(d, seed, count=10):
    """Round trips, zero counts, derivative formula and unitarity on seeded random states."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(count):
        state = _random_state(d, rng)
        zs = find_zeros(state)
        counted = contour_zero_count(AnalyticFunction(state), Cell(d).origin + 1e-3 * (1 + 1j), Cell(d).side)
        rows.append((f"state {k}: contour count {counted} == {d}", 0.0 if counted == d else 1.0, counted == d))
        defect = sum_constraint_defect(zs)
        rows.append((f"state {k}: sum constraint", defect, defect < 1e-8))
        back = state_from_zeros(zs, zs.cell)
        overlap = abs(np.vdot(back.g, state.g))
        rows.append((f"state {k}: state -> zeros -> state", abs(1 - overlap), abs(1 - overlap) < 1e-6))

    state = _random_state(d, rng)
    zeros = find_zeros(state).zeros
    exact = zero_derivatives(state, zeros)
    approx = finite_difference_derivatives(state, zeros)
    rel = float(np.max(np.abs(exact - approx)) / np.max(np.abs(exact)))
    rows.append(("derivative formula vs finite differences", rel, rel < 1e-4))

    power = fractional_power(build_X(d), 0.37)
    unitarity = float(np.max(np.abs(power.conj().T @ power - np.eye(d))))
    rows.append(("X^t unitary", unitarity, unitarity < 1e-10))
    return rows


def cmd_verify(args):
    suite = args.suite
    cfg = None
    if args.config:
        cfg = _load_experiment(args)
        suite = suite or cfg.verify
    if suite is None:
        raise ConfigError("suite", "pass --suite or set 'verify' in the config")

    if suite == "invariants":
        d = args.d or (cfg.d if cfg else 3)
        seed = args.seed if args.seed is not None else 0
        rows = invariant_rows(d, seed)
        title = f"Invariants (d={d}, seed={seed})"
    else:
        if cfg is None:
            raise ConfigError("config", f"suite {suite!r} needs --config")
        bundle = run_experiment(cfg)
        if suite == "real-shift":
            report = verify_real_shift(bundle, cfg.d)
            title = f"Shift relation for X^t ({cfg.name}): max violation {report.max_violation:.3e}"
        else:
            report = verify_shifted_copies(bundle, cfg.d)
            title = f"Shifted copies under D^t ({cfg.name}): max residual {report.max_residual:.3e}"
        rows = report.rows()

    _print_table(title, rows)
    return EXIT_OK if all(ok for *_, ok in rows) else EXIT_FAILED


# ── Entry point ───────────────────────────────────────────────────────────

def build_parser():
    parser = argparse.ArgumentParser(prog="torus-zeros", description="Zeros of finite quantum systems on a torus")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="track zero paths for an experiment config")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--dt", type=float, help="override the tracker time step")
    p.add_argument("--seed", type=int, help="seed for root-finder window jitter")
    p.add_argument("--svg", action="store_true", help="also write paths.svg")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("classify", help="permutation, multiplicities and windings of a path bundle")
    p.add_argument("--bundle", required=True, help="paths.json written by evolve")
    p.add_argument("--period", type=float, help="period T (default: recorded in the bundle)")
    p.add_argument("--against", help="classification.json to compare the cycle structure with")
    p.add_argument("--out", default=".", help="output directory for classification.json")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("convert", help="state JSON <-> zeros JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="run a verification and print a pass/fail table")
    p.add_argument("--config", help="experiment JSON")
    p.add_argument("--suite", choices=["real-shift", "shifted-copies", "invariants"])
    p.add_argument("--d", type=int, help="dimension for the invariants suite")
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TorusZerosError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code
