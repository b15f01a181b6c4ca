"""Command-line entry point: ``mixflow run | check | mms``.

Exit codes: 0 success, 1 invariant or acceptance failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .diagnostics import CSV_COLUMNS, DiagnosticsLog, diagnose, species_ledgers
from .solver import RunAborted, run
from .storage import (DiagnosticsWriter, SnapshotError, format_value, read_diagnostics,
                      read_snapshot, write_snapshot)
from .verification import CASE_NAMES, build_case, convergence_study

log = logging.getLogger(__name__)

LEDGER_RTOL = 1e-10
SIGMA_RTOL = 1e-8
SPATIAL_FLOOR = 1e-8
# columns that depend on the step that produced a state, not on the state
STEP_COLUMNS = ("picard_iters", "energy_residual")


class _Recorder:
    """Solver sink writing CSV rows and snapshots."""

    def __init__(self, cfg: RunConfig, out: Path, writer: DiagnosticsWriter):
        self.cfg = cfg
        self.out = out
        self.writer = writer
        self.log = DiagnosticsLog(cfg.grid, cfg.ap, cfg.cp, cfg.chem, bd_r=cfg.output.bd_r,
                                  every=cfg.output.diag_every)
        self.step = 0

    def __call__(self, state, record):
        before = len(self.log.reports)
        self.log(state, record)
        if len(self.log.reports) > before:
            self.writer.write(self.log.reports[-1])
        if record is not None:
            self.step += 1
        every = self.cfg.output.snapshot_every
        if every and self.step % every == 0:
            write_snapshot(state, self.out / f"snapshot_{self.step:06d}.mxs")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with DiagnosticsWriter(out / "diagnostics.csv") as writer:
        rec = _Recorder(cfg, out, writer)
        try:
            final = run(cfg.initial_data(), cfg.grid, cfg.ap, cfg.cp, cfg.chem, sinks=[rec])
        except RunAborted as exc:
            print(f"FAILED: {exc}", file=sys.stderr)
            return 1
    write_snapshot(final, out / "final.mxs")
    last = rec.log.reports[-1]
    print(f"t = {final.time:.6g}  steps = {rec.step}  mass = {last.total_mass:.17g}  "
          f"E = {last.E_total:.17g}  min rho = {last.min_rho:.6g}  min theta = {last.min_theta:.6g}")
    print(f"wrote {out / 'diagnostics.csv'} and {out / 'final.mxs'}")
    return 0


def check_snapshot(state, cfg: RunConfig, csv_path: Path | None = None) -> list[str]:
    """Return the list of violated rules (empty when the snapshot passes)."""
    grid, ap, cp = cfg.grid, cfg.ap, cfg.cp
    failures = []
    dim = state.u.shape[0]
    if (dim, state.rho.shape[0], state.r.shape[0]) != (cfg.dim, cfg.M, cp.n_species):
        return [f"snapshot grid (dim={dim}, M={state.rho.shape[0]}, n={state.r.shape[0]}) "
                f"does not match the configuration (dim={cfg.dim}, M={cfg.M}, n={cp.n_species})"]
    fields = np.concatenate([state.rho[None], state.u, state.theta[None], state.r])
    if not np.all(np.isfinite(fields)):
        return ["finiteness: snapshot contains non-finite values"]
    if not state.rho.min() > 0:
        failures.append(f"positivity of rho: min rho = {state.rho.min():.6g}")
    if not state.theta.min() > 0:
        failures.append(f"positivity of theta: min theta = {state.theta.min():.6g}")
    if failures:
        return failures

    init = cfg.initial_data().to_state(grid, ap, cp)
    rep0 = diagnose(grid, init, ap, cp, cfg.chem, bd_r=cfg.output.bd_r)
    rep = diagnose(grid, state, ap, cp, cfg.chem, bd_r=cfg.output.bd_r)
    dm = abs(rep.total_mass - rep0.total_mass) / abs(rep0.total_mass)
    if not dm <= LEDGER_RTOL:
        failures.append(f"total mass ledger: relative drift {dm:.3g} > {LEDGER_RTOL:g}")
    ds = abs(rep.species_ledger - rep0.species_ledger) / abs(rep0.species_ledger)
    if not ds <= LEDGER_RTOL:
        failures.append(f"species ledger: relative drift {ds:.3g} > {LEDGER_RTOL:g}")
    if cfg.chem.kappa_r == 0 or cfg.chem.kind.value == "inert":
        L0 = species_ledgers(grid, init, ap, cp)
        L = species_ledgers(grid, state, ap, cp)
        dk = np.abs(L - L0) / abs(rep0.species_ledger)
        for k in np.flatnonzero(~(dk <= LEDGER_RTOL)):
            failures.append(f"species {k} ledger (inert): relative drift {dk[k]:.3g} > {LEDGER_RTOL:g}")
    if ap.delta == 0 and rep0.sum_rhok_dev <= 1e-12 and not rep.sum_rhok_dev <= ap.rhon_band:
        failures.append(f"species/total density band: max |rho^n - rho|/rho = "
                        f"{rep.sum_rhok_dev:.3g} > {ap.rhon_band:g}")
    floor = -SIGMA_RTOL * rep.sigma_total / grid.volume
    if not rep.sigma_min >= floor:
        failures.append(f"entropy production sign: sigma_min = {rep.sigma_min:.6g} < {floor:.3g}")
    if csv_path is not None and csv_path.exists():
        rows = [r for r in read_diagnostics(csv_path) if float(r["time"]) == state.time]
        if rows:
            logged = rows[-1]
            for name, value in zip(CSV_COLUMNS, rep.row()):
                if name in STEP_COLUMNS:
                    continue
                if format_value(value) != logged[name]:
                    failures.append(f"replay mismatch in {name}: logged {logged[name]}, "
                                    f"recomputed {format_value(value)}")
    return failures


def cmd_check(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    path = Path(args.snapshot)
    try:
        state = read_snapshot(path)
    except (SnapshotError, OSError) as exc:
        print(f"FAILED snapshot integrity ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    failures = check_snapshot(state, cfg, path.parent / "diagnostics.csv")
    if failures:
        for f in failures:
            print(f"FAILED {f}", file=sys.stderr)
        return 1
    print(f"ok: {path} at t = {state.time:.6g} passes all ledger, positivity and sign checks")
    return 0


def cmd_mms(args) -> int:
    if args.levels < 3:
        print("--levels must be at least 3", file=sys.stderr)
        return 2
    case = build_case(args.case)
    resolutions = tuple(8 * 2 ** i for i in range(args.levels))
    dts = tuple(1e-2 / 2 ** i for i in range(args.levels))
    res = convergence_study(case, resolutions, dts, temporal_M=32)
    print(f"case {args.case}")
    print("  M      error")
    for M, e in zip(res.resolutions, res.spatial_errors):
        print(f"  {M:<6d} {e:.3e}")
    print("  dt       error")
    for dt, e in zip(res.dts, res.temporal_errors):
        print(f"  {dt:<8.3g} {e:.3e}")
    print(f"  observed temporal order {res.temporal_order:.3f}")
    ok = True
    errs = res.spatial_errors
    for i, ratio in enumerate(res.spatial_ratios):
        if not (ratio > 10 or errs[i + 1] < SPATIAL_FLOOR):
            print(f"FAILED spectral decay: error ratio {ratio:.3g} between M={resolutions[i]} "
                  f"and M={resolutions[i + 1]} (need > 10)")
            ok = False
    if not res.temporal_order >= 0.9:
        print(f"FAILED temporal order {res.temporal_order:.3f} < 0.9")
        ok = False
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command")
    p = sub.add_parser("run", help="integrate a configuration, writing CSV and snapshots")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides [output] out_dir)")
    p = sub.add_parser("check", help="recompute diagnostics of a snapshot and verify its ledgers")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--config", required=True)
    p = sub.add_parser("mms", help="manufactured-solution convergence study")
    p.add_argument("--case", required=True, choices=CASE_NAMES)
    p.add_argument("--levels", type=int, default=3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "check": cmd_check, "mms": cmd_mms}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
