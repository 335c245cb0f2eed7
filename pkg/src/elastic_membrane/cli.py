"""Command line interface.

Subcommands::

    run <config>                    integrate and write outputs
    check-lemmas --trials N --seed S
    equilibrium-test                Clifford-ratio torus at rest
    print-config-defaults

The output directory is ``output.dir`` from the config, overridden by the
``MEMBRANE_OUTPUT_DIR`` environment variable, overridden by ``--output``.
Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 numerical
failure (partial outputs are kept).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as diag
from .config import Config, format_config, parse_config, to_mapping
from .errors import ConfigError, NumericalError
from .geometry import make_torus, torus_grid, willmore_residual
from .io import write_csv, write_snapshot
from .solver import run_direct, run_picard

ENV_OUTPUT = "MEMBRANE_OUTPUT_DIR"
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("elastic_membrane")


def output_dir(cfg: Config, override: str | None = None) -> Path:
    return Path(override or os.environ.get(ENV_OUTPUT) or cfg.output.dir)


def _write_manifest(path: Path, cfg: Config, start: float, status: str, error=None) -> None:
    manifest = {
        "version": __version__,
        "config": to_mapping(cfg),
        "start": start,
        "end": time.time(),
        "status": status,
        "error": error,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def execute(cfg: Config, out: Path) -> int:
    """Run a validated configuration and write all outputs to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    (out / "config.txt").write_text(format_config(cfg))
    report = None
    if cfg.run.mode == "picard":
        traj, report = run_picard(cfg)
    else:
        traj = run_direct(cfg)
    error = None
    try:
        records = diag.trajectory_records(traj)
    except NumericalError as exc:
        records = []
        traj.status, traj.error, traj.error_type = "error", str(exc), type(exc).__name__
    write_csv(out / "diagnostics.csv", diag.CSV_COLUMNS, [r.row() for r in records])
    if report is not None:
        rows = []
        for i, (d1, d2, m) in enumerate(zip(report.D1, report.D2, report.metric)):
            ratio = report.ratios[i - 1] if i >= 1 else float("nan")
            rows.append([i + 1, d1, d2, m, ratio])
        write_csv(out / "iteration_report.csv", ("sweep", "D1", "D2", "metric", "ratio"), rows)
    if cfg.output.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for i, st in enumerate(traj.stamps):
            extra = {"W1": st.aux.W1, "W2": st.aux.W2, "Pi": st.aux.Pi, "E": st.snap.E}
            if st.R_tilde is not None:
                extra["R_tilde"] = st.R_tilde
                extra["R_hat"] = st.R_hat
            write_snapshot(snap_dir / f"snap_{i:05d}.bin", traj.grid, st.t, st.snap.R, st.flow, extra)
    if traj.status == "error":
        error = {"type": traj.error_type, "message": traj.error}
    status = traj.status
    if report is not None and status != "error":
        status = "converged" if report.converged else ("non_contraction" if report.non_contraction
                                                       else "max_sweeps")
    _write_manifest(out / "manifest.json", cfg, start, status, error)
    if traj.status == "error":
        log.error("%s: %s", traj.error_type, traj.error)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    return execute(cfg, output_dir(cfg, args.output))


def cmd_check_lemmas(args) -> int:
    ok = True
    ids = [args.lemma] if args.lemma else diag.LEMMAS
    for lid in ids:
        check = diag.lemma_check(lid, args.trials, args.seed)
        maxes = " ".join(f"n={r.n}:{r.max:.4g}" for r in check.reports)
        print(f"{lid:15s} {'PASS' if check.passed else 'FAIL'}  max ratio {maxes}")
        ok &= check.passed
    return EXIT_OK if ok else EXIT_CHECK


def cmd_equilibrium(args) -> int:
    a = float(np.sqrt(2.0))
    cfg = Config().replace(**{"grid.n1": args.n, "grid.n2": args.n, "torus.a": a, "torus.r": 1.0,
                              "time.dt": args.dt, "time.t_end": args.t_end,
                              "output.stride": 10**9})
    grid = torus_grid(args.n, args.n, a, 1.0)
    res = float(np.max(np.abs(willmore_residual(make_torus(a, 1.0, grid)))))
    traj = run_direct(cfg)
    vmax = max(float(np.max(np.abs(np.stack([s.flow.U1, s.flow.U2, s.flow.Un]))))
               for s in traj.stamps)
    ok = traj.status == "ok" and vmax < 1e-5 and res < 1e-6
    print(f"willmore residual {res:.3e}  max velocity {vmax:.3e}  {'PASS' if ok else 'FAIL'}")
    if traj.status == "error":
        return EXIT_NUMERICAL
    return EXIT_OK if ok else EXIT_CHECK


def cmd_defaults(args) -> int:
    sys.stdout.write(format_config(Config()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="membrane", description="Viscous elastic membrane on a torus.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configuration")
    r.add_argument("config")
    r.add_argument("--output", default=None, help="output directory")
    r.set_defaults(func=cmd_run)
    lm = sub.add_parser("check-lemmas", help="empirical Sobolev lemma constants")
    lm.add_argument("--trials", type=int, default=100)
    lm.add_argument("--seed", type=int, default=0)
    lm.add_argument("--lemma", default=None, choices=diag.LEMMAS)
    lm.set_defaults(func=cmd_check_lemmas)
    eq = sub.add_parser("equilibrium-test", help="Clifford-ratio torus at rest")
    eq.add_argument("--n", type=int, default=64)
    eq.add_argument("--dt", type=float, default=1e-4)
    eq.add_argument("--t-end", type=float, default=0.1)
    eq.set_defaults(func=cmd_equilibrium)
    d = sub.add_parser("print-config-defaults", help="print every key with its default")
    d.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
