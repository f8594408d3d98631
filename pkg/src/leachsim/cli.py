"""Command line entry point: ``leachsim {cell,tabulate,run,check}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure
(including a failed invariant check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, InputError, LeachError, SimulationError
from .fem import tensor_to_mandel

logger = logging.getLogger("leachsim")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


def _record(e) -> dict:
    return {
        "r": e.r,
        "m": e.m,
        "k": e.k,
        "d": e.d,
        "B_w": e.B_w.tolist(),
        "B_c": e.B_c.tolist(),
        "B_c_quadratic": e.B_c_quadratic.tolist(),
        "N_s_mandel": tensor_to_mandel(e.N_s).tolist(),
    }


def _cmd_cell(args) -> int:
    from .coeff_table import compute_effective_coefficients

    e = compute_effective_coefficients(args.r, args.n, args.mu1, args.lambda0, args.c_s, args.tol)
    print(json.dumps(_record(e)))
    return EXIT_OK


def _cmd_tabulate(args) -> int:
    from .coeff_table import tabulate
    from .config import load_config
    from .io import write_table

    cfg = load_config(args.config)
    table = tabulate(cfg.bounds, cfg.knots, cfg.cell_n, cfg.mu1, cfg.lambda0, cfg.c_s, cfg.cell_tol, args.workers)
    path = write_table(args.out, table)
    logger.info("wrote %s (%d knots)", path, len(table.knots))
    return EXIT_OK


def _cmd_run(args) -> int:
    import dataclasses

    from .config import load_config
    from .free_boundary import run_simulation

    cfg = load_config(args.config)
    if args.table:
        cfg = dataclasses.replace(cfg, table=str(Path(args.table).resolve()))
    res = run_simulation(cfg, args.out)
    logger.info(
        "run finished: %d steps, %d slabs, dissolved volume %.6g",
        cfg.steps, len(res.picard_reports), res.series["dissolved_volume"][-1],
    )
    for note in res.extensions:
        logger.warning("extension in use: %s", note)
    return EXIT_OK


def _cmd_check(args) -> int:
    from .checks import run_checks

    ok = run_checks(print)
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leachsim", description="Homogenized acid leaching simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cell", help="solve the cell problems at one radius")
    c.add_argument("--r", type=float, required=True)
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--mu1", type=float, default=1.0)
    c.add_argument("--lambda0", type=float, default=1.0)
    c.add_argument("--c_s", type=float, default=1.0)
    c.add_argument("--tol", type=float, default=1e-10)
    c.set_defaults(func=_cmd_cell)

    t = sub.add_parser("tabulate", help="build a coefficient table from a config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--workers", type=int, default=None)
    t.set_defaults(func=_cmd_tabulate)

    r = sub.add_parser("run", help="run a coupled simulation")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--table", default=None, help="existing table (overrides the config)")
    r.set_defaults(func=_cmd_run)

    k = sub.add_parser("check", help="run the invariant suite")
    k.set_defaults(func=_cmd_check)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, SimulationError):
        exc = exc.cause
    if isinstance(exc, InputError):
        return EXIT_INPUT
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration ({len(exc.violations)} problems)", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_INPUT
    except (LeachError, OSError) as exc:
        code = EXIT_INPUT if isinstance(exc, OSError) else _exit_code(exc)
        kind = "input" if code == EXIT_INPUT else "numerical"
        print(f"error ({kind}): {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
