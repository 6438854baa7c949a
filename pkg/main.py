#!/usr/bin/env python3
"""
Command-line entry point for freight-gem.

    python main.py validate --scenario scenarios/desk [--share 0.5]
    python main.py solve    --scenario scenarios/desk --out runs/desk --share 0.5
    python main.py sweep    --scenario scenarios/desk --out runs/sweep --shares 0,0.25,0.5,0.75,1
    python main.py dump-lp  --scenario scenarios/toy --out toy.lp
    python main.py certify  --scenario scenarios/tiny --oracle --grid-step 5
    python main.py generate --kind desk --out scenarios/desk

Exit codes: 0 optimal, 2 validation failure, 3 infeasible or unbounded,
4 numerical failure or iteration limit.  Defaults come from freight.env;
flags override them for one run.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from config import settings
from reporting import (
    EXIT_CODES,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    prepare,
    run_single,
    run_sweep,
    solve_settings_from_config,
)

logger = logging.getLogger("freight_gem")


def _configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="[%(asctime)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def _shares(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freight-gem", description="Joint fleet, charger and grid planning.")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_cmd(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="Scenario directory")
        return p

    def solver_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--feas-tol", type=float, default=None, help="Feasibility tolerance")
        p.add_argument("--opt-tol", type=float, default=None, help="Optimality / duality-gap tolerance")
        p.add_argument("--method", choices=["highs-ipm", "highs-ds", "mehrotra"], default=None)

    p = scenario_cmd("validate", "Check a scenario and list every issue")
    p.add_argument("--share", type=float, default=None, help="Also validate the split at this shared fraction")

    p = scenario_cmd("solve", "Solve one scenario and write its result tables")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--share", type=float, default=None, help="Shared fraction S of HDV demand")
    solver_flags(p)

    p = scenario_cmd("sweep", "Solve a list of shared fractions")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--shares", type=_shares, required=True, help="Comma-separated shared fractions")
    p.add_argument("--workers", type=int, default=None, help="Parallel members (FREIGHT_WORKERS)")
    solver_flags(p)

    p = scenario_cmd("dump-lp", "Write the assembled program in LP format")
    p.add_argument("--out", required=True, help="LP file path")
    p.add_argument("--share", type=float, default=None)

    p = scenario_cmd("certify", "Solve and certify; with --oracle compare against brute force")
    p.add_argument("--share", type=float, default=None)
    p.add_argument("--oracle", action="store_true", help="Compare against the enumeration oracle")
    p.add_argument("--grid-step", type=float, default=None, help="Oracle charging grid step (kWh)")
    solver_flags(p)

    p = sub.add_parser("generate", help="Write a bundled scenario directory")
    p.add_argument("--kind", required=True, choices=["toy", "tiny", "desk"])
    p.add_argument("--out", required=True, help="Target directory")
    return ap


def _solver_settings(args):
    return solve_settings_from_config(
        feasibility_tol=getattr(args, "feas_tol", None),
        optimality_tol=getattr(args, "opt_tol", None),
        method=getattr(args, "method", None),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    from errors import ScenarioFormatError, ScenarioValidationError

    try:
        prepare(args.scenario, args.share)
    except ScenarioValidationError as exc:
        print(json.dumps([i.model_dump() for i in exc.report.issues], indent=2))
        return EXIT_VALIDATION
    except ScenarioFormatError as exc:
        print(json.dumps([{"code": "format", "message": str(exc), "location": ""}], indent=2))
        return EXIT_VALIDATION
    print(json.dumps([], indent=2))
    return EXIT_OK


def cmd_solve(args) -> int:
    outcome = run_single(args.scenario, args.share, _solver_settings(args), args.out)
    result = {"status": outcome.status, "objective": outcome.objective, "out": str(outcome.out_dir)}
    if outcome.bundle is not None:
        result["system_total"] = outcome.bundle.system_total
    print(json.dumps(result, indent=2))
    return outcome.exit_code


def cmd_sweep(args) -> int:
    summary = run_sweep(args.scenario, args.shares, _solver_settings(args), args.out, args.workers)
    print(summary.to_json(orient="records", indent=2))
    codes = [EXIT_CODES.get(s, EXIT_VALIDATION if s == "invalid" else EXIT_NUMERICAL) for s in summary["status"]]
    return max(codes, default=EXIT_OK)


def cmd_dump_lp(args) -> int:
    from cost_engine import compute_coefficients
    from errors import ScenarioFormatError, ScenarioValidationError
    from lp_assembler import build_program, write_lp

    try:
        spec = prepare(args.scenario, args.share)
    except (ScenarioValidationError, ScenarioFormatError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    program, index = build_program(spec, compute_coefficients(spec))
    print(write_lp(program, index, args.out))
    return EXIT_OK


def cmd_certify(args) -> int:
    from cost_engine import compute_coefficients
    from errors import OracleBudgetError, ScenarioFormatError, ScenarioValidationError
    from lp_assembler import build_program
    from oracle import TinyScenario, compare, enumerate_optimum
    from solver import certify, solve

    try:
        spec = prepare(args.scenario, args.share)
    except (ScenarioValidationError, ScenarioFormatError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    solve_settings = _solver_settings(args)
    program, _ = build_program(spec, compute_coefficients(spec))
    solution = solve(program, solve_settings)
    if not solution.optimal:
        print(json.dumps({"status": solution.status}, indent=2))
        return EXIT_CODES[solution.status]
    report = certify(program, solution, solve_settings)
    result = {"status": solution.status, "objective": solution.objective, "certificate": report.model_dump()}
    passed = report.passed
    if args.oracle:
        try:
            tiny = TinyScenario(spec=spec, grid_step=args.grid_step or settings.oracle_grid_step)
            comparison = compare(enumerate_optimum(tiny), solution, program)
        except (ValueError, OracleBudgetError) as exc:
            logger.error("Oracle refused: %s", exc)
            return EXIT_VALIDATION
        result["oracle"] = comparison.model_dump()
        passed = passed and comparison.passed
    print(json.dumps(result, indent=2, default=float))
    return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_generate(args) -> int:
    from scenario_factory import generate

    print(generate(args.kind, args.out))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "dump-lp": cmd_dump_lp,
    "certify": cmd_certify,
    "generate": cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging()
    logger.debug("freight-gem config %s", settings.config_version)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
