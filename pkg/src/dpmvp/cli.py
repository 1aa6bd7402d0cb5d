"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(non-convergence, failed verification, blow-up).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from .config import _FIELD_KEY, ConfigError, RunConfig, load_config, write_field_csv, write_report_csv
from .core import DomainError, GeometryError, StateError, sample
from .elliptic import PxLaplace, resolve, solve_dirichlet
from .expr import ParseError
from .parabolic import BlowUpError, ParabolicSpec, march
from .verify import (
    LEMMAS,
    TestFunction,
    check_consistency,
    check_lemma_average,
    check_lemma_minmax,
    check_lemma_shift,
    check_parabolic_lemmas,
    run_lemma_suite,
)

log = logging.getLogger("dpmvp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpmvp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run expansion checks and write a report CSV")
    v.add_argument("--config", required=True)
    v.add_argument("--lemma", help="comma-separated lemma ids")
    v.add_argument("--output", required=True)
    for name, text in (
        ("solve-elliptic", "solve the Dirichlet problem and write the field CSV"),
        ("solve-parabolic", "march to the horizon and write the final field CSV"),
        ("consistency", "check the consistency identity at configured points"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.add_argument("--output", required=True)
    return parser


def _need(cfg: RunConfig, *names):
    missing = [_FIELD_KEY[n] for n in names if getattr(cfg, n) in (None, ())]
    if missing:
        raise ConfigError([f"{k}: required for this command" for k in missing])


def _write_kv(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, val in pairs:
            fh.write(f"{k} = {val}\n")


def cmd_verify(cfg: RunConfig, output: str, lemma_arg: str | None) -> int:
    lemmas = tuple(s.strip() for s in lemma_arg.split(",") if s.strip()) if lemma_arg else cfg.lemmas
    bad = [x for x in lemmas if x not in LEMMAS]
    if bad:
        raise ConfigError([f"--lemma: unknown id(s) {', '.join(bad)}; known: {', '.join(LEMMAS)}"])
    tol = {} if cfg.verify_tol is None else {"tol": cfg.verify_tol}
    eps = cfg.eps_seq
    if not cfg.functions:
        reports = run_lemma_suite(lemmas, eps)
    else:
        if not cfg.points:
            raise ConfigError(["verify.points: required when verify.functions is given"])
        reports = []
        ga = _grad_a(cfg)
        for k, text in enumerate(cfg.functions):
            tf = TestFunction.make(f"f{k + 1}", text, "custom", cfg.point_list)
            for x in cfg.point_list:
                if "minmax" in lemmas:
                    reports.append(check_lemma_minmax(tf, x, eps, **tol))
                if "average" in lemmas:
                    reports.append(check_lemma_average(tf, x, eps, **tol))
                if "shift" in lemmas:
                    reports.append(check_lemma_shift(tf, x, eps, ga(x), **tol))
                par = {"par-minmax", "par-average", "par-shift"} & set(lemmas)
                if par:
                    t = 0.0 if cfg.t is None else cfg.t
                    A = cfg.time_lag if cfg.time_lag is not None else cfg.dim + (cfg.p or 2.0)
                    for rep in check_parabolic_lemmas(tf, x, t, A, eps, ga(x), **tol):
                        if rep.lemma in par:
                            reports.append(rep)
    write_report_csv(output, reports)
    failed = [r for r in reports if not r.verdict]
    for r in failed:
        log.warning("failed: %s", r)
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed; report written to {output}")
    return EXIT_NUMERIC if failed else EXIT_OK


def _grad_a(cfg: RunConfig):
    k = resolve(cfg.equation())

    def at(x):
        pts = [np.array([v]) for v in x]
        f = k.p_field if isinstance(k, PxLaplace) else k.a
        return f.gradient(pts, cfg.t, h=cfg.h)[:, 0]

    return at


def cmd_solve_elliptic(cfg: RunConfig, output: str) -> int:
    _need(cfg, "boundary")
    grid = cfg.grid()
    field, rep = solve_dirichlet(
        cfg.equation(), grid, cfg.boundary, cfg.eps, cfg.tol, cfg.max_iter, cfg.damping, cfg.delta_grad
    )
    write_field_csv(output, field)
    pairs = [
        ("iterations", rep.iterations),
        ("final_update_norm", repr(rep.final_update_norm)),
        ("residual_norm", repr(rep.residual_norm)),
        ("converged", str(rep.converged).lower()),
    ]
    if cfg.reference is not None:
        mask = grid.interior_mask()
        err = float(np.max(np.abs(field.values[mask] - sample(cfg.reference, grid)[mask]), initial=0.0))
        pairs.append(("reference_error", repr(err)))
    _write_kv(output + ".report", pairs)
    print(
        f"{'converged' if rep.converged else 'not converged'} after {rep.iterations} sweeps; "
        f"update {rep.final_update_norm:.3e}, residual {rep.residual_norm:.3e}"
    )
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_solve_parabolic(cfg: RunConfig, output: str) -> int:
    _need(cfg, "boundary", "tau", "horizon")
    initial = cfg.initial or cfg.boundary
    spec = ParabolicSpec(cfg.equation(), cfg.eps, cfg.tau, cfg.horizon, initial, cfg.boundary, cfg.grid(),
                         cfg.reference, cfg.delta_grad)
    try:
        res = march(spec)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_field_csv(output, res.field, res.times[-1])
    with open(output + ".trace.csv", "w", encoding="utf-8") as fh:
        fh.write("t,defect\n")
        for t, d in zip(res.times, res.defects):
            fh.write(f"{t:.17g},{d:.17g}\n")
    last = res.defects[-1]
    msg = f"reached t={res.times[-1]:g} in {res.steps} steps"
    if not math.isnan(last):
        msg += f"; sup defect {last:.3e}"
    print(msg)
    return EXIT_OK


def cmd_consistency(cfg: RunConfig, output: str) -> int:
    _need(cfg, "functions", "points")
    kind = cfg.equation()
    tol = {} if cfg.verify_tol is None else {"tol": cfg.verify_tol}
    # finest entry is scheme.eps
    eps = tuple(cfg.eps * 2**k for k in reversed(range(cfg.eps_count)))
    reports = [
        check_consistency(text, x, kind, eps, t=cfg.t, delta_grad=cfg.delta_grad, **tol)
        for text in cfg.functions
        for x in cfg.point_list
    ]
    write_report_csv(output, reports)
    failed = [r for r in reports if not r.verdict]
    for r in failed:
        log.warning("failed: %s", r)
    print(f"{len(reports) - len(failed)}/{len(reports)} consistency checks passed; report written to {output}")
    return EXIT_NUMERIC if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"dpmvp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "verify":
            return cmd_verify(cfg, args.output, args.lemma)
        if args.command == "solve-elliptic":
            return cmd_solve_elliptic(cfg, args.output)
        if args.command == "solve-parabolic":
            return cmd_solve_parabolic(cfg, args.output)
        return cmd_consistency(cfg, args.output)
    except ConfigError as exc:
        print(f"dpmvp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, GeometryError, StateError, ParseError) as exc:
        print(f"dpmvp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"dpmvp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
