"""Command-line driver.

Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure,
4 non-convergence (results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import datagen, io, oracle
from .engine import FitOptions, fit
from .latent import MatchOptions, full_correlation_matrix, table_a1
from .model import demean_regressors, validate

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("coarsemom")


class UsageError(Exception):
    pass


def _thread_limit():
    raw = os.environ.get("COARSEMOM_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"COARSEMOM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("COARSEMOM_THREADS must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {s!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- simulate ------------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.config:
        config = io.read_dgp_config(args.config)
    elif args.dgp == "5c":
        config = datagen.config_5c(args.x3_sd)
    elif args.dgp == "8eq":
        config = datagen.config_8eq()
    else:
        raise UsageError("one of --dgp or --config is required")
    data, latent = datagen.generate(config, args.n, args.seed)
    io.write_dataset(data, args.out)
    if args.latent_out:
        names = [f"{r}_star" for r in data.response_names] + [f"{r}_err" for r in data.response_names]
        lines = [",".join(names)]
        for a, b in zip(latent.y_star, latent.errors):
            lines.append(",".join("%.17g" % v for v in np.concatenate([a, b])))
        Path(args.latent_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {data.n_obs} rows, {len(data.response_names)} responses, {len(data.regressor_names)} regressors to {args.out}")
    return EXIT_OK


# -- fit ----------------------------------------------------------------------------------------


def cmd_fit(args) -> int:
    spec = io.read_model(args.model)
    data = io.read_dataset(args.data, spec.response_names)
    report = validate(spec, data)
    if not report.ok:
        for issue in report.issues:
            print(f"validation: {issue}", file=sys.stderr)
        return EXIT_VALIDATION
    means = None
    if not args.no_demean:
        data, means = demean_regressors(data)

    defaults = FitOptions()
    options = FitOptions(
        max_outer_iterations=args.max_iter or defaults.max_outer_iterations,
        param_tolerance=args.tol or defaults.param_tolerance,
    )
    match = MatchOptions(mode=args.latent_cov, n_draws_per_obs=args.draws, seed=args.seed)

    result = fit(spec, data, options)
    latent = None
    if args.latent_cov != "none":
        t0 = time.perf_counter()
        latent = full_correlation_matrix(spec, data, result, match)
        result.timing["latent_cov"] = time.perf_counter() - t0

    provenance = {
        "tool": "coarsemom",
        "version": io.tool_version(),
        "data": str(args.data),
        "data_sha256": io.file_digest(args.data),
        "model": str(args.model),
        "demeaned": not args.no_demean,
        "regressor_means": None if means is None else dict(zip(data.regressor_names, map(float, means))),
        "options": {
            "max_outer_iterations": options.max_outer_iterations,
            "param_tolerance": options.param_tolerance,
            "moment_tolerance": options.moment_tolerance,
            "jacobian_step": options.jacobian_step,
            "weight_mode": options.weight_mode,
            "latent_cov": args.latent_cov,
            "draws": args.draws,
            "seed": args.seed,
        },
    }
    doc = io.build_results(spec, data, result, latent, provenance)
    if args.out:
        doc.write(args.out)
    sys.stdout.write(io.render_text(doc))
    if not result.converged:
        print(f"warning: {result.message}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# -- table-a1 ---------------------------------------------------------------------------------


def parse_grid(text: str) -> tuple[list[float], list[float]]:
    """``"a1,a2,...;b1,b2,..."``: cut-points of the two coordinates."""
    parts = text.split(";")
    if len(parts) != 2:
        raise UsageError(f"grid must be two ';'-separated cut-point lists, got {text!r}")
    try:
        cuts = [[float(v) for v in p.split(",") if v.strip()] for p in parts]
    except ValueError:
        raise UsageError(f"grid cut-points must be numbers: {text!r}") from None
    for c in cuts:
        if not c or any(b <= a for a, b in zip(c, c[1:])):
            raise UsageError(f"grid cut-points must be non-empty and strictly ascending: {text!r}")
    return cuts[0], cuts[1]


def cmd_table_a1(args) -> int:
    a, b = parse_grid(args.grid)
    if any(not -1.0 < r < 1.0 for r in args.rhos):
        raise UsageError("every rho must lie strictly inside (-1, 1)")
    rows = table_a1(a, b, args.rhos, n=args.n, seed=args.seed, mode=args.mode)
    lines = ["rho,between_cov"] + [f"{r!r},{v!r}" for r, v in rows]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# -- report / oracle ----------------------------------------------------------------------------


def cmd_report(args) -> int:
    doc = io.ResultsDocument.read(args.results)
    text = io.render_csv(doc) if args.format == "csv" else io.render_text(doc)
    _emit(text, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    data = io.read_dataset(args.data)
    names = list(data.response_names)

    def idx(name):
        if name not in names:
            raise UsageError(f"no response column {name!r}; have {names}")
        return names.index(name)

    if args.kind == "op":
        res = oracle.op_ml_fit(data, idx(args.response))
    else:
        res = oracle.biprobit_ml_fit(data, idx(args.responses[0]), idx(args.responses[1]))
    _emit(json.dumps(io._clean(res.to_dict()), indent=2) + "\n", args.out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


# -- parser ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coarsemom", description="Method-of-moments estimation for coarsened multivariate data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--dgp", choices=["5c", "8eq"])
    g.add_argument("--config", help="JSON data-generating process")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--x3-sd", type=float, default=2.0, help="sd of the x3 noise in the 5c design")
    s.add_argument("--out", required=True)
    s.add_argument("--latent-out")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="estimate a model")
    f.add_argument("--data", required=True)
    f.add_argument("--model", required=True)
    f.add_argument("--max-iter", type=_positive_int)
    f.add_argument("--tol", type=float)
    f.add_argument("--no-demean", action="store_true")
    f.add_argument("--latent-cov", choices=["exact", "mc", "none"], default="exact")
    f.add_argument("--draws", type=_positive_int, default=10, help="draws per observation in mc mode")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("table-a1", help="in-between covariance as a function of rho on a fixed grid")
    t.add_argument("--grid", required=True, help='cut-points of each coordinate, e.g. --grid="-0.5,0,0.75;-0.75,-0.5,0.5" (use = when the list starts with a minus sign)')
    t.add_argument("--rhos", type=_float_list, default=[i / 10 for i in range(1, 10)])
    t.add_argument("--n", type=_positive_int, default=10_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mode", choices=["exact", "mc"], default="mc")
    t.add_argument("--out")
    t.set_defaults(func=cmd_table_a1)

    r = sub.add_parser("report", help="render a results file")
    r.add_argument("--results", required=True)
    r.add_argument("--format", choices=["text", "csv"], default="text")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    o = sub.add_parser("oracle", help="maximum-likelihood reference fits")
    osub = o.add_subparsers(dest="kind", required=True)
    op = osub.add_parser("op")
    op.add_argument("--data", required=True)
    op.add_argument("--response", required=True)
    op.add_argument("--out")
    bp = osub.add_parser("biprobit")
    bp.add_argument("--data", required=True)
    bp.add_argument("--responses", nargs=2, required=True)
    bp.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except io.SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
