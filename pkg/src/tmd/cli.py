"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import io as tio
from .device import ModeWeights, derive_mode_weights, timing, weights_from_events
from .distributions import Distribution, poisson_distribution
from .matrices import ConditionalMatrix, conditional_matrix, loss_matrix
from .reconstruct import (
    LikelihoodDecrease,
    SingularMatrixError,
    bayes_table,
    fit_binomial,
    fit_poisson_forward,
    invert,
    ml_reconstruct,
    monte_carlo_error_bars,
    with_error_bars,
)
from .sim import SourceSpec, simulate, sweep_fock_diagonal

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _log(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr)


def _default_seed() -> int:
    env = os.environ.get("TMD_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise CliError(f"TMD_SEED: not an integer: {env!r}") from exc


def _digest(args, inputs) -> str:
    h = hashlib.sha256()
    skip = {"out", "manifest", "quiet", "json_errors", "func", "records", "csv"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    h.update(json.dumps(params, sort_keys=True, default=str).encode())
    for p in inputs:
        if p is not None and str(p) != "-":
            h.update(Path(p).read_bytes())
    return h.hexdigest()


def _manifest(args, argv, inputs, outputs, seed=None) -> None:
    inputs = [str(p) for p in inputs if p is not None]
    manifest = {
        "command": ["tmd", *argv],
        "config_digest": _digest(args, inputs),
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "tool_version": __version__,
        "inputs": inputs,
        "outputs": [str(p) for p in outputs if p is not None],
    }
    target = args.manifest
    if target is None and args.out not in (None, "-"):
        target = f"{args.out}.manifest.json"
    if target is not None:
        tio.write_json(manifest, target)
    elif not args.quiet:
        print(json.dumps(manifest), file=sys.stderr)


def _load_matrix(path) -> ConditionalMatrix:
    m = tio.read_matrix_csv(path)
    # the matrix CSV does not carry weights; keep an equal-weight placeholder
    return ConditionalMatrix(m, np.full(m.shape[0] - 1, 1.0 / (m.shape[0] - 1)))


def _prior(args, n_max: int) -> Distribution:
    if args.coherent is not None:
        return poisson_distribution(args.coherent, n_max)
    if args.fock is not None:
        return Distribution.delta(args.fock, max(n_max, args.fock) + 1)
    return tio.read_distribution(args.prior)


def cmd_weights(args, argv):
    if args.config and (args.toa or args.gates):
        raise CliError("conflicting weight sources: use --config or --toa/--gates, not both")
    inputs = []
    if args.config:
        w = derive_mode_weights(tio.load_config(args.config))
        out = w.to_dict()
        inputs = [args.config]
    elif args.toa and args.gates:
        w, report = weights_from_events(tio.read_events_csv(args.toa), tio.load_gates(args.gates),
                                        efficiency=args.eta)
        out = w.to_dict()
        out["rejection"] = report.to_dict()
        inputs = [args.toa, args.gates]
    else:
        raise CliError("weights: need --config, or both --toa and --gates")
    tio.write_json(out, args.out)
    _manifest(args, argv, inputs, [args.out])
    return EXIT_OK


def cmd_matrix(args, argv):
    w = tio.load_weights(args.weights)
    C = conditional_matrix(w.normalized(), args.nmax)
    if args.format == "json":
        tio.write_json({"entries": C.entries.tolist(), "weights": C.weights.tolist()}, args.out)
    else:
        tio.write_matrix_csv(C.entries, args.out)
    _manifest(args, argv, [args.weights], [args.out])
    return EXIT_OK


def _weights_for_sim(args) -> ModeWeights:
    if args.config and args.weights:
        raise CliError("conflicting weight sources: use --config or --weights, not both")
    if args.config:
        return derive_mode_weights(tio.load_config(args.config))
    if args.weights:
        return tio.load_weights(args.weights)
    return ModeWeights(np.full(args.modes, 1.0 / args.modes))


def cmd_simulate(args, argv):
    weights = _weights_for_sim(args)
    if args.coherent is not None:
        source = SourceSpec.coherent(args.coherent, args.pulses)
    elif args.fock is not None:
        source = SourceSpec.fock(args.fock, args.pulses)
    else:
        source = SourceSpec.custom(tio.read_distribution(args.custom), args.pulses)
    seed = args.seed if args.seed is not None else _default_seed()
    result = simulate(source, weights, efficiency=args.eta, seed=seed,
                      dark_count_prob=args.dark, records=bool(args.records))
    tio.write_histogram_csv(result.histogram, args.out)
    if args.records:
        tio.write_records_jsonl(result.records, args.records)
    if args.metadata:
        tio.write_json(result.metadata, args.metadata)
    _manifest(args, argv, [args.config, args.weights, args.custom],
              [args.out, args.records, args.metadata], seed=seed)
    _log(args, f"simulated {args.pulses} pulses (seed {seed})")
    return EXIT_OK


def cmd_reconstruct(args, argv):
    hist = tio.read_histogram_csv(args.hist)
    C = _load_matrix(args.matrix) if args.matrix else None
    L = loss_matrix(args.eta, C.truncation) if C is not None else None
    method = args.method
    if method != "binom-fit" and C is None:
        raise CliError(f"--matrix is required for method {method}")

    def pipeline(h):
        if method == "invert":
            return invert(h, C, L)
        if method == "ml":
            return ml_reconstruct(h, C.entries @ L.entries)
        if method == "poisson-fit":
            return fit_poisson_forward(h, C, L)
        return fit_binomial(h, args.modes or (C.mode_count if C is not None else None))

    result = pipeline(hist)
    if args.error_bars:
        source = hist.frequencies()
        std = monte_carlo_error_bars(source, pipeline, hist.pulses, args.error_bars,
                                     seed=args.seed if args.seed is not None else _default_seed())
        result = with_error_bars(result, std)
    tio.write_json(result.to_dict(), args.out)
    if args.csv:
        tio.write_reconstruction_csv(result, args.csv)
    _manifest(args, argv, [args.hist, args.matrix], [args.out, args.csv])
    if "negative_entries" in result.diagnostics or "entries_above_one" in result.diagnostics:
        print(f"warning: unphysical reconstruction ({', '.join(result.diagnostics)})",
              file=sys.stderr)
    if result.mu_estimate is not None:
        _log(args, f"mu estimate: {result.mu_estimate:.6g}")
    return EXIT_OK


def cmd_bayes(args, argv):
    C = _load_matrix(args.matrix)
    L = loss_matrix(args.eta, C.truncation)
    table = bayes_table(_prior(args, C.truncation), C, L)
    tio.write_bayes_csv(table, args.out)
    _manifest(args, argv, [args.matrix, args.prior], [args.out])
    return EXIT_OK


def _grid(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError("--eta-grid: expected start:stop:count")
        return list(np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
    return [float(x) for x in text.split(",")]


def cmd_fock(args, argv):
    rows = sweep_fock_diagonal(args.modes, args.n, _grid(args.eta_grid))
    tio.write_fock_csv(rows, args.out)
    _manifest(args, argv, [], [args.out])
    return EXIT_OK


def cmd_timing(args, argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = timing(tio.load_config(args.config))
    tio.write_json(report.to_dict(), args.out)
    _manifest(args, argv, [args.config], [args.out])
    if report.deadtime_violation:
        print("warning: base delay does not exceed detector deadtime", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-o", "--out", default=None, help="output path (default: standard output)")
    common.add_argument("--manifest", default=None,
                        help="run-manifest path (default: <out>.manifest.json)")
    common.add_argument("--quiet", action="store_true", help="suppress progress on standard error")
    common.add_argument("--json-errors", action="store_true",
                        help="report errors as JSON on standard error")

    parser = _Parser(prog="tmd", description="Time-multiplexed detector count statistics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("weights", parents=[common], help="mode weights from a config or TOA data")
    p.add_argument("--config", help="detector config JSON")
    p.add_argument("--toa", help="time-of-arrival events CSV (detector,arrival_ns)")
    p.add_argument("--gates", help="gate windows JSON")
    p.add_argument("--eta", type=float, default=1.0, help="total efficiency for ingested weights")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("matrix", parents=[common], help="conditional count matrix")
    p.add_argument("weights", help="weights JSON (normalised before use)")
    p.add_argument("--nmax", type=int, required=True, help="largest photon number")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo count histogram")
    p.add_argument("--config", help="detector config JSON")
    p.add_argument("--weights", help="weights JSON")
    p.add_argument("--modes", type=int, default=8, help="equal-weight modes if no weights given")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--coherent", type=float, metavar="MU", help="coherent source mean")
    src.add_argument("--fock", type=int, metavar="N", help="Fock source photon number")
    src.add_argument("--custom", metavar="PATH", help="photon-number distribution file")
    p.add_argument("--pulses", type=int, required=True, help="number of triggers")
    p.add_argument("--eta", type=float, default=None,
                   help="efficiency (default: sum of the weights)")
    p.add_argument("--dark", type=float, default=0.0, help="dark-click probability per mode")
    p.add_argument("--seed", type=int, default=None, help="seed (default: $TMD_SEED or 0)")
    p.add_argument("--records", help="write per-pulse records as JSON lines")
    p.add_argument("--metadata", help="write simulation metadata JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct photon statistics")
    p.add_argument("hist", help="histogram CSV (k,count); '-' for standard input")
    p.add_argument("--method", choices=("invert", "ml", "poisson-fit", "binom-fit"),
                   required=True, help="reconstruction method")
    p.add_argument("--matrix", help="conditional matrix CSV")
    p.add_argument("--eta", type=float, default=1.0, help="efficiency for the loss matrix")
    p.add_argument("--modes", type=int, default=None, help="mode count for binom-fit")
    p.add_argument("--error-bars", type=int, default=0, metavar="R",
                   help="Monte Carlo replicates for error bars (0: none)")
    p.add_argument("--seed", type=int, default=None, help="seed for error bars")
    p.add_argument("--csv", help="also write the distribution as CSV")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("bayes", parents=[common], help="single-shot posterior table")
    p.add_argument("--matrix", required=True, help="conditional matrix CSV")
    p.add_argument("--eta", type=float, default=1.0, help="efficiency for the loss matrix")
    pri = p.add_mutually_exclusive_group(required=True)
    pri.add_argument("--coherent", type=float, metavar="MU", help="Poisson prior mean")
    pri.add_argument("--fock", type=int, metavar="N", help="Fock prior")
    pri.add_argument("--prior", metavar="PATH", help="prior distribution file")
    p.set_defaults(func=cmd_bayes)

    p = sub.add_parser("fock", parents=[common], help="Fock diagonal p(k=j|n=j) sweep")
    p.add_argument("--n", type=int, nargs="+", required=True, help="photon numbers j")
    p.add_argument("--eta-grid", required=True, help="start:stop:count or comma list")
    p.add_argument("--modes", type=int, default=16, help="number of equal-weight modes")
    p.set_defaults(func=cmd_fock)

    p = sub.add_parser("timing", parents=[common], help="delay budget and repetition rate")
    p.add_argument("config", help="detector config JSON")
    p.set_defaults(func=cmd_timing)
    return parser


def _report(exc_msg: str, code: int, as_json: bool) -> int:
    if as_json:
        print(json.dumps({"error": exc_msg, "exit_code": code}), file=sys.stderr)
    else:
        print(f"tmd: error: {exc_msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except CliError as exc:
        return _report(str(exc), exc.code, as_json)
    except (SingularMatrixError, LikelihoodDecrease, RuntimeError, ArithmeticError) as exc:
        return _report(str(exc), EXIT_NUMERIC, as_json)
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        return _report(str(exc), EXIT_INVALID, as_json)


if __name__ == "__main__":
    sys.exit(main())
