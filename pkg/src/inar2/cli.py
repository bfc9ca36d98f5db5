"""Command-line interface.

Subcommands: simulate, estimate, classify, limit-sample, mc-compare, moments.
Exit status is 0 on success, 1 when the arguments fail validation (one line
on stderr) and 2 when a run fails after validation.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import sys

import numba

from . import rng
from .cls_estimator import estimate_cls
from .inar_core import (AutoregressiveParams, Regularity, Trajectory, classify,
                        parse_innovation, simulate)
from .limit_laws import DEFAULT_MESH, sample_limit_batch
from .mc_harness import CampaignConfig, run_campaign
from .moment_oracle import exact_joint_moments

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

_CASES = {
    "auto": None,
    "positivelyregular": Regularity.POSITIVELY_REGULAR,
    "decomposable": Regularity.DECOMPOSABLE,
    "indecomposable": Regularity.INDECOMPOSABLE,
    "indecomposablenotpositivelyregular": Regularity.INDECOMPOSABLE,
}


class UsageError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_model(p, required=True):
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--innovation", default=None, help="kind:params, e.g. poisson:2")
    p.set_defaults(_needs_model=required)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file whose keys override flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inar2", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="simulate one trajectory")
    _add_model(p)
    p.add_argument("--n", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("estimate", help="CLS estimate from a trajectory CSV")
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--innovation", default=None, help="alternative source of mu")
    _add_common(p)

    p = sub.add_parser("classify", help="stability and regularity of (alpha, beta)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    _add_common(p)

    p = sub.add_parser("limit-sample", help="draws from the limit law of the scaled errors")
    _add_model(p)
    p.add_argument("--case", default="auto")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--mesh", type=int, default=DEFAULT_MESH)
    _add_common(p)

    p = sub.add_parser("mc-compare", help="Monte Carlo campaign against the limit law")
    _add_model(p)
    p.add_argument("--case", default="auto")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--limit-reps", type=int, default=10_000)
    p.add_argument("--mesh", type=int, default=DEFAULT_MESH)
    p.add_argument("--samples-out", default=None, help="CSV of the scaled statistics")
    _add_common(p)

    p = sub.add_parser("moments", help="exact joint moments of (X_n, X_{n-1})")
    _add_model(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--order", type=int, default=2)
    _add_common(p)
    return parser


def _apply_config(args, parser_dests):
    if not args.config:
        return
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest == "in":
            dest = "input"
        if dest not in parser_dests or dest == "config":
            raise UsageError(f"unknown config key {key!r}")
        setattr(args, dest, value)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m for m in missing))


def _seed(args):
    seed = args.seed
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed <= rng.MASK64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    return int(seed)


def _positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise UsageError(f"--{name} must be an integer >= {minimum}")
    return int(value)


def _model(args):
    _require(args, "alpha", "beta", "innovation")
    return AutoregressiveParams(float(args.alpha), float(args.beta)), parse_innovation(args.innovation)


def _case(args, params):
    key = str(args.case).replace("-", "").replace("_", "").lower()
    if key not in _CASES:
        raise UsageError(f"unknown case {args.case!r}")
    derived = classify(params).regularity
    wanted = _CASES[key]
    if wanted is not None and wanted is not derived:
        raise UsageError(f"case {args.case} does not match (alpha, beta) = "
                         f"({params.alpha}, {params.beta}), which is {derived.value}")
    return derived


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None
    with fh:
        yield fh


def _open_output(path):
    """Validate that ``path`` can be written before any work is done."""
    if path is None or path == "-":
        return
    try:
        open(path, "a", encoding="utf-8").close()
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _plan(args):
    """Validate arguments and return a zero-argument callable producing (text, extra files)."""
    cmd = args.command
    fmt = args.format

    if cmd == "simulate":
        params, innov = _model(args)
        _require(args, "n")
        n = _positive_int(args.n, "n")
        seed = _seed(args)

        def run():
            traj = simulate(params, innov, n, seed)
            if fmt == "json":
                return json.dumps({"alpha": params.alpha, "beta": params.beta,
                                   "innovation": innov.spec(), "seed": seed,
                                   "k": list(range(-1, n + 1)),
                                   "x": [int(v) for v in traj.values]}) + "\n"
            return traj.to_csv()
        return run

    if cmd == "estimate":
        _require(args, "input")
        if args.mu is None and args.innovation is None:
            raise UsageError("missing required option: --mu (or --innovation)")
        innov = parse_innovation(args.innovation) if args.innovation else None
        if args.mu is not None:
            mu = float(args.mu)
            if not mu > 0 or not math.isfinite(mu):
                raise UsageError("--mu must be positive")
        else:
            mu = innov.mean
        try:
            with open(args.input, encoding="utf-8") as fh:
                traj = Trajectory.from_csv(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
        if traj.n < 3:
            raise UsageError("estimation needs a trajectory with n >= 3")

        def run():
            result = estimate_cls(traj, _KnownMean(mu))
            d = result.to_dict()
            if fmt == "csv":
                buf = io.StringIO()
                w = csv.DictWriter(buf, fieldnames=list(d), lineterminator="\n")
                w.writeheader()
                w.writerow(d)
                return buf.getvalue()
            return json.dumps(d) + "\n"
        return run

    if cmd == "classify":
        _require(args, "alpha", "beta")
        params = AutoregressiveParams(float(args.alpha), float(args.beta))

        def run():
            c = classify(params)
            d = {"alpha": params.alpha, "beta": params.beta, "rho": params.rho(),
                 "stability": c.stability.value, "regularity": c.regularity.value}
            if fmt == "csv":
                return ",".join(d) + "\n" + ",".join(str(v) for v in d.values()) + "\n"
            return json.dumps(d) + "\n"
        return run

    if cmd == "limit-sample":
        params, innov = _model(args)
        if classify(params).stability.value != "Unstable":
            raise UsageError("limit laws are defined for alpha + beta = 1 only")
        regularity = _case(args, params)
        reps = _positive_int(args.reps, "reps")
        mesh = _positive_int(args.mesh, "mesh", 2)
        seed = _seed(args)

        def run():
            batch = sample_limit_batch(regularity, params.alpha, params.beta, innov.mean,
                                       innov.sigma, reps, seed, mesh)
            if fmt == "json":
                return json.dumps({"case": batch.case, "mesh": batch.mesh, "seed": seed,
                                   "degenerate": batch.degenerate,
                                   "value1": batch.rho.tolist(),
                                   "value2": batch.beta.tolist()}) + "\n"
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["index", "case", "value1", "value2", "mesh", "seed"])
            for i, case, v1, v2, m, s in batch.rows():
                w.writerow([i, case, repr(float(v1)), repr(float(v2)), m, s])
            return buf.getvalue()
        return run

    if cmd == "mc-compare":
        params, innov = _model(args)
        _require(args, "n")
        if classify(params).stability.value != "Unstable":
            raise UsageError("mc-compare needs alpha + beta = 1")
        _case(args, params)
        config = CampaignConfig(params, innov, _positive_int(args.n, "n", 10),
                                _positive_int(args.reps, "reps", 100), _seed(args),
                                mesh=_positive_int(args.mesh, "mesh", 2),
                                limit_replications=_positive_int(args.limit_reps, "limit-reps"),
                                threads=args.threads)
        _open_output(args.samples_out)

        def run():
            result = run_campaign(config)
            if args.samples_out:
                with _output(args.samples_out) as fh:
                    fh.write(result.samples_csv())
            if fmt == "csv":
                return result.samples_csv()
            return result.report.to_json() + "\n"
        return run

    if cmd == "moments":
        params, innov = _model(args)
        _require(args, "n")
        n = _positive_int(args.n, "n")
        order = args.order
        if order not in (1, 2):
            raise UsageError("--order must be 1 or 2")
        if classify(params).stability.value != "Unstable":
            raise UsageError("exact moments need alpha + beta = 1")

        def run():
            table = exact_joint_moments(params, innov, n, order)
            if fmt == "json":
                def col(a):
                    return [None if math.isnan(v) else float(v) for v in a]
                return json.dumps({"order": order, "n": table.n.tolist(), "e_x": col(table.e_x),
                                   "e_xx": col(table.e_xx), "e_xy": col(table.e_xy),
                                   "e_yy": col(table.e_yy)}) + "\n"
            return table.to_csv()
        return run

    raise UsageError(f"unknown command {cmd!r}")  # pragma: no cover


class _KnownMean:
    """Minimal innovation stand-in for estimation when only the mean is known."""

    def __init__(self, mean):
        self.mean = mean


def _dests(parser, command):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {a.dest for a in sub.choices[command]._actions}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args, _dests(parser, args.command))
        if args.threads is not None:
            threads = _positive_int(args.threads, "threads")
            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        run = _plan(args)
        _open_output(args.out)
    except (UsageError, ValueError, TypeError) as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_INVALID
    try:
        text = run()
        with _output(args.out) as fh:
            fh.write(text)
    except Exception as exc:  # noqa: BLE001 - any failure after validation is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
