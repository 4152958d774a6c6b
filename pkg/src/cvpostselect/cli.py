"""Command-line front end: ``keyrate``, ``optimize``, ``map`` and ``simulate``.

Exit codes: 0 on success, 1 when a key-rate integral fails its convergence
check, 2 on argument or output-path errors.

Options can also come from a ``key = value`` file given with ``--config``;
flags on the command line take precedence. The default thread count is read
from the ``CVPOSTSELECT_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from cvpostselect.coherent_info import ChannelParams
from cvpostselect.montecarlo import (
    SessionStats,
    error_consistency_check,
    rate_consistency_check,
    run_session,
    write_event_log,
)
from cvpostselect.postselect import (
    GridSpec,
    InfoMapGrid,
    KeyRateResult,
    info_map,
    key_rate,
    optimize_d,
)

THREADS_ENV = "CVPOSTSELECT_THREADS"
COMMANDS = ("keyrate", "optimize", "map", "simulate")
EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_common(p: argparse.ArgumentParser, *, grid_defaults: GridSpec) -> None:
    chan = p.add_argument_group("channel (give exactly one of --eta, --loss, --loss-db)")
    chan.add_argument("--eta", type=float, help="transmission efficiency in (0, 1]")
    chan.add_argument("--loss", type=float, help="linear loss fraction, eta = 1 - loss")
    chan.add_argument("--loss-db", type=float, help="loss in dB, eta = 10**(-dB/10)")
    p.add_argument("--d", type=float, default=2.1, help="modulation width (default: %(default)s)")
    g = p.add_argument_group("integration grid")
    g.add_argument("--e-max", type=float, default=grid_defaults.e_max, help="E range [0, e_max] (default: %(default)s)")
    g.add_argument("--x-max", type=float, default=grid_defaults.x_max, help="x range [-x_max, x_max] (default: %(default)s)")
    g.add_argument("--n-e", type=int, default=grid_defaults.n_e, help="E nodes (default: %(default)s)")
    g.add_argument("--n-x", type=int, default=grid_defaults.n_x, help="x nodes (default: %(default)s)")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), help="output format (default: json; csv for map)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--config", help="key = value file supplying option defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvpostselect",
        description="Key rates for postselected coherent-state CV-QKD under the beamsplitter attack.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keyrate", help="integrate the key rate at fixed d")
    _add_common(p, grid_defaults=GridSpec())

    p = sub.add_parser("optimize", help="maximize the key rate over d")
    _add_common(p, grid_defaults=GridSpec())
    p.add_argument("--d-min", type=float, default=0.1, help="search interval start (default: %(default)s)")
    p.add_argument("--d-max", type=float, default=10.0, help="search interval end (default: %(default)s)")
    p.add_argument("--tol", type=float, default=1e-3, help="tolerance on d (default: %(default)s)")

    p = sub.add_parser("map", help="tabulate delta_I = I_AB - I_AE over (E, x)")
    _add_common(p, grid_defaults=GridSpec(n_e=81, n_x=161))

    p = sub.add_parser("simulate", help="Monte Carlo protocol simulation")
    _add_common(p, grid_defaults=GridSpec())
    p.add_argument("--n", type=int, default=1_000_000, help="number of events (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="master RNG seed (default: %(default)s)")
    p.add_argument("--event-log", help="write one CSV row per event to this path")
    p.add_argument("--check", action="store_true", help="add quadrature consistency checks")
    return parser


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes map to underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        values = read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in values.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        conv = actions[key].type or str
        try:
            defaults[key] = conv(value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key!r}: {value!r}") from exc
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolve_eta(args: argparse.Namespace) -> float:
    given = [k for k in ("eta", "loss", "loss_db") if getattr(args, k) is not None]
    if len(given) != 1:
        raise UsageError("give exactly one of --eta, --loss, --loss-db")
    if args.eta is not None:
        eta = args.eta
    elif args.loss is not None:
        eta = 1.0 - args.loss
    else:
        eta = 10.0 ** (-args.loss_db / 10.0)
    if not 0.0 < eta <= 1.0:
        raise UsageError(f"transmission {eta!r} outside (0, 1]")
    return eta


def _grid(args) -> GridSpec:
    return GridSpec(args.e_max, args.x_max, args.n_e, args.n_x)


def _flatten(prefix: str, obj) -> list[tuple[str, object]]:
    if isinstance(obj, dict):
        items = []
        for k, v in obj.items():
            items += _flatten(f"{prefix}.{k}" if prefix else str(k), v)
        return items
    return [(prefix, obj)]


def _fmt(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def render(result, fmt: str) -> str:
    """Serialize a result object to text."""
    if isinstance(result, InfoMapGrid):
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(("E", "x", "delta_I"))
            for row in result.rows():
                w.writerow(tuple(_fmt(v) for v in row))
            return buf.getvalue()
        payload = {
            "E": result.E.tolist(),
            "x": result.x.tolist(),
            "delta_I": result.values.tolist(),
            "boundary": [None if b != b else b for b in result.boundary.tolist()],
        }
    elif isinstance(result, (KeyRateResult, SessionStats)):
        payload = result.to_dict()
    else:
        payload = result
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("field", "value"))
        for k, v in _flatten("", payload):
            w.writerow((k, _fmt(v)))
        return buf.getvalue()
    return json.dumps(payload, indent=2) + "\n"


def emit(result, fmt: str = "json", path: Optional[str] = None) -> None:
    """Write ``result`` as JSON or CSV to ``path`` (stdout when None)."""
    text = render(result, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _run(args) -> tuple[object, int]:
    eta = resolve_eta(args)
    grid = _grid(args)
    if args.command == "keyrate":
        res = key_rate(ChannelParams(eta, args.d), grid, threads=args.threads)
        return res, EXIT_OK if res.converged else EXIT_NUMERIC
    if args.command == "optimize":
        d_opt, res = optimize_d(eta, grid, (args.d_min, args.d_max), tol=args.tol, threads=args.threads)
        ref = key_rate(ChannelParams(eta, args.d), grid, threads=args.threads)
        payload = {"d_opt": d_opt, "optimum": res.to_dict(), "reference": ref.to_dict()}
        return payload, EXIT_OK if res.converged else EXIT_NUMERIC
    if args.command == "map":
        ChannelParams(eta, args.d)
        return info_map(eta, grid), EXIT_OK
    params = ChannelParams(eta, args.d)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    stats = run_session(params, args.n, args.seed, threads=args.threads)
    if args.event_log:
        try:
            with open(args.event_log, "w", newline="") as fh:
                write_event_log(fh, params, args.n, args.seed)
        except OSError as exc:
            raise OSError(f"cannot write {args.event_log}: {exc.strerror or exc}") from exc
    if not args.check:
        return stats, EXIT_OK
    payload = stats.to_dict()
    payload["checks"] = {
        "key_rate": rate_consistency_check(stats, params, grid).to_dict(),
        "error_selected": error_consistency_check(stats, params, grid).to_dict(),
    }
    return payload, EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        result, code = _run(args)
        fmt = args.format or ("csv" if args.command == "map" else "json")
        emit(result, fmt, args.output)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, OSError) as exc:
        print(f"cvpostselect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if code == EXIT_NUMERIC:
        print("cvpostselect: key rate did not converge under node doubling", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
