"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``compare`` (several configs over a
shared seed list), ``validate-schedule`` (feasibility checks only), and
``parse-check`` (dataset lint).  Any flag may instead come from a flat
``key = value`` config file; command-line values override the file.

Exit codes: 0 success, 2 config error, 3 data error, 4 schedule infeasibility.
"""

import argparse
import sys

from .dataio import parse_libsvm, read_idx
from .errors import ConfigError, DataError, ParameterError, ScheduleInfeasibleError
from .harness import (
    compare,
    config_from_mapping,
    parse_config_file,
    run_experiment,
)
from .schedules import (
    ScheduleKind,
    ScheduleSpec,
    validate_descent_condition,
    validate_discount_condition,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SCHEDULE = 4


def _add_override_args(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any RunConfig field (repeatable)",
    )


def _collect_config(args, extra=None):
    mapping = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        mapping[key.strip()] = value.strip()
    if extra:
        mapping.update(extra)
    return config_from_mapping(mapping)


def _cmd_run(args):
    cfg = _collect_config(args)
    result = run_experiment(cfg)
    if not cfg.out:
        sys.stdout.write(result.csv_text)
    parts = [f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in result.summary.items()]
    print("summary: " + " ".join(parts))
    return EXIT_OK


def _cmd_compare(args):
    seeds = [int(s) for s in args.seeds.split(",") if s]
    if not seeds:
        raise ConfigError("compare needs at least one seed")
    configs = []
    for path in args.configs:
        mapping = parse_config_file(path)
        for item in args.set:
            key, _, value = item.partition("=")
            mapping[key.strip()] = value.strip()
        configs.append(config_from_mapping(mapping))
    _, summaries = compare(configs, seeds, out=args.out)
    header = ("method", "train", "test", "grad", "density")
    print("\t".join(header))
    for s in summaries:
        print("\t".join(
            f"{s[c]:.6g}" if isinstance(s.get(c), float) else str(s.get(c, "-"))
            for c in header
        ))
    return EXIT_OK


def _cmd_validate_schedule(args):
    kind = ScheduleKind(args.schedule)
    horizon = None if kind is ScheduleKind.VARYING else args.K
    try:
        spec = ScheduleSpec(kind=kind, eta=args.eta, L=args.L, m=args.m, K=horizon)
    except ParameterError as exc:
        print(f"infeasible at construction: {exc}")
        return EXIT_SCHEDULE
    report = validate_descent_condition(spec, args.K)
    print(f"descent/selection conditions: {'ok' if report.ok else 'VIOLATED'} ({report.detail})")
    ok = report.ok
    if kind is ScheduleKind.CONSTANT_II:
        disc = validate_discount_condition(spec)
        print(
            "discounted-sum conditions: "
            f"{'ok' if disc.ok else 'VIOLATED'} "
            f"(A={disc.A:.6g} <= {disc.A_bound:.6g}, B={disc.B:.6g} <= {disc.B_bound:.6g})"
        )
        ok = ok and disc.ok
    return EXIT_OK if ok else EXIT_SCHEDULE


def _cmd_parse_check(args):
    if args.format == "libsvm":
        with open(args.path, "r", encoding="utf-8") as fh:
            ds = parse_libsvm(fh)
        print(f"ok: {ds.n_rows} rows, {ds.features.n_cols} columns, "
              f"{len(ds.features.data)} nonzeros")
    else:
        with open(args.path, "rb") as fh:
            arr = read_idx(fh)
        kind = "images" if arr.ndim == 2 else "labels"
        print(f"ok: {len(arr)} {kind}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pstorm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    _add_override_args(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several configs over shared seeds")
    p_cmp.add_argument("configs", nargs="+", help="one config file per method")
    p_cmp.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_cmp.add_argument("--out", help="comparison CSV path")
    p_cmp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_val = sub.add_parser("validate-schedule", help="check schedule feasibility conditions")
    p_val.add_argument("--schedule", required=True,
                       choices=[k.value for k in ScheduleKind])
    p_val.add_argument("--eta", type=float, required=True)
    p_val.add_argument("--L", type=float, default=1.0)
    p_val.add_argument("--m", type=int, default=1)
    p_val.add_argument("--K", type=int, required=True)
    p_val.set_defaults(fn=_cmd_validate_schedule)

    p_chk = sub.add_parser("parse-check", help="lint a dataset file")
    p_chk.add_argument("--format", choices=("libsvm", "idx"), required=True)
    p_chk.add_argument("path")
    p_chk.set_defaults(fn=_cmd_parse_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScheduleInfeasibleError as exc:
        print(f"schedule infeasible: {exc}", file=sys.stderr)
        return EXIT_SCHEDULE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
