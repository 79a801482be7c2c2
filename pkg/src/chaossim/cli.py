"""Command line front end.

    chaossim run          --config exp.cfg --seeds 5 --out results/
    chaossim sweep        --config exp.cfg --axis input_tx_rate --values 1000,5000,10000,15000
    chaossim sweep        --axis condition --values baseline,delay,byzantine,both
    chaossim chaos        --preset paper-sequence --out results/
    chaossim replay-check results/trace-pbft-seed0.tsv
    chaossim plot         results/sweep.csv --axis input_tx_rate

Exit status: 0 success, 1 configuration error, 2 run error, 3 oracle mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import runner
from .config import ConfigError, ExperimentConfig, _parse_scalar, attr_of, parse_config, render_config
from .oracle import replay_check
from .plots import read_table, render_plots

OK, CONFIG_ERROR, RUN_ERROR, ORACLE_MISMATCH = 0, 1, 2, 3

log = logging.getLogger("chaossim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(CONFIG_ERROR)


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
        cfg = parse_config(text)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.seeds is not None:
        changes["seed_count"] = args.seeds
    if getattr(args, "preset", None):
        changes["chaos_schedule"] = args.preset
    return cfg.with_(**changes) if changes else cfg


def _write_csv(rows, out: Path, name: str) -> Path:
    path = runner.export_csv(rows, out / name)
    print(f"wrote {path}")
    return path


def _summary(rows) -> None:
    for r in rows:
        rep = r.report
        if rep is None:
            print(f"{r.config.protocol:<10} seed {r.config.seed:<4} {r.condition:<24} FAILED {r.error}")
            continue
        lat = "-" if rep.avg_latency is None else f"{rep.avg_latency:.3f}"
        sr = "-" if rep.success_rate is None else f"{rep.success_rate:.3f}"
        print(f"{r.config.protocol:<10} seed {r.config.seed:<4} {r.condition:<24} "
              f"TP {rep.throughput:9.3f}  L {lat:>8}  SR {sr:>6}  sigma {rep.chain_sigma:.3f}")


def _run_seeds(cfg: ExperimentConfig, out: Path) -> int:
    """Run each seed with its trace and report written to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    status = OK
    for s in runner.seeds_of(cfg):
        one = cfg.with_(seed=s, seed_count=1)
        try:
            report, path = runner.run_experiment(one, out=out)
        except Exception as exc:
            log.error("run failed (%s, seed %s): %s", one.protocol, s, exc)
            rows.append(runner.Row(one, None, f"{type(exc).__name__}: {exc}"))
            status = RUN_ERROR
            continue
        print(f"wrote {path}")
        rows.append(runner.Row(one, report))
    (out / "config.cfg").write_text(render_config(cfg), encoding="utf-8")
    _summary(rows)
    _write_csv(rows, out, f"results-{cfg.protocol}.csv")
    return status


def cmd_run(args) -> int:
    return _run_seeds(_load(args), Path(args.out))


def cmd_chaos(args) -> int:
    cfg = _load(args)
    if cfg.chaos_schedule == "none":
        cfg = cfg.with_(chaos_schedule="paper-sequence")
    return _run_seeds(cfg, Path(args.out))


def _values(axis: str, raw: str) -> tuple:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("--values: empty list")
    if axis == "condition":
        unknown = [p for p in parts if p not in runner.CONDITIONS]
        if unknown:
            raise ConfigError(f"--values: unknown condition(s) {', '.join(unknown)}")
        return tuple(parts)
    attr = attr_of(axis)
    if attr not in ExperimentConfig.__dataclass_fields__:
        raise ConfigError(f"--axis: unknown field {axis!r}")
    return tuple(_parse_scalar(attr, p, 0) for p in parts)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _values(args.axis, args.values)
    if args.axis == "condition":
        protocols = args.protocols.split(",") if args.protocols else None
        for p in protocols or ():
            cfg.with_(protocol=p)  # validates the name
        rows = runner.condition_grid(cfg, protocols=protocols, conditions=values)
    else:
        try:
            spec = runner.SweepSpec(cfg, args.axis, values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rows = runner.sweep(spec)
    out = Path(args.out)
    _summary(rows)
    _write_csv(rows, out, f"sweep-{args.axis}.csv")
    if args.plot:
        axis = "protocol" if args.axis == "condition" else args.axis
        for p in render_plots(rows, axis, out):
            print(f"wrote {p}")
    return RUN_ERROR if any(r.report is None for r in rows) else OK


def cmd_replay(args) -> int:
    status = OK
    for t in args.traces:
        try:
            res = replay_check(t)
        except (OSError, KeyError, ValueError) as exc:
            print(f"{t}: cannot check: {exc}", file=sys.stderr)
            status = max(status, RUN_ERROR)
            continue
        if res.ok:
            m = res.recomputed
            print(f"{t}: ok (TP {m.throughput!r}, SR {m.success_rate!r}, sigma {m.chain_sigma!r})")
        else:
            status = ORACLE_MISMATCH
            for line in res.mismatches + res.violations:
                print(f"{t}: {line}")
    return status


def cmd_plot(args) -> int:
    try:
        table = read_table(Path(args.csv).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc.strerror}") from None
    try:
        paths = render_plots(table, args.axis, Path(args.out))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for p in paths:
        print(f"wrote {p}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chaossim", description="Consensus protocol simulator with chaos fault injection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, out_default="results"):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="N", help="first seed")
        sp.add_argument("--seeds", type=int, metavar="N", help="number of consecutive seeds")
        sp.add_argument("--out", metavar="DIR", default=out_default)

    sp = sub.add_parser("run", help="run one configuration over a batch of seeds")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("chaos", help="run with a chaos schedule preset")
    common(sp)
    sp.add_argument("--preset", default="paper-sequence")
    sp.set_defaults(func=cmd_chaos)

    sp = sub.add_parser("sweep", help="vary one field (or the fault condition) and tabulate")
    common(sp)
    sp.add_argument("--axis", required=True, metavar="NAME")
    sp.add_argument("--values", required=True, metavar="LIST")
    sp.add_argument("--protocols", metavar="LIST", help="with --axis condition: protocols to include")
    sp.add_argument("--plot", action="store_true", help="also write one SVG per metric")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("replay-check", help="recompute metrics from traces and compare with their reports")
    sp.add_argument("traces", nargs="+", metavar="TRACE")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("plot", help="draw metric-vs-axis SVGs from a results CSV")
    sp.add_argument("csv", metavar="CSV")
    sp.add_argument("--axis", required=True, metavar="NAME")
    sp.add_argument("--out", metavar="DIR", default="plots")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except Exception as exc:
        print(f"run error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUN_ERROR


if __name__ == "__main__":
    sys.exit(main())
