"""Wiring a single run together, seed batches, sweeps and CSV export."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path

from .chaos import ByzantineConfig, ByzantineController, ScheduleDriver, build_chaos_schedule
from .config import ExperimentConfig, attr_of, key_of
from .kernel import Simulator
from .metrics import MetricsReport
from .network import Network, Perturbation
from .protocols import ProtocolParams, init_network
from .trace import TraceRecorder
from .workload import TxPool

log = logging.getLogger(__name__)


@dataclass
class Run:
    """Live objects of one run, kept around for inspection after it ends."""

    config: ExperimentConfig
    sim: Simulator
    network: Network
    engine: object
    trace: TraceRecorder | None
    byzantine: ByzantineController | None
    chaos: ScheduleDriver | None
    report: MetricsReport | None = None


def schedule_of(cfg: ExperimentConfig):
    return build_chaos_schedule(cfg.chaos_schedule, cfg.chaos_phase_duration, cfg.chaos_recovery, cfg.chaos_start)


def build_run(cfg: ExperimentConfig, record_trace: bool = True) -> Run:
    sim = Simulator(cfg.seed, cfg.max_time)
    trace = TraceRecorder() if record_trace else None
    net = Network(sim, cfg.lambda_, trace)
    params = ProtocolParams(
        rate=cfg.lambda_,
        tx_per_block=cfg.tx_per_block,
        phase_timeout=cfg.phase_timeout,
        clique_period=cfg.clique_period,
        proposal_cutoff=max(0.0, cfg.max_time - cfg.drain),
    )
    engine = init_network(cfg.protocol, cfg.n_validators, params, sim=sim, network=net, trace=trace)
    engine.collector.sample_period = cfg.sample_period
    engine.pool = TxPool(cfg.input_tx_rate, cfg.tx_per_block, sim.stream("workload"), engine.collector, trace)
    validators = engine.ids
    if cfg.added_delay > 0:
        net.apply_perturbation(Perturbation.delay(cfg.added_delay, validators))
    byz = None
    if cfg.byzantine_rate > 0:
        bc = ByzantineConfig(cfg.byzantine_rate, cfg.onset_delay, cfg.recovery_delay)
        byz = ByzantineController(sim, engine.nodes, bc, sim.stream("chaos/byzantine"), trace)
    driver = None
    schedule = schedule_of(cfg)
    if schedule.phases:
        driver = ScheduleDriver(sim, net, schedule, validators, engine.current_leader, trace)
    if trace is not None:
        trace.meta.update(
            protocol=cfg.protocol,
            n_validators=str(cfg.n_validators),
            seed=str(cfg.seed),
            runtime=repr(float(cfg.max_time)),
            commit_threshold=str(engine.collector.commit_threshold),
            tx_per_block=str(cfg.tx_per_block),
        )
    return Run(cfg, sim, net, engine, trace, byz, driver)


def _sampler(sim, collector, period):
    def tick(k):
        collector.sample(sim.now)
        nxt = (k + 1) * period
        if nxt <= sim.max_time:
            sim.schedule(nxt, tick, k + 1)
    sim.schedule(period, tick, 1)


def execute(run: Run) -> MetricsReport:
    cfg = run.config
    _sampler(run.sim, run.engine.collector, cfg.sample_period)
    if run.byzantine is not None:
        run.byzantine.start()
    if run.chaos is not None:
        run.chaos.start()
    run.engine.start()
    run.sim.run_until(cfg.max_time)
    report = run.engine.collector.finalize(
        runtime=cfg.max_time,
        chain_lengths=run.engine.chain_lengths(),
        config=cfg.items(),
        seed=cfg.seed,
    )
    run.report = report
    return report


def trace_name(cfg: ExperimentConfig) -> str:
    return f"trace-{cfg.protocol}-seed{cfg.seed}.tsv"


def run_experiment(cfg: ExperimentConfig, out=None, record_trace: bool | None = None):
    """Run one configuration to ``max_time``.

    Returns ``(report, trace_path)``.  The trace is written into directory
    ``out`` when given (``trace_path`` is None otherwise).  If the run
    raises, whatever trace was recorded so far is still written.
    """
    record = out is not None if record_trace is None else record_trace
    run = build_run(cfg, record)
    path = None
    if out is not None and run.trace is not None:
        path = Path(out) / trace_name(cfg)
    try:
        report = execute(run)
    except Exception:
        if path is not None:
            run.trace.meta["status"] = "aborted"
            run.trace.write(path)
        raise
    if path is not None:
        run.trace.write(path)
        write_report(report, Path(out) / report_name(cfg))
    return report, path


def report_name(cfg: ExperimentConfig) -> str:
    return f"report-{cfg.protocol}-seed{cfg.seed}.json"


def write_report(report: MetricsReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(report.as_dict(), committed_tx=report.committed_tx, blocks_created=report.blocks_created,
                blocks_committed=report.blocks_committed, runtime=report.runtime, seed=report.seed)
    path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


# --- batches and sweeps --------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    axis: str
    values: tuple

    def __post_init__(self):
        attr = attr_of(self.axis)
        if attr not in {f.name for f in fields(ExperimentConfig)}:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        for v in self.values:
            self.base.with_(**{attr: v})  # type check through validation


@dataclass(frozen=True)
class Row:
    config: ExperimentConfig
    report: MetricsReport | None
    error: str | None = None
    condition: str = ""


def seeds_of(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed + i for i in range(cfg.seed_count)]


def run_batch(cfg: ExperimentConfig, condition: str = "") -> list[Row]:
    rows = []
    for s in seeds_of(cfg):
        rows.append(_safe_run(cfg.with_(seed=s, seed_count=1), condition))
    return rows


def _safe_run(cfg, condition):
    try:
        report, _ = run_experiment(cfg)
        return Row(cfg, report, None, condition)
    except Exception as exc:  # a failed row must not stop the sweep
        log.error("run failed (%s, seed %s): %s", cfg.protocol, cfg.seed, exc)
        return Row(cfg, None, f"{type(exc).__name__}: {exc}", condition)


def sweep(spec: SweepSpec) -> list[Row]:
    """Every (value, seed) combination, ordered by value then seed."""
    attr = attr_of(spec.axis)
    rows = []
    for v in spec.values:
        cfg = spec.base.with_(**{attr: v})
        rows.extend(run_batch(cfg, condition=f"{spec.axis}={v}"))
    return rows


CONDITIONS = {
    "baseline": {},
    "delay": {"added_delay": 1.0},
    "byzantine": {"byzantine_rate": 1 / 3},
    "both": {"added_delay": 1.0, "byzantine_rate": 1 / 3},
}


def condition_grid(base: ExperimentConfig, protocols=None, conditions=None) -> list[Row]:
    """protocol x condition x seed, in that nesting order."""
    from .protocols import PROTOCOLS

    rows = []
    for p in protocols or PROTOCOLS:
        for name in conditions or CONDITIONS:
            cfg = base.with_(protocol=p, **CONDITIONS[name])
            rows.extend(run_batch(cfg, condition=name))
    return rows


# --- CSV -------------------------------------------------------------------------

METRIC_COLUMNS = ("throughput", "avg_latency", "success_rate", "chain_sigma")
EXTRA_COLUMNS = ("median_latency", "committed_tx", "blocks_created", "blocks_committed", "status")


def csv_header(n_nodes: int) -> list[str]:
    cfg_cols = [key_of(f.name) for f in fields(ExperimentConfig) if f.name not in ("seed", "seed_count")]
    return (["condition"] + cfg_cols + ["seed"] + list(METRIC_COLUMNS)
            + [f"chain_length_{i}" for i in range(n_nodes)] + list(EXTRA_COLUMNS))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(rows: list[Row]) -> str:
    if not rows:
        raise ValueError("cannot export an empty table")
    width = max(r.config.n_validators for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(width))
    for r in rows:
        items = dict(r.config.items())
        cfg_vals = [items[key_of(f.name)] for f in fields(ExperimentConfig) if f.name not in ("seed", "seed_count")]
        rep = r.report
        if rep is None:
            metrics = [""] * len(METRIC_COLUMNS)
            lengths = [""] * width
            extra = ["", "", "", "", "failed"]
        else:
            metrics = [_fmt(rep.throughput), _fmt(rep.avg_latency), _fmt(rep.success_rate), _fmt(rep.chain_sigma)]
            lengths = [str(x) for x in rep.per_node_chain_lengths] + [""] * (width - len(rep.per_node_chain_lengths))
            extra = [_fmt(rep.median_latency), str(rep.committed_tx), str(rep.blocks_created),
                     str(rep.blocks_committed), "ok"]
        w.writerow([r.condition] + cfg_vals + [str(r.config.seed)] + metrics + lengths + extra)
    return buf.getvalue()


def export_csv(rows: list[Row], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(rows))
    return path
