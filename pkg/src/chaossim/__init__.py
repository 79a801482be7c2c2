"""Seedable discrete-event simulation of permissioned consensus under injected faults.

Typical use::

    from chaossim import ExperimentConfig, run_experiment

    report, _ = run_experiment(ExperimentConfig(protocol="raft", max_time=5000, byzantine_rate=1/3))
    print(report.throughput, report.success_rate, report.chain_sigma)
"""

from .chaos import ChaosSchedule, FaultSpec, Phase, build_chaos_schedule
from .config import ConfigError, ExperimentConfig, parse_config, render_config
from .kernel import Simulator
from .metrics import MetricsCollector, MetricsReport
from .network import Network, Perturbation
from .oracle import replay_check
from .plots import render_plots
from .protocols import PROTOCOLS, init_network
from .runner import CONDITIONS, SweepSpec, condition_grid, export_csv, run_batch, run_experiment, sweep
from .workload import TxPool, generate_workload

__version__ = "0.1.0"

__all__ = [
    "CONDITIONS", "ChaosSchedule", "ConfigError", "ExperimentConfig", "FaultSpec", "MetricsCollector",
    "MetricsReport", "Network", "PROTOCOLS", "Perturbation", "Phase", "Simulator", "SweepSpec", "TxPool",
    "build_chaos_schedule", "condition_grid", "export_csv", "generate_workload", "init_network",
    "parse_config", "render_config", "render_plots", "replay_check", "run_batch", "run_experiment", "sweep",
]
