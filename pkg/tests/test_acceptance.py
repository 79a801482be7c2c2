"""Acceptance criteria 1-11 at their stated tolerances.

The expensive part is one grid: 4 protocols x 4 conditions x 30 seeds,
6 validators, max_time 5000, built once per module.  Every criterion adds
one PASS/FAIL line to ``RESULTS``; the summary is printed at the end of the
pytest session (and by running this file directly).
"""

import itertools
import math
import random
import statistics
import sys
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

from chaossim.chaos import STANDARD_SEQUENCE, build_chaos_schedule
from chaossim.cli import OK, main
from chaossim.config import ExperimentConfig
from chaossim.kernel import RandomStream, Simulator, sample_exponential
from chaossim.network import DROPPED, Network, Perturbation
from chaossim.oracle import replay_check
from chaossim.protocols import PROTOCOLS, TallyStatus, Vote, VoteTally, init_network, tally
from chaossim.runner import CONDITIONS, build_run, execute, run_experiment

SEEDS = 30
MAX_TIME = 5000.0
N = 6

RESULTS: list[str] = []


class SoftOrderingWarning(UserWarning):
    pass


@contextmanager
def criterion(number, title):
    try:
        yield
    except AssertionError as exc:
        RESULTS.append(f"criterion {number:>2} FAIL  {title}: {exc}")
        raise
    RESULTS.append(f"criterion {number:>2} PASS  {title}")


def _consistent(nodes) -> bool:
    maps = [node.chain_map() for node in nodes]
    return all(a[k] == b[k] for a, b in itertools.combinations(maps, 2) for k in a.keys() & b.keys())


@pytest.fixture(scope="module")
def grid():
    """``{(protocol, condition): [(report, logs_consistent), ...]}``."""
    out = {}
    base = ExperimentConfig(max_time=MAX_TIME, n_validators=N, input_tx_rate=5000.0)
    for protocol in PROTOCOLS:
        for name, changes in CONDITIONS.items():
            rows = []
            for seed in range(SEEDS):
                run = build_run(base.with_(protocol=protocol, seed=seed, **changes), record_trace=False)
                rep = execute(run)
                rows.append((rep, _consistent(run.engine.nodes)))
            out[protocol, name] = rows
    return out


def median(grid, protocol, condition, metric):
    vals = [getattr(rep, metric) for rep, _ in grid[protocol, condition]]
    vals = [v for v in vals if v is not None]
    return statistics.median(vals) if vals else math.nan


def _order(values: dict, reverse: bool) -> list:
    return sorted(values, key=values.get, reverse=reverse)


# --- 1 ---------------------------------------------------------------------------------

def test_01_determinism(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("protocol = tendermint\nmax_time = 2000\nbyzantine_rate = 0.3333\nadded_delay = 1.0\n"
                   "chaos_schedule = paper-sequence\nchaos_phase_duration = 100\n")
    with criterion(1, "identical config+seed gives byte-identical trace and CSV"):
        for d in ("a", "b"):
            assert main(["run", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / d)]) == OK
        for name in ("trace-tendermint-seed7.tsv", "results-tendermint.csv", "report-tendermint-seed7.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


# --- 2 ---------------------------------------------------------------------------------

def _random_configs(count=50, seed=2024):
    rng = random.Random(seed)
    for _ in range(count):
        yield ExperimentConfig(
            protocol=rng.choice(PROTOCOLS),
            n_validators=rng.randint(4, 7),
            tx_per_block=rng.choice([10, 35, 70]),
            input_tx_rate=rng.choice([50.0, 1000.0, 5000.0]),
            max_time=float(rng.randint(150, 600)),
            byzantine_rate=rng.choice([0.0, 1 / 3, 0.5]),
            added_delay=rng.choice([0.0, 1.0]),
            chaos_schedule=rng.choice(["none", "paper-sequence"]),
            chaos_phase_duration=float(rng.randint(5, 40)),
            seed=rng.randint(0, 10**6),
        )


def test_02_metric_oracle(tmp_path):
    with criterion(2, "replay-check reproduces TP, L, SR and sigma exactly on 50 random configs"):
        bad = []
        for i, cfg in enumerate(_random_configs()):
            _, path = run_experiment(cfg, out=tmp_path / str(i))
            res = replay_check(path)
            if not res.ok:
                bad.append((cfg, res.mismatches, res.violations))
        assert not bad, f"{len(bad)} mismatching runs, first {bad[0]}"
        assert main(["replay-check", str(path)]) == OK


# --- 3 ---------------------------------------------------------------------------------

def test_03_fault_free_safety(grid):
    with criterion(3, "fault-free runs have SR 1 and sigma 0 on every seed"):
        for p in PROTOCOLS:
            for rep, _ in grid[p, "baseline"]:
                assert rep.success_rate == 1.0 and rep.chain_sigma == 0.0, (p, rep.seed)


# --- 4 ---------------------------------------------------------------------------------

def test_04_quorum_arithmetic():
    with criterion(4, "tally reaches quorum iff votes >= floor(2N/3)+1, all patterns N=4..7"):
        checked = 0
        for n in (4, 5, 6, 7):
            q = 2 * n // 3 + 1
            for pattern in itertools.product((1, 2, None), repeat=n):
                t = VoteTally(1, 1, n)
                for voter, bid in enumerate(pattern):
                    status, winner = tally(t, Vote(1, 1, bid, voter))
                    prefix = pattern[: voter + 1]
                    best = max((1, 2), key=prefix.count)
                    reached = prefix.count(best) >= q
                    assert (status is TallyStatus.REACHED) == reached, (n, pattern, voter)
                    if reached:
                        assert winner == best
                    left = n - len(prefix)
                    can_reach = max(prefix.count(1), prefix.count(2)) + left >= q
                    assert (status is TallyStatus.FAILED) == (not can_reach), (n, pattern, voter)
                    checked += 1
        assert checked == sum(n * 3**n for n in (4, 5, 6, 7))


# --- 5 ---------------------------------------------------------------------------------

def test_05_byzantine_hurts_more_than_delay(grid):
    with criterion(5, "median TP baseline > delay > byzantine for PBFT, Tendermint, Raft"):
        for p in ("pbft", "tendermint", "raft"):
            b, d, z = (median(grid, p, c, "throughput") for c in ("baseline", "delay", "byzantine"))
            assert b > d > z, f"{p}: baseline {b:.2f}, delay {d:.2f}, byzantine {z:.2f}"


# --- 6 ---------------------------------------------------------------------------------

def test_06_clique_resilience(grid):
    drops = {p: 1 - median(grid, p, "both", "throughput") / median(grid, p, "baseline", "throughput")
             for p in PROTOCOLS}
    with criterion(6, "Clique's relative TP drop under byzantine+delay is the smallest"):
        for p in ("pbft", "tendermint", "raft"):
            assert drops["clique"] < drops[p], {k: round(v, 3) for k, v in drops.items()}


# --- 7 ---------------------------------------------------------------------------------

def test_07_raft_consistent_but_degraded(grid):
    with criterion(7, "Raft at byzantine rate 1/3: logs never conflict, median SR < 1"):
        rows = grid["raft", "byzantine"]
        assert all(ok for _, ok in rows)
        assert median(grid, "raft", "byzantine", "success_rate") < 1.0


# --- 8 ---------------------------------------------------------------------------------

def test_08_sigma_spread(grid):
    s = {p: median(grid, p, "both", "chain_sigma") for p in ("tendermint", "pbft", "clique")}
    with criterion(8, "median sigma under byzantine+delay: Tendermint <= PBFT <= Clique"):
        assert s["tendermint"] <= s["pbft"] <= s["clique"], s


# --- 9 ---------------------------------------------------------------------------------

EXPECTED_TP_ORDER = ["pbft", "clique", "tendermint", "raft"]
EXPECTED_LATENCY_ORDER = ["clique", "raft", "tendermint", "pbft"]


def test_09_baseline_orderings(grid):
    tp = {p: median(grid, p, "baseline", "throughput") for p in PROTOCOLS}
    lat = {p: median(grid, p, "baseline", "avg_latency") for p in PROTOCOLS}
    tp_order, lat_order = _order(tp, True), _order(lat, False)
    with criterion(9, "PBFT has the top baseline TP and Clique the lowest baseline latency"):
        assert tp_order[0] == "pbft", tp
        assert lat_order[0] == "clique", lat
    for what, got, want in (("throughput", tp_order, EXPECTED_TP_ORDER), ("latency", lat_order, EXPECTED_LATENCY_ORDER)):
        line = f"criterion  9 SOFT  {what} order {', '.join(got)} (expected {', '.join(want)})"
        if got != want:
            warnings.warn(f"{what} ordering {got} differs from expected {want}", SoftOrderingWarning)
            line += " DEVIATES"
        RESULTS.append(line)


# --- 10 --------------------------------------------------------------------------------

def test_10_chaos_schedule(grid):
    sched = build_chaos_schedule("paper-sequence", 500.0, start=500.0)
    baseline = median(grid, "clique", "baseline", "throughput")
    with criterion(10, "chaos sequence shape, and Clique TP back within 20% of baseline in every recovery window"):
        assert [ph.label for ph in sched.phases] == [label for label, _ in STANDARD_SEQUENCE]
        assert len(sched.phases) == 8 and len(sched.recovery_windows()) == 8
        for (a, b, i), (c, d, j) in zip(sched.windows()[::2], sched.windows()[1::2]):
            assert i is not None and j is None and d - c == b - a
        kinds = [[(f.kind, f.magnitude, f.probability, f.scope) for f in ph.faults] for ph in sched.phases]
        assert kinds[0] == [("delay", 1.0, 0.0, "all")]
        assert kinds[1] == [("loss", 0.0, 0.15, "all")]
        assert kinds[7] == [("pause", 0.0, 0.0, "half")]
        cfg = ExperimentConfig(protocol="clique", max_time=sched.end, n_validators=N, chaos_schedule="paper-sequence",
                               chaos_phase_duration=500.0, chaos_start=500.0)
        for seed in range(3):
            rep = execute(build_run(cfg.with_(seed=seed), record_trace=False))
            ts = rep.time_series
            rates = {p.time: (p.committed_tx - (ts[k - 1].committed_tx if k else 0)) / cfg.sample_period
                     for k, p in enumerate(ts)}
            for begin, end in sched.recovery_windows():
                inside = [r for t, r in rates.items() if begin < t <= end]
                assert any(abs(r - baseline) <= 0.2 * baseline for r in inside), (seed, begin, inside, baseline)


# --- 11 --------------------------------------------------------------------------------

def test_11_samplers():
    with criterion(11, "exponential means, loss rate and equal-stake election frequencies"):
        for lam in (0.5, 2.0, 10.0):
            s = RandomStream(11, f"acceptance/exp/{lam}")
            mean = math.fsum(sample_exponential(s, lam) for _ in range(1_000_000)) / 1_000_000
            assert abs(mean - 1 / lam) <= 0.01 / lam, (lam, mean)
        sim = Simulator(11)
        net = Network(sim, 2.0)
        net.register(0)
        net.register(1)
        cid = net.open_channel(0, 1)
        net.apply_perturbation(Perturbation.loss(0.15))
        drops = sum(net.send(cid, None) == DROPPED for _ in range(100_000))
        assert abs(drops / 100_000 - 0.15) <= 0.005, drops
        eng = init_network("tendermint", N)
        counts = np.bincount([eng.elect_leader(r) for r in range(1, 100_001)], minlength=N)
        assert np.all(np.abs(counts / 100_000 - 1 / N) <= 0.01), counts


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
