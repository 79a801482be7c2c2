"""
A chaos schedule, step by step
==============================

The standard sequence applies eight fault phases (delay, loss, both,
corrupted nodes, paused nodes), each followed by a quiet recovery window of
the same length.  Sampling the committed transaction count every 100 time
units shows the throughput dip and recover.
"""

import numpy as np

from chaossim import ExperimentConfig, build_chaos_schedule
from chaossim.runner import build_run, execute

phase = 300.0
schedule = build_chaos_schedule("paper-sequence", phase, start=phase)
cfg = ExperimentConfig(protocol="clique", max_time=schedule.end, chaos_schedule="paper-sequence",
                       chaos_phase_duration=phase, chaos_start=phase)
report = execute(build_run(cfg, record_trace=False))

series = report.time_series
times = np.array([p.time for p in series])
committed = np.array([p.committed_tx for p in series])
rate = np.diff(committed, prepend=0) / cfg.sample_period

###############################################################################
# Label each sample with the window it falls in.

labels = []
for t in times:
    name = "warm-up"
    for begin, end, idx in schedule.windows():
        if begin < t <= end:
            name = schedule.phases[idx].label if idx is not None else "recovery"
    labels.append(name)

for t, r, name in zip(times, rate, labels):
    print(f"{t:7.0f}  {r:6.2f}  {'#' * int(min(r, 60)):<60}  {name}")

###############################################################################
# Pausing half of six Clique validators leaves three running, one short of a
# majority, so nothing counts as committed until the paused nodes come back.
# They then catch up by syncing, which shows as a burst in the next sample.
