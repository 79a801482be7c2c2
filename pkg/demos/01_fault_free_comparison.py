"""
Four consensus protocols on a quiet network
===========================================

Every protocol runs on six validators with no faults.  The numbers to look
at are throughput (transactions per time unit), average latency, success
rate and the spread of local chain lengths.
"""

import numpy as np

from chaossim import ExperimentConfig, run_batch

# five seeds per protocol keep this under a minute
base = ExperimentConfig(max_time=2000.0, seed_count=5)

for protocol in ("pbft", "tendermint", "clique", "raft"):
    rows = run_batch(base.with_(protocol=protocol))
    tp = np.array([r.report.throughput for r in rows])
    lat = np.array([r.report.avg_latency for r in rows])
    print(f"{protocol:>10}  throughput {np.median(tp):6.2f}  latency {np.median(lat):6.2f}"
          f"  success {rows[0].report.success_rate:.2f}  sigma {rows[0].report.chain_sigma:.2f}")

###############################################################################
# Without faults every node commits the same blocks, so the success rate is 1
# and the chain lengths agree.  The protocols still differ in speed: each Clique
# follower commits on its own validation of the proposal, while Tendermint
# waits for two rounds of votes.
