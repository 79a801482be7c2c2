"""Poisson transaction arrivals and the bounded pending pool."""

from __future__ import annotations

import math

import numpy as np

from .protocols.base import Batch


def generate_workload(rate: float, until: float, stream, start: float = 0.0) -> np.ndarray:
    """Poisson arrival times in ``(start, until]`` at ``rate`` per time unit."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate == 0 or until <= start:
        return np.empty(0)
    chunk = max(16, int((until - start) * rate * 1.1) + 16)
    out = []
    t = start
    while True:
        times = t + np.cumsum(stream.exponential_array(rate, chunk))
        keep = times[times <= until]
        out.append(keep)
        if keep.size < times.size:
            break
        t = float(times[-1])
    return np.concatenate(out)


class TxPool:
    """Pending-transaction pool holding at most ``capacity`` transactions.

    Arrivals that find the pool full are turned away, so a batch is the
    first ``capacity`` arrivals after the previous cut.  Those arrival times
    are drawn lazily when first asked for, which is exact because the
    arrival process is memoryless.
    """

    def __init__(self, rate: float, capacity: int, stream, collector=None, trace=None):
        if rate < 0:
            raise ValueError("rate must be non-negative")
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.rate = rate
        self.capacity = capacity
        self.stream = stream
        self.collector = collector
        self.trace = trace
        self.last_cut = 0.0
        self._pending: np.ndarray | None = None
        self._next_tx = 0

    def ready_at(self) -> float:
        """Time the next full batch is available (``inf`` for a zero rate)."""
        if self.rate == 0:
            return math.inf
        if self._pending is None:
            gaps = self.stream.exponential_array(self.rate, self.capacity)
            self._pending = self.last_cut + np.cumsum(gaps)
        return float(self._pending[-1])

    def cut(self, now: float) -> Batch:
        ready = self.ready_at()
        if ready > now:
            raise ValueError("no full batch is ready yet")
        times = self._pending
        self._pending = None
        self.last_cut = now
        if self.collector is not None:
            first = self.collector.tx_batch_created(times)
        else:
            first = self._next_tx
        self._next_tx = first + times.size
        if self.trace is not None:
            self.trace.record(now, "pool", "tx-created", number=first,
                              detail="times=" + ",".join(repr(float(t)) for t in times))
        return Batch(first, int(times.size), now)
