"""Time base and event loops.

All times are integer nanoseconds since the experiment epoch (TimePoint);
intervals are signed integer nanoseconds (Duration). Simulated time advances
only through the event loop; wall-clock time is time.time_ns() minus a
process-agreed epoch so that separate processes on one machine share a
time base.
"""

from __future__ import annotations

import heapq
import threading
import time

US = 1_000
MS = 1_000_000
SECOND = 1_000_000_000


def ms(x: float) -> int:
    return int(x * MS)


def us(x: float) -> int:
    return int(x * US)


def seconds(x: float) -> int:
    return int(x * SECOND)


class SimClock:
    """Event-loop-owned clock; now() is the time of the event being run."""

    mode = "sim"

    def __init__(self):
        self._now = 0

    def now(self) -> int:
        return self._now


class WallClock:
    mode = "wall"

    def __init__(self, epoch_ns: int | None = None):
        self.epoch_ns = time.time_ns() if epoch_ns is None else epoch_ns

    def now(self) -> int:
        return time.time_ns() - self.epoch_ns


class SimLoop:
    """Single-threaded discrete-event loop.

    Events at equal times run in scheduling order, which keeps simulated
    runs bit-reproducible.
    """

    def __init__(self):
        self.clock = SimClock()
        self._heap = []
        self._seq = 0

    def now(self) -> int:
        return self.clock._now

    def call_at(self, t: int, fn, *args) -> None:
        if t < self.clock._now:
            t = self.clock._now
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, fn, args))

    def call_soon(self, fn, *args) -> None:
        self.call_at(self.clock._now, fn, *args)

    def run_until(self, horizon: int) -> None:
        heap = self._heap
        clock = self.clock
        while heap:
            t, _, fn, args = heap[0]
            if t > horizon:
                break
            heapq.heappop(heap)
            clock._now = t
            fn(*args)
        clock._now = horizon

    def run_until_idle(self, hard_limit: int) -> None:
        heap = self._heap
        clock = self.clock
        while heap:
            t, _, fn, args = heapq.heappop(heap)
            if t > hard_limit:
                break
            clock._now = t
            fn(*args)


class WallLoop:
    """Real-time event loop: one thread executing callbacks at wall times.

    Other threads inject work via call_at/call_soon. Waits sleep until
    spin_guard_ns before the target, then spin, so that OS sleep overshoot
    does not masquerade as worker misprediction.
    """

    def __init__(self, clock: WallClock, name: str = "wall-loop", spin_guard_ns: int = 100_000):
        self.clock = clock
        self.spin_guard_ns = spin_guard_ns
        self._heap = []
        self._seq = 0
        self._cond = threading.Condition()
        self._stopping = False
        self._thread = threading.Thread(target=self._run, name=name, daemon=True)

    def now(self) -> int:
        return self.clock.now()

    def start(self):
        self._thread.start()
        return self

    def stop(self, join: bool = True) -> None:
        with self._cond:
            self._stopping = True
            self._cond.notify()
        if join and self._thread.is_alive():
            self._thread.join()

    def call_at(self, t: int, fn, *args) -> None:
        with self._cond:
            self._seq += 1
            heapq.heappush(self._heap, (t, self._seq, fn, args))
            self._cond.notify()

    def call_soon(self, fn, *args) -> None:
        self.call_at(self.clock.now(), fn, *args)

    def _run(self) -> None:
        while True:
            with self._cond:
                while True:
                    if self._stopping:
                        return
                    if not self._heap:
                        self._cond.wait()
                        continue
                    t = self._heap[0][0]
                    now = self.clock.now()
                    if now >= t - self.spin_guard_ns:
                        _, _, fn, args = heapq.heappop(self._heap)
                        break
                    # Sleep most of the way; re-check in case of injections.
                    self._cond.wait(timeout=(t - now - self.spin_guard_ns) / 1e9)
            while self.clock.now() < t:
                pass
            fn(*args)
