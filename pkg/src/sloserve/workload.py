"""Client load generation.

Three client kinds: open-loop Poisson arrivals (never waits for responses),
closed-loop clients (a fixed number of outstanding requests per model; every
response immediately triggers the next request), and minute-granularity
invocation-count trace replay. A synthetic trace generator with heavy, cold,
bursty, and periodic workload classes ships in-repo so experiments need no
external dataset.

All generators are deterministic under a seed. Trace replay places each
minute's invocations uniformly at random within the minute (the trace carries
only counts) and scales counts by integer multiplication plus binomial
thinning of the fractional part, which conserves totals in expectation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .protocol import InferenceRequest

MINUTE_NS = 60_000_000_000


@dataclass
class ClientGroup:
    """One group of clients sharing a kind, SLO, and model set."""

    kind: str                      # "open" | "closed" | "replay"
    model_ids: list[int]
    slo_ns: int
    rate: float = 0.0              # open: total request rate (r/s) over the group
    concurrency: int = 0           # closed: outstanding requests per model
    trace: list[tuple[int, int, int]] | None = None   # replay: (workload, minute, count)
    trace_path: str = ""
    scale: float = 1.0
    start_ns: int = 0
    end_ns: int = 0                # 0 -> run horizon
    stagger_ns: int = 0            # open: model k becomes active at start + k*stagger
    assign: str = "per_model"      # open: "per_model" Poissons or "uniform_active"
    input_size: int = 0
    name: str = ""

    def validate(self) -> None:
        if self.kind not in ("open", "closed", "replay"):
            raise ValueError(f"unknown client kind {self.kind!r}")
        if not self.model_ids:
            raise ValueError("client group without models")
        if self.slo_ns <= 0:
            raise ValueError("slo must be > 0")
        if self.kind == "open" and self.rate <= 0:
            raise ValueError("open-loop rate must be > 0")
        if self.kind == "closed" and self.concurrency < 1:
            raise ValueError("closed-loop concurrency must be >= 1")
        if self.kind == "replay":
            if self.scale <= 0:
                raise ValueError("replay scale must be > 0")
            if self.trace is None and not self.trace_path:
                raise ValueError("replay group needs a trace")


def gen_open_loop(rate_per_s: float, seed: int, horizon_ns: int,
                  start_ns: int = 0) -> np.ndarray:
    """Strictly increasing Poisson arrival TimePoints in [start, start+horizon)."""
    if rate_per_s <= 0:
        raise ValueError("rate must be > 0")
    rng = np.random.default_rng(seed)
    mean_gap = 1e9 / rate_per_s
    chunks = []
    t = float(start_ns)
    end = start_ns + horizon_ns
    est = max(64, int(horizon_ns / mean_gap * 1.2) + 32)
    while t < end:
        gaps = rng.exponential(mean_gap, size=est)
        arr = t + np.cumsum(gaps)
        chunks.append(arr)
        t = float(arr[-1])
        est = 1024
    times = np.concatenate(chunks).astype(np.int64)
    times = times[times < end]
    # Integer rounding can collapse sub-ns gaps; keep strict monotonicity.
    while len(times) > 1:
        bad = np.flatnonzero(np.diff(times) <= 0)
        if bad.size == 0:
            break
        times[bad + 1] = times[bad] + 1
    return times


def thinned_count(count: int, scale: float, rng: np.random.Generator) -> int:
    """count * scale with the fractional part resolved by binomial thinning."""
    if count < 0:
        raise ValueError("count must be >= 0")
    whole = int(scale)
    frac = scale - whole
    n = count * whole
    if frac > 0 and count > 0:
        n += int(rng.binomial(count, frac))
    return n


def replay_trace(trace: list[tuple[int, int, int]], model_of_workload: dict[int, int],
                 scale: float, seed: int, start_ns: int = 0):
    """Expand a (workload, minute, count) trace into merged per-model arrival
    streams: returns (times int64 array, model_ids int64 array), time-sorted."""
    rng = np.random.default_rng(seed)
    all_times = []
    all_models = []
    for workload_id, minute, count in trace:
        if workload_id not in model_of_workload:
            raise KeyError(f"workload {workload_id} not mapped to a model")
        if count < 0:
            raise ValueError("negative invocation count")
        n = thinned_count(count, scale, rng)
        if n == 0:
            continue
        base = start_ns + minute * MINUTE_NS
        offs = rng.integers(0, MINUTE_NS, size=n, dtype=np.int64)
        all_times.append(base + np.sort(offs))
        all_models.append(np.full(n, model_of_workload[workload_id], dtype=np.int64))
    if not all_times:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    times = np.concatenate(all_times)
    models = np.concatenate(all_models)
    order = np.argsort(times, kind="stable")
    return times[order], models[order]


def load_trace_csv(path: str) -> list[tuple[int, int, int]]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:3] != ["workload_id", "minute", "count"]:
            raise ValueError(f"unexpected trace header {header!r}")
        for rec in reader:
            rows.append((int(rec[0]), int(rec[1]), int(rec[2])))
    return rows


def save_trace_csv(trace: list[tuple[int, int, int]], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["workload_id", "minute", "count"])
        w.writerows(trace)


def gen_synthetic_trace(n_workloads: int, minutes: int, seed: int,
                        base_rpm: float = 60.0) -> list[tuple[int, int, int]]:
    """MAF-like invocation trace: a mix of heavy sustained, low-rate cold,
    bursty, and periodically spiking workloads, with spike periods of 5, 15,
    and 60 minutes."""
    rng = np.random.default_rng(seed)
    rows = []
    kinds = rng.choice(4, size=n_workloads, p=[0.15, 0.40, 0.25, 0.20])
    for w in range(n_workloads):
        kind = kinds[w]
        if kind == 0:    # heavy sustained
            lam = base_rpm * rng.lognormal(0.0, 0.5)
            counts = rng.poisson(lam, size=minutes)
        elif kind == 1:  # cold: mostly silent
            counts = rng.poisson(0.2, size=minutes) * (rng.random(minutes) < 0.25)
        elif kind == 2:  # bursty: two-state on/off
            lam_hi = base_rpm * rng.lognormal(0.0, 0.4)
            lam_lo = lam_hi * 0.05
            state = rng.random() < 0.5
            counts = np.zeros(minutes, dtype=np.int64)
            for minute in range(minutes):
                if rng.random() < 0.15:
                    state = not state
                counts[minute] = rng.poisson(lam_hi if state else lam_lo)
        else:            # periodic spikes every 5, 15, or 60 minutes
            period = int(rng.choice([5, 15, 60]))
            phase = int(rng.integers(period))
            base = base_rpm * 0.1
            spike = base_rpm * rng.lognormal(0.5, 0.3)
            counts = rng.poisson(base, size=minutes)
            for minute in range(phase, minutes, period):
                counts[minute] += rng.poisson(spike)
        for minute in range(minutes):
            c = int(counts[minute])
            if c:
                rows.append((w, minute, c))
    return rows


def round_robin_mapping(workload_ids, model_ids) -> dict[int, int]:
    return {w: model_ids[i % len(model_ids)] for i, w in enumerate(workload_ids)}


# ---------------------------------------------------------------------------
# Driving clients against a controller


class ClientManager:
    """Feeds a controller's on_request from a set of client groups and keeps
    closed loops spinning. Open-loop and replay schedules are precomputed
    (seeded); closed-loop submissions are chained off responses."""

    def __init__(self, groups: list[ClientGroup], loop, submit, seed: int,
                 horizon_ns: int):
        for g in groups:
            g.validate()
        self.groups = groups
        self.loop = loop
        self.submit = submit          # callable(InferenceRequest)
        self.seed = seed
        self.horizon_ns = horizon_ns
        self._next_request_id = 1
        self._closed_model: dict[int, tuple[int, int, int]] = {}  # rid -> (model, slo, input)
        self._rng = np.random.default_rng((seed << 8) ^ 0xC11E17)

    def start(self) -> None:
        for gi, group in enumerate(self.groups):
            if group.kind == "open":
                self._start_open(gi, group)
            elif group.kind == "replay":
                self._start_replay(gi, group)
            else:
                self.loop.call_at(group.start_ns, self._start_closed, group)

    # -- open loop ----------------------------------------------------------

    def _group_end(self, group: ClientGroup) -> int:
        return min(group.end_ns, self.horizon_ns) if group.end_ns else self.horizon_ns

    def _start_open(self, gi: int, group: ClientGroup) -> None:
        horizon = self._group_end(group) - group.start_ns
        if horizon <= 0:
            return
        n_models = len(group.model_ids)
        if group.assign == "uniform_active" or group.stagger_ns:
            times = gen_open_loop(group.rate, self._stream_seed(gi, 0),
                                  horizon, group.start_ns)
            models = self._assign_active(group, times)
            self._chain(times, models, group, 0)
        else:
            per_rate = group.rate / n_models
            for k, m in enumerate(group.model_ids):
                times = gen_open_loop(per_rate, self._stream_seed(gi, k + 1),
                                      horizon, group.start_ns)
                models = np.full(len(times), m, dtype=np.int64)
                self._chain(times, models, group, 0)

    def _stream_seed(self, gi: int, k: int) -> int:
        return (self.seed * 1_000_003 + gi * 10_007 + k) & 0x7FFFFFFF

    def _assign_active(self, group: ClientGroup, times: np.ndarray) -> np.ndarray:
        """Spread arrivals evenly over the models active at each arrival time
        (staged activation: model k active from start + k*stagger)."""
        ids = np.asarray(group.model_ids, dtype=np.int64)
        if group.stagger_ns:
            active = 1 + (times - group.start_ns) // group.stagger_ns
            active = np.clip(active, 1, len(ids))
        else:
            active = np.full(len(times), len(ids), dtype=np.int64)
        u = self._rng.random(len(times))
        return ids[(u * active).astype(np.int64)]

    def _chain(self, times: np.ndarray, models: np.ndarray, group: ClientGroup,
               i: int) -> None:
        if i >= len(times):
            return
        self.loop.call_at(int(times[i]), self._emit_chain, times, models, group, i)

    def _emit_chain(self, times, models, group, i) -> None:
        self.submit(InferenceRequest(self._take_id(), int(models[i]), group.slo_ns,
                                     input_size=group.input_size))
        self._chain(times, models, group, i + 1)

    # -- replay ----------------------------------------------------------------

    def _start_replay(self, gi: int, group: ClientGroup) -> None:
        trace = group.trace
        if trace is None:
            trace = load_trace_csv(group.trace_path)
        workload_ids = sorted({w for w, _, _ in trace})
        mapping = round_robin_mapping(workload_ids, group.model_ids)
        times, models = replay_trace(trace, mapping, group.scale,
                                     self._stream_seed(gi, 91), group.start_ns)
        keep = times < self._group_end(group)
        self._chain(times[keep], models[keep], group, 0)

    # -- closed loop -------------------------------------------------------------

    def _start_closed(self, group: ClientGroup) -> None:
        for m in group.model_ids:
            for _ in range(group.concurrency):
                self._submit_closed(m, group)

    def _submit_closed(self, model_id: int, group: ClientGroup) -> None:
        rid = self._take_id()
        self._closed_model[rid] = (model_id, group)
        self.submit(InferenceRequest(rid, model_id, group.slo_ns,
                                     input_size=group.input_size))

    def on_response(self, request_id: int) -> None:
        """Response hook: a closed-loop client immediately submits its next
        request (Ok or Denied alike), until its group's end."""
        entry = self._closed_model.pop(request_id, None)
        if entry is None:
            return
        model_id, group = entry
        if self.loop.now() >= self._group_end(group):
            return
        self.loop.call_soon(self._submit_closed, model_id, group)

    def _take_id(self) -> int:
        rid = self._next_request_id
        self._next_request_id += 1
        return rid
