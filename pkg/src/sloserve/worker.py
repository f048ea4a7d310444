"""Latency-emulated predictable worker.

The worker performs no real computation: Load and Infer wait out the profiled
durations on the event loop, which makes the worker behaviorally
indistinguishable from a real one from the controller's vantage point. Per
GPU there is one Load executor (Unload shares it, being metadata-only) and one
Infer executor; each runs a single action at a time, dequeues pending actions
chronologically by `earliest`, and rejects actions whose `latest` has passed.
Load and Infer executors overlap freely.

Infer is internally three stages. Input runs immediately on receipt: it
reserves IOCache bytes for the batch's inputs and outputs (blocking, in FIFO
order, if the gauge is full) and completes after batch_size x input_transfer.
Exec waits for the action window and the input, then occupies the Infer
executor for the profiled batch duration. Output takes batch_size x
output_transfer after Exec and releases the IOCache; the result's `end` is the
Output completion, while the executor frees at Exec completion so back-to-back
Infers pipeline.

Optional jitter multiplies each emulated device duration (Load copy, Exec) by
a seeded draw; Input/Output transfers stay fixed.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from .profiles import ModelCatalog
from .protocol import Action, ActionKind, ActionResult, ResultStatus, WorkerHandshake

DEFAULT_PAGES_PER_GPU = 500          # config stand-in for device memory, not a measured constant
DEFAULT_IO_CAPACITY = 512 * 1024 * 1024
_NEVER = 1 << 62


@dataclass(frozen=True)
class JitterSpec:
    """Multiplicative noise on emulated device durations."""

    kind: str = "none"            # "none" | "lognormal"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "lognormal"):
            raise ValueError(f"unknown jitter kind {self.kind!r}")
        if self.kind == "lognormal" and not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"invalid lognormal sigma {self.sigma!r}")

    @staticmethod
    def parse(text: str) -> "JitterSpec":
        # "none" or "lognormal:0.05"
        if text in ("", "none"):
            return JitterSpec()
        kind, _, arg = text.partition(":")
        if kind == "lognormal":
            return JitterSpec("lognormal", float(arg))
        raise ValueError(f"unknown jitter spec {text!r}")


class PageCache:
    """Fixed-size-page accounting of device weight memory.

    A model is fully resident or absent. Loads reserve pages for the copy and
    commit on completion; pages_free always equals pages_total minus pages
    held (resident plus in-transit copies).
    """

    def __init__(self, pages_total: int):
        self.pages_total = pages_total
        self.pages_free = pages_total
        self.resident: dict[int, int] = {}     # model_id -> pages held
        self.in_transit: dict[int, int] = {}
        self.lru_touch: dict[int, int] = {}    # model_id -> last-use time

    def is_resident(self, model_id: int) -> bool:
        return model_id in self.resident

    def reserve(self, model_id: int, pages: int) -> bool:
        if pages > self.pages_free:
            return False
        self.pages_free -= pages
        self.in_transit[model_id] = pages
        return True

    def commit(self, model_id: int, now: int) -> None:
        self.resident[model_id] = self.in_transit.pop(model_id)
        self.lru_touch[model_id] = now

    def touch(self, model_id: int, now: int) -> None:
        self.lru_touch[model_id] = now

    def release(self, model_id: int) -> int:
        pages = self.resident.pop(model_id, 0)
        self.pages_free += pages
        self.lru_touch.pop(model_id, None)
        return pages


class IOCacheGauge:
    """Byte gauge for the input/output staging memory."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.in_use = 0

    def try_acquire(self, nbytes: int) -> bool:
        if self.in_use + nbytes > self.capacity:
            return False
        self.in_use += nbytes
        return True

    def release(self, nbytes: int) -> None:
        self.in_use -= nbytes
        assert self.in_use >= 0


@dataclass
class WorkerActionRecord:
    """Worker-side telemetry row, flushed after the run."""

    action_id: int
    kind: int
    model_id: int
    gpu_index: int
    batch_size: int
    status: int
    start: int
    end: int
    device_duration: int


class _Executor:
    __slots__ = ("pending", "busy", "next_wake", "seq")

    def __init__(self):
        self.pending: list = []   # (earliest, seq, action)
        self.busy = False
        self.next_wake = _NEVER
        self.seq = 0

    def push(self, action: Action) -> None:
        self.seq += 1
        heapq.heappush(self.pending, (action.earliest, self.seq, action))


class _Gpu:
    __slots__ = ("pages", "io", "load_exec", "infer_exec", "io_waiting")

    def __init__(self, pages_total: int, io_capacity: int):
        self.pages = PageCache(pages_total)
        self.io = IOCacheGauge(io_capacity)
        self.load_exec = _Executor()
        self.infer_exec = _Executor()
        self.io_waiting: list[Action] = []   # FIFO of Infers blocked on IOCache


class EmulatedWorker:
    """Event-driven worker core; identical in simulated and wall-clock modes
    (the loop decides how time passes)."""

    def __init__(self, worker_id: int, catalog: ModelCatalog, loop, send_result,
                 gpu_count: int = 1, pages_per_gpu: int = DEFAULT_PAGES_PER_GPU,
                 io_capacity: int = DEFAULT_IO_CAPACITY,
                 jitter: JitterSpec | None = None, seed: int = 0,
                 keep_records: bool = True):
        self.worker_id = worker_id
        self.catalog = catalog
        self.loop = loop
        self.send_result = send_result
        self.gpus = [_Gpu(pages_per_gpu, io_capacity) for _ in range(gpu_count)]
        self.pages_per_gpu = pages_per_gpu
        self.jitter = jitter or JitterSpec()
        self._rng = random.Random((seed << 20) ^ (worker_id * 7919) ^ 0x5105)
        self._input_done: dict[int, int] = {}   # action_id -> input completion time
        self.keep_records = keep_records
        self.records: list[WorkerActionRecord] = []

    # -- jitter ------------------------------------------------------------

    def set_jitter(self, spec: JitterSpec) -> None:
        self.jitter = spec

    def _emulated(self, base_ns: int) -> int:
        if self.jitter.kind == "none" or self.jitter.sigma == 0.0:
            return base_ns
        return max(1, round(base_ns * self._rng.lognormvariate(0.0, self.jitter.sigma)))

    # -- protocol surface ---------------------------------------------------

    def handshake(self) -> WorkerHandshake:
        # All catalog models sit in host memory; GPU memory starts empty.
        return WorkerHandshake(self.worker_id, len(self.gpus), self.pages_per_gpu,
                               tuple(self.catalog.model_ids()))

    def on_action(self, action: Action) -> None:
        now = self.loop.now()
        if not self.catalog.has_model(action.model_id) or action.gpu_index >= len(self.gpus):
            self._finish(action, ResultStatus.MALFORMED_ACTION, now, now, 0)
            return
        gpu = self.gpus[action.gpu_index]
        if action.kind == ActionKind.INFER:
            profile = self.catalog.profile(action.model_id)
            if action.batch_size not in profile.exec_duration:
                self._finish(action, ResultStatus.MALFORMED_ACTION, now, now, 0)
                return
            # Input stage starts immediately on receipt.
            nbytes = action.batch_size * (profile.input_size + profile.output_size)
            if gpu.io.try_acquire(nbytes):
                self._input_done[action.action_id] = now + action.batch_size * profile.input_transfer
            else:
                gpu.io_waiting.append(action)
            gpu.infer_exec.push(action)
            self._try_start(action.gpu_index, gpu.infer_exec)
        else:
            gpu.load_exec.push(action)
            self._try_start(action.gpu_index, gpu.load_exec)

    # -- executor machinery --------------------------------------------------

    def _try_start(self, gpu_index: int, ex: _Executor) -> None:
        if ex.busy:
            return
        gpu = self.gpus[gpu_index]
        now = self.loop.now()
        while ex.pending:
            earliest, _, action = ex.pending[0]
            if now > action.latest:
                heapq.heappop(ex.pending)
                self._reject(gpu, action, now)
                continue
            eff = earliest
            if action.kind == ActionKind.INFER:
                eff = max(eff, self._input_done.get(action.action_id, _NEVER))
            if eff > action.latest:
                # Window will certainly be missed (e.g. IOCache-blocked input).
                if eff < _NEVER:
                    heapq.heappop(ex.pending)
                    self._reject(gpu, action, now)
                    continue
                return
            if eff > now:
                if ex.next_wake > eff:
                    ex.next_wake = eff
                    self.loop.call_at(eff, self._wake, gpu_index, ex)
                return
            heapq.heappop(ex.pending)
            if action.kind == ActionKind.UNLOAD:
                gpu.pages.release(action.model_id)
                self._finish(action, ResultStatus.SUCCESS, now, now, 0)
                continue
            if action.kind == ActionKind.LOAD:
                if gpu.pages.is_resident(action.model_id):
                    gpu.pages.touch(action.model_id, now)
                    self._finish(action, ResultStatus.SUCCESS, now, now, 0)
                    continue
                pages = self.catalog.pages_needed(action.model_id)
                if not gpu.pages.reserve(action.model_id, pages):
                    self._finish(action, ResultStatus.OUT_OF_PAGES, now, now, 0)
                    continue
                ex.busy = True
                profile = self.catalog.profile(action.model_id)
                dur = self._emulated(profile.weights_transfer)
                self.loop.call_at(now + dur, self._load_done, gpu_index, action, now, dur)
                return
            # INFER
            if not gpu.pages.is_resident(action.model_id):
                self._release_io(gpu, action)
                self._finish(action, ResultStatus.MODEL_NOT_LOADED, now, now, 0)
                continue
            ex.busy = True
            gpu.pages.touch(action.model_id, now)
            profile = self.catalog.profile(action.model_id)
            dur = self._emulated(profile.exec_duration[action.batch_size])
            self.loop.call_at(now + dur, self._exec_done, gpu_index, action, now, dur)
            return

    def _wake(self, gpu_index: int, ex: _Executor) -> None:
        ex.next_wake = _NEVER
        self._try_start(gpu_index, ex)

    def _load_done(self, gpu_index: int, action: Action, started: int, dur: int) -> None:
        gpu = self.gpus[gpu_index]
        now = self.loop.now()
        gpu.pages.commit(action.model_id, now)
        gpu.load_exec.busy = False
        self._finish(action, ResultStatus.SUCCESS, started, now, dur)
        self._try_start(gpu_index, gpu.load_exec)

    def _exec_done(self, gpu_index: int, action: Action, started: int, dur: int) -> None:
        gpu = self.gpus[gpu_index]
        now = self.loop.now()
        gpu.infer_exec.busy = False
        profile = self.catalog.profile(action.model_id)
        out_t = action.batch_size * profile.output_transfer
        self.loop.call_at(now + out_t, self._output_done, gpu_index, action, started, dur)
        self._try_start(gpu_index, gpu.infer_exec)

    def _output_done(self, gpu_index: int, action: Action, started: int, dur: int) -> None:
        gpu = self.gpus[gpu_index]
        self._release_io(gpu, action)
        self._drain_io_waiting(gpu_index)
        self._finish(action, ResultStatus.SUCCESS, started, self.loop.now(), dur)

    # -- IOCache bookkeeping --------------------------------------------------

    def _io_bytes(self, action: Action) -> int:
        profile = self.catalog.profile(action.model_id)
        return action.batch_size * (profile.input_size + profile.output_size)

    def _release_io(self, gpu: _Gpu, action: Action) -> None:
        if action.action_id in self._input_done:
            del self._input_done[action.action_id]
            gpu.io.release(self._io_bytes(action))
        else:
            # Input never acquired: drop from the blocked queue if present.
            try:
                gpu.io_waiting.remove(action)
            except ValueError:
                pass

    def _drain_io_waiting(self, gpu_index: int) -> None:
        gpu = self.gpus[gpu_index]
        now = self.loop.now()
        started = False
        while gpu.io_waiting:
            head = gpu.io_waiting[0]
            profile = self.catalog.profile(head.model_id)
            nbytes = head.batch_size * (profile.input_size + profile.output_size)
            if not gpu.io.try_acquire(nbytes):
                break
            gpu.io_waiting.pop(0)
            self._input_done[head.action_id] = now + head.batch_size * profile.input_transfer
            started = True
        if started:
            self._try_start(gpu_index, gpu.infer_exec)

    def _reject(self, gpu: _Gpu, action: Action, now: int) -> None:
        if action.kind == ActionKind.INFER:
            self._release_io(gpu, action)
        self._finish(action, ResultStatus.REJECTED_TOO_LATE, now, now, 0)

    def _finish(self, action: Action, status: ResultStatus, start: int, end: int,
                dur: int) -> None:
        if self.keep_records:
            self.records.append(WorkerActionRecord(
                action.action_id, int(action.kind), action.model_id, action.gpu_index,
                action.batch_size, int(status), start, end, dur))
        self.send_result(ActionResult(action.action_id, status, start, end, dur))
