"""Controller-side mirror of every worker.

Tracks three things per worker: memory state (page counts and residency,
effective from a scheduled Load's predicted end), rolling action-duration
estimators (nearest-rank p99 over a small window, seeded from the profile),
and per-executor timelines of outstanding actions from which queuing time and
completion times are predicted. All state is owned by the single scheduler
thread; nothing here is synchronized.
"""

from __future__ import annotations

import math

from .profiles import ModelCatalog
from .protocol import ActionKind, ActionResult, ResultStatus, WorkerHandshake


class DurationEstimator:
    """Rolling window of the last W measured durations; the estimate is the
    nearest-rank 99th percentile (the window maximum for W < 100), or the
    profile seed while the window is empty."""

    __slots__ = ("seed", "maxlen", "window", "_estimate")

    def __init__(self, seed: int, window: int = 10):
        self.seed = seed
        self.maxlen = window
        self.window: list[int] = []
        self._estimate = seed

    def observe(self, duration: int) -> None:
        w = self.window
        w.append(duration)
        if len(w) > self.maxlen:
            del w[0]
        k = math.ceil(0.99 * len(w))
        if k >= len(w):
            self._estimate = max(w)
        else:
            self._estimate = sorted(w)[k - 1]

    def estimate(self) -> int:
        return self._estimate


class ExecutorTimeline:
    """Predicted (start, end) intervals of outstanding actions on one
    executor; free_at is when new work could begin."""

    __slots__ = ("outstanding", "_max_end")

    def __init__(self):
        self.outstanding: dict[int, tuple[int, int]] = {}
        self._max_end = 0

    def add(self, action_id: int, start: int, end: int) -> None:
        self.outstanding[action_id] = (start, end)
        if end > self._max_end:
            self._max_end = end

    def remove(self, action_id: int) -> None:
        entry = self.outstanding.pop(action_id, None)
        if entry is not None and entry[1] >= self._max_end:
            self._max_end = max((e for _, e in self.outstanding.values()), default=0)

    def free_at(self, now: int) -> int:
        return self._max_end if self._max_end > now else now

    def outstanding_work(self, now: int) -> int:
        return self.free_at(now) - now


class GpuMirror:
    """Mirror of one GPU's PageCache plus its two executor timelines.

    Pages are debited when a Load is scheduled and credited when an Unload is
    scheduled (the worker's Load executor applies them in the same order), so
    the mirror never over-commits. A model counts as resident from its Load's
    predicted end; a failed Load rolls the residency back.
    """

    __slots__ = ("pages_total", "pages_free", "resident", "resident_from",
                 "pending_load", "lru", "inflight", "infer_tl", "load_tl")

    def __init__(self, pages_total: int):
        self.pages_total = pages_total
        self.pages_free = pages_total
        self.resident: dict[int, int] = {}       # model -> pages
        self.resident_from: dict[int, int] = {}  # model -> effective TimePoint
        self.pending_load: dict[int, int] = {}   # model -> action_id
        self.lru: dict[int, int] = {}            # model -> last planned use
        self.inflight: dict[int, int] = {}       # model -> in-flight action count
        self.infer_tl = ExecutorTimeline()
        self.load_tl = ExecutorTimeline()

    def timeline(self, kind: ActionKind) -> ExecutorTimeline:
        return self.infer_tl if kind == ActionKind.INFER else self.load_tl

    def is_resident_or_pending(self, model_id: int) -> bool:
        return model_id in self.resident

    def is_confirmed(self, model_id: int) -> bool:
        return model_id in self.resident and model_id not in self.pending_load

    def residency_time(self, model_id: int) -> int:
        return self.resident_from.get(model_id, 0)

    def plan_load(self, model_id: int, pages: int, predicted_end: int, action_id: int) -> None:
        assert model_id not in self.resident and pages <= self.pages_free
        self.pages_free -= pages
        self.resident[model_id] = pages
        self.resident_from[model_id] = predicted_end
        self.pending_load[model_id] = action_id
        self.lru[model_id] = predicted_end

    def confirm_load(self, model_id: int) -> None:
        self.pending_load.pop(model_id, None)

    def rollback_load(self, model_id: int) -> None:
        pages = self.resident.pop(model_id, 0)
        self.pages_free += pages
        self.resident_from.pop(model_id, None)
        self.pending_load.pop(model_id, None)
        self.lru.pop(model_id, None)

    def plan_unload(self, model_id: int) -> None:
        pages = self.resident.pop(model_id, 0)
        self.pages_free += pages
        self.resident_from.pop(model_id, None)
        self.lru.pop(model_id, None)

    def touch(self, model_id: int, t: int) -> None:
        if model_id in self.lru:
            self.lru[model_id] = t

    def bump_inflight(self, model_id: int, delta: int) -> None:
        n = self.inflight.get(model_id, 0) + delta
        if n:
            self.inflight[model_id] = n
        else:
            self.inflight.pop(model_id, None)


class WorkerMirror:
    __slots__ = ("worker_id", "gpus")

    def __init__(self, worker_id: int, gpu_count: int, pages_per_gpu: int):
        self.worker_id = worker_id
        self.gpus = [GpuMirror(pages_per_gpu) for _ in range(gpu_count)]

    @classmethod
    def from_handshake(cls, hs: WorkerHandshake) -> "WorkerMirror":
        return cls(hs.worker_id, hs.gpu_count, hs.pages_total)


class Outstanding:
    """Controller-side record of a submitted action awaiting its result."""

    __slots__ = ("action_id", "worker_id", "gpu_index", "kind", "model_id",
                 "requests", "predicted_start", "predicted_end", "predicted_duration",
                 "batch_size", "predicted_result_end")

    def __init__(self, action_id, worker_id, gpu_index, kind, model_id, requests,
                 predicted_start, predicted_end, predicted_duration, batch_size=0,
                 predicted_result_end=None):
        self.action_id = action_id
        self.worker_id = worker_id
        self.gpu_index = gpu_index
        self.kind = kind
        self.model_id = model_id
        self.requests = requests
        self.predicted_start = predicted_start
        self.predicted_end = predicted_end        # executor-occupancy end (Exec/copy)
        self.predicted_duration = predicted_duration
        self.batch_size = batch_size
        # Predicted result end time (includes the Output stage for Infer).
        self.predicted_result_end = predicted_end if predicted_result_end is None \
            else predicted_result_end


class ControllerState:
    """Aggregate mirror keyed by worker, plus the estimators and the pending
    action registry."""

    def __init__(self, catalog: ModelCatalog, estimator_window: int = 10):
        self.catalog = catalog
        self.estimator_window = estimator_window
        self.workers: dict[int, WorkerMirror] = {}
        self._infer_est: dict[tuple[int, int, int], DurationEstimator] = {}
        self._load_est: dict[tuple[int, int], DurationEstimator] = {}
        self.outstanding: dict[int, Outstanding] = {}

    # -- topology -----------------------------------------------------------

    def add_worker(self, hs: WorkerHandshake) -> WorkerMirror:
        mirror = WorkerMirror.from_handshake(hs)
        self.workers[hs.worker_id] = mirror
        return mirror

    def gpu(self, worker_id: int, gpu_index: int) -> GpuMirror:
        return self.workers[worker_id].gpus[gpu_index]

    def all_gpus(self):
        for w in self.workers.values():
            for g, mirror in enumerate(w.gpus):
                yield w.worker_id, g, mirror

    # -- prediction ----------------------------------------------------------

    def infer_estimator(self, worker_id: int, model_id: int, batch: int) -> DurationEstimator:
        key = (worker_id, model_id, batch)
        est = self._infer_est.get(key)
        if est is None:
            if not self.catalog.has_model(model_id):
                raise KeyError(f"unknown model {model_id}")
            seed = self.catalog.profile(model_id).exec_duration[batch]
            est = DurationEstimator(seed, self.estimator_window)
            self._infer_est[key] = est
        return est

    def load_estimator(self, worker_id: int, model_id: int) -> DurationEstimator:
        key = (worker_id, model_id)
        est = self._load_est.get(key)
        if est is None:
            if not self.catalog.has_model(model_id):
                raise KeyError(f"unknown model {model_id}")
            est = DurationEstimator(self.catalog.profile(model_id).weights_transfer,
                                    self.estimator_window)
            self._load_est[key] = est
        return est

    def predict_infer(self, worker_id: int, model_id: int, batch: int) -> int:
        return self.infer_estimator(worker_id, model_id, batch).estimate()

    def predict_load(self, worker_id: int, model_id: int) -> int:
        return self.load_estimator(worker_id, model_id).estimate()

    @staticmethod
    def predict_completion(timeline: ExecutorTimeline, duration: int,
                           earliest_allowed: int, now: int) -> tuple[int, int]:
        """Pure: earliest feasible (start, end) on this executor."""
        start = timeline.free_at(now)
        if earliest_allowed > start:
            start = earliest_allowed
        return start, start + duration

    @staticmethod
    def window_for(predicted_start: int, now: int, lead_slack: int,
                   tardy_slack: int) -> tuple[int, int]:
        earliest = predicted_start - lead_slack
        if earliest < now:
            earliest = now
        return earliest, predicted_start + tardy_slack

    # -- bookkeeping -----------------------------------------------------------

    def register(self, out: Outstanding) -> None:
        self.outstanding[out.action_id] = out
        g = self.gpu(out.worker_id, out.gpu_index)
        g.timeline(out.kind).add(out.action_id, out.predicted_start, out.predicted_end)
        g.bump_inflight(out.model_id, +1)

    def record_result(self, result: ActionResult) -> Outstanding | None:
        """Fold one worker result into the mirror; returns the matching
        outstanding record, or None for a stale/duplicate result."""
        info = self.outstanding.pop(result.action_id, None)
        if info is None:
            return None
        g = self.gpu(info.worker_id, info.gpu_index)
        g.timeline(info.kind).remove(result.action_id)
        g.bump_inflight(info.model_id, -1)
        if info.kind == ActionKind.INFER:
            if result.status == ResultStatus.SUCCESS:
                self.infer_estimator(info.worker_id, info.model_id,
                                     info.batch_size).observe(result.device_duration)
        elif info.kind == ActionKind.LOAD:
            if result.status == ResultStatus.SUCCESS:
                g.confirm_load(info.model_id)
                self.load_estimator(info.worker_id, info.model_id).observe(
                    result.device_duration)
            else:
                g.rollback_load(info.model_id)
        # Unload pages were credited when the action was scheduled.
        return info

    def is_warm(self, model_id: int) -> bool:
        """True iff the model is confirmed resident on some GPU (used to
        classify cold-start requests at arrival)."""
        for w in self.workers.values():
            for g in w.gpus:
                if g.is_confirmed(model_id):
                    return True
        return False
