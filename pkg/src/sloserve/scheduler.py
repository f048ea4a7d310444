"""Centralized proactive scheduler.

Admission computes a per-request deadline (arrival + SLO minus an output
margin) and denies immediately when even a smallest-batch execution on the
least-loaded GPU, counting a needed Load, cannot meet it. Admitted requests
enter every batch-size queue of their model; they drop out of queue b once
now + predict(b) + dispatch_margin exceeds the deadline, and a request that
has dropped out of every queue is denied before its deadline passes.

Infer scheduling uses strategies: one (model, batch size, latest) candidate
per non-empty batch queue, kept per Infer executor in latest order, for models
resident (or residency-pending) on that executor's GPU. Whenever an executor
has less than the work horizon of outstanding predicted work, strategies are
popped until a valid one is found (latest not elapsed, enough queued requests,
predicted completion within every constituent deadline); the batch size is
then grown speculatively while larger queues have enough satisfiable requests
and the larger duration still meets the head deadline.

Load scheduling keeps demand statistics: d_m is the queued work per model,
allocations a_{m,g} split d_m over the GPUs holding m inversely proportional
to their load, and each model's priority is d_m minus the capacity-scaled sum
of its allocations. The highest positive-priority non-resident model is
loaded, evicting least-recently-used zero-demand models when pages run short.

Purge/enqueue predicates use the static profile durations; dispatch
feasibility and strategy latests use the live per-worker estimators (the p99
estimate is never below the profile seed in practice, so static purging errs
on the side of keeping requests).

Everything here is thread-confined to the single scheduler event loop.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

from .controller_state import ControllerState, Outstanding
from .profiles import ModelCatalog
from .protocol import (Action, ActionKind, ActionResult, InferenceRequest,
                       InferenceResponse, ResponseStatus, ResultStatus, WorkerHandshake)

QUEUED = 0
DISPATCHED = 1
DONE = 2

_INF = 1 << 62


@dataclass
class SchedulerConfig:
    work_horizon_ns: int = 5_000_000          # refill executors below this much planned work
    capacity_horizon_ns: int = 100_000_000    # capacity_g for load priorities
    lead_slack_ns: int = 1_000_000
    tardy_slack_ns: int = 1_000_000
    unload_tardy_ns: int = 1_000_000_000      # wide: the mirror pre-credits unloaded pages
    estimator_window: int = 10
    default_slo_ns: int = 100_000_000
    load_eps_ns: float = 1_000.0              # clamp for 1/load weighting on idle GPUs


class PendingRequest:
    __slots__ = ("request_id", "model_id", "arrival", "slo", "deadline",
                 "state", "cold_start", "size_mask", "served_batch")

    def __init__(self, request_id, model_id, arrival, slo, deadline, cold_start):
        self.request_id = request_id
        self.model_id = model_id
        self.arrival = arrival
        self.slo = slo
        self.deadline = deadline
        self.state = QUEUED
        self.cold_start = cold_start
        self.size_mask = 0
        self.served_batch = 0   # batch size of the serving action, 0 if never served


class _ModelRuntime:
    """Per-model scheduler state: profile constants and the batch queues."""

    __slots__ = ("model_id", "profile", "sizes", "seed_dur", "unit", "_tardy",
                 "queues", "counts", "seq", "last_load", "queued_requests")

    def __init__(self, model_id, profile, tardy_slack):
        self.model_id = model_id
        self.profile = profile
        self.sizes = profile.batch_sizes
        self.seed_dur = tuple(profile.exec_duration[b] for b in self.sizes)
        self.unit = self.seed_dur[0]   # smallest-batch work per queued request
        self._tardy = tardy_slack
        self.queues = tuple(deque() for _ in self.sizes)
        self.counts = [0] * len(self.sizes)
        self.seq = 0                   # bumped to invalidate published strategies
        self.last_load = 0
        self.queued_requests = 0

    def output_margin(self, slo: int) -> int:
        """Deadline headroom reserved for the Output stage plus the window
        tardy slack. The output reservation covers the largest batch size that
        could possibly serve within this SLO (anything larger can never pass
        the dispatch feasibility check)."""
        b_cap = self.sizes[0]
        for b, d in zip(self.sizes, self.seed_dur):
            if d <= slo:
                b_cap = b
        return b_cap * self.profile.output_transfer + self._tardy


class Scheduler:
    """Implements the controller's decision making over a ControllerState.

    The harness wires `send_action(worker_id, action)` and
    `send_response(request, response)`; timer scheduling goes through the
    event loop passed in.
    """

    def __init__(self, catalog: ModelCatalog, config: SchedulerConfig, loop,
                 send_action, send_response):
        self.catalog = catalog
        self.config = config
        self.loop = loop
        self.send_action = send_action
        self.send_response = send_response
        self.state = ControllerState(catalog, config.estimator_window)
        self.models = [
            _ModelRuntime(mid, catalog.profile(mid), config.tardy_slack_ns)
            for mid in catalog.model_ids()
        ]
        # Strategy heaps per Infer executor: (latest, -batch, model_id, seq)
        self.strategies: dict[tuple[int, int], list] = {}
        self.resident_gpus: dict[int, set[tuple[int, int]]] = {}
        # Load statistics
        self.alloc: dict[int, dict[tuple[int, int], float]] = {}
        self.gpu_load: dict[tuple[int, int], float] = {}
        self.priority: dict[int, float] = {}
        self.demand_models: set[int] = set()
        self._next_action_id = 1
        self._executor_wakes: dict[tuple[int, int, int], int] = {}
        self.live_requests: dict[int, PendingRequest] = {}
        self.action_sink = None   # optional callable(Outstanding, ActionResult)

    # ------------------------------------------------------------------
    # topology

    def on_handshake(self, hs: WorkerHandshake) -> None:
        self.state.add_worker(hs)
        for g in range(hs.gpu_count):
            self.strategies[(hs.worker_id, g)] = []
            self.gpu_load[(hs.worker_id, g)] = 0.0

    # ------------------------------------------------------------------
    # request admission

    def on_request(self, req: InferenceRequest) -> None:
        now = self.loop.now()
        if not self.catalog.has_model(req.model_id) or req.slo <= 0:
            self.send_response(None, InferenceResponse(
                req.request_id, ResponseStatus.DENIED, 0, False))
            return
        mr = self.models[req.model_id]
        deadline = now + req.slo - mr.output_margin(req.slo)
        cold = not self.state.is_warm(req.model_id)
        pr = PendingRequest(req.request_id, req.model_id, now, req.slo, deadline, cold)
        if deadline <= now or self._best_completion(mr, now) > deadline:
            self._respond(pr, ResponseStatus.DENIED, now, 0)
            return
        self._admit(pr, mr, now)
        self._pump(now)

    def _best_completion(self, mr: _ModelRuntime, now: int) -> int:
        """Predicted completion of a smallest-batch execution on the best GPU,
        counting a Load where the model is not resident."""
        m = mr.model_id
        b = mr.sizes[0]
        best = _INF
        for wid, g, mirror in self.state.all_gpus():
            dur = self.state.predict_infer(wid, m, b)
            ea = now + b * mr.profile.input_transfer
            if mirror.is_resident_or_pending(m):
                rt = mirror.residency_time(m)
                if rt > ea:
                    ea = rt
            else:
                _, load_end = self.state.predict_completion(
                    mirror.load_tl, self.state.predict_load(wid, m), now, now)
                if load_end > ea:
                    ea = load_end
            _, end = self.state.predict_completion(mirror.infer_tl, dur, ea, now)
            if end < best:
                best = end
        return best

    def _admit(self, pr: PendingRequest, mr: _ModelRuntime, now: int) -> bool:
        mask = 0
        margin = self.config.tardy_slack_ns
        for i, b in enumerate(mr.sizes):
            if now + mr.seed_dur[i] + margin <= pr.deadline:
                mr.queues[i].append(pr)
                mr.counts[i] += 1
                mask |= 1 << i
        if not mask:
            self._respond(pr, ResponseStatus.DENIED, now, 0)
            return False
        pr.size_mask = mask
        pr.state = QUEUED
        self.live_requests[pr.request_id] = pr
        self._set_queued(mr, mr.queued_requests + 1)
        self.update_load_stats(mr.model_id)
        # Backstop denial just past the last instant a smallest-batch dispatch
        # could still meet the deadline.
        self.loop.call_at(pr.deadline - margin - mr.seed_dur[0] + 1,
                          self._deadline_check, pr)
        self.refresh_strategies(mr.model_id)
        return True

    def _deadline_check(self, pr: PendingRequest) -> None:
        if pr.state != QUEUED:
            return
        now = self.loop.now()
        mr = self.models[pr.model_id]
        self._drop_all_queues(mr, pr)
        self._respond(pr, ResponseStatus.DENIED, now, 0)
        self._set_queued(mr, mr.queued_requests - 1)
        self.update_load_stats(mr.model_id)
        self.refresh_strategies(mr.model_id)
        self._pump(now)

    # ------------------------------------------------------------------
    # batch queues

    def _drop_all_queues(self, mr: _ModelRuntime, pr: PendingRequest) -> None:
        mask = pr.size_mask
        i = 0
        while mask:
            if mask & 1:
                mr.counts[i] -= 1
            mask >>= 1
            i += 1
        pr.size_mask = 0

    def _purge_expired(self, mr: _ModelRuntime, pr: PendingRequest, i: int,
                       now: int) -> None:
        """Drop pr from queue i; deny if it has left its last queue."""
        mr.counts[i] -= 1
        pr.size_mask &= ~(1 << i)
        if pr.size_mask == 0 and pr.state == QUEUED:
            self._respond(pr, ResponseStatus.DENIED, now, 0)
            self._set_queued(mr, mr.queued_requests - 1)
            self.update_load_stats(mr.model_id)

    def _peek_batch(self, mr: _ModelRuntime, i: int, need: int, now: int):
        """First `need` live members of queue i without removing them; returns
        (members, min_deadline) or None. Cleans dead/expired prefix entries."""
        q = mr.queues[i]
        bit = 1 << i
        cutoff = now + mr.seed_dur[i] + self.config.tardy_slack_ns
        # Clean the prefix so repeated peeks stay cheap.
        while q:
            pr = q[0]
            if pr.state != QUEUED or not (pr.size_mask & bit):
                q.popleft()
                continue
            if pr.deadline < cutoff:
                q.popleft()
                self._purge_expired(mr, pr, i, now)
                continue
            break
        if mr.counts[i] < need:
            return None
        members = []
        min_deadline = _INF
        for pr in q:
            if pr.state != QUEUED or not (pr.size_mask & bit):
                continue
            if pr.deadline < cutoff:
                continue
            members.append(pr)
            if pr.deadline < min_deadline:
                min_deadline = pr.deadline
            if len(members) == need:
                return members, min_deadline
        return None

    def _take_batch(self, mr: _ModelRuntime, i: int, members: list, now: int) -> None:
        """Physically remove `members` (the first live entries) from queue i
        and mark them dispatched everywhere."""
        q = mr.queues[i]
        bit = 1 << i
        taken = 0
        want = len(members)
        while taken < want:
            pr = q.popleft()
            if pr is members[taken]:
                taken += 1
            elif pr.state == QUEUED and (pr.size_mask & bit):
                # Expired entry the peek skipped over: purge it properly.
                self._purge_expired(mr, pr, i, now)
        for pr in members:
            self._drop_all_queues(mr, pr)
            pr.state = DISPATCHED
        self._set_queued(mr, mr.queued_requests - want)

    def _set_queued(self, mr: _ModelRuntime, n: int) -> None:
        mr.queued_requests = n
        if n > 0:
            self.demand_models.add(mr.model_id)
        else:
            self.demand_models.discard(mr.model_id)

    # ------------------------------------------------------------------
    # strategies

    def refresh_strategies(self, model_id: int) -> None:
        """Invalidate the model's published strategies and create one per
        non-empty batch queue on every executor holding the model."""
        mr = self.models[model_id]
        mr.seq += 1
        gpus = self.resident_gpus.get(model_id)
        if not gpus or mr.queued_requests == 0:
            return
        now = self.loop.now()
        seq = mr.seq
        for (wid, g) in gpus:
            heap = self.strategies[(wid, g)]
            for i, b in enumerate(mr.sizes):
                head = self._queue_head(mr, i, now)
                if head is None:
                    continue
                latest = head.deadline - self.state.predict_infer(wid, model_id, b)
                heapq.heappush(heap, (latest, -b, model_id, seq))

    def _queue_head(self, mr: _ModelRuntime, i: int, now: int):
        q = mr.queues[i]
        bit = 1 << i
        cutoff = now + mr.seed_dur[i] + self.config.tardy_slack_ns
        while q:
            pr = q[0]
            if pr.state != QUEUED or not (pr.size_mask & bit):
                q.popleft()
                continue
            if pr.deadline < cutoff:
                q.popleft()
                self._purge_expired(mr, pr, i, now)
                continue
            return pr
        return None

    # ------------------------------------------------------------------
    # Infer scheduling

    def fill_infer(self, wid: int, g: int, now: int) -> None:
        mirror = self.state.gpu(wid, g)
        tl = mirror.infer_tl
        heap = self.strategies[(wid, g)]
        horizon = self.config.work_horizon_ns
        while tl.outstanding_work(now) < horizon:
            dispatched = False
            while heap:
                latest, negb, model_id, seq = heapq.heappop(heap)
                mr = self.models[model_id]
                if seq != mr.seq:
                    continue
                if latest < now:
                    continue
                if not mirror.is_resident_or_pending(model_id):
                    continue
                b = -negb
                i = mr.sizes.index(b)
                got = self._try_dispatch(wid, g, mirror, mr, i, now)
                if got:
                    dispatched = True
                    break
            if not dispatched:
                break

    def _try_dispatch(self, wid, g, mirror, mr, i, now) -> bool:
        model_id = mr.model_id
        peek = self._peek_batch(mr, i, mr.sizes[i], now)
        if peek is None:
            return False
        members, min_deadline = peek
        dur = self.state.predict_infer(wid, model_id, mr.sizes[i])
        ea, floor = self._infer_earliest(mirror, mr, mr.sizes[i], now)
        start, end = self.state.predict_completion(mirror.infer_tl, dur, ea, now)
        if end > min_deadline:
            return False
        # Speculatively grow while larger queues can fill the batch and the
        # larger duration still meets the head deadline.
        for j in range(i + 1, len(mr.sizes)):
            bigger = self._peek_batch(mr, j, mr.sizes[j], now)
            if bigger is None:
                break
            dur_j = self.state.predict_infer(wid, model_id, mr.sizes[j])
            ea_j, floor_j = self._infer_earliest(mirror, mr, mr.sizes[j], now)
            start_j, end_j = self.state.predict_completion(mirror.infer_tl, dur_j, ea_j, now)
            if end_j > bigger[1]:
                break
            i, members, min_deadline = j, bigger[0], bigger[1]
            dur, start, end, floor = dur_j, start_j, end_j, floor_j
        self._take_batch(mr, i, members, now)
        self.update_load_stats(model_id)
        earliest, latest = self.state.window_for(
            start, now, self.config.lead_slack_ns, self.config.tardy_slack_ns)
        if earliest < floor:
            earliest = floor
        action_id = self._next_action_id
        self._next_action_id += 1
        action = Action(action_id, ActionKind.INFER, model_id, earliest, latest,
                        tuple(pr.request_id for pr in members), g, dur)
        self.state.register(Outstanding(
            action_id, wid, g, ActionKind.INFER, model_id, members,
            start, end, dur, mr.sizes[i],
            predicted_result_end=end + mr.sizes[i] * mr.profile.output_transfer))
        mirror.touch(model_id, now)
        self.send_action(wid, action)
        self._arm_executor_wake(wid, g, ActionKind.INFER)
        self.refresh_strategies(model_id)
        return True

    def _infer_earliest(self, mirror, mr, b, now):
        """(earliest allowed start, hard floor) for an Infer: input transfer
        after receipt, plus any pending Load's predicted completion."""
        ea = now + b * mr.profile.input_transfer
        floor = now
        rt = mirror.residency_time(mr.model_id)
        if mr.model_id in mirror.pending_load:
            floor = rt
        if rt > ea:
            ea = rt
        return ea, floor

    # ------------------------------------------------------------------
    # demand statistics and load priorities

    def update_load_stats(self, model_id: int) -> None:
        """Recompute d_m's allocation over the GPUs holding the model
        (inversely proportional to their load) and its load priority."""
        mr = self.models[model_id]
        d = float(mr.queued_requests * mr.unit)
        old = self.alloc.get(model_id)
        if old:
            for gk, a in old.items():
                self.gpu_load[gk] -= a
        gpus = self.resident_gpus.get(model_id)
        if not gpus:
            self.alloc.pop(model_id, None)
            self.priority[model_id] = d
            return
        eps = self.config.load_eps_ns
        gkeys = sorted(gpus)
        if d == 0.0:
            # Loaded with no outstanding demand: zero allocations, zero priority.
            self.alloc.pop(model_id, None)
            self.priority[model_id] = 0.0
            return
        weights = [1.0 / max(self.gpu_load[gk], eps) for gk in gkeys]
        total_w = sum(weights)
        shares = [d * w / total_w for w in weights]
        shares[-1] = d - sum(shares[:-1])   # exact conservation
        new_alloc = {}
        for gk, a in zip(gkeys, shares):
            new_alloc[gk] = a
            self.gpu_load[gk] += a
        self.alloc[model_id] = new_alloc
        cap = float(self.config.capacity_horizon_ns)
        served = 0.0
        for gk, a in new_alloc.items():
            served += a * cap / max(self.gpu_load[gk], eps)
        self.priority[model_id] = d - served

    def load_priority(self, model_id: int) -> float:
        p = self.priority.get(model_id)
        if p is None:
            self.update_load_stats(model_id)
            p = self.priority[model_id]
        return p

    # ------------------------------------------------------------------
    # Load scheduling

    def fill_load(self, wid: int, g: int, now: int) -> None:
        mirror = self.state.gpu(wid, g)
        tl = mirror.load_tl
        skipped: set[int] = set()
        while tl.outstanding_work(now) < self.config.work_horizon_ns:
            best = None
            best_key = None
            for m in self.demand_models:
                if m in skipped or mirror.is_resident_or_pending(m):
                    continue
                p = self.load_priority(m)
                if p <= 0.0:
                    continue
                # Higher priority wins; ties go to the least-recently-loaded,
                # then the lower model id, for determinism.
                key = (p, -self.models[m].last_load, -m)
                if best_key is None or key > best_key:
                    best, best_key = m, key
            if best is None:
                return
            if not self._schedule_load(wid, g, mirror, best, now):
                skipped.add(best)

    def _schedule_load(self, wid, g, mirror, model_id, now) -> bool:
        mr = self.models[model_id]
        load_dur = self.state.predict_load(wid, model_id)
        _, load_end = self.state.predict_completion(mirror.load_tl, load_dur, now, now)
        # A Load only helps if some queued request is still servable after it.
        if not self._load_would_help(mr, load_end):
            return False
        pages = self.catalog.pages_needed(model_id)
        if mirror.pages_free < pages:
            victims = self._pick_victims(mirror, pages - mirror.pages_free)
            if victims is None:
                return False
            for v in victims:
                self._emit_unload(wid, g, mirror, v, now)
        start, end = self.state.predict_completion(mirror.load_tl, load_dur, now, now)
        earliest, latest = self.state.window_for(
            start, now, self.config.lead_slack_ns, self.config.tardy_slack_ns)
        action_id = self._next_action_id
        self._next_action_id += 1
        action = Action(action_id, ActionKind.LOAD, model_id, earliest, latest,
                        (), g, 0)
        mirror.plan_load(model_id, pages, end, action_id)
        self.resident_gpus.setdefault(model_id, set()).add((wid, g))
        self.state.register(Outstanding(
            action_id, wid, g, ActionKind.LOAD, model_id, (), start, end, load_dur))
        mr.last_load = now
        self.send_action(wid, action)
        self._arm_executor_wake(wid, g, ActionKind.LOAD)
        self.update_load_stats(model_id)
        self.refresh_strategies(model_id)
        return True

    def _load_would_help(self, mr: _ModelRuntime, load_end: int) -> bool:
        cutoff = load_end + mr.seed_dur[0] + self.config.tardy_slack_ns
        bit = 1
        for pr in mr.queues[0]:
            if pr.state == QUEUED and (pr.size_mask & bit) and pr.deadline >= cutoff:
                return True
        return False

    def _pick_victims(self, mirror, pages_short: int):
        """LRU-ordered resident models with no outstanding demand and no
        in-flight actions; None if they cannot free enough pages."""
        candidates = sorted(
            (t, m) for m, t in mirror.lru.items()
            if m not in mirror.pending_load
            and not mirror.inflight.get(m)
            and self.models[m].queued_requests == 0)
        victims = []
        freed = 0
        for _, m in candidates:
            victims.append(m)
            freed += mirror.resident.get(m, 0)
            if freed >= pages_short:
                return victims
        return None

    def _emit_unload(self, wid, g, mirror, model_id, now) -> None:
        tl = mirror.load_tl
        start, _ = self.state.predict_completion(tl, 0, now, now)
        action_id = self._next_action_id
        self._next_action_id += 1
        action = Action(action_id, ActionKind.UNLOAD, model_id,
                        now, start + self.config.unload_tardy_ns, (), g, 0)
        mirror.plan_unload(model_id)
        gpus = self.resident_gpus.get(model_id)
        if gpus:
            gpus.discard((wid, g))
        self.state.register(Outstanding(
            action_id, wid, g, ActionKind.UNLOAD, model_id, (), start, start, 0))
        self.send_action(wid, action)
        self.update_load_stats(model_id)
        self.refresh_strategies(model_id)

    # ------------------------------------------------------------------
    # results

    def on_result(self, result: ActionResult) -> None:
        info = self.state.record_result(result)
        if info is None:
            return
        now = self.loop.now()
        if self.action_sink is not None:
            self.action_sink(info, result)
        if info.kind == ActionKind.INFER:
            if result.status == ResultStatus.SUCCESS:
                for pr in info.requests:
                    latency = result.end - pr.arrival
                    ok = latency <= pr.slo
                    self._respond(pr, ResponseStatus.OK if ok else ResponseStatus.TIMEOUT,
                                  now, info.batch_size, latency)
            else:
                self._requeue_or_deny(info.requests, now)
        elif info.kind == ActionKind.LOAD:
            if result.status != ResultStatus.SUCCESS:
                gpus = self.resident_gpus.get(info.model_id)
                if gpus:
                    gpus.discard((info.worker_id, info.gpu_index))
                self.update_load_stats(info.model_id)
                self.refresh_strategies(info.model_id)
        self._pump(now)

    def _requeue_or_deny(self, requests, now) -> None:
        """Failed Infer: constituents re-enter scheduling if still feasible
        (counting as fresh arrivals for the demand stats), else are denied."""
        touched = set()
        for pr in requests:
            mr = self.models[pr.model_id]
            pr.state = QUEUED
            if self._best_completion(mr, now) <= pr.deadline and self._readmit(pr, mr, now):
                touched.add(pr.model_id)
            else:
                pr.state = DONE
                self._respond(pr, ResponseStatus.DENIED, now, 0)
        for m in touched:
            self.update_load_stats(m)
            self.refresh_strategies(m)

    def _readmit(self, pr: PendingRequest, mr: _ModelRuntime, now: int) -> bool:
        mask = 0
        margin = self.config.tardy_slack_ns
        for i, b in enumerate(mr.sizes):
            if now + mr.seed_dur[i] + margin <= pr.deadline:
                mr.queues[i].append(pr)
                mr.counts[i] += 1
                mask |= 1 << i
        if not mask:
            return False
        pr.size_mask = mask
        pr.state = QUEUED
        self._set_queued(mr, mr.queued_requests + 1)
        self.loop.call_at(pr.deadline - margin - mr.seed_dur[0] + 1,
                          self._deadline_check, pr)
        return True

    def _respond(self, pr: PendingRequest, status: ResponseStatus, now: int,
                 batch_size: int, latency: int | None = None) -> None:
        if latency is None:
            latency = now - pr.arrival
        pr.state = DONE
        pr.served_batch = batch_size
        self.live_requests.pop(pr.request_id, None)
        self.send_response(pr, InferenceResponse(
            pr.request_id, status, latency, pr.cold_start))

    # ------------------------------------------------------------------
    # pumping

    def _pump(self, now: int) -> None:
        horizon = self.config.work_horizon_ns
        for wid, g, mirror in self.state.all_gpus():
            if mirror.infer_tl.outstanding_work(now) < horizon:
                self.fill_infer(wid, g, now)
            if mirror.load_tl.outstanding_work(now) < horizon:
                self.fill_load(wid, g, now)

    def _arm_executor_wake(self, wid: int, g: int, kind: ActionKind) -> None:
        """Re-examine an executor when its planned work drains below the
        horizon, so refills do not depend on result arrival."""
        mirror = self.state.gpu(wid, g)
        tl = mirror.timeline(kind)
        now = self.loop.now()
        # One past the boundary: at free_at - horizon the outstanding work
        # still equals the horizon and the refill gate would not open.
        t = tl.free_at(now) - self.config.work_horizon_ns + 1
        if t <= now:
            return
        key = (wid, g, int(kind))
        if self._executor_wakes.get(key, -1) >= t:
            return
        self._executor_wakes[key] = t
        self.loop.call_at(t, self._executor_wake, key)

    def _executor_wake(self, key) -> None:
        self._executor_wakes.pop(key, None)
        wid, g, kind = key
        now = self.loop.now()
        if kind == int(ActionKind.INFER):
            self.fill_infer(wid, g, now)
        else:
            self.fill_load(wid, g, now)
