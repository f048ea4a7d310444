"""Experiment runner and telemetry.

run_experiment() builds the catalog, workers, controller, and clients from an
ExperimentConfig and runs to the horizon plus a drain phase so that every
admitted request reaches a terminal status. In simulated mode everything runs
in one discrete-event loop and runs are bit-reproducible under a seed. In
wall-clock mode the controller gets a real-time loop of its own, and workers
run either in-process (their own loops, in-memory message passing) or behind
TCP connections speaking the wire protocol (in-thread servers, or external
processes started via the worker CLI).

Telemetry is buffered in memory by the controller process and flushed after
the run: a request log, an action log joining controller predictions with
worker measurements, and interval aggregates from which the summary report is
computed. Exit status of the CLI is nonzero if any Ok response exceeded its
SLO (the hard invariant).
"""

from __future__ import annotations

import csv
import json
import math
import os
import socket
import threading
import time
from dataclasses import dataclass, field

from . import profiles, workload
from .controller_state import Outstanding
from .protocol import (ActionKind, ActionResult, InferenceRequest, InferenceResponse,
                       ResponseStatus, ResultStatus, WorkerHandshake,
                       recv_message, send_message)
from .scheduler import Scheduler, SchedulerConfig
from .timebase import MS, SECOND, SimLoop, WallClock, WallLoop
from .worker import EmulatedWorker, JitterSpec

REQUEST_CSV_HEADER = "request_id,model_id,arrival_ns,deadline_ns,status,latency_ns,batch_size,cold_start"
ACTION_CSV_HEADER = ("action_id,kind,model_id,worker_id,gpu,batch_size,status,"
                     "predicted_start_ns,predicted_end_ns,predicted_duration_ns,"
                     "start_ns,end_ns,device_duration_ns")

_STATUS_NAME = {ResponseStatus.OK: "ok", ResponseStatus.DENIED: "denied",
                ResponseStatus.TIMEOUT: "timeout"}
_KIND_NAME = {ActionKind.LOAD: "load", ActionKind.UNLOAD: "unload",
              ActionKind.INFER: "infer"}
_RESULT_NAME = {ResultStatus.SUCCESS: "success",
                ResultStatus.REJECTED_TOO_LATE: "rejected_too_late",
                ResultStatus.OUT_OF_PAGES: "out_of_pages",
                ResultStatus.MODEL_NOT_LOADED: "model_not_loaded",
                ResultStatus.MALFORMED_ACTION: "malformed_action"}


@dataclass
class WorkerSpec:
    gpu_count: int = 1
    pages_per_gpu: int = 500
    address: str = ""        # tcp transport: "host:port" of an external worker


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    mode: str = "sim"                  # "sim" | "wall"
    transport: str = "inproc"          # wall only: "inproc" | "tcp"
    horizon_ns: int = 10 * SECOND
    catalog_text: str = ""             # inline profile records ("" -> builtin reference)
    catalog_path: str = ""
    replicate: list = field(default_factory=list)    # [(base_name, copies), ...]
    workers: list = field(default_factory=lambda: [WorkerSpec()])
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    jitter: JitterSpec = field(default_factory=JitterSpec)
    groups: list = field(default_factory=list)
    interval_ns: int = SECOND
    keep_request_records: bool = True
    keep_action_records: bool = True
    net_delay_ns: int = 0              # sim mode one-way controller<->worker delay
    io_capacity: int = 512 * 1024 * 1024
    drain_ns: int = 0                  # extra time after the horizon (0 -> max SLO + 1s)
    epoch_ns: int = 0                  # wall mode epoch (time_ns); 0 -> start of run

    def build_catalog(self) -> profiles.ModelCatalog:
        if self.catalog_path:
            catalog = profiles.load_catalog(self.catalog_path)
        elif self.catalog_text:
            catalog = profiles.loads_catalog(self.catalog_text)
        else:
            catalog = profiles.reference_catalog()
        for base, copies in self.replicate:
            profiles.replicate_model(catalog, base, copies)
        return catalog

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "workers" in d:
            d["workers"] = [WorkerSpec(**w) for w in d["workers"]]
        if "scheduler" in d:
            d["scheduler"] = SchedulerConfig(**d["scheduler"])
        if "jitter" in d:
            j = d["jitter"]
            d["jitter"] = JitterSpec.parse(j) if isinstance(j, str) else JitterSpec(**j)
        if "groups" in d:
            d["groups"] = [workload.ClientGroup(**g) for g in d["groups"]]
        if "replicate" in d:
            d["replicate"] = [tuple(r) for r in d["replicate"]]
        return cls(**d)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Telemetry


class TelemetrySink:
    """Buffers request/action telemetry and keeps per-interval aggregates."""

    def __init__(self, interval_ns: int, keep_requests: bool, keep_actions: bool,
                 horizon_ns: int):
        self.interval_ns = interval_ns
        self.keep_requests = keep_requests
        self.keep_actions = keep_actions
        self.horizon_ns = horizon_ns
        self.request_rows: list[tuple] = []
        self.action_rows: list[tuple] = []
        self.intervals: dict[int, dict] = {}
        self.total = {"ok": 0, "denied": 0, "timeout": 0, "over_slo": 0,
                      "cold": 0, "arrivals": 0, "ok_in_horizon": 0}
        self.cold_by_model: dict[int, int] = {}
        self.underpredictions = 0
        self.overpredictions = 0
        self.infer_success = 0

    def _bucket(self, t: int) -> dict:
        idx = t // self.interval_ns
        b = self.intervals.get(idx)
        if b is None:
            b = {"offered": 0, "ok": 0, "denied": 0, "timeout": 0, "cold": 0,
                 "batch_sum": 0, "infers": 0, "latencies": []}
            self.intervals[idx] = b
        return b

    def on_response(self, pr, resp: InferenceResponse) -> None:
        if pr is None:   # rejected before admission (unknown model / bad SLO)
            if self.keep_requests:
                self.request_rows.append((resp.request_id, -1, 0, 0, "denied", 0, 0, 0))
            return
        status = _STATUS_NAME[resp.status]
        if resp.status == ResponseStatus.OK:
            self.total["ok"] += 1
            if pr.arrival + resp.latency <= self.horizon_ns:
                self.total["ok_in_horizon"] += 1
        elif resp.status == ResponseStatus.DENIED:
            self.total["denied"] += 1
        else:
            self.total["timeout"] += 1
        self.total["arrivals"] += 1
        if pr.cold_start:
            self.total["cold"] += 1
            self.cold_by_model[pr.model_id] = self.cold_by_model.get(pr.model_id, 0) + 1
        if resp.status == ResponseStatus.OK and resp.latency > pr.slo:
            self.total["over_slo"] += 1     # must stay zero: hard invariant
        if pr.arrival < self.horizon_ns:
            b = self._bucket(pr.arrival)
            b["offered"] += 1
            if pr.cold_start:
                b["cold"] += 1
            if resp.status == ResponseStatus.OK:
                b["ok"] += 1
                b["latencies"].append(resp.latency)
            elif resp.status == ResponseStatus.DENIED:
                b["denied"] += 1
            else:
                b["timeout"] += 1
        if self.keep_requests:
            self.request_rows.append((
                pr.request_id, pr.model_id, pr.arrival, pr.deadline, status,
                resp.latency, pr.served_batch, int(pr.cold_start)))

    def on_action(self, info: Outstanding, result: ActionResult) -> None:
        if info.kind == ActionKind.INFER and result.status == ResultStatus.SUCCESS:
            self.infer_success += 1
            if result.device_duration > info.predicted_duration:
                self.underpredictions += 1
            elif result.device_duration < info.predicted_duration:
                self.overpredictions += 1
            if info.predicted_start < self.horizon_ns:
                b = self._bucket(info.predicted_start)
                b["batch_sum"] += info.batch_size
                b["infers"] += 1
        if self.keep_actions:
            self.action_rows.append((
                info.action_id, _KIND_NAME[info.kind], info.model_id, info.worker_id,
                info.gpu_index, info.batch_size, _RESULT_NAME[result.status],
                info.predicted_start, info.predicted_result_end, info.predicted_duration,
                result.start, result.end, result.device_duration))


def nearest_rank(sorted_values, p: float):
    """Nearest-rank percentile of an ascending list; None when empty."""
    n = len(sorted_values)
    if n == 0:
        return None
    k = math.ceil(p / 100.0 * n)
    return sorted_values[max(k, 1) - 1]


@dataclass
class SummaryReport:
    interval_ns: int
    intervals: list[dict]        # per-interval series, offered/goodput/etc.
    totals: dict
    satisfaction: float
    goodput_rps: float
    offered_rps: float
    latency_p50: int | None
    latency_p99: int | None
    latency_max: int | None
    mean_batch: float
    cold_starts: int
    underprediction_fraction: float
    overprediction_fraction: float

    def to_dict(self) -> dict:
        return {
            "interval_ns": self.interval_ns,
            "totals": self.totals,
            "satisfaction": self.satisfaction,
            "goodput_rps": self.goodput_rps,
            "offered_rps": self.offered_rps,
            "latency_p50_ns": self.latency_p50,
            "latency_p99_ns": self.latency_p99,
            "latency_max_ns": self.latency_max,
            "mean_batch": self.mean_batch,
            "cold_starts": self.cold_starts,
            "underprediction_fraction": self.underprediction_fraction,
            "overprediction_fraction": self.overprediction_fraction,
        }


def summarize(sink: TelemetrySink, horizon_ns: int) -> SummaryReport:
    rows = []
    all_lat = []
    for idx in sorted(sink.intervals):
        b = sink.intervals[idx]
        lat = sorted(b["latencies"])
        all_lat.extend(b["latencies"])
        seconds = sink.interval_ns / SECOND
        rows.append({
            "t_ns": idx * sink.interval_ns,
            "offered": b["offered"],
            "ok": b["ok"],
            "denied": b["denied"],
            "timeout": b["timeout"],
            "cold": b["cold"],
            "offered_rps": b["offered"] / seconds,
            "goodput_rps": b["ok"] / seconds,
            "satisfaction": (b["ok"] / b["offered"]) if b["offered"] else 1.0,
            "latency_p50_ns": nearest_rank(lat, 50) or 0,
            "latency_p99_ns": nearest_rank(lat, 99) or 0,
            "latency_max_ns": lat[-1] if lat else 0,
            "mean_batch": (b["batch_sum"] / b["infers"]) if b["infers"] else 0.0,
        })
    all_lat.sort()
    offered = sum(r["offered"] for r in rows)
    ok = sum(r["ok"] for r in rows)
    batch_sum = sum(b["batch_sum"] for b in sink.intervals.values())
    infers = sum(b["infers"] for b in sink.intervals.values())
    horizon_s = horizon_ns / SECOND
    n_pred = sink.infer_success
    return SummaryReport(
        interval_ns=sink.interval_ns,
        intervals=rows,
        totals=dict(sink.total),
        satisfaction=(ok / offered) if offered else 1.0,
        goodput_rps=ok / horizon_s,
        offered_rps=offered / horizon_s,
        latency_p50=nearest_rank(all_lat, 50),
        latency_p99=nearest_rank(all_lat, 99),
        latency_max=all_lat[-1] if all_lat else None,
        mean_batch=(batch_sum / infers) if infers else 0.0,
        cold_starts=sink.total["cold"],
        underprediction_fraction=(sink.underpredictions / n_pred) if n_pred else 0.0,
        overprediction_fraction=(sink.overpredictions / n_pred) if n_pred else 0.0,
    )


@dataclass
class RunResult:
    config: ExperimentConfig
    sink: TelemetrySink
    summary: SummaryReport
    worker_records: list
    catalog: profiles.ModelCatalog

    @property
    def hard_slo_violations(self) -> int:
        return self.sink.total["over_slo"]


# ---------------------------------------------------------------------------
# Controller runtime wiring


class _ControllerRuntime:
    """Glue between a Scheduler and its transports/telemetry."""

    def __init__(self, config: ExperimentConfig, catalog, loop):
        self.config = config
        self.loop = loop
        self.sink = TelemetrySink(config.interval_ns, config.keep_request_records,
                                  config.keep_action_records, config.horizon_ns)
        self.action_transports: dict[int, callable] = {}
        self.scheduler = Scheduler(catalog, config.scheduler, loop,
                                   self._send_action, self._send_response)
        self.scheduler.action_sink = self.sink.on_action
        self.clients: workload.ClientManager | None = None

    def _send_action(self, worker_id: int, action) -> None:
        self.action_transports[worker_id](action)

    def _send_response(self, pr, resp: InferenceResponse) -> None:
        self.sink.on_response(pr, resp)
        if self.clients is not None:
            self.clients.on_response(resp.request_id)

    def submit(self, req: InferenceRequest) -> None:
        self.scheduler.on_request(req)

    def on_result(self, result: ActionResult) -> None:
        self.scheduler.on_result(result)

    def on_handshake(self, hs: WorkerHandshake) -> None:
        self.scheduler.on_handshake(hs)


# ---------------------------------------------------------------------------
# Simulated mode


def _run_sim(config: ExperimentConfig, catalog) -> RunResult:
    loop = SimLoop()
    runtime = _ControllerRuntime(config, catalog, loop)
    delay = config.net_delay_ns
    workers = []
    for wid, spec in enumerate(config.workers):
        worker = EmulatedWorker(
            wid, catalog, loop,
            send_result=lambda r, _l=loop: _l.call_at(_l.now() + delay,
                                                      runtime.on_result, r),
            gpu_count=spec.gpu_count, pages_per_gpu=spec.pages_per_gpu,
            io_capacity=config.io_capacity, jitter=config.jitter,
            seed=config.seed, keep_records=config.keep_action_records)
        workers.append(worker)
        runtime.action_transports[wid] = (
            lambda a, _w=worker, _l=loop: _l.call_at(_l.now() + delay, _w.on_action, a))
        runtime.on_handshake(worker.handshake())
    clients = workload.ClientManager(config.groups, loop, runtime.submit,
                                     config.seed, config.horizon_ns)
    runtime.clients = clients
    clients.start()
    drain = config.drain_ns or (max((g.slo_ns for g in config.groups), default=SECOND)
                                + SECOND)
    loop.run_until(config.horizon_ns + drain)
    worker_records = [rec for w in workers for rec in w.records]
    summary = summarize(runtime.sink, config.horizon_ns)
    return RunResult(config, runtime.sink, summary, worker_records, catalog)


# ---------------------------------------------------------------------------
# Wall-clock mode


class _TcpWorkerServer(threading.Thread):
    """In-thread TCP worker speaking the wire protocol (one controller)."""

    def __init__(self, wid: int, catalog, spec: WorkerSpec, config: ExperimentConfig,
                 clock: WallClock):
        super().__init__(name=f"workersrv-{wid}", daemon=True)
        self.sock = socket.socket()
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(1)
        self.address = f"127.0.0.1:{self.sock.getsockname()[1]}"
        self.wid = wid
        self.catalog = catalog
        self.spec = spec
        self.config = config
        self.clock = clock
        self.loop = None
        self.worker = None

    def run(self):
        conn, _ = self.sock.accept()
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        wlock = threading.Lock()

        def send_result(result):
            with wlock:
                send_message(conn, result)

        self.loop = WallLoop(self.clock, name=f"worker-{self.wid}").start()
        self.worker = EmulatedWorker(
            self.wid, self.catalog, self.loop, send_result,
            gpu_count=self.spec.gpu_count, pages_per_gpu=self.spec.pages_per_gpu,
            io_capacity=self.config.io_capacity, jitter=self.config.jitter,
            seed=self.config.seed, keep_records=False)
        with wlock:
            send_message(conn, self.worker.handshake())
        try:
            while True:
                msg = recv_message(conn)
                if msg is None:
                    break
                self.loop.call_soon(self.worker.on_action, msg)
        finally:
            self.loop.stop(join=False)
            conn.close()


def _connect_tcp_worker(address: str, runtime: _ControllerRuntime, ctrl_loop):
    host, port = address.rsplit(":", 1)
    sock = socket.create_connection((host, int(port)), timeout=10)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    hs = recv_message(sock)
    if not isinstance(hs, WorkerHandshake):
        raise RuntimeError(f"worker at {address} did not handshake")
    runtime.on_handshake(hs)
    wlock = threading.Lock()

    def send_action(action):
        with wlock:
            send_message(sock, action)

    runtime.action_transports[hs.worker_id] = send_action

    def reader():
        while True:
            try:
                msg = recv_message(sock)
            except OSError:
                break
            if msg is None:
                break
            ctrl_loop.call_soon(runtime.on_result, msg)

    t = threading.Thread(target=reader, name=f"results-{hs.worker_id}", daemon=True)
    t.start()
    return sock


def _run_wall(config: ExperimentConfig, catalog) -> RunResult:
    clock = WallClock(config.epoch_ns or None)
    ctrl_loop = WallLoop(clock, name="controller").start()
    runtime = _ControllerRuntime(config, catalog, ctrl_loop)
    worker_loops = []
    servers = []
    socks = []
    workers = []
    if config.transport == "tcp":
        addresses = []
        for wid, spec in enumerate(config.workers):
            if spec.address:
                addresses.append(spec.address)
            else:
                srv = _TcpWorkerServer(wid, catalog, spec, config, clock)
                srv.start()
                servers.append(srv)
                addresses.append(srv.address)
        for addr in addresses:
            socks.append(_connect_tcp_worker(addr, runtime, ctrl_loop))
    else:
        for wid, spec in enumerate(config.workers):
            wloop = WallLoop(clock, name=f"worker-{wid}").start()
            worker_loops.append(wloop)
            worker = EmulatedWorker(
                wid, catalog, wloop,
                send_result=lambda r: ctrl_loop.call_soon(runtime.on_result, r),
                gpu_count=spec.gpu_count, pages_per_gpu=spec.pages_per_gpu,
                io_capacity=config.io_capacity, jitter=config.jitter,
                seed=config.seed, keep_records=False)
            workers.append(worker)
            runtime.action_transports[wid] = (
                lambda a, _wl=wloop, _w=worker: _wl.call_soon(_w.on_action, a))
            runtime.on_handshake(worker.handshake())
    clients = workload.ClientManager(config.groups, ctrl_loop, runtime.submit,
                                     config.seed, config.horizon_ns)
    runtime.clients = clients
    ctrl_loop.call_soon(clients.start)
    drain = config.drain_ns or (max((g.slo_ns for g in config.groups), default=SECOND)
                                + 2 * SECOND)
    deadline = clock.now() + config.horizon_ns + drain
    while clock.now() < deadline:
        time.sleep(0.05)
        if clock.now() > config.horizon_ns and not runtime.scheduler.live_requests:
            break
    ctrl_loop.stop()
    for wl in worker_loops:
        wl.stop(join=False)
    for s in socks:
        try:
            s.close()
        except OSError:
            pass
    worker_records = [rec for w in workers for rec in w.records]
    summary = summarize(runtime.sink, config.horizon_ns)
    return RunResult(config, runtime.sink, summary, worker_records, catalog)


def run_experiment(config: ExperimentConfig) -> RunResult:
    catalog = config.build_catalog()
    if config.mode == "sim":
        return _run_sim(config, catalog)
    if config.mode == "wall":
        return _run_wall(config, catalog)
    raise ValueError(f"unknown mode {config.mode!r}")


def run_worker_server(listen: str, catalog: profiles.ModelCatalog, gpu_count: int,
                      pages_per_gpu: int, jitter: JitterSpec, seed: int,
                      epoch_ns: int | None, telemetry_path: str = "",
                      io_capacity: int = 512 * 1024 * 1024,
                      ready_fd: int | None = None) -> None:
    """Blocking wall-clock worker: accept one controller connection, serve
    actions until EOF, then flush telemetry. Used by the `worker` CLI."""
    host, port = listen.rsplit(":", 1)
    lsock = socket.socket()
    lsock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    lsock.bind((host, int(port)))
    lsock.listen(1)
    if ready_fd is not None:
        os.write(ready_fd, f"{lsock.getsockname()[1]}\n".encode())
        os.close(ready_fd)
    conn, _ = lsock.accept()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    clock = WallClock(epoch_ns)
    loop = WallLoop(clock, name="worker").start()
    wlock = threading.Lock()

    def send_result(result):
        with wlock:
            send_message(conn, result)

    worker = EmulatedWorker(0, catalog, loop, send_result, gpu_count=gpu_count,
                            pages_per_gpu=pages_per_gpu, io_capacity=io_capacity,
                            jitter=jitter, seed=seed,
                            keep_records=bool(telemetry_path))
    with wlock:
        send_message(conn, worker.handshake())
    try:
        while True:
            msg = recv_message(conn)
            if msg is None:
                break
            loop.call_soon(worker.on_action, msg)
    finally:
        time.sleep(0.05)   # let in-flight emulated waits finish sending
        loop.stop(join=False)
        conn.close()
        lsock.close()
    if telemetry_path:
        with open(telemetry_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["action_id", "kind", "model_id", "gpu", "batch_size",
                        "status", "start_ns", "end_ns", "device_duration_ns"])
            for r in worker.records:
                w.writerow([r.action_id, r.kind, r.model_id, r.gpu_index,
                            r.batch_size, r.status, r.start, r.end,
                            r.device_duration])


# ---------------------------------------------------------------------------
# Output emission


def emit_outputs(result: RunResult, out_dir: str, plots: bool = False) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "requests.csv")
    with open(path, "w", newline="") as f:
        f.write(REQUEST_CSV_HEADER + "\n")
        w = csv.writer(f)
        w.writerows(result.sink.request_rows)
    written.append(path)

    path = os.path.join(out_dir, "actions.csv")
    with open(path, "w", newline="") as f:
        f.write(ACTION_CSV_HEADER + "\n")
        w = csv.writer(f)
        w.writerows(result.sink.action_rows)
    written.append(path)

    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        cols = ["t_ns", "offered", "ok", "denied", "timeout", "cold", "offered_rps",
                "goodput_rps", "satisfaction", "latency_p50_ns", "latency_p99_ns",
                "latency_max_ns", "mean_batch"]
        w.writerow(cols)
        for row in result.summary.intervals:
            w.writerow([row[c] for c in cols])
    written.append(path)

    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as f:
        json.dump(result.summary.to_dict(), f, indent=2)
    written.append(path)

    if plots:
        written.extend(_emit_plots(result, out_dir))
    return written


def _emit_plots(result: RunResult, out_dir: str) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    rows = result.summary.intervals
    if rows:
        fig, ax = plt.subplots(figsize=(7, 3))
        t = [r["t_ns"] / SECOND for r in rows]
        ax.plot(t, [r["offered_rps"] for r in rows], label="offered", lw=1)
        ax.plot(t, [r["goodput_rps"] for r in rows], label="goodput", lw=1)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("requests/s")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = os.path.join(out_dir, "goodput.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    lat = sorted(r[5] for r in result.sink.request_rows if r[4] == "ok")
    if lat:
        fig, ax = plt.subplots(figsize=(5, 3))
        ys = [i / len(lat) for i in range(1, len(lat) + 1)]
        ax.plot([v / MS for v in lat], ys, lw=1)
        ax.set_xlabel("latency (ms)")
        ax.set_ylabel("CDF")
        fig.tight_layout()
        path = os.path.join(out_dir, "latency_cdf.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    errors = [row[12] - row[9] for row in result.sink.action_rows
              if row[6] == "success" and row[1] == "infer"]
    if errors:
        over = sorted(-e for e in errors if e < 0)
        under = sorted(e for e in errors if e > 0)
        fig, ax = plt.subplots(figsize=(5, 3))
        for vals, label in ((over, "overprediction"), (under, "underprediction")):
            if vals:
                ys = [i / len(vals) for i in range(1, len(vals) + 1)]
                ax.plot([v / MS for v in vals], ys, lw=1, label=label)
        ax.set_xlabel("prediction error (ms)")
        ax.set_ylabel("CDF")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = os.path.join(out_dir, "prediction_error_cdf.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
