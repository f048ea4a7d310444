"""Command-line entry points.

    sloserve run --config exp.json [--seed N] [--mode sim|wall] [--out DIR] [--plots]
    sloserve worker --listen HOST:PORT --catalog FILE [--gpus N] [--pages N]
                    [--clock sim|wall] [--jitter SPEC] [--seed N]
                    [--epoch-ns N] [--telemetry FILE]
    sloserve summarize --logs DIR [--interval-ns N]
    sloserve plot --report DIR
    sloserve make-trace --out FILE --workloads N --minutes N [--seed N]

`run` exits nonzero if any Ok response exceeded its SLO.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import harness, profiles, workload
from .timebase import SECOND
from .worker import JitterSpec


def _cmd_run(args) -> int:
    config = harness.ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.mode:
        config.mode = args.mode
    result = harness.run_experiment(config)
    s = result.summary
    print(f"{config.name}: offered {s.offered_rps:.1f} r/s, goodput {s.goodput_rps:.1f} r/s, "
          f"satisfaction {s.satisfaction:.4f}, cold starts {s.cold_starts}")
    if s.latency_max is not None:
        print(f"latency p50/p99/max: {s.latency_p50 / 1e6:.2f} / {s.latency_p99 / 1e6:.2f} / "
              f"{s.latency_max / 1e6:.2f} ms")
    if args.out:
        written = harness.emit_outputs(result, args.out, plots=args.plots)
        for path in written:
            print(f"wrote {path}")
    if result.hard_slo_violations:
        print(f"HARD-SLO VIOLATION: {result.hard_slo_violations} Ok responses over SLO",
              file=sys.stderr)
        return 1
    return 0


def _cmd_worker(args) -> int:
    if args.clock == "sim":
        print("worker: simulated clock mode only makes sense in-process; "
              "use `run` with mode=sim", file=sys.stderr)
        return 2
    catalog = profiles.load_catalog(args.catalog)
    harness.run_worker_server(
        args.listen, catalog, args.gpus, args.pages,
        JitterSpec.parse(args.jitter), args.seed, args.epoch_ns,
        telemetry_path=args.telemetry,
        ready_fd=args.ready_fd if args.ready_fd >= 0 else None)
    return 0


def _cmd_summarize(args) -> int:
    path = f"{args.logs}/requests.csv"
    sink = harness.TelemetrySink(args.interval_ns, keep_requests=False,
                                 keep_actions=False, horizon_ns=1 << 62)
    horizon = 0
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            arrival = int(row["arrival_ns"])
            horizon = max(horizon, arrival)
            b = sink._bucket(arrival)
            b["offered"] += 1
            status = row["status"]
            if status == "ok":
                b["ok"] += 1
                b["latencies"].append(int(row["latency_ns"]))
                sink.total["ok"] += 1
            elif status == "denied":
                b["denied"] += 1
                sink.total["denied"] += 1
            else:
                b["timeout"] += 1
                sink.total["timeout"] += 1
            if int(row["cold_start"]):
                b["cold"] += 1
                sink.total["cold"] += 1
    report = harness.summarize(sink, max(horizon, 1))
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_plot(args) -> int:
    # Re-emit plot artifacts from a previously written output directory.
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(f"{args.report}/summary.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        print("empty summary", file=sys.stderr)
        return 1
    t = [int(r["t_ns"]) / SECOND for r in rows]
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, [float(r["offered_rps"]) for r in rows], label="offered", lw=1)
    ax.plot(t, [float(r["goodput_rps"]) for r in rows], label="goodput", lw=1)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("requests/s")
    ax.legend(frameon=False)
    fig.tight_layout()
    out = f"{args.report}/goodput.svg"
    fig.savefig(out)
    print(f"wrote {out}")
    return 0


def _cmd_make_trace(args) -> int:
    rows = workload.gen_synthetic_trace(args.workloads, args.minutes, args.seed,
                                        base_rpm=args.base_rpm)
    workload.save_trace_csv(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sloserve")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["sim", "wall"], default=None)
    p.add_argument("--out", default="")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("worker", help="serve a wall-clock emulated worker over TCP")
    p.add_argument("--listen", required=True, help="host:port (port 0 for ephemeral)")
    p.add_argument("--catalog", required=True)
    p.add_argument("--gpus", type=int, default=1)
    p.add_argument("--pages", type=int, default=500)
    p.add_argument("--clock", choices=["sim", "wall"], default="wall")
    p.add_argument("--jitter", default="none", help='e.g. "lognormal:0.05"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epoch-ns", type=int, default=None,
                   help="shared wall-clock epoch (time_ns); defaults to now")
    p.add_argument("--telemetry", default="")
    p.add_argument("--ready-fd", type=int, default=-1, help=argparse.SUPPRESS)
    p.set_defaults(fn=_cmd_worker)

    p = sub.add_parser("summarize", help="recompute a summary from logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--interval-ns", type=int, default=SECOND)
    p.set_defaults(fn=_cmd_summarize)

    p = sub.add_parser("plot", help="render plots from an output directory")
    p.add_argument("--report", required=True)
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("make-trace", help="generate a synthetic invocation trace")
    p.add_argument("--out", required=True)
    p.add_argument("--workloads", type=int, default=200)
    p.add_argument("--minutes", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-rpm", type=float, default=60.0)
    p.set_defaults(fn=_cmd_make_trace)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
