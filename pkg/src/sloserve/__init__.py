"""SLO-aware model serving testbed: a centralized proactive scheduler,
latency-emulated workers behind an action protocol with execution windows,
and an experiment harness, runnable fully simulated or in wall-clock time."""

__version__ = "0.1.0"
