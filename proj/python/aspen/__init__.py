"""Multi-channel sharded ledger simulator."""

import json

from ._aspen import (
    InvalidScenario,
    InvariantViolation,
    Scenario,
    Simulator,
    StatsError,
    StoreError,
    format_table,
    percentile,
    run_scenario,
    summarize_metrics,
    verify_store,
)

__all__ = [
    "InvalidScenario",
    "InvariantViolation",
    "Scenario",
    "Simulator",
    "StatsError",
    "StoreError",
    "format_table",
    "percentile",
    "records",
    "run_scenario",
    "simulate",
    "summarize_metrics",
    "verify_store",
]


def records(sim):
    """Metrics records of a finished run as dicts."""
    return [json.loads(line) for line in sim.metrics]


def simulate(path, seed):
    """Loads a scenario file, runs it and returns the finished simulator."""
    sim = Simulator(Scenario.load(str(path), seed))
    sim.run()
    return sim
