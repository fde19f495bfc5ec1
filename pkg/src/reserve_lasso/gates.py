"""Inclusion gates for pruning delinquent candidate models.

A candidate forecast passes if, for each of six aggregates (last 2/5/10
accident periods, first 2/5/10 future payment periods), its ratio to the
primary model's aggregate lies inside the gate's bounds. Bounds are
inclusive. Gates can be widened by a common factor for sensitivity runs or
for the provisional censoring inside the bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass

from .forecast import ModelForecast

GATE_IDS = ("AQ2", "AQ5", "AQ10", "PQ2", "PQ5", "PQ10")

_DEFAULT_BOUNDS = {
    "AQ2": (0.75, 1.33),
    "AQ5": (0.80, 1.25),
    "AQ10": (0.83, 1.20),
    "PQ2": (0.91, 1.10),
    "PQ5": (0.87, 1.15),
    "PQ10": (0.83, 1.20),
}


@dataclass(frozen=True)
class Gate:
    aggregate_id: str
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if self.aggregate_id not in GATE_IDS:
            raise ValueError(f"unknown aggregate {self.aggregate_id!r}")
        if not (0 < self.lower <= 1 <= self.upper):
            raise ValueError(
                f"gate {self.aggregate_id} must satisfy 0 < lower <= 1 <= upper, "
                f"got [{self.lower}, {self.upper}]"
            )


@dataclass(frozen=True)
class GateSet:
    """Six gates, one per aggregate, keyed in canonical order."""

    gates: tuple[Gate, ...]

    def __post_init__(self) -> None:
        ids = tuple(g.aggregate_id for g in self.gates)
        if ids != GATE_IDS:
            raise ValueError(f"gates must cover {GATE_IDS} in order, got {ids}")

    def __iter__(self):
        return iter(self.gates)

    def __getitem__(self, aggregate_id: str) -> Gate:
        for g in self.gates:
            if g.aggregate_id == aggregate_id:
                return g
        raise KeyError(aggregate_id)

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {g.aggregate_id: (g.lower, g.upper) for g in self.gates}


@dataclass(frozen=True)
class GateResult:
    """Outcome of one candidate-vs-primary comparison."""

    passed: bool
    ratios: dict[str, float]
    failed_gates: tuple[str, ...]


def default_gates() -> GateSet:
    """The stock gate bounds, as ratios of the primary forecast."""
    return GateSet(tuple(Gate(k, *_DEFAULT_BOUNDS[k]) for k in GATE_IDS))


def gates_from_dict(bounds: dict[str, tuple[float, float]]) -> GateSet:
    missing = set(GATE_IDS) - set(bounds)
    if missing:
        raise ValueError(f"gate bounds missing for {sorted(missing)}")
    return GateSet(tuple(Gate(k, float(bounds[k][0]), float(bounds[k][1])) for k in GATE_IDS))


def widen(gate_set: GateSet, factor: float) -> GateSet:
    """Scale every upper bound up and lower bound down by the factor.

    Bounds are rounded to two decimals after scaling; a factor of 1 leaves
    the gates unchanged.
    """
    if factor < 1:
        raise ValueError("widening factor must be >= 1")
    return GateSet(
        tuple(
            Gate(g.aggregate_id, round(g.lower / factor, 2), round(g.upper * factor, 2))
            for g in gate_set
        )
    )


def gate_check(candidate: ModelForecast, primary: ModelForecast, gate_set: GateSet) -> GateResult:
    """Compare a candidate's aggregates to the primary's against the gates.

    A delinquent candidate, or a non-positive primary aggregate, fails the
    affected gates outright.
    """
    ratios: dict[str, float] = {}
    failed: list[str] = []
    for g in gate_set:
        span = int(g.aggregate_id[2:])
        cand = candidate.aq_sums[span] if g.aggregate_id.startswith("AQ") else candidate.pq_sums[span]
        prim = primary.aq_sums[span] if g.aggregate_id.startswith("AQ") else primary.pq_sums[span]
        if prim <= 0 or candidate.delinquent:
            ratios[g.aggregate_id] = float("inf")
            failed.append(g.aggregate_id)
            continue
        ratio = cand / prim
        ratios[g.aggregate_id] = ratio
        if not (g.lower <= ratio <= g.upper):
            failed.append(g.aggregate_id)
    return GateResult(passed=not failed, ratios=ratios, failed_gates=tuple(failed))
