"""Run configuration, named random substreams, and gate/spec file loading.

All randomness in a run funnels through one root seed: each consumer
(simulation, cross-validation folds, each bootstrap replication, the
process-error simulation, the benchmark bootstrap) derives its generator
from the root seed plus a fixed stream id, so results do not depend on
execution order or worker count.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .bma import FLAVORS
from .gates import GateSet, default_gates, gates_from_dict
from .simulate import PRESET_NAMES, SimulationSpec

STREAM_SIM = 1
STREAM_CV = 2
STREAM_BOOT = 3
STREAM_PROCESS = 4
STREAM_GLM = 5

ENV_WORKERS = "RESERVE_LASSO_WORKERS"


def substream(seed: int, *key: int) -> np.random.SeedSequence:
    """Seed sequence for a named consumer of the root seed."""
    return np.random.SeedSequence([int(seed), *map(int, key)])


def stream_int(seed: int, *key: int) -> int:
    """A derived integer seed, for consumers that persist their seed."""
    return int(substream(seed, *key).generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    """Reproducible description of one batch run."""

    dataset: Optional[str] = None
    spec_file: Optional[str] = None
    triangle_file: Optional[str] = None
    side: int = 40
    seed: int = 1
    q_count: int = 100
    path_ratio: float = 1e-4
    folds: int = 8
    epsilon: float = 0.0005
    gates_file: Optional[str] = None
    widen_factor: Optional[float] = None
    bootstrap_b: int = 200
    flavors: tuple[str, ...] = FLAVORS
    process_sims: int = 20000
    benchmark: bool = False
    out_dir: str = "run_output"
    workers: Optional[int] = None
    emit_primary_forecast: bool = True

    def __post_init__(self) -> None:
        sources = [s for s in (self.dataset, self.spec_file, self.triangle_file) if s]
        if len(sources) != 1:
            raise ValueError("exactly one of dataset, spec_file, triangle_file is required")
        if self.dataset is not None and self.dataset not in PRESET_NAMES:
            raise ValueError(f"unknown dataset {self.dataset!r}; options: {PRESET_NAMES}")
        if self.side < 4:
            raise ValueError("side must be at least 4")
        if self.q_count < 2:
            raise ValueError("q_count must be at least 2")
        if not 0 < self.path_ratio < 1:
            raise ValueError("path_ratio must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.bootstrap_b < 0:
            raise ValueError("bootstrap_b must be non-negative")
        if self.widen_factor is not None and self.widen_factor < 1:
            raise ValueError("widen_factor must be >= 1")
        unknown = set(self.flavors) - set(FLAVORS)
        if unknown:
            raise ValueError(f"unknown flavors {sorted(unknown)}; options: {FLAVORS}")
        if self.process_sims < 1:
            raise ValueError("process_sims must be positive")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be positive")

    def resolve_gates(self) -> GateSet:
        if self.gates_file is None:
            return default_gates()
        with open(self.gates_file) as fh:
            payload = json.load(fh)
        return gates_from_dict({k: tuple(v) for k, v in payload.items()})

    def resolve_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        env = os.environ.get(ENV_WORKERS)
        if env:
            return max(1, int(env))
        return max(1, os.cpu_count() or 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flavors"] = list(self.flavors)
        return d


def spec_from_file(path: str) -> SimulationSpec:
    """Load a simulation spec from JSON (field names match SimulationSpec)."""
    with open(path) as fh:
        payload = json.load(fh)
    step = payload.get("step_interaction")
    return SimulationSpec(
        I=int(payload["I"]),
        base_level=float(payload["base_level"]),
        row_effects=tuple(map(float, payload["row_effects"])),
        col_effects=tuple(map(float, payload["col_effects"])),
        si_profile=tuple(map(float, payload["si_profile"])),
        si_dq_taper=bool(payload.get("si_dq_taper", False)),
        step_interaction=None if step is None else (int(step[0]), int(step[1]), float(step[2])),
        dispersion=float(payload.get("dispersion", 0.09)),
    )


def spec_to_dict(spec: SimulationSpec) -> dict:
    return {
        "I": spec.I,
        "base_level": spec.base_level,
        "row_effects": list(spec.row_effects),
        "col_effects": list(spec.col_effects),
        "si_profile": list(spec.si_profile),
        "si_dq_taper": spec.si_dq_taper,
        "step_interaction": None if spec.step_interaction is None else list(spec.step_interaction),
        "dispersion": spec.dispersion,
    }
