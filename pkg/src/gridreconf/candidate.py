"""Genome of the optimisation problem and the box it lives in."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_model import NetworkModel


@dataclass(frozen=True)
class CandidateSolution:
    """``[phi_1..phi_n, n_tap, n_conf]``; phases in rad, ``n_conf`` 1-based."""

    phases: tuple[float, ...]
    n_tap: int = 0
    n_conf: int = 1

    def genes(self) -> tuple:
        return (*self.phases, self.n_tap, self.n_conf)

    def to_dict(self) -> dict:
        return {"phases": [float(p) for p in self.phases], "n_tap": int(self.n_tap), "n_conf": int(self.n_conf)}


@dataclass(frozen=True)
class Domain:
    """Parameter box: real phase ranges, ordered tap values, configuration count."""

    phase_lo: tuple[float, ...]
    phase_hi: tuple[float, ...]
    taps: tuple[int, ...]
    n_configs: int

    @classmethod
    def from_model(cls, model: NetworkModel, n_configs: int) -> "Domain":
        gens = model.controllable_generators
        return cls(
            tuple(g.phase_min for g in gens),
            tuple(g.phase_max for g in gens),
            tuple(sorted(model.tap_set)),
            n_configs,
        )

    @property
    def n_phases(self) -> int:
        return len(self.phase_lo)

    def contains(self, sol: CandidateSolution) -> bool:
        if len(sol.phases) != self.n_phases:
            return False
        lo, hi = np.asarray(self.phase_lo), np.asarray(self.phase_hi)
        ph = np.asarray(sol.phases, dtype=float)
        return bool(np.all(ph >= lo) and np.all(ph <= hi)
                    and sol.n_tap in self.taps and 1 <= sol.n_conf <= self.n_configs)

    def sample_phases(self, rng: np.random.Generator) -> tuple[float, ...]:
        return tuple(float(x) for x in rng.uniform(self.phase_lo, self.phase_hi)) if self.n_phases else ()
