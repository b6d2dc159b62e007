"""Sum-of-utilities sweep over candidate cut layers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bargaining import cumulative_fractions
from .scenario import Scenario
from .utility import utility_matrix

__all__ = ["SweepResult", "sweep_utilities"]


@dataclass
class SweepResult:
    cut_index: list[int]
    alpha: list[float]
    device_utility_sum: list[float]
    server_utility: list[float]
    metadata: dict = field(default_factory=dict)

    @property
    def total(self) -> list[float]:
        return [d + s for d, s in zip(self.device_utility_sum, self.server_utility)]

    @property
    def best_cut(self) -> int:
        return self.cut_index[int(np.argmax(self.total))]

    def __len__(self):
        return len(self.cut_index)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cut_index", "alpha", "device_utility_sum", "server_utility", "sum_utility"])
            for row in zip(self.cut_index, self.alpha, self.device_utility_sum,
                           self.server_utility, self.total):
                w.writerow([row[0], *(f"{v:.17g}" for v in row[1:])])


def sweep_utilities(scenario: Scenario, layer_param_counts: Sequence[int],
                    expected_taus: Sequence[float], tau_mode: str = "max") -> SweepResult:
    """Evaluate every player's utility at each block's cumulative parameter share."""
    frac = cumulative_fractions(layer_param_counts)
    alphas = frac[:-1] if frac.size > 1 else frac
    u = utility_matrix(alphas, scenario, expected_taus, tau_mode)
    return SweepResult(
        cut_index=list(range(len(alphas))),
        alpha=[float(a) for a in alphas],
        device_utility_sum=[float(v) for v in u[:-1].sum(axis=0)],
        server_utility=[float(v) for v in u[-1]],
        metadata={"n_devices": scenario.n_devices, "seed": scenario.rng_seed},
    )
