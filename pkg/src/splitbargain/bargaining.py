"""Kalai-Smorodinsky bargaining over the split fraction.

The solution is the largest ``beta`` such that the point
``phi + beta * (g - phi)`` is weakly dominated by the utility vector at some
common ``alpha``. Feasibility for a fixed ``beta`` reduces to intersecting one
interval per player: device utilities are concave in ``alpha`` (super-level
sets are intervals around the ideal split) and the server utility is affine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scenario import Scenario
from .utility import (
    UtilityVector,
    device_utility,
    ideal_alpha_device,
    ideal_point,
    server_utility,
    utility_matrix,
)

__all__ = [
    "BargainingProblem",
    "BargainingOutcome",
    "BargainingDomainError",
    "BargainingSolverError",
    "make_problem",
    "feasible_alpha_interval_device",
    "feasible_alpha_interval_server",
    "feasibility_test",
    "solve_ksbs",
    "brute_force_ksbs",
    "cut_layer_from_alpha",
    "cumulative_fractions",
]

Interval = tuple[float, float]
ALPHA_RESOLUTION = 1e-9


class BargainingDomainError(ValueError):
    pass


class BargainingSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class BargainingProblem:
    scenario: Scenario
    ideal: UtilityVector
    expected_taus: tuple[float, ...]
    disagreement: UtilityVector | None = None
    tolerance: float = 1e-6
    tau_mode: str = "max"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        n = self.scenario.n_devices
        if len(self.expected_taus) != n or len(self.ideal) != n + 1:
            raise ValueError("ideal point and expected_taus must match the device count")
        if self.disagreement is None:
            object.__setattr__(self, "disagreement", UtilityVector.zeros(n))
        elif len(self.disagreement) != n + 1:
            raise ValueError("disagreement point has the wrong length")
        if np.any(self.disagreement.as_array() > self.ideal.as_array()):
            raise BargainingDomainError("disagreement point must not exceed the ideal point")

    @property
    def n_players(self) -> int:
        return self.scenario.n_devices + 1

    def targets(self, beta: float) -> np.ndarray:
        phi = self.disagreement.as_array()
        return phi + beta * (self.ideal.as_array() - phi)

    def utilities(self, alpha) -> np.ndarray:
        return utility_matrix(alpha, self.scenario, self.expected_taus, self.tau_mode)

    def ratios(self, alpha) -> np.ndarray:
        """Normalised gains ``(U_i - phi_i) / (g_i - phi_i)`` per player and alpha."""
        phi = self.disagreement.as_array()[:, None]
        span = self.ideal.as_array()[:, None] - phi
        return (self.utilities(alpha) - phi) / span


@dataclass
class BargainingOutcome:
    beta_star: float
    alpha_star: float
    utilities_at_alpha: UtilityVector
    iterations: int
    trace: list[tuple[float, bool, float | None]] = field(default_factory=list)

    def min_ratio(self, problem: BargainingProblem) -> float:
        return float(problem.ratios(self.alpha_star).min())


def make_problem(scenario: Scenario, expected_taus: Sequence[float], tolerance: float = 1e-6,
                 disagreement: UtilityVector | None = None,
                 tau_mode: str = "max") -> BargainingProblem:
    ideal = ideal_point(scenario, expected_taus, tau_mode)
    return BargainingProblem(scenario, ideal, tuple(float(t) for t in expected_taus),
                             disagreement, tolerance, tau_mode)


def _bisect_level(f, target: float, good: float, bad: float, resolution: float) -> float:
    # f(good) >= target > f(bad); returns a point still satisfying f >= target
    while abs(bad - good) > resolution:
        mid = 0.5 * (good + bad)
        if f(mid) >= target:
            good = mid
        else:
            bad = mid
    return good


def feasible_alpha_interval_device(k: int, target: float, problem: BargainingProblem,
                                   resolution: float = ALPHA_RESOLUTION) -> Interval | None:
    """Closed interval of splits where device ``k`` reaches ``target`` (or None)."""
    scen = problem.scenario
    dev = scen.devices[k]
    tau = problem.expected_taus[k]

    def u(a):
        return float(device_utility(a, dev, scen.server, tau))

    peak = ideal_alpha_device(dev, scen.server.capacitance_coeff)
    if u(peak) < target:
        return None
    lo = 0.0 if u(0.0) >= target else _bisect_level(u, target, peak, 0.0, resolution)
    hi = 1.0 if u(1.0) >= target else _bisect_level(u, target, peak, 1.0, resolution)
    return (lo, hi)


def feasible_alpha_interval_server(target: float, problem: BargainingProblem) -> Interval | None:
    scen = problem.scenario
    u0 = float(server_utility(0.0, scen, problem.expected_taus, problem.tau_mode))
    u1 = float(server_utility(1.0, scen, problem.expected_taus, problem.tau_mode))
    slope = u1 - u0
    if slope == 0.0:
        return (0.0, 1.0) if u0 >= target else None
    if slope > 0:
        if u1 < target:
            return None
        if u0 >= target:
            return (0.0, 1.0)
        return (min(1.0, (target - u0) / slope), 1.0)
    if u0 < target:
        return None
    if u1 >= target:
        return (0.0, 1.0)
    return (0.0, max(0.0, (target - u0) / slope))


def feasibility_test(beta: float, problem: BargainingProblem) -> tuple[bool, float | None]:
    """Is there one split at which every player reaches its share of the ideal gain?

    Returns the feasibility flag and, when feasible, the midpoint of the
    common interval as witness.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    targets = problem.targets(beta)
    lo, hi = 0.0, 1.0
    for k in range(problem.scenario.n_devices):
        iv = feasible_alpha_interval_device(k, targets[k], problem)
        if iv is None:
            return False, None
        lo, hi = max(lo, iv[0]), min(hi, iv[1])
        if lo > hi:
            return False, None
    iv = feasible_alpha_interval_server(targets[-1], problem)
    if iv is None:
        return False, None
    lo, hi = max(lo, iv[0]), min(hi, iv[1])
    if lo > hi:
        return False, None
    return True, 0.5 * (lo + hi)


def _outcome(problem, beta, alpha, iterations, trace) -> BargainingOutcome:
    utils = UtilityVector.from_array(problem.utilities(alpha)[:, 0])
    return BargainingOutcome(float(beta), float(alpha), utils, iterations, trace)


def solve_ksbs(problem: BargainingProblem, max_iterations: int | None = None) -> BargainingOutcome:
    """Bisection on beta with an interval-intersection feasibility oracle.

    Runs until ``beta_max - beta_min < tolerance`` and returns the last
    feasible beta with its witness split.
    """
    gap = problem.ideal.as_array() - problem.disagreement.as_array()
    if np.any(gap <= 0):
        bad = [i for i, g in enumerate(gap) if g <= 0]
        raise BargainingDomainError(f"ideal gain must be positive for every player; "
                                    f"non-positive for players {bad}")
    ok, witness = feasibility_test(0.0, problem)
    if not ok:
        raise BargainingSolverError("the disagreement point itself is infeasible")
    ok_top, witness_top = feasibility_test(1.0, problem)
    if ok_top:
        return _outcome(problem, 1.0, witness_top, 0, [(1.0, True, witness_top)])

    eps = problem.tolerance
    if max_iterations is None:
        max_iterations = math.ceil(math.log2(1.0 / eps)) + 1
    beta_min, beta_max = 0.0, 1.0
    best_alpha = witness
    trace = []
    while beta_max - beta_min >= eps and len(trace) < max_iterations:
        beta = 0.5 * (beta_min + beta_max)
        ok, w = feasibility_test(beta, problem)
        trace.append((beta, ok, w))
        if ok:
            beta_min, best_alpha = beta, w
        else:
            beta_max = beta
    return _outcome(problem, beta_min, best_alpha, len(trace), trace)


def brute_force_ksbs(problem: BargainingProblem, grid_resolution: float = 1e-4) -> BargainingOutcome:
    """Exhaustive check: maximise the smallest normalised gain over an alpha grid."""
    if grid_resolution > 1e-3:
        raise ValueError("grid_resolution must be <= 1e-3")
    n = int(round(1.0 / grid_resolution))
    grid = np.linspace(0.0, 1.0, n + 1)
    worst = problem.ratios(grid).min(axis=0)
    i = int(np.argmax(worst))
    return _outcome(problem, worst[i], grid[i], n + 1, [])


def cumulative_fractions(layer_param_counts: Sequence[int]) -> np.ndarray:
    counts = np.asarray(layer_param_counts, dtype=float)
    if counts.size == 0 or counts.sum() <= 0:
        raise ValueError("layer_param_counts must be non-empty with a positive total")
    return np.cumsum(counts) / counts.sum()


def cut_layer_from_alpha(alpha: float, layer_param_counts: Sequence[int]) -> int:
    """Block index whose cumulative parameter share is closest to ``alpha``.

    ``layer_param_counts`` lists every layer including the classifier, which
    always stays on the server, so candidate cuts stop one short of the end.
    Ties go to the shallower cut.
    """
    frac = cumulative_fractions(layer_param_counts)
    candidates = frac[:-1] if frac.size > 1 else frac
    return int(np.argmin(np.abs(candidates - alpha)))
