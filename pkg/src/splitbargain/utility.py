"""Computation cost models and the device/server utilities of the split game.

All functions accept a scalar or an array of split fractions ``alpha``
(share of model parameters held on the device) and broadcast over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import DeviceProfile, Scenario, ServerProfile

__all__ = [
    "SplitFraction",
    "UtilityVector",
    "device_compute_energy",
    "device_compute_time",
    "server_compute_energy",
    "server_compute_time",
    "device_utility",
    "server_utility",
    "server_utility_slope",
    "ideal_alpha_device",
    "ideal_alpha_server",
    "ideal_alphas",
    "ideal_point",
    "utility_matrix",
    "communication_delay",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SplitFraction:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def __float__(self):
        return float(self.alpha)


@dataclass(frozen=True)
class UtilityVector:
    device_utilities: tuple[float, ...]
    server_utility: float

    def as_array(self) -> np.ndarray:
        return np.array([*self.device_utilities, self.server_utility], dtype=float)

    @classmethod
    def from_array(cls, values) -> "UtilityVector":
        values = [float(v) for v in values]
        if len(values) < 2:
            raise ValueError("need at least one device utility and the server utility")
        return cls(tuple(values[:-1]), values[-1])

    @classmethod
    def zeros(cls, n_devices: int) -> "UtilityVector":
        return cls((0.0,) * n_devices, 0.0)

    def __len__(self):
        return len(self.device_utilities) + 1


def _alpha(alpha):
    if isinstance(alpha, SplitFraction):
        return alpha.alpha
    return np.asarray(alpha, dtype=float) if np.ndim(alpha) else float(alpha)


def device_compute_energy(alpha, device: DeviceProfile, kappa: float):
    a = _alpha(alpha)
    return kappa * a * device.num_samples * device.cycles_per_sample * device.cpu_freq_hz ** 2


def device_compute_time(alpha, device: DeviceProfile):
    a = _alpha(alpha)
    return a * device.cycles_per_sample * device.num_samples / device.cpu_freq_hz


def server_compute_energy(alpha, scenario: Scenario):
    a = _alpha(alpha)
    s = scenario.server
    per_sample = s.capacitance_coeff * s.cycles_per_sample * s.cpu_freq_hz ** 2
    total = 0.0
    for d in scenario.devices:
        total = total + d.num_samples * (1.0 - a) * per_sample
    return total


def server_compute_time(alpha, scenario: Scenario):
    a = _alpha(alpha)
    s = scenario.server
    d_max = max(d.num_samples for d in scenario.devices)
    return d_max * (1.0 - a) * s.cycles_per_sample / s.cpu_freq_hz


def communication_delay(expected_taus: Sequence[float], local_steps: int,
                        tau_mode: str = "max") -> float:
    """``I * E[tau]`` term of the server utility; the slowest uplink by default."""
    taus = np.asarray(expected_taus, dtype=float)
    if tau_mode == "max":
        tau = taus.max()
    elif tau_mode == "mean":
        tau = taus.mean()
    else:
        raise ValueError(f"unknown tau_mode {tau_mode!r}")
    return local_steps * float(tau)


def device_utility(alpha, device: DeviceProfile, server: ServerProfile,
                   expected_tau: float, kappa: float | None = None):
    """Reward minus compute and upload energy plus the privacy term."""
    a = _alpha(alpha)
    kappa = server.capacitance_coeff if kappa is None else kappa
    reward = device.payoff_rate * device.cpu_freq_hz
    upload = server.local_steps * expected_tau * device.tx_power_watt
    privacy = device.privacy_weight * np.log2(1.0 + a)
    return reward - (device_compute_energy(a, device, kappa) + upload) + privacy


def server_utility(alpha, scenario: Scenario, expected_taus: Sequence[float],
                   tau_mode: str = "max"):
    a = _alpha(alpha)
    s = scenario.server
    gamma = s.time_energy_balance
    payoffs = sum(d.payoff_rate * d.cpu_freq_hz for d in scenario.devices)
    slowest_device = np.max(
        np.stack(np.broadcast_arrays(*[device_compute_time(a, d) for d in scenario.devices])),
        axis=0)
    elapsed = (server_compute_time(a, scenario) + slowest_device
               + communication_delay(expected_taus, s.local_steps, tau_mode))
    out = s.budget - (payoffs + gamma * server_compute_energy(a, scenario) + (1.0 - gamma) * elapsed)
    return float(out) if np.ndim(out) == 0 else out


def server_utility_slope(scenario: Scenario) -> float:
    """Exact d U_S / d alpha.

    Both max terms are linear in alpha with fixed maximisers, so the slope is
    ``gamma * sum_k kappa D_k L_S f_S^2
    + (1 - gamma) * (max_k D_k L_S / f_S - max_k D_k L_k / f_k)``.
    """
    s = scenario.server
    gamma = s.time_energy_balance
    energy = sum(s.capacitance_coeff * d.num_samples * s.cycles_per_sample * s.cpu_freq_hz ** 2
                 for d in scenario.devices)
    server_time = max(d.num_samples for d in scenario.devices) * s.cycles_per_sample / s.cpu_freq_hz
    device_time = max(d.num_samples * d.cycles_per_sample / d.cpu_freq_hz for d in scenario.devices)
    return gamma * energy + (1.0 - gamma) * (server_time - device_time)


def ideal_alpha_device(device: DeviceProfile, kappa: float) -> float:
    """Maximiser of the device utility over [0, 1] (stationary point, clamped)."""
    denom = LN2 * kappa * device.cycles_per_sample * device.num_samples * device.cpu_freq_hz ** 2
    a = device.privacy_weight / denom - 1.0
    return float(min(1.0, max(0.0, a)))


def ideal_alpha_server(scenario: Scenario) -> float:
    # zero slope resolves to 0: the smaller device burden
    return 1.0 if server_utility_slope(scenario) > 0 else 0.0


def ideal_alphas(scenario: Scenario) -> np.ndarray:
    kappa = scenario.server.capacitance_coeff
    return np.array([ideal_alpha_device(d, kappa) for d in scenario.devices]
                    + [ideal_alpha_server(scenario)])


def utility_matrix(alpha, scenario: Scenario, expected_taus: Sequence[float],
                   tau_mode: str = "max") -> np.ndarray:
    """Rows are U_{d,1..N} then U_S, columns follow ``alpha``."""
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if len(expected_taus) != scenario.n_devices:
        raise ValueError("need one expected upload time per device")
    rows = [device_utility(a, d, scenario.server, tau)
            for d, tau in zip(scenario.devices, expected_taus)]
    rows.append(np.broadcast_to(server_utility(a, scenario, expected_taus, tau_mode), a.shape))
    return np.vstack(rows)


def ideal_point(scenario: Scenario, expected_taus: Sequence[float],
                tau_mode: str = "max") -> UtilityVector:
    """Each player's utility at its own ideal split."""
    if scenario.n_devices < 1:
        raise ValueError("ideal point needs at least one device")
    alphas = ideal_alphas(scenario)
    dev = tuple(
        float(device_utility(a, d, scenario.server, tau))
        for a, d, tau in zip(alphas[:-1], scenario.devices, expected_taus)
    )
    return UtilityVector(dev, float(server_utility(alphas[-1], scenario, expected_taus, tau_mode)))
