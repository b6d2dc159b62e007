"""Uplink channel, rate, latency and energy model.

Rayleigh fading: the power gain is ``g * d**(-n)`` with ``g ~ Exp(1)``.
Downlink gradient transfer is free and not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import DeviceProfile, Scenario, ServerProfile

__all__ = [
    "ChannelSample",
    "ExpectedUploadTime",
    "DegenerateGeometryError",
    "InfiniteLatencyError",
    "sample_channel",
    "achievable_rate",
    "upload_time",
    "upload_energy",
    "expected_upload_time",
    "expected_upload_times",
]

DEFAULT_MC_SAMPLES = 100_000
DEFAULT_MIN_GAIN = 1e-12


class DegenerateGeometryError(ValueError):
    pass


class InfiniteLatencyError(ArithmeticError):
    """Upload attempted over a zero-rate link."""


@dataclass(frozen=True)
class ChannelSample:
    gain: float

    def __post_init__(self):
        if not self.gain >= 0:
            raise ValueError(f"channel gain must be >= 0, got {self.gain}")


@dataclass(frozen=True)
class ExpectedUploadTime:
    mean: float
    stderr: float
    n_samples: int

    def __float__(self):
        return self.mean


def _distance(device: DeviceProfile, scenario: Scenario) -> float:
    d = scenario.distance_m(device)
    if d <= 0:
        raise DegenerateGeometryError(f"device {device.id} sits on the server")
    return d


def sample_channel(device: DeviceProfile, scenario: Scenario, rng: np.random.Generator,
                   fading: bool = True) -> ChannelSample:
    """One channel realisation; ``fading=False`` returns the bare path loss."""
    d = _distance(device, scenario)
    g = rng.exponential(1.0) if fading else 1.0
    return ChannelSample(float(g) * d ** (-scenario.pathloss_exponent))


def achievable_rate(channel: ChannelSample | float, device: DeviceProfile,
                    server: ServerProfile) -> float:
    h = channel.gain if isinstance(channel, ChannelSample) else float(channel)
    w = server.bandwidth_hz
    snr = device.tx_power_watt * h / (server.noise_psd_watt_per_hz * w)
    return w * math.log2(1.0 + snr)


def upload_time(payload_bits: float, rate: float) -> float:
    if payload_bits < 0:
        raise ValueError("payload_bits must be >= 0")
    if rate <= 0:
        raise InfiniteLatencyError("zero uplink rate: transmission never completes")
    return payload_bits / rate


def upload_energy(tau: float, device: DeviceProfile) -> float:
    if tau < 0:
        raise ValueError("tau must be >= 0")
    return tau * device.tx_power_watt


def _rate_array(gain: np.ndarray, device: DeviceProfile, server: ServerProfile) -> np.ndarray:
    w = server.bandwidth_hz
    snr = device.tx_power_watt * gain / (server.noise_psd_watt_per_hz * w)
    return w * np.log2(1.0 + snr)


def expected_upload_time(device: DeviceProfile, scenario: Scenario,
                         n_samples: int = DEFAULT_MC_SAMPLES,
                         rng: np.random.Generator | None = None,
                         fading: bool = True,
                         min_gain: float = DEFAULT_MIN_GAIN) -> ExpectedUploadTime:
    """Monte Carlo estimate of E[tau_k] over the fading distribution.

    E[1/log2(1+SNR)] has a heavy tail as the gain goes to zero, so draws with
    gain below ``min_gain`` are rejected and redrawn.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    d = _distance(device, scenario)
    path = d ** (-scenario.pathloss_exponent)
    if fading:
        gain = rng.exponential(1.0, size=n_samples) * path
        low = gain < min_gain
        while low.any():
            gain[low] = rng.exponential(1.0, size=int(low.sum())) * path
            low = gain < min_gain
    else:
        gain = np.full(n_samples, path)
    rate = _rate_array(gain, device, scenario.server)
    if not (rate > 0).all():
        raise InfiniteLatencyError(f"device {device.id}: zero-rate draw after truncation")
    tau = scenario.server.payload_bits_per_step / rate
    mean = float(tau.mean())
    stderr = float(tau.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return ExpectedUploadTime(mean, stderr, n_samples)


def expected_upload_times(scenario: Scenario, n_samples: int = DEFAULT_MC_SAMPLES,
                          seed: int | None = None, **kwargs) -> list[float]:
    """E[tau_k] for every device, each from its own child stream of ``seed``."""
    seed = scenario.rng_seed if seed is None else seed
    streams = np.random.SeedSequence([int(seed), 0x7A0]).spawn(scenario.n_devices)
    return [
        expected_upload_time(dev, scenario, n_samples, np.random.default_rng(ss), **kwargs).mean
        for dev, ss in zip(scenario.devices, streams)
    ]
