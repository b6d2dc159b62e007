"""Experiment scenarios: device/server profiles, random draws and config files.

A scenario is drawn once from a :class:`ScenarioConfig` and is immutable
afterwards. Config files use an INI layout with three sections::

    [devices]
    n_devices = 10
    cpu_freq_ghz_range = 1.5, 2.4
    privacy_weight_range = 25, 30
    payoff_rate_range = 1e-8, 1e-7
    tx_power_mw = 100
    cycles_per_sample_device = 1000

    [server]
    server_cpu_freq_ghz = 4
    cycles_per_sample_server = 1000
    bandwidth_mhz = 10
    noise_dbm_per_hz = -174
    kappa = 2e-28
    budget = 1215
    gamma = 0.01
    local_steps = 25

    [area]
    area_side_m = 50
    pathloss_exponent = 4
    seed = 0

Every key is optional; missing keys fall back to the defaults of
:class:`ScenarioConfig`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DeviceProfile",
    "ServerProfile",
    "Scenario",
    "ScenarioConfig",
    "ScenarioError",
    "CALIBRATED_COMPUTE_SCALE",
    "default_payload_bits",
    "dbm_per_hz_to_watt_per_hz",
    "generate_scenario",
    "mean_parameter_scenario",
    "load_scenario",
    "load_config",
    "save_config",
]

# Cycles-per-sample multiplier under which the mean-parameter scenario
# (every device at the centre of its draw range) settles on alpha* = 0.379.
# See demos/calibrate_compute_scale.py.
CALIBRATED_COMPUTE_SCALE = 9096.0


class ScenarioError(ValueError):
    """Invalid scenario parameter or malformed config file."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    cpu_freq_hz: float
    cycles_per_sample: float
    num_samples: int
    tx_power_watt: float
    payoff_rate: float
    privacy_weight: float
    position_m: tuple[float, float]

    def validate(self, area_side_m: float | None = None) -> None:
        for name in ("cpu_freq_hz", "cycles_per_sample", "tx_power_watt",
                     "payoff_rate", "privacy_weight"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"device {self.id}: {name} must be > 0, got {value}", name)
        if self.num_samples < 1:
            raise ScenarioError(f"device {self.id}: num_samples must be >= 1", "num_samples")
        if area_side_m is not None:
            x, y = self.position_m
            if not (0 <= x <= area_side_m and 0 <= y <= area_side_m):
                raise ScenarioError(f"device {self.id}: position outside area", "position_m")


@dataclass(frozen=True)
class ServerProfile:
    cpu_freq_hz: float
    cycles_per_sample: float
    budget: float
    time_energy_balance: float
    bandwidth_hz: float
    noise_psd_watt_per_hz: float
    capacitance_coeff: float
    local_steps: int
    payload_bits_per_step: float

    def validate(self) -> None:
        g = self.time_energy_balance
        if not (0.0 <= g <= 1.0):
            raise ScenarioError(f"gamma must lie in [0, 1], got {g}", "gamma")
        for name in ("cpu_freq_hz", "cycles_per_sample", "budget", "bandwidth_hz",
                     "noise_psd_watt_per_hz", "capacitance_coeff", "payload_bits_per_step"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"server: {name} must be > 0, got {value}", name)
        if self.local_steps < 1:
            raise ScenarioError("server: local_steps must be >= 1", "local_steps")

    @property
    def gamma(self) -> float:
        return self.time_energy_balance


@dataclass(frozen=True)
class Scenario:
    devices: tuple[DeviceProfile, ...]
    server: ServerProfile
    area_side_m: float
    pathloss_exponent: float
    rng_seed: int

    def __post_init__(self):
        if len(self.devices) < 1:
            raise ScenarioError("a scenario needs at least one device", "n_devices")
        if not self.pathloss_exponent > 0:
            raise ScenarioError("pathloss_exponent must be > 0", "pathloss_exponent")
        if not self.area_side_m > 0:
            raise ScenarioError("area_side_m must be > 0", "area_side_m")
        for d in self.devices:
            d.validate(self.area_side_m)
        self.server.validate()

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    @property
    def server_position_m(self) -> tuple[float, float]:
        half = self.area_side_m / 2.0
        return (half, half)

    def distance_m(self, device: DeviceProfile) -> float:
        sx, sy = self.server_position_m
        x, y = device.position_m
        return math.hypot(x - sx, y - sy)

    def with_devices(self, devices) -> "Scenario":
        return replace(self, devices=tuple(devices))

    def with_server(self, **changes) -> "Scenario":
        return replace(self, server=replace(self.server, **changes))


def dbm_per_hz_to_watt_per_hz(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def default_payload_bits(batch_size: int = 256, cut_width: int = 176) -> float:
    """Bits uploaded per local step: float32 activations plus one byte per label."""
    return float(batch_size * cut_width * 32 + batch_size * 8)


def _check_range(name: str, rng: tuple[float, float]) -> tuple[float, float]:
    lo, hi = (float(v) for v in rng)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ScenarioError(f"{name}: invalid range ({lo}, {hi})", name)
    return lo, hi


@dataclass
class ScenarioConfig:
    """Distribution ranges and fixed parameters used to draw a :class:`Scenario`.

    Physical units follow the config-file keys (GHz, mW, MHz, dBm/Hz);
    :func:`generate_scenario` converts to SI. ``compute_scale`` multiplies
    both cycles-per-sample values; ``samples_per_device`` of ``None`` means
    55000 training samples shared evenly.
    """

    n_devices: int = 10
    area_side_m: float = 50.0
    pathloss_exponent: float = 4.0
    seed: int = 0
    cpu_freq_ghz_range: tuple[float, float] = (1.5, 2.4)
    privacy_weight_range: tuple[float, float] = (25.0, 30.0)
    payoff_rate_range: tuple[float, float] = (1e-8, 1e-7)
    tx_power_mw: float = 100.0
    bandwidth_mhz: float = 10.0
    noise_dbm_per_hz: float = -174.0
    kappa: float = 2e-28
    cycles_per_sample_device: float = 1e3
    cycles_per_sample_server: float = 1e3
    server_cpu_freq_ghz: float = 4.0
    budget: float = 1215.0
    gamma: float = 0.01
    local_steps: int = 25
    compute_scale: float = 1.0
    samples_per_device: int | list[int] | None = None
    total_train_samples: int = 55000
    batch_size: int = 256
    cut_width: int = 176
    payload_bits_per_step: float | None = None

    def validate(self) -> None:
        if int(self.n_devices) < 1:
            raise ScenarioError("n_devices must be >= 1", "n_devices")
        for name in ("cpu_freq_ghz_range", "privacy_weight_range", "payoff_rate_range"):
            _check_range(name, getattr(self, name))
        if not (0.0 <= self.gamma <= 1.0):
            raise ScenarioError(f"gamma must lie in [0, 1], got {self.gamma}", "gamma")
        for name in ("area_side_m", "pathloss_exponent", "tx_power_mw", "bandwidth_mhz",
                     "kappa", "cycles_per_sample_device", "cycles_per_sample_server",
                     "server_cpu_freq_ghz", "budget", "compute_scale"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"{name} must be > 0, got {value}", name)
        if int(self.local_steps) < 1:
            raise ScenarioError("local_steps must be >= 1", "local_steps")

    def device_sample_counts(self) -> list[int]:
        n = int(self.n_devices)
        spd = self.samples_per_device
        if spd is None:
            return [max(1, self.total_train_samples // n)] * n
        if isinstance(spd, (list, tuple)):
            if len(spd) != n:
                raise ScenarioError("samples_per_device needs one entry per device",
                                    "samples_per_device")
            return [int(v) for v in spd]
        return [int(spd)] * n

    def payload_bits(self) -> float:
        if self.payload_bits_per_step is not None:
            return float(self.payload_bits_per_step)
        return default_payload_bits(self.batch_size, self.cut_width)


def generate_scenario(config: ScenarioConfig | None = None, **overrides) -> Scenario:
    """Draw a scenario; identical configs (including ``seed``) give identical scenarios."""
    config = replace(config or ScenarioConfig(), **overrides)
    config.validate()
    n = int(config.n_devices)
    rng = np.random.default_rng(int(config.seed))
    side = float(config.area_side_m)

    f_lo, f_hi = _check_range("cpu_freq_ghz_range", config.cpu_freq_ghz_range)
    l_lo, l_hi = _check_range("privacy_weight_range", config.privacy_weight_range)
    c_lo, c_hi = _check_range("payoff_rate_range", config.payoff_rate_range)
    # fixed draw order keeps scenarios comparable across range changes
    positions = rng.uniform(0.0, side, size=(n, 2))
    freqs = rng.uniform(f_lo, f_hi, size=n) * 1e9
    lambdas = rng.uniform(l_lo, l_hi, size=n)
    payoffs = rng.uniform(c_lo, c_hi, size=n)
    counts = config.device_sample_counts()

    devices = tuple(
        DeviceProfile(
            id=k,
            cpu_freq_hz=float(freqs[k]),
            cycles_per_sample=float(config.cycles_per_sample_device * config.compute_scale),
            num_samples=int(counts[k]),
            tx_power_watt=float(config.tx_power_mw) * 1e-3,
            payoff_rate=float(payoffs[k]),
            privacy_weight=float(lambdas[k]),
            position_m=(float(positions[k, 0]), float(positions[k, 1])),
        )
        for k in range(n)
    )
    server = ServerProfile(
        cpu_freq_hz=float(config.server_cpu_freq_ghz) * 1e9,
        cycles_per_sample=float(config.cycles_per_sample_server * config.compute_scale),
        budget=float(config.budget),
        time_energy_balance=float(config.gamma),
        bandwidth_hz=float(config.bandwidth_mhz) * 1e6,
        noise_psd_watt_per_hz=dbm_per_hz_to_watt_per_hz(float(config.noise_dbm_per_hz)),
        capacitance_coeff=float(config.kappa),
        local_steps=int(config.local_steps),
        payload_bits_per_step=config.payload_bits(),
    )
    return Scenario(devices=devices, server=server, area_side_m=side,
                    pathloss_exponent=float(config.pathloss_exponent),
                    rng_seed=int(config.seed))


def mean_parameter_scenario(config: ScenarioConfig | None = None, **overrides) -> Scenario:
    """Homogeneous scenario with every device at the centre of each draw range.

    Devices sit on a ring around the server at the mean device-server
    distance of a uniform square placement (0.3826 x side), evenly spread
    in angle.
    """
    config = replace(config or ScenarioConfig(), **overrides)
    config.validate()
    base = generate_scenario(config)
    side = float(config.area_side_m)
    radius = 0.38259785 * side
    n = int(config.n_devices)
    devices = []
    for k, d in enumerate(base.devices):
        theta = 2.0 * math.pi * k / n
        devices.append(replace(
            d,
            cpu_freq_hz=0.5e9 * sum(config.cpu_freq_ghz_range),
            privacy_weight=0.5 * sum(config.privacy_weight_range),
            payoff_rate=0.5 * sum(config.payoff_rate_range),
            position_m=(side / 2 + radius * math.cos(theta), side / 2 + radius * math.sin(theta)),
        ))
    return base.with_devices(devices)


# -- config files -----------------------------------------------------------

_SECTIONS = {
    "devices": ("n_devices", "cpu_freq_ghz_range", "privacy_weight_range",
                "payoff_rate_range", "tx_power_mw", "cycles_per_sample_device",
                "samples_per_device", "total_train_samples"),
    "server": ("server_cpu_freq_ghz", "cycles_per_sample_server", "bandwidth_mhz",
               "noise_dbm_per_hz", "kappa", "budget", "gamma", "local_steps",
               "compute_scale", "batch_size", "cut_width", "payload_bits_per_step"),
    "area": ("area_side_m", "pathloss_exponent", "seed"),
}
_INT_KEYS = {"n_devices", "seed", "local_steps", "batch_size", "cut_width",
             "total_train_samples"}
_RANGE_KEYS = {"cpu_freq_ghz_range", "privacy_weight_range", "payoff_rate_range"}


def _parse_value(key: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if key in _RANGE_KEYS:
            parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
            if len(parts) != 2:
                raise ValueError("expected 'low, high'")
            return (float(parts[0]), float(parts[1]))
        if key == "samples_per_device":
            parts = [p for p in raw.split(",") if p.strip()]
            values = [int(p) for p in parts]
            return values[0] if len(values) == 1 else values
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ScenarioError(f"{where}: cannot parse {key} = {raw!r} ({exc})", key) from None


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise ScenarioError(f"{path}: empty scenario file")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if not parser.sections():
        raise ScenarioError(f"{path}: no [devices], [server] or [area] section found")

    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ScenarioError(f"{path}: unknown section [{section}]", section)
        allowed = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ScenarioError(f"{path}: unknown key {key!r} in [{section}]", key)
            values[key] = _parse_value(key, raw, f"{path} [{section}]")
    config = ScenarioConfig(**values)
    config.validate()
    return config


def load_scenario(path: str | Path, **overrides) -> Scenario:
    return generate_scenario(load_config(path), **overrides)


def save_config(config: ScenarioConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    defaults = ScenarioConfig()
    for section, keys in _SECTIONS.items():
        parser.add_section(section)
        for key in keys:
            value = getattr(config, key)
            if value is None:
                continue
            if key in ("samples_per_device", "total_train_samples", "payload_bits_per_step",
                       "batch_size", "cut_width") and value == getattr(defaults, key):
                continue
            if isinstance(value, (list, tuple)):
                text = ", ".join(repr(v) for v in value)
            else:
                text = repr(value)
            parser.set(section, key, text)
    with open(path, "w") as fh:
        parser.write(fh)


def config_fields() -> list[str]:
    return [f.name for f in fields(ScenarioConfig)]
