import numpy as np
import pytest

from splitbargain.scenario import (
    DeviceProfile,
    Scenario,
    ServerProfile,
    dbm_per_hz_to_watt_per_hz,
)


def make_device(k=0, f=2e9, L=1e3, D=5500, P=0.1, c=5e-8, lam=27.5, pos=(35.0, 25.0)):
    return DeviceProfile(id=k, cpu_freq_hz=f, cycles_per_sample=L, num_samples=D,
                         tx_power_watt=P, payoff_rate=c, privacy_weight=lam, position_m=pos)


def make_server(f=4e9, L=1e3, B=1215.0, gamma=0.01, W=1e7, n0_dbm=-174.0, kappa=2e-28,
                I=25, payload=1_443_840.0):
    return ServerProfile(cpu_freq_hz=f, cycles_per_sample=L, budget=B,
                         time_energy_balance=gamma, bandwidth_hz=W,
                         noise_psd_watt_per_hz=dbm_per_hz_to_watt_per_hz(n0_dbm),
                         capacitance_coeff=kappa, local_steps=I, payload_bits_per_step=payload)


def make_scenario(devices=None, server=None, side=50.0, exponent=4.0, seed=0):
    devices = devices if devices is not None else [make_device()]
    return Scenario(devices=tuple(devices), server=server or make_server(),
                    area_side_m=side, pathloss_exponent=exponent, rng_seed=seed)


def random_device(rng, k=0, side=50.0):
    # wide ranges, so the ideal split lands in the interior as well as on both bounds
    return make_device(
        k=k,
        f=float(rng.uniform(0.5e9, 3e9)),
        L=float(10 ** rng.uniform(2, 7)),
        D=int(rng.integers(100, 20000)),
        P=float(rng.uniform(0.01, 0.5)),
        c=float(rng.uniform(1e-8, 1e-7)),
        lam=float(rng.uniform(1e-3, 60.0)),
        pos=(float(rng.uniform(0, side)), float(rng.uniform(0, side))),
    )


@pytest.fixture
def device():
    return make_device()


@pytest.fixture
def scenario():
    return make_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
