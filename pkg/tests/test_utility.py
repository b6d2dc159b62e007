import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitbargain.scenario import generate_scenario
from splitbargain.utility import (
    SplitFraction,
    UtilityVector,
    communication_delay,
    device_compute_energy,
    device_compute_time,
    device_utility,
    ideal_alpha_device,
    ideal_alpha_server,
    ideal_point,
    server_compute_energy,
    server_compute_time,
    server_utility,
    server_utility_slope,
    utility_matrix,
)

from conftest import make_device, make_scenario, make_server, random_device

KAPPA = 2e-28


def F(x):
    return Fraction(repr(float(x))) if not isinstance(x, Fraction) else x


def test_split_fraction_bounds():
    assert float(SplitFraction(0.25)) == 0.25
    for bad in (-0.01, 1.01, math.nan):
        with pytest.raises(ValueError):
            SplitFraction(bad)


def test_utility_vector_round_trip():
    u = UtilityVector.from_array([1.0, 2.0, 3.0])
    assert u.device_utilities == (1.0, 2.0) and u.server_utility == 3.0
    assert len(u) == 3
    assert np.array_equal(u.as_array(), [1.0, 2.0, 3.0])
    assert np.array_equal(UtilityVector.zeros(2).as_array(), np.zeros(3))


def test_device_compute_energy_examples(device):
    assert device_compute_energy(0.0, device, KAPPA) == 0.0
    want = F("2e-28") * 1 * 5500 * 1000 * F("2e9") ** 2
    assert want == F("4.4e-3")
    assert device_compute_energy(1.0, device, KAPPA) == pytest.approx(float(want), rel=1e-14)
    assert device_compute_energy(0.5, device, KAPPA) == pytest.approx(
        device_compute_energy(1.0, device, KAPPA) / 2, rel=1e-15)
    assert device_compute_energy(SplitFraction(1.0), device, KAPPA) == device_compute_energy(1.0, device, KAPPA)


def test_device_compute_time_examples(device):
    assert device_compute_time(0.0, device) == 0.0
    assert device_compute_time(1.0, device) == pytest.approx(float(Fraction(1000 * 5500) / F("2e9")), rel=1e-15)
    assert device_compute_time(1.0, device) == pytest.approx(2.75e-3, rel=1e-15)
    slow = make_device(f=1e9)
    assert device_compute_time(0.7, slow) == pytest.approx(2 * device_compute_time(0.7, device), rel=1e-15)


def test_server_compute_energy_examples(scenario):
    assert server_compute_energy(1.0, scenario) == 0.0
    per = F("2e-28") * 5500 * 1000 * F("4e9") ** 2
    assert per == F("0.0176")
    for a in (0.0, 0.3, 0.9):
        assert server_compute_energy(a, scenario) == pytest.approx(float(per) * (1 - a), rel=1e-14)
    two = make_scenario([make_device(0, D=5500), make_device(1, D=1234, pos=(10.0, 10.0))])
    one_b = make_scenario([make_device(1, D=1234, pos=(10.0, 10.0))])
    assert server_compute_energy(0.2, two) == pytest.approx(
        server_compute_energy(0.2, scenario) + server_compute_energy(0.2, one_b), rel=1e-14)


def test_server_compute_time_examples():
    scen = make_scenario([make_device(0, D=100), make_device(1, D=200, pos=(10.0, 10.0))])
    assert server_compute_time(1.0, scen) == 0.0
    assert server_compute_time(0.0, scen) == pytest.approx(200 * 1e3 / 4e9, rel=1e-15)

    rng = np.random.default_rng(3)
    devs = [random_device(rng, k) for k in range(7)]
    scen = make_scenario(devs)
    for a in rng.uniform(0, 1, 5):
        brute = max(d.num_samples * (1 - a) * scen.server.cycles_per_sample / scen.server.cpu_freq_hz
                    for d in devs)
        assert server_compute_time(a, scen) == pytest.approx(brute, rel=1e-14)


def device_utility_oracle(alpha, d, I, tau, kappa=KAPPA):
    reward = F(d.payoff_rate) * F(d.cpu_freq_hz)
    compute = F(kappa) * F(alpha) * d.num_samples * F(d.cycles_per_sample) * F(d.cpu_freq_hz) ** 2
    upload = I * F(tau) * F(d.tx_power_watt)
    return float(reward - compute - upload) + d.privacy_weight * math.log2(1 + alpha)


def test_device_utility_examples(device):
    srv = make_server(I=25)
    tau = 0.0123
    u0 = device_utility(0.0, device, srv, tau)
    assert u0 == pytest.approx(device.payoff_rate * device.cpu_freq_hz - 25 * tau * device.tx_power_watt, rel=1e-14)
    for a in (0.0, 0.25, 0.5, 1.0):
        assert device_utility(a, device, srv, tau) == pytest.approx(device_utility_oracle(a, device, 25, tau), rel=1e-13)
    richer = make_device(lam=30.0)
    for a in (1e-6, 0.3, 1.0):
        assert device_utility(a, richer, srv, tau) > device_utility(a, device, srv, tau)


def test_device_utility_vectorises(device):
    a = np.linspace(0, 1, 11)
    vec = device_utility(a, device, make_server(), 0.01)
    assert vec.shape == (11,)
    assert np.allclose(vec, [device_utility(x, device, make_server(), 0.01) for x in a], rtol=0, atol=1e-13)


def server_utility_oracle(alpha, scen, taus, mode="max"):
    s = scen.server
    g = F(s.time_energy_balance)
    a = F(alpha)
    payoffs = sum(F(d.payoff_rate) * F(d.cpu_freq_hz) for d in scen.devices)
    e_s = sum(d.num_samples * (1 - a) * F(s.capacitance_coeff) * F(s.cycles_per_sample) * F(s.cpu_freq_hz) ** 2
              for d in scen.devices)
    t_s = max(d.num_samples * (1 - a) * F(s.cycles_per_sample) / F(s.cpu_freq_hz) for d in scen.devices)
    t_k = max(a * F(d.cycles_per_sample) * d.num_samples / F(d.cpu_freq_hz) for d in scen.devices)
    tau = max(F(t) for t in taus) if mode == "max" else sum(F(t) for t in taus) / len(taus)
    return float(F(s.budget) - (payoffs + g * e_s + (1 - g) * (t_s + t_k + s.local_steps * tau)))


def test_server_utility_term_oracle():
    scen = generate_scenario(seed=0)
    taus = list(np.linspace(0.01, 0.03, 10))
    for a in (0.0, 0.379, 1.0):
        assert server_utility(a, scen, taus) == pytest.approx(server_utility_oracle(a, scen, taus), rel=1e-13)
        assert server_utility(a, scen, taus, "mean") == pytest.approx(
            server_utility_oracle(a, scen, taus, "mean"), rel=1e-13)


def test_server_utility_term_isolation():
    devs = [make_device(0), make_device(1, D=3000, f=1.7e9, pos=(5.0, 5.0))]
    taus = [0.01, 0.02]
    energy_only = make_scenario(devs, make_server(gamma=1.0))
    slope = sum(KAPPA * d.num_samples * 1e3 * 4e9 ** 2 for d in devs)
    u0, u1 = server_utility(0.0, energy_only, taus), server_utility(1.0, energy_only, taus)
    assert u1 - u0 == pytest.approx(slope, rel=1e-12)
    assert server_utility(0.5, energy_only, taus) == pytest.approx((u0 + u1) / 2, rel=1e-14)
    # changing the delays leaves a pure-energy server unaffected
    assert server_utility(0.3, energy_only, [5.0, 5.0]) == pytest.approx(server_utility(0.3, energy_only, taus), rel=1e-14)

    time_only = make_scenario(devs, make_server(gamma=0.0))
    bigger_kappa = make_scenario(devs, make_server(gamma=0.0, kappa=1e-20))
    assert server_utility(0.3, time_only, taus) == server_utility(0.3, bigger_kappa, taus)


def test_communication_delay_modes():
    assert communication_delay([0.1, 0.3], 25) == pytest.approx(7.5)
    assert communication_delay([0.1, 0.3], 25, "mean") == pytest.approx(5.0)
    with pytest.raises(ValueError):
        communication_delay([0.1], 25, "median")


def test_ideal_alpha_device_boundaries():
    d = make_device()
    base = math.log(2) * KAPPA * d.cycles_per_sample * d.num_samples * d.cpu_freq_hz ** 2
    assert ideal_alpha_device(make_device(lam=base), KAPPA) == 0.0
    assert ideal_alpha_device(make_device(lam=2 * base), KAPPA) == 1.0
    assert ideal_alpha_device(make_device(lam=1.5 * base), KAPPA) == pytest.approx(0.5, rel=1e-12)
    assert ideal_alpha_device(make_device(lam=base / 3), KAPPA) == 0.0


def test_ideal_alpha_device_matches_grid_argmax():
    rng = np.random.default_rng(11)
    grid = np.round(np.arange(0, 10_001) * 1e-4, 12)
    srv = make_server()
    interior = 0
    for k in range(100):
        d = random_device(rng, k)
        base = math.log(2) * KAPPA * d.cycles_per_sample * d.num_samples * d.cpu_freq_hz ** 2
        d = replace(d, privacy_weight=base * rng.uniform(0.5, 2.5))
        u = device_utility(grid, d, srv, 0.01)
        want = grid[int(np.argmax(u))]
        got = ideal_alpha_device(d, KAPPA)
        interior += 0.0 < got < 1.0
        assert abs(got - want) <= 1e-3, (k, got, want)
    assert 30 <= interior <= 70


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_device_utility_concave(seed, a1, a2):
    d = random_device(np.random.default_rng(seed))
    srv = make_server()
    mid = device_utility((a1 + a2) / 2, d, srv, 0.01)
    assert mid >= (device_utility(a1, d, srv, 0.01) + device_utility(a2, d, srv, 0.01)) / 2 - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.01, 3.0))
def test_ideal_alpha_monotone(seed, factor):
    d = random_device(np.random.default_rng(seed))
    a = ideal_alpha_device(d, KAPPA)
    assert ideal_alpha_device(replace(d, privacy_weight=d.privacy_weight * factor), KAPPA) >= a
    assert ideal_alpha_device(replace(d, cycles_per_sample=d.cycles_per_sample * factor), KAPPA) <= a
    assert ideal_alpha_device(replace(d, num_samples=int(d.num_samples * factor) + 1), KAPPA) <= a
    assert ideal_alpha_device(replace(d, cpu_freq_hz=d.cpu_freq_hz * factor), KAPPA) <= a


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_server_utility_affine(seed, gamma, a1, a2):
    rng = np.random.default_rng(seed)
    scen = make_scenario([random_device(rng, k) for k in range(4)], make_server(gamma=gamma))
    taus = list(rng.uniform(0.001, 0.1, 4))
    a3 = 0.5 * (a1 + a2)
    u1, u2, u3 = (server_utility(a, scen, taus) for a in (a1, a2, a3))
    scale = max(abs(u1), abs(u2), 1.0)
    assert abs(u3 - (u1 + u2) / 2) <= 1e-10 * scale
    assert server_utility(1.0, scen, taus) - server_utility(0.0, scen, taus) == pytest.approx(
        server_utility_slope(scen), rel=1e-9, abs=1e-9 * scale)


def test_ideal_alpha_server_cases():
    devs = [make_device(0), make_device(1, f=1.6e9, pos=(5.0, 5.0))]
    assert ideal_alpha_server(make_scenario(devs, make_server(gamma=1.0))) == 1.0
    assert ideal_alpha_server(make_scenario(devs, make_server(gamma=0.0, f=40e9))) == 0.0
    # exact tie: equal server and device speeds, no energy weight
    tie = make_scenario([make_device(f=4e9)], make_server(gamma=0.0, f=4e9))
    assert server_utility_slope(tie) == 0.0
    assert ideal_alpha_server(tie) == 0.0


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("scale", [1.0, 9096.0])
def test_ideal_alpha_server_matches_finite_difference(seed, scale):
    scen = generate_scenario(seed=seed, compute_scale=scale)
    taus = [0.02] * 10
    h = 1e-3
    fd = (server_utility(0.5 + h, scen, taus) - server_utility(0.5 - h, scen, taus)) / (2 * h)
    assert (fd > 0) == (ideal_alpha_server(scen) == 1.0)


def test_ideal_point_single_increasing_device():
    d = make_device(lam=1000.0)
    scen = make_scenario([d])
    g = ideal_point(scen, [0.01])
    assert g.device_utilities[0] == device_utility(1.0, d, scen.server, 0.01)
    assert g.server_utility == server_utility(ideal_alpha_server(scen), scen, [0.01])


def test_ideal_point_dominates_every_common_alpha():
    for seed in range(5):
        scen = generate_scenario(seed=seed, compute_scale=9096.0)
        taus = list(np.random.default_rng(seed).uniform(0.01, 0.05, 10))
        g = ideal_point(scen, taus).as_array()
        u = utility_matrix(np.linspace(0, 1, 1000), scen, taus)
        assert np.all(u <= g[:, None] + 1e-9)


def test_ideal_point_rejects_empty():
    from splitbargain.scenario import ScenarioError
    with pytest.raises(ScenarioError):
        make_scenario([])
