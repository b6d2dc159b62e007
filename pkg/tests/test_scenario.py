import dataclasses
import math

import numpy as np
import pytest

from splitbargain.scenario import (
    CALIBRATED_COMPUTE_SCALE,
    Scenario,
    ScenarioConfig,
    ScenarioError,
    dbm_per_hz_to_watt_per_hz,
    default_payload_bits,
    generate_scenario,
    load_config,
    load_scenario,
    mean_parameter_scenario,
    save_config,
)

from conftest import make_device, make_scenario, make_server


def test_defaults_draw_ten_devices_in_published_frequency_range():
    s = generate_scenario(seed=3)
    assert s.n_devices == 10
    for d in s.devices:
        assert 1.5e9 <= d.cpu_freq_hz <= 2.4e9
        assert 25.0 <= d.privacy_weight <= 30.0
        assert 1e-8 <= d.payoff_rate <= 1e-7
        assert d.tx_power_watt == pytest.approx(0.1)
        assert d.cycles_per_sample == 1e3
    srv = s.server
    assert srv.cpu_freq_hz == 4e9
    assert srv.budget == 1215.0
    assert srv.gamma == 0.01
    assert srv.bandwidth_hz == 1e7
    assert srv.capacitance_coeff == 2e-28
    assert srv.local_steps == 25


def test_single_device_degenerate_ranges_are_exact():
    s = generate_scenario(n_devices=1, cpu_freq_ghz_range=(2.0, 2.0),
                          privacy_weight_range=(27.0, 27.0), payoff_rate_range=(3e-8, 3e-8))
    (d,) = s.devices
    assert d.cpu_freq_hz == 2.0e9
    assert d.privacy_weight == 27.0
    assert d.payoff_rate == 3e-8


def test_same_seed_identical_field_for_field():
    a = generate_scenario(seed=77)
    b = generate_scenario(seed=77)
    assert a == b
    assert dataclasses.asdict(a) == dataclasses.asdict(b)
    assert generate_scenario(seed=78) != a


def test_sampled_parameters_within_ranges_over_1000_seeds():
    lo = np.full(4, np.inf)
    hi = np.full(4, -np.inf)
    for seed in range(1000):
        s = generate_scenario(seed=seed)
        assert s.server_position_m == (25.0, 25.0)
        for d in s.devices:
            x, y = d.position_m
            vals = np.array([d.cpu_freq_hz, d.privacy_weight, d.payoff_rate, x])
            lo, hi = np.minimum(lo, vals), np.maximum(hi, vals)
            assert 0.0 <= x <= 50.0 and 0.0 <= y <= 50.0
    assert lo[0] >= 1.5e9 and hi[0] <= 2.4e9
    assert lo[1] >= 25.0 and hi[1] <= 30.0
    assert lo[2] >= 1e-8 and hi[2] <= 1e-7
    # 10000 draws should nearly fill every range
    assert lo[0] < 1.51e9 and hi[0] > 2.39e9


def test_invalid_range_rejected():
    with pytest.raises(ScenarioError) as exc:
        generate_scenario(privacy_weight_range=(30.0, 25.0))
    assert exc.value.field_name == "privacy_weight_range"
    with pytest.raises(ScenarioError):
        generate_scenario(n_devices=0)


def test_profile_invariants():
    with pytest.raises(ScenarioError) as exc:
        make_scenario([make_device(f=0.0)])
    assert exc.value.field_name == "cpu_freq_hz"
    with pytest.raises(ScenarioError):
        make_scenario([make_device(D=0)])
    with pytest.raises(ScenarioError):
        make_scenario([make_device(pos=(60.0, 10.0))])
    with pytest.raises(ScenarioError) as exc:
        make_scenario(server=make_server(gamma=-0.1))
    assert exc.value.field_name == "gamma"
    with pytest.raises(ScenarioError):
        make_scenario(server=make_server(I=0))
    with pytest.raises(ScenarioError):
        make_scenario([])
    with pytest.raises(ScenarioError):
        make_scenario(exponent=0.0)


def test_noise_conversion():
    assert dbm_per_hz_to_watt_per_hz(-174.0) == pytest.approx(10 ** -20.4, rel=1e-12)
    assert dbm_per_hz_to_watt_per_hz(30.0) == 1.0


def test_default_payload_encoding():
    assert default_payload_bits(256, 176) == 256 * 176 * 32 + 256 * 8
    assert generate_scenario().server.payload_bits_per_step == 1_443_840.0


def test_compute_scale_multiplies_both_sides():
    s = generate_scenario(compute_scale=CALIBRATED_COMPUTE_SCALE)
    assert s.server.cycles_per_sample == 1e3 * CALIBRATED_COMPUTE_SCALE
    assert all(d.cycles_per_sample == 1e3 * CALIBRATED_COMPUTE_SCALE for d in s.devices)


def test_default_sample_counts_share_55000():
    s = generate_scenario()
    assert [d.num_samples for d in s.devices] == [5500] * 10
    s = generate_scenario(n_devices=3, samples_per_device=[10, 20, 30])
    assert [d.num_samples for d in s.devices] == [10, 20, 30]


def test_mean_parameter_scenario_is_homogeneous():
    s = mean_parameter_scenario()
    assert len({(d.cpu_freq_hz, d.privacy_weight, d.payoff_rate) for d in s.devices}) == 1
    d = s.devices[0]
    assert d.cpu_freq_hz == pytest.approx(1.95e9)
    assert d.privacy_weight == 27.5
    assert d.payoff_rate == pytest.approx(5.5e-8)
    dists = [s.distance_m(d) for d in s.devices]
    assert np.ptp(dists) < 1e-9


def test_ring_radius_is_mean_distance_to_centre():
    # mean distance from a uniform point in the unit square to its centre
    rng = np.random.default_rng(0)
    p = rng.uniform(-0.5, 0.5, size=(2_000_000, 2))
    assert np.hypot(p[:, 0], p[:, 1]).mean() == pytest.approx(0.38259785, abs=5e-4)


def write(tmp_path, text):
    p = tmp_path / "scen.ini"
    p.write_text(text)
    return p


def test_load_scenario_carries_values(tmp_path):
    p = write(tmp_path, "[server]\nkappa = 2e-28\nbandwidth_mhz = 10\ngamma = 0.01\n")
    s = load_scenario(p)
    assert s.server.capacitance_coeff == 2e-28
    assert s.server.bandwidth_hz == 1e7
    assert s.server.gamma == 0.01
    # missing keys fall back to defaults
    assert s == generate_scenario()


def test_load_empty_file_is_error(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(write(tmp_path, ""))
    with pytest.raises(ScenarioError):
        load_scenario(write(tmp_path, "   \n# nothing\n"))


def test_load_gamma_out_of_range_names_gamma(tmp_path):
    with pytest.raises(ScenarioError, match="gamma") as exc:
        load_scenario(write(tmp_path, "[server]\ngamma = 1.5\n"))
    assert exc.value.field_name == "gamma"


def test_load_parse_errors_name_the_key(tmp_path):
    with pytest.raises(ScenarioError, match="budget") as exc:
        load_scenario(write(tmp_path, "[server]\nbudget = lots\n"))
    assert exc.value.field_name == "budget"
    with pytest.raises(ScenarioError, match="frobnicate"):
        load_scenario(write(tmp_path, "[server]\nfrobnicate = 1\n"))
    with pytest.raises(ScenarioError, match="nowhere"):
        load_scenario(write(tmp_path, "[nowhere]\nx = 1\n"))
    with pytest.raises(ScenarioError, match="privacy_weight_range"):
        load_scenario(write(tmp_path, "[devices]\nprivacy_weight_range = 25\n"))
    with pytest.raises(ScenarioError):
        load_scenario(write(tmp_path, "kappa = 1\n"))


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig(n_devices=4, seed=9, privacy_weight_range=(30.0, 35.0),
                         compute_scale=12.5, samples_per_device=[1, 2, 3, 4], gamma=0.2)
    p = tmp_path / "rt.ini"
    save_config(cfg, p)
    back = load_config(p)
    assert back.privacy_weight_range == (30.0, 35.0)
    assert back.samples_per_device == [1, 2, 3, 4]
    assert generate_scenario(back) == generate_scenario(cfg)


def test_scenario_is_frozen(scenario):
    assert isinstance(scenario, Scenario)
    with pytest.raises(dataclasses.FrozenInstanceError):
        scenario.area_side_m = 10.0
    moved = scenario.with_server(budget=10.0)
    assert moved.server.budget == 10.0 and scenario.server.budget == 1215.0
    assert math.isclose(scenario.distance_m(scenario.devices[0]), 10.0)
