import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopsim.config import ConfigError, ScenarioConfig
from coopsim.scenario import (apply_estimation_error, cascaded_channel,
                              estimation_error_variance, path_loss_db,
                              sample_channels, sample_topology,
                              training_budget)


def _channels(cfg, trial=0):
    return sample_channels(sample_topology(cfg, trial), cfg, trial)


def test_topology_inside_area_and_deterministic():
    cfg = ScenarioConfig(n_devices=5, n_helpers=3)
    t1 = sample_topology(cfg, 7)
    t2 = sample_topology(cfg, 7)
    assert np.array_equal(t1.device_positions, t2.device_positions)
    assert np.array_equal(t1.helper_positions, t2.helper_positions)
    for pos in (t1.pap_position, t1.helper_positions, t1.device_positions):
        assert np.all(pos >= 0) and np.all(pos <= cfg.area_side)


def test_topology_extends_when_entities_added():
    cfg = ScenarioConfig(n_devices=4, n_helpers=2)
    big = sample_topology(cfg.replace(n_helpers=4, n_devices=6), 3)
    small = sample_topology(cfg, 3)
    assert np.array_equal(big.helper_positions[:2], small.helper_positions)
    assert np.array_equal(big.device_positions[:4], small.device_positions)


def test_path_loss_free_space_anchor():
    # At the 1 m reference the loss equals free space: 20log10(4*pi*d*f/c).
    f_c = 10e9
    expected = 20.0 * np.log10(4.0 * np.pi * f_c / 299_792_458.0)
    assert path_loss_db(1.0, f_c, exponent=2.6) == pytest.approx(expected)
    # 10 m adds exponent*10 dB.
    assert path_loss_db(10.0, f_c, exponent=2.6) == pytest.approx(expected + 26.0)
    # Clamp below the minimum distance.
    assert path_loss_db(0.01, f_c, min_distance=0.1) == path_loss_db(0.1, f_c)


def test_estimation_error_variance_formula():
    assert estimation_error_variance(0, 5.0) == 1.0
    assert estimation_error_variance(4, 0.0) == 1.0
    assert estimation_error_variance(1, 1.0) == pytest.approx(0.5)
    # Frozen oracle: L=4, SNR=100 -> 1/401.
    assert estimation_error_variance(4, 100.0) == pytest.approx(1.0 / 401.0, abs=0)
    assert estimation_error_variance(10, 1e6) == pytest.approx(1e-7, rel=1e-6)


def test_cascaded_channel_elementwise_and_shape_check():
    a = np.array([1 + 1j, 2.0, 1j])
    b = np.array([2.0, 1j, 3.0])
    u = cascaded_channel(a, b)
    assert np.allclose(u, np.conj(a) * b)
    with pytest.raises(ValueError):
        cascaded_channel(a, b[:2])


def test_channels_deterministic_and_extension_stable():
    cfg = ScenarioConfig(n_devices=4, n_helpers=2)
    c1 = _channels(cfg, 5)
    c2 = _channels(cfg, 5)
    assert np.array_equal(c1.h_d, c2.h_d)
    assert np.array_equal(c1.h_s, c2.h_s)
    big = _channels(cfg.replace(n_helpers=4), 5)
    assert np.allclose(big.h_a[:2], c1.h_a)
    assert np.allclose(big.h_s[:, :2], c1.h_s)
    assert np.allclose(big.h_d, c1.h_d)


def test_rician_k_factor_statistics():
    cfg = ScenarioConfig(n_devices=1, n_helpers=200, rician_k=6.0)
    ch = _channels(cfg, 0)
    ss = ch.h_a / np.sqrt(ch.gain_a)
    # LoS power fraction ~ K/(K+1); scattered ~ 1/(K+1).
    scat = ss - ch.los_a
    assert np.mean(np.abs(ch.los_a) ** 2) == pytest.approx(6.0 / 7.0, rel=1e-9)
    assert np.mean(np.abs(scat) ** 2) == pytest.approx(1.0 / 7.0, rel=0.3)


def test_perfect_csi_estimates_equal_truth():
    ch = _channels(ScenarioConfig(n_devices=3, n_helpers=2))
    assert np.array_equal(ch.h_d_hat, ch.h_d)
    assert np.all(ch.sigma_e_d == 0)


def test_apply_estimation_error_requires_imperfect_mode():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1)
    ch = _channels(cfg)
    with pytest.raises(ConfigError):
        apply_estimation_error(ch, cfg, 0)


def test_estimation_error_consistency():
    cfg = ScenarioConfig(n_devices=6, n_helpers=2, csi_mode="imperfect", pilots=4)
    ch = _channels(cfg, 1)
    est = apply_estimation_error(ch, cfg, 1)
    # True channels untouched.
    assert np.array_equal(est.h_d, ch.h_d)
    # Error variances follow 1/(1+L*SNR) with pilot SNR at p_max.
    snr = cfg.p_max * ch.gain_d / cfg.noise_power
    assert np.allclose(est.sigma_e_d, 1.0 / (1.0 + cfg.pilots * snr))
    # Estimates differ from truth but stay within a plausible error scale.
    err = (est.h_d_hat - ch.h_d) / np.sqrt(ch.gain_d)
    assert np.all(np.abs(err) ** 2 < 50.0 * est.sigma_e_d + 1e-30)
    # Deterministic.
    est2 = apply_estimation_error(ch, cfg, 1)
    assert np.array_equal(est.h_d_hat, est2.h_d_hat)


def test_estimation_error_statistics():
    cfg = ScenarioConfig(n_devices=400, n_helpers=1, csi_mode="imperfect",
                         pilots=1, noise_psd=1e-9)  # noisy pilots
    ch = _channels(cfg, 0)
    est = apply_estimation_error(ch, cfg, 0)
    norm_err = np.abs((est.h_d_hat - ch.h_d)) ** 2 / ch.gain_d
    ratio = np.mean(norm_err / est.sigma_e_d)
    assert 0.7 < ratio < 1.4


def test_ris_cascade_consistency():
    cfg = ScenarioConfig(n_devices=3, n_helpers=2, ris_elements=4)
    ch = _channels(cfg, 2)
    assert ch.u_cascade.shape == (3, 2, 4)
    for n in range(3):
        assert np.allclose(
            ch.u_cascade[n], np.conj(ch.h_ris_dev[n]) * ch.h_ris_ap
        )


def test_training_budget_relay_and_ris():
    cfg = ScenarioConfig(n_devices=10, pilots=4, csi_mode="imperfect")
    t_prime, training = training_budget(cfg)
    # 10 devices * 4 pilots * 10 ns symbols = 400 ns.
    assert training == pytest.approx(4e-7)
    assert t_prime == pytest.approx(1e-4 - 4e-7)

    ris = ScenarioConfig(n_devices=10, n_helpers=2, ris_elements=4, pilots=5,
                         csi_mode="imperfect")
    t_prime, training = training_budget(ris)
    assert training == pytest.approx(10 * 2 * 5 * 1e-8)

    perfect = ScenarioConfig(n_devices=10)
    assert training_budget(perfect) == (perfect.cycle_time, 0.0)


def test_training_budget_overflow_raises():
    cfg = ScenarioConfig(n_devices=10, pilots=4, csi_mode="imperfect",
                         cycle_time=3e-7)
    with pytest.raises(ConfigError):
        training_budget(cfg)


@given(st.integers(min_value=0, max_value=10 ** 6),
       st.floats(min_value=0.0, max_value=1e12, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_estimation_error_variance_bounds(L, snr):
    v = estimation_error_variance(L, snr)
    assert 0.0 < v <= 1.0
