import numpy as np
import pytest

from coopsim.classify import Schedule, all_single_hop
from coopsim.config import ScenarioConfig
from coopsim.protocol import (Allocation, af_snr, af_snr_mu_form,
                              outage_check, overflow_check, rate_af,
                              rate_df_phase2, rate_direct, rate_report,
                              ris_effective_channel, total_time)
from coopsim.scenario import apply_estimation_error, sample_channels, sample_topology

CFG = ScenarioConfig(n_devices=2, n_helpers=1)


def _channels(cfg, trial=0):
    return sample_channels(sample_topology(cfg, trial), cfg, trial)


def test_rate_direct_shannon_form():
    cfg = CFG
    g2, p = 1e-10, 0.5
    expected = cfg.bandwidth * np.log2(1.0 + p * g2 / cfg.noise_power)
    assert rate_direct(p, g2, 1.0, cfg) == pytest.approx(expected)
    # Bandwidth fraction scales both the prelog and the noise.
    beta = 0.25
    expected = beta * cfg.bandwidth * np.log2(1.0 + p * g2 / (beta * cfg.noise_power))
    assert rate_direct(p, g2, beta, cfg) == pytest.approx(expected)
    # Theta is a plain multiplicative discount.
    assert rate_direct(p, g2, 1.0, cfg, theta=0.5) == pytest.approx(
        0.5 * rate_direct(p, g2, 1.0, cfg))


def test_rate_df_phase2_combines_both_phases():
    cfg = CFG
    r = rate_df_phase2(0.2, 3e-10, 0.1, 1e-10, 1.0, cfg)
    g = (0.2 * 3e-10 + 0.1 * 1e-10) / cfg.noise_power
    assert r == pytest.approx(cfg.bandwidth * np.log2(1.0 + g))


def test_af_snr_equals_mu_substituted_form():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p, ps = rng.uniform(1e-6, 1.0, 2)
        gs2, ga2 = 10.0 ** rng.uniform(-12, -6, 2)
        beta = rng.uniform(0.05, 1.0)
        a = af_snr(p, gs2, ps, ga2, beta, CFG)
        b = af_snr_mu_form(p, gs2, ps, ga2, beta, CFG)
        assert a == pytest.approx(b, rel=1e-12)


def test_af_combined_rate_has_half_prelog():
    cfg = CFG
    g = 0.1 * 1e-10 / cfg.noise_power + af_snr(0.1, 2e-10, 0.2, 3e-10, 1.0, cfg)
    assert rate_af(0.1, 1e-10, 2e-10, 0.2, 3e-10, 1.0, cfg) == pytest.approx(
        0.5 * cfg.bandwidth * np.log2(1.0 + g))


def test_ris_effective_channel_alignment_bound():
    rng = np.random.default_rng(1)
    h_d = rng.normal() + 1j * rng.normal()
    u = rng.normal(size=4) + 1j * rng.normal(size=4)
    v = np.exp(1j * (np.angle(h_d) + np.angle(u)))
    h = ris_effective_channel(h_d, u, v)
    assert abs(h) == pytest.approx(abs(h_d) + np.sum(np.abs(u)), rel=1e-12)
    with pytest.raises(ValueError):
        ris_effective_channel(h_d, u, v[:2])


def test_tdma_total_is_sum_fdma_total_is_max():
    cfg = ScenarioConfig(n_devices=3, n_helpers=1)
    ch = _channels(cfg, 4)
    sched = all_single_hop(3)
    alloc = Allocation(p_dev=np.full(3, 0.01))
    rep = rate_report("single-hop", sched, alloc, ch, cfg)
    assert rep.total == pytest.approx(np.sum(rep.time_1h))

    beta = np.full(3, 1.0 / 3.0)
    alloc_f = Allocation(p_dev=np.full(3, 0.01), beta=beta)
    rep_f = rate_report("df-fdma", sched, alloc_f, ch, cfg)
    assert rep_f.total == pytest.approx(np.max(rep_f.time_1h))


def test_df_tdma_two_hop_times_sum_across_phases():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1)
    ch = _channels(cfg, 0)
    sched = Schedule(one_hop=(0,), two_hop=(1,), relay_of={1: 0})
    alloc = Allocation(p_dev=np.array([0.01, 0.02]), p_relay=np.array([0.0, 0.03]))
    rep = rate_report("df-tdma", sched, alloc, ch, cfg)
    B = cfg.payload_bits
    assert rep.total == pytest.approx(
        B / rep.rate_1h[0] + B / rep.rate_phase1[1] + B / rep.rate_phase2[1])
    # Phase 2 combines relayed and direct receptions.
    g2 = (0.03 * np.abs(ch.h_a[0]) ** 2 + 0.02 * np.abs(ch.h_d[1]) ** 2) / cfg.noise_power
    assert rep.snr_phase2[1] == pytest.approx(g2)


def test_df_fdma_phase2_is_relay_only_and_includes_processing():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1, processing_fraction=0.1)
    ch = _channels(cfg, 0)
    sched = Schedule(one_hop=(0,), two_hop=(1,), relay_of={1: 0})
    beta = np.array([0.5, 0.5])
    alloc = Allocation(p_dev=np.array([0.01, 0.02]),
                       p_relay=np.array([0.0, 0.03]), beta=beta)
    rep = rate_report("df-fdma", sched, alloc, ch, cfg)
    g2 = 0.03 * np.abs(ch.h_a[0]) ** 2 / (0.5 * cfg.noise_power)
    assert rep.snr_phase2[1] == pytest.approx(g2)   # no direct-path term
    B = cfg.payload_bits
    expected_2h = B / rep.rate_phase1[1] + B / rep.rate_phase2[1] + 0.1 * cfg.cycle_time
    assert rep.total == pytest.approx(max(rep.time_1h[0], expected_2h))


def test_zero_payload_means_zero_time():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1, payload_bits=0.0)
    ch = _channels(cfg, 0)
    alloc = Allocation(p_dev=np.zeros(2))
    assert total_time("single-hop", all_single_hop(2), alloc, ch, cfg) == 0.0


def test_zero_power_with_payload_overflows():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1)
    ch = _channels(cfg, 0)
    alloc = Allocation(p_dev=np.zeros(2))
    total = total_time("single-hop", all_single_hop(2), alloc, ch, cfg)
    assert overflow_check(total, cfg.cycle_time)


def test_overflow_check_boundary():
    assert not overflow_check(1.0, 1.0)
    assert overflow_check(1.0 + 1e-12, 1.0)


def test_outage_only_under_imperfect_csi_with_high_theta():
    cfg = ScenarioConfig(n_devices=4, n_helpers=1, csi_mode="imperfect",
                         pilots=1, theta=1.0)
    ch_true = _channels(cfg, 3)
    ch_est = apply_estimation_error(ch_true, cfg, 3)
    sched = all_single_hop(4)
    alloc = Allocation(p_dev=np.full(4, cfg.p_max))
    # theta=1 with noisy estimates: some trial should show optimistic links.
    hits = 0
    for t in range(20):
        ct = _channels(cfg, t)
        ce = apply_estimation_error(ct, cfg, t)
        hits += outage_check("single-hop", sched, alloc, ct, ce, cfg)
    assert hits > 0
    # A tiny theta makes the discounted estimate pessimistic: no outage.
    lo = cfg.replace(theta=0.01)
    assert not outage_check("single-hop", sched, alloc, ch_true, ch_est, lo)


def test_outage_false_under_perfect_csi():
    cfg = ScenarioConfig(n_devices=3, n_helpers=1)
    ch = _channels(cfg, 0)
    alloc = Allocation(p_dev=np.full(3, 0.1))
    assert not outage_check("single-hop", all_single_hop(3), alloc, ch, ch, cfg)


def test_rate_report_rejects_unknown_mode():
    cfg = ScenarioConfig(n_devices=1, n_helpers=0)
    ch = _channels(cfg, 0)
    with pytest.raises(ValueError):
        rate_report("ofdma", all_single_hop(1), Allocation(p_dev=[0.1]), ch, cfg)
