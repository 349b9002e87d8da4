import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopsim.classify import Schedule, all_single_hop, classify_af, classify_df
from coopsim.config import ScenarioConfig
from coopsim.optimizer import (allocate_bandwidth_maxmin_af,
                               allocate_bandwidth_maxmin_df,
                               brute_force_oracle, closed_form_single_device,
                               feasible_at_pmax, minimize_power,
                               minimize_power_df_tdma, optimize_phases,
                               ris_phases_closed_form, ris_phases_sca,
                               sanitize_schedule, theta_lower, theta_upper)
from coopsim.protocol import total_time
from coopsim.scenario import sample_channels, sample_topology, training_budget

MODES = ("single-hop", "df-tdma", "df-fdma", "af-tdma", "af-fdma")


def _channels(cfg, trial=0):
    return sample_channels(sample_topology(cfg, trial), cfg, trial)


def _schedule(mode, ch, cfg):
    if mode == "single-hop":
        return all_single_hop(cfg.n_devices)
    if mode.startswith("df"):
        return classify_df(ch)
    return classify_af(ch, cfg.p_max, cfg)


# ---------------------------------------------------------------------------
# Product envelopes
# ---------------------------------------------------------------------------

@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3),
       st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
@settings(max_examples=300, deadline=None)
def test_envelopes_bracket_the_product(x, y, xa, ya):
    prod = x * y
    assert theta_lower(x, y, xa, ya) <= prod + 1e-9 * abs(prod)
    assert theta_upper(x, y, xa, ya) >= prod - 1e-9 * abs(prod)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
@settings(max_examples=200, deadline=None)
def test_envelopes_tight_at_anchor(xa, ya):
    # Cancellation scales with (xa+ya)^2, not with the product itself.
    prod = xa * ya
    tol = 1e-12 * (xa + ya) ** 2
    assert theta_lower(xa, ya, xa, ya) == pytest.approx(prod, abs=tol)
    assert theta_upper(xa, ya, xa, ya) == pytest.approx(prod, abs=tol)


# ---------------------------------------------------------------------------
# Single-device closed form
# ---------------------------------------------------------------------------

def test_single_device_solver_matches_closed_form():
    cfg = ScenarioConfig(n_devices=1, n_helpers=0, payload_bits=24000.0)
    ch = _channels(cfg, 2)
    rep = minimize_power_df_tdma(all_single_hop(1), ch, cfg)
    assert rep.status == "optimal"
    t_prime, _ = training_budget(cfg)
    budget = t_prime * cfg.bandwidth
    g = np.abs(ch.h_d_hat[0]) ** 2 / cfg.noise_power
    expected = closed_form_single_device(cfg.payload_bits, budget, g)
    assert rep.objective_watts == pytest.approx(expected, rel=1e-4)


def test_closed_form_single_device_values():
    # 1 bit over a 1-bit budget at unit gain needs exactly 1 W.
    assert closed_form_single_device(1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert closed_form_single_device(2.0, 1.0, 3.0) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Schedule hygiene and screening
# ---------------------------------------------------------------------------

def test_sanitize_reclassifies_zero_gain_relay_links():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1)
    ch = _channels(cfg, 0)
    ch.h_s_hat[1, 0] = 0.0
    s = Schedule(one_hop=(0,), two_hop=(1,), relay_of={1: 0})
    out = sanitize_schedule(s, ch, cfg)
    assert out.one_hop == (0, 1) and out.two_hop == ()


def test_feasible_at_pmax_screens_oversized_payload():
    cfg = ScenarioConfig(n_devices=3, n_helpers=1)
    ch = _channels(cfg, 1)
    for mode in MODES:
        sched = _schedule(mode, ch, cfg)
        assert feasible_at_pmax(mode, sched, ch, cfg)
        huge = cfg.replace(payload_bits=1e9)
        assert not feasible_at_pmax(mode, sched, ch, huge)


def test_infeasible_payload_reported_not_raised():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1, payload_bits=1e9)
    ch = _channels(cfg, 0)
    for mode in MODES:
        rep = minimize_power(mode, _schedule(mode, ch, cfg), ch, cfg)
        assert rep.status == "infeasible_at_pmax"
        assert rep.objective_watts == np.inf and rep.allocation is None


# ---------------------------------------------------------------------------
# Full solves: status, schedule fit, trace monotonicity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("mode", MODES)
def test_solution_fits_cycle_and_respects_pmax(mode):
    cfg = ScenarioConfig(n_devices=4, n_helpers=2)
    t_prime, _ = training_budget(cfg)
    for trial in range(3):
        ch = _channels(cfg, trial)
        sched = _schedule(mode, ch, cfg)
        rep = minimize_power(mode, sched, ch, cfg)
        assert rep.status == "optimal"
        total = total_time(mode, sanitize_schedule(sched, ch, cfg),
                           rep.allocation, ch, cfg)
        assert total <= t_prime * (1.0 + 1e-12)
        assert np.all(rep.allocation.p_dev <= cfg.p_max * (1.0 + 1e-9))
        assert np.all(rep.allocation.p_dev >= 0.0)
        trace = rep.objective_trace
        assert trace and trace[-1] == pytest.approx(rep.objective_watts)
        assert all(b <= a * (1.0 + 1e-9) for a, b in zip(trace, trace[1:]))


def test_two_hop_modes_never_worse_than_single_hop():
    cfg = ScenarioConfig(n_devices=6, n_helpers=2)
    wins = 0
    for trial in range(5):
        ch = _channels(cfg, trial)
        base = minimize_power("single-hop", all_single_hop(6), ch, cfg)
        df = minimize_power("df-tdma", classify_df(ch), ch, cfg)
        assert df.objective_watts <= base.objective_watts * (1.0 + 1e-6)
        wins += df.objective_watts < base.objective_watts * 0.999
    assert wins >= 1   # relaying actually helps on some draws


def test_fdma_beats_tdma_on_total_power():
    cfg = ScenarioConfig(n_devices=5, n_helpers=2)
    ch = _channels(cfg, 3)
    sched = classify_df(ch)
    tdma = minimize_power("df-tdma", sched, ch, cfg)
    fdma = minimize_power("df-fdma", sched, ch, cfg)
    assert fdma.objective_watts < tdma.objective_watts


# ---------------------------------------------------------------------------
# Bandwidth allocation
# ---------------------------------------------------------------------------

def test_maxmin_df_bandwidth_sums_to_one_exactly():
    cfg = ScenarioConfig(n_devices=5, n_helpers=2)
    for trial in range(5):
        ch = _channels(cfg, trial)
        sched = classify_df(ch)
        beta, beta_s, r = allocate_bandwidth_maxmin_df(sched, ch, cfg.p_max, cfg)
        assert beta.sum() == 1.0   # exact, not approx
        assert np.all(beta > 0) and r > 0
        two = list(sched.two_hop)
        if two:
            assert beta_s[two].sum() <= sum(beta[n] for n in two) + 1e-9


def test_maxmin_af_bandwidth_sums_to_one_exactly():
    cfg = ScenarioConfig(n_devices=5, n_helpers=2)
    for trial in range(5):
        ch = _channels(cfg, trial)
        sched = classify_af(ch, cfg.p_max, cfg)
        beta = allocate_bandwidth_maxmin_af(sched, ch, cfg.p_max, cfg)
        assert beta.sum() == 1.0
        assert np.all(beta > 0)


def test_maxmin_df_rejects_nonpositive_power():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1)
    ch = _channels(cfg, 0)
    with pytest.raises(ValueError):
        allocate_bandwidth_maxmin_df(all_single_hop(2), ch, 0.0, cfg)


# ---------------------------------------------------------------------------
# RIS phases
# ---------------------------------------------------------------------------

def test_ris_closed_form_achieves_coherent_sum():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h_d = rng.normal() + 1j * rng.normal()
        u = rng.normal(size=6) + 1j * rng.normal(size=6)
        v = ris_phases_closed_form(h_d, u)
        assert np.allclose(np.abs(v), 1.0)
        assert abs(h_d + np.vdot(u, v)) == pytest.approx(
            abs(h_d) + np.sum(np.abs(u)), rel=1e-12)


def test_ris_sca_monotone_and_reaches_closed_form():
    rng = np.random.default_rng(4)
    for _ in range(20):
        h_d = rng.normal() + 1j * rng.normal()
        u = rng.normal(size=5) + 1j * rng.normal(size=5)
        v, gain, converged = ris_phases_sca(h_d, u, np.ones(5, dtype=complex),
                                            tol=1e-8)
        assert converged
        best = (abs(h_d) + np.sum(np.abs(u))) ** 2
        assert gain <= best * (1.0 + 1e-12)
        assert gain == pytest.approx(best, rel=1e-6)


def test_optimize_phases_modes_and_validation():
    cfg = ScenarioConfig(n_devices=2, n_helpers=2, ris_elements=4)
    ch = _channels(cfg, 0)
    v = optimize_phases(ch)
    assert v.shape == (2, 8) and np.allclose(np.abs(v), 1.0)
    v2 = optimize_phases(ch, method="sca")
    assert np.allclose(np.abs(v2), 1.0)
    vr = optimize_phases(ch, method="random", rng=np.random.default_rng(0))
    assert np.allclose(np.abs(vr), 1.0)
    with pytest.raises(ValueError):
        optimize_phases(ch, method="random")
    with pytest.raises(ValueError):
        optimize_phases(ch, method="grid")


def test_ris_optimized_phases_cost_less_power_than_random():
    cfg = ScenarioConfig(n_devices=3, n_helpers=2, ris_elements=8)
    ch = _channels(cfg, 1)
    opt = minimize_power("ris-tdma", all_single_hop(3), ch, cfg)
    rnd_phases = optimize_phases(ch, method="random",
                                 rng=np.random.default_rng(1))
    rnd = minimize_power("ris-tdma", all_single_hop(3), ch, cfg,
                         phases=rnd_phases)
    assert opt.status == "optimal"
    assert opt.objective_watts <= rnd.objective_watts * (1.0 + 1e-9)


# ---------------------------------------------------------------------------
# Dispatch and oracle sanity
# ---------------------------------------------------------------------------

def test_minimize_power_unknown_mode():
    cfg = ScenarioConfig(n_devices=1, n_helpers=0)
    ch = _channels(cfg, 0)
    with pytest.raises(ValueError):
        minimize_power("ofdma", all_single_hop(1), ch, cfg)


def test_oracle_agrees_with_solver_on_tiny_instance():
    cfg = ScenarioConfig(n_devices=2, n_helpers=1, payload_bits=24000.0)
    ch = _channels(cfg, 0)
    sched = Schedule(one_hop=(0,), two_hop=(1,), relay_of={1: 0})
    rep = minimize_power("df-tdma", sched, ch, cfg)
    oracle = brute_force_oracle("df-tdma", sched, ch, cfg)
    assert rep.status == "optimal" and np.isfinite(oracle)
    gap_db = abs(10.0 * np.log10(rep.objective_watts / oracle))
    assert gap_db < 0.3


def test_oracle_rejects_too_many_variables():
    cfg = ScenarioConfig(n_devices=4, n_helpers=1)
    ch = _channels(cfg, 0)
    with pytest.raises(ValueError):
        brute_force_oracle("single-hop", all_single_hop(4), ch, cfg)
