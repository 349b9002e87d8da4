"""Closed-form SNR, rate, timing, overflow, and outage computations.

Rates follow the Shannon form with a multiplicative discount theta applied
when operating on estimated channels; noise power is sigma_0 = noise_psd * W
scaled by the bandwidth fraction of the subchannel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classify import Schedule
from .config import ScenarioConfig
from .scenario import ChannelSet, training_budget

MODES = ("single-hop", "df-tdma", "df-fdma", "af-tdma", "af-fdma", "ris-tdma")


@dataclass
class Allocation:
    """Decision variables of one realization.

    ``p_relay`` holds, at index n, the relay power spent on forwarding
    device n's packet (zero for single-hop devices).  ``ris_phases`` is an
    (N, Q) unit-modulus matrix, one phase vector per device slot.
    """

    p_dev: np.ndarray
    p_relay: np.ndarray = None
    beta: np.ndarray = None
    beta_s: np.ndarray = None
    alpha: float = 1.0
    ris_phases: np.ndarray = None

    def __post_init__(self):
        self.p_dev = np.asarray(self.p_dev, dtype=float)
        n = self.p_dev.shape[0]
        if self.p_relay is None:
            self.p_relay = np.zeros(n)
        if self.beta is None:
            self.beta = np.ones(n)
        if self.beta_s is None:
            self.beta_s = np.array(self.beta, dtype=float, copy=True)
        self.p_relay = np.asarray(self.p_relay, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.beta_s = np.asarray(self.beta_s, dtype=float)


@dataclass
class RateReport:
    """Per-device SNRs, rates, and times plus phase/grand totals."""

    snr_direct: np.ndarray
    snr_phase1: np.ndarray
    snr_phase2: np.ndarray
    rate_1h: np.ndarray
    rate_phase1: np.ndarray
    rate_phase2: np.ndarray
    time_1h: np.ndarray
    time_2h: np.ndarray
    total_1h: float
    total_2h_phase1: float = 0.0
    total_2h_phase2: float = 0.0
    total: float = 0.0
    extras: dict = field(default_factory=dict)


def rate_direct(p: float, gain2: float, beta: float, config: ScenarioConfig,
                theta: float = 1.0):
    """Single-hop rate W*beta*log2(1 + p*gain2 / (beta*sigma0)), discounted."""
    sigma0 = config.noise_power
    return theta * config.bandwidth * beta * np.log2(1.0 + p * gain2 / (beta * sigma0))


def rate_df_phase2(p_relay: float, gain_a2: float, p_dev: float, gain_d2: float,
                   beta_s: float, config: ScenarioConfig, theta: float = 1.0):
    """DF second-phase rate with coherent combining of both phases at the pAP."""
    sigma0 = config.noise_power
    g = (p_relay * gain_a2 + p_dev * gain_d2) / (beta_s * sigma0)
    return theta * config.bandwidth * beta_s * np.log2(1.0 + g)


def af_snr(p_dev: float, gain_s2: float, p_relay: float, gain_a2: float,
           beta: float, config: ScenarioConfig):
    """AF relayed-path SNR with the constant-power amplification substituted."""
    sigma0 = config.noise_power
    num = p_dev * p_relay * gain_a2 * gain_s2
    den = (p_dev * gain_s2 + p_relay * gain_a2 + beta * sigma0) * beta * sigma0
    return num / den


def af_snr_mu_form(p_dev, gain_s2, p_relay, gain_a2, beta, config: ScenarioConfig):
    """AF SNR through the explicit amplification factor (algebraic oracle)."""
    sigma0 = config.noise_power
    mu2 = 1.0 / (p_dev * gain_s2 + beta * sigma0)
    num = p_dev * p_relay * mu2 * gain_a2 * gain_s2
    den = (1.0 + mu2 * p_relay * gain_a2) * beta * sigma0
    return num / den


def rate_af(p_dev: float, gain_d2: float, gain_s2: float, p_relay: float,
            gain_a2: float, beta: float, config: ScenarioConfig, theta: float = 1.0):
    """AF combined rate; the 1/2 reflects the two equal-duration slots."""
    sigma0 = config.noise_power
    gd = p_dev * gain_d2 / (beta * sigma0)
    gaf = af_snr(p_dev, gain_s2, p_relay, gain_a2, beta, config)
    return theta * 0.5 * config.bandwidth * beta * np.log2(1.0 + gd + gaf)


def ris_effective_channel(h_d: complex, u_all: np.ndarray, v: np.ndarray) -> complex:
    """Combined direct-plus-RIS channel h_d + u^H v for unit-modulus v."""
    u_all = np.asarray(u_all)
    v = np.asarray(v)
    if u_all.shape != v.shape:
        raise ValueError(f"length mismatch: u {u_all.shape} vs v {v.shape}")
    return h_d + np.vdot(u_all, v)


def rate_ris(p: float, h_eff: complex, config: ScenarioConfig, theta: float = 1.0):
    sigma0 = config.noise_power
    g = p * np.abs(h_eff) ** 2 / sigma0
    return theta * config.bandwidth * np.log2(1.0 + g)


def _safe_div(b, r):
    with np.errstate(divide="ignore"):
        out = np.where(r > 0, b / np.maximum(r, 1e-300), np.where(b > 0, np.inf, 0.0))
    return out


def _gains(channels: ChannelSet, use_estimates: bool):
    if use_estimates:
        return (
            np.abs(channels.h_d_hat) ** 2,
            np.abs(channels.h_s_hat) ** 2,
            np.abs(channels.h_a_hat) ** 2,
        )
    return (
        np.abs(channels.h_d) ** 2,
        np.abs(channels.h_s) ** 2,
        np.abs(channels.h_a) ** 2,
    )


def rate_report(mode: str, schedule: Schedule, allocation: Allocation,
                channels: ChannelSet, config: ScenarioConfig, *,
                use_estimates: bool = True, theta: float = None) -> RateReport:
    """Per-device rates and transmission times for the given allocation.

    By default rates come from the estimated channels discounted by the
    config's effective theta (the scheduler's view); pass
    ``use_estimates=False, theta=1.0`` for true achievable rates.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if theta is None:
        theta = config.effective_theta
    N = schedule.n_devices
    B = np.full(N, float(config.payload_bits))
    gd, gs, ga = _gains(channels, use_estimates)

    snr_d = np.zeros(N)
    snr_1 = np.zeros(N)
    snr_2 = np.zeros(N)
    r1h = np.zeros(N)
    rp1 = np.zeros(N)
    rp2 = np.zeros(N)
    t1h = np.zeros(N)
    t2h = np.zeros(N)
    extras = {}
    sigma0 = config.noise_power
    one_hop = list(schedule.one_hop)
    two_hop = list(schedule.two_hop)

    if mode == "ris-tdma":
        if allocation.ris_phases is None:
            raise ValueError("ris-tdma requires allocation.ris_phases")
        u = channels.u_cascade_hat if use_estimates else channels.u_cascade
        h_d = channels.h_d_hat if use_estimates else channels.h_d
        h_eff = np.array(
            [
                ris_effective_channel(
                    h_d[n], u[n].reshape(-1), allocation.ris_phases[n]
                )
                for n in range(N)
            ]
        )
        extras["h_eff"] = h_eff
        for n in range(N):
            snr_d[n] = allocation.p_dev[n] * np.abs(h_eff[n]) ** 2 / sigma0
            r1h[n] = rate_ris(allocation.p_dev[n], h_eff[n], config, theta)
            t1h[n] = _safe_div(B[n], r1h[n])
        total_1h = float(np.sum(t1h))
        return RateReport(snr_d, snr_1, snr_2, r1h, rp1, rp2, t1h, t2h,
                          total_1h=total_1h, total=total_1h, extras=extras)

    for n in one_hop:
        beta = allocation.beta[n]
        snr_d[n] = allocation.p_dev[n] * gd[n] / (beta * sigma0)
        r1h[n] = rate_direct(allocation.p_dev[n], gd[n], beta, config, theta)
        t1h[n] = _safe_div(B[n], r1h[n])

    if mode in ("df-tdma", "df-fdma", "single-hop"):
        for n in two_hop:
            k = schedule.relay_of[n]
            beta = allocation.beta[n]
            beta_s = allocation.beta_s[n]
            snr_1[n] = allocation.p_dev[n] * gs[n, k] / (beta * sigma0)
            rp1[n] = rate_direct(allocation.p_dev[n], gs[n, k], beta, config, theta)
            if mode == "df-tdma":
                # TDMA phase 2 combines the relayed signal with the phase-1
                # direct reception.
                snr_2[n] = (allocation.p_relay[n] * ga[k]
                            + allocation.p_dev[n] * gd[n]) / (beta_s * sigma0)
                rp2[n] = rate_df_phase2(allocation.p_relay[n], ga[k],
                                        allocation.p_dev[n], gd[n],
                                        beta_s, config, theta)
            else:
                # FDMA phase 2 is relay-only (different band, no combining).
                snr_2[n] = allocation.p_relay[n] * ga[k] / (beta_s * sigma0)
                rp2[n] = rate_df_phase2(allocation.p_relay[n], ga[k],
                                        0.0, 0.0, beta_s, config, theta)
            t2h[n] = _safe_div(B[n], rp1[n]) + _safe_div(B[n], rp2[n])
    elif mode in ("af-tdma", "af-fdma"):
        for n in two_hop:
            k = schedule.relay_of[n]
            beta = allocation.beta[n]
            snr_1[n] = allocation.p_dev[n] * gs[n, k] / (beta * sigma0)
            snr_2[n] = af_snr(allocation.p_dev[n], gs[n, k],
                              allocation.p_relay[n], ga[k], beta, config)
            rp2[n] = rate_af(allocation.p_dev[n], gd[n], gs[n, k],
                             allocation.p_relay[n], ga[k], beta, config, theta)
            t2h[n] = _safe_div(B[n], rp2[n])

    if mode in ("single-hop", "df-tdma", "af-tdma"):
        total_1h = float(np.sum(t1h[one_hop])) if one_hop else 0.0
        if mode == "df-tdma":
            tp1 = float(sum(_safe_div(B[n], rp1[n]) for n in two_hop))
            tp2 = float(sum(_safe_div(B[n], rp2[n]) for n in two_hop))
        else:
            tp1 = float(np.sum(t2h[two_hop])) if two_hop else 0.0
            tp2 = 0.0
        total = total_1h + tp1 + tp2
    else:
        c1h = max((t1h[n] for n in one_hop), default=0.0)
        if mode == "df-fdma" and two_hop:
            # All two-hop devices share one phase-1/processing/phase-2 time
            # split, so the schedulable completion is the sum of the phase
            # maxima plus the processing slice of the remaining cycle.
            t_prime, _ = training_budget(config)
            tp1 = max(_safe_div(B[n], rp1[n]) for n in two_hop)
            tp2 = max(_safe_div(B[n], rp2[n]) for n in two_hop)
            c2h = tp1 + config.processing_fraction * t_prime + tp2
        else:
            tp1, tp2 = 0.0, 0.0
            c2h = max((t2h[n] for n in two_hop), default=0.0)
        total_1h = c1h
        total = max(c1h, c2h)
    return RateReport(snr_d, snr_1, snr_2, r1h, rp1, rp2, t1h, t2h,
                      total_1h=total_1h, total_2h_phase1=tp1,
                      total_2h_phase2=tp2, total=float(total), extras=extras)


def total_time(mode: str, schedule: Schedule, allocation: Allocation,
               channels: ChannelSet, config: ScenarioConfig, *,
               use_estimates: bool = True, theta: float = None) -> float:
    """Scheduled uplink completion time: TDMA sums sub-slots, FDMA takes the
    max per-device completion (including DF processing time)."""
    return rate_report(mode, schedule, allocation, channels, config,
                       use_estimates=use_estimates, theta=theta).total


def overflow_check(total: float, t_prime: float) -> bool:
    """True iff the scheduled transmissions do not fit the remaining cycle."""
    return bool(total > t_prime)


def outage_check(mode: str, schedule: Schedule, allocation: Allocation,
                 channels_true: ChannelSet, channels_est: ChannelSet,
                 config: ScenarioConfig, theta: float = None) -> bool:
    """True iff any theta-discounted estimated link rate exceeds the true one.

    Checked per link: direct for single-hop devices, both phases for DF
    two-hop, the combined AF rate for AF two-hop, the effective combined
    channel for RIS.
    """
    if theta is None:
        theta = config.effective_theta
    est = rate_report(mode, schedule, allocation, channels_est, config,
                      use_estimates=True, theta=theta)
    true = rate_report(mode, schedule, allocation, channels_true, config,
                       use_estimates=False, theta=1.0)
    tol = 1e-12
    for n in schedule.one_hop:
        if est.rate_1h[n] > true.rate_1h[n] * (1 + tol):
            return True
    if mode == "ris-tdma":
        return False
    for n in schedule.two_hop:
        if mode in ("df-tdma", "df-fdma"):
            if est.rate_phase1[n] > true.rate_phase1[n] * (1 + tol):
                return True
            if est.rate_phase2[n] > true.rate_phase2[n] * (1 + tol):
                return True
        else:
            if est.rate_phase2[n] > true.rate_phase2[n] * (1 + tol):
                return True
    return False
