"""Topology, fading-channel, and channel-estimation sampling.

All sampling here is a pure function of (config, trial_index): every random
quantity is drawn from its own counter-based stream, keyed by the master
seed, the trial index, a purpose tag, and the entity indices involved.
Adding a helper or a device therefore extends a realization instead of
reshuffling it, which is what makes paired comparisons across helper counts
meaningful.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ScenarioConfig

SPEED_OF_LIGHT = 299_792_458.0

# Stream tags (strings hashed to ints for SeedSequence keys).
_TAG_TOPOLOGY = "topology"
_TAG_FADE = "fading"
_TAG_SHADOW = "shadow"
_TAG_EST = "estimation"


def _stream(master_seed: int, trial_index: int, tag: str, *idx: int) -> np.random.Generator:
    key = (int(master_seed), int(trial_index), zlib.crc32(tag.encode())) + tuple(
        int(i) for i in idx
    )
    return np.random.default_rng(np.random.SeedSequence(key))


def _cn(rng: np.random.Generator, size) -> np.ndarray:
    """Circularly symmetric complex Gaussian, unit variance per entry."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


@dataclass(frozen=True)
class Topology:
    pap_position: np.ndarray       # (2,)
    helper_positions: np.ndarray   # (K, 2)
    device_positions: np.ndarray   # (N, 2)


@dataclass
class ChannelSet:
    """True and estimated complex gains for every link class.

    All gains include the large-scale factor (path loss and shadowing).
    Relay-mode fields: h_d (N,), h_s (N, K), h_a (K,).  RIS-mode fields:
    h_ris_dev (N, K, J), h_ris_ap (K, J), u_cascade (N, K, J).  ``*_hat``
    are the estimated counterparts; ``sigma_e_*`` the per-link small-scale
    estimation-error variances (zero under perfect CSI).
    """

    h_d: np.ndarray
    h_s: np.ndarray
    h_a: np.ndarray
    h_ris_dev: np.ndarray
    h_ris_ap: np.ndarray
    u_cascade: np.ndarray
    h_d_hat: np.ndarray
    h_s_hat: np.ndarray
    h_a_hat: np.ndarray
    u_cascade_hat: np.ndarray
    sigma_e_d: np.ndarray          # (N,)
    sigma_e_s: np.ndarray          # (N, K)
    sigma_e_a: np.ndarray          # (K,)
    sigma_e_u: np.ndarray          # (N, K)
    # Large-scale linear power gains, kept for tests and estimation.
    gain_d: np.ndarray
    gain_s: np.ndarray
    gain_a: np.ndarray
    gain_ris_dev: np.ndarray       # (N, K)
    gain_ris_ap: np.ndarray        # (K,)
    los_a: np.ndarray              # (K,) LoS small-scale part of helper->pAP

    @property
    def n_devices(self) -> int:
        return self.h_d.shape[0]

    @property
    def n_helpers(self) -> int:
        return self.h_a.shape[0]


def sample_topology(config: ScenarioConfig, trial_index: int) -> Topology:
    """Uniform positions of the pAP, helpers, and devices in the square area."""
    a = config.area_side
    pap = _stream(config.master_seed, trial_index, _TAG_TOPOLOGY, 0).uniform(0, a, 2)
    helpers = np.array(
        [
            _stream(config.master_seed, trial_index, _TAG_TOPOLOGY, 1, k).uniform(0, a, 2)
            for k in range(config.n_helpers)
        ]
    ).reshape(config.n_helpers, 2)
    devices = np.array(
        [
            _stream(config.master_seed, trial_index, _TAG_TOPOLOGY, 2, n).uniform(0, a, 2)
            for n in range(config.n_devices)
        ]
    ).reshape(config.n_devices, 2)
    return Topology(pap_position=pap, helper_positions=helpers, device_positions=devices)


def path_loss_db(distance: float, f_c: float, *, exponent: float = 2.6,
                 ref_distance: float = 1.0, min_distance: float = 0.1) -> float:
    """Log-distance path loss in dB with free-space anchor at ``ref_distance``.

    Distances below ``min_distance`` are clamped.
    """
    d = np.maximum(distance, min_distance)
    pl0 = 20.0 * np.log10(4.0 * np.pi * ref_distance * f_c / SPEED_OF_LIGHT)
    return pl0 + 10.0 * exponent * np.log10(d / ref_distance)


def _large_scale_gain(dist, config: ScenarioConfig, shadow_db):
    pl = path_loss_db(
        dist,
        config.carrier_freq,
        exponent=config.path_loss_exponent,
        ref_distance=config.path_loss_ref_distance,
        min_distance=config.min_distance,
    )
    return 10.0 ** (-(pl + config.excess_loss_db + shadow_db) / 10.0)


def cascaded_channel(h_dev_ris: np.ndarray, h_ris_ap: np.ndarray) -> np.ndarray:
    """Element-wise cascade u = diag(h_dev^H) h_ap, the estimable quantity."""
    h_dev_ris = np.asarray(h_dev_ris)
    h_ris_ap = np.asarray(h_ris_ap)
    if h_dev_ris.shape != h_ris_ap.shape:
        raise ValueError(
            f"cascaded_channel: shape mismatch {h_dev_ris.shape} vs {h_ris_ap.shape}"
        )
    return np.conj(h_dev_ris) * h_ris_ap


def estimation_error_variance(L: float, snr: float):
    """MMSE channel-estimation error variance 1 / (1 + L * SNR)."""
    return 1.0 / (1.0 + np.asarray(L, dtype=float) * np.asarray(snr, dtype=float))


def sample_channels(topology: Topology, config: ScenarioConfig,
                    trial_index: int) -> ChannelSet:
    """Draw true channel gains for every link class.

    Device links are Rayleigh; the helper->pAP link is Rician with the
    configured K-factor (helpers are APs with a likely LoS path).  Each link
    carries an independent log-normal shadowing term.  Estimated channels
    are initialized equal to the true ones (perfect CSI); call
    ``apply_estimation_error`` for the imperfect-CSI model.
    """
    N, K, J = config.n_devices, config.n_helpers, config.ris_elements
    seed, t = config.master_seed, trial_index

    d_dev_pap = np.linalg.norm(topology.device_positions - topology.pap_position, axis=1)
    d_help_pap = np.linalg.norm(topology.helper_positions - topology.pap_position, axis=1)
    if K:
        d_dev_help = np.linalg.norm(
            topology.device_positions[:, None, :] - topology.helper_positions[None, :, :],
            axis=2,
        )
    else:
        d_dev_help = np.zeros((N, 0))

    shadow = config.shadow_std_db
    sh_d = np.array(
        [shadow * _stream(seed, t, _TAG_SHADOW, 0, n).standard_normal() for n in range(N)]
    )
    sh_a = np.array(
        [shadow * _stream(seed, t, _TAG_SHADOW, 1, k).standard_normal() for k in range(K)]
    )
    sh_s = np.array(
        [
            [shadow * _stream(seed, t, _TAG_SHADOW, 2, n, k).standard_normal() for k in range(K)]
            for n in range(N)
        ]
    ).reshape(N, K)

    gain_d = _large_scale_gain(d_dev_pap, config, sh_d)
    gain_a = _large_scale_gain(d_help_pap, config, sh_a)
    gain_s = _large_scale_gain(d_dev_help, config, sh_s)

    # Small-scale fading.
    ss_d = np.array([_cn(_stream(seed, t, _TAG_FADE, 0, n), ()) for n in range(N)])
    kf = config.rician_k
    los = np.sqrt(kf / (kf + 1.0))
    scat = np.sqrt(1.0 / (kf + 1.0))
    los_a = np.empty(K, dtype=complex)
    ss_a = np.empty(K, dtype=complex)
    for k in range(K):
        rng = _stream(seed, t, _TAG_FADE, 1, k)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        los_a[k] = los * np.exp(1j * phase)
        ss_a[k] = los_a[k] + scat * _cn(rng, ())
    ss_s = np.array(
        [[_cn(_stream(seed, t, _TAG_FADE, 2, n, k), ()) for k in range(K)] for n in range(N)]
    ).reshape(N, K)

    h_d = np.sqrt(gain_d) * ss_d
    h_a = np.sqrt(gain_a) * ss_a
    h_s = np.sqrt(gain_s) * ss_s

    if J:
        # Same link geometry as the helper links, but RIS panels are placed
        # for line-of-sight, so the clutter excess does not apply to them.
        ris_excess = 10.0 ** (config.excess_loss_db / 10.0)
        gain_ris_dev = gain_s * ris_excess
        gain_ris_ap = gain_a * ris_excess
        h_ris_ap = np.array(
            [np.sqrt(gain_ris_ap[k]) * _cn(_stream(seed, t, _TAG_FADE, 3, k), J) for k in range(K)]
        ).reshape(K, J)
        h_ris_dev = np.array(
            [
                [np.sqrt(gain_ris_dev[n, k]) * _cn(_stream(seed, t, _TAG_FADE, 4, n, k), J) for k in range(K)]
                for n in range(N)
            ]
        ).reshape(N, K, J)
        u = np.stack(
            [cascaded_channel(h_ris_dev[n], h_ris_ap) for n in range(N)]
        )
    else:
        gain_ris_dev = np.zeros((N, K))
        gain_ris_ap = np.zeros(K)
        h_ris_ap = np.zeros((K, 0), dtype=complex)
        h_ris_dev = np.zeros((N, K, 0), dtype=complex)
        u = np.zeros((N, K, 0), dtype=complex)

    return ChannelSet(
        h_d=h_d, h_s=h_s, h_a=h_a,
        h_ris_dev=h_ris_dev, h_ris_ap=h_ris_ap, u_cascade=u,
        h_d_hat=h_d.copy(), h_s_hat=h_s.copy(), h_a_hat=h_a.copy(),
        u_cascade_hat=u.copy(),
        sigma_e_d=np.zeros(N), sigma_e_s=np.zeros((N, K)),
        sigma_e_a=np.zeros(K), sigma_e_u=np.zeros((N, K)),
        gain_d=gain_d, gain_s=gain_s, gain_a=gain_a,
        gain_ris_dev=gain_ris_dev, gain_ris_ap=gain_ris_ap,
        los_a=los_a,
    )


def _mmse_split(true_ss, sigma_e, rng, mean=0.0):
    """Conditionally consistent MMSE decomposition true = estimate + error.

    ``true_ss`` is the unit-variance small-scale coefficient (after removing
    ``mean``); returns the estimate so that estimate ~ CN(mean, 1 - sigma_e),
    error ~ CN(0, sigma_e), independent, summing to the true coefficient.
    """
    centered = true_ss - mean
    w = _cn(rng, np.shape(centered))
    est = (1.0 - sigma_e) * centered + np.sqrt(sigma_e * (1.0 - sigma_e)) * w
    return mean + est


def apply_estimation_error(channels: ChannelSet, config: ScenarioConfig,
                           trial_index: int) -> ChannelSet:
    """Replace the estimated channels by imperfect-CSI MMSE estimates.

    The error variance per link is 1 / (1 + L * SNR) with pilot SNR taken
    at p_max over the full band, including the link's large-scale gain.
    For the Rician helper->pAP link the split applies to the scattered
    component only (the LoS part is treated as known).
    """
    if config.csi_mode != "imperfect":
        raise ConfigError("apply_estimation_error requires csi_mode='imperfect'")
    N, K = channels.n_devices, channels.n_helpers
    seed, t = config.master_seed, trial_index
    L = config.pilots
    snr_scale = config.p_max / config.noise_power

    out = ChannelSet(**{k: np.copy(v) for k, v in vars(channels).items()})

    sig_d = estimation_error_variance(L, snr_scale * channels.gain_d)
    out.sigma_e_d = sig_d
    for n in range(N):
        rng = _stream(seed, t, _TAG_EST, 0, n)
        g = np.sqrt(channels.gain_d[n])
        ss = channels.h_d[n] / g if g > 0 else 0.0
        out.h_d_hat[n] = g * _mmse_split(ss, sig_d[n], rng)

    if config.is_ris_mode:
        # Cascaded-channel LMMSE: same error-variance law per (device, RIS).
        gain_casc = channels.gain_ris_dev * channels.gain_ris_ap[None, :]
        sig_u = estimation_error_variance(L, snr_scale * gain_casc)
        out.sigma_e_u = sig_u
        for n in range(N):
            for k in range(K):
                rng = _stream(seed, t, _TAG_EST, 3, n, k)
                g = np.sqrt(gain_casc[n, k])
                ss = channels.u_cascade[n, k] / g if g > 0 else np.zeros_like(
                    channels.u_cascade[n, k]
                )
                out.u_cascade_hat[n, k] = g * _mmse_split(ss, sig_u[n, k], rng)
        return out

    sig_s = estimation_error_variance(L, snr_scale * channels.gain_s)
    out.sigma_e_s = sig_s
    for n in range(N):
        for k in range(K):
            rng = _stream(seed, t, _TAG_EST, 1, n, k)
            g = np.sqrt(channels.gain_s[n, k])
            ss = channels.h_s[n, k] / g if g > 0 else 0.0
            out.h_s_hat[n, k] = g * _mmse_split(ss, sig_s[n, k], rng)

    sig_a = estimation_error_variance(L, snr_scale * channels.gain_a)
    out.sigma_e_a = sig_a
    scat_var = 1.0 / (config.rician_k + 1.0)
    for k in range(K):
        rng = _stream(seed, t, _TAG_EST, 2, k)
        g = np.sqrt(channels.gain_a[k])
        ss = channels.h_a[k] / g if g > 0 else 0.0
        centered = (ss - channels.los_a[k]) / np.sqrt(scat_var)
        est = _mmse_split(centered, sig_a[k], rng)
        out.h_a_hat[k] = g * (channels.los_a[k] + np.sqrt(scat_var) * est)
    return out


def training_budget(config: ScenarioConfig) -> tuple[float, float]:
    """Cycle time remaining after pilot overhead: (T', training_time).

    Relay mode spends N*L symbol periods; RIS mode N*K*L (estimation is
    per device and per RIS).  Perfect CSI spends nothing.
    """
    if config.csi_mode == "perfect":
        return config.cycle_time, 0.0
    ts = 1.0 / config.bandwidth
    if config.is_ris_mode:
        training = config.n_devices * config.n_helpers * config.pilots * ts
    else:
        training = config.n_devices * config.pilots * ts
    t_prime = config.cycle_time - training
    if t_prime <= 0:
        raise ConfigError(
            f"training exceeds cycle: training={training:.3e}s >= T={config.cycle_time:.3e}s"
        )
    return t_prime, training
