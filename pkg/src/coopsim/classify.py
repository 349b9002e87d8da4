"""Device classification into single-hop / two-hop sets and relay selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .scenario import ChannelSet


@dataclass(frozen=True)
class Schedule:
    """Partition of devices into single-hop and two-hop sets with relays.

    ``relay_of`` maps each two-hop device index to its selected helper.
    """

    one_hop: tuple
    two_hop: tuple
    relay_of: dict = field(default_factory=dict)

    @property
    def relay_set(self) -> frozenset:
        return frozenset(self.relay_of.values())

    @property
    def n_devices(self) -> int:
        return len(self.one_hop) + len(self.two_hop)

    def validate(self):
        all_dev = sorted(self.one_hop) + sorted(self.two_hop)
        assert sorted(all_dev) == list(range(self.n_devices))
        assert set(self.relay_of) == set(self.two_hop)


def all_single_hop(n_devices: int) -> Schedule:
    return Schedule(one_hop=tuple(range(n_devices)), two_hop=(), relay_of={})


def classify_df(channels_est: ChannelSet) -> Schedule:
    """DF classification: two-hop metric g = max_k (1/2) min(|h_a|^2, |h_s|^2).

    A device goes two-hop iff its best relay metric strictly beats the
    direct gain |h_d|^2; ties resolve to single-hop, argmax ties to the
    lowest helper index.
    """
    N, K = channels_est.n_devices, channels_est.n_helpers
    gd = np.abs(channels_est.h_d_hat) ** 2
    if K == 0:
        return all_single_hop(N)
    ga = np.abs(channels_est.h_a_hat) ** 2       # (K,)
    gs = np.abs(channels_est.h_s_hat) ** 2       # (N, K)
    metric = 0.5 * np.minimum(ga[None, :], gs)   # (N, K)
    one_hop, two_hop, relay_of = [], [], {}
    for n in range(N):
        k_best = int(np.argmax(metric[n]))
        if gd[n] >= metric[n, k_best]:
            one_hop.append(n)
        else:
            two_hop.append(n)
            relay_of[n] = k_best
    return Schedule(one_hop=tuple(one_hop), two_hop=tuple(two_hop), relay_of=relay_of)


def classify_af(channels_est: ChannelSet, p_ref: float, config: ScenarioConfig) -> Schedule:
    """AF classification at equal reference power on every node.

    Per-helper metric is the AF rate factor (1/2) log2(1 + g_d + g_af)
    over the full band, compared to the direct log2(1 + g_d).
    """
    if p_ref <= 0:
        raise ValueError("classify_af requires p_ref > 0")
    N, K = channels_est.n_devices, channels_est.n_helpers
    sigma0 = config.noise_power
    gd = p_ref * np.abs(channels_est.h_d_hat) ** 2 / sigma0
    if K == 0:
        return all_single_hop(N)
    cs = p_ref * np.abs(channels_est.h_s_hat) ** 2 / sigma0       # (N, K)
    ca = p_ref * np.abs(channels_est.h_a_hat) ** 2 / sigma0       # (K,)
    g_af = cs * ca[None, :] / (cs + ca[None, :] + 1.0)
    r_af = 0.5 * np.log2(1.0 + gd[:, None] + g_af)                # (N, K)
    r_d = np.log2(1.0 + gd)
    one_hop, two_hop, relay_of = [], [], {}
    for n in range(N):
        k_best = int(np.argmax(r_af[n]))
        if r_d[n] >= r_af[n, k_best]:
            one_hop.append(n)
        else:
            two_hop.append(n)
            relay_of[n] = k_best
    return Schedule(one_hop=tuple(one_hop), two_hop=tuple(two_hop), relay_of=relay_of)
