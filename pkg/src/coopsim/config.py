"""Scenario configuration: physical and protocol parameters of one subnetwork."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


class ConfigError(ValueError):
    """Raised when a ScenarioConfig (or config file) is invalid."""


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and protocol parameters of a subnetwork scenario.

    Helpers are secondary APs in relay mode (``ris_elements == 0``) or RISs
    otherwise.  ``pilots`` is the number of training symbols per device
    (relay mode) or per device and RIS (RIS mode).
    """

    area_side: float = 3.0               # m
    n_devices: int = 10
    n_helpers: int = 1
    ris_elements: int = 0                # elements per helper; 0 => relay mode
    payload_bits: float = 256.0          # bits per device
    cycle_time: float = 1e-4             # s
    bandwidth: float = 100e6             # Hz
    carrier_freq: float = 10e9           # Hz
    p_max: float = 1.0                   # W
    noise_psd: float = 10 ** ((-174.0 - 30.0) / 10.0)   # W/Hz
    shadow_std_db: float = 7.0
    rician_k: float = 6.0                # linear K-factor, helper->pAP links
    theta: float = 1.0                   # rate discount in (0, 1]
    pilots: int = 4                      # L (relay) or L_k (RIS)
    processing_fraction: float = 0.05    # FDMA-DF guard fraction in [0, 1)
    csi_mode: str = "perfect"            # "perfect" | "imperfect"
    master_seed: int = 0
    # Log-distance path-loss parametrization (indoor factory).
    path_loss_exponent: float = 2.6
    path_loss_ref_distance: float = 1.0  # m
    min_distance: float = 0.1            # m, clamp floor
    excess_loss_db: float = 35.0         # fixed clutter/obstruction loss per link

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.area_side <= 0:
            raise ConfigError("area_side must be positive")
        if self.n_devices < 1:
            raise ConfigError("n_devices must be at least 1")
        if self.n_helpers < 0:
            raise ConfigError("n_helpers must be nonnegative")
        if self.ris_elements < 0:
            raise ConfigError("ris_elements must be nonnegative")
        if self.payload_bits < 0:
            raise ConfigError("payload_bits must be nonnegative")
        if self.cycle_time <= 0:
            raise ConfigError("cycle_time must be positive")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")
        if self.carrier_freq <= 0:
            raise ConfigError("carrier_freq must be positive")
        if self.p_max <= 0:
            raise ConfigError("p_max must be positive")
        if self.noise_psd <= 0:
            raise ConfigError("noise_psd must be positive")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError("theta must lie in (0, 1]")
        if self.pilots < 0:
            raise ConfigError("pilots must be nonnegative")
        if not 0.0 <= self.processing_fraction < 1.0:
            raise ConfigError("processing_fraction must lie in [0, 1)")
        if self.csi_mode not in ("perfect", "imperfect"):
            raise ConfigError("csi_mode must be 'perfect' or 'imperfect'")
        if self.is_ris_mode and self.csi_mode == "imperfect":
            # Unique identifiability of the cascaded channel needs
            # L_k >= J_k + 1 training slots per RIS.
            if self.pilots < self.ris_elements + 1:
                raise ConfigError(
                    "RIS mode needs pilots >= ris_elements + 1 "
                    f"(got L={self.pilots}, J={self.ris_elements})"
                )
        if self.min_distance <= 0:
            raise ConfigError("min_distance must be positive")
        if self.excess_loss_db < 0:
            raise ConfigError("excess_loss_db must be nonnegative")

    @property
    def is_ris_mode(self) -> bool:
        return self.ris_elements > 0

    @property
    def noise_power(self) -> float:
        """AWGN power over the full band, sigma_0 = noise_psd * W."""
        return self.noise_psd * self.bandwidth

    @property
    def effective_theta(self) -> float:
        """Rate discount actually applied: forced to 1 under perfect CSI."""
        return 1.0 if self.csi_mode == "perfect" else self.theta

    def replace(self, **kwargs) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)
