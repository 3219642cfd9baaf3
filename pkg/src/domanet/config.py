"""System-level radio parameters for the uplink D-OMA simulator.

All powers are in watts, bandwidths in Hz, distances in metres. The QoS
rate target is expressed in bps/Hz (normalised by the nominal subband
width, see ``qos_rate_bps``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class ConfigError(ValueError):
    """Raised when a SystemConfig violates a structural requirement."""


@dataclass(frozen=True)
class SystemConfig:
    num_aps: int = 2                      # K
    ues_per_ap: int = 6                   # U_k, identical for every AP
    num_subbands: int = 4                 # N
    subband_bandwidth_hz: float = 180e3   # B, nominal width before overlap
    cluster_capacity: int = 2             # max UEs per subband per AP
    max_tx_power_w: float = 0.2           # per-UE transmit budget
    circuit_power_w: float = 0.03         # per-UE circuit drain
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 3.0
    qos_rate_bps_hz: float = 0.1          # per-UE rate floor, normalised by B
    pathloss_offset_db: float = 34.53
    pathloss_exponent_db: float = 38.0    # multiplies log10(d)
    area_m: float = 400.0                 # square deployment side
    coverage_diameter_m: float = 200.0    # UE draw disc around each AP
    min_ue_ap_distance_m: float = 1.0
    ap_positions: tuple[tuple[float, float], ...] = ((100.0, 100.0), (300.0, 100.0))

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_aps < 1 or self.ues_per_ap < 1 or self.num_subbands < 1:
            raise ConfigError("num_aps, ues_per_ap and num_subbands must be >= 1")
        if len(self.ap_positions) != self.num_aps:
            raise ConfigError(
                f"expected {self.num_aps} AP positions, got {len(self.ap_positions)}"
            )
        if self.subband_bandwidth_hz <= 0:
            raise ConfigError("subband_bandwidth_hz must be positive")
        if self.cluster_capacity < 1:
            raise ConfigError("cluster_capacity must be >= 1")
        if self.max_tx_power_w <= 0 or self.circuit_power_w < 0:
            raise ConfigError("power budgets must be positive")
        if self.qos_rate_bps_hz < 0:
            raise ConfigError("qos_rate_bps_hz must be >= 0")
        if self.min_ue_ap_distance_m <= 0:
            raise ConfigError("min_ue_ap_distance_m must be positive")
        if self.coverage_diameter_m <= 2 * self.min_ue_ap_distance_m:
            raise ConfigError("coverage disc too small for the minimum UE-AP distance")
        # every UE must be placeable somewhere
        if self.num_subbands * self.cluster_capacity < self.ues_per_ap:
            raise ConfigError(
                "subband capacity N*L cannot hold ues_per_ap UEs"
            )

    # ---- derived quantities -------------------------------------------------

    @property
    def total_bandwidth_hz(self) -> float:
        """W = N * B."""
        return self.num_subbands * self.subband_bandwidth_hz

    def noise_power_w(self) -> float:
        """Thermal noise power over one nominal subband, noise figure included."""
        psd_w_hz = 10.0 ** ((self.noise_psd_dbm_hz + self.noise_figure_db) / 10.0) / 1e3
        return float(psd_w_hz * self.subband_bandwidth_hz)

    @property
    def qos_rate_bps(self) -> float:
        """Per-UE rate floor in bps (the bps/Hz target scaled by B)."""
        return self.qos_rate_bps_hz * self.subband_bandwidth_hz

    def pathloss_gain(self, distance_m: float) -> float:
        """Linear power gain of the distance-dependent path loss."""
        d = max(distance_m, self.min_ue_ap_distance_m)
        loss_db = self.pathloss_offset_db + self.pathloss_exponent_db * math.log10(d)
        return 10.0 ** (-loss_db / 10.0)

    def with_overrides(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)


def _centered_aps(num_aps: int, area_m: float) -> tuple[tuple[float, float], ...]:
    """Evenly spaced AP row across the middle of the square area."""
    step = area_m / (num_aps + 1)
    y = area_m / 2.0
    return tuple((step * (i + 1), y) for i in range(num_aps))


def paper_scale() -> SystemConfig:
    """Full-size configuration (2 APs, 6 UEs each, 4 subbands).

    Solves are long at this size; the test suite sticks to desk_scale().
    """
    return SystemConfig()


def desk_scale(num_aps: int = 2, ues_per_ap: int = 2, num_subbands: int = 2,
               **overrides) -> SystemConfig:
    """Shrunk configuration used by the test suite and quick experiments."""
    area = overrides.pop("area_m", 400.0)
    ap_positions = overrides.pop("ap_positions", None)
    if ap_positions is None:
        if num_aps == 2 and area == 400.0:
            ap_positions = ((100.0, 100.0), (300.0, 100.0))
        else:
            ap_positions = _centered_aps(num_aps, area)
    return SystemConfig(
        num_aps=num_aps,
        ues_per_ap=ues_per_ap,
        num_subbands=num_subbands,
        area_m=area,
        ap_positions=ap_positions,
        **overrides,
    )
