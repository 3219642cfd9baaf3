"""Random network realisations: UE placement, channel gains, SIC ordering.

A Scenario freezes one Monte Carlo drop. Channel gains combine the
log-distance path loss with unit-mean exponential (Rayleigh power) fading,
drawn independently per (UE, receiving AP, subband).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig

SCENARIO_FORMAT = "domanet-scenario-v1"


@dataclass(eq=False)
class Scenario:
    config: SystemConfig
    ue_positions: np.ndarray     # (K, U, 2) metres
    gains: np.ndarray            # (K, U, K, N): gains[k_src, m, k_rx, n] = |g|^2
    noise_power_w: float         # sigma^2 over one nominal subband
    seed: int | None = None
    # decoding_rank[k, n, m] = position of UE m in the SIC order of AP k on
    # subband n (0 decodes first, i.e. largest own-AP gain).
    decoding_rank: np.ndarray = field(init=False)

    def __post_init__(self):
        K, U = self.config.num_aps, self.config.ues_per_ap
        N = self.config.num_subbands
        self.ue_positions = np.asarray(self.ue_positions, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        if self.ue_positions.shape != (K, U, 2):
            raise ValueError(f"ue_positions must have shape {(K, U, 2)}")
        if self.gains.shape != (K, U, K, N):
            raise ValueError(f"gains must have shape {(K, U, K, N)}")
        if not np.all(self.gains > 0):
            raise ValueError("all channel gains must be positive")
        if not self.noise_power_w > 0:
            raise ValueError("noise power must be positive")
        self.decoding_rank = _decoding_rank(self.gains)

    def decoding_order(self, ap: int, subband: int) -> np.ndarray:
        """UE indices of AP ``ap`` sorted by descending own-AP gain on ``subband``."""
        return np.argsort(self.decoding_rank[ap, subband])

    def own_gains(self) -> np.ndarray:
        """Gains towards the serving AP, shape (K, U, N)."""
        K = self.config.num_aps
        return self.gains[np.arange(K), :, np.arange(K), :]

    # ---- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "format": SCENARIO_FORMAT,
            "config": {
                "num_aps": cfg.num_aps,
                "ues_per_ap": cfg.ues_per_ap,
                "num_subbands": cfg.num_subbands,
                "subband_bandwidth_hz": cfg.subband_bandwidth_hz,
                "cluster_capacity": cfg.cluster_capacity,
                "max_tx_power_w": cfg.max_tx_power_w,
                "circuit_power_w": cfg.circuit_power_w,
                "noise_psd_dbm_hz": cfg.noise_psd_dbm_hz,
                "noise_figure_db": cfg.noise_figure_db,
                "qos_rate_bps_hz": cfg.qos_rate_bps_hz,
                "pathloss_offset_db": cfg.pathloss_offset_db,
                "pathloss_exponent_db": cfg.pathloss_exponent_db,
                "area_m": cfg.area_m,
                "coverage_diameter_m": cfg.coverage_diameter_m,
                "min_ue_ap_distance_m": cfg.min_ue_ap_distance_m,
                "ap_positions": [list(p) for p in cfg.ap_positions],
            },
            "seed": self.seed,
            "noise_power_w": self.noise_power_w,
            "ue_positions": self.ue_positions.tolist(),
            "gains": self.gains.tolist(),
        }

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(self.to_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if data.get("format") != SCENARIO_FORMAT:
            raise ValueError(f"unrecognised scenario format: {data.get('format')!r}")
        raw = dict(data["config"])
        raw["ap_positions"] = tuple(tuple(p) for p in raw["ap_positions"])
        config = SystemConfig(**raw)
        return cls(
            config=config,
            ue_positions=np.asarray(data["ue_positions"], dtype=float),
            gains=np.asarray(data["gains"], dtype=float),
            noise_power_w=float(data["noise_power_w"]),
            seed=data.get("seed"),
        )

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _decoding_rank(gains: np.ndarray) -> np.ndarray:
    """Rank UEs by descending own-AP gain per (AP, subband), ties to lower index."""
    K, U, _, N = gains.shape
    rank = np.empty((K, N, U), dtype=np.int64)
    for k in range(K):
        own = gains[k, :, k, :]                      # (U, N)
        for n in range(N):
            order = np.argsort(-own[:, n], kind="stable")
            rank[k, n, order] = np.arange(U)
    return rank


def generate_scenario(config: SystemConfig, seed: int | None = None) -> Scenario:
    """Draw one network realisation.

    UEs are placed uniformly in the coverage disc of their AP (fixed count
    per AP), redrawing any position closer than the minimum UE-AP distance.
    Fading is unit-mean exponential, independent across UEs, receiving APs
    and subbands.
    """
    rng = np.random.default_rng(seed)
    K, U, N = config.num_aps, config.ues_per_ap, config.num_subbands
    radius = config.coverage_diameter_m / 2.0
    aps = np.asarray(config.ap_positions, dtype=float)   # (K, 2)

    positions = np.empty((K, U, 2))
    for k in range(K):
        for m in range(U):
            while True:
                r = radius * np.sqrt(rng.uniform())
                theta = rng.uniform(0.0, 2.0 * np.pi)
                offset = np.array([r * np.cos(theta), r * np.sin(theta)])
                if r >= config.min_ue_ap_distance_m:
                    positions[k, m] = aps[k] + offset
                    break

    # distance of UE (k_src, m) to every receiving AP k_rx
    diff = positions[:, :, None, :] - aps[None, None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))             # (K, U, K)
    dist = np.maximum(dist, config.min_ue_ap_distance_m)
    loss_db = config.pathloss_offset_db + config.pathloss_exponent_db * np.log10(dist)
    beta = 10.0 ** (-loss_db / 10.0)                     # (K, U, K)

    fading = rng.exponential(scale=1.0, size=(K, U, K, N))
    gains = beta[:, :, :, None] * fading

    return Scenario(
        config=config,
        ue_positions=positions,
        gains=gains,
        noise_power_w=config.noise_power_w(),
        seed=seed,
    )


def sort_for_sic(scenario: Scenario, rho: np.ndarray) -> list[list[np.ndarray]]:
    """Decoding order of the *assigned* UEs per (AP, subband).

    ``rho`` is the (K, U, N) assignment tensor; entries > 0 count as
    assigned. Returns ``order[k][n]`` = UE indices sorted by descending
    own-AP gain (ties broken toward the lower UE index).
    """
    K, U, N = rho.shape
    out: list[list[np.ndarray]] = []
    for k in range(K):
        per_ap = []
        for n in range(N):
            assigned = np.flatnonzero(rho[k, :, n] > 0)
            pos = scenario.decoding_rank[k, n, assigned]
            per_ap.append(assigned[np.argsort(pos)])
        out.append(per_ap)
    return out
