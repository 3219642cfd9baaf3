"""Multiple-access mode semantics: how much of the overlap space is searched.

pod    - personalised overlap: every (subband, AP) boundary has its own
         fraction (symmetric tie between the two sides of a boundary).
npod   - one shared overlap fraction for the whole network.
noma   - no overlap; plain NOMA over orthogonal subbands.
ofdma  - no overlap and one UE per subband per AP.

Feasible sets nest: ofdma is a restriction of noma, noma of npod, npod of
pod. The experiment runner exploits that nesting when pooling candidate
solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .rates import OverlapProfile


@dataclass(frozen=True)
class Mode:
    name: str
    label: str                # legend label in plots
    has_overlap: bool         # mode exposes free overlap variables
    shared_overlap: bool      # a single scalar instead of per-boundary values
    one_ue_per_subband: bool

    def delta_dim(self, config: SystemConfig) -> int:
        """Number of free overlap variables."""
        if not self.has_overlap:
            return 0
        if self.shared_overlap:
            return 1
        return (config.num_subbands - 1) * config.num_aps

    def build_overlap(self, config: SystemConfig, values: np.ndarray) -> OverlapProfile:
        """Materialise an OverlapProfile from the mode's free variables."""
        N, K = config.num_subbands, config.num_aps
        values = np.asarray(values, dtype=float)
        if values.shape != (self.delta_dim(config),):
            raise ValueError(
                f"mode {self.name!r} expects {self.delta_dim(config)} overlap values"
            )
        if not self.has_overlap:
            return OverlapProfile.zeros(N, K)
        if self.shared_overlap:
            return OverlapProfile.uniform(float(values[0]), N, K)
        delta_r = np.zeros((N, K))
        if N > 1:
            delta_r[:-1, :] = values.reshape(N - 1, K)
        return OverlapProfile.symmetric_from_right(delta_r)

    def cluster_capacity(self, config: SystemConfig) -> int:
        return 1 if self.one_ue_per_subband else config.cluster_capacity

    def supports(self, config: SystemConfig) -> bool:
        """Whether every UE fits under this mode's capacity."""
        return config.num_subbands * self.cluster_capacity(config) >= config.ues_per_ap


POD = Mode("pod", "POD", has_overlap=True, shared_overlap=False, one_ue_per_subband=False)
NPOD = Mode("npod", "NPOD", has_overlap=True, shared_overlap=True, one_ue_per_subband=False)
NOMA = Mode("noma", "NOMA-OFDM", has_overlap=False, shared_overlap=False, one_ue_per_subband=False)
OFDMA = Mode("ofdma", "OFDMA", has_overlap=False, shared_overlap=False, one_ue_per_subband=True)

MODES: dict[str, Mode] = {m.name: m for m in (POD, NPOD, NOMA, OFDMA)}

# nesting order, most restrictive first; candidates found under an earlier
# mode remain feasible under every later one
NESTING: tuple[str, ...] = ("ofdma", "noma", "npod", "pod")


def parse_mode(name: str) -> Mode:
    key = name.strip().lower().replace("-", "").replace("_", "")
    aliases = {"nomaofdm": "noma", "doma": "pod"}
    key = aliases.get(key, key)
    if key not in MODES:
        raise ValueError(f"unknown mode {name!r}; choose from {sorted(MODES)}")
    return MODES[key]
