"""Per-UE rates, interference terms and network metrics for D-OMA uplink.

Subbands may spill into their neighbours: subband n at AP k widens by
``delta_r[n, k] * B`` to the right and ``delta_l[n, k] * B`` to the left.
The widened band collects extra thermal noise and partial interference
from the adjacent subbands, weighted by ``(sqrt(delta_l[n+1]) +
sqrt(delta_r[n]))**2`` (and the mirrored expression for the lower
neighbour). Setting every delta to zero recovers plain NOMA over
orthogonal subbands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario


# --------------------------------------------------------------------------
# decision containers


@dataclass
class Assignment:
    """Subband assignment tensor rho with shape (K, U, N).

    Binary in the strict problem; ``relaxed=True`` admits values in [0, 1].
    """

    rho: np.ndarray
    relaxed: bool = False

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)

    def validate(self) -> None:
        if np.any(self.rho < 0) or np.any(self.rho > 1):
            raise ValueError("rho entries must lie in [0, 1]")
        if not self.relaxed:
            if not np.all((self.rho == 0) | (self.rho == 1)):
                raise ValueError("strict assignment requires binary rho")


@dataclass
class PowerAllocation:
    """Per-subband transmit powers p_tilde with shape (K, U, N), watts."""

    p_tilde: np.ndarray

    def __post_init__(self):
        self.p_tilde = np.asarray(self.p_tilde, dtype=float)

    def validate(self) -> None:
        if np.any(self.p_tilde < 0):
            raise ValueError("powers must be non-negative")

    def per_ue_total(self) -> np.ndarray:
        """Total transmit power of each UE, shape (K, U)."""
        return self.p_tilde.sum(axis=2)


@dataclass
class OverlapProfile:
    """Overlap fractions per (subband, AP), both shaped (N, K).

    ``delta_l[0, :]`` and ``delta_r[N-1, :]`` are structurally zero (no
    neighbour to spill into). ``symmetric=True`` additionally ties
    ``delta_l[n+1, k] == delta_r[n, k]``.
    """

    delta_r: np.ndarray
    delta_l: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.delta_r = np.asarray(self.delta_r, dtype=float)
        self.delta_l = np.asarray(self.delta_l, dtype=float)

    @classmethod
    def zeros(cls, num_subbands: int, num_aps: int) -> "OverlapProfile":
        shape = (num_subbands, num_aps)
        return cls(np.zeros(shape), np.zeros(shape), symmetric=True)

    @classmethod
    def symmetric_from_right(cls, delta_r: np.ndarray) -> "OverlapProfile":
        """Build a symmetric profile from the right-overlap array alone."""
        delta_r = np.asarray(delta_r, dtype=float)
        delta_l = np.zeros_like(delta_r)
        delta_l[1:, :] = delta_r[:-1, :]
        return cls(delta_r, delta_l, symmetric=True)

    @classmethod
    def uniform(cls, value: float, num_subbands: int, num_aps: int) -> "OverlapProfile":
        """Single shared overlap fraction everywhere (the non-personalised mode)."""
        delta_r = np.full((num_subbands, num_aps), float(value))
        delta_r[-1, :] = 0.0
        return cls.symmetric_from_right(delta_r)

    def validate(self) -> None:
        if self.delta_r.shape != self.delta_l.shape or self.delta_r.ndim != 2:
            raise ValueError("delta_r and delta_l must share a 2-D (N, K) shape")
        for name, arr in (("delta_r", self.delta_r), ("delta_l", self.delta_l)):
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        if np.any(self.delta_l[0, :] != 0):
            raise ValueError("delta_l of the first subband must be zero")
        if np.any(self.delta_r[-1, :] != 0):
            raise ValueError("delta_r of the last subband must be zero")
        if self.symmetric and self.delta_r.shape[0] > 1:
            if not np.array_equal(self.delta_l[1:, :], self.delta_r[:-1, :]):
                raise ValueError("symmetric profile requires delta_l[n+1] == delta_r[n]")

    # ---- derived arrays ----------------------------------------------------

    def width_factor(self) -> np.ndarray:
        """(1 + delta_l + delta_r), shape (N, K). Effective width is B times this."""
        return 1.0 + self.delta_l + self.delta_r

    def effective_bandwidth_hz(self, nominal_hz: float) -> np.ndarray:
        return nominal_hz * self.width_factor()

    def neighbour_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Partial-interference weights, both shaped (N, K).

        ``w_up[n, k]`` scales interference leaking from subband n+1 of AP k
        into subband n; ``w_down[n, k]`` the leak from subband n-1. Edge
        rows (no neighbour) are zero.
        """
        num_subbands = self.delta_r.shape[0]
        w_up = np.zeros_like(self.delta_r)
        w_down = np.zeros_like(self.delta_r)
        if num_subbands > 1:
            w_up[:-1, :] = (np.sqrt(self.delta_l[1:, :]) + np.sqrt(self.delta_r[:-1, :])) ** 2
            w_down[1:, :] = (np.sqrt(self.delta_l[1:, :]) + np.sqrt(self.delta_r[:-1, :])) ** 2
        return w_up, w_down


@dataclass
class InterferenceTerms:
    """Denominator pieces of the SINR, all in watts.

    intra/inter/partial have shape (K, U, N) and are indexed by the
    receiving AP k, the decoded UE m and the subband n. ``noise`` has
    shape (N, K): thermal noise scaled by the widened bandwidth.
    """

    intra: np.ndarray
    inter: np.ndarray
    partial: np.ndarray
    noise: np.ndarray

    def total(self) -> np.ndarray:
        """Full denominator per (K, U, N)."""
        return self.intra + self.inter + self.partial + self.noise.T[:, None, :]


# --------------------------------------------------------------------------
# evaluation


def _effective_power(rho: np.ndarray, p_tilde: np.ndarray, weighted: bool) -> np.ndarray:
    return rho * p_tilde if weighted else p_tilde


def interference_terms(scenario: Scenario, assignment: Assignment,
                       powers: PowerAllocation, overlap: OverlapProfile,
                       rho_weighted: bool = True) -> InterferenceTerms:
    """Intra-cluster (SIC residual), inter-AP and partial-overlap interference.

    With ``rho_weighted`` each interfering power is scaled by its rho entry
    (linear in rho, so fractional assignments interpolate); the solver's
    lifted evaluation passes False and lets p_tilde carry the masking.
    """
    return _interference_arrays(
        scenario.gains, scenario.decoding_rank, scenario.noise_power_w,
        _effective_power(assignment.rho, powers.p_tilde, rho_weighted), overlap,
    )


def _interference_arrays(gains: np.ndarray, decoding_rank: np.ndarray,
                         noise_power_w: float, p_eff: np.ndarray,
                         overlap: OverlapProfile) -> InterferenceTerms:
    K, U, _, N = gains.shape
    # pg[k_src, m, k_rx, n]: received power of UE (k_src, m) at AP k_rx
    pg = p_eff[:, :, None, :] * gains
    per_src = pg.sum(axis=1)                       # (K_src, K_rx, N)

    # inter-AP: cross terms summed directly (no subtract-own cancellation)
    cross = 1.0 - np.eye(K)
    inter_rx = np.einsum("sk,skn->kn", cross, per_src)
    inter = np.broadcast_to(inter_rx[:, None, :], (K, U, N)).copy()

    # intra-cluster residual after SIC: only UEs decoded later interfere
    own_pg = pg[np.arange(K), :, np.arange(K), :]  # (K, U, N)
    order = np.argsort(decoding_rank, axis=2)      # (K, N, U), first decoded first
    sorted_pg = np.take_along_axis(own_pg.transpose(0, 2, 1), order, axis=2)
    rev = sorted_pg[:, :, ::-1].cumsum(axis=2)[:, :, ::-1]
    tail = np.concatenate([rev[:, :, 1:], np.zeros((K, N, 1))], axis=2)
    intra = np.empty((K, N, U))
    np.put_along_axis(intra, order, tail, axis=2)
    intra = intra.transpose(0, 2, 1)

    # partial overlap: neighbours' traffic leaks in, weighted per source AP
    w_up, w_down = overlap.neighbour_weights()     # (N, K_src)
    leak = np.zeros((K, N))
    if N > 1:
        rx_first = per_src.transpose(1, 2, 0)      # (K_rx, N, K_src)
        leak[:, :-1] += np.einsum("kns,ns->kn", rx_first[:, 1:, :], w_up[:-1, :])
        leak[:, 1:] += np.einsum("kns,ns->kn", rx_first[:, :-1, :], w_down[1:, :])
    partial = np.broadcast_to(leak[:, None, :], (K, U, N)).copy()

    noise = noise_power_w * overlap.width_factor()  # (N, K)
    return InterferenceTerms(intra=intra, inter=inter, partial=partial, noise=noise)


def rate_table(scenario: Scenario, assignment: Assignment, powers: PowerAllocation,
               overlap: OverlapProfile) -> np.ndarray:
    """Achievable rate of each (AP, UE, subband) triple in bps.

    Entries with a zero rho are zero: an unassigned UE contributes no rate
    on that subband regardless of its power entry.
    """
    overlap.validate()
    terms = interference_terms(scenario, assignment, powers, overlap)
    denom = terms.total()
    K = scenario.config.num_aps
    own_gain = scenario.gains[np.arange(K), :, np.arange(K), :]   # (K, U, N)
    signal = powers.p_tilde * own_gain
    bandwidth = scenario.config.subband_bandwidth_hz * overlap.width_factor()  # (N, K)
    rates = bandwidth.T[:, None, :] * np.log2(1.0 + signal / denom)
    return np.where(assignment.rho > 0, rates, 0.0)


def ue_rate(scenario: Scenario, assignment: Assignment, powers: PowerAllocation,
            overlap: OverlapProfile, ap: int, ue: int, subband: int) -> float:
    """Rate of one (AP, UE, subband) triple in bps."""
    return float(rate_table(scenario, assignment, powers, overlap)[ap, ue, subband])


@dataclass
class Metrics:
    per_ue_rate: np.ndarray          # (K, U, N) bps
    sum_rate_bps: float
    sum_power_w: float               # transmit power only
    circuit_power_w: float
    energy_efficiency: float         # bits per joule
    spectral_efficiency: float       # bps/Hz over the total band W


def network_metrics(scenario: Scenario, assignment: Assignment,
                    powers: PowerAllocation, overlap: OverlapProfile) -> Metrics:
    """Aggregate sum rate, powers, EE and SE for one decision."""
    rates = rate_table(scenario, assignment, powers, overlap)
    sum_rate = float((assignment.rho * rates).sum())
    sum_power = float(powers.p_tilde.sum())
    circuit = scenario.config.circuit_power_w * scenario.config.num_aps \
        * scenario.config.ues_per_ap
    return Metrics(
        per_ue_rate=rates,
        sum_rate_bps=sum_rate,
        sum_power_w=sum_power,
        circuit_power_w=circuit,
        energy_efficiency=sum_rate / (sum_power + circuit),
        spectral_efficiency=sum_rate / scenario.config.total_bandwidth_hz,
    )


# --------------------------------------------------------------------------
# constraint checking


@dataclass
class ConstraintReport:
    entries: dict[str, tuple[bool, float]] = field(default_factory=dict)

    def add(self, name: str, ok: bool, violation: float) -> None:
        self.entries[name] = (bool(ok), float(violation))

    @property
    def feasible(self) -> bool:
        return all(ok for ok, _ in self.entries.values())

    def violation(self, name: str) -> float:
        return self.entries[name][1]


def check_constraints(scenario: Scenario, assignment: Assignment,
                      powers: PowerAllocation, overlap: OverlapProfile,
                      binary_tol: float = 0.0) -> ConstraintReport:
    """Evaluate the full feasibility set of the allocation problem.

    Reported entries: ``qos`` (per-UE rate floor), ``overlap_box``
    (including the structural edge zeros), ``cluster_capacity``,
    ``single_subband``, ``power_budget`` (p_tilde <= rho * Pmax), and
    ``binary`` (skipped in relaxed mode). Violations are the largest
    constraint excess, in the constraint's own units.
    """
    cfg = scenario.config
    rho, p_tilde = assignment.rho, powers.p_tilde
    report = ConstraintReport()

    rates = rate_table(scenario, assignment, powers, overlap)
    per_ue = (rho * rates).sum(axis=2)                      # (K, U) bps
    qos_gap = cfg.qos_rate_bps - per_ue
    report.add("qos", np.all(qos_gap <= 0), max(0.0, float(qos_gap.max())))

    box_excess = max(
        float(np.max(-overlap.delta_r, initial=0.0)),
        float(np.max(overlap.delta_r - 1.0, initial=0.0)),
        float(np.max(-overlap.delta_l, initial=0.0)),
        float(np.max(overlap.delta_l - 1.0, initial=0.0)),
        float(np.max(np.abs(overlap.delta_l[0, :]), initial=0.0)),
        float(np.max(np.abs(overlap.delta_r[-1, :]), initial=0.0)),
    )
    report.add("overlap_box", box_excess <= 0, box_excess)

    load = rho.sum(axis=1)                                  # (K, N)
    cap_excess = float((load - cfg.cluster_capacity).max())
    report.add("cluster_capacity", cap_excess <= 0, max(0.0, cap_excess))

    per_ue_load = rho.sum(axis=2)                           # (K, U)
    single_excess = float((per_ue_load - 1.0).max())
    report.add("single_subband", single_excess <= 0, max(0.0, single_excess))

    budget_excess = float((p_tilde - rho * cfg.max_tx_power_w).max())
    report.add("power_budget", budget_excess <= 0, max(0.0, budget_excess))

    if not assignment.relaxed:
        frac = np.minimum(np.abs(rho), np.abs(1.0 - rho))
        worst = float(frac.max())
        report.add("binary", worst <= binary_tol, worst)

    return report
