"""Scalarisation of the two-objective allocation problem and its lifting
into a monotonic (difference-of-increasing-functions) form.

The sum-rate and sum-power objectives are folded into a single Tchebycheff
value ``lambda = max(omega * rate_slack, (1 - omega) * power_slack)``
measured against the utopia point of each objective. Both slacks are
normalised to O(1): rates by the utopia spectral efficiency, powers by the
total transmit budget. The binary assignment is relaxed with a quadratic
penalty ``alpha * sum(rho^2 - rho)`` that vanishes exactly at binary
points.

For the global solver the problem is rewritten as a difference of
coordinate-wise increasing functions. Every constraint becomes a pair
``(q_plus, q_minus)`` of increasing maps with the feasibility condition
``q_plus >= q_minus``; an auxiliary variable per pair turns these into a
normal set (upper-bounded increasing functions) intersected with a
co-normal set (lower-bounded increasing functions). All logarithms act on
noise-normalised powers, which keeps every summand non-negative and hence
every pair genuinely increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .modes import Mode
from .oracle import GridSpec, exhaustive_best
from .polyblock import DifProblem
from .rates import OverlapProfile, _interference_arrays
from .scenario import Scenario

QOS_FORMS = ("per_ue", "printed_tuple", "printed_strict")


# --------------------------------------------------------------------------
# decision vector layout


@dataclass(eq=False)
class DecisionSpace:
    """Flat packing of (rho, p_tilde, overlap values, lambda) for one mode."""

    scenario: Scenario
    mode: Mode

    def __post_init__(self):
        cfg = self.scenario.config
        self.shape = (cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands)
        self.n_rho = int(np.prod(self.shape))
        self.n_power = self.n_rho
        self.n_delta = self.mode.delta_dim(cfg)
        self.dim = self.n_rho + self.n_power + self.n_delta + 1
        self.rho_sl = slice(0, self.n_rho)
        self.power_sl = slice(self.n_rho, self.n_rho + self.n_power)
        self.delta_sl = slice(self.n_rho + self.n_power,
                              self.n_rho + self.n_power + self.n_delta)
        self.lam_index = self.dim - 1

    def pack(self, rho: np.ndarray, p_tilde: np.ndarray,
             delta_values: np.ndarray, lam: float) -> np.ndarray:
        x = np.empty(self.dim)
        x[self.rho_sl] = np.asarray(rho, dtype=float).reshape(-1)
        x[self.power_sl] = np.asarray(p_tilde, dtype=float).reshape(-1)
        x[self.delta_sl] = np.asarray(delta_values, dtype=float).reshape(-1)
        x[self.lam_index] = lam
        return x

    def unpack(self, x: np.ndarray):
        rho = np.asarray(x[self.rho_sl]).reshape(self.shape)
        p_tilde = np.asarray(x[self.power_sl]).reshape(self.shape)
        delta_values = np.asarray(x[self.delta_sl])
        lam = float(x[self.lam_index])
        return rho, p_tilde, delta_values, lam

    def overlap_of(self, delta_values: np.ndarray) -> OverlapProfile:
        return self.mode.build_overlap(self.scenario.config, delta_values)

    def upper(self, lambda_cap: float) -> np.ndarray:
        cfg = self.scenario.config
        return self.pack(
            np.ones(self.shape),
            np.full(self.shape, cfg.max_tx_power_w),
            np.ones(self.n_delta),
            lambda_cap,
        )


@dataclass
class DecisionVector:
    """Structured view of one point of the decision space."""

    rho: np.ndarray
    p_tilde: np.ndarray
    delta_values: np.ndarray
    lam: float

    @classmethod
    def from_flat(cls, space: DecisionSpace, x: np.ndarray) -> "DecisionVector":
        return cls(*space.unpack(x))

    def to_flat(self, space: DecisionSpace) -> np.ndarray:
        return space.pack(self.rho, self.p_tilde, self.delta_values, self.lam)


# --------------------------------------------------------------------------
# utopia points and the Tchebycheff value


@dataclass(frozen=True)
class Utopia:
    u1_star_se: float      # best attainable spectral efficiency, bps/Hz
    u2_star_w: float       # least QoS-feasible transmit power, watts
    source: str = "given"  # grid | solver | given


def utopia_points(scenario: Scenario, mode: Mode,
                  grid: GridSpec = GridSpec()) -> Utopia:
    """Single-objective optima over the gridded problem.

    Raises GridCapError when the instance is too large for exhaustive
    search; callers then fall back to the solver-based estimate.
    """
    best_rate = exhaustive_best(scenario, mode, lambda sr, sp: -sr, grid)
    least_power = exhaustive_best(scenario, mode, lambda sr, sp: sp, grid)
    W = scenario.config.total_bandwidth_hz
    return Utopia(
        u1_star_se=best_rate.sr_bps / W,
        u2_star_w=least_power.sp_w,
        source="grid",
    )


@dataclass(frozen=True)
class ScalarizationConfig:
    omega: float
    utopia: Utopia
    power_scale_w: float            # total transmit budget, normalises SP
    alpha: float = 1e3              # binary-relaxation penalty weight
    lambda_cap: float = 0.0         # filled by finalise() when left at 0
    qos_form: str = "per_ue"

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if self.qos_form not in QOS_FORMS:
            raise ValueError(f"qos_form must be one of {QOS_FORMS}")
        if self.utopia.u1_star_se <= 0:
            raise ValueError("utopia rate objective must be positive")
        if self.power_scale_w <= 0:
            raise ValueError("power_scale_w must be positive")

    @property
    def u2_norm(self) -> float:
        return self.utopia.u2_star_w / self.power_scale_w

    def finalise(self) -> "ScalarizationConfig":
        """Fill the lambda cap so that both slack constraints are inactive there."""
        if self.lambda_cap > 0:
            return self
        bound = self.omega * 1.0 + (1.0 - self.omega) * (1.0 - self.u2_norm)
        cap = max(1.1 * bound, 1e-3)
        out = replace(self, lambda_cap=cap)
        assert out.omega * 1.0 <= out.lambda_cap
        assert (1.0 - out.omega) * (1.0 - out.u2_norm) <= out.lambda_cap
        return out


def scalarization_for(scenario: Scenario, utopia: Utopia, omega: float,
                      **kwargs) -> ScalarizationConfig:
    cfg = scenario.config
    budget = cfg.max_tx_power_w * cfg.num_aps * cfg.ues_per_ap
    return ScalarizationConfig(
        omega=omega, utopia=utopia, power_scale_w=budget, **kwargs
    ).finalise()


@dataclass(frozen=True)
class TchebyValue:
    lam: float
    rate_slack: float
    power_slack: float


def tchebycheff_objective(cfg: ScalarizationConfig, sr_bps, sp_w,
                          total_bandwidth_hz: float) -> TchebyValue:
    """Normalised Tchebycheff value of (sum rate, sum power) pairs.

    Accepts scalars or equally shaped arrays.
    """
    se = sr_bps / total_bandwidth_hz
    rate_slack = cfg.omega * (1.0 - se / cfg.utopia.u1_star_se)
    power_slack = (1.0 - cfg.omega) * (sp_w - cfg.utopia.u2_star_w) / cfg.power_scale_w
    return TchebyValue(
        lam=np.maximum(rate_slack, power_slack),
        rate_slack=rate_slack,
        power_slack=power_slack,
    )


def penalized_objective(cfg: ScalarizationConfig, rho: np.ndarray, lam: float) -> float:
    """Relaxed objective: -lambda plus the binarity penalty (to maximise)."""
    rho = np.asarray(rho, dtype=float)
    return float(cfg.alpha * (rho ** 2 - rho).sum() - lam)


# --------------------------------------------------------------------------
# difference-of-increasing-functions decomposition


@dataclass
class IncreasingPair:
    """One constraint group: two increasing maps with q_plus >= q_minus
    expressing feasibility. ``minus_at_max`` and ``minus_at_zero`` evaluate
    the minus member at the box corners."""

    name: str
    plus: Callable[[np.ndarray], float]
    minus: Callable[[np.ndarray], float]
    minus_at_max: float
    minus_at_zero: float

    # aux_bound is the widest value the paired auxiliary variable can take

    @property
    def aux_bound(self) -> float:
        return self.minus_at_max - self.minus_at_zero


@dataclass
class DifDecomposition:
    space: DecisionSpace
    config: ScalarizationConfig
    pairs: list[IncreasingPair]
    minus_all: Callable[[np.ndarray], np.ndarray]
    plus_all: Callable[[np.ndarray], np.ndarray]
    slacks: Callable[[np.ndarray], tuple[float, float]]
    minus_max: np.ndarray
    minus_zero: np.ndarray

    def pair(self, name: str) -> IncreasingPair:
        for p in self.pairs:
            if p.name == name:
                return p
        raise KeyError(name)


def _lifted_terms(space: DecisionSpace, rho: np.ndarray, p_tilde: np.ndarray,
                  delta_values: np.ndarray):
    """Noise-normalised log terms of the lifted rate expressions.

    Returns (log_sig, log_int, bbar): ``log_sig[k,m,n]`` is log2 of the
    normalised signal-plus-interference power, ``log_int`` of interference
    alone, ``bbar[n,k]`` the per-subband bandwidth factor normalised so a
    full-band allocation at the utopia rate sums to one.
    """
    sc = space.scenario
    overlap = space.overlap_of(delta_values)
    terms = _interference_arrays(
        sc.gains, sc.decoding_rank, sc.noise_power_w, p_tilde, overlap,
    )
    sigma2 = sc.noise_power_w
    denom = terms.total() / sigma2
    width = overlap.width_factor()
    # noise-normalised interference is at least the width factor
    floor = width.T[:, None, :]
    if np.any(denom < floor - 1e-9):
        raise AssertionError("interference fell below the widened noise floor")
    K = sc.config.num_aps
    own = sc.gains[np.arange(K), :, np.arange(K), :]
    log_int = np.log2(denom)
    log_sig = np.log2(p_tilde * own / sigma2 + denom)
    cfg = sc.config
    rate_unit = cfg.total_bandwidth_hz  # scaled again by u1_star below
    bbar = cfg.subband_bandwidth_hz * width / rate_unit
    return log_sig, log_int, bbar


def dif_functions(space: DecisionSpace, cfg: ScalarizationConfig) -> DifDecomposition:
    """The five increasing pairs of the lifted scalarised problem.

    Groups, in order: ``penalty`` (objective split), ``rate_gap`` (weighted
    sum-rate slack), ``qos`` (per-UE rate floor), ``power_gap`` (weighted
    sum-power slack), ``power_cap`` (per-entry power budget tied to rho).
    """
    cfg = cfg.finalise()
    sc = space.scenario
    sys_cfg = sc.config
    omega, alpha = cfg.omega, cfg.alpha
    u1 = cfg.utopia.u1_star_se
    power_scale = cfg.power_scale_w
    pmax = sys_cfg.max_tx_power_w
    qos_norm = sys_cfg.qos_rate_bps / (sys_cfg.total_bandwidth_hz * u1)
    n_ue = sys_cfg.num_aps * sys_cfg.ues_per_ap
    n_cell = n_ue * sys_cfg.num_subbands

    def split(x):
        return space.unpack(x)

    def rate_sums(rho, p_tilde, delta_values):
        log_sig, log_int, bbar = _lifted_terms(space, rho, p_tilde, delta_values)
        scale = bbar.T[:, None, :] / u1          # (K, 1, N) applied per cell
        return log_sig * scale, log_int * scale  # both (K, U, N), rate units

    def qos_pair_values(sig_cells, int_cells):
        """(q_plus, q_minus) of the QoS group for the configured form."""
        total_int = float(int_cells.sum())
        if cfg.qos_form == "per_ue":
            sig_ue = sig_cells.sum(axis=2)       # (K, U)
            int_ue = int_cells.sum(axis=2)
            q_minus = total_int + n_ue * qos_norm
            inner = sig_ue + (total_int - int_ue) + (n_ue - 1) * qos_norm
            return float(inner.min()), q_minus
        if cfg.qos_form == "printed_tuple":
            q_minus = total_int + n_cell * qos_norm
            inner = sig_cells + (total_int - int_cells) + (n_cell - 1) * qos_norm
            return float(inner.min()), q_minus
        # printed_strict: the complement sum excludes every cell sharing an index
        K, U, N = sig_cells.shape
        q_minus = total_int + n_cell * qos_norm
        best = math.inf
        for k in range(K):
            for m in range(U):
                for n in range(N):
                    mask = np.ones((K, U, N), dtype=bool)
                    mask[k, :, :] = False
                    mask[:, m, :] = False
                    mask[:, :, n] = False
                    comp = float(int_cells[mask].sum()) + int(mask.sum()) * qos_norm
                    best = min(best, float(sig_cells[k, m, n]) + comp)
        return best, q_minus

    def minus_all(x):
        rho, p_tilde, delta_values, lam = split(x)
        sig_cells, int_cells = rate_sums(rho, p_tilde, delta_values)
        _, qos_minus = qos_pair_values(sig_cells, int_cells)
        return np.array([
            alpha * rho.sum() + lam,
            omega * float(int_cells.sum()) + omega * 1.0,
            qos_minus,
            (1.0 - omega) * float(p_tilde.sum()) / power_scale,
            float(p_tilde.sum()) / power_scale,
        ])

    def plus_all(x):
        rho, p_tilde, delta_values, lam = split(x)
        sig_cells, int_cells = rate_sums(rho, p_tilde, delta_values)
        qos_plus, _ = qos_pair_values(sig_cells, int_cells)
        total_p = float(p_tilde.sum())
        cap_inner = rho * pmax + (total_p - p_tilde)
        return np.array([
            alpha * float((rho ** 2).sum()),
            omega * float(sig_cells.sum()) + lam,
            qos_plus,
            lam + (1.0 - omega) * cfg.u2_norm,
            float(cap_inner.min()) / power_scale,
        ])

    def slacks(x):
        """Tchebycheff slack pair of the lifted rates at one decision."""
        rho, p_tilde, delta_values, _ = split(x)
        sig_cells, int_cells = rate_sums(rho, p_tilde, delta_values)
        se_norm = float((sig_cells - int_cells).sum())
        rate_slack = omega * (1.0 - se_norm)
        power_slack = (1.0 - omega) * (
            float(p_tilde.sum()) / power_scale - cfg.u2_norm)
        return rate_slack, power_slack

    x_max = space.upper(cfg.lambda_cap)
    x_zero = np.zeros(space.dim)
    minus_max = minus_all(x_max)
    minus_zero = minus_all(x_zero)

    names = ["penalty", "rate_gap", "qos", "power_gap", "power_cap"]
    pairs = [
        IncreasingPair(
            name=nm,
            plus=(lambda x, i=i: float(plus_all(x)[i])),
            minus=(lambda x, i=i: float(minus_all(x)[i])),
            minus_at_max=float(minus_max[i]),
            minus_at_zero=float(minus_zero[i]),
        )
        for i, nm in enumerate(names)
    ]
    return DifDecomposition(
        space=space, config=cfg, pairs=pairs,
        minus_all=minus_all, plus_all=plus_all, slacks=slacks,
        minus_max=minus_max, minus_zero=minus_zero,
    )


# --------------------------------------------------------------------------
# the lifted monotonic problem


@dataclass
class LiftedProblem:
    """P4-style lifting: decision vector plus one auxiliary per pair."""

    problem: DifProblem
    space: DecisionSpace
    config: ScalarizationConfig
    dif: DifDecomposition
    aux_bounds: np.ndarray     # (5,)
    objective_offset: float    # lifted value minus the relaxed objective
    strict_eps: np.ndarray     # tiny weights making the objective strict

    @property
    def n_aux(self) -> int:
        return len(self.aux_bounds)

    def decision_part(self, x: np.ndarray) -> np.ndarray:
        return x[: self.space.dim]

    def tight_lift(self, x_dec: np.ndarray) -> np.ndarray:
        """Lifted point with every auxiliary at its largest normal value."""
        minus = self.dif.minus_all(x_dec)
        aux = np.clip(self.dif.minus_max - minus, 0.0, self.aux_bounds)
        return np.concatenate([x_dec, aux])

    def repair(self, x: np.ndarray) -> np.ndarray:
        """Feasibility repair for polyblock projections.

        The ray projection scales lambda down with everything else, leaving
        it below the slack its own decision incurs; set lambda to the lifted
        Tchebycheff value, then retighten the auxiliaries.
        """
        dec = np.array(x[: self.space.dim])
        rate_slack, power_slack = self.dif.slacks(dec)
        lam = min(max(rate_slack, power_slack, 0.0), self.config.lambda_cap)
        dec[self.space.lam_index] = lam
        return self.tight_lift(dec)

    def relaxed_value(self, p4_value: float, x: np.ndarray | None = None) -> float:
        """Translate a lifted objective value back to the penalised scale.

        With the point given, the strictness perturbation is removed
        exactly; otherwise it remains as noise below 1e-5.
        """
        value = p4_value - self.objective_offset
        if x is not None:
            value -= float(self.strict_eps @ x)
        return value


def lift_to_p4(space: DecisionSpace, cfg: ScalarizationConfig) -> LiftedProblem:
    """Assemble the lifted monotonic problem for the polyblock solver.

    The objective becomes ``alpha * sum(rho^2) + t`` with auxiliary ``t``
    capped by the penalty pair; feasibility of the original constraints is
    recovered as normal-set caps on each auxiliary plus co-normal floors.
    """
    cfg = cfg.finalise()
    dif = dif_functions(space, cfg)
    sys_cfg = space.scenario.config
    d = space.dim
    aux_bounds = np.array([p.aux_bound for p in dif.pairs])
    minus_max = dif.minus_max
    alpha = cfg.alpha

    upper = np.concatenate([space.upper(cfg.lambda_cap), aux_bounds])
    cap = space.mode.cluster_capacity(sys_cfg)
    tol = 1e-9 * np.maximum(1.0, np.abs(minus_max))

    # the polyblock contract wants a strictly increasing objective; the
    # natural one ignores powers and overlaps, so add a vanishing tilt
    strict_eps = np.zeros(upper.size)
    movable = upper > 0
    strict_eps[movable] = 1e-5 / (upper.size * upper[movable])

    def objective(x):
        rho = x[space.rho_sl]
        return float(alpha * (rho ** 2).sum() + x[d] + strict_eps @ x)

    def normal_oracle(x):
        dec, aux = x[:d], x[d:]
        rho = dec[space.rho_sl].reshape(space.shape)
        if np.any(rho.sum(axis=1) > cap + 1e-9):
            return False
        if np.any(rho.sum(axis=2) > 1.0 + 1e-9):
            return False
        minus = dif.minus_all(dec)
        return bool(np.all(aux + minus <= minus_max + tol))

    def conormal_oracle(x):
        # the objective auxiliary (index 0) has a cap but no floor; a floor
        # there would force lambda <= 0 at binary points
        dec, aux = x[:d], x[d:]
        plus = dif.plus_all(dec)
        lhs = (plus + aux)[1:]
        return bool(np.all(lhs >= (minus_max - tol)[1:]))

    problem = DifProblem(
        upper=upper,
        objective=objective,
        normal_oracle=normal_oracle,
        conormal_oracle=conormal_oracle,
        name=f"{space.mode.name}-lift",
    )
    offset = alpha * space.n_rho + cfg.lambda_cap
    return LiftedProblem(
        problem=problem, space=space, config=cfg, dif=dif,
        aux_bounds=aux_bounds, objective_offset=offset,
        strict_eps=strict_eps,
    )
