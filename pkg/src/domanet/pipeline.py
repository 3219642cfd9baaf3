"""End-to-end solve path: polyblock exploration, rounding, local polish.

One instance solve runs the global solver on the lifted problem, harvests
every feasible repaired projection, rounds the relaxed assignments it saw
into a small set of binary candidates (tie-aware, audited against the
cluster capacity), then polishes powers and overlaps per assignment with a
derivative-free compass search on the true rate model. Candidates are kept
so that a sweep over scalarisation weights can select each weight's final
answer from the union pool; selecting from a shared pool keeps the traced
rate/power frontier monotone in the weight.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .config import SystemConfig
from .modes import MODES, NESTING, Mode
from .oracle import (GridCapError, GridSpec, InfeasibleScenarioError,
                     enumerate_assignments, estimate_evaluations)
from .polyblock import SolveResult, SolverOptions, solve
from .rates import Assignment, PowerAllocation, rate_table
from .scalarize import (DecisionSpace, ScalarizationConfig, Utopia,
                        lift_to_p4, scalarization_for, tchebycheff_objective,
                        utopia_points)
from .scenario import Scenario


@dataclass(frozen=True)
class PolishOptions:
    max_passes: int = 48
    init_step: float = 0.25
    min_step: float = 1e-3


@dataclass(frozen=True)
class SolveSettings:
    poly_iterations: int = 160
    poly_bisect_tol: float = 1e-4
    poly_max_vertices: int = 100_000
    alpha: float = 1e3
    lambda_cap: float = 0.0         # 0 derives the cap from the weights
    qos_form: str = "per_ue"
    utopia_grid: GridSpec = GridSpec()
    max_assignments: int = 4        # distinct assignments polished per solve
    tie_gap: float = 0.25           # relative rho gap treated as a tie
    repolish_pool: int = 2          # inherited pool bests re-polished per solve
    polish: PolishOptions = PolishOptions()

    @classmethod
    def fast(cls) -> "SolveSettings":
        return cls(poly_iterations=44, poly_bisect_tol=1e-3,
                   polish=PolishOptions(max_passes=26))

    @classmethod
    def accurate(cls) -> "SolveSettings":
        return cls(poly_iterations=400, poly_bisect_tol=1e-6,
                   max_assignments=8,
                   polish=PolishOptions(max_passes=96, min_step=1e-4))


@dataclass
class Candidate:
    """One binary allocation with its audited network metrics."""

    rho: np.ndarray
    p_tilde: np.ndarray
    delta_values: np.ndarray
    sr_bps: float
    sp_w: float
    qos_margin_bps: float       # min over UEs of (rate - required rate)
    origin: str = ""

    @property
    def feasible(self) -> bool:
        return self.qos_margin_bps >= -1e-6

    def se(self, total_bandwidth_hz: float) -> float:
        return self.sr_bps / total_bandwidth_hz

    def lam(self, scal: ScalarizationConfig, total_bandwidth_hz: float) -> float:
        return tchebycheff_objective(
            scal, self.sr_bps, self.sp_w, total_bandwidth_hz).lam

    def signature(self) -> tuple:
        return (
            tuple(np.flatnonzero(self.rho.reshape(-1) > 0.5).tolist()),
            tuple(np.round(self.p_tilde.reshape(-1), 6).tolist()),
            tuple(np.round(self.delta_values, 4).tolist()),
        )


@dataclass
class InstanceSolution:
    mode_name: str
    omega: float
    utopia: Utopia
    best: Optional[Candidate]
    candidates: list
    status: str
    solver: Optional[SolveResult]
    wall_time_s: float


def evaluate_candidate(scenario: Scenario, space: DecisionSpace,
                       rho: np.ndarray, p_tilde: np.ndarray,
                       delta_values: np.ndarray, origin: str = "") -> Candidate:
    cfg = scenario.config
    p_tilde = np.where(rho > 0.5, np.clip(p_tilde, 0.0, cfg.max_tx_power_w), 0.0)
    overlap = space.overlap_of(delta_values)
    table = rate_table(scenario, Assignment(rho), PowerAllocation(p_tilde), overlap)
    per_ue = (rho * table).sum(axis=2)
    return Candidate(
        rho=rho.copy(), p_tilde=p_tilde, delta_values=np.array(delta_values),
        sr_bps=float((rho * table).sum()), sp_w=float(p_tilde.sum()),
        qos_margin_bps=float((per_ue - cfg.qos_rate_bps).min()),
        origin=origin,
    )


# --------------------------------------------------------------------------
# rounding


def _capacity_repair(rho: np.ndarray, own_gain: np.ndarray, cap: int) -> bool:
    """Move surplus UEs off overloaded subbands, weakest first, onto the
    strongest subband with room. Returns False when stuck."""
    K, U, N = rho.shape
    for k in range(K):
        guard = 0
        while True:
            loads = rho[k].sum(axis=0)
            over = np.flatnonzero(loads > cap)
            if over.size == 0:
                break
            guard += 1
            if guard > U * N:
                return False
            n_bad = int(over[0])
            members = np.flatnonzero(rho[k, :, n_bad] > 0.5)
            mover = members[np.argmin(own_gain[k, members, n_bad])]
            room = np.flatnonzero(loads < cap)
            room = room[room != n_bad]
            if room.size == 0:
                return False
            target = room[np.argmax(own_gain[k, mover, room])]
            rho[k, mover, n_bad] = 0.0
            rho[k, mover, target] = 1.0
    return True


def round_assignments(scenario: Scenario, mode: Mode,
                      relaxed_rhos: list[np.ndarray],
                      settings: SolveSettings) -> list[np.ndarray]:
    """Binary assignments suggested by the relaxed points plus deterministic
    gain-based heuristics; unique, capacity-feasible, bounded count."""
    cfg = scenario.config
    K, U, N = cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands
    cap = mode.cluster_capacity(cfg)
    own_gain = scenario.own_gains()

    # tiny assignment spaces are enumerated outright
    if N ** (K * U) <= settings.max_assignments * 2:
        return list(enumerate_assignments(cfg, mode, require_full=True))

    def finish(rho):
        if not _capacity_repair(rho, own_gain, cap):
            return None
        return rho

    proposals: list[np.ndarray] = []

    def from_scores(scores):
        rho = np.zeros((K, U, N))
        pick = scores.argmax(axis=2)
        for k in range(K):
            for m in range(U):
                rho[k, m, pick[k, m]] = 1.0
        return finish(rho)

    # heuristic seeds: strongest own gain, then a load-balanced variant
    proposals.append(from_scores(own_gain))
    balanced = np.zeros((K, U, N))
    for k in range(K):
        order = np.argsort(-own_gain[k].max(axis=1))
        for slot, m in enumerate(order):
            options = np.argsort(-own_gain[k, m])
            balanced[k, m, options[slot % min(N, len(options))]] = 1.0
    proposals.append(finish(balanced))

    # stacking variant for overlap modes: fill the strongest subband to
    # capacity before opening the next, so a widened subband can border
    # an idle (interference-free) one
    if mode.has_overlap:
        stacked = np.zeros((K, U, N))
        for k in range(K):
            band_order = np.argsort(-own_gain[k].sum(axis=0))
            ue_order = np.argsort(-own_gain[k].max(axis=1))
            for slot, m in enumerate(ue_order):
                stacked[k, m, band_order[min(slot // cap, N - 1)]] = 1.0
        proposals.append(finish(stacked))

    # relaxed points: argmax per UE, plus a branch on the strongest near-tie
    for rel in relaxed_rhos:
        base = from_scores(rel)
        proposals.append(base)
        top = np.sort(rel, axis=2)
        if N >= 2:
            gap = top[:, :, -1] - top[:, :, -2]
            scale = np.maximum(top[:, :, -1], 1e-12)
            k, m = np.unravel_index(np.argmin(gap / scale), gap.shape)
            if gap[k, m] / scale[k, m] <= settings.tie_gap and base is not None:
                alt = base.copy()
                second = np.argsort(rel[k, m])[-2]
                alt[k, m, :] = 0.0
                alt[k, m, second] = 1.0
                proposals.append(finish(alt))

    out, seen = [], set()
    for rho in proposals:
        if rho is None:
            continue
        key = tuple(np.flatnonzero(rho.reshape(-1) > 0.5).tolist())
        if key in seen:
            continue
        seen.add(key)
        out.append(rho)
        if len(out) >= settings.max_assignments:
            break
    return out


# --------------------------------------------------------------------------
# local polish


def _score(scenario: Scenario, space: DecisionSpace, scal: ScalarizationConfig,
           rho, p, dvals):
    cand = evaluate_candidate(scenario, space, rho, p, dvals)
    violation = max(0.0, -cand.qos_margin_bps)
    lam = cand.lam(scal, scenario.config.total_bandwidth_hz)
    return (violation, lam), cand


def polish_candidate(scenario: Scenario, space: DecisionSpace,
                     scal: ScalarizationConfig, rho: np.ndarray,
                     p0: np.ndarray, d0: np.ndarray,
                     opts: PolishOptions, origin: str) -> Candidate:
    """Compass search over active powers and overlap values, feasibility
    first (QoS shortfall), then the Tchebycheff value."""
    cfg = scenario.config
    active = np.argwhere(rho > 0.5)
    p = p0.copy()
    d = np.array(d0, dtype=float)
    score, best = _score(scenario, space, scal, rho, p, d)
    step = opts.init_step

    for _ in range(opts.max_passes):
        improved = False
        for (k, m, n) in active:
            for sign in (1.0, -1.0):
                trial = p.copy()
                trial[k, m, n] = np.clip(
                    trial[k, m, n] + sign * step * cfg.max_tx_power_w,
                    0.0, cfg.max_tx_power_w)
                if trial[k, m, n] == p[k, m, n]:
                    continue
                s2, c2 = _score(scenario, space, scal, rho, trial, d)
                if s2 < score:
                    score, best, p = s2, c2, trial
                    improved = True
        for j in range(d.size):
            for sign in (1.0, -1.0):
                trial = d.copy()
                trial[j] = np.clip(trial[j] + sign * step, 0.0, 1.0)
                if trial[j] == d[j]:
                    continue
                s2, c2 = _score(scenario, space, scal, rho, p, trial)
                if s2 < score:
                    score, best, d = s2, c2, trial
                    improved = True
        if not improved:
            step *= 0.5
            if step < opts.min_step:
                break
    return replace(best, origin=origin)


# --------------------------------------------------------------------------
# the full instance solve


class InfeasibleInstanceError(RuntimeError):
    pass


def provisional_utopia(scenario: Scenario) -> Utopia:
    """Optimistic normalisation scale used while bootstrapping the real
    utopia point: interference-free rates at the widest band."""
    cfg = scenario.config
    own = scenario.own_gains()
    snr = cfg.max_tx_power_w * own.max(axis=2) / scenario.noise_power_w
    se = 3.0 * cfg.subband_bandwidth_hz * np.log2(1.0 + snr).sum()
    return Utopia(u1_star_se=float(se / cfg.total_bandwidth_hz),
                  u2_star_w=0.0, source="provisional")


def solve_instance(scenario: Scenario, mode: Mode, omega: float,
                   utopia: Utopia, settings: SolveSettings = SolveSettings(),
                   pool: Optional[list] = None) -> InstanceSolution:
    """Solve one (scenario, mode, weight) instance.

    When ``pool`` is given, discovered candidates are appended to it and
    prior pool entries compete in the final selection.
    """
    t0 = time.time()
    cfg = scenario.config
    if not mode.supports(cfg):
        raise ValueError(f"mode {mode.name} cannot serve {cfg.ues_per_ap} "
                         f"UEs across {cfg.num_subbands} subbands")
    space = DecisionSpace(scenario, mode)
    scal = scalarization_for(scenario, utopia, omega,
                             alpha=settings.alpha,
                             lambda_cap=settings.lambda_cap,
                             qos_form=settings.qos_form)
    lift = lift_to_p4(space, scal)

    harvested: list[np.ndarray] = []
    result = solve(lift.problem, SolverOptions(
        max_iterations=settings.poly_iterations,
        tol_bisect=settings.poly_bisect_tol,
        max_vertices=settings.poly_max_vertices,
        gap_shift=lift.objective_offset,
        harvest=lambda pt, val: harvested.append(pt[: space.dim].copy()),
        repair=lift.repair,
        keep_history=False,
    ))

    relaxed = [space.unpack(dec)[0] for dec in harvested]
    assignments = round_assignments(scenario, mode, relaxed, settings)

    candidates: list[Candidate] = []
    # power/overlap seeds from the best harvested points, else full power
    seeds_pd: list[tuple[np.ndarray, np.ndarray]] = []
    for dec in harvested[-3:]:
        _, p_h, d_h, _ = space.unpack(dec)
        seeds_pd.append((p_h, d_h))
    seeds_pd.append((np.full(space.shape, cfg.max_tx_power_w),
                     np.full(space.n_delta, 0.5)))

    # tiny spaces afford polishing every assignment from every start
    K, U, N = space.shape
    tiny = N ** (K * U) <= settings.max_assignments * 2
    for i, rho in enumerate(assignments):
        starts = seeds_pd if tiny else [seeds_pd[min(i, len(seeds_pd) - 1)]]
        for j, (p0, d0) in enumerate(starts):
            p_start = np.where(rho > 0.5,
                               np.maximum(p0, 0.1 * cfg.max_tx_power_w), 0.0)
            cand = polish_candidate(scenario, space, scal, rho, p_start, d0,
                                    settings.polish,
                                    origin=f"{mode.name}/polish{i}.{j}")
            candidates.append(cand)

    # re-polish the best inherited candidates under this weight so good
    # allocations found at other weights (or injected from narrower modes)
    # keep adapting as the sweep moves
    W = cfg.total_bandwidth_hz
    inherited = [c for c in (pool or []) if c.feasible]
    inherited.sort(key=lambda c: (c.lam(scal, W), -c.sr_bps))
    seen = {c.signature() for c in candidates}
    for c in inherited[: settings.repolish_pool]:
        if c.signature() in seen:
            continue
        seen.add(c.signature())
        cand = polish_candidate(scenario, space, scal, c.rho, c.p_tilde,
                                c.delta_values, settings.polish,
                                origin=c.origin + "+repolish")
        candidates.append(cand)

    if pool is not None:
        pool.extend(candidates)
        selection = list(pool)
    else:
        selection = candidates

    feasible = [c for c in selection if c.feasible]
    if feasible:
        best = min(feasible, key=lambda c: (c.lam(scal, W), -c.sr_bps))
        status = "ok"
    else:
        best = None
        status = "infeasible"
    return InstanceSolution(
        mode_name=mode.name, omega=omega, utopia=utopia, best=best,
        candidates=candidates, status=status, solver=result,
        wall_time_s=time.time() - t0,
    )


def resolve_utopia(scenario: Scenario, mode: Mode,
                   settings: SolveSettings = SolveSettings(),
                   cache: Optional[dict] = None,
                   anchor_pool: Optional[list] = None) -> Utopia:
    """Grid-exact utopia when the instance is small enough, otherwise the
    solver's own single-objective anchor runs.

    The two anchor solves share ``anchor_pool`` (candidates found while
    anchoring stay available to the caller) and the utopia coordinates are
    the pool-wide extremes, not just each anchor's selected point. Anchors
    run on a raised budget: an under-estimated best rate distorts every
    later weight towards the power objective.
    """
    key = (id(scenario), mode.name)
    if cache is not None and key in cache:
        return cache[key]
    try:
        estimate_evaluations(scenario.config, mode, settings.utopia_grid)
        try:
            utopia = utopia_points(scenario, mode, settings.utopia_grid)
        except InfeasibleScenarioError as err:
            raise InfeasibleInstanceError(str(err)) from err
    except GridCapError:
        prov = provisional_utopia(scenario)
        boosted = replace(
            settings,
            max_assignments=settings.max_assignments + 2,
            polish=replace(settings.polish,
                           max_passes=2 * settings.polish.max_passes),
        )
        pool = anchor_pool if anchor_pool is not None else []
        solve_instance(scenario, mode, 1.0, prov, boosted, pool=pool)
        solve_instance(scenario, mode, 0.0, prov, settings, pool=pool)
        feasible = [c for c in pool if c.feasible]
        if not feasible:
            raise InfeasibleInstanceError(
                f"no feasible point found for {mode.name} while "
                f"bootstrapping the utopia point")
        W = scenario.config.total_bandwidth_hz
        utopia = Utopia(
            u1_star_se=max(c.sr_bps for c in feasible) / W,
            u2_star_w=min(c.sp_w for c in feasible),
            source="solver",
        )
    if cache is not None:
        cache[key] = utopia
    return utopia


# --------------------------------------------------------------------------
# weight sweeps and cross-mode candidate sharing


def _embed_delta(values: np.ndarray, from_mode: Mode, to_mode: Mode,
                 cfg: SystemConfig) -> Optional[np.ndarray]:
    """Rewrite overlap values of a nested mode in a wider mode's terms."""
    if from_mode.name == to_mode.name:
        return np.array(values)
    dim = to_mode.delta_dim(cfg)
    if not from_mode.has_overlap:
        return np.zeros(dim)
    if from_mode.shared_overlap and to_mode.has_overlap and not to_mode.shared_overlap:
        return np.full(dim, float(values[0]))
    return None


def sweep_omegas(scenario: Scenario, mode: Mode, omegas: list[float],
                 settings: SolveSettings = SolveSettings(),
                 utopia: Optional[Utopia] = None,
                 injected: Optional[list[Candidate]] = None,
                 utopia_bounds: Optional[tuple] = None):
    """Solve every weight on a shared candidate pool and select per weight.

    Returns (selections, pool, runs): one chosen candidate per weight,
    drawn from the union of all candidates this sweep (and any injected
    ones) found. ``utopia_bounds`` = (rate floor, power ceiling) tightens
    a solver-anchored utopia with values a containing mode must reach;
    anchors found by a budgeted solver can otherwise invert the nesting.
    """
    cfg = scenario.config
    pool: list[Candidate] = []
    for cand in injected or []:
        pool.append(replace(cand, origin=cand.origin + "+injected"))
    if utopia is None:
        utopia = resolve_utopia(scenario, mode, settings, anchor_pool=pool)
        if utopia_bounds is not None:
            utopia = replace(
                utopia,
                u1_star_se=max(utopia.u1_star_se, utopia_bounds[0]),
                u2_star_w=min(utopia.u2_star_w, utopia_bounds[1]),
            )
    runs = {}
    for omega in omegas:
        runs[omega] = solve_instance(scenario, mode, omega, utopia,
                                     settings, pool=pool)

    W = cfg.total_bandwidth_hz
    feasible = [c for c in pool if c.feasible]
    selections = {}
    for omega in omegas:
        scal = scalarization_for(scenario, utopia, omega,
                                 alpha=settings.alpha,
                                 qos_form=settings.qos_form)
        if feasible:
            selections[omega] = min(
                feasible, key=lambda c: (c.lam(scal, W), -c.sr_bps))
        else:
            selections[omega] = None
    return selections, pool, runs


def sweep_modes(scenario: Scenario, mode_names: list[str], omegas: list[float],
                settings: SolveSettings = SolveSettings()):
    """Weight sweeps for several modes with candidates flowing along the
    mode nesting (every narrower mode's solutions remain available to the
    wider ones)."""
    ordered = [name for name in NESTING if name in mode_names]
    leftovers = [n for n in mode_names if n not in ordered]
    ordered += leftovers
    cfg = scenario.config
    all_selections: dict = {}
    pools: dict = {}
    all_runs: dict = {}
    carried: list[tuple[Mode, Candidate]] = []
    rate_floor, power_ceiling = 0.0, float("inf")
    for name in ordered:
        mode = MODES[name]
        if not mode.supports(cfg):
            continue
        injected, seen = [], set()
        space = DecisionSpace(scenario, mode)
        for src_mode, cand in carried:
            dvals = _embed_delta(cand.delta_values, src_mode, mode, cfg)
            if dvals is None:
                continue
            moved = evaluate_candidate(scenario, space, cand.rho,
                                       cand.p_tilde, dvals, origin=cand.origin)
            key = moved.signature()
            if key in seen:
                continue
            seen.add(key)
            injected.append(moved)
        selections, pool, runs = sweep_omegas(
            scenario, mode, omegas, settings, injected=injected,
            utopia_bounds=(rate_floor, power_ceiling))
        all_selections[name] = selections
        pools[name] = pool
        all_runs[name] = runs
        carried.extend((mode, c) for c in pool if c.feasible)
        if runs:
            used = next(iter(runs.values())).utopia
            rate_floor = max(rate_floor, used.u1_star_se)
            power_ceiling = min(power_ceiling, used.u2_star_w)
    return all_selections, pools, all_runs
