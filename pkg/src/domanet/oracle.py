"""Independent checking tools: a loop-built metrics evaluator and an
exhaustive grid search over the allocation problem.

Everything here re-derives the rate equations from scratch on purpose.
None of the evaluation code is shared with the vectorised implementation
in ``rates``; agreement between the two is asserted by the test suite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .modes import Mode
from .rates import Assignment, Metrics, OverlapProfile, PowerAllocation
from .scenario import Scenario


class GridCapError(RuntimeError):
    """The requested exhaustive search exceeds the evaluation budget."""


class InfeasibleScenarioError(RuntimeError):
    """No gridded allocation satisfies the QoS floor."""


@dataclass(frozen=True)
class GridSpec:
    power_points: int = 21
    delta_points: int = 21
    max_evaluations: int = 10_000_000


@dataclass
class OracleResult:
    objective_value: float
    rho: np.ndarray
    p_tilde: np.ndarray
    delta_values: np.ndarray
    sr_bps: float
    sp_w: float
    n_evaluated: int
    neighbour_step: float


# --------------------------------------------------------------------------
# loop-built reference evaluators


def recompute_metrics(scenario: Scenario, assignment: Assignment,
                      powers: PowerAllocation, overlap: OverlapProfile) -> Metrics:
    """Metrics computed with explicit per-term loops (reference path)."""
    cfg = scenario.config
    K, U, N = cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands
    g = scenario.gains
    rho, p = assignment.rho, powers.p_tilde
    dl, dr = overlap.delta_l, overlap.delta_r
    sigma2 = scenario.noise_power_w
    B = cfg.subband_bandwidth_hz

    rates = np.zeros((K, U, N))
    for k in range(K):
        for m in range(U):
            for n in range(N):
                if rho[k, m, n] <= 0:
                    continue
                my_pos = scenario.decoding_rank[k, n, m]
                intra = 0.0
                for m2 in range(U):
                    if scenario.decoding_rank[k, n, m2] > my_pos:
                        intra += rho[k, m2, n] * p[k, m2, n] * g[k, m2, k, n]
                inter = 0.0
                for k2 in range(K):
                    if k2 == k:
                        continue
                    for m2 in range(U):
                        inter += rho[k2, m2, n] * p[k2, m2, n] * g[k2, m2, k, n]
                partial = 0.0
                for k2 in range(K):
                    for m2 in range(U):
                        if n + 1 < N:
                            w = (math.sqrt(dl[n + 1, k2]) + math.sqrt(dr[n, k2])) ** 2
                            partial += w * rho[k2, m2, n + 1] * p[k2, m2, n + 1] * g[k2, m2, k, n + 1]
                        if n - 1 >= 0:
                            w = (math.sqrt(dl[n, k2]) + math.sqrt(dr[n - 1, k2])) ** 2
                            partial += w * rho[k2, m2, n - 1] * p[k2, m2, n - 1] * g[k2, m2, k, n - 1]
                noise = sigma2 * (1.0 + dl[n, k] + dr[n, k])
                sinr = p[k, m, n] * g[k, m, k, n] / (intra + inter + partial + noise)
                width = B * (1.0 + dl[n, k] + dr[n, k])
                rates[k, m, n] = width * math.log2(1.0 + sinr)

    sum_rate = float(sum(
        rho[k, m, n] * rates[k, m, n]
        for k in range(K) for m in range(U) for n in range(N)
    ))
    sum_power = float(p.sum())
    circuit = cfg.circuit_power_w * K * U
    return Metrics(
        per_ue_rate=rates,
        sum_rate_bps=sum_rate,
        sum_power_w=sum_power,
        circuit_power_w=circuit,
        energy_efficiency=sum_rate / (sum_power + circuit),
        spectral_efficiency=sum_rate / cfg.total_bandwidth_hz,
    )


def noma_rates(scenario: Scenario, assignment: Assignment,
               powers: PowerAllocation) -> np.ndarray:
    """Plain NOMA rates: orthogonal subbands, no overlap terms anywhere."""
    cfg = scenario.config
    K, U, N = cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands
    g = scenario.gains
    rho, p = assignment.rho, powers.p_tilde
    sigma2 = scenario.noise_power_w
    B = cfg.subband_bandwidth_hz

    rates = np.zeros((K, U, N))
    for k in range(K):
        for m in range(U):
            for n in range(N):
                if rho[k, m, n] <= 0:
                    continue
                my_pos = scenario.decoding_rank[k, n, m]
                denom = sigma2
                for m2 in range(U):
                    if scenario.decoding_rank[k, n, m2] > my_pos:
                        denom += rho[k, m2, n] * p[k, m2, n] * g[k, m2, k, n]
                for k2 in range(K):
                    if k2 == k:
                        continue
                    for m2 in range(U):
                        denom += rho[k2, m2, n] * p[k2, m2, n] * g[k2, m2, k, n]
                rates[k, m, n] = B * math.log2(1.0 + p[k, m, n] * g[k, m, k, n] / denom)
    return rates


# --------------------------------------------------------------------------
# exhaustive grid search


def enumerate_assignments(config, mode: Mode, require_full: bool):
    """Yield binary rho tensors satisfying the per-UE and capacity limits."""
    K, U, N = config.num_aps, config.ues_per_ap, config.num_subbands
    cap = mode.cluster_capacity(config)
    choices = range(N) if require_full else range(-1, N)
    for combo in itertools.product(choices, repeat=K * U):
        rho = np.zeros((K, U, N))
        ok = True
        load = np.zeros((K, N), dtype=int)
        for idx, n in enumerate(combo):
            if n < 0:
                continue
            k, m = divmod(idx, U)
            load[k, n] += 1
            if load[k, n] > cap:
                ok = False
                break
            rho[k, m, n] = 1.0
        if ok:
            yield rho


def _delta_arrays(mode: Mode, config, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(delta_r, delta_l) for the mode's free overlap values, symmetric tie."""
    N, K = config.num_subbands, config.num_aps
    delta_r = np.zeros((N, K))
    if mode.has_overlap and N > 1:
        if mode.shared_overlap:
            delta_r[:-1, :] = float(values[0])
        else:
            delta_r[:-1, :] = np.asarray(values, dtype=float).reshape(N - 1, K)
    delta_l = np.zeros((N, K))
    delta_l[1:, :] = delta_r[:-1, :]
    return delta_r, delta_l


def _batch_eval(scenario: Scenario, rho: np.ndarray, p_batch: np.ndarray,
                delta_r: np.ndarray, delta_l: np.ndarray):
    """Sum rate, sum power and QoS feasibility for a batch of power tensors.

    ``p_batch`` has shape (R, K, U, N). Returns (sr, sp, qos_ok) over R.
    """
    cfg = scenario.config
    K, U, N = cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands
    g = scenario.gains
    sigma2 = scenario.noise_power_w
    B = cfg.subband_bandwidth_hz
    R = p_batch.shape[0]

    pg = np.einsum("rkmn,kmjn->rkmjn", p_batch, g)      # r, k_src, m, k_rx, n
    per_src = pg.sum(axis=2)                            # (R, K_src, K_rx, N)
    total_rx = per_src.sum(axis=1)                      # (R, K_rx, N)

    width = 1.0 + delta_l + delta_r                     # (N, K)
    if N > 1:
        w_up = np.zeros((N, K))
        w_dn = np.zeros((N, K))
        w_up[:-1, :] = (np.sqrt(delta_l[1:, :]) + np.sqrt(delta_r[:-1, :])) ** 2
        w_dn[1:, :] = w_up[:-1, :]
    else:
        w_up = w_dn = np.zeros((N, K))

    rates = np.zeros((R, K, U, N))
    for k in range(K):
        own = pg[:, k, :, k, :]                         # (R, U, N)
        for n in range(N):
            order = np.argsort(scenario.decoding_rank[k, n])
            contrib = own[:, order, n]                  # (R, U) in decode order
            rev = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1]
            tail = np.concatenate([rev[:, 1:], np.zeros((R, 1))], axis=1)
            intra = np.empty((R, U))
            intra[:, order] = tail
            inter = total_rx[:, k, n][:, None] - per_src[:, k, k, n][:, None]
            partial = np.zeros(R)
            if n + 1 < N:
                partial = partial + per_src[:, :, k, n + 1] @ w_up[n, :]
            if n - 1 >= 0:
                partial = partial + per_src[:, :, k, n - 1] @ w_dn[n, :]
            denom = intra + inter + partial[:, None] + sigma2 * width[n, k]
            sinr = own[:, :, n] / denom
            band = B * width[n, k]
            rates[:, k, :, n] = np.where(rho[k, :, n] > 0, band * np.log2(1.0 + sinr), 0.0)

    sr = np.einsum("rkmn,kmn->r", rates, rho)
    sp = p_batch.reshape(R, -1).sum(axis=1)
    per_ue = rates.sum(axis=3)                          # (R, K, U)
    qos = cfg.qos_rate_bps
    qos_ok = (per_ue >= qos - 1e-9 * max(1.0, qos)).all(axis=(1, 2))
    return sr, sp, qos_ok


def _estimate_evaluations(config, mode: Mode, grid: GridSpec, require_full: bool) -> int:
    total = 0
    n_delta = mode.delta_dim(config)
    delta_combos = grid.delta_points ** n_delta if n_delta else 1
    for rho in enumerate_assignments(config, mode, require_full):
        active = int(rho.sum())
        total += (grid.power_points ** active) * delta_combos
        if total > grid.max_evaluations:
            return total
    return total


def estimate_evaluations(config, mode: Mode, grid: GridSpec = GridSpec(),
                         require_full: bool = True) -> int:
    """Work estimate for ``exhaustive_best``; raises GridCapError when the
    instance exceeds the grid budget."""
    est = _estimate_evaluations(config, mode, grid, require_full)
    if est > grid.max_evaluations:
        raise GridCapError(
            f"grid search needs ~{est} evaluations, cap is {grid.max_evaluations}"
        )
    return est


def exhaustive_best(scenario: Scenario, mode: Mode, objective_fn,
                    grid: GridSpec = GridSpec(), require_qos: bool = True) -> OracleResult:
    """Minimise ``objective_fn(sr_bps, sp_w)`` over the gridded problem.

    Binary assignments are enumerated exactly; powers and overlap values
    run over uniform grids. QoS-violating points are discarded when
    ``require_qos``. Raises GridCapError if the sweep would exceed the
    evaluation budget and InfeasibleScenarioError if nothing survives the
    QoS floor.
    """
    cfg = scenario.config
    require_full = require_qos and cfg.qos_rate_bps > 0
    est = _estimate_evaluations(cfg, mode, grid, require_full)
    if est > grid.max_evaluations:
        raise GridCapError(
            f"grid search needs ~{est} evaluations, cap is {grid.max_evaluations}"
        )

    power_axis = np.linspace(0.0, cfg.max_tx_power_w, grid.power_points)
    delta_axis = np.linspace(0.0, 1.0, grid.delta_points)
    n_delta = mode.delta_dim(cfg)
    delta_combos = (
        list(itertools.product(range(grid.delta_points), repeat=n_delta))
        if n_delta else [()]
    )

    best = None   # (obj, rho, p, delta_values, sr, sp, grid index info)
    n_eval = 0

    for rho in enumerate_assignments(cfg, mode, require_full):
        active = np.argwhere(rho > 0)                   # rows (k, m, n)
        a = len(active)
        mesh = np.stack(np.meshgrid(*([np.arange(grid.power_points)] * a),
                                    indexing="ij"), axis=-1).reshape(-1, a) \
            if a else np.zeros((1, 0), dtype=int)
        p_batch = np.zeros((mesh.shape[0], cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands))
        for j, (k, m, n) in enumerate(active):
            p_batch[:, k, m, n] = power_axis[mesh[:, j]]
        for dcombo in delta_combos:
            dvals = delta_axis[list(dcombo)] if n_delta else np.zeros(0)
            delta_r, delta_l = _delta_arrays(mode, cfg, dvals)
            sr, sp, qos_ok = _batch_eval(scenario, rho, p_batch, delta_r, delta_l)
            n_eval += len(sr)
            mask = qos_ok if require_qos else np.ones_like(qos_ok)
            if not mask.any():
                continue
            obj = objective_fn(sr, sp)
            obj = np.where(mask, obj, np.inf)
            r = int(np.argmin(obj))
            if best is None or obj[r] < best[0]:
                best = (float(obj[r]), rho.copy(), p_batch[r].copy(), dvals.copy(),
                        float(sr[r]), float(sp[r]), mesh[r].copy(), dcombo, active)

    if best is None:
        raise InfeasibleScenarioError("no gridded allocation meets the QoS floor")

    obj, rho, p, dvals, sr, sp, pidx, didx, active = best
    step = _neighbour_step(scenario, mode, objective_fn, grid, require_qos,
                           power_axis, delta_axis, obj, rho, pidx, didx, active)
    return OracleResult(
        objective_value=obj, rho=rho, p_tilde=p, delta_values=dvals,
        sr_bps=sr, sp_w=sp, n_evaluated=n_eval, neighbour_step=step,
    )


def _neighbour_step(scenario, mode: Mode, objective_fn, grid: GridSpec,
                    require_qos: bool, power_axis, delta_axis,
                    best_obj: float, rho, pidx, didx, active) -> float:
    """Largest objective change over one-step grid moves from the optimum."""
    cfg = scenario.config
    moves = []
    for j in range(len(pidx)):
        for d in (-1, 1):
            cand = pidx.copy()
            cand[j] += d
            if 0 <= cand[j] < grid.power_points:
                moves.append((cand, didx))
    for j in range(len(didx)):
        for d in (-1, 1):
            cand = list(didx)
            cand[j] += d
            if 0 <= cand[j] < grid.delta_points:
                moves.append((pidx, tuple(cand)))

    worst = 0.0
    for p_i, d_i in moves:
        p = np.zeros((1, cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands))
        for j, (k, m, n) in enumerate(active):
            p[0, k, m, n] = power_axis[p_i[j]]
        dvals = delta_axis[list(d_i)] if d_i else np.zeros(0)
        delta_r, delta_l = _delta_arrays(mode, cfg, dvals)
        sr, sp, qos_ok = _batch_eval(scenario, rho, p, delta_r, delta_l)
        if require_qos and not qos_ok[0]:
            continue
        obj = float(np.asarray(objective_fn(sr, sp))[0])
        worst = max(worst, abs(obj - best_obj))
    return worst
