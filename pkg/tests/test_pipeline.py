"""Solve pipeline: rounding, polish, utopia resolution, weight/mode sweeps."""

import numpy as np
import pytest

from domanet.config import desk_scale
from domanet.modes import MODES
from domanet.pipeline import (
    InfeasibleInstanceError,
    SolveSettings,
    _capacity_repair,
    _embed_delta,
    evaluate_candidate,
    provisional_utopia,
    resolve_utopia,
    round_assignments,
    solve_instance,
    sweep_modes,
    sweep_omegas,
)
from domanet.scalarize import DecisionSpace, Utopia
from domanet.scenario import generate_scenario

FAST = SolveSettings.fast()


def tiny_scenario(seed=1, **overrides):
    cfg = desk_scale(num_aps=1, ues_per_ap=2, num_subbands=2,
                     ap_positions=((200.0, 200.0),), **overrides)
    return generate_scenario(cfg, seed=seed)


def test_round_assignments_enumerates_tiny_spaces():
    sc = tiny_scenario()
    out = round_assignments(sc, MODES["noma"], [], FAST)
    assert len(out) == 4          # 2 UEs x 2 subbands, capacity 2
    keys = {tuple(np.flatnonzero(r.reshape(-1)).tolist()) for r in out}
    assert len(keys) == 4
    ofdma = round_assignments(sc, MODES["ofdma"], [], FAST)
    assert len(ofdma) == 2        # permutations only


def test_round_assignments_heuristics_at_desk_scale():
    sc = generate_scenario(desk_scale(), seed=5)
    cap = MODES["noma"].cluster_capacity(sc.config)
    relaxed = [np.random.default_rng(0).uniform(size=(2, 2, 2))]
    out = round_assignments(sc, MODES["pod"], relaxed, FAST)
    assert 1 <= len(out) <= FAST.max_assignments
    for rho in out:
        assert np.all(rho.sum(axis=2) == 1.0)          # every UE placed once
        assert np.all(rho.sum(axis=1) <= cap)
        assert set(np.unique(rho)) <= {0.0, 1.0}


def test_capacity_repair_moves_weakest_ue():
    own = np.zeros((1, 3, 2))
    own[0] = [[5.0, 1.0], [4.0, 2.0], [0.5, 3.0]]
    rho = np.zeros((1, 3, 2))
    rho[0, :, 0] = 1.0            # three UEs on one band, cap 2
    assert _capacity_repair(rho, own, cap=2)
    assert np.all(rho.sum(axis=1) <= 2)
    assert np.all(rho.sum(axis=2) == 1.0)
    # the weakest UE on the overloaded band (index 2) was the one moved
    assert rho[0, 2, 1] == 1.0

    stuck = np.ones((1, 3, 1))    # nowhere to move: one band, cap 1
    assert not _capacity_repair(stuck, own[:, :, :1], cap=1)


def test_evaluate_candidate_masks_and_clips_powers():
    sc = tiny_scenario(seed=2)
    space = DecisionSpace(sc, MODES["noma"])
    rho = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    p = np.full((1, 2, 2), 0.7)   # above the 0.2 budget, and on idle bands
    cand = evaluate_candidate(sc, space, rho, p, np.zeros(0), origin="probe")
    assert np.all(cand.p_tilde <= sc.config.max_tx_power_w + 1e-15)
    assert np.all(cand.p_tilde[rho == 0] == 0.0)
    assert cand.sp_w == pytest.approx(0.4)
    assert cand.origin == "probe"
    dup = evaluate_candidate(sc, space, rho, p, np.zeros(0), origin="other")
    assert cand.signature() == dup.signature()


def test_provisional_utopia_is_optimistic():
    sc = tiny_scenario(seed=3)
    prov = provisional_utopia(sc)
    assert prov.source == "provisional"
    assert prov.u2_star_w == 0.0
    grid = resolve_utopia(sc, MODES["noma"], FAST)
    assert prov.u1_star_se > grid.u1_star_se


def test_resolve_utopia_grid_path_and_cache():
    sc = tiny_scenario(seed=4)
    cache = {}
    u1 = resolve_utopia(sc, MODES["noma"], FAST, cache=cache)
    assert u1.source == "grid"
    assert u1.u2_star_w > 0.0
    u2 = resolve_utopia(sc, MODES["noma"], FAST, cache=cache)
    assert u2 is u1


def test_resolve_utopia_solver_path_fills_anchor_pool():
    sc = generate_scenario(desk_scale(), seed=6)
    pool = []
    utopia = resolve_utopia(sc, MODES["pod"], FAST, anchor_pool=pool)
    assert utopia.source == "solver"
    feas = [c for c in pool if c.feasible]
    assert feas
    W = sc.config.total_bandwidth_hz
    assert utopia.u1_star_se == pytest.approx(max(c.sr_bps for c in feas) / W)
    assert utopia.u2_star_w == pytest.approx(min(c.sp_w for c in feas))


def test_resolve_utopia_rejects_impossible_qos():
    sc = tiny_scenario(seed=5, qos_rate_bps_hz=1e6)
    with pytest.raises(InfeasibleInstanceError):
        resolve_utopia(sc, MODES["noma"], FAST)


def test_solve_instance_tiny_feasible():
    sc = tiny_scenario(seed=7)
    utopia = resolve_utopia(sc, MODES["noma"], FAST)
    sol = solve_instance(sc, MODES["noma"], 0.5, utopia, FAST)
    assert sol.status == "ok"
    assert sol.best is not None and sol.best.feasible
    assert sol.wall_time_s > 0
    cap = MODES["noma"].cluster_capacity(sc.config)
    W = sc.config.total_bandwidth_hz
    from domanet.scalarize import scalarization_for
    scal = scalarization_for(sc, utopia, 0.5)
    best_key = (sol.best.lam(scal, W), -sol.best.sr_bps)
    for cand in sol.candidates:
        assert np.all(cand.rho.sum(axis=1) <= cap)
        assert np.all(cand.p_tilde <= cand.rho * sc.config.max_tx_power_w + 1e-12)
        if cand.feasible:
            assert best_key <= (cand.lam(scal, W) + 1e-12, -cand.sr_bps)


def test_solve_instance_reports_infeasible():
    sc = tiny_scenario(seed=8, qos_rate_bps_hz=1e6)
    sol = solve_instance(sc, MODES["noma"], 0.5, Utopia(8.0, 0.0), FAST)
    assert sol.status == "infeasible"
    assert sol.best is None


def test_solve_instance_rejects_unsupported_mode():
    cfg = desk_scale(num_aps=1, ues_per_ap=3, num_subbands=2,
                     ap_positions=((200.0, 200.0),))
    sc = generate_scenario(cfg, seed=1)
    with pytest.raises(ValueError, match="cannot serve"):
        solve_instance(sc, MODES["ofdma"], 0.5, Utopia(8.0, 0.0), FAST)


def test_pool_entries_compete_in_selection():
    sc = tiny_scenario(seed=9)
    utopia = resolve_utopia(sc, MODES["noma"], FAST)
    first = solve_instance(sc, MODES["noma"], 0.7, utopia, FAST)
    pool = list(first.candidates)
    n0 = len(pool)
    second = solve_instance(sc, MODES["noma"], 0.7, utopia, FAST, pool=pool)
    assert len(pool) > n0
    W = sc.config.total_bandwidth_hz
    from domanet.scalarize import scalarization_for
    scal = scalarization_for(sc, utopia, 0.7)
    assert second.best.lam(scal, W) <= first.best.lam(scal, W) + 1e-12


def test_embed_delta_directions():
    cfg = desk_scale()
    noma, npod, pod = MODES["noma"], MODES["npod"], MODES["pod"]
    np.testing.assert_array_equal(_embed_delta(np.zeros(0), noma, pod, cfg),
                                  np.zeros(pod.delta_dim(cfg)))
    np.testing.assert_array_equal(_embed_delta(np.array([0.4]), npod, pod, cfg),
                                  np.full(pod.delta_dim(cfg), 0.4))
    same = _embed_delta(np.array([0.3, 0.1]), pod, pod, cfg)
    np.testing.assert_array_equal(same, [0.3, 0.1])
    assert _embed_delta(np.array([0.3, 0.1]), pod, npod, cfg) is None


def test_sweep_omegas_traces_monotone_se():
    sc = tiny_scenario(seed=10)
    omegas = [0.2, 0.5, 0.8]
    selections, pool, runs = sweep_omegas(sc, MODES["noma"], omegas, FAST)
    assert set(selections) == set(omegas)
    for sel in selections.values():
        assert sel is not None and sel.feasible
    W = sc.config.total_bandwidth_hz
    ses = [selections[w].se(W) for w in omegas]
    assert all(b >= a - 1e-9 for a, b in zip(ses, ses[1:]))
    sps = [selections[w].sp_w for w in omegas]
    assert all(b >= a - 1e-12 for a, b in zip(sps, sps[1:]))
    assert all(runs[w].status == "ok" for w in omegas)
    assert len(pool) >= len(runs[0.2].candidates)


def test_sweep_modes_injects_along_nesting():
    sc = tiny_scenario(seed=11)
    selections, pools, runs = sweep_modes(sc, ["noma", "pod"], [1.0], FAST)
    assert set(selections) == {"noma", "pod"}
    injected = [c for c in pools["pod"] if c.origin.endswith("+injected")]
    assert injected
    W = sc.config.total_bandwidth_hz
    # at omega=1 the selection maximises SE, and the pod pool contains the
    # noma winner, so pod can never trail
    assert selections["pod"][1.0].se(W) >= selections["noma"][1.0].se(W) - 1e-9
    # utopia rate anchors never shrink along the nesting
    assert runs["pod"][1.0].utopia.u1_star_se >= \
        runs["noma"][1.0].utopia.u1_star_se - 1e-12


def test_sweep_modes_skips_unsupported():
    cfg = desk_scale(num_aps=1, ues_per_ap=3, num_subbands=2,
                     ap_positions=((200.0, 200.0),))
    sc = generate_scenario(cfg, seed=12)
    selections, _, _ = sweep_modes(sc, ["ofdma", "noma"], [0.5], FAST)
    assert "ofdma" not in selections
    assert "noma" in selections
