"""Rate model checks against an independent loop-based reference.

``loop_rates`` below re-derives every SINR term with plain Python loops:
intra-cluster residual after SIC (only UEs decoded later interfere),
inter-AP traffic on the same subband, partial leakage from both adjacent
subbands weighted by the source AP's overlap fractions, and thermal noise
scaled by the widened bandwidth. The vectorised implementation must agree
to near machine precision.
"""

import math

import numpy as np
import pytest

from domanet.config import desk_scale
from domanet.rates import (
    Assignment,
    OverlapProfile,
    PowerAllocation,
    check_constraints,
    interference_terms,
    network_metrics,
    rate_table,
)
from domanet.scenario import Scenario, generate_scenario


def loop_rates(scenario, rho, p_tilde, delta_r, delta_l):
    """Reference evaluator: nested loops, no shared code with rates.py."""
    cfg = scenario.config
    K, U, N = cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands
    B = cfg.subband_bandwidth_hz
    sigma2 = scenario.noise_power_w
    g = scenario.gains
    out = np.zeros((K, U, N))
    for k in range(K):
        for m in range(U):
            for n in range(N):
                if rho[k, m, n] <= 0:
                    continue
                my_rank = scenario.decoding_rank[k, n, m]
                intra = 0.0
                for mp in range(U):
                    if mp == m:
                        continue
                    if scenario.decoding_rank[k, n, mp] > my_rank:
                        intra += rho[k, mp, n] * p_tilde[k, mp, n] * g[k, mp, k, n]
                inter = 0.0
                for kp in range(K):
                    if kp == k:
                        continue
                    for mp in range(U):
                        inter += rho[kp, mp, n] * p_tilde[kp, mp, n] * g[kp, mp, k, n]
                partial = 0.0
                if n + 1 < N:
                    for kp in range(K):
                        w = (math.sqrt(delta_l[n + 1, kp])
                             + math.sqrt(delta_r[n, kp])) ** 2
                        for mp in range(U):
                            partial += (w * rho[kp, mp, n + 1] * p_tilde[kp, mp, n + 1]
                                        * g[kp, mp, k, n + 1])
                if n - 1 >= 0:
                    for kp in range(K):
                        w = (math.sqrt(delta_l[n, kp])
                             + math.sqrt(delta_r[n - 1, kp])) ** 2
                        for mp in range(U):
                            partial += (w * rho[kp, mp, n - 1] * p_tilde[kp, mp, n - 1]
                                        * g[kp, mp, k, n - 1])
                width = 1.0 + delta_l[n, k] + delta_r[n, k]
                denom = intra + inter + partial + sigma2 * width
                sinr = p_tilde[k, m, n] * g[k, m, k, n] / denom
                out[k, m, n] = B * width * math.log2(1.0 + sinr)
    return out


def random_decision(scenario, rng, overlap_scale=0.5):
    """Feasible-shaped random decision: capacity-respecting rho, box powers."""
    cfg = scenario.config
    K, U, N = cfg.num_aps, cfg.ues_per_ap, cfg.num_subbands
    rho = np.zeros((K, U, N))
    for k in range(K):
        load = np.zeros(N, dtype=int)
        for m in range(U):
            open_bands = np.flatnonzero(load < cfg.cluster_capacity)
            n = int(rng.choice(open_bands))
            rho[k, m, n] = 1.0
            load[n] += 1
    p = rho * rng.uniform(0.05, 1.0, size=rho.shape) * cfg.max_tx_power_w
    dr = rng.uniform(0.0, overlap_scale, size=(N, K))
    dr[-1, :] = 0.0
    overlap = OverlapProfile.symmetric_from_right(dr)
    return rho, p, overlap


@pytest.mark.parametrize("seed", range(12))
def test_rate_table_matches_loop_reference(seed):
    rng = np.random.default_rng(1000 + seed)
    cfg = desk_scale(num_aps=2, ues_per_ap=3, num_subbands=3, cluster_capacity=2)
    sc = generate_scenario(cfg, seed=seed)
    rho, p, overlap = random_decision(sc, rng)
    got = rate_table(sc, Assignment(rho), PowerAllocation(p), overlap)
    want = loop_rates(sc, rho, p, overlap.delta_r, overlap.delta_l)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-9)


def test_hand_computed_two_ap_case():
    """Every denominator term summed by hand for a 2 AP / 2 UE / 2 subband drop."""
    cfg = desk_scale()
    pos = np.tile(np.asarray(cfg.ap_positions)[:, None, :], (1, 2, 1))
    g = np.zeros((2, 2, 2, 2))
    # own-AP gains: AP0 carries both UEs on subband 0, AP1 both on subband 1
    g[0, 0, 0, :] = [4.0, 4.0]
    g[0, 1, 0, :] = [1.0, 1.0]
    g[1, 0, 1, :] = [2.0, 2.0]
    g[1, 1, 1, :] = [8.0, 8.0]
    # cross-AP gains
    g[0, 0, 1, :] = [0.5, 0.5]
    g[0, 1, 1, :] = [0.25, 0.25]
    g[1, 0, 0, :] = [0.125, 0.125]
    g[1, 1, 0, :] = [0.0625, 0.0625]
    g[g == 0] = 1e-9  # unused entries, kept positive for validation
    sc = Scenario(config=cfg, ue_positions=pos, gains=g, noise_power_w=1.0)

    rho = np.zeros((2, 2, 2))
    rho[0, :, 0] = 1.0
    rho[1, :, 1] = 1.0
    p = rho * 1.0
    dr = np.array([[0.25, 0.04], [0.0, 0.0]])
    overlap = OverlapProfile.symmetric_from_right(dr)

    terms = interference_terms(sc, Assignment(rho), PowerAllocation(p), overlap)

    # AP0, subband 0. UE0 (gain 4) decodes first, so UE1 (gain 1) interferes.
    assert terms.intra[0, 0, 0] == pytest.approx(1.0)
    assert terms.intra[0, 1, 0] == pytest.approx(0.0)
    # no AP1 traffic on subband 0
    assert terms.inter[0, 0, 0] == pytest.approx(0.0)
    # leak from subband 1: AP1's two UEs, weight (sqrt(.04)+sqrt(.04))^2 = 0.16
    want_partial = 0.16 * (1.0 * 0.125 + 1.0 * 0.0625)
    assert terms.partial[0, 0, 0] == pytest.approx(want_partial, rel=1e-12)
    # widened noise: sigma^2 * (1 + 0 + 0.25)
    assert terms.noise[0, 0] == pytest.approx(1.25)

    denom = 1.0 + 0.0 + want_partial + 1.25
    rate = rate_table(sc, Assignment(rho), PowerAllocation(p), overlap)
    want_rate = 180e3 * 1.25 * math.log2(1.0 + 4.0 / denom)
    assert rate[0, 0, 0] == pytest.approx(want_rate, rel=1e-12)

    # AP1, subband 1. UE1 (gain 8) first; UE0 (gain 2) suffers no residual.
    assert terms.intra[1, 1, 1] == pytest.approx(2.0)
    assert terms.intra[1, 0, 1] == pytest.approx(0.0)
    # AP0's UEs leak through subband-0 overlap of AP0: (sqrt(.25)+sqrt(.25))^2 = 1
    want_partial_1 = 1.0 * (1.0 * 0.5 + 1.0 * 0.25)
    assert terms.partial[1, 0, 1] == pytest.approx(want_partial_1, rel=1e-12)
    # AP1's own width on subband 1: 1 + delta_l (0.04) + 0
    assert terms.noise[1, 1] == pytest.approx(1.04)


def test_frozen_single_ue_rate():
    """Unit SINR on an unwidened band gives exactly B bps."""
    cfg = desk_scale(num_aps=1, ues_per_ap=1, num_subbands=1, cluster_capacity=1)
    pos = np.asarray(cfg.ap_positions)[:, None, :]
    sc = Scenario(config=cfg, ue_positions=pos,
                  gains=np.full((1, 1, 1, 1), 2.5), noise_power_w=1.0)
    rho = np.ones((1, 1, 1))
    p = np.full((1, 1, 1), 0.4)  # p*g = 1.0 = sigma^2
    overlap = OverlapProfile.zeros(1, 1)
    rate = rate_table(sc, Assignment(rho), PowerAllocation(p), overlap)
    assert rate[0, 0, 0] == 180000.0


def test_width_factor_triples_at_full_overlap():
    overlap = OverlapProfile.uniform(1.0, 3, 2)
    wf = overlap.width_factor()
    # interior subband overlaps on both sides
    assert np.all(wf[1, :] == 3.0)
    assert np.all(wf[0, :] == 2.0) and np.all(wf[2, :] == 2.0)


@pytest.mark.parametrize("delta", [0.1, 1.0 / 3.0, 0.37, 0.925, 1.0])
def test_symmetric_neighbour_weight_is_four_delta(delta):
    overlap = OverlapProfile.uniform(delta, 4, 2)
    w_up, w_down = overlap.neighbour_weights()
    np.testing.assert_allclose(w_up[:-1, :], 4.0 * delta, rtol=1e-15)
    np.testing.assert_allclose(w_down[1:, :], 4.0 * delta, rtol=1e-15)
    assert np.all(w_up[-1, :] == 0.0) and np.all(w_down[0, :] == 0.0)


def test_zero_overlap_collapses_partial_terms():
    cfg = desk_scale(num_aps=2, ues_per_ap=2, num_subbands=3)
    sc = generate_scenario(cfg, seed=5)
    rng = np.random.default_rng(5)
    rho, p, _ = random_decision(sc, rng)
    overlap = OverlapProfile.zeros(3, 2)
    terms = interference_terms(sc, Assignment(rho), PowerAllocation(p), overlap)
    assert np.all(terms.partial == 0.0)
    np.testing.assert_allclose(terms.noise, sc.noise_power_w)


def test_unassigned_entries_earn_no_rate():
    cfg = desk_scale()
    sc = generate_scenario(cfg, seed=2)
    rho = np.zeros((2, 2, 2))
    rho[0, 0, 0] = 1.0
    p = np.full((2, 2, 2), 0.1)  # deliberately positive where rho is zero
    rate = rate_table(sc, Assignment(rho), PowerAllocation(p),
                      OverlapProfile.zeros(2, 2))
    assert rate[0, 0, 0] > 0
    mask = rho == 0
    assert np.all(rate[mask] == 0.0)


def test_ue_relabelling_permutes_rates():
    cfg = desk_scale(ues_per_ap=3, cluster_capacity=3)
    sc = generate_scenario(cfg, seed=9)
    rng = np.random.default_rng(9)
    rho, p, overlap = random_decision(sc, rng)
    base = rate_table(sc, Assignment(rho), PowerAllocation(p), overlap)

    perm = np.array([2, 0, 1])
    sc2 = Scenario(config=cfg, ue_positions=sc.ue_positions[:, perm],
                   gains=sc.gains[:, perm], noise_power_w=sc.noise_power_w)
    swapped = rate_table(sc2, Assignment(rho[:, perm]),
                         PowerAllocation(p[:, perm]), overlap)
    np.testing.assert_allclose(swapped, base[:, perm], rtol=1e-12)


def test_network_metrics_identities():
    cfg = desk_scale()
    sc = generate_scenario(cfg, seed=4)
    rng = np.random.default_rng(4)
    rho, p, overlap = random_decision(sc, rng)
    m = network_metrics(sc, Assignment(rho), PowerAllocation(p), overlap)
    assert m.circuit_power_w == pytest.approx(2 * 2 * 0.03)
    assert m.sum_power_w == pytest.approx(p.sum())
    assert m.energy_efficiency == pytest.approx(
        m.sum_rate_bps / (m.sum_power_w + m.circuit_power_w))
    assert m.spectral_efficiency == pytest.approx(
        m.sum_rate_bps / cfg.total_bandwidth_hz)
    assert m.sum_rate_bps == pytest.approx(float((rho * m.per_ue_rate).sum()))


def test_per_ue_total_power():
    p = np.zeros((2, 2, 2))
    p[0, 0] = [0.1, 0.05]
    totals = PowerAllocation(p).per_ue_total()
    assert totals[0, 0] == pytest.approx(0.15)
    assert totals.shape == (2, 2)


def test_constraint_report_flags_each_violation():
    cfg = desk_scale()
    sc = generate_scenario(cfg, seed=6)
    overlap = OverlapProfile.zeros(2, 2)

    rho = np.zeros((2, 2, 2))
    rho[0, :, 0] = 1.0
    rho[1, 0, 0] = 1.0
    rho[1, 1, 1] = 1.0
    p = rho * cfg.max_tx_power_w
    report = check_constraints(sc, Assignment(rho), PowerAllocation(p), overlap)
    assert report.entries["cluster_capacity"][0]
    assert report.entries["single_subband"][0]
    assert report.entries["power_budget"][0]
    assert report.entries["binary"][0]

    # capacity: three UEs would exceed L=2 on one band
    cfg3 = desk_scale(ues_per_ap=3)
    sc3 = generate_scenario(cfg3, seed=6)
    rho3 = np.zeros((2, 3, 2))
    rho3[0, :, 0] = 1.0
    rho3[1, :, 1] = 1.0
    rep = check_constraints(sc3, Assignment(rho3),
                            PowerAllocation(rho3 * 0.1), OverlapProfile.zeros(2, 2))
    ok, excess = rep.entries["cluster_capacity"]
    assert not ok and excess == pytest.approx(1.0)
    assert not rep.feasible

    # single subband: one UE on two bands
    rho_dbl = np.zeros((2, 2, 2))
    rho_dbl[0, 0, :] = 1.0
    rho_dbl[0, 1, 1] = 1.0
    rho_dbl[1, :, 0] = 1.0
    rep = check_constraints(sc, Assignment(rho_dbl),
                            PowerAllocation(rho_dbl * 0.1), overlap)
    assert not rep.entries["single_subband"][0]
    assert rep.violation("single_subband") == pytest.approx(1.0)

    # power above rho * Pmax, including power on an unassigned band
    p_bad = rho * cfg.max_tx_power_w
    p_bad[0, 0, 1] = 0.05
    rep = check_constraints(sc, Assignment(rho), PowerAllocation(p_bad), overlap)
    assert not rep.entries["power_budget"][0]
    assert rep.violation("power_budget") == pytest.approx(0.05)

    # fractional rho trips the binary check unless relaxed
    rho_frac = rho.copy()
    rho_frac[0, 0, 0] = 0.5
    rep = check_constraints(sc, Assignment(rho_frac, relaxed=False),
                            PowerAllocation(rho_frac * 0.1), overlap)
    assert not rep.entries["binary"][0]
    rep_relaxed = check_constraints(sc, Assignment(rho_frac, relaxed=True),
                                    PowerAllocation(rho_frac * 0.1), overlap)
    assert "binary" not in rep_relaxed.entries

    # impossible QoS floor
    cfg_hard = desk_scale(qos_rate_bps_hz=1e6)
    sc_hard = generate_scenario(cfg_hard, seed=6)
    rep = check_constraints(sc_hard, Assignment(rho),
                            PowerAllocation(rho * 0.1), overlap)
    assert not rep.entries["qos"][0]
    assert rep.violation("qos") > 0


def test_overlap_profile_validation():
    bad = OverlapProfile(np.full((2, 2), 0.3), np.full((2, 2), 0.3))
    with pytest.raises(ValueError, match="first subband"):
        bad.validate()
    with pytest.raises(ValueError, match="symmetric"):
        OverlapProfile(np.array([[0.3, 0.3], [0.0, 0.0]]),
                       np.array([[0.0, 0.0], [0.1, 0.1]]),
                       symmetric=True).validate()
    with pytest.raises(ValueError):
        OverlapProfile(np.array([[1.5, 0.0], [0.0, 0.0]]),
                       np.zeros((2, 2))).validate()
    # rate_table refuses an invalid profile outright
    sc = generate_scenario(desk_scale(), seed=1)
    rho = np.zeros((2, 2, 2))
    rho[:, :, 0] = 1.0
    with pytest.raises(ValueError):
        rate_table(sc, Assignment(rho), PowerAllocation(rho * 0.1), bad)


def test_assignment_validate():
    with pytest.raises(ValueError):
        Assignment(np.array([[[0.4]]])).validate()
    Assignment(np.array([[[0.4]]]), relaxed=True).validate()
    with pytest.raises(ValueError):
        Assignment(np.array([[[-0.1]]]), relaxed=True).validate()
    with pytest.raises(ValueError):
        PowerAllocation(np.array([[[-1.0]]])).validate()
