"""Tchebycheff scalarisation, the increasing-pair decomposition and the lift."""

import numpy as np
import pytest

from domanet.config import desk_scale
from domanet.modes import MODES
from domanet.oracle import GridSpec
from domanet.rates import Assignment, OverlapProfile, PowerAllocation, rate_table
from domanet.scalarize import (
    DecisionSpace,
    ScalarizationConfig,
    Utopia,
    dif_functions,
    lift_to_p4,
    penalized_objective,
    scalarization_for,
    tchebycheff_objective,
    utopia_points,
)
from domanet.scenario import generate_scenario


def tiny_space(mode_name="pod", seed=1):
    cfg = desk_scale(num_aps=1, ues_per_ap=2, num_subbands=2,
                     ap_positions=((200.0, 200.0),))
    sc = generate_scenario(cfg, seed=seed)
    return DecisionSpace(sc, MODES[mode_name])


def make_cfg(space, omega=0.5, **kw):
    utopia = kw.pop("utopia", Utopia(u1_star_se=8.0, u2_star_w=0.01))
    return scalarization_for(space.scenario, utopia, omega, **kw)


def test_penalty_value_at_half():
    space = tiny_space()
    cfg = make_cfg(space)
    rho = np.zeros(4)
    rho[0] = 0.5
    assert penalized_objective(cfg, rho, 0.0) == pytest.approx(-250.0)
    # binary points pay nothing
    assert penalized_objective(cfg, np.array([1.0, 0.0]), 0.2) == pytest.approx(-0.2)


def test_pack_unpack_roundtrip():
    space = tiny_space("pod")
    rng = np.random.default_rng(0)
    rho = rng.uniform(size=space.shape)
    p = rng.uniform(size=space.shape) * 0.2
    dv = rng.uniform(size=space.n_delta)
    x = space.pack(rho, p, dv, 0.37)
    assert x.shape == (space.dim,)
    r2, p2, d2, lam = space.unpack(x)
    np.testing.assert_array_equal(r2, rho)
    np.testing.assert_array_equal(p2, p)
    np.testing.assert_array_equal(d2, dv)
    assert lam == 0.37


def test_delta_dim_by_mode():
    assert tiny_space("noma").n_delta == 0
    assert tiny_space("npod").n_delta == 1
    assert tiny_space("pod").n_delta == 1   # (N-1) * K = 1 here
    cfg = desk_scale(num_subbands=3, cluster_capacity=2)
    sc = generate_scenario(cfg, seed=0)
    assert DecisionSpace(sc, MODES["pod"]).n_delta == 4   # (3-1) * 2
    assert DecisionSpace(sc, MODES["npod"]).n_delta == 1


def test_tchebycheff_value_is_max_of_slacks():
    space = tiny_space()
    cfg = make_cfg(space, omega=0.3)
    W = space.scenario.config.total_bandwidth_hz
    val = tchebycheff_objective(cfg, sr_bps=4.0 * W, sp_w=0.05, total_bandwidth_hz=W)
    assert val.rate_slack == pytest.approx(0.3 * (1.0 - 4.0 / 8.0))
    assert val.power_slack == pytest.approx(0.7 * (0.05 - 0.01) / cfg.power_scale_w)
    assert val.lam == pytest.approx(max(val.rate_slack, val.power_slack))
    # at the utopia pair both slacks vanish
    at_star = tchebycheff_objective(cfg, 8.0 * W, 0.01, W)
    assert at_star.lam == pytest.approx(0.0, abs=1e-15)


def test_tchebycheff_accepts_arrays():
    space = tiny_space()
    cfg = make_cfg(space, omega=0.6)
    W = space.scenario.config.total_bandwidth_hz
    sr = np.array([2.0, 5.0, 8.0]) * W
    sp = np.array([0.4, 0.01, 0.2])
    batch = tchebycheff_objective(cfg, sr, sp, W)
    for i in range(3):
        one = tchebycheff_objective(cfg, float(sr[i]), float(sp[i]), W)
        assert batch.lam[i] == pytest.approx(one.lam)


def test_utopia_points_from_grid():
    space = tiny_space("noma", seed=3)
    utopia = utopia_points(space.scenario, MODES["noma"], GridSpec(9, 3, 100_000))
    assert utopia.source == "grid"
    assert utopia.u1_star_se > 0
    assert 0 < utopia.u2_star_w <= 2 * 0.2
    # the SE anchor cannot fall below what one feasible point achieves
    assert utopia.u1_star_se * space.scenario.config.total_bandwidth_hz \
        >= utopia.u2_star_w  # units differ; just a sanity floor on positivity


def test_scalarization_validation_and_cap():
    space = tiny_space()
    with pytest.raises(ValueError, match="omega"):
        make_cfg(space, omega=1.5)
    with pytest.raises(ValueError, match="utopia"):
        make_cfg(space, utopia=Utopia(u1_star_se=0.0, u2_star_w=0.01))
    cfg = make_cfg(space, omega=0.4)
    assert cfg.lambda_cap >= 0.4
    assert cfg.lambda_cap >= (1.0 - 0.4) * (1.0 - cfg.u2_norm)
    # explicit cap survives finalise
    explicit = make_cfg(space, omega=0.4, lambda_cap=2.0)
    assert explicit.lambda_cap == 2.0
    with pytest.raises(ValueError, match="qos_form"):
        make_cfg(space, qos_form="bogus")


def test_pair_slack_identities():
    """plus - minus of the two objective pairs equals lambda minus the slack."""
    space = tiny_space("pod", seed=2)
    cfg = make_cfg(space, omega=0.45)
    dif = dif_functions(space, cfg)
    rng = np.random.default_rng(7)
    for _ in range(5):
        rho = rng.integers(0, 2, size=space.shape).astype(float)
        p = rho * rng.uniform(0.0, 0.2, size=space.shape)
        dv = rng.uniform(0.0, 1.0, size=space.n_delta)
        lam = float(rng.uniform(0.0, cfg.lambda_cap))
        x = space.pack(rho, p, dv, lam)
        rate_slack, power_slack = dif.slacks(x)
        rg = dif.pair("rate_gap")
        assert rg.plus(x) - rg.minus(x) == pytest.approx(lam - rate_slack, abs=1e-9)
        pg = dif.pair("power_gap")
        assert pg.plus(x) - pg.minus(x) == pytest.approx(lam - power_slack, abs=1e-12)


def test_lifted_rates_match_rate_table():
    """The log-difference rates inside the decomposition are the real rates."""
    space = tiny_space("pod", seed=5)
    cfg = make_cfg(space, omega=0.5)
    dif = dif_functions(space, cfg)
    sc = space.scenario
    rho = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    p = rho * 0.15
    dv = np.array([0.6])
    x = space.pack(rho, p, dv, 0.0)

    qos_pair = dif.pair("qos")
    # per-UE slack: min normalised UE rate minus the normalised floor
    gap = qos_pair.plus(x) - qos_pair.minus(x)
    overlap = space.overlap_of(dv)
    rates = rate_table(sc, Assignment(rho), PowerAllocation(p), overlap)
    per_ue = (rho * rates).sum(axis=2)
    W = sc.config.total_bandwidth_hz
    u1 = cfg.utopia.u1_star_se
    want = (per_ue.min() - sc.config.qos_rate_bps) / (W * u1)
    assert gap == pytest.approx(want, rel=1e-9, abs=1e-12)

    # rate_gap slack reproduces the sum rate the same way
    rate_slack, _ = dif.slacks(x)
    se_norm = rates.sum() / (W * u1)
    assert rate_slack == pytest.approx(cfg.omega * (1.0 - se_norm), rel=1e-9)


def test_qos_forms_differ():
    space = tiny_space("pod", seed=4)
    x = space.pack(np.ones(space.shape) * np.array([[[1.0, 0.0], [0.0, 1.0]]]),
                   np.full(space.shape, 0.1), np.array([0.3]), 0.1)
    vals = {}
    for form in ("per_ue", "printed_tuple", "printed_strict"):
        cfg = make_cfg(space, qos_form=form)
        dif = dif_functions(space, cfg)
        q = dif.pair("qos")
        vals[form] = (q.plus(x), q.minus(x))
    assert vals["per_ue"] != vals["printed_tuple"]
    # the strict printed variant keeps the same minus member as the tuple one
    assert vals["printed_tuple"][1] == pytest.approx(vals["printed_strict"][1])


def test_pairs_are_increasing_sampled():
    space = tiny_space("pod", seed=6)
    cfg = make_cfg(space, omega=0.55)
    dif = dif_functions(space, cfg)
    upper = space.upper(cfg.lambda_cap)
    rng = np.random.default_rng(11)
    for _ in range(40):
        x = rng.uniform(0.0, upper)
        y = x + rng.uniform(0.0, upper - x)
        fx_minus, fy_minus = dif.minus_all(x), dif.minus_all(y)
        fx_plus, fy_plus = dif.plus_all(x), dif.plus_all(y)
        slack = 1e-9 * np.maximum(1.0, np.abs(fx_minus))
        assert np.all(fy_minus >= fx_minus - slack)
        slack = 1e-9 * np.maximum(1.0, np.abs(fx_plus))
        assert np.all(fy_plus >= fx_plus - slack)


def test_aux_bounds_nonnegative():
    space = tiny_space("pod")
    cfg = make_cfg(space)
    dif = dif_functions(space, cfg)
    for pair in dif.pairs:
        assert pair.aux_bound >= 0.0
        assert pair.minus_at_max >= pair.minus_at_zero


def test_lift_objective_translates_to_penalised_scale():
    space = tiny_space("pod", seed=8)
    cfg = make_cfg(space, omega=0.35)
    lifted = lift_to_p4(space, cfg)
    rng = np.random.default_rng(3)
    for _ in range(6):
        rho = rng.integers(0, 2, size=space.shape).astype(float)
        p = rho * rng.uniform(0.0, 0.2, size=space.shape)
        dv = rng.uniform(0.0, 1.0, size=space.n_delta)
        lam = float(rng.uniform(0.0, lifted.config.lambda_cap))
        dec = space.pack(rho, p, dv, lam)
        full = lifted.tight_lift(dec)
        p4_val = lifted.problem.objective(full)
        back = lifted.relaxed_value(p4_val, full)
        assert back == pytest.approx(penalized_objective(cfg, rho, lam), abs=1e-9)
        # without the point the perturbation stays but is tiny
        noisy = lifted.relaxed_value(p4_val)
        assert abs(noisy - back) < 1e-4


def test_tight_lift_is_normal_and_repair_restores_feasibility():
    space = tiny_space("pod", seed=9)
    cfg = make_cfg(space, omega=0.5,
                   utopia=Utopia(u1_star_se=4.0, u2_star_w=0.005))
    lifted = lift_to_p4(space, cfg)
    rho = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    p = rho * 0.2
    dec = space.pack(rho, p, np.full(space.n_delta, 0.2), cfg.lambda_cap)
    full = lifted.tight_lift(dec)
    assert lifted.problem.normal_oracle(full)

    # scale down as the ray projection would, then repair
    shrunk = 0.8 * full
    repaired = lifted.repair(shrunk)
    assert lifted.problem.normal_oracle(repaired)
    r2, p2, d2, lam2 = space.unpack(repaired[: space.dim])
    rate_slack, power_slack = lifted.dif.slacks(repaired[: space.dim])
    assert lam2 == pytest.approx(min(max(rate_slack, power_slack, 0.0),
                                     cfg.lambda_cap))


def test_normal_oracle_rejects_capacity_violations():
    space = tiny_space("noma", seed=10)
    cfg = make_cfg(space)
    lifted = lift_to_p4(space, cfg)
    rho = np.array([[[1.0, 0.0], [1.0, 0.0]]])   # both UEs on band 0, L=2: fine
    dec = space.pack(rho, rho * 0.1, np.zeros(0), 0.0)
    assert lifted.problem.normal_oracle(lifted.tight_lift(dec))

    crowd = desk_scale(num_aps=1, ues_per_ap=3, num_subbands=2,
                       ap_positions=((200.0, 200.0),), cluster_capacity=2)
    sc = generate_scenario(crowd, seed=10)
    space3 = DecisionSpace(sc, MODES["noma"])
    lifted3 = lift_to_p4(space3, make_cfg(space3))
    rho3 = np.zeros(space3.shape)
    rho3[0, :, 0] = 1.0                          # three UEs on one band
    dec3 = space3.pack(rho3, rho3 * 0.1, np.zeros(0), 0.0)
    assert not lifted3.problem.normal_oracle(lifted3.tight_lift(dec3))

    # one UE on both bands violates the single-subband rule
    rho_dbl = np.array([[[1.0, 1.0], [0.0, 0.0]]])
    dec_dbl = space.pack(rho_dbl, rho_dbl * 0.1, np.zeros(0), 0.0)
    assert not lifted.problem.normal_oracle(lifted.tight_lift(dec_dbl))
