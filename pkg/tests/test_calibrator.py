import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from gibbs_bigm.calibrator import (
    CalibrationBounds,
    CalibrationConfig,
    NoFeasibleTarget,
    bisect_decreasing,
    calibrate_beta,
    calibrate_m,
    eta_exist,
    g_linear,
    log_bound_feasible_high,
    log_bound_feasible_low,
    log_bound_infeasible,
    log_g,
    lower_bound_provider,
)
from gibbs_bigm.degeneracy import DegeneracyTable, npen_bruteforce
from gibbs_bigm.generators import MnppSpec, PoSpec, gen_mnpp, gen_po, gen_tsp_circle, gen_tsp_random
from gibbs_bigm.problem import ProblemInstance, all_bitstrings, big_m_l1, build_qubo, is_feasible, objective_energies, penalty_upper_bound
from gibbs_bigm.solvers import GibbsExact
from gibbs_bigm.spectral import SpectralWeights, UnsupportedFamily, bin_energies, exact_feasible_energies, exact_spectral_weights


def one_bin(weight, delta=1.0, E_LB=0.0):
    return SpectralWeights(E_LB, delta, np.array([weight]), 0.0, weight, math.log(weight), E_LB, "exact")


def exact_parts(inst, delta):
    spec = exact_spectral_weights(inst, delta)
    deg = npen_bruteforce(inst, penalty_upper_bound(inst))
    return spec, deg


def linear(spec, deg, beta, E_f, M, eta):
    bins = {k: int(c) for k, c in enumerate(spec.counts) if c}
    npen = dict(enumerate(deg.counts))
    return oracles.linear_bounds(bins, spec.delta, spec.E_LB, beta, E_f, npen, M, eta)


# -- the three bounds ---------------------------------------------------------


def test_low_single_bin():
    assert log_bound_feasible_low(one_bin(7, delta=2.0), 0.3) == pytest.approx(math.log(7) - 0.6)


def test_low_at_zero_beta():
    spec = bin_energies([0.1, 0.2, 1.5, 2.7, 2.8], 0.0, 1.0, math.log(40))
    assert log_bound_feasible_low(spec, 0.0) == pytest.approx(math.log(40))


def test_low_matches_linear(mnpp_35):
    spec, deg = exact_parts(mnpp_35, 1.0)
    b_low, *_ = linear(spec, deg, 1e-2, math.inf, 0.0, 0.5)
    assert math.exp(log_bound_feasible_low(spec, 1e-2)) == pytest.approx(b_low, rel=1e-12)


def test_high_sentinel_and_complement(mnpp_35):
    spec, deg = exact_parts(mnpp_35, 1.0)
    assert log_bound_feasible_high(spec, 0.1) == -math.inf
    full = log_bound_feasible_high(spec, 0.1, E_f=-5.0)
    assert full == pytest.approx(math.log(sum(c * math.exp(-0.1 * e) for e, c in zip(spec.lattice, spec.counts))))


def test_two_bin_split_matches_linear(mnpp_35):
    spec, deg = exact_parts(mnpp_35, 1.0)
    # feasible objectives are 2 and 32; E_f = 10 keeps bin [2, 3) low
    b_low, b_high, _, _ = linear(spec, deg, 0.05, 10.0, 0.0, 0.5)
    assert math.exp(log_bound_feasible_low(spec, 0.05, 10.0)) == pytest.approx(b_low, rel=1e-12)
    assert math.exp(log_bound_feasible_high(spec, 0.05, 10.0)) == pytest.approx(b_high, rel=1e-12)


def test_straddling_bin_counts_as_high():
    spec = bin_energies([0.5, 1.5, 2.5], 0.0, 1.0, math.log(3), source="exact")
    # E_f = 1.7 cuts bin [1, 2): only bin 0 lies fully below
    assert log_bound_feasible_low(spec, 1.0, 1.7) == pytest.approx(-1.0)
    assert log_bound_feasible_high(spec, 1.0, 1.7) == pytest.approx(math.log(math.exp(-1) + math.exp(-2)))


def test_low_empty_raises(mnpp_35):
    spec, _ = exact_parts(mnpp_35, 5.0)
    with pytest.raises(NoFeasibleTarget):
        log_bound_feasible_low(spec, 1.0, 3.0)


def test_infeasible_examples():
    deg = DegeneracyTable.from_counts([2, 0, 12, 0, 2], "analytic")
    assert log_bound_infeasible(deg, 1.0, 1.0) == pytest.approx(math.log(12 * math.exp(-2) + 2 * math.exp(-4)))
    assert log_bound_infeasible(deg, 1.0, 1.0) == pytest.approx(0.507, abs=1e-3)
    assert log_bound_infeasible(deg, 0.7, 0.0) == pytest.approx(math.log(14))
    vals = [log_bound_infeasible(deg, 1.0, M) for M in (0, 1, 10, 100, 1e4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < -1e4
    with pytest.raises(ValueError):
        log_bound_infeasible(deg, 1.0, -1.0)


def test_infeasible_all_zero_is_sentinel():
    deg = DegeneracyTable.from_counts([4, 0, 0], "analytic")
    assert log_bound_infeasible(deg, 1.0, 3.0) == -math.inf


# -- G, g and eta_exist -------------------------------------------------------


CASES = [
    (gen_mnpp(MnppSpec(2, 2, values=[3, 5])), 1.0),
    (gen_mnpp(MnppSpec(3, 3, seed=1)), 2000.0),
    (gen_tsp_random(3, seed=2), 1e4),
    (gen_po(PoSpec([0.03, -0.02, 0.01], np.diag([0.01, 0.03, 0.02]), w=2)), 1e-4),
]


@pytest.mark.parametrize("inst,delta", CASES, ids=lambda c: getattr(c, "family", ""))
@pytest.mark.parametrize("E_f_rule", ["inf", "median"])
def test_log_and_linear_agree_in_sign(inst, delta, E_f_rule):
    spec, deg = exact_parts(inst, delta)
    E = exact_feasible_energies(inst)
    E_f = math.inf if E_f_rule == "inf" else float(np.median(E))
    if E_f < spec.E_LB + spec.delta:
        E_f = spec.E_LB + spec.delta
    scale = max(1.0, float(E.max() - E.min()))
    for beta in (1e-3 / scale, 1.0 / scale, 10.0 / scale):
        bounds = CalibrationBounds.compute(spec, deg, beta, E_f)
        for eta in (0.25, 0.5, 0.75):
            for M in np.linspace(0.0, 20.0 * scale, 100):
                G = log_g(M, bounds, eta)
                g = g_linear(M, deg, spec, beta, eta, E_f)
                if abs(G) > 1e-9:
                    assert math.copysign(1, G) == math.copysign(1, g), (beta, eta, M)
                g_ref = linear(spec, deg, beta, E_f, M, eta)[3]
                assert g == pytest.approx(g_ref, rel=1e-9, abs=1e-300)


def test_G_decreasing_and_eta_limit(mnpp_35):
    spec, deg = exact_parts(mnpp_35, 1.0)
    bounds = CalibrationBounds.compute(spec, deg, 0.1)
    Gs = [log_g(M, bounds, 0.5) for M in np.linspace(0, 100, 50)]
    assert all(a > b for a, b in zip(Gs, Gs[1:]))
    capped = CalibrationBounds.compute(spec, deg, 0.1, 10.0)
    assert all(log_g(M, capped, 1 - 1e-15) > 0 for M in (0, 1e3, 1e9))


def test_eta_exist(mnpp_35):
    spec, deg = exact_parts(mnpp_35, 1.0)
    assert eta_exist(CalibrationBounds.compute(spec, deg, 0.1)) == 1.0
    two = bin_energies([0.5, 1.5], 0.0, 1.0, math.log(2), source="exact")
    b = CalibrationBounds(1.0, 1.0, 0.0, 0.0, deg, two)
    assert eta_exist(b) == 0.5
    bounds = CalibrationBounds.compute(spec, deg, 0.05, 10.0)
    b_low, b_high, _, _ = linear(spec, deg, 0.05, 10.0, 0.0, 0.5)
    assert eta_exist(bounds) == pytest.approx(b_low / (b_low + b_high), rel=1e-12)


def test_bisect_returns_nonpositive_end():
    root, it = bisect_decreasing(lambda x: 2.0 - x, 0.0, 8.0)
    assert 2.0 - root <= 0 and root == pytest.approx(2.0, rel=1e-9) and it > 0


# -- calibrate_m --------------------------------------------------------------


def cfg(**kw):
    base = dict(beta=1.0, eta=0.5, exact_spectral=True)
    base.update(kw)
    return CalibrationConfig(**base)


def test_config_validation():
    for bad in [dict(beta=0), dict(eta=1.0), dict(mode="fast"), dict(v_cut=0), dict(delta=-1.0), dict(n_samples=0), dict(eps_reduce=0)]:
        with pytest.raises(ValueError):
            cfg(**bad)


def test_trivial_at_infinite_temperature():
    inst = gen_mnpp(MnppSpec(2, 2, values=[3, 5]))
    frac = 4 / 16
    res = calibrate_m(inst, cfg(beta=1e-12, eta=frac * 0.9, v_cut=2))
    assert res.status == "trivial" and res.M_star == 0.0
    assert calibrate_m(inst, cfg(beta=1e-12, eta=frac * 1.1, v_cut=2)).status == "ok"


def test_mnpp_guarantee(mnpp_35):
    res = calibrate_m(mnpp_35, cfg(beta=1.0, eta=0.5, v_cut=2))
    assert res.status == "ok"
    assert oracles.gibbs_success(mnpp_35, res.M_star, 1.0) >= 0.5
    bounds = CalibrationBounds.compute(*exact_parts(mnpp_35, res.delta), 1.0)
    assert log_g(res.M_star, bounds, 0.5) <= 0


def test_unattainable_eta_on_nine_bits():
    inst = gen_mnpp(MnppSpec(3, 3, values=[210.0, 480.0, 730.0]))
    E = exact_feasible_energies(inst)
    E_f = float(np.median(E)) - 1.0
    res = calibrate_m(inst, cfg(beta=1e-6, eta=0.99, E_f=E_f, mode="practical"))
    assert res.status == "no_solution" and res.M_star is None and res.eta_exist < 0.99
    red = calibrate_m(inst, cfg(beta=1e-6, eta=0.99, E_f=E_f, mode="practical", auto_reduce=True))
    assert red.status == "reduced_eta"
    assert red.eta_used == pytest.approx(res.eta_exist - 0.01) and red.eta_used < red.eta_exist
    assert GibbsExact(build_qubo(inst, red.M_star), 1e-6).success_prob(E_f) >= red.eta_used
    # exhaustive check that the target really is out of reach at this temperature
    X = all_bitstrings(inst.n)
    assert np.mean(objective_energies(inst, X[is_feasible(inst, X)]) <= E_f) < 0.99


def test_dominance_over_l1_baseline():
    for inst, _ in CASES:
        for beta in (1e-3, 1.0):
            res = calibrate_m(inst, cfg(beta=beta, eta=0.75, v_cut=penalty_upper_bound(inst)))
            if res.status == "ok":
                assert res.M_star <= big_m_l1(inst, beta, 0.75) * (1 + 1e-9)


def test_e_f_below_lower_bound(mnpp_35):
    with pytest.raises(NoFeasibleTarget):
        calibrate_m(mnpp_35, cfg(E_f=-1.0))


def test_generic_needs_exact_or_weights():
    inst = ProblemInstance(Q=np.eye(3), A=[[1, 1, 1]], b=[1])
    with pytest.raises(UnsupportedFamily):
        calibrate_m(inst, cfg(exact_spectral=False))
    res = calibrate_m(inst, cfg(exact_spectral=True))
    assert res.status in ("ok", "trivial")
    assert oracles.gibbs_success(inst, res.M_star, 1.0) >= 0.5


def test_user_supplied_weights(mnpp_35):
    spec, deg = exact_parts(mnpp_35, 1.0)
    res = calibrate_m(mnpp_35, cfg(beta=0.2, eta=0.6), spectral=spec, degeneracy=deg)
    assert res.delta == 1.0 and res.v_cut == 4
    direct = calibrate_m(mnpp_35, cfg(beta=0.2, eta=0.6, delta=1.0, v_cut=2))
    assert res.M_star == pytest.approx(direct.M_star, rel=1e-12)


def test_sampled_guaranteed_mode_applies_floor():
    inst = gen_mnpp(MnppSpec(4, 3, seed=1))
    res = calibrate_m(inst, CalibrationConfig(beta=1e-3, eta=0.5, n_samples=5000, seed=3))
    assert res.diagnostics["spectral_source"] == "sampled"
    assert res.delta >= res.diagnostics["delta_floor"]
    again = calibrate_m(inst, CalibrationConfig(beta=1e-3, eta=0.5, n_samples=5000, seed=3))
    assert again.M_star == res.M_star


def test_result_json(mnpp_35):
    res = calibrate_m(mnpp_35, cfg(beta=0.1, eta=0.5, E_f=20.0, v_cut=2))
    d = json.loads(json.dumps(res.to_dict()))
    assert d["status"] == res.status and d["M_star"] == res.M_star
    assert "bracket_doublings" in d["diagnostics"]


@given(st.floats(1e-4, 10.0), st.floats(0.05, 0.95), st.integers(0, 3))
def test_status_contract(beta, eta, which):
    inst, delta = CASES[which]
    spec, deg = exact_parts(inst, delta)
    res = calibrate_m(inst, cfg(beta=beta, eta=eta, v_cut=deg.v_cut), spectral=spec, degeneracy=deg)
    bounds = CalibrationBounds.compute(spec, deg, beta)
    if res.status == "ok":
        assert res.M_star >= 0 and log_g(res.M_star, bounds, eta) <= 0
    elif res.status == "trivial":
        assert res.M_star == 0 and log_g(0.0, bounds, eta) <= 0
    else:
        assert res.M_star is None


# -- calibrate_beta -----------------------------------------------------------


def test_beta_root_contract_and_guarantee():
    inst = gen_mnpp(MnppSpec(3, 2, values=[4, 7, 9]))
    spec, deg = exact_parts(inst, 0.5)
    res = calibrate_beta(inst, cfg(eta=0.6), M=40.0, spectral=spec, degeneracy=deg)
    assert res.beta_star is not None
    bounds = CalibrationBounds.compute(spec, deg, res.beta_star)
    assert log_g(40.0, bounds, 0.6) <= 0
    assert oracles.gibbs_success(inst, 40.0, res.beta_star) >= 0.6


def test_feasibility_nondecreasing_in_beta():
    inst = gen_mnpp(MnppSpec(3, 2, values=[4, 7, 9]))
    probs = [GibbsExact(build_qubo(inst, 200.0), b).success_prob() for b in np.geomspace(1e-4, 10, 40)]
    assert all(b >= a - 1e-12 for a, b in zip(probs, probs[1:]))


def test_beta_absent_without_penalty():
    inst = gen_tsp_circle(2)
    spec, deg = exact_parts(inst, 1.0)
    frac = 2 / 16
    res = calibrate_beta(inst, cfg(eta=frac + 0.1), M=0.0, spectral=spec, degeneracy=deg)
    assert res.beta_star is None


# -- lower bounds -------------------------------------------------------------


def test_lower_bound_provider():
    assert lower_bound_provider(gen_tsp_random(4, seed=0)) == 0.0
    inst = gen_mnpp(MnppSpec(3, 3, seed=0))
    with pytest.raises(ValueError):
        lower_bound_provider(inst, "external", 1e12, seed=0)
    assert lower_bound_provider(inst, "external", -5.0, seed=0) == -5.0
    with pytest.raises(ValueError):
        lower_bound_provider(inst, "external")
    with pytest.raises(ValueError):
        lower_bound_provider(inst, "sdp")


def test_po_trivial_bound_is_valid():
    inst = gen_po(PoSpec([-0.03, -0.01, -0.02], np.zeros((3, 3)), w=4))
    X = all_bitstrings(inst.n)
    assert lower_bound_provider(inst) <= objective_energies(inst, X).min() + 1e-12
