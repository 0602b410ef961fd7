import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import small_instances
from gibbs_bigm.generators import MnppSpec, gen_mnpp, gen_tsp_circle
from gibbs_bigm.problem import (
    EnergyBreakdown,
    ProblemInstance,
    all_bitstrings,
    big_m_l1,
    build_qubo,
    instance_from_dict,
    instance_to_dict,
    is_feasible,
    l1_norm,
    load_instance,
    objective_energies,
    objective_energy,
    objective_lower_bound_trivial,
    penalty_energies,
    penalty_energy,
    penalty_upper_bound,
    save_instance,
    total_energies,
    total_energy,
)


def generic(Q, A=None, b=None):
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    A = np.zeros((0, n), dtype=int) if A is None else A
    b = np.zeros(0, dtype=int) if b is None else b
    return ProblemInstance(Q=Q, A=A, b=b)


@st.composite
def lcbo(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(0, 3))
    Q = draw(arrays(float, (n, n), elements=st.floats(-50, 50, allow_nan=False, width=32)))
    L = draw(arrays(float, n, elements=st.floats(-10, 10, allow_nan=False, width=32)))
    A = draw(arrays(np.int64, (m, n), elements=st.integers(-3, 3)))
    b = draw(arrays(np.int64, m, elements=st.integers(-2, 4)))
    c = draw(st.floats(-5, 5, allow_nan=False))
    return ProblemInstance(Q=Q, A=A, b=b, L=L, constant=c)


# -- energies -----------------------------------------------------------------


def test_objective_zero_matrix():
    inst = generic(np.zeros((3, 3)))
    assert objective_energy(inst, [1, 0, 1]) == 0


def test_objective_identity():
    assert objective_energy(generic(np.eye(3)), [1, 1, 0]) == 2


def test_objective_uses_q_as_given():
    inst = generic([[0.0, 4.0], [0.0, 0.0]])
    assert objective_energy(inst, [1, 1]) == 4.0


def test_mnpp_hand_evaluated(mnpp_35):
    # both numbers in partition 0: sums (8, 0), even share 4
    assert objective_energy(mnpp_35, [1, 0, 1, 0]) == pytest.approx(32.0)


def test_length_mismatch_rejected(mnpp_35):
    with pytest.raises(ValueError):
        objective_energy(mnpp_35, [1, 0, 1])
    with pytest.raises(ValueError):
        penalty_energy(mnpp_35, [1, 0, 1, 0, 0])
    with pytest.raises(ValueError):
        penalty_energy(mnpp_35, [1, 0, 2, 0])


def test_penalty_examples(mnpp_35):
    assert penalty_energy(mnpp_35, [0, 0, 0, 0]) == 2
    assert penalty_energy(mnpp_35, [1, 0, 0, 1]) == 0
    assert penalty_energy(gen_tsp_circle(2), [1, 1, 1, 1]) == 4


def test_total_energy_arithmetic():
    inst = ProblemInstance(Q=[[5.0, 0.0], [0.0, 0.0]], A=[[1, 1]], b=[0])
    # x = (1, 1): objective 5, penalty (2 - 0)^2 = 4
    br = total_energy(build_qubo(inst, 10.0), [1, 1])
    assert br == EnergyBreakdown(5.0, 4, 45.0)


def test_total_equals_objective_at_m0(mnpp_35):
    X = all_bitstrings(4)
    obj, _, tot = total_energies(build_qubo(mnpp_35, 0.0), X)
    np.testing.assert_array_equal(obj, tot)


def test_feasible_total_independent_of_m(mnpp_35):
    x = [0, 1, 1, 0]
    assert total_energy(build_qubo(mnpp_35, 1e6), x).total == pytest.approx(objective_energy(mnpp_35, x))


@pytest.mark.parametrize("inst", small_instances()[:8] + small_instances()[10:], ids=lambda i: f"{i.family}-{i.n}")
def test_energies_match_oracle(inst):
    X = all_bitstrings(inst.n)
    idx = np.random.default_rng(0).choice(len(X), size=min(64, len(X)), replace=False)
    for k in idx:
        x = tuple(int(v) for v in X[k])
        assert objective_energies(inst, X[k])[0] == pytest.approx(oracles.objective(inst, x), rel=1e-12, abs=1e-9)
        assert int(penalty_energies(inst, X[k])[0]) == oracles.penalty(inst, x)


@given(lcbo(), st.floats(0, 1e4, allow_nan=False), st.data())
def test_qubo_matches_breakdown(inst, M, data):
    reform = build_qubo(inst, M)
    x = data.draw(arrays(np.uint8, inst.n, elements=st.integers(0, 1)))
    br = total_energy(reform, x)
    assert br.total == br.objective + M * br.penalty
    q = reform.energies(x)[0]
    assert q == pytest.approx(br.total, rel=1e-12, abs=1e-6 * (1 + abs(br.total)))


@given(lcbo())
def test_penalty_zero_iff_constraints_hold(inst):
    X = np.random.default_rng(1).integers(0, 2, size=(50, inst.n))
    pen = penalty_energies(inst, X)
    direct = np.all(X @ inst.A.T == inst.b, axis=1)
    np.testing.assert_array_equal(pen == 0, direct)
    np.testing.assert_array_equal(is_feasible(inst, X), direct)
    assert np.all(pen >= 0)


def test_qubo_on_all_bitstrings():
    for inst in small_instances():
        if inst.n > 12:
            continue
        reform = build_qubo(inst, 3.7)
        X = all_bitstrings(inst.n)
        _, _, tot = total_energies(reform, X)
        np.testing.assert_allclose(reform.energies(X), tot, rtol=1e-10, atol=1e-9)


def test_build_qubo_examples(mnpp_35):
    inst = ProblemInstance(Q=[[0.0]], A=[[2]], b=[1])
    r = build_qubo(inst, 1.0)
    assert r.Q_total[0, 0] == 0.0 and r.offset == 1.0
    np.testing.assert_array_equal(r.energies([[0], [1]]), [1.0, 1.0])
    r0 = build_qubo(mnpp_35, 0.0)
    np.testing.assert_array_equal(r0.Q_total, mnpp_35.Q_folded)
    assert build_qubo(mnpp_35, 1.0).energies([0, 0, 0, 0])[0] - mnpp_35.constant == pytest.approx(2.0)


def test_offset_is_m_bb_plus_constant(mnpp_35):
    assert build_qubo(mnpp_35, 2.5).offset == pytest.approx(mnpp_35.constant + 2.5 * 2)


def test_negative_m_rejected(mnpp_35):
    with pytest.raises(ValueError):
        build_qubo(mnpp_35, -1.0)


# -- norms and bounds ---------------------------------------------------------


@pytest.mark.parametrize("Q,expected", [(np.zeros((2, 2)), 0.0), ([[1, -2], [3, 0]], 6.0), (np.eye(4), 4.0)])
def test_l1_norm(Q, expected):
    assert l1_norm(generic(Q)) == expected


def test_big_m_l1_value():
    Q = np.zeros((4, 4))
    Q[0, 0] = 10.0
    inst = generic(Q)
    assert big_m_l1(inst, 1.0, 0.5) == pytest.approx(5 * math.log(2) + 10, rel=1e-12)
    assert big_m_l1(inst, math.inf, 0.5) == 10.0
    assert big_m_l1(inst, 2.0, 1e-12) == pytest.approx(4 * math.log(2) / 2 + 10, rel=1e-9)


@pytest.mark.parametrize("beta,eta", [(0.0, 0.5), (-1.0, 0.5), (1.0, 0.0), (1.0, 1.0)])
def test_big_m_l1_rejects(beta, eta, mnpp_35):
    with pytest.raises(ValueError):
        big_m_l1(mnpp_35, beta, eta)


@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3), st.floats(0.01, 0.98))
def test_big_m_l1_monotone(b1, b2, eta):
    inst = gen_mnpp(MnppSpec(2, 2, values=[3, 5]))
    lo, hi = sorted((b1, b2))
    if hi > lo * (1 + 1e-9):
        assert big_m_l1(inst, lo, eta) > big_m_l1(inst, hi, eta)
    assert big_m_l1(inst, lo, eta) < big_m_l1(inst, lo, eta + 0.01)


def test_penalty_upper_bound_examples(mnpp_35):
    assert penalty_upper_bound(mnpp_35) == 2
    assert penalty_upper_bound(gen_tsp_circle(2)) == 4
    assert penalty_upper_bound(generic(np.zeros((2, 2)), A=np.array([[1, 1]]), b=np.array([1]))) == 1


@pytest.mark.parametrize("inst", small_instances(), ids=lambda i: f"{i.family}-{i.n}")
def test_bounds_hold_exhaustively(inst):
    X = all_bitstrings(inst.n)
    pen = penalty_energies(inst, X)
    assert penalty_upper_bound(inst) >= pen.max()
    if inst.family in ("mnpp", "tsp"):
        assert penalty_upper_bound(inst) == pen.max()
    assert objective_lower_bound_trivial(inst) <= objective_energies(inst, X).min() + 1e-9


def test_lower_bound_examples():
    assert objective_lower_bound_trivial(gen_tsp_circle(3)) == 0.0
    assert objective_lower_bound_trivial(generic([[1, -2], [3, 0]])) == -2.0
    assert objective_lower_bound_trivial(generic([[1, 2], [3, 0]])) == 0.0


# -- construction and serialization -------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(Q=np.ones((2, 3)), A=np.zeros((0, 2)), b=[]),
        dict(Q=[[np.inf, 0], [0, 0]], A=np.zeros((0, 2)), b=[]),
        dict(Q=np.eye(2), A=[[0.5, 1]], b=[1]),
        dict(Q=np.eye(2), A=[[1, 1]], b=[1.5]),
        dict(Q=np.eye(2), A=[[1, 1, 1]], b=[1]),
        dict(Q=np.eye(2), A=[[1, 1]], b=[1], family="mnpp", params={"N": 1, "P": 3}),
        dict(Q=np.eye(2), A=[[1, 1]], b=[1], family="knapsack"),
    ],
)
def test_invalid_instances(kwargs):
    with pytest.raises(ValueError):
        ProblemInstance(**kwargs)


def test_instance_is_immutable(mnpp_35):
    with pytest.raises(ValueError):
        mnpp_35.Q[0, 0] = 1.0
    with pytest.raises(Exception):
        mnpp_35.family = "tsp"


def test_sparse_and_dense_agree():
    rng = np.random.default_rng(3)
    Q = rng.normal(size=(6, 6))
    import scipy.sparse as sp

    dense = generic(Q, A=np.array([[1, 1, 0, 0, 1, 0]]), b=np.array([1]))
    sparse = ProblemInstance(Q=sp.coo_array(Q), A=dense.A, b=dense.b)
    X = all_bitstrings(6)
    np.testing.assert_allclose(objective_energies(dense, X), objective_energies(sparse, X), rtol=1e-12)
    np.testing.assert_allclose(build_qubo(dense, 2.0).energies(X), build_qubo(sparse, 2.0).energies(X), rtol=1e-12)


@given(lcbo())
def test_json_round_trip_bit_exact(inst):
    back = instance_from_dict(instance_to_dict(inst))
    np.testing.assert_array_equal(back.Q, inst.Q)
    np.testing.assert_array_equal(back.L, inst.L)
    np.testing.assert_array_equal(back.A, inst.A)
    np.testing.assert_array_equal(back.b, inst.b)
    assert back.constant == inst.constant


def test_file_round_trip(tmp_path):
    inst = gen_mnpp(MnppSpec(3, 2, seed=11))
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.family == "mnpp" and back.params == inst.params
    X = all_bitstrings(inst.n)
    np.testing.assert_array_equal(objective_energies(back, X), objective_energies(inst, X))
