import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dcopf_bases.network import PowerNetwork, RowKind, RowLabel, assemble_problem, build_ptdf
from oracles import dc_flows

CASES = ["case3_lmbd", "case5_pjm", "case14_ieee", "case30_ieee"]


def balanced(x):
    return x - x.mean()


@pytest.mark.parametrize("name", CASES)
def test_ptdf_matches_angle_solution(get_problem, name):
    net = get_problem(name).net
    rng = np.random.default_rng(3)
    for _ in range(5):
        inj = balanced(rng.normal(size=net.v))
        np.testing.assert_allclose(build_ptdf(net) @ inj, dc_flows(net, inj), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(inj=arrays(float, 14, elements=st.floats(-5, 5)), ref=st.integers(0, 13))
def test_ptdf_reference_choice_irrelevant_for_balanced_injection(get_problem, inj, ref):
    net = get_problem("case14_ieee").net
    inj = balanced(inj)
    np.testing.assert_allclose(build_ptdf(net, ref) @ inj, build_ptdf(net) @ inj, atol=1e-8)


def test_ptdf_reference_column_is_zero(get_problem):
    net = get_problem("case14_ieee").net
    assert np.all(build_ptdf(net)[:, net.ref_bus] == 0)


def test_two_bus_ptdf_by_hand():
    net = PowerNetwork.from_dict({
        "case_id": "two", "base_mva": 100.0, "ref_bus": 0,
        "d": [0.0, 1.0], "mu": [0.0, 0.0], "pmin": [0.0], "pmax": [2.0],
        "fmin": [-1.5], "fmax": [1.5], "c": [10.0], "gen_bus": [0],
        "branch_from": [0], "branch_to": [1], "susceptances": [5.0],
    })
    # injecting at bus 1 and withdrawing at the reference pushes flow from 1 to 0
    np.testing.assert_allclose(build_ptdf(net), [[0.0, -1.0]])
    prob = assemble_problem(net)
    assert prob.net.constraint_count == 5
    # flow on the line equals generation minus nothing: the load at bus 1 is served over it
    np.testing.assert_allclose(prob.b, [2.0, -0.0, 1.5 - 1.0, 1.5 + 1.0])


@pytest.mark.parametrize("name", CASES)
def test_problem_blocks(get_problem, name):
    prob = get_problem(name)
    net = prob.net
    n, m = net.n, net.m
    assert prob.n_rows == 2 * (n + m)
    np.testing.assert_array_equal(prob.A[:n], np.eye(n))
    np.testing.assert_array_equal(prob.A[n:2 * n], -np.eye(n))
    np.testing.assert_allclose(prob.A[2 * n:2 * n + m], prob.M @ net.H)
    np.testing.assert_allclose(prob.C[2 * n:2 * n + m], -prob.M)
    np.testing.assert_allclose(prob.C[2 * n + m:], prob.M)
    assert prob.row_labels[0] == RowLabel(RowKind.GEN_UB, 0)
    assert prob.row_labels[-1] == RowLabel(RowKind.FLOW_LB, m - 1)


def test_rhs_vector_and_matrix_forms(get_problem):
    prob = get_problem("case14_ieee")
    rng = np.random.default_rng(0)
    Om = rng.normal(size=(prob.v, 7))
    np.testing.assert_allclose(prob.rhs(Om), prob.b[:, None] + prob.C @ Om, atol=1e-12)
    np.testing.assert_allclose(prob.rhs(Om[:, 2]), prob.b + prob.C @ Om[:, 2], atol=1e-12)
    np.testing.assert_allclose(prob.balance_rhs(Om), prob.balance_rhs_base - Om.sum(axis=0))


def test_rhs_matches_independent_assembly(get_problem):
    from oracles import dense_system
    prob = get_problem("case30_ieee")
    omega = np.random.default_rng(1).normal(scale=0.01, size=prob.v)
    G, h, total = dense_system(prob.net, omega)
    np.testing.assert_allclose(prob.A, G, atol=1e-9)
    np.testing.assert_allclose(prob.rhs(omega), h, atol=1e-9)
    assert prob.balance_rhs(omega) == pytest.approx(total)


def test_infinite_limits_drop_rows():
    from dcopf_bases.matpower import parse_matpower, to_network
    from test_matpower import TOY
    prob = assemble_problem(to_network(parse_matpower(TOY)))
    # branch 1 has rateA = 0: its two rows are gone but the labels keep global indices
    assert prob.n_rows == 2 * (2 + 3) - 2
    assert RowLabel(RowKind.FLOW_UB, 1) not in prob.row_labels
    assert list(prob.global_rows[-2:]) == [2 * 2 + 3 + 0, 2 * 2 + 3 + 2]


def test_network_dict_round_trip(get_problem):
    net = get_problem("case5_pjm").net
    again = PowerNetwork.from_dict(json.loads(json.dumps(net.to_dict())))
    assert again.digest() == net.digest()
    np.testing.assert_array_equal(again.H, net.H)


def test_digest_changes_with_data(get_problem):
    net = get_problem("case5_pjm").net
    d = net.to_dict()
    d["pmax"][0] += 1e-3
    assert PowerNetwork.from_dict(d).digest() != net.digest()


def test_row_label_text_round_trip():
    for lab in (RowLabel(RowKind.GEN_UB, 3), RowLabel(RowKind.FLOW_LB, 120)):
        assert RowLabel.parse(str(lab)) == lab
    assert str(RowLabel(RowKind.GEN_UB, 3)) == "GenUB 3"


def test_invalid_network_rejected(get_problem):
    d = get_problem("case5_pjm").net.to_dict()
    d["pmin"][0] = d["pmax"][0] + 1
    with pytest.raises(ValueError):
        PowerNetwork.from_dict(d)
