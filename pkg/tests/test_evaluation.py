import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dcopf_bases.evaluation import (
    EvaluationReport,
    KRecord,
    SchemaMismatch,
    coverage_curve,
    evaluate_out_of_sample,
    is_optimal_cost,
    merge_reports,
    render_tables,
    score_ensemble,
)
from dcopf_bases.learning import (
    DomainError,
    ScenarioResult,
    UncertaintyModel,
    build_trace,
    run_learning,
    sample_omega,
    solve_scenarios,
    top_k_ensemble,
)
from dcopf_bases.lp import LpStatus
from dcopf_bases.policy import select_prefix


@pytest.fixture(scope="module")
def case24(get_problem):
    prob = get_problem("case24_ieee_rts")
    model = UncertaintyModel.from_loads(prob.net.d, 0.05, seed=12)
    trace = run_learning(prob, model, 400, 200)
    return prob, model, trace


@settings(max_examples=80)
@given(cost=arrays(float, (6, 30), elements=st.floats(0, 10)),
       feasible=arrays(bool, (6, 30)),
       lp=arrays(float, 30, elements=st.floats(0, 10)))
def test_prefix_scores_monotone(cost, feasible, lp):
    lp = np.minimum(lp, cost.min(axis=0))  # the LP can never be beaten
    prev = (0.0, 0.0)
    for K in range(1, 7):
        chosen, best = select_prefix(cost, feasible, K)
        feas = chosen >= 0
        opt = feas & is_optimal_cost(best, lp)
        cur = (opt.mean(), feas.mean())
        assert cur[0] <= cur[1]
        assert cur[0] >= prev[0] and cur[1] >= prev[1]
        prev = cur


def test_single_basis_case_is_perfect(get_problem):
    prob = get_problem("case3_lmbd")
    model = UncertaintyModel.from_loads(prob.net.d, 0.03, seed=0)
    trace = run_learning(prob, model, 500, 100)
    rep = evaluate_out_of_sample([1], trace, prob, model, 500)
    assert rep.per_k[0].prop_optimal == 1.0 and rep.per_k[0].prop_feasible == 1.0


def test_report_on_learned_case(case24):
    prob, model, trace = case24
    rep = evaluate_out_of_sample([10, 1, 5], trace, prob, model, 600)
    assert [r.K for r in rep.per_k] == [1, 5, 10]
    for r in rep.per_k:
        assert r.prop_optimal <= r.prop_feasible
        assert r.K_used == min(r.K, trace.n_observed)
    assert [k for k, _ in rep.coverage_curve] == [100, 200, 500]
    assert rep.meta["constraints"] == 143
    assert rep.meta["test_stream"] != [trace.meta["seed"], trace.meta["stream"]]


def test_infeasible_scenarios_leave_denominator(get_problem):
    prob = get_problem("case5_pjm")
    model = UncertaintyModel.from_loads(prob.net.d, 0.4, seed=2)
    trace = run_learning(prob, model, 300, 50)
    rep = evaluate_out_of_sample([1, 100], trace, prob, model, 300)
    omegas = sample_omega(model.with_stream(1), 300)
    lp = solve_scenarios(prob, omegas)
    n_bad = sum(r.status is not LpStatus.OPTIMAL for r in lp)
    assert rep.infeasible_lp_count == n_bad > 0
    ens = top_k_ensemble(trace, prob, 100)
    recs = score_ensemble(ens, prob, omegas, lp, [1, 100])
    assert recs == list(rep.per_k)
    # recount the K=1 feasible share directly over the LP-feasible scenarios
    pol = ens.policies[0]
    from dcopf_bases.policy import check_feasible
    good = [w for w, r in zip(omegas, lp) if r.status is LpStatus.OPTIMAL]
    share = np.mean([check_feasible(prob, pol(w), w) for w in good])
    assert rep.per_k[0].prop_feasible == pytest.approx(share)


def test_full_ensemble_matches_coverage(case24):
    prob, model, trace = case24
    rep = evaluate_out_of_sample([1000], trace, prob, model, 1500)
    lp = solve_scenarios(prob, sample_omega(model.with_stream(1), 1500))
    cov = dict(coverage_curve(trace, [trace.M], lp))[trace.M]
    p = rep.per_k[0].prop_optimal
    n = 1500 - rep.infeasible_lp_count
    assert abs(p - cov) <= 2 * math.sqrt(max(p * (1 - p), 1e-4) / n) + 1e-12
    # catalog members are optimal wherever their basis is the LP basis, so coverage is a lower bound
    assert p >= cov - 1e-12


def test_coverage_curve_by_hand():
    trace = build_trace(["a", "a", "b", "", "c", "a"], 4, 2)
    hold = [ScenarioResult(LpStatus.OPTIMAL, 1.0, k) for k in ["a", "b", "c", "d"]]
    hold.append(ScenarioResult(LpStatus.INFEASIBLE, math.nan, ""))
    assert coverage_curve(trace, [0, 1, 3, 5, 6], hold) == [(0, 0.0), (1, 0.25), (3, 0.5), (5, 0.75), (6, 0.75)]
    assert coverage_curve(trace, [6], hold[:3]) == [(6, 1.0)]


def test_fresh_stream_required(case24):
    prob, model, trace = case24
    clash = build_trace([e.key for e in trace.catalog], 1, 1, {"seed": model.seed, "stream": 1})
    with pytest.raises(DomainError):
        evaluate_out_of_sample([1], clash, prob, model, 10)


def sample_report(case="caseX", per_k=None, **kw):
    per_k = per_k if per_k is not None else (KRecord(1, 1, 0.9321, 0.968), KRecord(5, 3, 1.0, 1.0))
    return EvaluationReport(case, 0.03, 5000, tuple(per_k), 2, ((100, 0.5), (200, 0.75)),
                            ((100, 3), (200, 4)), {"schema_version": 1, "constraints": 51, **kw})


def test_report_invariants_enforced():
    with pytest.raises(ValueError):
        sample_report(per_k=[KRecord(1, 1, 0.9, 0.8)])
    with pytest.raises(ValueError):
        sample_report(per_k=[KRecord(1, 1, 0.9, 0.9), KRecord(5, 5, 0.8, 0.9)])


def test_render_formats():
    rep = sample_report()
    text = render_tables(rep, "text")
    assert "0.932" in text and "0.968" in text and "1.000" in text
    assert render_tables(rep, "csv").splitlines()[0] == "K,K_used,prop_optimal,prop_feasible"
    empty = sample_report(per_k=[])
    assert render_tables(empty, "csv") == "K,K_used,prop_optimal,prop_feasible\n"
    assert render_tables(empty, "text").splitlines()[-1].split() == ["K", "optimal", "feasible"]
    assert EvaluationReport.from_json(render_tables(rep, "json")) == rep
    assert render_tables(rep, "csv") == render_tables(rep, "csv")


def test_merge_reports():
    reps = [sample_report(f"case{i}") for i in range(15)]
    text = merge_reports(reps, "csv")
    ensemble_block = text.split("# ensemble\n")[1]
    assert len(ensemble_block.strip().splitlines()) == 16
    assert len(merge_reports(reps[:1], "text").split("# ensemble\n")[1].strip().splitlines()) == 2
    json.loads(merge_reports(reps, "json"))
    with pytest.raises(SchemaMismatch):
        merge_reports([sample_report(), sample_report(schema_version=2)])
    with pytest.raises(SchemaMismatch):
        EvaluationReport.from_dict({**sample_report().to_dict(), "schema_version": 99})
