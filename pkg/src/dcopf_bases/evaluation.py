"""Out-of-sample assessment of learned ensembles and table rendering."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .learning import (
    DiscoveryTrace,
    ScenarioResult,
    TEST_STREAM,
    UncertaintyModel,
    DomainError,
    ranked_catalog,
    sample_omega,
    solve_scenarios,
    top_k_ensemble,
)
from .lp import LpStatus
from .network import OpfProblem
from .policy import EnsemblePolicy, member_outcomes, select_prefix

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1
COST_RTOL = 1e-6
CHECKPOINTS = (100, 200, 500, 1000, 2500, 5000)


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class KRecord:
    K: int
    K_used: int  # members actually available, <= K
    prop_optimal: float
    prop_feasible: float


@dataclass(frozen=True, eq=True)
class EvaluationReport:
    case_id: str
    sigma_scaling: float
    n_test: int
    per_k: tuple[KRecord, ...]
    infeasible_lp_count: int
    coverage_curve: tuple[tuple[int, float], ...] = ()
    unique_bases_curve: tuple[tuple[int, int], ...] = ()
    meta: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        for r in self.per_k:
            if r.prop_optimal > r.prop_feasible:
                raise ValueError(f"K={r.K}: optimal proportion exceeds feasible proportion")
        for a, b in zip(self.per_k, self.per_k[1:]):
            if b.K < a.K or b.prop_optimal < a.prop_optimal or b.prop_feasible < a.prop_feasible:
                raise ValueError("per-K records must be sorted with non-decreasing proportions")
        cov = [x for _, x in self.coverage_curve]
        if any(not 0.0 <= x <= 1.0 for x in cov) or any(a > b for a, b in zip(cov, cov[1:])):
            raise ValueError("coverage curve must be non-decreasing within [0, 1]")

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA,
            "case_id": self.case_id,
            "sigma_scaling": self.sigma_scaling,
            "n_test": self.n_test,
            "per_k": [asdict(r) for r in self.per_k],
            "infeasible_lp_count": self.infeasible_lp_count,
            "coverage_curve": [list(p) for p in self.coverage_curve],
            "unique_bases_curve": [list(p) for p in self.unique_bases_curve],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationReport":
        if doc.get("schema_version") != REPORT_SCHEMA:
            raise SchemaMismatch(f"report schema {doc.get('schema_version')!r}, expected {REPORT_SCHEMA}")
        return cls(
            case_id=doc["case_id"],
            sigma_scaling=doc["sigma_scaling"],
            n_test=doc["n_test"],
            per_k=tuple(KRecord(**r) for r in doc["per_k"]),
            infeasible_lp_count=doc["infeasible_lp_count"],
            coverage_curve=tuple((int(k), float(x)) for k, x in doc["coverage_curve"]),
            unique_bases_curve=tuple((int(k), int(x)) for k, x in doc["unique_bases_curve"]),
            meta=doc.get("meta", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls.from_dict(json.loads(text))


def is_optimal_cost(cost: np.ndarray, lp_cost: np.ndarray) -> np.ndarray:
    """Cost no worse than the LP optimum by more than COST_RTOL relative (absolute near zero).

    A feasible policy output cannot beat the LP optimum beyond the
    feasibility tolerance, so only the upper side is checked; this keeps
    the verdict monotone as members are added.
    """
    return cost - lp_cost <= COST_RTOL * np.maximum(np.abs(lp_cost), 1.0)


def score_ensemble(
    ens: EnsemblePolicy,
    prob: OpfProblem,
    omegas: np.ndarray,
    lp: list[ScenarioResult],
    ks,
) -> list[KRecord]:
    """Optimal and feasible proportions of each ensemble prefix over LP-feasible scenarios."""
    ok = np.array([r.status is LpStatus.OPTIMAL for r in lp], dtype=bool)
    lp_cost = np.array([r.objective for r in lp])[ok]
    if not ok.any() or len(ens) == 0:
        return [KRecord(int(K), min(int(K), len(ens)), 0.0, 0.0) for K in ks]
    cost, feasible = member_outcomes(ens, prob, omegas[ok].T)
    out = []
    for K in ks:
        used = min(int(K), len(ens))
        chosen, best = select_prefix(cost, feasible, used)
        feas = chosen >= 0
        opt = feas & is_optimal_cost(best, lp_cost)
        out.append(KRecord(int(K), used, float(np.mean(opt)), float(np.mean(feas))))
    return out


def coverage_curve(trace: DiscoveryTrace, checkpoints, holdout: list[ScenarioResult]) -> list[tuple[int, float]]:
    """Fraction of LP-feasible holdout scenarios whose basis was seen within the first ``k`` samples."""
    index = {e.key: e.basis_id for e in trace.catalog}
    # ids are issued in appearance order, so "seen by k" means id < distinct count at k
    hold = np.array([index.get(r.key, np.iinfo(np.int64).max) for r in holdout if r.status is LpStatus.OPTIMAL])
    out = []
    for k, seen in trace.unique_counts(checkpoints):
        out.append((k, float(np.mean(hold < seen)) if len(hold) else 0.0))
    return out


def evaluate_out_of_sample(
    ens_sizes,
    trace: DiscoveryTrace,
    prob: OpfProblem,
    model: UncertaintyModel,
    n_test: int,
    threads: int = 1,
    checkpoints=CHECKPOINTS,
    meta: dict | None = None,
) -> EvaluationReport:
    """Score the top-K ensembles for each K on ``n_test`` fresh scenarios."""
    ks = sorted({int(k) for k in ens_sizes})
    ens = top_k_ensemble(trace, prob, max(ks)) if ks else EnsemblePolicy(())
    return evaluate_ensemble(ens, prob, model, n_test, ks, trace, threads, checkpoints, meta)


def evaluate_ensemble(
    ens: EnsemblePolicy,
    prob: OpfProblem,
    model: UncertaintyModel,
    n_test: int,
    ens_sizes,
    trace: DiscoveryTrace | None = None,
    threads: int = 1,
    checkpoints=CHECKPOINTS,
    meta: dict | None = None,
) -> EvaluationReport:
    """Score prefixes of a given ensemble; curves are filled in when ``trace`` is given."""
    if n_test < 1:
        raise DomainError("n_test must be at least 1")
    test_model = model if model.stream == TEST_STREAM else model.with_stream(TEST_STREAM)
    if trace is not None and test_model.stream_id == (trace.meta.get("seed"), trace.meta.get("stream")):
        raise DomainError("test stream coincides with the training stream")
    ks = sorted({int(k) for k in ens_sizes})
    if ks and ks[-1] > len(ens):
        log.warning("K up to %d requested but the ensemble has %d members; larger K use all of them",
                    ks[-1], len(ens))

    omegas = sample_omega(test_model, n_test)
    lp = solve_scenarios(prob, omegas, threads)
    per_k = score_ensemble(ens, prob, omegas, lp, ks) if ks else []

    net = prob.net
    info = {
        "schema_version": REPORT_SCHEMA,
        "version": __version__,
        "case_digest": net.digest(),
        "buses": net.v,
        "lines": net.m,
        "generators": net.n,
        "constraints": net.constraint_count,
        "ensemble_size": len(ens),
        "train_seed": model.seed,
        "test_stream": list(test_model.stream_id),
    }
    cov, uniq = (), ()
    if trace is not None:
        checkpoints = [k for k in checkpoints if k <= trace.n_samples]
        cov = tuple(coverage_curve(trace, checkpoints, lp))
        uniq = tuple(trace.unique_counts(checkpoints))
        info["catalog_size"] = len(ranked_catalog(trace))
        info["training_infeasible"] = trace.n_infeasible
    info.update(meta or {})
    return EvaluationReport(
        case_id=net.case_id,
        sigma_scaling=float(model.sigma_scaling) if model.sigma_scaling is not None else float("nan"),
        n_test=n_test,
        per_k=tuple(per_k),
        infeasible_lp_count=sum(r.status is not LpStatus.OPTIMAL for r in lp),
        coverage_curve=cov,
        unique_bases_curve=uniq,
        meta=info,
    )


# --------------------------------------------------------------------------
# rendering


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _text(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(str(x).ljust(w) if j == 0 else str(x).rjust(w) for j, (x, w) in enumerate(zip(r, widths)))
             for r in rows]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def render_tables(report: EvaluationReport, fmt: str = "text") -> str:
    """Per-K proportions as csv, json or a fixed-width text table (3 decimals)."""
    if fmt == "json":
        return report.to_json() + "\n"
    if fmt == "csv":
        rows = [["K", "K_used", "prop_optimal", "prop_feasible"]]
        rows += [[r.K, r.K_used, repr(r.prop_optimal), repr(r.prop_feasible)] for r in report.per_k]
        return _csv(rows)
    if fmt == "text":
        rows = [["K", "optimal", "feasible"]]
        rows += [[r.K, f"{r.prop_optimal:.3f}", f"{r.prop_feasible:.3f}"] for r in report.per_k]
        return f"{report.case_id}  sigma={report.sigma_scaling:g}  n_test={report.n_test}\n" + _text(rows)
    raise ValueError(f"unknown format {fmt!r}")


def merge_reports(reports: list[EvaluationReport], fmt: str = "text") -> str:
    """One row per report for each of the four summary tables."""
    if not reports:
        raise ValueError("no reports to merge")
    versions = {r.meta.get("schema_version", REPORT_SCHEMA) for r in reports}
    if len(versions) != 1:
        raise SchemaMismatch(f"reports mix schema versions {sorted(versions)}")
    ks = sorted({rec.K for r in reports for rec in r.per_k})
    cps = sorted({k for r in reports for k, _ in r.coverage_curve})

    def lookup(pairs, k, f):
        d = dict(pairs)
        return f(d[k]) if k in d else ""

    tables = {
        "characteristics": [["case", "sigma", "buses", "lines", "generators", "constraints", "infeasible"]]
        + [[r.case_id, f"{r.sigma_scaling:g}", r.meta.get("buses", ""), r.meta.get("lines", ""),
            r.meta.get("generators", ""), r.meta.get("constraints", ""), r.infeasible_lp_count] for r in reports],
        "unique_bases": [["case", "sigma"] + [str(k) for k in cps]]
        + [[r.case_id, f"{r.sigma_scaling:g}"] + [lookup(r.unique_bases_curve, k, str) for k in cps] for r in reports],
        "coverage": [["case", "sigma"] + [str(k) for k in cps]]
        + [[r.case_id, f"{r.sigma_scaling:g}"] + [lookup(r.coverage_curve, k, "{:.3f}".format) for k in cps]
           for r in reports],
        "ensemble": [["case", "sigma"] + [f"opt_K{k}" for k in ks] + [f"feas_K{k}" for k in ks]]
        + [[r.case_id, f"{r.sigma_scaling:g}"]
           + [lookup([(x.K, x.prop_optimal) for x in r.per_k], k, "{:.3f}".format) for k in ks]
           + [lookup([(x.K, x.prop_feasible) for x in r.per_k], k, "{:.3f}".format) for k in ks]
           for r in reports],
    }
    if fmt == "json":
        return json.dumps({name: rows for name, rows in tables.items()}, indent=1) + "\n"
    render = _csv if fmt == "csv" else _text
    return "\n".join(f"# {name}\n{render(rows)}" for name, rows in tables.items())
