"""Sampling, basis discovery and the coverage test for the learned basis set.

A run draws ``M + W`` scenarios.  The first ``M`` define the observed set
and the empirical basis probabilities; the last ``W`` estimate the mass of
bases missing from it (the rate of discovery).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .lp import Basis, LpError, LpStatus, OpfSolver
from .network import OpfProblem, RowLabel
from .policy import EnsemblePolicy, make_policy

INFEASIBLE = -1
TRAIN_STREAM = 0
TEST_STREAM = 1


class DomainError(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class WindowTooSmall(ValueError):
    pass


# --------------------------------------------------------------------------
# uncertainty


@dataclass(frozen=True, eq=False)
class UncertaintyModel:
    """Independent zero-mean normal load deviations, one per bus.

    Draws come from a PCG64 stream keyed by ``(seed, stream)``; training and
    test sampling use different ``stream`` values so they never overlap.
    """

    sigma: np.ndarray
    seed: int = 0
    stream: int = TRAIN_STREAM
    sigma_scaling: float | None = None

    def __post_init__(self):
        if np.any(~np.isfinite(self.sigma)) or np.any(self.sigma < 0):
            raise DomainError("sigma must be finite and non-negative")

    @classmethod
    def from_loads(cls, d: np.ndarray, sigma_scaling: float, seed: int = 0, stream: int = TRAIN_STREAM):
        if not np.isfinite(sigma_scaling) or sigma_scaling < 0:
            raise DomainError(f"sigma scaling must be non-negative, got {sigma_scaling}")
        # a few buses carry negative net load; spread is taken on its magnitude
        return cls(sigma_scaling * np.abs(np.asarray(d, dtype=float)), seed, stream, float(sigma_scaling))

    @property
    def v(self) -> int:
        return len(self.sigma)

    @property
    def stream_id(self) -> tuple[int, int]:
        return (self.seed, self.stream)

    def with_stream(self, stream: int) -> "UncertaintyModel":
        return UncertaintyModel(self.sigma, self.seed, stream, self.sigma_scaling)

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def sample_omega(model: UncertaintyModel, k: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``k`` scenarios as rows of a (k, v) array.

    Without ``rng`` the model's own stream is started afresh, so repeated
    calls return the same draws.
    """
    if k < 0:
        raise DomainError("sample count must be non-negative")
    rng = model.rng() if rng is None else rng
    return rng.standard_normal((k, model.v)) * model.sigma


# --------------------------------------------------------------------------
# solving many scenarios


@dataclass(frozen=True)
class ScenarioResult:
    status: LpStatus
    objective: float
    key: str  # basis row labels joined by "|", empty when infeasible


def solve_scenarios(prob: OpfProblem, omegas: np.ndarray, threads: int = 1) -> list[ScenarioResult]:
    """LP-solve each row of ``omegas`` and report status, cost and canonical basis.

    With ``threads > 1`` the rows are split into contiguous chunks, each
    handled by its own solver.  The canonical basis does not depend on the
    warm start, so results are independent of the split.
    """
    S = len(omegas)
    if S == 0:
        return []
    threads = max(1, min(int(threads), S))
    bounds = np.linspace(0, S, threads + 1).astype(int)

    def work(lo: int, hi: int) -> list[ScenarioResult]:
        solver = OpfSolver(prob)
        out = []
        for i in range(lo, hi):
            try:
                sol = solver.solve(omegas[i])
            except LpError as exc:
                err = type(exc)(f"sample {i}: {exc}")
                err.sample_index = i
                raise err from exc
            if sol.status is LpStatus.OPTIMAL:
                out.append(ScenarioResult(sol.status, sol.objective, sol.basis.key()))
            else:
                out.append(ScenarioResult(sol.status, math.nan, ""))
        return out

    if threads == 1:
        return work(0, S)
    with ThreadPoolExecutor(threads) as pool:
        parts = pool.map(work, bounds[:-1], bounds[1:])
        return [r for part in parts for r in part]


# --------------------------------------------------------------------------
# discovery trace


@dataclass(frozen=True)
class CatalogEntry:
    basis_id: int
    key: str          # row labels joined by "|"
    count: int        # occurrences among the first M samples
    count_all: int    # occurrences among all M + W samples

    @property
    def labels(self) -> list[RowLabel]:
        return [RowLabel.parse(s) for s in self.key.split("|")] if self.key else []


@dataclass(frozen=True, eq=False)
class DiscoveryTrace:
    """Per-sample basis ids plus the catalog of distinct bases.

    Basis ids are assigned in order of first appearance, and ``is_new`` marks
    that first appearance.  ``INFEASIBLE`` (-1) marks LP-infeasible samples.
    """

    basis_ids: np.ndarray
    is_new: np.ndarray
    catalog: tuple[CatalogEntry, ...]
    M: int
    W: int
    meta: dict = field(default_factory=dict)

    @property
    def records(self) -> list[tuple[int, int, bool]]:
        return [(i, int(b), bool(n)) for i, (b, n) in enumerate(zip(self.basis_ids, self.is_new))]

    @property
    def n_samples(self) -> int:
        return len(self.basis_ids)

    @property
    def n_infeasible(self) -> int:
        return int(np.sum(self.basis_ids == INFEASIBLE))

    @property
    def n_observed(self) -> int:
        """Size of the observed set after the first M samples."""
        return sum(1 for e in self.catalog if e.count > 0)

    def pi_hat(self) -> np.ndarray:
        return np.array([e.count for e in self.catalog], dtype=float) / self.M

    def discovery_flags(self) -> np.ndarray:
        """X_i for the window: the sample's basis lies outside the first-M observed set."""
        window = self.basis_ids[self.M:self.M + self.W]
        # ids are issued in appearance order, so the first-M set is {0, .., n_observed-1}
        return window >= self.n_observed

    def unique_counts(self, checkpoints) -> list[tuple[int, int]]:
        """Distinct bases seen within the first ``k`` samples, for each checkpoint ``k``."""
        seen = np.maximum.accumulate(np.concatenate([[INFEASIBLE], self.basis_ids])) + 1
        return [(int(k), int(seen[min(int(k), self.n_samples)])) for k in checkpoints]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(trace_to_csv(self).encode())
        h.update(catalog_to_csv(self).encode())
        return h.hexdigest()[:16]


def window_size(epsilon: float, delta: float) -> int:
    """Smallest integer strictly greater than (8/epsilon) ln(1/delta)."""
    for name, x in (("epsilon", epsilon), ("delta", delta)):
        if not (0.0 < x < 1.0):
            raise DomainError(f"{name} must lie in (0, 1), got {x}")
    return math.floor(8.0 / epsilon * math.log(1.0 / delta)) + 1


def build_trace(keys: list[str], M: int, W: int, meta: dict | None = None) -> DiscoveryTrace:
    """Assemble a trace from per-sample basis keys ("" for infeasible)."""
    ids = np.empty(len(keys), dtype=int)
    is_new = np.zeros(len(keys), dtype=bool)
    index: dict[str, int] = {}
    order: list[str] = []
    for i, key in enumerate(keys):
        if not key:
            ids[i] = INFEASIBLE
            continue
        bid = index.get(key)
        if bid is None:
            bid = index[key] = len(order)
            order.append(key)
            is_new[i] = True
        ids[i] = bid
    count = np.bincount(ids[:M][ids[:M] >= 0], minlength=len(order))
    count_all = np.bincount(ids[ids >= 0], minlength=len(order))
    catalog = tuple(CatalogEntry(b, k, int(count[b]), int(count_all[b])) for b, k in enumerate(order))
    return DiscoveryTrace(ids, is_new, catalog, M, W, dict(meta or {}))


def run_learning(prob: OpfProblem, model: UncertaintyModel, M: int, W: int, threads: int = 1) -> DiscoveryTrace:
    """Draw ``M + W`` scenarios, solve each, and record the canonical optimal bases."""
    if M < 1 or W < 1:
        raise DomainError("M and W must both be at least 1")
    omegas = sample_omega(model, M + W)
    results = solve_scenarios(prob, omegas, threads)
    meta = {
        "case_id": prob.net.case_id,
        "case_digest": prob.net.digest(),
        "sigma_scaling": model.sigma_scaling,
        "seed": model.seed,
        "stream": model.stream,
    }
    return build_trace([r.key for r in results], M, W, meta)


def rate_of_discovery(trace: DiscoveryTrace) -> float:
    """Fraction of the W window samples whose basis was not observed in the first M."""
    if trace.W < 1 or trace.n_samples < trace.M + trace.W:
        raise InsufficientSamples(f"need {trace.M + trace.W} samples, trace has {trace.n_samples}")
    return float(np.mean(trace.discovery_flags()))


class Outcome(str, Enum):
    SUCCESS = "Success"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class CoverageVerdict:
    epsilon: float
    delta: float
    W: int
    R_W: float
    outcome: Outcome


def coverage_test(trace: DiscoveryTrace, epsilon: float, delta: float) -> CoverageVerdict:
    """Success iff the rate of discovery is strictly below epsilon/2."""
    need = window_size(epsilon, delta)
    if trace.W < need:
        raise WindowTooSmall(f"window of {trace.W} samples is below the required {need}")
    r = rate_of_discovery(trace)
    outcome = Outcome.SUCCESS if r < epsilon / 2 else Outcome.INCONCLUSIVE
    return CoverageVerdict(epsilon, delta, trace.W, r, outcome)


def ranked_catalog(trace: DiscoveryTrace) -> list[CatalogEntry]:
    """Bases seen in the first M samples, most frequent first; ties by first appearance."""
    seen = [e for e in trace.catalog if e.count > 0]
    return sorted(seen, key=lambda e: (-e.count, e.basis_id))


def top_k_ensemble(trace: DiscoveryTrace, prob: OpfProblem, K: int) -> EnsemblePolicy:
    if K < 1:
        raise DomainError("K must be at least 1")
    ranked = ranked_catalog(trace)
    if not ranked:
        raise InsufficientSamples("no basis was observed in the training samples")
    index = {lab: i for i, lab in enumerate(prob.row_labels)}
    members = []
    for e in ranked[:K]:
        basis = Basis.from_rows(prob, [index[lab] for lab in e.labels])
        members.append((make_policy(prob, basis), e.count / trace.M))
    meta = {k: trace.meta[k] for k in ("case_id", "case_digest", "sigma_scaling") if k in trace.meta}
    return EnsemblePolicy(tuple(members), meta=meta)


def validate_theorem2_montecarlo(
    num_categories: int,
    tail_mass: float,
    epsilon: float,
    delta: float,
    trials: int,
    seed: int = 0,
    num_unobserved: int | None = None,
) -> float:
    """Empirical frequency of ``R_W < epsilon/2`` when the unobserved mass is ``tail_mass``.

    Categories ``0 .. num_unobserved-1`` form the unobserved set and share
    ``tail_mass`` equally; the rest share the remainder.  Each trial draws a
    window of ``window_size(epsilon, delta)`` samples and computes the rate
    of discovery against that fixed set.
    """
    if not (0.0 < tail_mass <= 1.0):
        raise DomainError("tail_mass must lie in (0, 1]")
    if epsilon >= tail_mass:
        raise DomainError("tail_mass must exceed epsilon")
    if trials < 1 or num_categories < 1:
        raise DomainError("need at least one trial and one category")
    W = window_size(epsilon, delta)
    if tail_mass == 1.0:
        u = num_categories
    else:
        u = max(1, num_categories // 2) if num_unobserved is None else num_unobserved
        if not 1 <= u < num_categories:
            raise DomainError("need at least one observed and one unobserved category")
    probs = np.empty(num_categories)
    probs[:u] = tail_mass / u
    if u < num_categories:
        probs[u:] = (1.0 - tail_mass) / (num_categories - u)
    rng = np.random.Generator(np.random.PCG64(seed))
    hits = 0
    for lo in range(0, trials, 256):
        draws = rng.choice(num_categories, size=(min(256, trials - lo), W), p=probs)
        rates = np.mean(draws < u, axis=1)
        hits += int(np.sum(rates < epsilon / 2))
    return hits / trials


# --------------------------------------------------------------------------
# CSV export


def trace_to_csv(trace: DiscoveryTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_index", "basis_id", "is_new"])
    for i, b, new in trace.records:
        w.writerow([i, "INFEASIBLE" if b == INFEASIBLE else b, int(new)])
    return buf.getvalue()


def catalog_to_csv(trace: DiscoveryTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["basis_id", "count", "pi_hat", "row_labels", "count_all"])
    for e in trace.catalog:
        w.writerow([e.basis_id, e.count, repr(e.count / trace.M), e.key, e.count_all])
    return buf.getvalue()


def trace_from_csv(trace_text: str, catalog_text: str, M: int, W: int, meta: dict | None = None) -> DiscoveryTrace:
    keys_by_id = {int(r["basis_id"]): r["row_labels"] for r in csv.DictReader(io.StringIO(catalog_text))}
    keys = []
    for r in csv.DictReader(io.StringIO(trace_text)):
        b = r["basis_id"]
        keys.append("" if b == "INFEASIBLE" else keys_by_id[int(b)])
    return build_trace(keys, M, W, meta)


def trace_meta_json(trace: DiscoveryTrace) -> str:
    return json.dumps({"M": trace.M, "W": trace.W, "meta": trace.meta}, indent=1, sort_keys=True)
