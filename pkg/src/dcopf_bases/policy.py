"""Affine basis policies and the ensemble policy built from them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lp import TOL_EQ, TOL_FEAS, Basis, SingularBasis
from .network import OpfProblem, RowKind, RowLabel

ENSEMBLE_SCHEMA = 1
CHUNK = 512


class NoFeasibleBasis(RuntimeError):
    pass


class EnsembleCaseMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BasisPolicy:
    """``rho(omega) = offset + gain @ omega``, the vertex of ``basis`` as a function of omega."""

    basis: Basis
    gain: np.ndarray
    offset: np.ndarray

    def __call__(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        out = self.gain @ omega
        return out + (self.offset if omega.ndim == 1 else self.offset[:, None])


@dataclass(frozen=True)
class GeneratorClassification:
    at_upper: frozenset[int]
    at_lower: frozenset[int]
    varying: frozenset[int]


def make_policy(prob: OpfProblem, basis: Basis) -> BasisPolicy:
    rows = list(basis.rows)
    if not np.all(np.isfinite(basis.B_inv)):
        raise SingularBasis(f"basis {basis.rows} has no finite inverse")
    rhs = np.append(prob.b[rows], prob.balance_rhs_base)
    sens = np.vstack([prob.C[rows] if rows else np.zeros((0, prob.v)), -np.ones((1, prob.v))])
    return BasisPolicy(basis, basis.B_inv @ sens, basis.B_inv @ rhs)


def classify_generators(basis: Basis) -> GeneratorClassification:
    """Split generators by whether their upper bound, lower bound, or neither is in the basis."""
    upper = {lab.element for lab in basis.labels if lab.kind is RowKind.GEN_UB}
    lower = {lab.element for lab in basis.labels if lab.kind is RowKind.GEN_LB}
    # a generator with pmin == pmax can carry both rows; count it once, at its upper bound
    lower -= upper
    varying = set(range(basis.n)) - upper - lower
    return GeneratorClassification(frozenset(upper), frozenset(lower), frozenset(varying))


def check_feasible(prob: OpfProblem, p: np.ndarray, omega: np.ndarray, tol: float = TOL_FEAS) -> bool:
    return bool(feasible_mask(prob, p, omega, tol))


def feasible_mask(prob: OpfProblem, P: np.ndarray, Omega: np.ndarray, tol: float = TOL_FEAS) -> np.ndarray:
    """Feasibility of set-points ``P`` (n or n x S) at scenarios ``Omega`` (v or v x S)."""
    P = np.asarray(P, dtype=float)
    Omega = np.asarray(Omega, dtype=float)
    slack = prob.rhs(Omega) - prob.A @ P
    balance = np.sum(P, axis=0) - prob.balance_rhs(Omega)
    ok_rows = np.all(slack >= -tol, axis=0)
    return ok_rows & (np.abs(balance) <= max(TOL_EQ, 1e-12 * abs(prob.balance_rhs_base)))


@dataclass(frozen=True, eq=False)
class EnsemblePolicy:
    """Basis policies ordered by non-increasing empirical probability."""

    members: tuple[tuple[BasisPolicy, float], ...]
    feas_tol: float = TOL_FEAS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        probs = [pr for _, pr in self.members]
        if any(not 0.0 <= pr <= 1.0 for pr in probs):
            raise ValueError("member probabilities must lie in [0, 1]")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError("members must be ordered by non-increasing probability")
        keys = [pol.basis.rows for pol, _ in self.members]
        if len(set(keys)) != len(keys):
            raise ValueError("ensemble members must be distinct bases")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def policies(self) -> list[BasisPolicy]:
        return [pol for pol, _ in self.members]

    def truncate(self, K: int) -> "EnsemblePolicy":
        return EnsemblePolicy(self.members[:K], self.feas_tol, dict(self.meta))


def ensemble_eval(ens: EnsemblePolicy, prob: OpfProblem, omega: np.ndarray) -> tuple[np.ndarray, int]:
    """Cheapest feasible member output at ``omega`` and the member's index.

    Cost ties go to the lowest index.  Raises :class:`NoFeasibleBasis` when
    no member is feasible.
    """
    if not ens.members:
        raise ValueError("empty ensemble")
    best, best_cost, best_idx = None, np.inf, -1
    for i, pol in enumerate(ens.policies):
        p = pol(omega)
        if not check_feasible(prob, p, omega, ens.feas_tol):
            continue
        cost = float(prob.c @ p)
        if cost < best_cost:
            best, best_cost, best_idx = p, cost, i
    if best is None:
        raise NoFeasibleBasis("no ensemble member is feasible at this scenario")
    return best, best_idx


def member_outcomes(ens: EnsemblePolicy, prob: OpfProblem, Omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-member cost and feasibility over many scenarios.

    ``Omega`` is (v, S); returns ``(cost, feasible)``, both (K, S).
    """
    Omega = np.asarray(Omega, dtype=float)
    K, S = len(ens), Omega.shape[1]
    cost = np.empty((K, S))
    feasible = np.empty((K, S), dtype=bool)
    for lo in range(0, S, CHUNK):
        W = Omega[:, lo:lo + CHUNK]
        rhs = prob.rhs(W)
        total = prob.balance_rhs(W)
        for i, pol in enumerate(ens.policies):
            P = pol(W)
            slack = rhs - prob.A @ P
            feasible[i, lo:lo + CHUNK] = np.all(slack >= -ens.feas_tol, axis=0) & (
                np.abs(P.sum(axis=0) - total) <= max(TOL_EQ, 1e-12 * abs(prob.balance_rhs_base))
            )
            cost[i, lo:lo + CHUNK] = prob.c @ P
    return cost, feasible


def select_prefix(cost: np.ndarray, feasible: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble choice using only the first ``K`` members: ``(chosen_index, chosen_cost)``.

    ``chosen_index`` is -1 where no member is feasible.
    """
    masked = np.where(feasible[:K], cost[:K], np.inf)
    chosen = np.argmin(masked, axis=0)  # first minimum, i.e. lowest index on ties
    best = masked[chosen, np.arange(masked.shape[1])]
    chosen = np.where(np.isfinite(best), chosen, -1)
    return chosen, best


# --------------------------------------------------------------------------
# serialization


def ensemble_to_json(ens: EnsemblePolicy) -> str:
    doc = {
        "schema_version": ENSEMBLE_SCHEMA,
        "meta": ens.meta,
        "feas_tol": ens.feas_tol,
        "members": [
            {
                "rows": [str(lab) for lab in pol.basis.labels],
                "probability": pr,
                "gain": pol.gain.ravel().tolist(),
                "gain_shape": list(pol.gain.shape),
                "offset": pol.offset.tolist(),
            }
            for pol, pr in ens.members
        ],
    }
    # compact: gain matrices dominate the size for the larger networks
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def ensemble_from_json(text: str, prob: OpfProblem, expect: dict | None = None) -> EnsemblePolicy:
    """Rebuild an ensemble for ``prob``.

    ``expect`` maps meta keys (e.g. ``case_digest``, ``sigma_scaling``) to
    required values; a difference raises :class:`EnsembleCaseMismatch`.
    """
    doc = json.loads(text)
    if doc.get("schema_version") != ENSEMBLE_SCHEMA:
        raise ValueError(f"unsupported ensemble schema {doc.get('schema_version')!r}")
    meta = doc.get("meta", {})
    for key, want in (expect or {}).items():
        if meta.get(key) != want:
            raise EnsembleCaseMismatch(f"ensemble {key}={meta.get(key)!r}, expected {want!r}")
    index = {lab: i for i, lab in enumerate(prob.row_labels)}
    members = []
    for m in doc["members"]:
        try:
            rows = [index[RowLabel.parse(s)] for s in m["rows"]]
        except KeyError as exc:
            raise EnsembleCaseMismatch(f"row {exc} does not exist in {prob.net.case_id}") from exc
        basis = Basis.from_rows(prob, rows)
        gain = np.asarray(m["gain"], dtype=float).reshape(m["gain_shape"])
        pol = BasisPolicy(basis, gain, np.asarray(m["offset"], dtype=float))
        members.append((pol, float(m["probability"])))
    return EnsemblePolicy(tuple(members), float(doc["feas_tol"]), meta)
