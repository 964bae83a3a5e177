"""Vertex-returning LP solver for the DC-OPF and canonical basis extraction.

The solver is a dense primal simplex written in the space of generator
set-points: a vertex is described by a working set of ``n - 1`` inequality
rows of ``A`` plus the balance row, i.e. exactly the basis matrix
``B = [A_W; e]``.  Each pivot swaps one working row and updates ``B^-1`` by a
rank-one correction.  Phase I minimises the largest constraint violation;
Phase II minimises cost.  Pricing is Dantzig's rule, falling back to Bland's
rule during runs of degenerate pivots so that cycling cannot occur.

The cost vector is perturbed by a tiny, fixed, generator-specific amount
before pivoting.  Ties between optimal vertices (equal-cost generators) are
thereby broken the same way for every ``omega`` and every warm start, so
each scenario maps to one vertex and, through :func:`extract_basis`, to one
canonical basis.  Reported objectives always use the unperturbed cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .network import OpfProblem, RowKind, RowLabel

TOL_FEAS = 1e-7
TOL_EQ = 1e-8
TOL_ACTIVE = 1e-7
TOL_PIVOT = 1e-10
TOL_RANK = 1e-9
COST_TIEBREAK = 1e-7
REFACTOR_EVERY = 50
DEGENERATE_RUN = 8
_GOLDEN = 0.6180339887498949


class LpError(RuntimeError):
    pass


class NumericalFailure(LpError):
    pass


class RankDeficient(LpError):
    pass


class SingularBasis(LpError):
    pass


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True, eq=False)
class Basis:
    """``n - 1`` linearly independent rows of ``A`` plus the balance row."""

    rows: tuple[int, ...]
    B: np.ndarray
    B_inv: np.ndarray
    labels: tuple[RowLabel, ...] = ()

    @classmethod
    def from_rows(cls, prob: OpfProblem, rows) -> "Basis":
        rows = tuple(sorted(int(r) for r in rows))
        if len(rows) != prob.n - 1 or len(set(rows)) != len(rows):
            raise SingularBasis(f"a basis needs {prob.n - 1} distinct rows, got {len(rows)}")
        B = np.vstack([prob.A[list(rows)], np.ones((1, prob.n))])
        try:
            B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SingularBasis(f"basis {rows} is singular") from exc
        if not np.allclose(B_inv @ B, np.eye(prob.n), atol=1e-8, rtol=0):
            raise SingularBasis(f"basis {rows} is numerically singular")
        return cls(rows, B, B_inv, tuple(prob.row_labels[r] for r in rows))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def key(self) -> str:
        """Row labels joined by ``|``; stable across runs and file formats."""
        return "|".join(str(lab) for lab in self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Basis) and self.rows == other.rows

    def __hash__(self) -> int:
        return hash(self.rows)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    p: np.ndarray | None = None
    objective: float | None = None
    active_rows: tuple[int, ...] = ()
    basis: Basis | None = None
    iterations: int = 0


# --------------------------------------------------------------------------
# simplex engine on  min cost.x  s.t.  G x <= h,  E x = f


def _engine(cost, G, h, E, f, work, max_iter, tol_dual):
    """Run primal simplex from the vertex defined by ``work``.

    Returns ``(status, x, work, iterations)``; ``work`` is a list of row
    indices into ``G`` of length ``N - k``.
    """
    N = G.shape[1]
    k = E.shape[0]
    work = list(work)
    in_work = np.zeros(G.shape[0], dtype=bool)
    in_work[work] = True

    def factor():
        B = np.vstack([G[work], E]) if work else E.copy()
        Binv = np.linalg.inv(B)
        return Binv, Binv @ np.concatenate([h[work], f])

    try:
        Binv, x = factor()
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("starting working set is singular") from exc

    degenerate = 0
    for it in range(max_iter):
        if it and it % REFACTOR_EVERY == 0:
            Binv, x = factor()
        lam = -(cost @ Binv)[: N - k]
        negative = np.flatnonzero(lam < -tol_dual)
        if negative.size == 0:
            return LpStatus.OPTIMAL, x, work, it
        bland = degenerate >= DEGENERATE_RUN
        if bland:
            pos = min(negative, key=lambda q: work[q])
        else:
            pos = negative[np.argmin(lam[negative])]
        d = -Binv[:, pos]

        Gd = G @ d
        cand = np.flatnonzero((Gd > TOL_PIVOT) & ~in_work)
        if cand.size == 0:
            return LpStatus.UNBOUNDED, x, work, it
        slack = np.maximum(h[cand] - G[cand] @ x, 0.0)
        ratio = slack / Gd[cand]
        step = ratio.min()
        ties = cand[ratio <= step + 1e-12 * (1.0 + step)]
        if bland:
            enter = int(ties.min())
        else:
            enter = int(ties[np.argmax(Gd[ties])])
        degenerate = degenerate + 1 if step <= 1e-12 else 0

        leave = work[pos]
        x = x + step * d
        u = G[enter] - G[leave]
        col = Binv[:, pos].copy()
        Binv -= np.outer(col, u @ Binv) / (1.0 + u @ col)
        work[pos] = enter
        in_work[leave] = False
        in_work[enter] = True
    raise NumericalFailure(f"simplex did not converge in {max_iter} iterations")


def _greedy_independent(rows: np.ndarray, seed: np.ndarray, candidates, need: int, tol=TOL_RANK):
    """Pick the first ``need`` candidates whose rows extend ``seed`` to full rank."""
    Q0, _ = np.linalg.qr(seed.T)
    k = Q0.shape[1]
    Q = np.zeros((k + need, rows.shape[1]))
    Q[:k] = Q0.T
    filled = k
    chosen = []
    for i in candidates:
        if len(chosen) == need:
            break
        a = rows[i]
        norm = np.linalg.norm(a)
        if norm == 0:
            continue
        Qc = Q[:filled]
        r = a - Qc.T @ (Qc @ a)
        r -= Qc.T @ (Qc @ r)
        rn = np.linalg.norm(r)
        if rn > tol * norm:
            Q[filled] = r / rn
            filled += 1
            chosen.append(int(i))
    return chosen


def _phase_one(G, h, E, f, work, max_iter):
    """Find a feasible vertex, starting from the (possibly infeasible) vertex ``work``.

    Returns ``(work, iterations)``, or ``(None, iterations)`` if infeasible.
    """
    N = G.shape[1]
    k = E.shape[0]
    B = np.vstack([G[work], E]) if work else E
    x = np.linalg.solve(B, np.concatenate([h[work], f]))
    viol = G @ x - h
    if viol.max(initial=-np.inf) <= TOL_FEAS:
        return list(work), 0

    R = G.shape[0]
    relaxed = viol > TOL_FEAS
    G1 = np.zeros((R + 1, N + 1))
    G1[:R, :N] = G
    G1[:R, N] = -relaxed.astype(float)
    G1[R, N] = -1.0  # t >= 0
    h1 = np.append(h, 0.0)
    E1 = np.hstack([E, np.zeros((k, 1))])
    cost1 = np.zeros(N + 1)
    cost1[N] = 1.0
    work1 = list(work) + [int(np.argmax(viol))]

    status, x1, work1, iters = _engine(cost1, G1, h1, E1, f, work1, max_iter, 1e-12)
    if status is not LpStatus.OPTIMAL:
        raise NumericalFailure(f"phase I ended with status {status}")
    if x1[N] > TOL_FEAS:
        return None, iters
    if R in work1:
        return [r for r in work1 if r != R], iters
    # t reached zero without its bound entering the working set: keep N-k of
    # the working rows that stay independent in x-space
    chosen = _greedy_independent(G, E, sorted(work1), N - k)
    if len(chosen) < N - k:
        raise NumericalFailure("phase I vertex lost rank")
    return chosen, iters


def extract_basis(prob: OpfProblem, p: np.ndarray, omega: np.ndarray) -> Basis:
    """Canonical basis of the vertex ``p``.

    Among the rows active at ``p``, take the lowest-indexed ``n - 1`` that
    keep ``[rows; e]`` full rank.
    """
    slack = prob.rhs(omega) - prob.A @ p
    return basis_from_active(prob, np.flatnonzero(np.abs(slack) <= TOL_ACTIVE))


def basis_from_active(prob: OpfProblem, active) -> Basis:
    chosen = _greedy_independent(prob.A, np.ones((1, prob.n)), active, prob.n - 1)
    if len(chosen) < prob.n - 1:
        raise RankDeficient(
            f"only {len(chosen)} independent active rows at p; a vertex needs {prob.n - 1}"
        )
    return Basis.from_rows(prob, chosen)


def tiebreak_cost(c: np.ndarray) -> np.ndarray:
    """Cost with a fixed, distinct per-generator perturbation of relative size ~1e-7."""
    scale = float(np.max(np.abs(c))) if c.size and np.any(c) else 1.0
    w = 1.0 + np.mod(_GOLDEN * np.arange(1, c.size + 1), 1.0)
    return c + COST_TIEBREAK * scale * w


@dataclass
class _Cached:
    work: tuple[int, ...]
    Binv: np.ndarray
    hits: int = 0


class OpfSolver:
    """Solves one :class:`OpfProblem` for many ``omega``.

    Optimal working sets found so far are cached.  Because the (perturbed)
    cost does not depend on ``omega``, every cached working set is dual
    feasible for every scenario, so if its basic point is primal feasible it
    is optimal and no pivoting is needed.  Instances are not thread-safe; use
    one per worker.
    """

    def __init__(self, prob: OpfProblem, cache_size: int = 32, max_iter: int | None = None):
        self.prob = prob
        self.cost = tiebreak_cost(prob.c)
        self.tol_dual = 1e-4 * COST_TIEBREAK * (float(np.max(np.abs(prob.c))) if np.any(prob.c) else 1.0)
        self.cache_size = cache_size
        self.max_iter = max_iter or 50 * (prob.n_rows + prob.n)
        self._cache: dict[tuple[int, ...], _Cached] = {}
        self._E = np.ones((1, prob.n))
        self._canonical: dict[tuple[int, ...], Basis] = {}

    def cold_start(self) -> list[int]:
        n = self.prob.n
        # generators 0..n-2 at their lower bounds; the last one balances
        return [i for i, lab in enumerate(self.prob.row_labels)
                if lab.kind is RowKind.GEN_LB and lab.element < n - 1]

    def _remember(self, work, Binv=None):
        key = tuple(work)
        if self.cache_size <= 0:
            return
        if key in self._cache:
            self._cache[key].hits += 1
            return
        if Binv is None:
            Binv = np.linalg.inv(np.vstack([self.prob.A[list(work)], self._E]))
        if len(self._cache) >= self.cache_size:
            victim = min(self._cache.values(), key=lambda e: e.hits)
            del self._cache[victim.work]
        self._cache[key] = _Cached(key, Binv, 1)

    def _try_cache(self, h, D):
        A = self.prob.A
        for entry in sorted(self._cache.values(), key=lambda e: -e.hits):
            x = entry.Binv @ np.append(h[list(entry.work)], D)
            if np.min(h - A @ x, initial=np.inf) >= -TOL_FEAS:
                entry.hits += 1
                return x, entry
        return None, None

    def solve(self, omega: np.ndarray) -> LpSolution:
        prob = self.prob
        omega = np.asarray(omega, dtype=float)
        h = prob.rhs(omega)
        D = np.atleast_1d(prob.balance_rhs(omega)).astype(float)
        iters = 0

        x, entry = self._try_cache(h, D)
        if x is None:
            start = max(self._cache.values(), key=lambda e: e.hits).work if self._cache else self.cold_start()
            work, iters = _phase_one(prob.A, h, self._E, D, list(start), self.max_iter)
            if work is None:
                return LpSolution(LpStatus.INFEASIBLE, iterations=iters)
            status, x, work, it2 = _engine(self.cost, prob.A, h, self._E, D, work, self.max_iter, self.tol_dual)
            iters += it2
            if status is LpStatus.UNBOUNDED:
                return LpSolution(LpStatus.UNBOUNDED, iterations=iters)
            self._remember(sorted(work))

        slack = h - prob.A @ x
        active = tuple(int(i) for i in np.flatnonzero(np.abs(slack) <= TOL_ACTIVE))
        basis = self._canonical.get(active)
        if basis is None:
            basis = basis_from_active(prob, active)
            if len(self._canonical) < 4096:
                self._canonical[active] = basis
        return LpSolution(
            LpStatus.OPTIMAL,
            p=x,
            objective=float(prob.c @ x),
            active_rows=active,
            basis=basis,
            iterations=iters,
        )


def solve_opf(prob: OpfProblem, omega: np.ndarray) -> LpSolution:
    """Solve the OPF at ``omega`` from a cold start."""
    return OpfSolver(prob, cache_size=0).solve(omega)
