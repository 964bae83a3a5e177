"""DC network data, PTDF sensitivities and the parametric constraint system.

The OPF for a load deviation ``omega`` is written as

    min c.p   s.t.   A p <= b + C omega,   e.p = e.(d - mu) - e.omega

with ``A = [I; -I; MH; -MH]`` and ``C = [0; 0; -M; M]``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
from typing import NamedTuple

import numpy as np

PTDF_ZERO = 1e-12


class SingularReducedLaplacian(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class PowerNetwork:
    """Per-unit DC network.  Arrays are treated as read-only."""

    case_id: str
    base_mva: float
    d: np.ndarray
    mu: np.ndarray
    pmin: np.ndarray
    pmax: np.ndarray
    fmin: np.ndarray
    fmax: np.ndarray
    c: np.ndarray
    H: np.ndarray
    susceptances: np.ndarray
    incidence: np.ndarray
    ref_bus: int
    gen_bus: np.ndarray

    def __post_init__(self):
        if np.any(self.pmin > self.pmax):
            raise ValueError("pmin > pmax for some generator")
        if np.any(self.fmin > self.fmax):
            raise ValueError("fmin > fmax for some branch")
        if self.H.shape[1] and not np.all(self.H.sum(axis=0) == 1):
            raise ValueError("every generator must sit at exactly one bus")

    @property
    def v(self) -> int:
        return len(self.d)

    @property
    def m(self) -> int:
        return len(self.susceptances)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def constraint_count(self) -> int:
        """2(n+m)+1: both generator bounds, both flow limits, and power balance."""
        return 2 * (self.n + self.m) + 1

    def to_dict(self) -> dict:
        """Normalized, JSON-ready form (branch endpoints instead of the dense incidence)."""
        f = np.argmax(self.incidence > 0, axis=1)
        t = np.argmax(self.incidence < 0, axis=1)
        return {
            "case_id": self.case_id,
            "base_mva": self.base_mva,
            "ref_bus": self.ref_bus,
            "d": self.d.tolist(),
            "mu": self.mu.tolist(),
            "pmin": self.pmin.tolist(),
            "pmax": self.pmax.tolist(),
            "fmin": [float(x) for x in self.fmin],
            "fmax": [float(x) for x in self.fmax],
            "c": self.c.tolist(),
            "gen_bus": self.gen_bus.tolist(),
            "branch_from": f.tolist(),
            "branch_to": t.tolist(),
            "susceptances": self.susceptances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PowerNetwork":
        v = len(data["d"])
        gen_bus = np.asarray(data["gen_bus"], dtype=int)
        n = len(gen_bus)
        H = np.zeros((v, n))
        H[gen_bus, np.arange(n)] = 1.0
        f = np.asarray(data["branch_from"], dtype=int)
        t = np.asarray(data["branch_to"], dtype=int)
        m = len(f)
        inc = np.zeros((m, v))
        inc[np.arange(m), f] = 1.0
        inc[np.arange(m), t] = -1.0
        arr = lambda k: np.asarray(data[k], dtype=float)  # noqa: E731
        return cls(
            case_id=data["case_id"],
            base_mva=float(data["base_mva"]),
            d=arr("d"),
            mu=arr("mu"),
            pmin=arr("pmin"),
            pmax=arr("pmax"),
            fmin=arr("fmin"),
            fmax=arr("fmax"),
            c=arr("c"),
            H=H,
            susceptances=arr("susceptances"),
            incidence=inc,
            ref_bus=int(data["ref_bus"]),
            gen_bus=gen_bus,
        )

    def digest(self) -> str:
        """Short content hash used to tie learned artifacts to a network."""
        h = hashlib.sha256()
        h.update(self.case_id.encode())
        for a in (self.d, self.mu, self.pmin, self.pmax, self.fmin, self.fmax, self.c,
                  self.susceptances, self.incidence, self.gen_bus):
            h.update(np.ascontiguousarray(a, dtype=float).tobytes())
        return h.hexdigest()[:16]


def build_ptdf(net: PowerNetwork, ref_bus: int | None = None) -> np.ndarray:
    """PTDF matrix ``M`` (m x v) with ``ref_bus`` as the angle reference.

    One dense factorization of the reduced bus susceptance matrix, back-solved
    for every branch.  Entries below 1e-12 in magnitude are zeroed.
    """
    ref = net.ref_bus if ref_bus is None else ref_bus
    Bf = net.susceptances[:, None] * net.incidence          # m x v
    Bbus = net.incidence.T @ Bf                              # v x v Laplacian
    keep = np.arange(net.v) != ref
    M = np.zeros((net.m, net.v))
    if net.v == 1:
        return M
    try:
        # Bred is symmetric, so M_red = Bf_red Bred^-1 = (Bred^-1 Bf_red^T)^T
        M[:, keep] = np.linalg.solve(Bbus[np.ix_(keep, keep)], Bf[:, keep].T).T
    except np.linalg.LinAlgError as exc:
        raise SingularReducedLaplacian(f"{net.case_id}: reduced Laplacian is singular") from exc
    if not np.all(np.isfinite(M)):
        raise SingularReducedLaplacian(f"{net.case_id}: PTDF has non-finite entries")
    M[np.abs(M) < PTDF_ZERO] = 0.0
    return M


class RowKind(str, Enum):
    GEN_UB = "GenUB"
    GEN_LB = "GenLB"
    FLOW_UB = "FlowUB"
    FLOW_LB = "FlowLB"


class RowLabel(NamedTuple):
    kind: RowKind
    element: int  # generator or branch index, 0-based

    def __str__(self) -> str:
        return f"{self.kind.value} {self.element}"

    @classmethod
    def parse(cls, text: str) -> "RowLabel":
        kind, element = text.split()
        return cls(RowKind(kind), int(element))


@dataclass(frozen=True, eq=False)
class OpfProblem:
    """Constraint system for one network.

    ``A``, ``b``, ``C`` hold only the finite rows; ``row_labels[i]`` names row
    ``i`` of ``A`` and ``global_rows[i]`` is its position in the full
    2(n+m)-row layout, so bases stay comparable when rows are dropped.
    """

    net: PowerNetwork
    M: np.ndarray
    A: np.ndarray
    b: np.ndarray
    balance_rhs_base: float
    row_labels: tuple[RowLabel, ...]
    global_rows: np.ndarray
    MH: np.ndarray = field(repr=False)
    flow_rows: np.ndarray = field(repr=False)  # branch index per row, -1 for generator rows
    flow_sign: np.ndarray = field(repr=False)  # -1 for FlowUB (C = -M), +1 for FlowLB, 0 otherwise

    @cached_property
    def C(self) -> np.ndarray:
        """Dense ``C``; built on first use since it is (rows x v)."""
        return _dense_c(self.M, self.net.n)[self.global_rows]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def v(self) -> int:
        return self.M.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def c(self) -> np.ndarray:
        return self.net.c

    def rhs(self, omega: np.ndarray) -> np.ndarray:
        """``b + C omega`` without forming the product with the zero blocks."""
        cw = self.c_omega(omega)
        return (self.b if cw.ndim == 1 else self.b[:, None]) + cw

    def c_omega(self, omega: np.ndarray) -> np.ndarray:
        """``C omega`` for a vector, or ``C @ Omega`` for a (v, S) matrix of samples."""
        omega = np.asarray(omega, dtype=float)
        flows = self.M @ omega
        out = np.zeros((self.n_rows,) + omega.shape[1:])
        is_flow = self.flow_rows >= 0
        out[is_flow] = self.flow_sign[is_flow].reshape((-1,) + (1,) * (omega.ndim - 1)) * flows[self.flow_rows[is_flow]]
        return out

    def balance_rhs(self, omega: np.ndarray) -> float | np.ndarray:
        return self.balance_rhs_base - np.sum(omega, axis=0)

    def labels_of(self, rows) -> list[str]:
        return [str(self.row_labels[i]) for i in rows]


def assemble_problem(net: PowerNetwork, M: np.ndarray | None = None) -> OpfProblem:
    """Stack generator and flow limits into ``A p <= b + C omega``."""
    if M is None:
        M = build_ptdf(net)
    n, m = net.n, net.m
    MH = M @ net.H
    base_flow = M @ (net.mu - net.d)          # flows caused by the fixed injections

    A = np.vstack([np.eye(n), -np.eye(n), MH, -MH])
    b = np.concatenate([net.pmax, -net.pmin, net.fmax - base_flow, -net.fmin + base_flow])
    labels = (
        [RowLabel(RowKind.GEN_UB, i) for i in range(n)]
        + [RowLabel(RowKind.GEN_LB, i) for i in range(n)]
        + [RowLabel(RowKind.FLOW_UB, l) for l in range(m)]
        + [RowLabel(RowKind.FLOW_LB, l) for l in range(m)]
    )
    flow_rows = np.concatenate([-np.ones(2 * n, dtype=int), np.arange(m), np.arange(m)])
    flow_sign = np.concatenate([np.zeros(2 * n), -np.ones(m), np.ones(m)])

    keep = np.flatnonzero(np.isfinite(b))
    return OpfProblem(
        net=net,
        M=M,
        A=A[keep],
        b=b[keep],
        balance_rhs_base=float(np.sum(net.d - net.mu)),
        row_labels=tuple(labels[i] for i in keep),
        global_rows=keep,
        MH=MH,
        flow_rows=flow_rows[keep],
        flow_sign=flow_sign[keep],
    )


def _dense_c(M: np.ndarray, n: int) -> np.ndarray:
    v = M.shape[1]
    return np.vstack([np.zeros((2 * n, v)), -M, M])
