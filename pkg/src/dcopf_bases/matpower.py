"""Reader for MATPOWER ``.m`` case files (the PGLib-OPF distribution format).

Only ``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen``, ``mpc.branch`` and
``mpc.gencost`` are interpreted.  Everything else is skipped with a warning.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .network import PowerNetwork

log = logging.getLogger(__name__)

REQUIRED_TABLES = ("bus", "gen", "branch", "gencost")

# minimum column counts of the MATPOWER v2 format
MIN_COLUMNS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}

# column indices (0-based)
BUS_I, BUS_TYPE, PD = 0, 1, 2
GEN_BUS, GEN_STATUS, PMAX, PMIN = 0, 7, 8, 9
F_BUS, T_BUS, BR_X, RATE_A, BR_STATUS = 0, 1, 3, 5, 10
MODEL, NCOST, COST = 0, 3, 4
REF = 3


class MatpowerError(ValueError):
    """Base class for case-file problems."""


class MatpowerSyntaxError(MatpowerError):
    pass


class MissingTable(MatpowerError):
    pass


class InconsistentRow(MatpowerError):
    pass


class InvalidCase(MatpowerError):
    """The tables parse but violate a structural invariant."""


class IslandedNetwork(MatpowerError):
    pass


class ZeroRateA(MatpowerError):
    pass


@dataclass(frozen=True)
class RawCase:
    name: str
    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray

    @property
    def n_bus(self) -> int:
        return self.bus.shape[0]

    @property
    def n_gen(self) -> int:
        return self.gen.shape[0]

    @property
    def n_branch(self) -> int:
        return self.branch.shape[0]


_BLOCK = re.compile(r"mpc\.(\w+)\s*=\s*([\[{])(.*?)[\]}]\s*;", re.S)
_SCALAR = re.compile(r"mpc\.baseMVA\s*=\s*([^;%\n]+);")
_FUNCTION = re.compile(r"^\s*function\s+\w+\s*=\s*(\w+)", re.M)


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(name: str, body: str) -> np.ndarray:
    rows = []
    for chunk in re.split(r"[;\n]", body):
        tokens = chunk.replace(",", " ").split()
        if not tokens:
            continue
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError as exc:
            raise MatpowerSyntaxError(f"mpc.{name}: non-numeric entry in row {chunk.strip()!r}") from exc
    if not rows:
        return np.zeros((0, MIN_COLUMNS.get(name, 0)))
    widths = {len(r) for r in rows}
    if name == "gencost":
        # rows may legitimately differ in width (ncost varies); pad with nan
        width = max(widths)
        return np.array([r + [np.nan] * (width - len(r)) for r in rows])
    if len(widths) != 1:
        raise InconsistentRow(f"mpc.{name}: rows have differing column counts {sorted(widths)}")
    return np.array(rows)


def parse_matpower(text: str, name: str | None = None) -> RawCase:
    """Parse the source of a MATPOWER case file into a :class:`RawCase`."""
    clean = _strip_comments(text)
    if name is None:
        m = _FUNCTION.search(clean)
        name = m.group(1) if m else "case"

    m = _SCALAR.search(clean)
    if m is None:
        raise MissingTable("mpc.baseMVA is missing")
    try:
        base_mva = float(m.group(1))
    except ValueError as exc:
        raise MatpowerSyntaxError(f"mpc.baseMVA is not a number: {m.group(1)!r}") from exc

    tables: dict[str, np.ndarray] = {}
    for block in _BLOCK.finditer(clean):
        key, bracket, body = block.groups()
        if key not in REQUIRED_TABLES:
            log.warning("%s: ignoring mpc.%s", name, key)
            continue
        if bracket == "{":
            raise MatpowerSyntaxError(f"mpc.{key} must be a numeric matrix")
        tables[key] = _parse_matrix(key, body)

    for key in REQUIRED_TABLES:
        if key not in tables:
            raise MissingTable(f"mpc.{key} is missing")
        if tables[key].shape[0] and tables[key].shape[1] < MIN_COLUMNS[key]:
            raise InconsistentRow(
                f"mpc.{key}: expected at least {MIN_COLUMNS[key]} columns, got {tables[key].shape[1]}"
            )

    raw = RawCase(name, base_mva, tables["bus"], tables["gen"], tables["branch"], tables["gencost"])
    _validate(raw)
    return raw


def read_case(path: str | Path) -> RawCase:
    path = Path(path)
    name = path.stem
    if name.startswith("pglib_opf_"):
        name = name[len("pglib_opf_"):]
    return parse_matpower(path.read_text(encoding="utf-8", errors="replace"), name=name)


def _validate(raw: RawCase) -> None:
    bus_ids = raw.bus[:, BUS_I]
    if len(np.unique(bus_ids)) != len(bus_ids):
        raise InvalidCase("duplicate bus ids")
    known = set(bus_ids.tolist())
    for label, ids in (
        ("gen", raw.gen[:, GEN_BUS]),
        ("branch from", raw.branch[:, F_BUS]),
        ("branch to", raw.branch[:, T_BUS]),
    ):
        unknown = set(ids.tolist()) - known
        if unknown:
            raise InvalidCase(f"{label} references unknown bus ids {sorted(unknown)[:5]}")
    n_ref = int(np.sum(raw.bus[:, BUS_TYPE] == REF))
    if n_ref != 1:
        raise InvalidCase(f"expected exactly one reference bus, found {n_ref}")
    if raw.gencost.shape[0] < raw.n_gen:
        raise InvalidCase(f"gencost has {raw.gencost.shape[0]} rows for {raw.n_gen} generators")
    for i, row in enumerate(raw.gencost[: raw.n_gen]):
        ncost = int(row[NCOST])
        expected = 2 * ncost if int(row[MODEL]) == 1 else ncost
        coeffs = row[COST:]
        present = int(np.sum(~np.isnan(coeffs)))
        if present < expected or np.isnan(coeffs[:expected]).any():
            raise InvalidCase(f"gencost row {i}: ncost={ncost} but {present} coefficients")


def linear_cost(row: np.ndarray) -> float:
    """Linear cost coefficient ($/MWh) of one gencost row.

    Polynomial costs contribute the coefficient of p**1; piecewise-linear
    costs contribute the slope of their first segment.
    """
    model, ncost = int(row[MODEL]), int(row[NCOST])
    coeffs = row[COST:]
    if model == 2:
        # highest order first: c_{ncost-1} ... c_1 c_0
        return float(coeffs[ncost - 2]) if ncost >= 2 else 0.0
    if model == 1:
        if ncost < 2:
            return 0.0
        x0, y0, x1, y1 = coeffs[:4]
        return float((y1 - y0) / (x1 - x0))
    raise InvalidCase(f"unknown gencost model {model}")


def to_network(raw: RawCase, unlimited_zero_rate: bool = True) -> PowerNetwork:
    """Convert a raw case into a per-unit :class:`PowerNetwork`.

    Out-of-service generators and branches are dropped.  A branch with
    ``rateA == 0`` is unlimited unless ``unlimited_zero_rate`` is False, in
    which case :class:`ZeroRateA` is raised.
    """
    base = raw.base_mva
    bus_index = {int(b): i for i, b in enumerate(raw.bus[:, BUS_I])}
    v = raw.n_bus

    gen_on = raw.gen[:, GEN_STATUS] > 0
    gen = raw.gen[gen_on]
    cost_rows = raw.gencost[: raw.n_gen][gen_on]
    br = raw.branch[raw.branch[:, BR_STATUS] > 0]

    if np.any(br[:, BR_X] == 0):
        raise InvalidCase("branch with zero reactance")

    f_idx = np.array([bus_index[int(b)] for b in br[:, F_BUS]], dtype=int)
    t_idx = np.array([bus_index[int(b)] for b in br[:, T_BUS]], dtype=int)
    _check_connected(v, f_idx, t_idx, raw.name)

    rate = br[:, RATE_A] / base
    if np.any(rate == 0) and not unlimited_zero_rate:
        raise ZeroRateA(f"{int(np.sum(rate == 0))} branches have rateA = 0")
    fmax = np.where(rate == 0, np.inf, rate)

    gen_bus = np.array([bus_index[int(b)] for b in gen[:, GEN_BUS]], dtype=int)
    n = len(gen_bus)
    H = np.zeros((v, n))
    H[gen_bus, np.arange(n)] = 1.0

    m = len(f_idx)
    incidence = np.zeros((m, v))
    incidence[np.arange(m), f_idx] = 1.0
    incidence[np.arange(m), t_idx] = -1.0

    return PowerNetwork(
        case_id=raw.name,
        base_mva=base,
        d=raw.bus[:, PD] / base,
        mu=np.zeros(v),
        pmin=gen[:, PMIN] / base,
        pmax=gen[:, PMAX] / base,
        fmin=-fmax,
        fmax=fmax,
        c=np.array([linear_cost(r) for r in cost_rows]) * base,
        H=H,
        susceptances=1.0 / br[:, BR_X],
        incidence=incidence,
        ref_bus=int(np.flatnonzero(raw.bus[:, BUS_TYPE] == REF)[0]),
        gen_bus=gen_bus,
    )


def _check_connected(v: int, f_idx: np.ndarray, t_idx: np.ndarray, name: str) -> None:
    if v == 1:
        return
    adj = coo_matrix((np.ones(len(f_idx)), (f_idx, t_idx)), shape=(v, v))
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise IslandedNetwork(f"{name}: network splits into {n_comp} islands")


def load_network(path: str | Path) -> PowerNetwork:
    return to_network(read_case(path))
