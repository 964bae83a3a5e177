"""Locate benchmark case files by short name or path."""

from __future__ import annotations

from pathlib import Path

from .matpower import load_network
from .network import OpfProblem, PowerNetwork, assemble_problem

# the 15 benchmark networks studied, by short name
BENCHMARK_CASES = (
    "case3_lmbd", "case5_pjm", "case14_ieee", "case24_ieee_rts", "case30_ieee",
    "case39_epri", "case57_ieee", "case73_ieee_rts", "case118_ieee", "case162_ieee_dtc",
    "case200_pserc", "case240_pserc", "case300_ieee", "case1888_rte", "case1951_rte",
)

# names that changed between library releases
ALIASES = {"case200_pserc": "case200_activ"}


class CaseNotFound(FileNotFoundError):
    pass


def library_dir() -> Path:
    try:
        import pypglib
    except ImportError as exc:  # pragma: no cover - declared dependency
        raise CaseNotFound("pypglib is not installed; pass a path to a .m file instead") from exc
    return Path(pypglib.PATH_PYPGLIB_OPF)


def case_path(name_or_path: str | Path) -> Path:
    """Resolve ``case14_ieee``, ``pglib_opf_case14_ieee`` or a filesystem path."""
    p = Path(name_or_path)
    if p.suffix == ".m" or p.exists():
        if not p.is_file():
            raise CaseNotFound(f"no case file at {p}")
        return p
    name = str(name_or_path).removeprefix("pglib_opf_")
    name = ALIASES.get(name, name)
    found = library_dir() / f"pglib_opf_{name}.m"
    if not found.is_file():
        raise CaseNotFound(f"unknown case {name_or_path!r}")
    return found


def load_case(name_or_path: str | Path) -> PowerNetwork:
    return load_network(case_path(name_or_path))


def load_problem(name_or_path: str | Path) -> OpfProblem:
    return assemble_problem(load_case(name_or_path))
