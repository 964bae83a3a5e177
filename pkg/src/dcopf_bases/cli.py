"""Command-line front end: ``learn``, ``evaluate`` and ``report``.

Exit codes: 0 success, 1 error, 2 coverage test inconclusive.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .cases import load_problem
from .evaluation import EvaluationReport, SchemaMismatch, evaluate_ensemble, merge_reports, render_tables
from .learning import (
    Outcome,
    UncertaintyModel,
    catalog_to_csv,
    coverage_test,
    run_learning,
    top_k_ensemble,
    trace_from_csv,
    trace_meta_json,
    trace_to_csv,
    window_size,
)
from .policy import EnsembleCaseMismatch, ensemble_from_json, ensemble_to_json

log = logging.getLogger("dcopf_bases")

OUT_ENV = "DCOPF_BASES_OUT"
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  ``samples`` is the total M + W; W follows from epsilon and delta."""

    case: str = ""
    sigma: float = 0.03
    samples: int = 5000
    epsilon: float = 0.02
    delta: float = 0.1
    k: tuple[int, ...] = (1, 5, 10, 20, 50, 100)
    n_test: int = 5000
    seed: int = 0
    threads: int = 1
    out: str = field(default_factory=lambda: os.environ.get(OUT_ENV, "results"))
    format: str = "text"

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(sorted({int(x) for x in self.k})))
        if not self.case:
            raise ValueError("no case given (--case or 'case' in the config file)")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if any(x < 1 for x in self.k):
            raise ValueError("ensemble sizes must be positive")
        if self.n_test < 1:
            raise ValueError("n-test must be positive")
        if self.format not in ("csv", "json", "text"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.M < 1:
            raise ValueError(f"{self.samples} samples leave no training samples after a window of {self.W}")

    @property
    def W(self) -> int:
        return window_size(self.epsilon, self.delta)

    @property
    def M(self) -> int:
        return self.samples - self.W

    def stem(self, case_id: str) -> str:
        return f"{case_id}_{self.sigma:g}_{self.seed}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k"] = list(self.k)
        d.pop("out")  # location, not content; keeps artifacts identical across directories
        return d


def load_config(path: str | Path | None, overrides: dict) -> ExperimentConfig:
    """JSON config file (keys = ExperimentConfig fields) with non-None ``overrides`` on top."""
    values: dict = {}
    if path:
        values = json.loads(Path(path).read_text())
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_learn(cfg: ExperimentConfig) -> int:
    prob = load_problem(cfg.case)
    model = UncertaintyModel.from_loads(prob.net.d, cfg.sigma, cfg.seed)
    log.info("%s: learning with M=%d, W=%d", prob.net.case_id, cfg.M, cfg.W)
    trace = run_learning(prob, model, cfg.M, cfg.W, cfg.threads)
    verdict = coverage_test(trace, cfg.epsilon, cfg.delta)
    ens = top_k_ensemble(trace, prob, max(cfg.k))
    ens = replace(ens, meta={**ens.meta, "config": cfg.to_dict(), "version": __version__})

    out = Path(cfg.out)
    stem = cfg.stem(prob.net.case_id)
    _write(out / f"{stem}_trace.csv", trace_to_csv(trace))
    _write(out / f"{stem}_catalog.csv", catalog_to_csv(trace))
    _write(out / f"{stem}_trace.json", trace_meta_json(trace) + "\n")
    _write(out / f"{stem}_ensemble.json", ensemble_to_json(ens) + "\n")
    doc = {
        "case_id": prob.net.case_id,
        "config": cfg.to_dict(),
        "version": __version__,
        "epsilon": verdict.epsilon,
        "delta": verdict.delta,
        "W": verdict.W,
        "R_W": verdict.R_W,
        "outcome": verdict.outcome.value,
        "bases_observed": trace.n_observed,
        "infeasible": trace.n_infeasible,
    }
    _write(out / f"{stem}_verdict.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"{prob.net.case_id}: {trace.n_observed} bases, R_W={verdict.R_W:.4f}, {verdict.outcome.value}")
    return EXIT_OK if verdict.outcome is Outcome.SUCCESS else EXIT_INCONCLUSIVE


def cmd_evaluate(cfg: ExperimentConfig, ensemble_path: str | Path | None = None) -> int:
    prob = load_problem(cfg.case)
    out = Path(cfg.out)
    stem = cfg.stem(prob.net.case_id)
    ensemble_path = Path(ensemble_path) if ensemble_path else out / f"{stem}_ensemble.json"
    ens = ensemble_from_json(
        ensemble_path.read_text(),
        prob,
        expect={"case_digest": prob.net.digest(), "sigma_scaling": cfg.sigma},
    )
    trace = None
    trace_csv = ensemble_path.with_name(ensemble_path.name.replace("_ensemble.json", "_trace.csv"))
    if trace_csv != ensemble_path and trace_csv.exists():
        info = json.loads(trace_csv.with_suffix(".json").read_text())
        trace = trace_from_csv(
            trace_csv.read_text(),
            trace_csv.with_name(trace_csv.name.replace("_trace.csv", "_catalog.csv")).read_text(),
            info["M"], info["W"], info["meta"],
        )
    model = UncertaintyModel.from_loads(prob.net.d, cfg.sigma, cfg.seed)
    report = evaluate_ensemble(
        ens, prob, model, cfg.n_test, cfg.k, trace, cfg.threads,
        meta={"config": cfg.to_dict()},
    )
    _write(out / f"{stem}_report.json", report.to_json() + "\n")
    if cfg.format != "json":
        _write(out / f"{stem}_report.{'txt' if cfg.format == 'text' else 'csv'}", render_tables(report, cfg.format))
    sys.stdout.write(render_tables(report, "text"))
    return EXIT_OK


def cmd_report(paths: list[str], fmt: str = "text", out: str | None = None) -> int:
    reports = [EvaluationReport.from_json(Path(p).read_text()) for p in paths]
    text = merge_reports(reports, fmt)
    if out:
        _write(Path(out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcopf-bases", description="Learn and evaluate optimal-basis ensembles for DC-OPF.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def experiment(p):
        p.add_argument("--config", help="JSON file whose keys are the long flag names")
        p.add_argument("--case", help="case name (e.g. case14_ieee) or path to a .m file")
        p.add_argument("--sigma", type=float, help="load std as a fraction of nominal load (default 0.03)")
        p.add_argument("--samples", type=int, help="training samples M + W (default 5000)")
        p.add_argument("--epsilon", type=float, help="default 0.02")
        p.add_argument("--delta", type=float, help="default 0.1")
        p.add_argument("--k", type=int, nargs="+", help="ensemble sizes (default 1 5 10 20 50 100)")
        p.add_argument("--n-test", type=int, help="out-of-sample scenarios (default 5000)")
        p.add_argument("--seed", type=int, help="default 0")
        p.add_argument("--threads", type=int, help="solver threads (default 1)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        p.add_argument("--format", choices=("csv", "json", "text"))

    experiment(sub.add_parser("learn", help="sample, solve, run the coverage test and save the ensemble"))
    ev = sub.add_parser("evaluate", help="out-of-sample test of a saved ensemble")
    experiment(ev)
    ev.add_argument("--ensemble", help="ensemble JSON (default: the one `learn` wrote for this config)")
    rp = sub.add_parser("report", help="merge report JSON files into summary tables")
    rp.add_argument("paths", nargs="+")
    rp.add_argument("--format", choices=("csv", "json", "text"), default="text")
    rp.add_argument("--out", help="write to this file instead of stdout")
    return ap


_FLAG_KEYS = ("case", "sigma", "samples", "epsilon", "delta", "k", "n_test", "seed", "threads", "out", "format")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.paths, args.format, args.out)
        cfg = load_config(args.config, {k: getattr(args, k) for k in _FLAG_KEYS})
        if args.command == "learn":
            return cmd_learn(cfg)
        return cmd_evaluate(cfg, args.ensemble)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        # covers missing files, malformed cases, solver failures, mismatched artifacts
        kind = type(exc).__name__
        if isinstance(exc, (EnsembleCaseMismatch, SchemaMismatch)):
            kind = f"{kind} (artifact does not match)"
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
