"""Command-line front end: ``amplab --config run.yaml``.

Exit codes: 0 all checks pass, 1 a check failed, 2 config or usage error,
3 numerical breakdown (singular metric, domain error, non-finite values).
The report is written even when checks fail or a suite breaks down.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .connections import Contorsion, build_contorsion
from .harness import GridSpec, VerificationReport, splitting_hypothesis_report
from .models import list_models
from .suites import (
    euler_lagrange_suite,
    identity_suite,
    integral_suite,
    mu_suite,
    random_cubic_form,
    semi_field,
    semi_symmetric_suite,
    variation_suite,
)

__all__ = ["EXIT_OK", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_NUMERIC", "run", "main"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# finite-difference variation checks are the costly ones; cap their sample
VARIATION_POINTS = 20


def _identity_contorsions(cfg: RunConfig, rng: np.random.Generator) -> dict[str, Contorsion | None]:
    model = cfg.model
    out: dict[str, Contorsion | None] = {"zero": None}
    if cfg.contorsion is not None and cfg.contorsion.kind != "zero":
        out[cfg.contorsion.kind] = cfg.contorsion
        return out
    out["statistical"] = random_cubic_form(model.coords, rng)
    out["semi_symmetric"] = build_contorsion("semi_symmetric", model.coords, semi_field(model, None, cfg.semi_field))
    return out


def _statistical(cfg: RunConfig) -> Contorsion | None:
    I = cfg.contorsion
    return I if I is not None and I.kind == "statistical" else None


def _semi_U(cfg: RunConfig):
    if cfg.semi_field is not None:
        return cfg.semi_field
    I = cfg.contorsion
    return I.data if I is not None and I.kind == "semi_symmetric" else None


def _run_suites(cfg: RunConfig, report: VerificationReport) -> None:
    model = cfg.model
    tols = dict(cfg.tolerances)
    # independent streams so that selecting fewer suites does not shift the samples
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_pts, rng_id, rng_var, rng_mu = (np.random.default_rng(s) for s in seeds)
    points = model.sample_points(cfg.points, rng_pts)

    for suite in cfg.checks:
        if suite == "identity":
            report.add(identity_suite(model, points, _identity_contorsions(cfg, rng_id), tols))
        elif suite == "integral":
            if not model.closed:
                report.meta["skipped"].append({"suite": "integral", "reason": f"model {model.name} is not closed"})
                continue
            grid = GridSpec.uniform(cfg.grid, model)
            I = cfg.contorsion
            checks, rows = integral_suite(model, grid, I, tols, cfg.workers, convergence=cfg.convergence)
            report.add(checks)
            report.convergence.extend(rows)
            report.hypotheses = splitting_hypothesis_report(model, grid, I, workers=cfg.workers)
        elif suite == "variation":
            pts = points[:VARIATION_POINTS]
            report.add(variation_suite(model, pts, rng_var, cfg.families, _statistical(cfg), _semi_U(cfg), tols))
        elif suite == "euler-lagrange":
            report.add(euler_lagrange_suite(model, points, _statistical(cfg), tols))
            if model.dim > 2:
                report.add(mu_suite([model.split.dims], rng_mu, model, tols))
        elif suite == "semi-symmetric":
            report.add(semi_symmetric_suite(model, points, _semi_U(cfg), tols))


def run(cfg: RunConfig) -> tuple[int, VerificationReport]:
    """Run the selected suites; returns the exit code and the assembled report."""
    report = VerificationReport(meta={"config": cfg.describe(), "skipped": []})
    try:
        _run_suites(cfg, report)
    except ArithmeticError as exc:
        report.meta["error"] = {"kind": "numerical", "type": type(exc).__name__, "message": str(exc)}
        return EXIT_NUMERIC, report
    except ValueError as exc:
        report.meta["error"] = {"kind": "config", "type": type(exc).__name__, "message": str(exc)}
        return EXIT_CONFIG, report
    if any(not math.isfinite(float(c.value)) for c in report.checks):
        report.meta["error"] = {"kind": "numerical", "type": "NonFinite", "message": "non-finite check value"}
        return EXIT_NUMERIC, report
    return (EXIT_OK if report.passed else EXIT_FAIL), report


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amplab", description="Numerical verification of identities on almost multi-product manifolds.")
    p.add_argument("--config", metavar="PATH", help="YAML run configuration")
    p.add_argument("--checks", metavar="LIST", help="comma-separated suites: identity, integral, variation, euler-lagrange, semi-symmetric, all")
    p.add_argument("--grid", type=int, metavar="N", help="quadrature nodes per axis")
    p.add_argument("--seed", type=int, metavar="S", help="seed for sample points and random test data")
    p.add_argument("--out", metavar="PATH", help="report path (default: the config's output, else stdout)")
    p.add_argument("--workers", type=int, metavar="W", help="worker processes for grid evaluation")
    p.add_argument("--list-models", action="store_true", help="list built-in models and exit")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.list_models:
        for name, doc in list_models():
            print(f"{name:24s} {doc}")
        return EXIT_OK
    if not args.config:
        parser.print_usage(sys.stderr)
        print("amplab: error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {
        "checks": args.checks.split(",") if args.checks else None,
        "grid": args.grid,
        "seed": args.seed,
        "output": args.out,
        "workers": args.workers,
    }
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"amplab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, report = run(cfg)
    _write(report.to_json(), cfg.output)
    if "error" in report.meta:
        print(f"amplab: {report.meta['error']['type']}: {report.meta['error']['message']}", file=sys.stderr)
    s = report.checks
    failed = [c.id for c in s if c.passed is False]
    print(f"amplab: {len(s)} checks, {len(failed)} failed, exit {code}", file=sys.stderr)
    for cid in failed:
        print(f"  FAIL {cid}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
