"""
Command-line front end.

    normcurve solve-curve --config run.json --out outdir
    normcurve energy-map  --config run.json --out outdir
    normcurve sample      --config run.json --out outdir --threads 4 --seed 7
    normcurve analyze     --config run.json --samples outdir/samples.csv --out outdir
    normcurve pipeline    --config run.json --out outdir

Exit codes: 0 success, 1 input error, 2 regime failure (no curve, cusp,
failed verification), 3 internal tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .curve import MomentVector, PolynomialCurve
from .energy import DomainSpec, Potential, default_domain, variational_verify
from .errors import RegimeError, ToleranceError
from .gas_sampler import SampleSet, SamplerConfig, run
from .moment_inverse import SolverConfig, _check_t2, solve_shifted, solve_with_report, cusp_margin

log = logging.getLogger("normcurve")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_REGIME, EXIT_TOLERANCE = 0, 1, 2, 3

ENERGY_DEFAULTS = {"grid": 200, "interior_tol": 1e-5, "exterior_tol": 1e-5}
ANALYSIS_DEFAULTS = {
    "bins": 40,
    "kmax": 4,
    "dilation": None,
    "min_expected": 50.0,
    "density_rtol": 0.10,
    "support_min": 0.95,
    "z_max": 4.0,
}
SOLVER_EXTRA = {"shifted": False}
TOP_KEYS = {"schema_version", "potential", "domain", "solver", "energy", "sampler",
            "analysis", "output_dir"}


class InputError(ValueError):
    pass


def _merge(section: str, given: Optional[dict], defaults: dict) -> dict:
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise InputError(f"'{section}' must be an object")
    extra = set(given) - set(defaults)
    if extra:
        raise InputError(f"unknown fields in '{section}': {sorted(extra)}")
    out = dict(defaults)
    out.update(given)
    return out


def resolve_config(raw: dict, seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    """Validate a run configuration and fill in every default.

    The result is itself a valid configuration that resolves to itself.
    """
    if not isinstance(raw, dict):
        raise InputError("configuration must be a JSON object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise InputError(f"unknown top-level fields: {sorted(extra)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"schema_version must be {SCHEMA_VERSION}")
    if "potential" not in raw:
        raise InputError("missing 'potential'")
    try:
        m = MomentVector.from_json(raw["potential"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad potential: {exc}") from exc
    solver_defaults = {**asdict(SolverConfig()), **SOLVER_EXTRA}
    solver = _merge("solver", raw.get("solver"), solver_defaults)
    try:
        SolverConfig(**{k: v for k, v in solver.items() if k not in SOLVER_EXTRA})
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad solver config: {exc}") from exc
    if not solver["shifted"]:
        try:
            _check_t2(m)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    p = Potential.from_moments(m)
    try:
        dom = default_domain(p) if raw.get("domain") is None else DomainSpec.from_json(raw["domain"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad domain: {exc}") from exc
    energy = _merge("energy", raw.get("energy"), ENERGY_DEFAULTS)
    sampler = None
    if raw.get("sampler") is not None:
        s = dict(raw["sampler"])
        if seed is not None:
            s["seed"] = seed
        try:
            sampler = asdict(SamplerConfig.from_json(s))
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad sampler config: {exc}") from exc
    ana = _merge("analysis", raw.get("analysis"), ANALYSIS_DEFAULTS)
    return {
        "schema_version": SCHEMA_VERSION,
        "potential": m.to_json(),
        "domain": dom.to_json(),
        "solver": solver,
        "energy": energy,
        "sampler": sampler,
        "analysis": ana,
        "output_dir": out if out is not None else raw.get("output_dir", "out"),
    }


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Run:
    """Resolved configuration plus lazily computed shared objects."""

    def __init__(self, cfg: dict, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.moments = MomentVector.from_json(cfg["potential"])
        self.potential = Potential.from_moments(self.moments)
        self.domain = DomainSpec.from_json(cfg["domain"])
        sv = {k: v for k, v in cfg["solver"].items() if k not in SOLVER_EXTRA}
        self.solver = SolverConfig(**sv)
        self.out = Path(cfg["output_dir"])
        self._curve = None

    def prepare(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        # the output directory is implied by the file's location; leaving it
        # out keeps runs into different directories byte-identical
        resolved = {k: v for k, v in self.cfg.items() if k != "output_dir"}
        _write_json(self.out / "config.resolved.json", resolved)

    def curve(self) -> PolynomialCurve:
        if self._curve is None:
            if self.cfg["solver"]["shifted"]:
                c = solve_shifted(self.moments, self.solver)
                report = {"iterations": None, "residual": None, "cusp_margin": cusp_margin(c)}
            else:
                c, rep = solve_with_report(self.moments, self.solver)
                report = rep.to_json()
            _write_json(self.out / "curve.json", c.to_json())
            _write_json(self.out / "solve_report.json", report)
            self._curve = c
        return self._curve


def stage_solve(r: Run) -> dict:
    c = r.curve()
    return {"stage": "solve", "passed": True, "r": c.r, "cusp_margin": cusp_margin(c)}


def stage_energy(r: Run) -> dict:
    c = r.curve()
    e = r.cfg["energy"]
    rep, grid = variational_verify(r.potential, c, r.domain, e["grid"], e["interior_tol"],
                                   e["exterior_tol"], return_grid=True)
    grid.write_csv(r.out / "field.csv")
    _write_json(r.out / "verify.json", rep.to_json())
    return {"stage": "energy-map", "passed": rep.passed, "interior_max_abs": rep.interior_max_abs,
            "exterior_min": rep.exterior_min}


def stage_sample(r: Run) -> dict:
    if r.cfg["sampler"] is None:
        raise InputError("configuration has no 'sampler' section")
    c = r.curve()
    scfg = SamplerConfig(**r.cfg["sampler"])
    ss = run(scfg, r.potential, c, r.domain, threads=r.threads)
    ss.write(r.out / "samples.csv", r.out / "samples.json")
    ss.write_timing(r.out / "timing.txt")
    return {"stage": "sample", "passed": True, "acceptance": ss.acceptance}


def stage_analyze(r: Run, samples_path: Path) -> dict:
    samples_path = Path(samples_path)
    sidecar = samples_path.with_suffix(".json")
    try:
        ss = SampleSet.read(samples_path, sidecar if sidecar.exists() else None)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read sample set {samples_path}: {exc}") from exc
    c = r.curve()
    a = r.cfg["analysis"]
    t0 = r.moments.t0
    est = analysis.histogram(ss, a["bins"], bbox=r.domain.bbox())
    est.write_csv(r.out / "density.csv")
    mask = analysis.interior_bins(est, c, t0, a["min_expected"])
    target = 1.0 / (np.pi * t0)
    mean_density = float(np.mean(est.density[mask])) if mask.any() else float("nan")
    dil = a["dilation"] if a["dilation"] is not None else analysis.default_dilation(ss.N)
    frac = analysis.support_fraction(ss, c, dil)
    mom = analysis.moments_report(ss, c, t0, a["kmax"])
    _write_json(r.out / "moments.json", mom)
    weak = analysis.weak_convergence_test(ss, c)
    _write_json(r.out / "weak_convergence.json", weak)
    density_ok = bool(mask.any() and abs(mean_density / target - 1) <= a["density_rtol"])
    support_ok = frac >= a["support_min"]
    k0_ok = mom["moments"][0]["mean"] == [t0, 0.0]
    # a single chain has no batch-means error bar, so z-scores are unavailable
    zs = [row["z_abs"] for row in mom["moments"][1:] if row["z_abs"] is not None]
    z_ok = all(z <= a["z_max"] for z in zs)
    summary = {
        "stage": "analyze",
        "passed": bool(density_ok and support_ok and k0_ok and z_ok),
        "support_fraction": frac,
        "dilation": dil,
        "interior_mean_density": mean_density,
        "predicted_density": target,
        "interior_bins": int(mask.sum()),
        "moment_z_max": max(zs, default=None),
        "moment_z_checked": len(zs) > 0,
    }
    _write_json(r.out / "analysis.json", summary)
    return summary


def _load(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normcurve", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve-curve", "energy-map", "sample", "analyze", "pipeline"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        sp.add_argument("--seed", type=int, help="override sampler.seed")
        if name == "analyze":
            sp.add_argument("--samples", required=True, help="sample set CSV")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    summary = None
    r = None
    try:
        if args.threads < 1:
            raise InputError("--threads must be >= 1")
        cfg = resolve_config(_load(args.config), seed=args.seed, out=args.out)
        r = Run(cfg, args.threads)
        r.prepare()
        if args.command == "solve-curve":
            stage_solve(r)
        elif args.command == "energy-map":
            res = stage_energy(r)
            if not res["passed"]:
                raise RegimeError("variational verification failed")
        elif args.command == "sample":
            stage_sample(r)
        elif args.command == "analyze":
            res = stage_analyze(r, Path(args.samples))
            if not res["passed"]:
                log.warning("analysis checks did not all pass")
        else:
            summary = {"stages": [], "passed": False}
            summary["stages"].append(stage_solve(r))
            summary["stages"].append(stage_energy(r))
            if summary["stages"][-1]["passed"]:
                summary["stages"].append(stage_sample(r))
                summary["stages"].append(stage_analyze(r, r.out / "samples.csv"))
            summary["passed"] = all(s["passed"] for s in summary["stages"])
            _write_json(r.out / "summary.json", summary)
            if not summary["passed"]:
                return EXIT_REGIME
        return EXIT_OK
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RegimeError as exc:
        print(f"regime failure: {exc}", file=sys.stderr)
        _fail_summary(r, summary, exc)
        return EXIT_REGIME
    except ToleranceError as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        _fail_summary(r, summary, exc)
        return EXIT_TOLERANCE


def _fail_summary(r: Optional[Run], summary: Optional[dict], exc: Exception) -> None:
    if r is None or summary is None:
        return
    summary["passed"] = False
    summary["error"] = str(exc)
    _write_json(r.out / "summary.json", summary)


if __name__ == "__main__":
    sys.exit(main())
