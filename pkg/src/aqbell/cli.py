"""Command-line surface.

Exit codes: 0 success / claim holds, 1 claim fails, 2 input error,
3 numerical failure.  Every command writes a JSON run report (and its
artifacts) into the output directory; numeric results in reports are paired
with the tolerance they were certified at.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aqset import aq_extremize, build_moment_structure, constraint_residual, strictly_feasible_point
from .errors import AqbellError, NoWorkError, SolverFailureError
from .nbf import (
    REFERENCE_THIRD_PARTY_MAP,
    REFERENCE_THIRD_PARTY_SETTINGS,
    NbfFamily,
    certificate_to_json,
    compose,
    reference_composed_functional,
    reference_functionals,
    verify_nbf,
)
from .oracles import (
    deterministic_range,
    normalized_chsh,
    quantum_value,
    three_setting_pair_model,
    trace_moment_matrix,
    tsirelson_model,
)
from .scenario import (
    BellFunctional,
    behavior_to_json,
    functional_from_json,
    functional_to_json,
    load_json,
    make_scenario,
    save_json,
)
from .sdp import SolverConfig
from .seesaw import SeesawConfig, run as seesaw_run, trace_to_json

EXIT_OK = 0
EXIT_CLAIM_FAILS = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL = 3

REPRODUCE_BAND = (-0.0038, -0.0028)
COEFF_TOL = 5e-4  # four-decimal reference coefficients
PERTURB_CLAIM_EPSILON = 1e-3  # above this the probe is exploratory only
PERTURB_FLOOR = -0.002


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write_report(outdir: Path, command: str, inputs, config, results, started: float) -> dict:
    report = {
        "command": command,
        "inputs_digest": _digest(inputs),
        "config_digest": _digest(config),
        "results": results,
        "wall_time_s": time.monotonic() - started,
        "tool_version": __version__,
    }
    outdir.mkdir(parents=True, exist_ok=True)
    save_json(outdir / f"{command.replace(' ', '_')}_report.json", report)
    return report


def _result(value: float, tolerance: float) -> dict:
    return {"value": float(value), "tolerance": float(tolerance)}


def cmd_verify(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    raw = load_json(args.functional)
    functional = functional_from_json(raw)
    verdict = verify_nbf(functional, tol=args.tol)
    if verdict.is_nbf is None:
        print(f"indeterminate: {verdict.failure}")
        return EXIT_NUMERICAL
    outdir.mkdir(parents=True, exist_ok=True)
    save_json(outdir / "lower_certificate.json", certificate_to_json(verdict.lower_certificate))
    save_json(outdir / "upper_certificate.json", certificate_to_json(verdict.upper_certificate))
    results = {
        "is_nbf": verdict.is_nbf,
        "aq_min": _result(verdict.aq_min, args.tol),
        "aq_max": _result(verdict.aq_max, args.tol),
        "certificates": ["lower_certificate.json", "upper_certificate.json"],
    }
    _write_report(outdir, "verify", raw, {"tol": args.tol}, results, started)
    print(f"is_nbf={verdict.is_nbf}  aq_min={verdict.aq_min:+.9f}  aq_max={verdict.aq_max:+.9f}")
    return EXIT_OK if verdict.is_nbf else EXIT_CLAIM_FAILS


def cmd_aq(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    raw = load_json(args.functional)
    functional = functional_from_json(raw)
    cfg = SolverConfig(gap_tol=args.tol)
    ext = aq_extremize(functional, args.sense, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    save_json(outdir / f"aq_{args.sense}_behavior.json", behavior_to_json(ext.behavior, "collins_gisin"))
    save_json(outdir / f"aq_{args.sense}_certificate.json", certificate_to_json(ext.certificate))
    results = {
        "sense": args.sense,
        "value": _result(ext.value, ext.solution.residuals.gap),
        "solver_gap": ext.solution.residuals.gap,
    }
    _write_report(outdir, f"aq {args.sense}", raw, {"tol": args.tol}, results, started)
    print(f"aq_{args.sense} = {ext.value:+.9f}")
    return EXIT_OK


def cmd_compose(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    if args.u or args.v:
        if not args.u or not args.v:
            print("compose needs either no inputs (bundled trio) or both --u and --v", file=sys.stderr)
            return EXIT_INPUT_ERROR
        generators = [functional_from_json(load_json(path)) for path in args.u]
        outer = functional_from_json(load_json(args.v))
        fam = NbfFamily.two_outcome(generators)
        composed = compose(
            outer, fam,
            third_party_map=REFERENCE_THIRD_PARTY_MAP,
            third_party_settings=REFERENCE_THIRD_PARTY_SETTINGS,
        )
        inputs = {"u": args.u, "v": args.v}
    else:
        composed = reference_composed_functional()
        inputs = {"bundled": True}
    outdir.mkdir(parents=True, exist_ok=True)
    save_json(outdir / "composed.json", functional_to_json(composed))
    _write_report(outdir, "compose", inputs, {}, {"composed": "composed.json"}, started)
    print(f"composed functional written to {outdir / 'composed.json'}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    cfg = SolverConfig(gap_tol=args.tol)
    first, second, outer = reference_functionals()
    verdicts = {
        name: verify_nbf(f, tol=COEFF_TOL, config=cfg)
        for name, f in (("first", first), ("second", second), ("outer", outer))
    }
    for name, verdict in verdicts.items():
        if verdict.is_nbf is None:
            print(f"verification of {name} failed: {verdict.failure}", file=sys.stderr)
            return EXIT_NUMERICAL
        if not verdict.is_nbf:
            print(f"{name} functional is not normalized over the set", file=sys.stderr)
            return EXIT_CLAIM_FAILS
    composed = reference_composed_functional()
    ext = aq_extremize(composed, "min", cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    save_json(outdir / "reproduce_behavior.json", behavior_to_json(ext.behavior, "collins_gisin"))
    save_json(outdir / "reproduce_certificate.json", certificate_to_json(ext.certificate))
    lo, hi = REPRODUCE_BAND
    results = {
        "minimum": _result(ext.value, ext.solution.residuals.gap),
        "band": [lo, hi],
        "in_band": bool(lo <= ext.value <= hi),
        "solver_gap": ext.solution.residuals.gap,
        "verdicts": {
            name: {
                "is_nbf": verdict.is_nbf,
                "aq_min": _result(verdict.aq_min, COEFF_TOL),
                "aq_max": _result(verdict.aq_max, COEFF_TOL),
            }
            for name, verdict in verdicts.items()
        },
    }
    _write_report(outdir, "reproduce", {"bundled": True}, {"tol": args.tol}, results, started)
    print(f"min over the almost-quantum set: {ext.value:+.9f}  (band [{lo}, {hi}])")
    return EXIT_OK if ext.value <= hi else EXIT_CLAIM_FAILS


def _project_to_nbf(functional: BellFunctional, cfg: SolverConfig) -> BellFunctional:
    """Affine rescale onto [0, 1] over the set when the bounds drifted out."""
    lo = aq_extremize(functional, "min", cfg).value
    hi = aq_extremize(functional, "max", cfg).value
    if lo >= 0.0 and hi <= 1.0:
        return functional
    span = hi - lo
    coeffs = functional.coeffs / span
    coeffs = coeffs.copy()
    coeffs[0] -= lo / span
    return BellFunctional(functional.scenario, coeffs)


def cmd_perturb(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    if not 0.0 <= args.epsilon <= 0.01:
        print("epsilon must lie in [0, 0.01]", file=sys.stderr)
        return EXIT_INPUT_ERROR
    cfg = SolverConfig()
    first, second, outer = reference_functionals()
    epsilons = [0.0] if args.epsilon == 0.0 else [0.0, args.epsilon]
    rng = np.random.default_rng(args.seed)
    rows = []
    for eps in epsilons:
        trials = 1 if eps == 0.0 else args.trials
        for trial in range(trials):
            perturbed = []
            for f in (first, second, outer):
                noise = rng.uniform(-eps, eps, size=f.coeffs.shape) if eps > 0.0 else 0.0
                candidate = BellFunctional(f.scenario, f.coeffs + noise)
                perturbed.append(_project_to_nbf(candidate, cfg) if eps > 0.0 else candidate)
            fam = NbfFamily.two_outcome(perturbed[:2])
            composed = compose(
                perturbed[2], fam,
                third_party_map=REFERENCE_THIRD_PARTY_MAP,
                third_party_settings=REFERENCE_THIRD_PARTY_SETTINGS,
            )
            value = aq_extremize(composed, "min", cfg).value
            rows.append({"epsilon": eps, "trial": trial, "minimum": value})
            print(f"epsilon={eps:.1e} trial={trial}: minimum {value:+.9f}")
    claim_checked = args.epsilon <= PERTURB_CLAIM_EPSILON and args.epsilon > 0.0
    holds = all(row["minimum"] <= PERTURB_FLOOR for row in rows if row["epsilon"] > 0.0)
    results = {
        "trajectory": rows,
        "floor": PERTURB_FLOOR,
        "claim_checked": claim_checked,
        "claim_holds": bool(holds) if claim_checked else None,
    }
    _write_report(
        outdir, "perturb", {"epsilon": args.epsilon, "seed": args.seed},
        {"trials": args.trials}, results, started,
    )
    if claim_checked and not holds:
        return EXIT_CLAIM_FAILS
    return EXIT_OK


def cmd_seesaw(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    cfg = SeesawConfig(
        restarts=args.restarts,
        max_sweeps=args.sweeps,
        seed=args.seed,
        init_v=args.init,
        target_value=args.target,
    )
    trace = seesaw_run(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    save_json(outdir / "seesaw_trace.json", trace_to_json(trace))
    reached = trace.best_value <= cfg.target_value
    results = {
        "best_value": _result(trace.best_value, cfg.solver.gap_tol),
        "best_restart": trace.best.index,
        "restarts_run": len(trace.outcomes),
        "failed_restarts": trace.failed_count,
        "target": cfg.target_value,
        "target_reached": bool(reached),
    }
    _write_report(outdir, "seesaw run", dataclasses.asdict(cfg), {}, results, started)
    print(
        f"best value {trace.best_value:+.9f} from restart {trace.best.index} "
        f"({len(trace.outcomes)} run, {trace.failed_count} failed)"
        + ("" if reached else "  [target missed]")
    )
    return EXIT_OK


def cmd_oracle(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    first, second, outer = reference_functionals()
    chsh = normalized_chsh()
    suite = [
        ("first generator", first, three_setting_pair_model()),
        ("second generator", second, three_setting_pair_model()),
        ("outer functional", outer, tsirelson_model()),
        ("normalized CHSH", chsh, tsirelson_model()),
    ]
    rows = []
    print(f"{'functional':>18} {'det min':>10} {'det max':>10} {'aq min':>12} {'aq max':>12} {'quantum':>12}")
    for name, functional, model in suite:
        det_lo, det_hi = deterministic_range(functional)
        aq_lo = aq_extremize(functional, "min").value
        aq_hi = aq_extremize(functional, "max").value
        q = quantum_value(functional, model)
        rows.append(
            {"name": name, "det": [det_lo, det_hi], "aq": [aq_lo, aq_hi], "quantum": q}
        )
        print(f"{name:>18} {det_lo:>10.6f} {det_hi:>10.6f} {aq_lo:>12.8f} {aq_hi:>12.8f} {q:>12.8f}")
    residuals = {}
    for scn in (make_scenario(2, 2, 2), make_scenario(2, 3, 2), make_scenario(3, 3, 2)):
        structure = build_moment_structure(scn)
        gamma = trace_moment_matrix(structure)
        residuals[str(scn.settings)] = {
            "constraint_residual": constraint_residual(structure, gamma),
            "agreement": float(np.abs(gamma - strictly_feasible_point(structure)).max()),
            "min_eigenvalue": float(np.linalg.eigvalsh(gamma).min()),
        }
    print("interior-point residuals:", json.dumps(residuals, indent=1))
    _write_report(outdir, "oracle", {}, {}, {"table": rows, "interior": residuals}, started)
    return EXIT_OK


def cmd_dump_reference(args) -> int:
    started = time.monotonic()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    first, second, outer = reference_functionals()
    save_json(outdir / "reference_first.json", functional_to_json(first))
    save_json(outdir / "reference_second.json", functional_to_json(second))
    save_json(outdir / "reference_outer.json", functional_to_json(outer))
    save_json(outdir / "reference_composed.json", functional_to_json(reference_composed_functional()))
    files = ["reference_first.json", "reference_second.json", "reference_outer.json", "reference_composed.json"]
    _write_report(outdir, "dump-reference", {}, {}, {"files": files}, started)
    print("\n".join(str(outdir / f) for f in files))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqbell", description=__doc__)
    parser.add_argument("--out", default="aqbell_out", help="output directory for reports and artifacts")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="test whether a functional is normalized over the set")
    p.add_argument("functional", help="functional JSON file")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("aq", help="extremize a functional over the almost-quantum set")
    p.add_argument("sense", choices=("min", "max"))
    p.add_argument("functional")
    p.add_argument("--tol", type=float, default=1e-8, help="solver gap tolerance")
    p.set_defaults(func=cmd_aq)

    p = sub.add_parser("compose", help="compose an outer functional with a two-outcome family")
    p.add_argument("--u", action="append", help="family generator JSON (repeatable)")
    p.add_argument("--v", help="outer functional JSON")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("reproduce", help="recompute the bundled composed functional's negative floor")
    p.add_argument("--tol", type=float, default=1e-8, help="solver gap tolerance")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("perturb", help="noise-robustness probe of the composed floor")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=2)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("seesaw", help="alternating search for violating blocks")
    seesaw_sub = p.add_subparsers(dest="seesaw_command", required=True)
    q = seesaw_sub.add_parser("run")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--restarts", type=int, default=20)
    q.add_argument("--sweeps", type=int, default=60)
    q.add_argument("--init", choices=("reference", "random"), default="reference")
    q.add_argument("--target", type=float, default=-0.001)
    q.set_defaults(func=cmd_seesaw)

    p = sub.add_parser("oracle", help="print the independent cross-check table")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("dump-reference", help="write the bundled functionals as JSON")
    p.set_defaults(func=cmd_dump_reference)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (json.JSONDecodeError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except NoWorkError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except SolverFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AqbellError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
