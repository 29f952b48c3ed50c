"""Batch command line: validate / optimize / certify / bstar / sweep / gen / report.

`optimize` runs the full explore -> prove -> explain pipeline and exits
0 on OPTIMAL/FEASIBLE, 2 on INFEASIBLE (B* lands in the bundle), 1 on
input errors.  Sweeps re-run the pipeline per weight value and write a
frontier summary next to the per-point bundles.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .case import CaseError, CaseInput, canonical_json, case_to_dict, parse_case, cents_to_dollars
from .baselines import bl1_density_greedy, bl2_bucket_first, bl3_two_opt
from .certifier import certify, ucap_precheck
from .explorer import InfeasibleCaseError, hybrid_optimize
from .generator import GenSpec, case_bytes
from .governance import emit_bundle, render_report

__all__ = ["main", "run_pipeline"]


def _add_case_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="path to the case file (JSON)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--regime", choices=["sp", "m1", "m2"], default=None)
    p.add_argument("--buffer-bps", type=float, default=None)
    p.add_argument("--cash-cap", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--p", dest="depth_p", type=int, default=None)
    p.add_argument("--sa-iters", type=int, default=None)
    p.add_argument("--plateau-s", type=int, default=None)
    p.add_argument("--wall-seconds", type=float, default=None)


def _load_case(args: argparse.Namespace) -> CaseInput:
    raw = Path(args.case).read_bytes()
    case = parse_case(raw)
    doc = case_to_dict(case)

    if args.regime is not None:
        doc["csa"]["regime"]["default"] = args.regime
    if args.buffer_bps is not None:
        doc["window"]["buffer"] = f"{args.buffer_bps:g}bps"
    if args.cash_cap is not None:
        doc["caps"]["cash_cap"] = {"mode": "fraction_of_U", "value": args.cash_cap}
    for name, value in (("lambda", args.lam), ("mu", args.mu), ("gamma", args.gamma)):
        if value is not None:
            doc.setdefault("weights", {})[name] = value
    limits = doc["solver"]["limits"]
    for key, value in (
        ("seed", args.seed), ("n_max", args.n_max), ("k_max", args.k_max),
        ("depth_p", args.depth_p), ("sa_iterations", args.sa_iters),
        ("plateau_window", args.plateau_s), ("wall_seconds", args.wall_seconds),
    ):
        if value is not None:
            limits[key] = value
    return parse_case(canonical_json(doc))


def run_pipeline(case: CaseInput, out_dir: str | Path, jumps: bool = True) -> int:
    """validate -> baselines -> hybrid -> ucap precheck -> certify -> bundle."""
    bl1 = bl1_density_greedy(case)
    bl2 = bl2_bucket_first(case)
    bl3 = bl3_two_opt(case, bl1)
    baselines = {"bl1": bl1, "bl2": bl2, "bl3": bl3}

    hybrid = None
    b_star = None
    try:
        hybrid = hybrid_optimize(case, case.limits, jumps=jumps)
        incumbent = hybrid.best
    except InfeasibleCaseError as exc:
        b_star = exc.b_star
        incumbent = bl3

    certification = certify(case, incumbent, case.limits)
    if b_star is None:
        b_star = certification.b_star
    emit_bundle(case, baselines, hybrid, certification, b_star, out_dir)
    print(f"status={certification.status} bundle={out_dir}")
    return 0 if certification.status in ("OPTIMAL", "FEASIBLE") else 2


def _cmd_validate(args) -> int:
    case = _load_case(args)
    print(f"ok: {case.n_items} items, R_eff = {cents_to_dollars(case.r_eff_cents):,.2f}")
    for w in case.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _cmd_optimize(args) -> int:
    case = _load_case(args)
    return run_pipeline(case, args.out, jumps=not args.no_jump)


def _cmd_certify(args) -> int:
    case = _load_case(args)
    incumbent = bl3_two_opt(case, bl1_density_greedy(case))
    report = certify(case, incumbent, case.limits)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certifier_trace.json").write_bytes(canonical_json(report.as_dict()))
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0 if report.status in ("OPTIMAL", "FEASIBLE") else 2


def _cmd_bstar(args) -> int:
    case = _load_case(args)
    report = ucap_precheck(case)
    print(json.dumps({
        "b_star_greedy": cents_to_dollars(report.b_star_greedy_cents),
        "b_star_exact": (
            None if report.b_star_exact_cents is None
            else cents_to_dollars(report.b_star_exact_cents)
        ),
        "b_star_bps": report.b_star_bps,
        "infeasible_u_cap": report.infeasible_u_cap,
    }, indent=2, sort_keys=True))
    return 2 if report.infeasible_u_cap else 0


def _cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    frontier = []
    worst = 0
    for idx, value in enumerate(values):
        setattr(args, {"gamma": "gamma", "mu": "mu", "lambda": "lam"}[args.param], value)
        case = _load_case(args)
        point_dir = out_root / f"{args.param}_{idx}"
        code = run_pipeline(case, point_dir, jumps=not args.no_jump)
        worst = max(worst, code)
        results = json.loads((point_dir / "results.json").read_text())
        entry = results["models"].get("hybrid") or results["models"]["bl3"]
        bd = entry["breakdown"]
        frontier.append({
            "param": args.param,
            "value": value,
            "j_total": bd["j_total"],
            "base_cost_per_day": bd["base_cost_per_day"],
            "movement_lots": bd["movement_lots"],
            "cvar": bd["cvar"],
            "overshoot": bd["overshoot"],
            "exit_code": code,
        })
    (out_root / "frontier_summary.json").write_bytes(canonical_json({"points": frontier}))
    print(f"sweep complete: {len(values)} points -> {out_root}")
    return worst


def _cmd_gen(args) -> int:
    spec = GenSpec(
        n_items=args.n_items,
        exposure_scale=args.exposure_scale,
        regime=args.regime or "m1",
        buffer_bps=int(args.buffer_bps) if args.buffer_bps is not None else None,
        cash_cap=args.cash_cap if args.cash_cap is not None else 0.20,
        cap_tightness=args.cap_tightness,
        scenario_count=args.scenarios,
        seed=args.seed or 0,
        profile=args.profile,
        mta=args.mta,
    )
    data = case_bytes(spec)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out} ({len(data)} bytes)")
    return 0


def _cmd_report(args) -> int:
    path = render_report(args.bundle)
    print(f"rendered {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csalloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a case file")
    _add_case_flags(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("optimize", help="full explore -> prove -> explain pipeline")
    _add_case_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-jump", action="store_true", help="pure-SA ablation")
    p.add_argument("--must-jump", action="store_true",
                   help="force a jump attempt per plateau (the default)")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("certify", help="certify the BL-3 incumbent")
    _add_case_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("bstar", help="minimal feasible buffer report")
    _add_case_flags(p)
    p.set_defaults(func=_cmd_bstar)

    p = sub.add_parser("sweep", help="re-run the pipeline across weight values")
    _add_case_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--param", choices=["gamma", "mu", "lambda"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--no-jump", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen", help="generate a synthetic case file")
    p.add_argument("--out", required=True)
    p.add_argument("--n-items", type=int, default=8)
    p.add_argument("--exposure-scale", type=float, default=0.6)
    p.add_argument("--regime", choices=["sp", "m1", "m2"], default="m1")
    p.add_argument("--buffer-bps", type=float, default=None)
    p.add_argument("--cash-cap", type=float, default=None)
    p.add_argument("--cap-tightness", type=float, default=0.0)
    p.add_argument("--scenarios", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=["desk", "tiny"], default="desk")
    p.add_argument("--mta", type=float, default=0.0)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("report", help="re-render report.html from a bundle")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CaseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
