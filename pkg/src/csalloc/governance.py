"""Audit bundle emission and the static governance report.

Every artifact is canonical JSON (sorted keys, stable ordering) so a
re-run with the same case and seed is byte-identical except for the
single generated timestamp in the run manifest; run_manifest.json lists
the SHA-256 of each artifact over those canonical bytes.  The HTML
report is rendered from the artifact files alone, never from in-memory
state.
"""

from __future__ import annotations

import hashlib
import html
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional

from . import __version__
from .case import CaseInput, case_hash, case_to_dict, canonical_json, cents_to_dollars
from .certifier import CertificationReport
from .explorer import EDGE_EPS, HybridResult, SaParams
from .objective import breakdown
from .requirement import Allocation, BStarReport, check_feasible

__all__ = ["emit_bundle", "render_report", "ARTIFACT_FILES"]

ARTIFACT_FILES = (
    "results.json",
    "valuation_audit.json",
    "weights_provenance.json",
    "certifier_trace.json",
    "span_citations.json",
)


def _write(path: Path, obj) -> str:
    data = canonical_json(obj)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def _model_entry(case: CaseInput, alloc: Allocation) -> dict:
    bd = breakdown(alloc, case)
    report = check_feasible(alloc, case)
    return {
        "lots": list(alloc.lots),
        "coverage": cents_to_dollars(alloc.coverage_cents(case)),
        "feasible": report.feasible,
        "flags": sorted(report.flags),
        "breakdown": bd.as_dict(),
    }


def emit_bundle(
    case: CaseInput,
    baseline_results: Mapping[str, Allocation],
    hybrid: Optional[HybridResult],
    certification: Optional[CertificationReport],
    b_star: Optional[BStarReport],
    out_dir: str | Path,
) -> Path:
    """Write the governance artifacts for one run and render the report.

    Emits the valuation audit, weights provenance, per-jump model
    manifests, the certifier trace (with B* in USD and bps), results with
    per-model objective breakdowns, pass-through span citations, and the
    run manifest with reproducibility hashes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hashes: dict[str, str] = {}

    audit_rows = []
    ineligible = []
    for i, item in enumerate(case.inventory):
        if case.eligible[i]:
            regime = case.regime.resolve(item.bucket)
            hc_ppm = case.haircuts.lookup(item.icad or item.asset_class, item.bucket, regime)
            audit_rows.append({
                "item": item.id,
                "icad": item.icad or item.asset_class,
                "bucket": item.bucket,
                "regime": regime,
                "haircut": (hc_ppm or 0) / 1e6,
                "lot_value": cents_to_dollars(case.v_cents[i] or 0),
            })
        else:
            ineligible.append(item.id)
    hashes["valuation_audit.json"] = _write(
        out / "valuation_audit.json", {"rows": audit_rows, "ineligible": ineligible}
    )

    prov = case.weights.provenance
    hashes["weights_provenance.json"] = _write(out / "weights_provenance.json", {
        "lambda": case.weights.lam,
        "mu": case.weights.mu,
        "gamma": case.weights.gamma,
        "units": {"lambda": "$/lot", "mu": "dimensionless", "gamma": "1/day"},
        "calibration_inputs": None if prov is None else prov.calibration_inputs(),
        "content_hash": None if prov is None else prov.content_hash,
        "timestamp": None if prov is None else prov.timestamp,
    })

    manifests = hybrid.jump_manifests if hybrid is not None else ()
    for k, manifest in enumerate(manifests, start=1):
        name = f"qubo_manifest_{k}.json"
        hashes[name] = _write(out / name, manifest.as_dict())

    trace_doc = {"b_star": None} if certification is None else certification.as_dict()
    if b_star is not None:
        trace_doc["b_star"] = {
            "b_star_greedy": cents_to_dollars(b_star.b_star_greedy_cents),
            "b_star_exact": (
                None if b_star.b_star_exact_cents is None
                else cents_to_dollars(b_star.b_star_exact_cents)
            ),
            "b_star_bps": b_star.b_star_bps,
            "infeasible_u_cap": b_star.infeasible_u_cap,
        }
    hashes["certifier_trace.json"] = _write(out / "certifier_trace.json", trace_doc)

    models = {name: _model_entry(case, alloc) for name, alloc in baseline_results.items()}
    if hybrid is not None:
        models["hybrid"] = _model_entry(case, hybrid.best)
        models["hybrid"]["seed_j"] = hybrid.seed_j
        models["hybrid"]["iterations"] = hybrid.iterations
    bl3_j = models.get("bl3", {}).get("breakdown", {}).get("j_total")
    for entry in models.values():
        j = entry["breakdown"]["j_total"]
        entry["j_ratio_vs_bl3"] = (j / bl3_j) if bl3_j else None
    hashes["results.json"] = _write(out / "results.json", {
        "models": models,
        "trace": [] if hybrid is None else [
            {"iteration": ev.iteration, "j": ev.j, "event": ev.event} for ev in hybrid.trace
        ],
        "warnings": list(case.warnings),
        "r_eff": cents_to_dollars(case.r_eff_cents),
        "exposure": cents_to_dollars(case.exposure_cents),
    })

    hashes["span_citations.json"] = _write(
        out / "span_citations.json", {"citations": list(case.span_citations)}
    )

    limits = case.limits
    _write(out / "run_manifest.json", {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "case_hash": case_hash(case),
        "seed": limits.seed,
        "solver_limits": case_to_dict(case)["solver"]["limits"],
        "defaults_in_force": {
            "sa_initial_temp": "2 * |J(seed)| * 0.01",
            "sa_cooling": SaParams.for_seed_j(1.0).cooling_factor,
            "sa_moves_per_temp": SaParams.for_seed_j(1.0).moves_per_temp,
            "sa_move_weights": list(SaParams.for_seed_j(1.0).move_weights),
            "edge_prune_eps": EDGE_EPS,
            "penalty_weights": "A_w = 10*max|c|*r, A_c = A_w, A_x = A_w/10, A_4 = A_w/20",
            "bl3_neighborhood": "pairwise swaps plus single-lot removals",
            "bl2_bucket_order": "after-haircut capacity descending",
        },
        "artifact_hashes": dict(sorted(hashes.items())),
    })

    render_report(out)
    return out


# ---------------------------------------------------------------------------
# report rendering (from artifact files only)
# ---------------------------------------------------------------------------


def _load(out: Path, name: str):
    path = out / name
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError:
        return None


def _fmt(x, digits=2) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:,.{digits}f}"
    return str(x)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    head = "".join(f"<th>{html.escape(h)}</th>" for h in headers)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(str(c))}</td>" for c in row) + "</tr>"
        for row in rows
    )
    return f"<table><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>"


def _missing(name: str) -> str:
    return f'<p class="warn">artifact {html.escape(name)} is missing; section skipped</p>'


def render_report(bundle_dir: str | Path) -> Path:
    """Assemble report.html from the bundle artifacts; a missing artifact
    renders a placeholder warning instead of failing."""
    out = Path(bundle_dir)
    results = _load(out, "results.json")
    audit = _load(out, "valuation_audit.json")
    weights = _load(out, "weights_provenance.json")
    trace = _load(out, "certifier_trace.json")
    manifest = _load(out, "run_manifest.json")

    sections: list[str] = []

    if results and results.get("warnings"):
        banner = "; ".join(results["warnings"])
        sections.append(f'<div class="banner">&#9888; {html.escape(banner)}</div>')

    sections.append("<h2>Objective breakdown</h2>")
    if results is None:
        sections.append(_missing("results.json"))
    else:
        rows = []
        for name in ("bl1", "bl2", "bl3", "hybrid"):
            entry = results["models"].get(name)
            if entry is None:
                continue
            bd = entry["breakdown"]
            rows.append([
                name.upper(), _fmt(bd["base_cost_per_day"]), _fmt(bd["movement_lots"], 0),
                _fmt(bd["cvar"]), _fmt(bd["overshoot"]), _fmt(bd["j_total"], 4),
                _fmt(entry.get("j_ratio_vs_bl3"), 4),
                "yes" if entry["feasible"] else "no",
            ])
        sections.append(_table(
            ["Model", "BaseCost [$/day]", "Movement [lots]", "CVaR [$]",
             "Overshoot [$]", "J", "J / BL-3", "Feasible"], rows))

    sections.append("<h2>Valuation audit</h2>")
    if audit is None:
        sections.append(_missing("valuation_audit.json"))
    else:
        rows = [
            [r["item"], r["icad"], r["bucket"], r["regime"],
             f"{r['haircut']:.4%}", _fmt(r["lot_value"])]
            for r in audit["rows"]
        ]
        sections.append(_table(
            ["Instrument", "ICAD", "Bucket", "Regime", "Haircut", "Lot value [$]"], rows))
        if audit.get("ineligible"):
            sections.append(
                "<p>Ineligible (excluded from all variable sets): "
                + html.escape(", ".join(audit["ineligible"])) + "</p>")

    sections.append("<h2>Weights</h2>")
    if weights is None:
        sections.append(_missing("weights_provenance.json"))
    else:
        rows = [
            ["lambda [$/lot]", _fmt(weights["lambda"], 6)],
            ["mu [-]", _fmt(weights["mu"], 6)],
            ["gamma [1/day]", f"{weights['gamma']:.6g}"],
            ["calibration hash", weights.get("content_hash") or "-"],
        ]
        inputs = weights.get("calibration_inputs") or {}
        rows.extend([[f"input: {k}", _fmt(v)] for k, v in sorted(inputs.items())])
        sections.append(_table(["Quantity", "Value"], rows))

    sections.append("<h2>Jump timeline</h2>")
    if results is None:
        sections.append(_missing("results.json"))
    else:
        jumps = [ev for ev in results["trace"] if ev["event"].startswith("jump")]
        if not jumps:
            sections.append("<p>no jumps fired</p>")
        else:
            rows = [[str(ev["iteration"]), ev["event"], _fmt(ev["j"], 4)] for ev in jumps]
            sections.append(_table(["Iteration", "Event", "J"], rows))

    sections.append("<h2>Certification</h2>")
    if trace is None:
        sections.append(_missing("certifier_trace.json"))
    else:
        rows = [
            ["status", trace.get("status", "-")],
            ["incumbent J", _fmt(trace.get("incumbent_j"), 6)],
            ["best bound", _fmt(trace.get("best_bound"), 6)],
            ["gap", _fmt(trace.get("gap"), 6)],
            ["nodes explored", _fmt(trace.get("nodes_explored"), 0)],
        ]
        b_star = trace.get("b_star")
        if b_star:
            rows.append(["B* greedy [$]", _fmt(b_star["b_star_greedy"])])
            rows.append(["B* exact [$]", _fmt(b_star["b_star_exact"])])
            rows.append(["B* [bps]", _fmt(b_star["b_star_bps"])])
            rows.append(["infeasible_u_cap", str(b_star["infeasible_u_cap"])])
        slacks = trace.get("slacks") or {}
        rows.extend([[f"slack: {cid}", _fmt(s)] for cid, s in sorted(slacks.items())])
        sections.append(_table(["Field", "Value"], rows))

    meta = ""
    if manifest:
        meta = f"case {manifest.get('case_hash', '')[:12]} seed {manifest.get('seed')}"

    page = f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Collateral allocation report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; color: #222; }}
table {{ border-collapse: collapse; margin: 1em 0; }}
th, td {{ border: 1px solid #999; padding: 4px 10px; text-align: right; }}
th {{ background: #eee; }}
td:first-child, th:first-child {{ text-align: left; }}
.banner {{ background: #fff3cd; border: 1px solid #d4b106; padding: 8px; }}
.warn {{ color: #a00; }}
</style></head>
<body>
<h1>Collateral allocation report</h1>
<p>{html.escape(meta)}</p>
{''.join(sections)}
</body></html>
"""
    path = out / "report.html"
    path.write_text(page)
    return path
