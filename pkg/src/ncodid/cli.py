"""Command-line pipeline: validate, match, estimate, stratify, qq, simulate, report.

Every command writes into ``--output-dir``. Artifacts are byte-stable for a
fixed configuration: JSON is written with sorted keys, no timestamps and no
absolute paths.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dataset import (
    DEFAULT_EVALUATION_YEAR,
    CovariateSchema,
    Dataset,
    DatasetError,
    NcoError,
    NcoSpec,
    SchemaError,
    build_nco,
    load_dataset,
    paper_schema,
    validate_schema,
    write_dataset,
)
from .dgp import DgpConfig, DgpError, generate, population_atet, true_atet
from .estimators import (
    DID_ADJUSTED,
    DID_NCO,
    QQ,
    UNADJUSTED,
    EstimationError,
    atet_unmatched,
    qq_curve,
)
from .inference import (
    DEFAULT_REPLICATES,
    EffectEstimate,
    EstimationData,
    StratumSpec,
    bootstrap_ci,
    citation_strata,
    estimates_to_csv,
    institution_strata,
    overlap_report,
    replicate_rng,
    stratified_estimates,
)
from .matcher import MatchedSample, MatchingInfeasible, MatchSpec, match_dataset, verify_balance
from .plot import ForestLayout, render_forest_plot

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2

ESTIMATOR_FLAGS = {"unadj": UNADJUSTED, "did": DID_NCO, "did-adj": DID_ADJUSTED, "qq": QQ}
SEED_ENV = "NCODID_SEED"
UNADJ_PANEL = "unadj"


class ValidationFailure(Exception):
    """Input failed validation; maps to exit code 2."""

    def __init__(self, message: str, detail: Any = None):
        super().__init__(message)
        self.detail = detail


# ---------------------------------------------------------------------------
# io helpers


def _clean(obj: Any) -> Any:
    """JSON-safe copy: NaN and inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def file_digest(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _input_info(path: Path) -> dict:
    return {"name": path.name, "digest": file_digest(path)}


def _load_schema(args) -> CovariateSchema:
    if args.schema is None:
        return paper_schema()
    try:
        return CovariateSchema.from_json(args.schema)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationFailure(f"cannot read schema {Path(args.schema).name}: {exc}") from None


def _load_validated(args) -> tuple[Dataset, Path]:
    if args.input is None:
        raise ValidationFailure("--input is required")
    path = Path(args.input)
    if not path.is_file():
        raise ValidationFailure(f"input file not found: {path.name}")
    dataset = load_dataset(path, _load_schema(args))
    report = validate_schema(dataset)
    if not report.ok:
        first = report.violations[0]
        raise ValidationFailure(
            f"{len(report.violations)} schema violations; first at record {first.record_id!r}, column {first.column!r}",
            report.to_dict(),
        )
    return dataset, path


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        raise ValidationFailure(f"a seed is required: pass --seed or set {SEED_ENV}")
    try:
        return int(env)
    except ValueError:
        raise ValidationFailure(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _matched_path(args) -> Path:
    return Path(args.matched) if args.matched else Path(args.output_dir) / "matched.json"


def _load_matched(args) -> MatchedSample:
    path = _matched_path(args)
    if not path.is_file():
        raise ValidationFailure(f"matched sample not found: {path.name} (run `match` first)")
    text = path.read_text(encoding="utf-8")
    try:
        return MatchedSample.from_csv(text) if path.suffix == ".csv" else MatchedSample.from_json(text)
    except (ValueError, KeyError) as exc:
        raise ValidationFailure(f"malformed matched sample {path.name}: {exc}") from None


def _common_config(args, command: str, input_path: Path | None) -> dict:
    cfg = {"command": command, "tool_version": __version__}
    if input_path is not None:
        cfg["input"] = _input_info(input_path)
    if getattr(args, "schema", None):
        cfg["schema"] = _input_info(Path(args.schema))
    return cfg


def _nco_panel(dataset: Dataset, matched: MatchedSample, args) -> tuple[NcoSpec | None, Dataset, MatchedSample]:
    """Build the binary NCO on the matched records and keep pairs whose records are all eligible."""
    if args.nco_years is None:
        return None, dataset, matched
    in_pairs = set(matched.treated_ids) | set(matched.control_ids)
    missing = in_pairs - set(dataset.ids)
    if missing:
        raise ValidationFailure(f"matched sample references unknown ids, e.g. {sorted(missing)[0]!r}")
    spec, nco_data = build_nco(dataset.subset(in_pairs), args.nco_years, args.nco_quantile,
                               args.evaluation_year)
    ids = set(nco_data.ids)
    kept = matched.restrict(lambda t, c: t in ids and c in ids)
    if not len(kept):
        raise ValidationFailure(f"no matched pairs with year <= {spec.eligible_year_cutoff}")
    return spec, nco_data, kept


def _panel_name(spec: NcoSpec | None, estimator: str) -> str:
    if spec is None:
        return UNADJ_PANEL
    if estimator == QQ:
        return f"qq_n{spec.window_years}"
    return spec.label


def _boot(args) -> dict:
    return {"replicates": args.bootstrap, "level": args.level, "seed": _seed(args)}


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    path = Path(args.input) if args.input else None
    if path is None or not path.is_file():
        raise ValidationFailure("--input must name an existing file")
    dataset = load_dataset(path, _load_schema(args))
    report = validate_schema(dataset)
    out = {
        "config": _common_config(args, "validate", path),
        "load_report": dataset.load_report.to_dict() if dataset.load_report else None,
        "validation": report.to_dict(),
    }
    write_text(Path(args.output_dir) / "validation.json", dump_json(out))
    if not report.ok:
        raise ValidationFailure(f"{len(report.violations)} schema violations", report.to_dict())
    return EXIT_OK


def cmd_match(args) -> int:
    dataset, path = _load_validated(args)
    spec = MatchSpec.from_schema(dataset.schema, caliper=args.caliper)
    matched = match_dataset(dataset, spec)
    out_dir = Path(args.output_dir)
    write_text(out_dir / "matched.json", matched.to_json())
    write_text(out_dir / "matched.csv", matched.to_csv())
    bal = verify_balance(dataset, matched, args.smd_threshold)
    balance = {"config": _common_config(args, "match", path), **bal.to_dict()}
    write_text(out_dir / "balance.json", dump_json(balance))
    write_text(out_dir / "balance.csv", bal.table.to_csv())
    write_text(out_dir / "balance.txt", bal.table.render())
    return EXIT_OK


def _bootstrap_unmatched(dataset: Dataset, replicates: int, level: float, seed: int) -> EffectEstimate:
    """Whole-sample treated-minus-control difference with arm-wise resampling."""
    point = atet_unmatched(dataset)
    y_t = np.array([r.outcome for r in dataset.records if r.treatment], dtype=float)
    y_c = np.array([r.outcome for r in dataset.records if not r.treatment], dtype=float)
    draws = np.empty(replicates)
    for b in range(replicates):
        rng = replicate_rng(seed, b)
        draws[b] = y_t[rng.integers(0, y_t.size, y_t.size)].mean() - y_c[rng.integers(0, y_c.size, y_c.size)].mean()
    alpha = 1 - level
    lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    return EffectEstimate(point, float(lo), float(hi), level, replicates, seed, 0, "unmatched")


def _merge_panel(path: Path, panel: dict, new: Sequence[EffectEstimate]) -> dict:
    """Replace same-estimator entries of an existing panel file; keep the rest."""
    entries = []
    if path.is_file():
        old = json.loads(path.read_text(encoding="utf-8"))
        keys = {(e.point.estimator, e.label) for e in new}
        entries = [e for e in old.get("estimates", []) if (e["point"]["estimator"], e["label"]) not in keys]
        panel["runs"] = [r for r in old.get("runs", []) if r.get("estimator") not in {e.point.estimator for e in new}]
    else:
        panel["runs"] = []
    entries += [e.to_dict() for e in new]
    order = {UNADJUSTED: 0, DID_NCO: 1, DID_ADJUSTED: 2, QQ: 3}
    entries.sort(key=lambda e: (e["label"] != "", order[e["point"]["estimator"]], e["label"]))
    panel["estimates"] = entries
    return panel


def cmd_estimate(args) -> int:
    dataset, path = _load_validated(args)
    estimator = ESTIMATOR_FLAGS[args.estimator]
    boot = _boot(args)
    if estimator in (DID_NCO, DID_ADJUSTED, QQ) and args.nco_years is None:
        raise ValidationFailure(f"--estimator {args.estimator} needs --nco-years")
    config = {**_common_config(args, "estimate", path), "estimator": estimator, "bootstrap": boot,
              "unmatched": bool(args.unmatched), "evaluation_year": args.evaluation_year}
    out_dir = Path(args.output_dir)

    if args.unmatched:
        if estimator != UNADJUSTED:
            raise ValidationFailure("--unmatched applies to the unadjusted estimator only")
        data = dataset
        if args.nco_years is not None:
            data = dataset.filter(lambda r: r.year <= args.evaluation_year - args.nco_years)
        est = _bootstrap_unmatched(data, **boot)
        panel = "unmatched" if args.nco_years is None else f"unmatched_n{args.nco_years}"
        target = out_dir / "estimates" / f"{panel}.json"
        body = _merge_panel(target, {"panel": panel, "nco": None}, [est])
        body["runs"].append(config)
        write_text(target, dump_json(body))
        return EXIT_OK

    matched = _load_matched(args)
    spec, nco_data, kept = _nco_panel(dataset, matched, args)
    if estimator == QQ:
        spec = replace(spec, quantile=math.nan, threshold=math.nan) if spec else None
    config["nco"] = {"window_years": args.nco_years,
                     "quantile": args.nco_quantile if estimator != QQ else None}
    data = EstimationData.from_dataset(nco_data, spec, count_window=args.nco_years,
                                       with_design=estimator == DID_ADJUSTED)
    results = []
    if estimator != UNADJUSTED:
        # every panel carries the unadjusted row on the same pairs
        results.append(bootstrap_ci(kept, data, UNADJUSTED, workers=args.workers, **boot))
    results.append(bootstrap_ci(kept, data, estimator, workers=args.workers, **boot))
    name = _panel_name(spec, estimator) if estimator != UNADJUSTED or args.nco_years is None \
        else f"unadj_n{args.nco_years}"
    target = out_dir / "estimates" / f"{name}.json"
    body = _merge_panel(target, {"panel": name, "nco": spec.to_dict() if spec else None}, results)
    body["runs"].append(config)
    body["runs"].sort(key=lambda r: r["estimator"])
    write_text(target, dump_json(body))
    return EXIT_OK


def _stratum_spec(args) -> StratumSpec:
    by = args.stratify_by
    if by == "institution" and args.bins is None:
        return institution_strata()
    if by == "citations" and args.bins is None:
        return citation_strata()
    variable = {"institution": institution_strata().variable, "citations": citation_strata().variable}.get(by, by)
    if args.bins is None:
        raise ValidationFailure(f"--bins is required for custom stratification variable {by!r}")
    try:
        edges = tuple(float(e) for e in args.bins.split(","))
    except ValueError:
        raise ValidationFailure(f"--bins must be comma-separated numbers, got {args.bins!r}") from None
    labels = [f"<={edges[0]:g}"] + [f"({a:g},{b:g}]" for a, b in zip(edges, edges[1:])] + [f">{edges[-1]:g}"]
    try:
        return StratumSpec(variable, edges, tuple(labels))
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from None


def cmd_stratify(args) -> int:
    dataset, path = _load_validated(args)
    estimator = ESTIMATOR_FLAGS[args.estimator]
    if args.stratify_by is None:
        raise ValidationFailure("stratify needs --stratify-by")
    if estimator != UNADJUSTED and args.nco_years is None:
        raise ValidationFailure(f"--estimator {args.estimator} needs --nco-years")
    sspec = _stratum_spec(args)
    if sspec.variable not in dataset.schema:
        raise ValidationFailure(f"stratification variable {sspec.variable!r} not in schema")
    boot = _boot(args)
    matched = _load_matched(args)
    spec, nco_data, kept = _nco_panel(dataset, matched, args)
    if estimator == QQ and spec is not None:
        spec = replace(spec, quantile=math.nan, threshold=math.nan)
    rows = stratified_estimates(kept, nco_data, sspec, estimator, boot["replicates"], boot["level"], boot["seed"],
                                spec, args.nco_years)
    present = [r.estimate for r in rows[1:] if r.estimate is not None]
    overlap = overlap_report(present).tolist() if len(present) >= 2 else None
    panel = _panel_name(spec, estimator)
    body = {
        "config": {**_common_config(args, "stratify", path), "estimator": estimator, "bootstrap": boot,
                   "stratum_spec": sspec.to_dict(), "evaluation_year": args.evaluation_year},
        "panel": panel,
        "nco": spec.to_dict() if spec else None,
        "strata": [r.to_dict() for r in rows],
        "overlap": overlap,
        "overlap_labels": [r.label for r in rows[1:] if r.estimate is not None],
    }
    write_text(Path(args.output_dir) / "strata" / f"{args.stratify_by}__{panel}__{estimator}.json", dump_json(body))
    return EXIT_OK


def cmd_qq(args) -> int:
    dataset, path = _load_validated(args)
    if args.nco_years is None:
        raise ValidationFailure("qq needs --nco-years")
    boot = _boot(args)
    matched = _load_matched(args)
    cutoff = args.evaluation_year - args.nco_years
    eligible = dataset.filter(lambda r: r.year <= cutoff)
    ids = set(eligible.ids)
    kept = matched.restrict(lambda t, c: t in ids and c in ids)
    if not len(kept):
        raise ValidationFailure(f"no matched pairs with year <= {cutoff}")
    spec = NcoSpec(args.nco_years, math.nan, math.nan, cutoff, args.evaluation_year,
                   eligible.sample_id(), len(eligible))
    data = EstimationData.from_dataset(eligible, spec, count_window=args.nco_years)
    est = bootstrap_ci(kept, data, QQ, workers=args.workers, **boot)
    grid, curve = qq_curve(kept, data.outcomes, data.nco_counts)
    out_dir = Path(args.output_dir)
    body = {
        "config": {**_common_config(args, "qq", path), "bootstrap": boot, "evaluation_year": args.evaluation_year,
                   "nco_years": args.nco_years},
        "estimate": est.to_dict(),
        "curve": {"u": grid.tolist(), "qq": curve.tolist()},
    }
    write_text(out_dir / "qq.json", dump_json(body))
    lines = ["u,qq"] + [f"{u:.2f},{q!r}" for u, q in zip(grid.tolist(), curve.tolist())]
    write_text(out_dir / "qq_curve.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _seed(args)
    base = DgpConfig.from_file(args.config) if args.config else DgpConfig()
    overrides = {"seed": seed}
    if args.n_units is not None:
        overrides["n_units"] = args.n_units
    if args.mode is not None:
        overrides["equi_confounding_mode"] = args.mode
    if args.treatment_effect is not None:
        overrides["treatment_effect"] = args.treatment_effect
    config = replace(base, **overrides)
    dataset, units = generate(config)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, out_dir / "data.csv")
    write_text(out_dir / "schema.json", dump_json(dataset.schema.to_dict()))
    truth = {
        "config": config.to_dict(),
        "tool_version": __version__,
        "true_atet_sample": true_atet(units),
        "population_atet": population_atet(config),
        "n_treated": sum(r.treatment for r in dataset.records),
        "n_units": len(dataset),
        "note": "DGP parameter values are artifact choices, not fitted to real data",
    }
    write_text(out_dir / "truth.json", dump_json(truth))
    return EXIT_OK


def _load_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def cmd_report(args) -> int:
    out_dir = Path(args.output_dir)
    if not out_dir.is_dir():
        raise ValidationFailure(f"run directory not found: {out_dir.name}")
    report: dict[str, Any] = {"tool_version": __version__}
    if args.input:
        report["input"] = _input_info(Path(args.input))
    panels = {}
    csv_rows: list[tuple[str, EffectEstimate]] = []
    for f in sorted((out_dir / "estimates").glob("*.json")):
        body = _load_json(f)
        panels[body["panel"]] = body
        for e in body["estimates"]:
            csv_rows.append((body["panel"], EffectEstimate.from_dict(e)))
    strata = {}
    for f in sorted((out_dir / "strata").glob("*.json")):
        body = _load_json(f)
        strata[f.stem] = body
        for row in body["strata"]:
            if row["estimate"] is not None:
                est = EffectEstimate.from_dict(row["estimate"])
                csv_rows.append((f"strata:{f.stem}", est))
    qq_body = _load_json(out_dir / "qq.json") if (out_dir / "qq.json").is_file() else None
    if qq_body is not None:
        csv_rows.append(("qq", EffectEstimate.from_dict(qq_body["estimate"])))
    if not csv_rows:
        raise ValidationFailure("no estimates found in the run directory (run `estimate` first)")
    report["estimates"] = panels
    report["strata"] = strata
    report["qq"] = {"estimate": qq_body["estimate"], "config": qq_body["config"]} if qq_body else None
    for name in ("balance.json", "truth.json", "validation.json"):
        if (out_dir / name).is_file():
            report[name[:-5]] = _load_json(out_dir / name)
    if (out_dir / "matched.json").is_file():
        report["matched"] = {"digest": file_digest(out_dir / "matched.json"),
                             "n_pairs": len(_load_json(out_dir / "matched.json")["pairs"])}
    report["diagnostics"] = _diagnostics(panels, strata, qq_body, report)
    write_text(out_dir / "report.json", dump_json(report))
    write_text(out_dir / "estimates.csv", estimates_to_csv(csv_rows))
    if args.plot == "svg":
        for name, body in sorted(panels.items()):
            ests = [EffectEstimate.from_dict(e) for e in body["estimates"]]
            write_text(out_dir / "plots" / f"{name}.svg", render_forest_plot(ests, ForestLayout(title=name)))
        for name, body in sorted(strata.items()):
            ests = [EffectEstimate.from_dict(r["estimate"]) for r in body["strata"] if r["estimate"] is not None]
            write_text(out_dir / "plots" / f"strata_{name}.svg", render_forest_plot(ests, ForestLayout(title=name)))
        if qq_body is not None:
            est = EffectEstimate.from_dict(qq_body["estimate"])
            write_text(out_dir / "plots" / "qq.svg", render_forest_plot([est], ForestLayout(title="qq")))
    return EXIT_OK


def _diagnostics(panels: dict, strata: dict, qq_body: dict | None, report: dict) -> dict:
    diag: dict[str, Any] = {"estimator": {}, "failed_replicates": {}}
    for name, body in panels.items():
        for e in body["estimates"]:
            key = f"{name}/{e['point']['estimator']}"
            diag["estimator"][key] = e["point"]["diagnostics"]
            diag["failed_replicates"][key] = e["n_failed"]
    if qq_body is not None:
        diag["estimator"]["qq"] = qq_body["estimate"]["point"]["diagnostics"]
    load = (report.get("validation") or {}).get("load_report")
    if load is not None:
        diag["load"] = load
    return diag


# ---------------------------------------------------------------------------
# argument parsing

COMMANDS = {
    "validate": cmd_validate,
    "match": cmd_match,
    "estimate": cmd_estimate,
    "stratify": cmd_stratify,
    "qq": cmd_qq,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncodid", description="Matched-pair ATET with negative control outcomes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str, *, data=True, boot=False, nco=False, est=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--output-dir", default=".", help="directory for artifacts (default: current)")
        if data:
            p.add_argument("--input", help="study CSV")
            p.add_argument("--schema", help="covariate schema JSON (default: built-in conference schema)")
        if nco:
            p.add_argument("--nco-years", type=int, choices=(1, 2, 3), help="citation window n of the NCO")
            p.add_argument("--nco-quantile", type=float, default=0.5, help="threshold quantile q (default 0.5)")
            p.add_argument("--evaluation-year", type=int, default=DEFAULT_EVALUATION_YEAR)
            p.add_argument("--matched", help="matched sample (JSON or CSV; default OUTPUT_DIR/matched.json)")
        if est:
            p.add_argument("--estimator", choices=tuple(ESTIMATOR_FLAGS), default="unadj")
        if boot:
            p.add_argument("--bootstrap", type=int, default=DEFAULT_REPLICATES, help="bootstrap replicates")
            p.add_argument("--level", type=float, default=0.95, help="CI level")
            p.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV})")
            p.add_argument("--workers", type=int, default=1, help="threads for bootstrap replicates")
        return p

    add("validate", "check a study CSV against the schema")
    m = add("match", "optimal pair matching and the balance table")
    m.add_argument("--caliper", type=float, help="forbid pairs with distance above this value")
    m.add_argument("--smd-threshold", type=float, default=0.1)
    e = add("estimate", "ATET with bootstrap CI", boot=True, nco=True, est=True)
    e.add_argument("--unmatched", action="store_true", help="unadjusted difference over the whole sample")
    s = add("stratify", "per-subgroup estimates", boot=True, nco=True, est=True)
    s.add_argument("--stratify-by", help="institution, citations, or a covariate name")
    s.add_argument("--bins", help="comma-separated bin edges")
    add("qq", "QQ estimator and the qq(u) curve", boot=True, nco=True)
    sim = add("simulate", "write a synthetic study", data=False)
    sim.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV})")
    sim.add_argument("--config", help="DGP config (JSON or TOML)")
    sim.add_argument("--n-units", type=int)
    sim.add_argument("--mode", choices=("additive", "qq", "violated"))
    sim.add_argument("--treatment-effect", type=float)
    r = add("report", "collect a run directory into report.json, estimates.csv and plots")
    r.add_argument("--plot", choices=("svg", "none"), default="svg")
    return parser


def _error(kind: str, message: str, detail: Any = None) -> None:
    payload = {"error": kind, "message": message}
    if detail is not None:
        payload["detail"] = detail
    sys.stderr.write(dump_json(payload))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationFailure as exc:
        _error("validation", str(exc), exc.detail)
        return EXIT_VALIDATION
    except DatasetError as exc:
        _error("validation", str(exc), exc.to_dict())
        return EXIT_VALIDATION
    except (SchemaError, NcoError, DgpError) as exc:
        _error("validation", str(exc))
        return EXIT_VALIDATION
    except (MatchingInfeasible, EstimationError) as exc:
        _error("runtime", str(exc))
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - every failure becomes exit 1 with a JSON message
        _error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
