"""Command-line entry point: ``habmod <subcommand> --config <json>``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure. The thread count
defaults to the ``HABMOD_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import ensemble, harness, schemes
from .config import ExperimentConfig, load_experiment_data
from .data import load_dataset, write_dataset
from .errors import FoldError, HabmodError, ValidationError
from .learners import default_threads
from .synthetic import SyntheticSpec, generate_synthetic


def _load_config(path) -> ExperimentConfig:
    if path is None:
        raise ValidationError("--config is required for this subcommand")
    try:
        return ExperimentConfig.from_json(path)
    except FileNotFoundError:
        raise ValidationError(f"config not found: {path}") from None


def _with_output(cfg: ExperimentConfig, out) -> ExperimentConfig:
    if out is not None:
        cfg.output_dir = str(out)
    if cfg.output_dir is None:
        raise ValidationError("no output directory: set output_dir in the config or pass --out")
    return cfg


def cmd_synth(args) -> None:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    spec = SyntheticSpec.from_dict(raw.get("synthetic", raw))
    table, tax = generate_synthetic(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(table, out)
    out.with_suffix(".taxonomy.json").write_text(json.dumps(tax.to_dict(), indent=1))
    print(f"wrote {table.n} rows, {tax.n_leaves} leaves in {tax.n_formations} formations to {out}")


def cmd_cv(args) -> None:
    cfg = _with_output(_load_config(args.config), args.out)
    report = harness.run_cv(cfg, n_jobs=args.threads)
    for name, s in report["strategies"].items():
        agg = s["aggregate"]
        parts = [f"{k}={agg[k]['mean']:.3f}±{agg[k]['sd']:.3f}"
                 for k in ("top3", "top5", "coverage_error") if k in agg and agg[k]["mean"] is not None]
        print(f"{name}: " + " ".join(parts))
    print(f"report: {Path(cfg.output_dir) / 'report.json'}")


def cmd_fit(args) -> None:
    """Fit every ensemble member of one strategy on all rows and save them."""
    cfg = _with_output(_load_config(args.config), args.out)
    ctx = harness.prepare(cfg, args.threads)
    strategy = dict(_pick_strategy(cfg, args.strategy))
    if args.scheme:
        strategy["scheme"] = args.scheme
    if args.modalities:
        mods = args.modalities
        strategy["modalities"] = mods if mods.upper() in schemes.MASK_PRESETS else mods.upper().split(",")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = np.arange(ctx.table.n)
    if strategy["scheme"].upper() == "BIOGEO":
        sm = schemes.train_strategy("BIOGEO", ctx.table, ctx.taxonomy, strategy["modalities"])
        schemes.save_strategy(sm, out / "BIOGEO.json")
        spec = ensemble.EnsembleSpec(["BIOGEO"], [1.0])
    else:
        members = harness._fit_members(ctx, strategy, "final", rows)
        for mname, _, _, sm, _ in members:
            schemes.save_strategy(sm, out / f"{mname}.json")
        spec = ensemble.EnsembleSpec([m[0] for m in members], [m[2] for m in members])
    spec.write_manifest(out / "ensemble.json")
    print(f"saved {len(spec.members)} model(s) for {strategy['name']} to {out}")


def cmd_predict(args) -> None:
    model_dir = Path(args.model)
    spec = ensemble.EnsembleSpec.read_manifest(model_dir / "ensemble.json")
    models = [schemes.load_strategy(model_dir / f"{m}.json") for m in spec.members]
    tax = models[0].taxonomy
    data = args.data
    if data is None:
        cfg = _load_config(args.config)
        table, _ = load_experiment_data(cfg)
    else:
        table = load_dataset(data, tax, missing=args.missing)
        cats = [n.split("__", 1)[1] for n in models[0].feature_names if n.startswith("bioreg__")]
        if cats:
            table = table.with_bioregion_onehot(cats)
    joints = [schemes.predict_joint(m, table) for m in models]
    joint = ensemble.combine(joints, spec.weights)
    unc = ensemble.uncertainty(joint, joints)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["plot_id", "predicted"] + list(tax.leaves) + ["entropy", "disagreement"])
        for i in range(table.n):
            w.writerow([table.row_ids[i], tax.leaves[int(np.argmax(joint[i]))]]
                       + [repr(float(v)) for v in joint[i]]
                       + [repr(float(unc["entropy"][i])), repr(float(unc["disagreement"][i]))])
    print(f"wrote predictions for {table.n} rows to {out}")


def cmd_ablate(args) -> None:
    cfg = _with_output(_load_config(args.config), args.out)
    if args.report:
        full = json.loads(Path(args.report).read_text())
    else:
        full = harness.run_cv(cfg, n_jobs=args.threads)
    res = harness.run_ablation(cfg, full, n_jobs=args.threads)
    print(f"{res['strategy']}: full coverage error {res['coverage_error_full']:.3f}")
    for r in res["ablations"]:
        print(f"  -{r['modality']}: {r['coverage_error']:.3f} ({r['delta_pct']:+.1f}%)")


def cmd_compare(args) -> None:
    alpha = 0.05
    if args.config:
        alpha = float(json.loads(Path(args.config).read_text()).get("alpha", alpha))
    if args.reports:
        reports = [json.loads(Path(p).read_text()) for p in args.reports]
        comp = harness.compare_strategies(reports, alpha)
    elif args.csv:
        comp = harness.compare_entries(harness.entries_from_csvs(args.csv), None, alpha)
    else:
        raise ValidationError("give --reports or --csv")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(comp, indent=1, sort_keys=True, default=str))
    harness.write_comparison_table(comp, out / "comparison.csv")
    for f, e in comp["formations"].items():
        t = e.get("test")
        if t is None:
            print(f"{f}: no test ({e.get('note', '')})")
        else:
            print(f"{f}: chi2={t['chi2']:.2f} p={t['p']:.3g} best={e.get('best')}")


def cmd_attribute(args) -> None:
    cfg = _with_output(_load_config(args.config), args.out)
    opts = dict(cfg.attribution)
    res = harness.run_attribution(
        cfg,
        scheme=opts.get("scheme", "HHDM"),
        modalities=opts.get("modalities", "FULL"),
        n_instances=int(opts.get("n_instances", 20)),
        n_permutations=int(opts.get("n_permutations", 200)),
        background_size=int(opts.get("background_size", 100)),
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "attribution.json").write_text(json.dumps(res, indent=1, sort_keys=True))
    harness.write_attribution_csv(res, out / "attribution.csv")
    for f, d in res["per_formation"].items():
        shares = " ".join(f"{m}={s:.2f}" for m, s in d["shares"].items())
        print(f"{f}: {shares}")


def _pick_strategy(cfg: ExperimentConfig, name):
    if name is None:
        return cfg.strategies[0]
    for s in cfg.strategies:
        if s["name"] == name:
            return s
    raise ValidationError(f"no strategy named {name!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="habmod", description="Habitat distribution modelling harness")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help, out_help="output directory (overrides output_dir)", out_required=False):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--out", required=out_required, help=out_help)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: HABMOD_THREADS or 1)")
        sp.set_defaults(func=fn)
        return sp

    add("synth", cmd_synth, "generate a synthetic dataset CSV", "output CSV path", out_required=True)
    add("cv", cmd_cv, "spatial-block cross-validation of all strategies")
    sp = add("fit", cmd_fit, "fit one strategy's ensemble on all rows")
    sp.add_argument("--strategy", help="strategy name (default: the first)")
    sp.add_argument("--scheme", type=str.upper, choices=list(schemes.KINDS),
                    help="override the strategy's scheme")
    sp.add_argument("--modalities", help="comma-separated modalities or a preset (A, AR, ARM, ARMS, FULL)")
    sp = add("predict", cmd_predict, "predict with a fitted ensemble", "output CSV path", out_required=True)
    sp.add_argument("--model", required=True, help="directory written by 'fit'")
    sp.add_argument("--data", help="dataset CSV (default: the config's dataset)")
    sp.add_argument("--missing", default="drop-row", choices=["drop-row", "median"])
    sp = add("ablate", cmd_ablate, "leave-one-modality-out ablation")
    sp.add_argument("--report", help="existing report.json of the full run")
    sp = add("compare", cmd_compare, "Friedman/Nemenyi comparison of strategies", out_required=True)
    sp.add_argument("--reports", nargs="+", help="report.json files")
    sp.add_argument("--csv", nargs="+", help="class metric CSV files")
    add("attribute", cmd_attribute, "per-formation modality shares of Shapley attributions")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    try:
        args.func(args)
    except FoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if isinstance(exc.cause, ValidationError) else 2
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (HabmodError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
