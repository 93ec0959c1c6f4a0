"""Experiment orchestration: spatial CV, ablation, strategy comparison.

All randomness derives from ``(config seed, task identity)``, so a report is
reproducible regardless of how many folds run concurrently. Wall-clock and
memory figures go to a separate cost record, which keeps ``report.json``
byte-identical across reruns.
"""

from __future__ import annotations

import csv
import json
import resource
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ensemble, metrics, schemes, spatial_cv
from .attribution import instance_seed, modality_contribution, sampled_shapley
from .config import ExperimentConfig, data_digest, load_experiment_data
from .data import SampleTable
from .errors import FoldError, HabmodError, MismatchedFolds, SingleModality, ValidationError
from .learners import LearnerConfig, predict_proba, sample_configs, select_best
from .stats import ScoreMatrix, best_and_equivalent, paired_t
from .taxonomy import Taxonomy

REPORT_VERSION = 1


def derive_seed(seed: int, *parts) -> int:
    """Stable 32-bit seed for a task identified by ``parts``."""
    key = [int(seed)] + [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _f(v):
    if v is None:
        return None
    v = float(v)
    return None if np.isnan(v) else v


def mean_sd(values) -> dict:
    a = np.array([v for v in values if v is not None], dtype=float)
    if a.size == 0:
        return {"mean": None, "sd": None}
    return {"mean": float(a.mean()), "sd": float(a.std(ddof=1)) if a.size > 1 else 0.0}


# ---------------------------------------------------------------- preparation


@dataclass
class Context:
    config: ExperimentConfig
    table: SampleTable
    taxonomy: Taxonomy
    block_of_row: np.ndarray
    fold_of_row: np.ndarray
    plan: spatial_cv.FoldPlan | None
    block_size: float | None
    n_jobs: int

    def train_test(self, fold: int):
        return np.flatnonzero(self.fold_of_row != fold), np.flatnonzero(self.fold_of_row == fold)


def prepare(config: ExperimentConfig, n_jobs: int | None = None) -> Context:
    table, tax = load_experiment_data(config)
    y = table.leaf_indices()
    if config.split == "spatial":
        size = config.block_size or spatial_cv.default_block_size(table)
        grid = spatial_cv.assign_blocks(table, size)
        plan = spatial_cv.make_folds(grid, y, config.n_folds, seed=derive_seed(config.seed, "folds"),
                                     n_classes=tax.n_leaves)
        blocks = np.asarray(grid.block_of_row)
        folds = np.asarray(plan.fold_of_row)
    else:
        size, plan = None, None
        blocks = np.arange(table.n)
        folds = spatial_cv.random_folds(table.n, config.n_folds, derive_seed(config.seed, "folds"))
    return Context(config, table, tax, blocks, folds, plan, size, n_jobs or config.n_jobs)


# ---------------------------------------------------------------- one fold


def _strategy_eval(kind, joint, conditionals, tax: Taxonomy, truth, truth_form, top_k):
    """Ranking metrics plus flat and within-formation top-1 predictions."""
    out = {f"top{k}": metrics.top_k_accuracy(joint, truth, k) for k in top_k}
    out["top1"] = metrics.top_k_accuracy(joint, truth, 1)
    out["coverage_error"] = metrics.coverage_error(joint, truth)
    flat_pred = metrics.argmax_top1(joint)
    nested_pred = flat_pred.copy()
    for fi, f in enumerate(tax.formations):
        rows = np.flatnonzero(truth_form == fi)
        if rows.size == 0:
            continue
        cols = np.asarray(tax.leaf_indices_of(f))
        if kind == "HHDM" and conditionals is not None and f in conditionals:
            cond = conditionals[f][rows]
        else:
            cond = schemes.nested_view(joint[rows], tax, f)
        nested_pred[rows] = cols[metrics.argmax_top1(cond)]
    out["macro_f1_flat"] = _f(metrics.class_prf(flat_pred, truth, tax).macro_f1)
    out["macro_f1_nested"] = _f(metrics.class_prf(nested_pred, truth, tax).macro_f1)
    return out, flat_pred, nested_pred


def _fit_members(ctx: Context, strategy: dict, fold: int, train, fixed=None):
    """Tune (or reuse ``fixed`` configs/scores), then refit each member on ``train``.

    Returns a list of (name, config, holdout score, StrategyModel, trials).
    """
    cfg = ctx.config
    table, tax = ctx.table, ctx.taxonomy
    kind = strategy["scheme"].upper()
    mask = strategy["modalities"]
    sname = strategy["name"]
    members = []
    if fixed is None:
        inner, hold = spatial_cv.tuning_split(
            ctx.block_of_row[train], table.formation_indices()[train], cfg.tuning_fraction,
            seed=derive_seed(cfg.seed, "tuning", fold), rows=train,
        )
        spatial_cv.assert_no_leakage(ctx.block_of_row, inner, hold)
        t_inner, t_hold = table.subset(inner), table.subset(hold)
        y_hold = t_hold.leaf_indices()
    for mi, (mname, base) in enumerate(cfg.member_configs()):
        mseed = derive_seed(cfg.seed, sname, mname, fold)
        if fixed is not None:
            chosen = LearnerConfig.from_dict(fixed[mname]["config"])
            score = fixed[mname]["holdout_macro_f1"]
            trials = []
        else:
            base = base.with_seed(mseed)
            space = cfg.space_for(base.family)
            if space and cfg.budget > 0:
                candidates = sample_configs(base, space, cfg.budget, seed=derive_seed(mseed, "draws"))
            else:
                candidates = [base]

            def score_fn(c):
                sm = schemes.train_strategy(kind, t_inner, tax, mask, c, seed=c.seed, n_jobs=ctx.n_jobs)
                pred = metrics.argmax_top1(schemes.predict_joint(sm, t_hold))
                return metrics.macro_f1(pred, y_hold, tax.n_leaves)

            res = select_best(candidates, score_fn)
            chosen, score, trials = res.config, res.score, res.trials
        sm = schemes.train_strategy(kind, table.subset(train), tax, mask, chosen, seed=chosen.seed,
                                    n_jobs=ctx.n_jobs)
        members.append((mname, chosen, score, sm, trials))
    return members


def run_fold(ctx: Context, strategy: dict, fold: int, fixed=None) -> dict:
    """Train, ensemble and evaluate one strategy on one fold."""
    t0 = time.perf_counter()
    cfg = ctx.config
    table, tax = ctx.table, ctx.taxonomy
    kind = strategy["scheme"].upper()
    train, test = ctx.train_test(fold)
    if cfg.split == "spatial":
        spatial_cv.assert_no_leakage(ctx.block_of_row, train, test)
    t_test = table.subset(test)
    truth = t_test.leaf_indices()
    truth_form = t_test.formation_indices()
    top_k = [int(k) for k in cfg.top_k]

    if kind == "BIOGEO":
        sm = schemes.train_strategy(kind, table.subset(train), tax, strategy["modalities"])
        joint = schemes.predict_joint(sm, t_test)
        ev, flat_pred, nested_pred = _strategy_eval(kind, joint, None, tax, truth, truth_form, top_k)
        return {
            "fold": fold, "n_train": int(train.size), "n_test": int(test.size),
            "members": {}, "ensemble": ev, "flags": sm.flags, "manifest": None,
            "_test": test, "_flat": flat_pred, "_nested": nested_pred, "_joint": joint,
            "_seconds": time.perf_counter() - t0,
        }

    members = _fit_members(ctx, strategy, fold, train, fixed)
    joints, conds, member_out, flags = [], [], {}, []
    for mname, chosen, score, sm, trials in members:
        joint = schemes.predict_joint(sm, t_test)
        cond = schemes.predict_conditional(sm, t_test) if kind == "HHDM" else None
        ev, _, _ = _strategy_eval(kind, joint, cond, tax, truth, truth_form, top_k)
        member_out[mname] = {"config": chosen.to_dict(), "holdout_macro_f1": float(score),
                             "trials": [[c, float(s)] for c, s in trials], "metrics": ev}
        joints.append(joint)
        conds.append(cond)
        flags += [f"{mname}: {fl}" for fl in sm.flags]
    spec = ensemble.EnsembleSpec([m[0] for m in members], [m[2] for m in members])
    w = spec.weights
    for (mname, *_), wi in zip(members, w):
        member_out[mname]["weight"] = float(wi)
    joint = ensemble.combine(joints, w)
    cond = None
    if kind == "HHDM":
        cond = {f: ensemble.combine([c[f] for c in conds], w) for f in conds[0]}
    ev, flat_pred, nested_pred = _strategy_eval(kind, joint, cond, tax, truth, truth_form, top_k)
    unc = ensemble.uncertainty(joint, joints)
    ev["mean_entropy"] = float(unc["entropy"].mean())
    ev["mean_disagreement"] = _f(np.mean(unc["disagreement"])) if len(joints) > 1 else None
    return {
        "fold": fold, "n_train": int(train.size), "n_test": int(test.size),
        "members": member_out, "ensemble": ev, "flags": flags, "manifest": spec.manifest(),
        "_test": test, "_flat": flat_pred, "_nested": nested_pred, "_joint": joint,
        "_seconds": time.perf_counter() - t0,
    }


# ---------------------------------------------------------------- aggregation


def _class_rows(name, pred, truth, tax, nested: bool):
    rows = []
    if not nested:
        return metrics.class_prf(pred, truth, tax).rows(name)
    for f in tax.formations:
        cls = tax.leaf_indices_of(f)
        in_f = np.isin(truth, cls)
        rows += metrics.class_prf(pred[in_f], truth[in_f], tax, classes=cls).rows(name)
    return rows


def _formation_summary(rows, tax: Taxonomy) -> dict:
    out = {}
    for f in tax.formations:
        f1 = [r["f1"] for r in rows if r["formation"] == f and r["f1"] is not None]
        out[f] = {**mean_sd(f1), "n_classes": len(tax.leaves_of(f)), "n_scored": len(f1)}
    return out


def primary_view(kind: str) -> str:
    return "nested" if kind == "HHDM" else "flat"


def evaluation_entries(report: dict) -> dict:
    """Class-wise rows per comparable entry: each strategy's primary view,
    plus the nested re-evaluation of flat (MHDM) strategies."""
    out = {}
    for name, s in report["strategies"].items():
        out[name] = s["class_metrics"][primary_view(s["scheme"])]
        if s["scheme"] == "MHDM":
            out[f"{name} (nested)"] = s["class_metrics"]["nested"]
    return out


def _aggregate(folds: list, member_names) -> dict:
    keys = [k for k, v in folds[0]["ensemble"].items() if not isinstance(v, dict)]
    agg = {k: mean_sd([f["ensemble"][k] for f in folds]) for k in keys}
    mem = {}
    for m in member_names:
        mk = folds[0]["members"][m]["metrics"].keys()
        mem[m] = {k: mean_sd([f["members"][m]["metrics"][k] for f in folds]) for k in mk}
    return agg, mem


def run_strategy(ctx: Context, strategy: dict, fixed_by_fold=None) -> tuple[dict, list]:
    folds = range(ctx.config.n_folds)

    def task(k):
        try:
            return run_fold(ctx, strategy, k, None if fixed_by_fold is None else fixed_by_fold[k])
        except HabmodError as exc:
            raise FoldError(k, exc) from exc

    if ctx.n_jobs > 1:
        with ThreadPoolExecutor(ctx.n_jobs) as ex:
            results = list(ex.map(task, folds))
    else:
        results = [task(k) for k in folds]

    tax = ctx.taxonomy
    truth_all = ctx.table.leaf_indices()
    n = ctx.table.n
    flat = np.full(n, -1)
    nested = np.full(n, -1)
    for r in results:
        flat[r["_test"]] = r["_flat"]
        nested[r["_test"]] = r["_nested"]
    name = strategy["name"]
    cm = {
        "flat": _class_rows(name, flat, truth_all, tax, nested=False),
        "nested": _class_rows(f"{name} (nested)", nested, truth_all, tax, nested=True),
    }
    member_names = list(results[0]["members"])
    agg, mem = _aggregate(results, member_names)
    cost = [{"fold": r["fold"], "seconds": r["_seconds"]} for r in results]
    public = [{k: v for k, v in r.items() if not k.startswith("_")} for r in results]
    entry = {
        "scheme": strategy["scheme"].upper(),
        "modalities": sorted(schemes.resolve_mask(strategy["modalities"])),
        "folds": public,
        "aggregate": agg,
        "members_aggregate": mem,
        "class_metrics": cm,
        "formation_summary": {v: _formation_summary(rows, tax) for v, rows in cm.items()},
    }
    return entry, cost


def run_cv(config: ExperimentConfig, n_jobs: int | None = None, write: bool = True) -> dict:
    """Spatial-block CV of every configured strategy; returns the report dict."""
    wall = time.perf_counter()
    ctx = prepare(config, n_jobs)
    tax = ctx.taxonomy
    report = {
        "version": REPORT_VERSION,
        "config": config.to_dict(),
        "dataset": {
            "n": ctx.table.n,
            "n_features": ctx.table.n_features,
            "modalities": ctx.table.modality_counts(),
            "taxonomy_hash": tax.digest(),
            "schema_hash": ctx.table.schema_hash(),
            "data_hash": data_digest(ctx.table),
            "n_leaves": tax.n_leaves,
            "n_formations": tax.n_formations,
            "leaf_counts": ctx.table.leaf_counts().tolist(),
        },
        "cv": {
            "split": config.split,
            "n_folds": config.n_folds,
            "block_size": ctx.block_size,
            "fold_plan": json.loads(ctx.plan.to_json()) if ctx.plan is not None else None,
            "fold_sizes": np.bincount(ctx.fold_of_row, minlength=config.n_folds).tolist(),
            "search_spaces": {
                m.family: config.space_for(m.family) for _, m in config.member_configs()
            },
            "budget": config.budget,
        },
        "taxonomy": tax.to_dict(),
        "strategies": {},
    }
    if ctx.plan is not None:
        dev = spatial_cv.stratification_deviation(ctx.plan, ctx.table.leaf_indices())
        report["cv"]["stratification_max_deviation"] = dev
        report["cv"]["stratification_ok"] = bool(dev <= config.stratify_tolerance)
        audit = 0
        for k in range(config.n_folds):
            tr, te = ctx.train_test(k)
            spatial_cv.assert_no_leakage(ctx.block_of_row, tr, te)
            audit += 1
        report["leakage_audit"] = {"folds_checked": audit, "shared_blocks": 0}
    else:
        report["leakage_audit"] = {"folds_checked": 0, "note": "random split: not audited"}

    costs = {}
    for s in config.strategies:
        entry, cost = run_strategy(ctx, s)
        report["strategies"][s["name"]] = entry
        costs[s["name"]] = cost
    entries = evaluation_entries(report)
    if len(entries) >= 2:
        report["comparison"] = compare_entries(entries, tax)
    cost_record = {
        "total_seconds": time.perf_counter() - wall,
        "peak_rss_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
        "folds": costs,
    }
    if write and config.output_dir:
        write_report(report, config.output_dir, cost_record)
    # underscore keys are never serialized, so reruns stay byte-identical
    report["_cost"] = cost_record
    return report


def canonical_json(report: dict) -> str:
    public = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(public, sort_keys=True, indent=1, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_report(report: dict, out_dir, cost: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(canonical_json(report))
    rows = []
    for name, s in report["strategies"].items():
        rows += s["class_metrics"]["flat"] + s["class_metrics"]["nested"]
    metrics.write_metrics_csv(rows, out / "class_metrics.csv")
    for name, s in report["strategies"].items():
        view = primary_view(s["scheme"])
        metrics.write_metrics_csv(s["class_metrics"][view], out / f"class_metrics_{_slug(name)}.csv")
    _write_summary_csv(report, out / "summary.csv")
    if "comparison" in report:
        write_comparison_table(report["comparison"], out / "comparison.csv")
    if cost is not None:
        (out / "cost.json").write_text(json.dumps(cost, indent=1, sort_keys=True))


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


def _write_summary_csv(report, path):
    """One row per strategy member and ensemble, mean and sd over folds."""
    fields = None
    rows = []
    for name, s in report["strategies"].items():
        blocks = [("ensemble", s["aggregate"])] + list(s["members_aggregate"].items())
        for member, agg in blocks:
            row = {"strategy": name, "member": member}
            for k, v in agg.items():
                row[f"{k}_mean"] = v["mean"]
                row[f"{k}_sd"] = v["sd"]
            rows.append(row)
            fields = fields or list(row)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------- ablation


def ablation_delta(ce_full: float, ce_ablated: float) -> float:
    """Relative change of coverage error in percent."""
    return (ce_ablated - ce_full) / ce_full * 100.0


def _ablation_strategy(config: ExperimentConfig, full_report: dict) -> dict:
    name = config.ablation_strategy
    for s in config.strategies:
        if name is None and s["scheme"].upper() != "BIOGEO":
            return s
        if s["name"] == name:
            return s
    raise ValidationError("no learnable strategy to ablate")


def run_ablation(config: ExperimentConfig, full_report: dict, n_jobs: int | None = None) -> dict:
    """Retrain the strategy with one modality removed at a time.

    Member configurations and ensemble weights are reused from the full run
    for every fold, so only the feature set changes.
    """
    strategy = _ablation_strategy(config, full_report)
    ctx = prepare(config, n_jobs)
    mask = schemes.resolve_mask(strategy["modalities"])
    present = [m for m in ("BIOREG", "ABIO", "RSBIO", "MSI", "SAR", "OTHER")
               if m in mask and m in ctx.table.present_modalities()]
    if len(present) < 2:
        raise SingleModality(f"strategy {strategy['name']!r} uses {present}; nothing to ablate")
    full = full_report["strategies"][strategy["name"]]
    fixed = [f["members"] for f in full["folds"]]
    ce_full = full["aggregate"]["coverage_error"]["mean"]
    rows = []
    for m in present:
        variant = {**strategy, "name": f"{strategy['name']}-no-{m}",
                   "modalities": sorted(set(mask) - {m})}
        entry, _ = run_strategy(ctx, variant, fixed_by_fold=fixed)
        ce = entry["aggregate"]["coverage_error"]["mean"]
        rows.append({
            "modality": m,
            "coverage_error": ce,
            "coverage_error_sd": entry["aggregate"]["coverage_error"]["sd"],
            "delta_pct": ablation_delta(ce_full, ce),
            "fold_coverage_error": [f["ensemble"]["coverage_error"] for f in entry["folds"]],
        })
    result = {"strategy": strategy["name"], "coverage_error_full": ce_full, "ablations": rows}
    if config.output_dir:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(result, indent=1, sort_keys=True))
        with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["modality", "coverage_error", "delta_pct"])
            for r in rows:
                w.writerow([r["modality"], f"{r['coverage_error']:.6f}", f"{r['delta_pct']:+.1f}"])
    return result


# ---------------------------------------------------------------- comparison


def compare_entries(entries: dict, taxonomy: Taxonomy | None = None, alpha: float = 0.05) -> dict:
    """Per-formation Friedman/Nemenyi comparison of class-wise F1.

    ``entries`` maps a strategy name to class-metric rows (``formation``,
    ``class``, ``f1``). Classes missing or undefined in any strategy are
    dropped for that formation.
    """
    names = list(entries)
    if len(names) < 2:
        raise ValidationError("need at least two strategies to compare")
    lookup = {n: {(r["formation"], r["class"]): r["f1"] for r in rows} for n, rows in entries.items()}
    if taxonomy is not None:
        formations = list(taxonomy.formations)
    else:
        formations = list(dict.fromkeys(r["formation"] for rows in entries.values() for r in rows))
    result = {"strategies": names, "alpha": alpha, "formations": {}}
    for f in formations:
        classes = sorted({c for n in names for (ff, c) in lookup[n] if ff == f})
        vals = np.array([[_nan(lookup[n].get((f, c))) for n in names] for c in classes], dtype=float)
        summary = {n: mean_sd([_f(v) for v in vals[:, j]]) if len(classes) else mean_sd([])
                   for j, n in enumerate(names)}
        entry = {"n_classes": len(classes), "summary": summary}
        try:
            m = ScoreMatrix(vals.reshape(len(classes), len(names)), tuple(classes), tuple(names))
            be = best_and_equivalent(m, alpha)
        except HabmodError as exc:
            entry["test"] = None
            entry["note"] = str(exc)
            result["formations"][f] = entry
            continue
        fr = be["friedman"]
        entry["test"] = {"chi2": fr["chi2"], "df": fr["df"], "p": fr["p"],
                         "mean_ranks": dict(zip(names, map(float, fr["mean_ranks"]))),
                         "n_used": fr["n"], "n_dropped": fr["n_dropped"]}
        entry["best"] = names[be["best"]] if be["best"] is not None else None
        entry["equivalent"] = [names[j] for j in be["equivalent"]]
        if be["best"] is not None:
            entry["cd"] = be["cd"]
            tt = {}
            for j, n in enumerate(names):
                if j == be["best"]:
                    continue
                try:
                    tt[n] = paired_t(m.values[:, be["best"]], m.values[:, j])
                except HabmodError:
                    tt[n] = None
            entry["paired_t_vs_best"] = tt
        result["formations"][f] = entry
    return result


def _nan(v):
    return np.nan if v is None else float(v)


def compare_strategies(reports: list, alpha: float = 0.05) -> dict:
    """Compare strategies across reports computed on the same data and folds."""
    if len(reports) < 1:
        raise ValidationError("need at least one report")
    ref = reports[0]
    for r in reports[1:]:
        if r["dataset"]["data_hash"] != ref["dataset"]["data_hash"] or r["cv"]["fold_plan"] != ref["cv"]["fold_plan"] \
                or r["cv"]["n_folds"] != ref["cv"]["n_folds"]:
            raise MismatchedFolds("reports differ in dataset or fold plan")
    entries = {}
    for i, r in enumerate(reports):
        for name, rows in evaluation_entries(r).items():
            key = name if name not in entries else f"{name} [{i}]"
            entries[key] = rows
    if len(entries) < 2:
        raise ValidationError("need at least two strategies to compare")
    tax = Taxonomy.from_dict(ref["taxonomy"]) if "taxonomy" in ref else None
    return compare_entries(entries, tax, alpha)


def write_comparison_table(comp: dict, path) -> None:
    """Formation-by-strategy F1 (mean +- sd); ``*`` marks the best, ``=`` its equivalents."""
    forms = list(comp["formations"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy"] + forms)
        for n in comp["strategies"]:
            cells = []
            for f in forms:
                e = comp["formations"][f]
                s = e["summary"][n]
                txt = "" if s["mean"] is None else f"{s['mean']:.3f} ± {s['sd']:.3f}"
                if e.get("best") == n:
                    txt += "*"
                elif n in e.get("equivalent", []):
                    txt += "="
                cells.append(txt)
            w.writerow([n] + cells)
        stat = []
        for f in forms:
            t = comp["formations"][f].get("test")
            stat.append("" if t is None else f"{t['chi2']:.2f} ({t['p']:.2g})")
        w.writerow(["Friedman statistic (p-value)"] + stat)
        w.writerow(["N classes"] + [comp["formations"][f]["n_classes"] for f in forms])


def entries_from_csvs(paths) -> dict:
    """Group metric CSV rows by their ``strategy`` column."""
    entries: dict = {}
    for p in paths:
        for r in metrics.read_metrics_csv(p):
            entries.setdefault(r["strategy"] or Path(p).stem, []).append(r)
    return entries


# ---------------------------------------------------------------- attribution


def run_attribution(config: ExperimentConfig, scheme: str = "HHDM", modalities="FULL",
                    learner: LearnerConfig | None = None, n_instances: int = 20,
                    n_permutations: int = 200, background_size: int = 100,
                    model: schemes.StrategyModel | None = None) -> dict:
    """Per-formation modality shares of sampled Shapley attributions.

    HHDM strategies explain each formation's conditional model on rows of
    that formation; MHDM strategies explain the global model, grouped by the
    true formation of each explained row.
    """
    table, tax = load_experiment_data(config)
    seed = config.seed
    if model is None:
        learner = learner or config.member_configs()[0][1]
        model = schemes.train_strategy(scheme, table, tax, modalities, learner,
                                       seed=derive_seed(seed, "attribution"))
    pos = {n: i for i, n in enumerate(table.feature_names)}
    cols = [pos[n] for n in model.feature_names]
    mods = [table.modalities[i] for i in cols]
    X = table.X[:, cols]
    forms = table.formations()
    rng = np.random.default_rng(derive_seed(seed, "attribution-rows"))
    out = {}
    for f in tax.formations:
        rows = np.flatnonzero(np.array(forms) == f)
        if rows.size == 0:
            continue
        if model.kind == "HHDM":
            if f not in model.formation_models:
                continue
            fm = model.formation_models[f]
        elif model.kind == "MHDM":
            fm = model.model
        else:
            raise ValidationError("attribution needs a learned strategy (MHDM or HHDM)")
        fn = (lambda m: (lambda Z: predict_proba(m, Z)))(fm)
        bg = X[rng.choice(rows, min(background_size, rows.size), replace=False)]
        chosen = rng.choice(rows, min(n_instances, rows.size), replace=False)
        results = []
        for i in sorted(chosen):
            r = sampled_shapley(fn, X[i], bg, n_permutations, seed=instance_seed(seed, table.row_ids[i]))
            results.append(r)
        out[f] = modality_contribution(results, mods)
    return {"scheme": model.kind, "modalities": sorted(model.modality_mask), "per_formation": out,
            "n_permutations": n_permutations, "background_size": background_size}


def write_attribution_csv(result: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["formation", "modality", "share", "n_used", "n_undefined"])
        for f, d in result["per_formation"].items():
            for m, s in d["shares"].items():
                w.writerow([f, m, "" if np.isnan(s) else f"{s:.6f}", d["n_used"], d["n_undefined"]])
