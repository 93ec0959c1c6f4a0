"""Cross-validate a flat and a hierarchical model on a small synthetic survey.

Run from the repository root::

    python3 demos/quickstart.py [output_dir]

The report lands in ``output_dir`` (default ``demo_output/quickstart``).
"""

import sys
from pathlib import Path

from habmod import ExperimentConfig, run_cv

HERE = Path(__file__).parent


def main(out="demo_output/quickstart"):
    cfg = ExperimentConfig.from_json(HERE / "configs" / "small.json")
    cfg.output_dir = out
    report = run_cv(cfg)

    ds = report["dataset"]
    print(f"{ds['n']} plots, {ds['n_leaves']} habitats in {ds['n_formations']} formations")
    print(f"blocks of {report['cv']['block_size']:.0f} m, fold sizes {report['cv']['fold_sizes']}")
    for name, s in report["strategies"].items():
        agg = s["aggregate"]
        print(f"{name:6s} top-3 {agg['top3']['mean']:.3f} ± {agg['top3']['sd']:.3f}   "
              f"coverage error {agg['coverage_error']['mean']:.2f} ± {agg['coverage_error']['sd']:.2f}")

    # the flat model judged within formations, next to the hierarchy
    for f, e in report.get("comparison", {}).get("formations", {}).items():
        means = {n: v["mean"] for n, v in e["summary"].items()}
        print(f"formation {f}: " + ", ".join(f"{n} F1 {m:.2f}" for n, m in means.items() if m is not None))
    print(f"files written to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
