"""Command-line front end.

Subcommands: simulate, select, predict, sweep, report.  All configs are
JSON; datasets, plans, and maps are CSV.  Exit code 0 on success, nonzero
with a single diagnostic line on stderr otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .dataset import FeatureMode, load_dataset_file, save_dataset_file
from .evaluation import (GprSettings, Scheme, SweepConfig, TrialSpec,
                         _TrialContext, emit_report, fit_predict_scheme,
                         load_results_csv, rmse, run_sweep)
from .kernels import parse_kernel
from .scenario import (ScenarioConfig, buildings_to_csv, generate_dataset,
                       generate_scenario)
from .selection import (SelectionMethod, plan_from_csv, plan_to_csv,
                        select_offline_kmeans, select_online_map, select_random)
from .dataset import FeatureScaler


def _cmd_simulate(args) -> int:
    if args.config:
        config = ScenarioConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    else:
        config = ScenarioConfig()
    scenario = generate_scenario(config, args.seed)
    dataset = generate_dataset(scenario)
    save_dataset_file(dataset, args.out)
    if args.buildings_out:
        Path(args.buildings_out).write_text(buildings_to_csv(scenario.buildings),
                                            encoding="utf-8")
    print(f"wrote {len(dataset)} candidate points to {args.out} "
          f"({len(scenario.buildings)} buildings, seed {scenario.seed})")
    return 0


def _cmd_select(args) -> int:
    mode = FeatureMode.parse(args.feature_mode)
    dataset = load_dataset_file(args.data, mode)
    features = FeatureScaler.fit(dataset.features()).transform(dataset.features())
    n = len(dataset)
    m = max(1, round(args.rate * n))
    if args.rate * n < 1 or m > n:
        raise ValueError(f"rate {args.rate} is unusable for {n} candidates")
    method = SelectionMethod.parse(args.method)
    if method is SelectionMethod.RANDOM:
        plan = select_random(features, m, args.seed)
    elif method is SelectionMethod.OFFLINE_KMEANS:
        plan = select_offline_kmeans(features, m, args.seed)
    else:
        kernel = parse_kernel(args.kernel)
        labels = None
        if args.refit_period is not None:
            targets = (dataset.gamma_meas() - dataset.gamma_sim
                       if mode is FeatureMode.POSITION_PLUS_SIM else dataset.gamma_meas())
            labels = targets
        plan = select_online_map(features, m, kernel, args.seed,
                                 hyper_refit_period=args.refit_period, labels=labels)
    Path(args.out).write_text(plan_to_csv(plan), encoding="utf-8")
    print(f"selected {len(plan)} of {n} points by {method.value} into {args.out}")
    return 0


def _cmd_predict(args) -> int:
    mode = FeatureMode.parse(args.feature_mode)
    dataset = load_dataset_file(args.data, mode)
    plan = plan_from_csv(Path(args.plan).read_text(encoding="utf-8"))
    train_idx = np.array(plan.ordered_indices, dtype=int)
    if train_idx.max(initial=0) >= len(dataset):
        raise ValueError("plan indexes points beyond the dataset")

    spec = TrialSpec(
        scheme=Scheme.parse(args.scheme), selection=plan.method,
        rate=max(len(plan) / len(dataset), 1e-9), feature_mode=mode, seed=plan.seed,
        kernel=args.kernel, gpr=GprSettings(restarts=args.restarts))
    ctx = _TrialContext(dataset)
    predicted = fit_predict_scheme(spec, ctx, train_idx)

    lines = ["x,y,z,rsrp_sim,rsrp_pred"]
    for i, s in enumerate(dataset.samples):
        lines.append(f"{s.position[0]!r},{s.position[1]!r},{s.position[2]!r},"
                     f"{s.gamma_sim!r},{predicted[i]!r}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")

    test = np.setdiff1d(np.arange(len(dataset)), train_idx)
    if test.size:
        score = rmse(predicted[test], ctx.gamma_meas[test])
        print(f"wrote {args.out}; held-out RMSE {score:.4f} dB over {test.size} points")
    else:
        print(f"wrote {args.out}; no held-out points to score")
    return 0


def _cmd_sweep(args) -> int:
    config = SweepConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    data_path = args.data or config.data
    if data_path:
        dataset = load_dataset_file(data_path)
    elif config.scenario is not None:
        scenario = generate_scenario(ScenarioConfig(**config.scenario))
        dataset = generate_dataset(scenario)
    else:
        scenario = generate_scenario(ScenarioConfig())
        dataset = generate_dataset(scenario)
    report = run_sweep(dataset, config)
    written = emit_report(report, args.out_dir, svg=args.svg)
    errors = sum(1 for r in report.rows if r.error)
    print(f"ran {len(report.rows)} trials ({errors} errored); "
          f"wrote {len(written)} files under {args.out_dir}")
    return 0


def _cmd_report(args) -> int:
    results = Path(args.in_dir) / "results.csv"
    report = load_results_csv(results.read_text(encoding="utf-8"))
    written = emit_report(report, args.in_dir, svg=args.svg, timings=False)
    print(f"rebuilt {len(written)} report files under {args.in_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radiomap",
        description="3D RSRP map recovery from sparse measurements")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario dataset")
    p.add_argument("--config", help="scenario config JSON (defaults if omitted)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.add_argument("--buildings-out", help="optional buildings CSV for plotting")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("select", help="choose measurement points")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--method", required=True, choices=[m.value for m in SelectionMethod])
    p.add_argument("--rate", type=float, required=True, help="fraction of points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-mode", default="pos+sim", choices=["pos", "pos+sim"])
    p.add_argument("--kernel", default=evaluation.DEFAULT_KERNEL_TEXT,
                   help="kernel text for the online method")
    p.add_argument("--refit-period", type=int, default=None,
                   help="re-optimize hyperparameters every P picks (online only)")
    p.add_argument("--out", required=True, help="output plan CSV")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("predict", help="fit a scheme on a plan and predict the map")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--plan", required=True, help="selection plan CSV")
    p.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    p.add_argument("--feature-mode", default="pos+sim", choices=["pos", "pos+sim"])
    p.add_argument("--kernel", default=evaluation.DEFAULT_KERNEL_TEXT)
    p.add_argument("--restarts", type=int, default=2,
                   help="hyperparameter optimization restarts (gpr)")
    p.add_argument("--out", required=True, help="output map CSV")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("sweep", help="run a full experiment grid")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--data", help="dataset CSV (overrides config)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true", help="also render SVG charts")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="rebuild report files from results.csv")
    p.add_argument("--in", dest="in_dir", required=True, help="sweep output directory")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
