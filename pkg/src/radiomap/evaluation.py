"""Experiment harness: trials, sweeps, aggregation, and report files.

A trial is one (scheme, selection, rate, feature mode, seed) cell: select M
training points, reveal their measurements, fit, predict the whole map, and
score RMSE on the untouched complement.  A sweep executes a deterministic
grid of trials and never lets one failing cell poison the rest.

Report output is split so the scored results stay byte-reproducible:
``results.csv`` carries no timing, ``timings.csv`` carries wall times.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .baselines import (IdwConfig, KnnConfig, KnnWeighting, VariogramKind,
                        VariogramModel, fit_variogram, idw_predict, knn_predict,
                        kriging_predict)
from .dataset import Dataset, FeatureMode, FeatureScaler
from .gpr import GprModel, optimize_hyperparameters
from .kernels import (ConstantKernel, Kernel, ProductKernel, SumKernel,
                      WhiteNoiseKernel, format_kernel, parse_kernel,
                      table2_kernels)
from .selection import (SelectionMethod, SelectionPlan, select_offline_kmeans,
                        select_online_map, select_random)

DEFAULT_KERNEL_TEXT = "const(1.0) * matern(l=1.0,nu=1.5) + white(0.1)"
DEFAULT_RATES = (0.01, 0.02, 0.05, 0.10, 0.14, 0.20)
DEFAULT_SEEDS = tuple(range(10))


class Scheme(Enum):
    GPR = "gpr"
    IDW = "idw"
    KNN = "knn"
    KRIGING = "kriging"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        for scheme in cls:
            if text == scheme.value:
                return scheme
        raise ValueError(f"unknown scheme {text!r}")


def rmse(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared error in dB over aligned vectors."""
    predicted = np.asarray(predicted, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predicted.shape != truth.shape or predicted.size < 1:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))


@dataclass(frozen=True)
class GprSettings:
    """Per-trial GP fitting policy.

    Hyperparameters are re-optimized on every training set; sets larger than
    ``hyper_max_points`` are subsampled (seeded) for the optimization only.
    ``init_from_data`` scales the template's constant/white leaves to the
    target variance before optimizing, which makes few-restart runs robust
    across the huge dynamic range between residual and raw-RSRP targets.
    """

    restarts: int = 2
    hyper_max_points: int = 250
    init_from_data: bool = True
    online_init_batch: int = 0  # 0 = max(5, ceil(M/10))


@dataclass(frozen=True)
class TrialSpec:
    scheme: Scheme
    selection: SelectionMethod
    rate: float
    feature_mode: FeatureMode = FeatureMode.POSITION_PLUS_SIM
    seed: int = 0
    kernel: str = DEFAULT_KERNEL_TEXT
    kernel_label: str = ""
    gpr: GprSettings = field(default_factory=GprSettings)
    idw: IdwConfig = field(default_factory=IdwConfig)
    knn: KnnConfig = field(default_factory=KnnConfig)
    variogram: VariogramModel = field(default_factory=VariogramModel)

    def __post_init__(self):
        if not (0.0 < self.rate <= 1.0):
            raise ValueError(f"sampling rate must be in (0, 1], got {self.rate}")
        if not self.kernel_label:
            label = self.kernel if self.scheme is Scheme.GPR else "-"
            object.__setattr__(self, "kernel_label", label)

    def n_train(self, n_candidates: int) -> int:
        if self.rate * n_candidates < 1.0:
            raise ValueError(
                f"rate {self.rate} selects no points from {n_candidates} candidates"
            )
        return max(1, round(self.rate * n_candidates))


@dataclass
class TrialResult:
    spec: TrialSpec
    rmse_db: float
    plan: SelectionPlan
    predicted: np.ndarray
    train_indices: np.ndarray
    test_indices: np.ndarray
    wall_time_s: float = 0.0


class _TrialContext:
    """Shared per-dataset arrays so sweeps do not refit scalers per trial."""

    def __init__(self, dataset: Dataset):
        if not dataset.fully_measured:
            raise ValueError("trials need a fully measured dataset as ground truth")
        self.dataset = dataset
        self.gamma_meas = dataset.gamma_meas()
        self.gamma_sim = dataset.gamma_sim
        self.residuals = self.gamma_meas - self.gamma_sim
        self._features: dict[FeatureMode, np.ndarray] = {}
        self._scalers: dict[FeatureMode, FeatureScaler] = {}

    def features_std(self, mode: FeatureMode) -> np.ndarray:
        if mode not in self._features:
            raw = self.dataset.features(mode)
            scaler = FeatureScaler.fit(raw)
            self._scalers[mode] = scaler
            self._features[mode] = scaler.transform(raw)
        return self._features[mode]

    def scaler(self, mode: FeatureMode) -> FeatureScaler:
        self.features_std(mode)
        return self._scalers[mode]

    def targets(self, mode: FeatureMode) -> np.ndarray:
        return self.residuals if mode is FeatureMode.POSITION_PLUS_SIM else self.gamma_meas

    def to_map(self, mode: FeatureMode, predicted_targets: np.ndarray) -> np.ndarray:
        if mode is FeatureMode.POSITION_PLUS_SIM:
            return self.gamma_sim + predicted_targets
        return predicted_targets


def _rescale_amplitude_leaves(kernel: Kernel, target_var: float) -> Kernel:
    """Move constant leaves to the target variance and white leaves to a
    tenth of it, clipped to their own bounds."""

    def walk(node: Kernel) -> Kernel:
        if isinstance(node, SumKernel):
            return SumKernel(walk(node.left), walk(node.right))
        if isinstance(node, ProductKernel):
            return ProductKernel(walk(node.left), walk(node.right))
        if isinstance(node, ConstantKernel) and not node.constant.fixed:
            value = float(np.clip(target_var, node.constant.lower, node.constant.upper))
            return ConstantKernel(value, (node.constant.lower, node.constant.upper))
        if isinstance(node, WhiteNoiseKernel) and not node.noise_var.fixed:
            value = float(np.clip(0.1 * target_var, node.noise_var.lower, node.noise_var.upper))
            return WhiteNoiseKernel(value, (node.noise_var.lower, node.noise_var.upper))
        return node

    if target_var <= 0.0:
        return kernel
    return walk(kernel)


def _fit_gpr_for_trial(spec: TrialSpec, X_train: np.ndarray, y_train: np.ndarray) -> GprModel:
    template = parse_kernel(spec.kernel)
    if spec.gpr.init_from_data:
        template = _rescale_amplitude_leaves(template, float(np.var(y_train)))
    m = X_train.shape[0]
    if m > spec.gpr.hyper_max_points:
        sub = np.random.default_rng([spec.seed, 104729]).choice(
            m, spec.gpr.hyper_max_points, replace=False)
        sub.sort()
        X_opt, y_opt = X_train[sub], y_train[sub]
    else:
        X_opt, y_opt = X_train, y_train
    kernel = optimize_hyperparameters(X_opt, y_opt, template,
                                      restarts=spec.gpr.restarts, seed=spec.seed)
    return GprModel.fit(X_train, y_train, kernel)


def _select(spec: TrialSpec, ctx: _TrialContext, m: int) -> SelectionPlan:
    features = ctx.features_std(spec.feature_mode)
    if spec.selection is SelectionMethod.RANDOM:
        return select_random(features, m, spec.seed)
    if spec.selection is SelectionMethod.OFFLINE_KMEANS:
        return select_offline_kmeans(features, m, spec.seed)
    if spec.scheme is not Scheme.GPR:
        raise ValueError("online max-variance selection is GPR-specific; "
                         "use random or kmeans with baseline schemes")
    # online: fit hyperparameters once on a small random batch, then freeze
    batch = spec.gpr.online_init_batch or max(5, math.ceil(m / 10))
    batch = min(batch, features.shape[0])
    warmup = select_random(features, batch, spec.seed)
    warm_idx = np.array(warmup.ordered_indices)
    template = parse_kernel(spec.kernel)
    y_warm = ctx.targets(spec.feature_mode)[warm_idx]
    if spec.gpr.init_from_data:
        template = _rescale_amplitude_leaves(template, float(np.var(y_warm)))
    kernel = optimize_hyperparameters(features[warm_idx], y_warm, template,
                                      restarts=spec.gpr.restarts, seed=spec.seed)
    return select_online_map(features, m, kernel, spec.seed)


def fit_predict_scheme(spec: TrialSpec, ctx: _TrialContext,
                       train_indices: np.ndarray) -> np.ndarray:
    """Fit the spec's scheme on the revealed points and predict the full map."""
    features = ctx.features_std(spec.feature_mode)
    X_train = features[train_indices]
    y_train = ctx.targets(spec.feature_mode)[train_indices]
    if spec.scheme is Scheme.GPR:
        model = _fit_gpr_for_trial(spec, X_train, y_train)
        predicted = model.predict_mean(features)
    elif spec.scheme is Scheme.IDW:
        predicted = idw_predict(X_train, y_train, features, spec.idw)
    elif spec.scheme is Scheme.KNN:
        predicted = knn_predict(X_train, y_train, features, spec.knn)
    else:
        variogram = fit_variogram(X_train, y_train, spec.variogram)
        predicted, _ = kriging_predict(X_train, y_train, variogram, features)
    return ctx.to_map(spec.feature_mode, predicted)


def run_trial(dataset: Dataset, spec: TrialSpec, _ctx: _TrialContext | None = None) -> TrialResult:
    """Execute one trial; RMSE is scored on the unselected complement only."""
    t0 = time.perf_counter()
    ctx = _ctx if _ctx is not None else _TrialContext(dataset)
    n = len(ctx.dataset)
    m = spec.n_train(n)

    plan = _select(spec, ctx, m)
    train_idx = np.array(plan.ordered_indices, dtype=int)
    test_mask = np.ones(n, dtype=bool)
    test_mask[train_idx] = False
    test_idx = np.flatnonzero(test_mask)
    assert not np.intersect1d(train_idx, test_idx).size, "train leaked into test"

    predicted = fit_predict_scheme(spec, ctx, train_idx)

    if test_idx.size == 0:
        warnings.warn("sampling rate 1.0 leaves no test points; RMSE defined as 0")
        score = 0.0
    else:
        score = rmse(predicted[test_idx], ctx.gamma_meas[test_idx])
    return TrialResult(spec, score, plan, predicted, train_idx, test_idx,
                       wall_time_s=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepConfig:
    rates: tuple = DEFAULT_RATES
    schemes: tuple = (Scheme.GPR,)
    selections: tuple = (SelectionMethod.RANDOM,)
    feature_modes: tuple = (FeatureMode.POSITION_PLUS_SIM,)
    seeds: tuple = DEFAULT_SEEDS
    kernel: str = DEFAULT_KERNEL_TEXT
    kernel_ablation: bool = False
    gpr: GprSettings = field(default_factory=GprSettings)
    idw: IdwConfig = field(default_factory=IdwConfig)
    knn: KnnConfig = field(default_factory=KnnConfig)
    variogram: VariogramModel = field(default_factory=VariogramModel)
    data: str | None = None
    scenario: dict | None = None

    def __post_init__(self):
        if not self.rates or not self.seeds:
            raise ValueError("sweep needs at least one rate and one seed")
        if self.kernel_ablation and len(self.rates) != 1:
            raise ValueError("kernel ablation mode uses exactly one sampling rate")

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        doc = json.loads(text)
        kwargs: dict = {}
        if "rates" in doc:
            kwargs["rates"] = tuple(float(r) for r in doc["rates"])
        if "seeds" in doc:
            kwargs["seeds"] = tuple(int(s) for s in doc["seeds"])
        if "schemes" in doc:
            kwargs["schemes"] = tuple(Scheme.parse(s) for s in doc["schemes"])
        if "selections" in doc:
            kwargs["selections"] = tuple(SelectionMethod.parse(s) for s in doc["selections"])
        if "feature_modes" in doc:
            kwargs["feature_modes"] = tuple(FeatureMode.parse(s) for s in doc["feature_modes"])
        for key in ("kernel", "kernel_ablation", "data", "scenario"):
            if key in doc:
                kwargs[key] = doc[key]
        if "gpr" in doc:
            kwargs["gpr"] = GprSettings(**doc["gpr"])
        if "idw" in doc:
            kwargs["idw"] = IdwConfig(**doc["idw"])
        if "knn" in doc:
            knn = dict(doc["knn"])
            if "weighting" in knn:
                knn["weighting"] = KnnWeighting(knn["weighting"])
            kwargs["knn"] = KnnConfig(**knn)
        if "variogram" in doc:
            vg = dict(doc["variogram"])
            if "kind" in vg:
                vg["kind"] = VariogramKind(vg["kind"])
            kwargs["variogram"] = VariogramModel(**vg)
        return cls(**kwargs)

    def build_specs(self) -> list[TrialSpec]:
        """The deterministic trial grid, kernel-ablation mode included."""
        shared = dict(gpr=self.gpr, idw=self.idw, knn=self.knn, variogram=self.variogram)
        specs = []
        if self.kernel_ablation:
            for label, kernel in table2_kernels().items():
                for seed in self.seeds:
                    specs.append(TrialSpec(
                        scheme=Scheme.GPR, selection=SelectionMethod.RANDOM,
                        rate=self.rates[0], feature_mode=FeatureMode.POSITION_PLUS_SIM,
                        seed=seed, kernel=format_kernel(kernel), kernel_label=label,
                        **shared))
            return specs
        for rate in self.rates:
            for scheme in self.schemes:
                for selection in self.selections:
                    for mode in self.feature_modes:
                        for seed in self.seeds:
                            specs.append(TrialSpec(
                                scheme=scheme, selection=selection, rate=rate,
                                feature_mode=mode, seed=seed, kernel=self.kernel,
                                **shared))
        return specs


@dataclass
class TrialRow:
    scheme: Scheme
    selection: SelectionMethod
    feature_mode: FeatureMode
    rate: float
    seed: int
    m_train: int
    kernel: str
    rmse_db: float  # nan when the trial errored
    wall_time_s: float
    error: str = ""

    @property
    def group_key(self):
        return (self.scheme.value, self.selection.value, self.feature_mode.value,
                self.rate, self.kernel)


@dataclass
class AggregateRow:
    scheme: Scheme
    selection: SelectionMethod
    feature_mode: FeatureMode
    rate: float
    kernel: str
    n: int
    rmse_mean_db: float
    rmse_std_db: float


@dataclass
class EvalReport:
    rows: list
    aggregates: list = field(default_factory=list)

    def __post_init__(self):
        if not self.aggregates and self.rows:
            self.aggregates = aggregate_rows(self.rows)

    def mean_rmse(self, scheme: Scheme, selection: SelectionMethod, rate: float,
                  feature_mode: FeatureMode = FeatureMode.POSITION_PLUS_SIM,
                  kernel: str | None = None) -> float:
        for agg in self.aggregates:
            if (agg.scheme is scheme and agg.selection is selection
                    and agg.feature_mode is feature_mode
                    and math.isclose(agg.rate, rate)
                    and (kernel is None or agg.kernel == kernel)):
                return agg.rmse_mean_db
        raise KeyError(f"no aggregate for {scheme} {selection} {feature_mode} rate={rate}")


def aggregate_rows(rows) -> list:
    groups: dict = {}
    order = []
    for row in rows:
        key = row.group_key
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    aggregates = []
    for key in order:
        members = groups[key]
        ok = [r.rmse_db for r in members if not r.error and math.isfinite(r.rmse_db)]
        first = members[0]
        aggregates.append(AggregateRow(
            scheme=first.scheme, selection=first.selection,
            feature_mode=first.feature_mode, rate=first.rate, kernel=first.kernel,
            n=len(ok),
            rmse_mean_db=float(np.mean(ok)) if ok else float("nan"),
            rmse_std_db=float(np.std(ok)) if ok else float("nan"),
        ))
    return aggregates


def run_sweep(dataset: Dataset, config: SweepConfig) -> EvalReport:
    """Execute the whole grid; failed trials become error rows, not crashes."""
    ctx = _TrialContext(dataset)
    n = len(dataset)
    rows = []
    for spec in config.build_specs():
        try:
            m = spec.n_train(n)
            result = run_trial(dataset, spec, _ctx=ctx)
            rows.append(TrialRow(spec.scheme, spec.selection, spec.feature_mode,
                                 spec.rate, spec.seed, m, spec.kernel_label,
                                 result.rmse_db, result.wall_time_s))
        except Exception as exc:  # fail-soft per row
            rows.append(TrialRow(spec.scheme, spec.selection, spec.feature_mode,
                                 spec.rate, spec.seed, 0, spec.kernel_label,
                                 float("nan"), 0.0, error=str(exc)))
    return EvalReport(rows=rows)


# ---------------------------------------------------------------------------
# report files

RESULTS_COLUMNS = ("scheme", "selection", "feature_mode", "rate", "seed",
                   "m_train", "kernel", "rmse_db", "error")
AGGREGATE_COLUMNS = ("scheme", "selection", "feature_mode", "rate", "kernel",
                     "n", "rmse_mean_db", "rmse_std_db")


def _fmt(value: float) -> str:
    return repr(float(value))


def results_csv_text(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_COLUMNS)
    for r in report.rows:
        writer.writerow([r.scheme.value, r.selection.value, r.feature_mode.value,
                         _fmt(r.rate), r.seed, r.m_train, r.kernel,
                         "" if r.error else _fmt(r.rmse_db), r.error])
    return buf.getvalue()


def aggregates_csv_text(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for a in report.aggregates:
        writer.writerow([a.scheme.value, a.selection.value, a.feature_mode.value,
                         _fmt(a.rate), a.kernel, a.n,
                         _fmt(a.rmse_mean_db) if a.n else "",
                         _fmt(a.rmse_std_db) if a.n else ""])
    return buf.getvalue()


def load_results_csv(text: str) -> EvalReport:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != RESULTS_COLUMNS:
        raise ValueError("unrecognized results.csv header")
    rows = []
    for rec in reader:
        if not rec:
            continue
        scheme, selection, mode, rate, seed, m_train, kernel, rmse_db, error = rec
        rows.append(TrialRow(
            Scheme.parse(scheme), SelectionMethod.parse(selection),
            FeatureMode.parse(mode), float(rate), int(seed), int(m_train),
            kernel, float(rmse_db) if rmse_db else float("nan"), 0.0, error))
    return EvalReport(rows=rows)


def emit_report(report: EvalReport, out_dir, svg: bool = False,
                timings: bool = True) -> list:
    """Write results/aggregates/figure CSVs (and optional SVG charts).

    Returns the list of written paths.
    """
    if not report.rows:
        raise ValueError("refusing to emit an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name: str, text: str):
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    write("results.csv", results_csv_text(report))
    write("aggregates.csv", aggregates_csv_text(report))

    if timings:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("scheme", "selection", "feature_mode", "rate", "seed",
                         "kernel", "wall_time_s"))
        for r in report.rows:
            writer.writerow([r.scheme.value, r.selection.value, r.feature_mode.value,
                             _fmt(r.rate), r.seed, r.kernel, _fmt(r.wall_time_s)])
        write("timings.csv", buf.getvalue())

    for name, table in figure_tables(report).items():
        header, rows = table
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        write(f"{name}.csv", buf.getvalue())
        if svg:
            series = []
            rates = [float(r[0]) for r in rows]
            for col in range(1, len(header), 2):  # mean columns
                ys = [float(r[col]) if r[col] != "" else float("nan") for r in rows]
                series.append((header[col].removesuffix("_mean"), rates, ys))
            write(f"{name}.svg", line_chart_svg(
                title=name, xlabel="sampling rate", ylabel="RMSE (dB)", series=series))
    return written


def figure_tables(report: EvalReport) -> dict:
    """Plot-data tables: fig6_<selection> (schemes side by side, 4-D features)
    and fig7_<scheme> (feature mode x selection arms)."""
    aggs = [a for a in report.aggregates if a.n > 0]
    tables: dict = {}

    mode4 = FeatureMode.POSITION_PLUS_SIM
    for selection in SelectionMethod:
        subset = [a for a in aggs if a.selection is selection and a.feature_mode is mode4]
        if not subset:
            continue
        schemes = [s for s in Scheme if any(a.scheme is s for a in subset)]
        rates = sorted({a.rate for a in subset})
        header = ["rate"]
        for s in schemes:
            header += [f"{s.value}_mean", f"{s.value}_std"]
        rows = []
        for rate in rates:
            row = [_fmt(rate)]
            for s in schemes:
                match = [a for a in subset if a.scheme is s and a.rate == rate]
                row += ([_fmt(match[0].rmse_mean_db), _fmt(match[0].rmse_std_db)]
                        if match else ["", ""])
            rows.append(row)
        tables[f"fig6_{selection.value}"] = (header, rows)

    for scheme in Scheme:
        subset = [a for a in aggs if a.scheme is scheme]
        if not subset:
            continue
        arms = []
        for a in subset:
            arm = (a.feature_mode, a.selection)
            if arm not in arms:
                arms.append(arm)
        rates = sorted({a.rate for a in subset})
        header = ["rate"]
        for mode, selection in arms:
            header += [f"{mode.tag}_{selection.value}_mean",
                       f"{mode.tag}_{selection.value}_std"]
        rows = []
        for rate in rates:
            row = [_fmt(rate)]
            for mode, selection in arms:
                match = [a for a in subset if a.feature_mode is mode
                         and a.selection is selection and a.rate == rate]
                row += ([_fmt(match[0].rmse_mean_db), _fmt(match[0].rmse_std_db)]
                        if match else ["", ""])
            rows.append(row)
        tables[f"fig7_{scheme.value}"] = (header, rows)
    return tables


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#e377c2", "#7f7f7f")


def line_chart_svg(title: str, xlabel: str, ylabel: str, series,
                   width: int = 640, height: int = 420) -> str:
    """Minimal standalone SVG line chart; one polyline + legend row per series."""
    margin = 56
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    if not xs_all or not ys_all:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">{xlabel}</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {height / 2:.1f})">{ylabel}</text>',
        f'<text x="{margin}" y="{height - margin + 16}" font-size="10" '
        f'text-anchor="middle">{x_lo:g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" font-size="10" '
        f'text-anchor="middle">{x_hi:g}</text>',
        f'<text x="{margin - 6}" y="{height - margin}" font-size="10" '
        f'text-anchor="end">{y_lo:.2f}</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" font-size="10" '
        f'text-anchor="end">{y_hi:.2f}</text>',
    ]
    for i, (name, xs, ys) in enumerate(series):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys)
                          if math.isfinite(y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        ly = margin + 14 * i
        parts.append(f'<line x1="{width - margin - 110}" y1="{ly}" '
                     f'x2="{width - margin - 86}" y2="{ly}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{width - margin - 80}" y="{ly + 4}" '
                     f'font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
