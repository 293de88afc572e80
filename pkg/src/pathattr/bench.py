"""Batch experiment driver: manifests and models in, CSV tables, figures and
saliency renderings out.

Per correctly-classified image, every requested (method, steps) attribution is
computed once and all requested metrics are evaluated on it; cells aggregate
the per-image values by median.  Work is partitioned by image and merged in
manifest order, so a run is byte-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attribution import channel_collapse, completeness_gap, load_attribution
from .errors import BenchmarkError, InvalidArgumentError
from .image import Image, minmax_normalize, write_pnm
from .methods import METHOD_TAGS, compute_attribution, parse_method
from .metrics import auc, insertion_curve, insertion_score, pic_curve
from .models import DifferentiableModel, accuracy, load_model, save_model, train_toy
from .stability import StabilityEntry, StabilityReport, capped_neg_log, compress, saliency_mse
from .toydata import ToyDataset, load_manifest_images, make_toy_dataset, save_dataset, write_manifest

METRIC_IDS = (
    "insertion-prob",
    "insertion-ratio",
    "aic-entropy",
    "sic-entropy",
    "aic-msssim",
    "sic-msssim",
    "stability",
)

_PIC_METRICS = {
    "aic-entropy": ("entropy", "accuracy"),
    "sic-entropy": ("entropy", "softmax-ratio"),
    "aic-msssim": ("msssim", "accuracy"),
    "sic-msssim": ("msssim", "softmax-ratio"),
}

DEFAULT_STEPS = (8, 16, 32, 64, 128)
COMPLETENESS_METRIC = "completeness-gap"


@dataclass
class BenchmarkConfig:
    manifest: Path
    models: list[Path]
    out_dir: Path
    methods: list[str] = field(default_factory=lambda: ["IG", "IG+IDGI"])
    steps: list[int] = field(default_factory=lambda: list(DEFAULT_STEPS))
    metrics: list[str] = field(default_factory=lambda: ["insertion-prob"])
    seed: int = 0
    workers: int = 1
    quality: int = 75

    def __post_init__(self):
        self.manifest = Path(self.manifest)
        self.models = [Path(p) for p in self.models]
        self.out_dir = Path(self.out_dir)
        if not self.models:
            raise InvalidArgumentError("at least one model path is required")
        if not self.methods:
            raise InvalidArgumentError("at least one method is required")
        if not self.metrics:
            raise InvalidArgumentError("at least one metric is required")
        for tag in self.methods:
            parse_method(tag)
        for metric in self.metrics:
            if metric not in METRIC_IDS:
                raise InvalidArgumentError(
                    f"unknown metric {metric!r}; expected one of {', '.join(METRIC_IDS)}"
                )
        steps = sorted(set(int(s) for s in self.steps))
        if not steps or steps[0] < 1:
            raise InvalidArgumentError("steps must be positive integers")
        self.steps = steps
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")
        if not 1 <= self.quality <= 100:
            raise InvalidArgumentError("quality must be in 1..100")


_CONFIG_LIST_KEYS = {"models", "methods", "metrics", "steps"}
_CONFIG_KEYS = {"manifest", "models", "methods", "steps", "metrics", "seed",
                "workers", "out", "quality"}


def read_config_file(path) -> dict:
    """Parse the flat key=value config format (lists comma-separated)."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise InvalidArgumentError(f"{path}:{lineno}: expected key=value, got {line!r}")
        if key not in _CONFIG_KEYS:
            raise InvalidArgumentError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _CONFIG_LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def config_from_mapping(values: dict) -> BenchmarkConfig:
    try:
        manifest = values["manifest"]
        models = values["models"]
        out_dir = values["out"]
    except KeyError as missing:
        raise InvalidArgumentError(f"config is missing required key {missing}") from None
    kwargs = {}
    if "methods" in values:
        kwargs["methods"] = list(values["methods"])
    if "metrics" in values:
        kwargs["metrics"] = list(values["metrics"])
    if "steps" in values:
        kwargs["steps"] = [int(s) for s in values["steps"]]
    for key in ("seed", "workers", "quality"):
        if key in values:
            kwargs[key] = int(values[key])
    return BenchmarkConfig(manifest=manifest, models=list(models), out_dir=out_dir, **kwargs)


@dataclass(frozen=True)
class ResultRow:
    model: str
    method: str
    steps: int
    metric: str
    value: float
    images: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise InvalidArgumentError("result values must be finite")
        if self.images < 1:
            raise InvalidArgumentError("result rows need a positive image count")


def write_rows_csv(rows: list[ResultRow], path, precision: str = "%.6g") -> None:
    lines = ["model,method,steps,metric,value,images\n"]
    for row in rows:
        lines.append(
            f"{row.model},{row.method},{row.steps},{row.metric},"
            f"{precision % row.value},{row.images}\n"
        )
    Path(path).write_text("".join(lines), encoding="ascii")


def _evaluate_image(task) -> dict:
    """All metric values for one image; runs inside worker processes."""
    model, img, label, methods, steps_list, metrics, quality = task
    out: dict[tuple[str, int, str], float] = {}
    p_original = float(model.predict(img)[label])
    for tag in methods:
        for steps in steps_list:
            attr = compute_attribution(tag, model, label, img, steps)
            sal = channel_collapse(attr)
            out[(tag, steps, COMPLETENESS_METRIC)] = completeness_gap(attr)
            if "insertion-prob" in metrics or "insertion-ratio" in metrics:
                curve = insertion_curve(model, label, img, sal)
                if "insertion-prob" in metrics:
                    out[(tag, steps, "insertion-prob")] = insertion_score(curve, "probability")
                if "insertion-ratio" in metrics:
                    out[(tag, steps, "insertion-ratio")] = insertion_score(
                        curve, "probability-ratio", p_original
                    )
            for metric, (estimator, y_mode) in _PIC_METRICS.items():
                if metric in metrics:
                    curve = pic_curve(model, label, img, sal, estimator=estimator, y_mode=y_mode)
                    out[(tag, steps, metric)] = auc(curve)
            if "stability" in metrics:
                attr_c = compute_attribution(tag, model, label, compress(img, quality), steps)
                mse = saliency_mse(sal, channel_collapse(attr_c))
                out[(tag, steps, "stability")] = capped_neg_log(mse)
                out[(tag, steps, "stability-mse")] = mse
    return out


def _filter_correct(model: DifferentiableModel, ids, images, labels):
    probs = model.predict_many(images)
    keep = probs.argmax(axis=1) == np.asarray(labels)
    kept = [(i, img, lab) for (i, img, lab), ok in zip(zip(ids, images, labels), keep) if ok]
    return kept


def _run_jobs(tasks: list, workers: int) -> list[dict]:
    if workers == 1:
        return [_evaluate_image(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_image, tasks, chunksize=1))


@dataclass
class BenchmarkOutcome:
    rows: list[ResultRow]
    per_image: dict[str, list[tuple[str, dict]]]  # model id -> [(image id, values)]
    correct_counts: dict[str, tuple[int, int]]


def _model_id(path: Path) -> str:
    return path.stem


def run_cells(config: BenchmarkConfig, extra_metrics: tuple[str, ...] = ()) -> BenchmarkOutcome:
    """Evaluate every (model, method, steps, metric) cell of the config."""
    if not config.manifest.exists():
        raise BenchmarkError(f"manifest not found: {config.manifest}")
    for model_path in config.models:
        if not model_path.exists():
            raise BenchmarkError(f"model file not found: {model_path}")
    ids, images, labels = load_manifest_images(config.manifest)
    rows: list[ResultRow] = []
    per_image: dict[str, list[tuple[str, dict]]] = {}
    correct_counts: dict[str, tuple[int, int]] = {}
    metric_order = list(config.metrics) + [m for m in extra_metrics if m not in config.metrics]
    for model_path in config.models:
        model = load_model(model_path)
        model_id = _model_id(model_path)
        kept = _filter_correct(model, ids, images, labels)
        correct_counts[model_id] = (len(kept), len(ids))
        if not kept:
            raise BenchmarkError(
                f"model {model_id} classified none of the {len(ids)} manifest images correctly"
            )
        tasks = [
            (model, img, lab, tuple(config.methods), tuple(config.steps),
             frozenset(config.metrics), config.quality)
            for (_, img, lab) in kept
        ]
        results = _run_jobs(tasks, config.workers)
        per_image[model_id] = [(img_id, res) for (img_id, _, _), res in zip(kept, results)]
        for method in config.methods:
            for steps in config.steps:
                for metric in metric_order:
                    values = [res[(method, steps, metric)] for res in results]
                    rows.append(ResultRow(model=model_id, method=method, steps=steps,
                                          metric=metric, value=float(np.median(values)),
                                          images=len(values)))
    return BenchmarkOutcome(rows=rows, per_image=per_image, correct_counts=correct_counts)


def _write_provenance(config: BenchmarkConfig, outcome: BenchmarkOutcome, path) -> None:
    lines = [
        f"manifest={config.manifest}\n",
        f"methods={','.join(config.methods)}\n",
        f"steps={','.join(str(s) for s in config.steps)}\n",
        f"metrics={','.join(config.metrics)}\n",
        f"seed={config.seed}\n",
        f"workers={config.workers}\n",
        f"quality={config.quality}\n",
    ]
    for model_id, (correct, total) in outcome.correct_counts.items():
        lines.append(f"model={model_id}: correct={correct} of={total}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def run_benchmark(config: BenchmarkConfig) -> list[ResultRow]:
    """Full benchmark: results.csv, a full-precision sidecar, provenance, figure."""
    outcome = run_cells(config)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_csv(outcome.rows, config.out_dir / "results.csv")
    write_rows_csv(outcome.rows, config.out_dir / "results_full.csv", precision="%.17g")
    _write_provenance(config, outcome, config.out_dir / "provenance.txt")
    if "stability" in config.metrics:
        _write_stability_csv(config, outcome, config.out_dir / "stability.csv")
    from . import figures

    figures.render_results_figure(outcome.rows, config.out_dir / "results.png")
    return outcome.rows


def _write_stability_csv(config: BenchmarkConfig, outcome: BenchmarkOutcome, path) -> None:
    # When several step counts ran, the method label carries the step count so
    # the fixed "method,image_id,mse,neg_log_mse" schema stays unambiguous.
    lines = ["method,image_id,mse,neg_log_mse\n"]
    for model_id in outcome.per_image:
        entries = outcome.per_image[model_id]
        for method in config.methods:
            for steps in config.steps:
                label = method if len(config.steps) == 1 else f"{method}@{steps}"
                per = [
                    (img_id, res[(method, steps, "stability-mse")],
                     res[(method, steps, "stability")])
                    for img_id, res in entries
                ]
                for img_id, mse, neg_log in per:
                    lines.append(f"{label},{img_id},{mse:.17g},{neg_log:.17g}\n")
                med_mse = float(np.median([p[1] for p in per]))
                med_nlm = float(np.median([p[2] for p in per]))
                lines.append(f"{label},median,{med_mse:.17g},{med_nlm:.17g}\n")
    Path(path).write_text("".join(lines), encoding="ascii")


def sweep_steps(config: BenchmarkConfig) -> tuple[list[ResultRow], list[tuple]]:
    """Per-step scores plus a (max steps - min steps) delta table per method/metric."""
    if len(config.steps) < 2:
        raise InvalidArgumentError("a step sweep needs at least two step counts")
    outcome = run_cells(config, extra_metrics=(COMPLETENESS_METRIC,))
    lo, hi = config.steps[0], config.steps[-1]
    by_cell = {(r.model, r.method, r.steps, r.metric): r.value for r in outcome.rows}
    deltas = []
    for model_path in config.models:
        model_id = _model_id(model_path)
        for method in config.methods:
            for metric in config.metrics:
                delta = by_cell[(model_id, method, hi, metric)] - by_cell[(model_id, method, lo, metric)]
                deltas.append((model_id, method, metric, delta))
    config.out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_csv(outcome.rows, config.out_dir / "results.csv")
    write_rows_csv(outcome.rows, config.out_dir / "results_full.csv", precision="%.17g")
    _write_deltas_csv(deltas, config.out_dir / "deltas.csv")
    _write_provenance(config, outcome, config.out_dir / "provenance.txt")
    from . import figures

    figures.render_sweep_figure(outcome.rows, config.out_dir / "sweep.png")
    return outcome.rows, deltas


def _write_deltas_csv(deltas: list[tuple], path) -> None:
    lines = ["model,method,metric,delta\n"]
    for model_id, method, metric, delta in deltas:
        lines.append(f"{model_id},{method},{metric},{delta:.17g}\n")
    Path(path).write_text("".join(lines), encoding="ascii")


def run_stability(config: BenchmarkConfig, steps: int = 32) -> list[StabilityReport]:
    """The compression-stability experiment on its own, with CSV and figure."""
    stability_config = replace(config, metrics=["stability"], steps=[steps])
    outcome = run_cells(stability_config)
    reports = []
    for model_id, entries in outcome.per_image.items():
        for tag in stability_config.methods:
            per = tuple(
                StabilityEntry(method=tag, image_id=img_id,
                               mse=res[(tag, steps, "stability-mse")],
                               neg_log_mse=res[(tag, steps, "stability")])
                for img_id, res in entries
            )
            reports.append(StabilityReport(method=tag, entries=per))
    config.out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["method,image_id,mse,neg_log_mse\n"]
    for report in reports:
        for e in report.entries:
            lines.append(f"{e.method},{e.image_id},{e.mse:.17g},{e.neg_log_mse:.17g}\n")
        lines.append(
            f"{report.method},median,{report.median_mse:.17g},{report.median_neg_log_mse:.17g}\n"
        )
    (config.out_dir / "stability.csv").write_text("".join(lines), encoding="ascii")
    _write_provenance(stability_config, outcome, config.out_dir / "provenance.txt")
    from . import figures

    figures.render_stability_figure(reports, config.out_dir / "stability.png")
    return reports


def render_saliency(attr_path, out_path) -> None:
    """Attribution file -> grayscale PGM: collapse, absolute value, min-max."""
    attr = load_attribution(attr_path)
    saliency = np.abs(channel_collapse(attr, mode="signed"))
    write_pnm(Image(minmax_normalize(saliency)), out_path)


@dataclass
class ToySuite:
    manifest: Path
    train_manifest: Path
    test_manifest: Path
    model_path: Path
    train_accuracy: float
    test_accuracy: float


def make_toy_suite(seed: int, out_dir, train_count: int = 300, test_count: int = 100,
                   epochs: int = 150, learning_rate: float = 0.2,
                   batch_size: int = 16) -> ToySuite:
    """Generate the toy dataset, train the reference convnet, write everything.

    Outputs under `out_dir`: images/ as PGM, manifest.csv (all images),
    train.csv / test.csv splits, model.atbm, provenance.txt.  Byte-identical
    for a fixed seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    full = make_toy_dataset(train_count + test_count, seed)
    train = ToyDataset(images=full.images[:train_count], labels=full.labels[:train_count],
                       seed=seed)
    manifest = save_dataset(full, out_dir)
    records = [(f"images/img_{i:04d}.pgm", full.labels[i]) for i in range(len(full.images))]
    train_manifest = out_dir / "train.csv"
    test_manifest = out_dir / "test.csv"
    write_manifest(train_manifest, records[:train_count])
    write_manifest(test_manifest, records[train_count:])
    model = train_toy(train, epochs=epochs, learning_rate=learning_rate, seed=seed,
                      batch_size=batch_size)
    model_path = out_dir / "model.atbm"
    save_model(model, model_path)
    train_acc = accuracy(model, full.images[:train_count], full.labels[:train_count])
    test_acc = accuracy(model, full.images[train_count:], full.labels[train_count:])
    provenance = [
        f"seed={seed}\n",
        f"train_count={train_count}\n",
        f"test_count={test_count}\n",
        f"epochs={epochs}\n",
        f"learning_rate={learning_rate}\n",
        f"batch_size={batch_size}\n",
        f"train_accuracy={train_acc:.17g}\n",
        f"test_accuracy={test_acc:.17g}\n",
    ]
    (out_dir / "provenance.txt").write_text("".join(provenance), encoding="ascii")
    return ToySuite(manifest=manifest, train_manifest=train_manifest,
                    test_manifest=test_manifest, model_path=model_path,
                    train_accuracy=train_acc, test_accuracy=test_acc)
