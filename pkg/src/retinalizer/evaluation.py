"""Evaluation protocol: baselines, per-task scoring, and the report tables.

Semantic predictions are scored in class space: the palette is re-extracted
from the episode's context outputs (exactly what a practitioner's few examples
expose), the prediction is snapped to those colors, and the snapped colors are
mapped back to class ids through the episode palette. A prediction whose
context yields no usable palette scores 0 with a warning rather than aborting
the run. Generative and transformation tasks score MAE directly on the image.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import EvalConfig, ExperimentConfig, TaskParams
from .corpus import DatasetPool
from .errors import ContextError, CodecError, DataError, SamplingError
from .imaging import save_image_png
from .metrics import f1, iou, mae
from .network import load_checkpoint, predict
from .palette import decode_to_classes, extract_context_colors
from .phantom import derive_sample_seed
from .sampling import EpisodeItem, sample_episode
from .taskgen import TaskDescriptor, UNSEEN_VARIANTS, unseen_tasks
from .training import train

log = logging.getLogger(__name__)

PREDICTOR_COLUMNS = ("Copy", "Retinalizer", "Retinalizer Rec.", "Single-task")


@dataclass
class MetricReport:
    task_id: str
    predictor: str
    metric: str
    mean: float
    std: float
    count: int
    scores: list[float] = field(default_factory=list)

    @classmethod
    def from_scores(cls, task_id: str, predictor: str, metric: str, scores: list[float]):
        arr = np.asarray(scores, dtype=np.float64)
        return cls(
            task_id=task_id,
            predictor=predictor,
            metric=metric,
            mean=float(arr.mean()) if arr.size else float("nan"),
            std=float(arr.std()) if arr.size else float("nan"),
            count=int(arr.size),
            scores=[float(s) for s in scores],
        )


def copy_baseline(context, rng: np.random.Generator) -> np.ndarray:
    """The naive lower bound: return one context output chosen at random."""
    if len(context) == 0:
        raise ContextError("copy baseline needs a non-empty context set")
    return context[int(rng.integers(len(context)))][1]


class CopyPredictor:
    name = "Copy"

    def __call__(self, context, query, rng):
        return copy_baseline(context, rng)


class ModelPredictor:
    def __init__(self, model, name: str):
        self.model = model
        self.name = name

    @classmethod
    def from_checkpoint(cls, path, name: str) -> "ModelPredictor":
        return cls(load_checkpoint(path), name)

    def __call__(self, context, query, rng):
        return predict(self.model, context, query)


def _decode_prediction(pred_img: np.ndarray, episode: EpisodeItem, max_classes: int):
    """Snap a prediction to the context colors and translate to class ids."""
    extracted = extract_context_colors(episode.context, max_classes=max_classes)
    decoded = decode_to_classes(pred_img, extracted)
    class_of = {}
    for pos, color in zip(extracted.ids, extracted.colors):
        matches = np.flatnonzero(
            (np.abs(episode.palette.colors - color) < 0.5 / 255.0).all(axis=1)
        )
        if matches.size == 0:
            raise CodecError(
                f"context color {tuple(np.round(color * 255).astype(int))} is not in "
                f"the episode palette"
            )
        class_of[pos] = episode.palette.ids[int(matches[0])]
    labels = np.zeros_like(decoded.labels)
    for pos, class_id in class_of.items():
        labels[decoded.labels == pos] = class_id
    return labels


def score_episode(
    pred_img: np.ndarray, episode: EpisodeItem, metric: str, max_classes: int = 16
) -> float:
    if metric == "MAE":
        return mae(pred_img, episode.target)
    try:
        pred_labels = _decode_prediction(pred_img, episode, max_classes)
    except (ContextError, CodecError) as exc:
        log.warning("task %s: decode failed (%s); scoring 0", episode.task_id, exc)
        return 0.0
    if metric == "IoU":
        return iou(pred_labels, episode.target_labels)
    if metric == "F1":
        return f1(pred_labels > 0, episode.target_labels > 0)
    raise DataError(f"unknown metric {metric!r}")


def evaluate(
    predictor,
    pool: DatasetPool,
    task: TaskDescriptor,
    params: TaskParams,
    cfg: EvalConfig,
    split: str = "test",
    context_split: str = "train",
    predictor_name: str | None = None,
    dump_dir=None,
) -> MetricReport:
    """Score ``predictor`` on every ``split`` sample of ``task``.

    Contexts are drawn (seeded) from ``context_split`` with the same
    non-empty-mask rule used in training, so every query of a task is judged
    against the same context across predictors.
    """
    cfg.validate()
    name = predictor_name or getattr(predictor, "name", predictor.__class__.__name__)
    sample_ids = sorted(ps.id for ps in pool.samples(task.dataset, split))
    if not sample_ids:
        raise SamplingError(f"task {task.id}: split {split!r} is empty")
    if cfg.max_test_samples is not None:
        sample_ids = sample_ids[: cfg.max_test_samples]
    scores = []
    for idx, qid in enumerate(sample_ids):
        rng = np.random.default_rng(derive_sample_seed(cfg.seed, f"eval:{task.id}", idx))
        episode = sample_episode(
            pool,
            task,
            params,
            rng,
            context_size=cfg.context_size,
            min_nonempty=cfg.min_nonempty_context_masks,
            retries=200,
            query_split=split,
            context_split=context_split,
            query_id=qid,
        )
        pred_img = predictor(episode.context, episode.query, rng)
        scores.append(score_episode(pred_img, episode, task.metric))
        if dump_dir is not None:
            panel = np.concatenate([episode.query, episode.target, pred_img], axis=1)
            out = Path(dump_dir) / f"{task.id.replace(':', '_')}_{idx:03d}_{name}.png"
            out.parent.mkdir(parents=True, exist_ok=True)
            save_image_png(np.clip(panel, 0.0, 1.0), out)
    return MetricReport.from_scores(task.id, name, task.metric, scores)


# ---------------------------------------------------------------------------
# report tables


@dataclass
class ReportTable:
    title: str
    rows: list[str]  # task ids
    columns: list[str]  # predictor names
    cells: dict[tuple[str, str], MetricReport]
    metrics: dict[str, str]  # task id -> metric name

    def render(self) -> str:
        widths = [max(len(r) for r in self.rows + ["Task"]) + 2, 8]
        header = ["Task".ljust(widths[0]), "Metric".ljust(widths[1])]
        header += [c.rjust(18) for c in self.columns]
        lines = [self.title, "".join(header), "-" * (sum(widths) + 18 * len(self.columns))]
        for task_id in self.rows:
            cols = [task_id.ljust(widths[0]), self.metrics[task_id].ljust(widths[1])]
            for col in self.columns:
                rep = self.cells.get((task_id, col))
                cell = "-" if rep is None else f"{rep.mean:.3f} ± {rep.std:.3f}"
                cols.append(cell.rjust(18))
            lines.append("".join(cols))
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "metric"] + [c for c in self.columns for _ in ("mean", "std")])
            for task_id in self.rows:
                row = [task_id, self.metrics[task_id]]
                for col in self.columns:
                    rep = self.cells.get((task_id, col))
                    row += ["", ""] if rep is None else [f"{rep.mean:.6f}", f"{rep.std:.6f}"]
                writer.writerow(row)

    def scores_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "predictor", "index", "score"])
            for (task_id, col), rep in sorted(self.cells.items()):
                for i, s in enumerate(rep.scores):
                    writer.writerow([task_id, col, i, f"{s:.6f}"])


def _evaluate_predictors(
    predictors: dict[str, object],
    pool: DatasetPool,
    tasks: list[TaskDescriptor],
    params: TaskParams,
    cfg: EvalConfig,
    title: str,
    split: str = "test",
    context_split: str = "train",
) -> ReportTable:
    cells = {}
    for task in tasks:
        for name, predictor in predictors.items():
            cells[(task.id, name)] = evaluate(
                predictor, pool, task, params, cfg,
                split=split, context_split=context_split, predictor_name=name,
            )
    return ReportTable(
        title=title,
        rows=[t.id for t in tasks],
        columns=list(predictors),
        cells=cells,
        metrics={t.id: t.metric for t in tasks},
    )


def _load_predictors(checkpoints: dict[str, object]) -> dict[str, object]:
    predictors: dict[str, object] = {"Copy": CopyPredictor()}
    for name, source in checkpoints.items():
        if source is None:
            log.warning("no checkpoint for column %r; skipping it", name)
            continue
        if isinstance(source, (str, Path)):
            predictors[name] = ModelPredictor.from_checkpoint(source, name)
        elif callable(source):
            predictors[name] = source
        else:
            predictors[name] = ModelPredictor(source, name)
    return predictors


def run_unseen_suite(
    checkpoints: dict[str, object],
    pool: DatasetPool,
    params: TaskParams,
    cfg: EvalConfig,
) -> ReportTable:
    """Evaluate Copy plus every provided checkpoint on all unseen tasks."""
    tasks = unseen_tasks(pool, params)
    predictors = _load_predictors(checkpoints)
    return _evaluate_predictors(
        predictors, pool, tasks, params, cfg, title="Unseen-task generalization"
    )


# ---------------------------------------------------------------------------
# leave-one-vendor-out domain generalization


RETOUCH_UNSEEN_VARIANTS = ("recolored_fluid_seg", "sp_denoise", "inpaint2x", "outpaint")


def retouch_unseen_tasks(params: TaskParams) -> list[TaskDescriptor]:
    """The held-out tasks of the vendor-holdout protocol, all on retouch data."""
    metric = {"recolored_fluid_seg": "IoU", "sp_denoise": "MAE",
              "inpaint2x": "MAE", "outpaint": "MAE"}
    fam = {"recolored_fluid_seg": "semantic", "sp_denoise": "generative",
           "inpaint2x": "generative", "outpaint": "generative"}
    assert set(metric) <= set(UNSEEN_VARIANTS)
    return [
        TaskDescriptor(
            id=f"unseen:{v}:retouch",
            family=fam[v],
            variant=v,
            dataset="retouch",
            seen=False,
            metric=metric[v],
        )
        for v in RETOUCH_UNSEEN_VARIANTS
    ]


def audit_holdout(audit_path, pool_all: DatasetPool, vendor: str) -> list[str]:
    """Sample ids of ``vendor`` that appear in a training run's sample log."""
    import json

    held = {s.id for m in pool_all.by_family.get("retouch", [])
            for s in m.samples if s.vendor == vendor}
    leaked = set()
    with open(audit_path) as fh:
        for line in fh:
            rec = json.loads(line)
            leaked.update(set(rec["samples"]) & held)
    return sorted(leaked)


@dataclass
class HoldoutResult:
    vendor: str
    table: ReportTable
    leaked_ids: list[str]
    run_dirs: dict[str, Path]


def run_domain_generalization(
    manifests,
    exp: ExperimentConfig,
    out_dir,
    seen_task_fn=None,
) -> list[HoldoutResult]:
    """Three-fold leave-one-vendor-out protocol over the retouch trio.

    For each vendor: retrain both models with that vendor's samples excluded
    from every task, then evaluate the retouch-specific unseen tasks with both
    queries and contexts drawn only from the held-out vendor. The returned
    audit lists any held-out ids found in the training sample logs (must be
    empty).
    """
    from .taskgen import seen_tasks as default_seen_tasks

    seen_task_fn = seen_task_fn or default_seen_tasks
    out_dir = Path(out_dir)
    pool_all = DatasetPool(manifests)
    vendors = sorted(
        {ps.vendor for m in pool_all.by_family["retouch"] for ps in m.samples if ps.vendor}
    )
    results = []
    for vendor in vendors:
        fold_dir = out_dir / f"holdout_{vendor}"
        train_pool = DatasetPool(manifests, exclude_vendors=(vendor,))
        eval_pool = DatasetPool(manifests, only_vendors=(vendor,))
        tasks = seen_task_fn(train_pool, exp.tasks)
        run_dirs = {}
        predictors: dict[str, object] = {"Copy": CopyPredictor()}
        for name, recolor in (("Retinalizer", False), ("Retinalizer Rec.", True)):
            cfg = replace(exp.train, recolor_enabled=recolor)
            res = train(
                train_pool, tasks, exp.model, cfg, exp.tasks, fold_dir,
                run_name=name.replace(" ", "_").replace(".", "").lower(),
            )
            run_dirs[name] = res.run_dir
            leaked = audit_holdout(res.audit_path, pool_all, vendor)
            if leaked:
                raise DataError(
                    f"holdout {vendor}: {len(leaked)} held-out samples leaked into "
                    f"training (e.g. {leaked[:3]})"
                )
            predictors[name] = ModelPredictor.from_checkpoint(res.last_checkpoint, name)
        table = _evaluate_predictors(
            predictors,
            eval_pool,
            retouch_unseen_tasks(exp.tasks),
            exp.tasks,
            exp.eval,
            title=f"Domain generalization: held-out vendor {vendor}",
        )
        results.append(
            HoldoutResult(vendor=vendor, table=table, leaked_ids=[], run_dirs=run_dirs)
        )
    return results
