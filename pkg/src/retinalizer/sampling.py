"""Episode and batch sampling for in-context training and evaluation.

A batch holds ``batch_size`` episodes of one task: the task is drawn uniformly
over the seen tasks (equalizing expected task frequency regardless of dataset
size), then query and context samples are drawn uniformly within the task's
dataset, context disjoint from the query. Semantic episodes are redrawn until
at least ``min_nonempty`` context outputs carry foreground; recoloring (always
on for the recolored-fluid task, optional for seen semantic tasks) substitutes
fresh class colors coherently across the context outputs and the target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TaskParams, TrainConfig
from .corpus import DatasetPool
from .errors import SamplingError
from .palette import DEFAULT_DELTA_MIN, Palette, random_recolor
from .taskgen import TaskDescriptor, materialize

SEMANTIC_LIKE = ("semantic",)


@dataclass
class EpisodeItem:
    context: list[tuple[np.ndarray, np.ndarray]]
    query: np.ndarray
    target: np.ndarray
    task_id: str
    query_sample_id: str
    context_sample_ids: list[str]
    palette: Palette | None = None
    target_labels: np.ndarray | None = None

    def __iter__(self):
        # unpacks as (context, query, target, ...) for tensor stacking
        yield self.context
        yield self.query
        yield self.target
        yield self.task_id


@dataclass
class Batch:
    items: list[EpisodeItem]
    task_id: str
    step: int | None = None

    @property
    def sample_ids(self) -> list[str]:
        out = []
        for item in self.items:
            out.append(item.query_sample_id)
            out.extend(item.context_sample_ids)
        return out


def _needs_nonempty(task: TaskDescriptor) -> bool:
    return task.family in SEMANTIC_LIKE


def _present_palette(full: Palette, label_maps: list[np.ndarray]) -> Palette:
    present: set[int] = set()
    for lm in label_maps:
        present.update(int(v) for v in np.unique(lm))
    ids = tuple(i for i in full.ids if i in present)
    if not ids:
        return Palette(ids=(), colors=np.zeros((0, 3), dtype=np.float32))
    colors = np.stack([full.color_of(i) for i in ids])
    return Palette(ids=ids, colors=colors)


def sample_episode(
    pool: DatasetPool,
    task: TaskDescriptor,
    params: TaskParams,
    rng: np.random.Generator,
    context_size: int,
    min_nonempty: int = 2,
    retries: int = 200,
    query_split: str = "train",
    context_split: str = "train",
    query_id: str | None = None,
    recolor: bool = False,
    delta_min: float = DEFAULT_DELTA_MIN,
) -> EpisodeItem:
    """Draw one (context set, query, target) episode for ``task``."""
    query_pool = pool.samples(task.dataset, query_split)
    if not query_pool:
        raise SamplingError(f"task {task.id}: split {query_split!r} is empty")
    if query_id is None:
        query_id = query_pool[int(rng.integers(len(query_pool)))].id
    candidates = [ps for ps in pool.samples(task.dataset, context_split) if ps.id != query_id]
    if len(candidates) < context_size:
        raise SamplingError(
            f"task {task.id}: needs {context_size} context samples disjoint from the "
            f"query but split {context_split!r} offers only {len(candidates)}"
        )
    if _needs_nonempty(task):
        for _ in range(retries):
            picked = rng.choice(len(candidates), size=context_size, replace=False)
            if sum(candidates[i].record.has_fg for i in picked) >= min_nonempty:
                break
        else:
            raise SamplingError(
                f"task {task.id}: could not draw a context with >= {min_nonempty} "
                f"non-empty masks in {retries} tries"
            )
    else:
        picked = rng.choice(len(candidates), size=context_size, replace=False)
    context_ids = [candidates[i].id for i in picked]

    query_ts = materialize(pool, task, query_id, params, int(rng.integers(2**63)))
    context_pairs = []
    context_labels = []
    for cid in context_ids:
        ts = materialize(pool, task, cid, params, int(rng.integers(2**63)))
        context_pairs.append((ts.input, ts.output))
        if ts.target_labels is not None:
            context_labels.append(ts.target_labels)

    target = query_ts.output
    palette = query_ts.palette
    target_labels = query_ts.target_labels
    do_recolor = task.variant == "recolored_fluid_seg" or (
        recolor and task.seen and task.family in SEMANTIC_LIKE
    )
    if do_recolor and palette is not None:
        label_maps = context_labels + ([target_labels] if target_labels is not None else [])
        episode_palette = _present_palette(palette, label_maps)
        context_pairs, target, palette = random_recolor(
            context_pairs, target, episode_palette, rng, delta_min=delta_min
        )
    return EpisodeItem(
        context=context_pairs,
        query=query_ts.input,
        target=target,
        task_id=task.id,
        query_sample_id=query_id,
        context_sample_ids=context_ids,
        palette=palette,
        target_labels=target_labels,
    )


def choose_task(tasks: list[TaskDescriptor], rng: np.random.Generator) -> TaskDescriptor:
    """Uniform-over-tasks draw; the balancing mechanism of the training loop."""
    if not tasks:
        raise SamplingError("no tasks to sample from")
    return tasks[int(rng.integers(len(tasks)))]


def sample_batch(
    pool: DatasetPool,
    tasks: list[TaskDescriptor],
    params: TaskParams,
    cfg: TrainConfig,
    rng: np.random.Generator,
    step: int | None = None,
) -> Batch:
    """One training batch: a uniformly chosen task, ``batch_size`` episodes of it."""
    task = choose_task(tasks, rng)
    items = [
        sample_episode(
            pool,
            task,
            params,
            rng,
            context_size=cfg.context_size,
            min_nonempty=cfg.min_nonempty_context_masks,
            retries=cfg.sampling_retries,
            recolor=cfg.recolor_enabled,
        )
        for _ in range(cfg.batch_size)
    ]
    return Batch(items=items, task_id=task.id, step=step)
