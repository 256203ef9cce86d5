"""Task engine: turns (image, labels) samples into input/output training pairs.

Seen tasks (23): four semantic renderings of each labeled dataset family
(layers, dme, umn, pooled retouch), four photometric/geometric transforms and
three generative restorations on the image-only dataset. Unseen tasks (6) are
held out entirely from training and only materialized at evaluation time.

Every generator is a pure function of (sample, params, seed); the sampler and
the evaluator rely on that for reproducibility.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.morphology import convex_hull_image

from . import kernels
from .config import TaskParams
from .corpus import DatasetPool
from .errors import CodecError, ConfigurationError, PlacementError, ShapeError
from .imaging import from_uint8, save_image_png, to_uint8, validate_image, validate_labelmap
from .palette import Palette, encode_labels, quantize
from .phantom import derive_sample_seed

log = logging.getLogger(__name__)

SEMANTIC_VARIANTS = ("segmentation", "edges", "skeleton", "coarse")
TRANSFORM_VARIANTS = ("rot90", "rot270", "invert", "revert")
GENERATIVE_VARIANTS = ("gauss_denoise", "superres", "inpaint")
UNSEEN_VARIANTS = (
    "binary_layer_seg",
    "retina_boundary",
    "recolored_fluid_seg",
    "sp_denoise",
    "inpaint2x",
    "outpaint",
)

SEMANTIC_FAMILIES = ("layers", "dme", "umn", "retouch")

# (variant, dataset family) for the held-out evaluation tasks
UNSEEN_ASSIGNMENT = (
    ("binary_layer_seg", "layers"),
    ("retina_boundary", "layers"),
    ("recolored_fluid_seg", "retouch"),
    ("sp_denoise", "octdl"),
    ("inpaint2x", "octdl"),
    ("outpaint", "octdl"),
)


@dataclass(frozen=True)
class TaskDescriptor:
    id: str
    family: str  # semantic | transformation | generative
    variant: str
    dataset: str  # dataset family / pool role
    seen: bool
    metric: str  # IoU | F1 | MAE
    params: tuple[tuple[str, float], ...] = ()

    def param(self, name: str) -> float:
        for key, value in self.params:
            if key == name:
                return value
        raise KeyError(name)


@dataclass
class TaskSample:
    input: np.ndarray
    output: np.ndarray
    task: str
    source_label: np.ndarray | None = None
    # class-id rendering of the output image, used for IoU/F1 scoring
    target_labels: np.ndarray | None = None
    sample_id: str | None = None
    palette: Palette | None = None


# ---------------------------------------------------------------------------
# semantic targets


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighborhood (inside the image) contains a different id."""
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape, dtype=bool)
    mask[:-1, :] |= labels[:-1, :] != labels[1:, :]
    mask[1:, :] |= labels[1:, :] != labels[:-1, :]
    mask[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    mask[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return mask


def semantic_label_map(labels: np.ndarray, variant: str) -> np.ndarray:
    """Class-id map of the semantic target (before palette encoding)."""
    labels = validate_labelmap(labels)
    if variant == "segmentation":
        return labels.copy()
    if variant == "edges":
        out = np.zeros_like(labels)
        mask = boundary_mask(labels)
        out[mask] = labels[mask]
        return out
    if variant == "skeleton":
        out = np.zeros_like(labels)
        for class_id in np.unique(labels):
            if class_id == 0:
                continue
            skel = kernels.thin_zhang_suen((labels == class_id).astype(np.uint8))
            out[skel.astype(bool)] = class_id
        return out
    if variant == "coarse":
        out = np.zeros_like(labels)
        structure = np.ones((3, 3), dtype=bool)
        for class_id in np.unique(labels):
            if class_id == 0:
                continue
            comp, n = ndimage.label(labels == class_id, structure=structure)
            for c in range(1, n + 1):
                out[convex_hull_image(comp == c)] = class_id
        return out
    raise ConfigurationError(f"unknown semantic variant {variant!r}")


def make_semantic_target(labels: np.ndarray, palette: Palette, variant: str) -> np.ndarray:
    """Render the semantic target image for one of the four variants."""
    label_map = semantic_label_map(labels, variant)
    try:
        return encode_labels(label_map, palette)
    except CodecError as exc:
        raise CodecError(f"semantic target ({variant}): {exc}") from exc


# ---------------------------------------------------------------------------
# transformation pairs


def make_transform_pair(image: np.ndarray, variant: str) -> tuple[np.ndarray, np.ndarray]:
    image = validate_image(image)
    if variant in ("rot90", "rot270"):
        if image.shape[0] != image.shape[1]:
            raise ShapeError("rotation tasks require square images")
        k = 1 if variant == "rot90" else 3
        return image, np.ascontiguousarray(np.rot90(image, k=k))
    if variant == "invert":
        return image, _invert_8bit(image)
    if variant == "revert":
        return _invert_8bit(image), image
    raise ConfigurationError(f"unknown transform variant {variant!r}")


def _invert_8bit(image: np.ndarray) -> np.ndarray:
    # invert on the 8-bit scale (255 - v): float 1.0-x is not an exact
    # involution, so double inversion would not round-trip bit-identically
    return from_uint8(255 - to_uint8(image))


# ---------------------------------------------------------------------------
# generative pairs


def _patch_side(fraction: float, h: int, w: int) -> int:
    return max(1, int(round(fraction * min(h, w))))


def _zero_patch(img: np.ndarray, top: int, left: int, side: int) -> None:
    img[top : top + side, left : left + side] = 0.0


def downscale_area(image: np.ndarray, factor: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h % factor or w % factor:
        raise ShapeError(f"image size {h}x{w} not divisible by factor {factor}")
    return image.reshape(h // factor, factor, w // factor, factor, -1).mean(axis=(1, 3))


def make_generative_pair(
    image: np.ndarray, variant: str, params: TaskParams, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    image = validate_image(image)
    params.validate()
    rng = np.random.default_rng(seed)
    h, w = image.shape[:2]
    if variant == "gauss_denoise":
        # single-channel noise: degraded scans stay grayscale like the originals
        noise = rng.normal(0.0, params.gauss_sigma, size=(h, w, 1)).astype(np.float32)
        return np.clip(image + noise, 0.0, 1.0), image
    if variant == "superres":
        f = params.superres_factor
        if f == 1:
            return image.copy(), image
        small = downscale_area(image, f)
        up = np.repeat(np.repeat(small, f, axis=0), f, axis=1).astype(np.float32)
        return up, image
    if variant == "inpaint":
        side = _patch_side(params.inpaint_fraction, h, w)
        degraded = image.copy()
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        _zero_patch(degraded, top, left, side)
        return degraded, image
    raise ConfigurationError(f"unknown generative variant {variant!r}")


# ---------------------------------------------------------------------------
# unseen pairs

_PLACEMENT_RETRIES = 200


def _binary_palette(fg_8bit: tuple[int, int, int]) -> Palette:
    colors = np.array([[0, 0, 0], list(fg_8bit)], dtype=np.float32) / 255.0
    return Palette(ids=(0, 1), colors=quantize(colors))


def make_unseen_pair(
    image: np.ndarray,
    labels: np.ndarray | None,
    variant: str,
    params: TaskParams,
    seed: int,
    palette: Palette | None = None,
) -> TaskSample:
    """Materialize one held-out task pair.

    ``recolored_fluid_seg`` returns the plain fluid-segmentation rendering
    here; the episode sampler applies one coherent random recoloring across
    the whole context set plus target (a per-pair recolor would make the
    context colors useless for predicting the query).
    """
    image = validate_image(image)
    params.validate()
    rng = np.random.default_rng(seed)
    h, w = image.shape[:2]

    if variant in ("binary_layer_seg", "retina_boundary", "recolored_fluid_seg"):
        if labels is None:
            raise ConfigurationError(f"{variant} requires a label map")
        labels = validate_labelmap(labels, image)

    if variant == "binary_layer_seg":
        target_labels = (labels > 0).astype(np.int32)
        pal = _binary_palette(params.binary_fg)
        return TaskSample(image, encode_labels(target_labels, pal), variant,
                          source_label=labels, target_labels=target_labels, palette=pal)
    if variant == "retina_boundary":
        merged = (labels > 0).astype(np.int32)
        contour = np.zeros_like(merged)
        mask = boundary_mask(merged) & (merged > 0)
        contour[mask] = 1
        pal = _binary_palette(params.boundary_fg)
        return TaskSample(image, encode_labels(contour, pal), variant,
                          source_label=labels, target_labels=contour, palette=pal)
    if variant == "recolored_fluid_seg":
        if palette is None:
            raise ConfigurationError("recolored_fluid_seg requires the dataset palette")
        target = encode_labels(labels, palette)
        return TaskSample(image, target, variant,
                          source_label=labels, target_labels=labels.copy(), palette=palette)
    if variant == "sp_denoise":
        degraded = image.copy()
        count = int(round(params.sp_density * h * w))
        if count > 0:
            flat = rng.choice(h * w, size=count, replace=False)
            ys, xs = np.divmod(flat, w)
            values = np.zeros(count, dtype=np.float32)
            values[count // 2 :] = 1.0
            degraded[ys, xs] = values[:, None]
        return TaskSample(degraded, image, variant)
    if variant == "inpaint2x":
        side = _patch_side(params.inpaint2x_fraction, h, w)
        degraded = image.copy()
        placed: list[tuple[int, int]] = []
        for _ in range(2):
            for _ in range(_PLACEMENT_RETRIES):
                top = int(rng.integers(0, h - side + 1))
                left = int(rng.integers(0, w - side + 1))
                if all(
                    abs(top - t) >= side or abs(left - l) >= side for t, l in placed
                ):
                    placed.append((top, left))
                    _zero_patch(degraded, top, left, side)
                    break
            else:
                raise PlacementError(
                    f"could not place 2 non-overlapping {side}x{side} patches "
                    f"in {h}x{w} after {_PLACEMENT_RETRIES} tries"
                )
        return TaskSample(degraded, image, variant)
    if variant == "outpaint":
        width = max(1, int(round(params.outpaint_fraction * min(h, w))))
        degraded = image.copy()
        degraded[:width] = 0.0
        degraded[-width:] = 0.0
        degraded[:, :width] = 0.0
        degraded[:, -width:] = 0.0
        return TaskSample(degraded, image, variant)
    raise ConfigurationError(f"unknown unseen variant {variant!r}")


# ---------------------------------------------------------------------------
# task enumeration and materialization

_METRIC_BY_SEMANTIC = {
    "segmentation": "IoU",
    "coarse": "IoU",
    "edges": "F1",
    "skeleton": "F1",
}
_METRIC_BY_UNSEEN = {
    "binary_layer_seg": "IoU",
    "retina_boundary": "F1",
    "recolored_fluid_seg": "IoU",
    "sp_denoise": "MAE",
    "inpaint2x": "MAE",
    "outpaint": "MAE",
}


def enumerate_tasks(
    pool: DatasetPool, params: TaskParams | None = None, include_unseen: bool = True
) -> list[TaskDescriptor]:
    """All seen task descriptors (exactly 23) plus the unseen ones."""
    params = params or TaskParams()
    missing = [f for f in SEMANTIC_FAMILIES + ("octdl",) if f not in pool.by_family]
    if missing:
        raise ConfigurationError(f"pool is missing dataset families: {missing}")
    tasks = []
    for fam in SEMANTIC_FAMILIES:
        for variant in SEMANTIC_VARIANTS:
            tasks.append(
                TaskDescriptor(
                    id=f"semantic:{variant}:{fam}",
                    family="semantic",
                    variant=variant,
                    dataset=fam,
                    seen=True,
                    metric=_METRIC_BY_SEMANTIC[variant],
                )
            )
    for variant in TRANSFORM_VARIANTS:
        tasks.append(
            TaskDescriptor(
                id=f"transformation:{variant}:octdl",
                family="transformation",
                variant=variant,
                dataset="octdl",
                seen=True,
                metric="MAE",
            )
        )
    gen_params = {
        "gauss_denoise": (("sigma", float(params.gauss_sigma)),),
        "superres": (("factor", float(params.superres_factor)),),
        "inpaint": (("fraction", float(params.inpaint_fraction)),),
    }
    for variant in GENERATIVE_VARIANTS:
        tasks.append(
            TaskDescriptor(
                id=f"generative:{variant}:octdl",
                family="generative",
                variant=variant,
                dataset="octdl",
                seen=True,
                metric="MAE",
                params=gen_params[variant],
            )
        )
    assert sum(t.seen for t in tasks) == 23
    if include_unseen:
        unseen_params = {
            "sp_denoise": (("density", float(params.sp_density)),),
            "inpaint2x": (("fraction", float(params.inpaint2x_fraction)),),
            "outpaint": (("fraction", float(params.outpaint_fraction)),),
        }
        family_of = {
            "binary_layer_seg": "semantic",
            "retina_boundary": "semantic",
            "recolored_fluid_seg": "semantic",
            "sp_denoise": "generative",
            "inpaint2x": "generative",
            "outpaint": "generative",
        }
        for variant, fam in UNSEEN_ASSIGNMENT:
            tasks.append(
                TaskDescriptor(
                    id=f"unseen:{variant}:{fam}",
                    family=family_of[variant],
                    variant=variant,
                    dataset=fam,
                    seen=False,
                    metric=_METRIC_BY_UNSEEN[variant],
                    params=unseen_params.get(variant, ()),
                )
            )
    return tasks


def seen_tasks(pool: DatasetPool, params: TaskParams | None = None) -> list[TaskDescriptor]:
    return [t for t in enumerate_tasks(pool, params) if t.seen]


def unseen_tasks(pool: DatasetPool, params: TaskParams | None = None) -> list[TaskDescriptor]:
    return [t for t in enumerate_tasks(pool, params) if not t.seen]


def materialize(
    pool: DatasetPool,
    task: TaskDescriptor,
    sample_id: str,
    params: TaskParams,
    seed: int,
) -> TaskSample:
    """Build the (input, output) pair of ``task`` for one corpus sample."""
    image = pool.image(sample_id)
    if task.family == "semantic" and task.seen:
        labels = pool.labels(sample_id)
        palette = pool.palette(task.dataset)
        target = make_semantic_target(labels, palette, task.variant)
        ts = TaskSample(
            image,
            target,
            task.id,
            source_label=labels,
            target_labels=semantic_label_map(labels, task.variant),
            palette=palette,
        )
    elif task.family == "transformation":
        inp, out = make_transform_pair(image, task.variant)
        ts = TaskSample(inp, out, task.id)
    elif task.family == "generative" and task.seen:
        inp, out = make_generative_pair(image, task.variant, params, seed)
        ts = TaskSample(inp, out, task.id)
    elif not task.seen:
        labels = pool.labels(sample_id) if task.dataset != "octdl" else None
        palette = pool.palette(task.dataset) if task.dataset != "octdl" else None
        ts = make_unseen_pair(image, labels, task.variant, params, seed, palette=palette)
        ts.task = task.id
    else:
        raise ConfigurationError(f"cannot materialize task {task.id!r}")
    ts.sample_id = sample_id
    if ts.input.shape != ts.output.shape:
        raise ShapeError(
            f"task {task.id}: input {ts.input.shape} != output {ts.output.shape}"
        )
    return ts


def precompute_task_pairs(
    pool: DatasetPool,
    tasks: list[TaskDescriptor],
    params: TaskParams,
    out_dir,
    seed: int,
    split: str = "train",
) -> Path:
    """Write every (task, sample) pair as paired PNGs plus a task manifest."""
    out_dir = Path(out_dir)
    entries = []
    for task in tasks:
        task_dir = out_dir / task.id.replace(":", "_")
        task_dir.mkdir(parents=True, exist_ok=True)
        samples = pool.samples(task.dataset, split)
        pair_list = []
        for i, ps in enumerate(samples):
            pair_seed = derive_sample_seed(seed, f"pair:{task.id}", i)
            ts = materialize(pool, task, ps.id, params, pair_seed)
            stem = ps.id.replace("/", "_")
            save_image_png(ts.input, task_dir / f"{stem}_input.png")
            save_image_png(ts.output, task_dir / f"{stem}_output.png")
            pair_list.append(
                {
                    "sample": ps.id,
                    "input": f"{task.id.replace(':', '_')}/{stem}_input.png",
                    "output": f"{task.id.replace(':', '_')}/{stem}_output.png",
                }
            )
        entries.append(
            {
                "task": task.id,
                "family": task.family,
                "variant": task.variant,
                "dataset": task.dataset,
                "seen": task.seen,
                "metric": task.metric,
                "params": dict(task.params),
                "pairs": pair_list,
            }
        )
        log.info("precomputed %s: %d pairs", task.id, len(pair_list))
    manifest_path = out_dir / "tasks.json"
    manifest_path.write_text(json.dumps({"split": split, "tasks": entries}, indent=2))
    return manifest_path
