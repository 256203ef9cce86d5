"""Phantom corpus construction and pooled dataset access.

The corpus mirrors the roles of the source OCT collections: one layered
dataset, two single-fluid datasets, a multi-fluid trio rendered by three
synthetic vendors (shared geometry, different image statistics), and one
image-only dataset. Sample generation is embarrassingly parallel: every
sample owns an RNG stream derived from (corpus seed, geometry key, index).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import CorpusConfig
from .errors import DataError
from .imaging import save_image_png, save_labelmap_png, to_uint8
from .manifest import (
    DEFAULT_CLASS_NAMES,
    DEFAULT_PALETTES,
    DatasetManifest,
    SampleRecord,
    load_manifest,
    save_manifest,
    split_samples,
)
from .phantom import (
    DEFAULT_STYLE,
    VENDOR_STYLES,
    VendorStyle,
    derive_sample_seed,
    generate_phantom_scan,
)

log = logging.getLogger(__name__)

FAMILIES = ("layers", "dme", "umn", "retouch", "octdl")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    role: str
    profile: str
    style: VendorStyle
    vendor: str | None
    geometry_key: str
    healthy_fraction: float | None


def corpus_specs(cfg: CorpusConfig) -> list[DatasetSpec]:
    return [
        DatasetSpec("PD-LAYERS", "layers", "LAYERS", DEFAULT_STYLE, None, "layers", None),
        DatasetSpec("PD-DME", "dme", "DME", DEFAULT_STYLE, None, "dme", cfg.healthy_fraction_dme),
        DatasetSpec("PD-UMN", "umn", "UMN", DEFAULT_STYLE, None, "umn", cfg.healthy_fraction_umn),
        DatasetSpec(
            "PD-RETOUCH-A", "retouch", "RETOUCH", VENDOR_STYLES["A"], "A", "retouch",
            cfg.healthy_fraction_retouch,
        ),
        DatasetSpec(
            "PD-RETOUCH-B", "retouch", "RETOUCH", VENDOR_STYLES["B"], "B", "retouch",
            cfg.healthy_fraction_retouch,
        ),
        DatasetSpec(
            "PD-RETOUCH-C", "retouch", "RETOUCH", VENDOR_STYLES["C"], "C", "retouch",
            cfg.healthy_fraction_retouch,
        ),
        DatasetSpec("PD-OCTDL", "octdl", "OCTDL", DEFAULT_STYLE, None, "octdl", None),
    ]


def _health_plan(
    cfg: CorpusConfig, seed: int, spec: DatasetSpec, count: int
) -> list[tuple[bool | None, int | None]]:
    """Per-sample (healthy, fluid class count) flags, keyed by geometry so the
    vendor trio shares one plan. A floor of non-healthy scans keeps the
    non-empty-mask sampling rule satisfiable at small corpus sizes."""
    if spec.healthy_fraction is None:
        return [(None, None)] * count
    rng = np.random.default_rng(derive_sample_seed(seed, f"health:{spec.geometry_key}", 0))
    healthy = rng.random(count) < spec.healthy_fraction
    floor = min(count, max(4, round(0.1 * count)))
    deficit = floor - int((~healthy).sum())
    if deficit > 0:
        for i in np.flatnonzero(healthy)[:deficit]:
            healthy[i] = False
    plan: list[tuple[bool | None, int | None]] = []
    mix = np.asarray(cfg.retouch_class_mix, dtype=float)
    mix = mix / mix.sum()
    for h in healthy:
        if spec.role != "retouch":
            plan.append((bool(h), None))
        elif h:
            plan.append((True, 0))
        else:
            plan.append((False, int(rng.choice([1, 2, 3], p=mix))))
    return plan


def build_phantom_corpus(cfg: CorpusConfig, seed: int, out_dir) -> list[DatasetManifest]:
    """Write the seven phantom datasets (images, label maps, manifests)."""
    cfg.validate()
    out_dir = Path(out_dir)
    manifests = []
    for spec in corpus_specs(cfg):
        ds_dir = out_dir / spec.name
        try:
            (ds_dir / "images").mkdir(parents=True, exist_ok=True)
            if spec.role != "octdl":
                (ds_dir / "labels").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create corpus directory {ds_dir}: {exc}") from exc
        palette = DEFAULT_PALETTES[spec.role]
        palette_u8 = to_uint8(palette.colors)
        plan = _health_plan(cfg, seed, spec, cfg.samples_per_dataset)
        records = []
        for i in range(cfg.samples_per_dataset):
            sample_seed = derive_sample_seed(seed, spec.geometry_key, i)
            healthy, fluid_classes = plan[i]
            image, labels = generate_phantom_scan(
                sample_seed,
                style=spec.style,
                profile=spec.profile,
                size=cfg.image_size,
                healthy=healthy,
                fluid_classes=fluid_classes,
            )
            img_rel = f"images/{i:04d}.png"
            save_image_png(image, ds_dir / img_rel)
            lab_rel = None
            if spec.role != "octdl":
                lab_rel = f"labels/{i:04d}.png"
                save_labelmap_png(labels, ds_dir / lab_rel, palette_u8)
            records.append(
                SampleRecord(
                    id=f"{spec.name}/{i:04d}",
                    image=img_rel,
                    labelmap=lab_rel,
                    vendor=spec.vendor,
                    has_fg=bool(labels.max() > 0),
                )
            )
        split_seed = derive_sample_seed(seed, f"split:{spec.geometry_key}", 0) % (2**32)
        train, val, test = split_samples([r.id for r in records], cfg.split_ratios, split_seed)
        manifest = DatasetManifest(
            name=spec.name,
            role=spec.role,
            class_names=DEFAULT_CLASS_NAMES[spec.role],
            palette=palette,
            samples=records,
            splits={"train": train, "val": val, "test": test},
            root=ds_dir,
        )
        manifest.validate(check_files=True)
        save_manifest(manifest, ds_dir / "manifest.json")
        manifests.append(manifest)
        log.info("built %s: %d samples", spec.name, len(records))
    return manifests


def load_corpus(corpus_dir) -> list[DatasetManifest]:
    corpus_dir = Path(corpus_dir)
    paths = sorted(corpus_dir.glob("*/manifest.json"))
    if not paths:
        raise DataError(f"no dataset manifests under {corpus_dir}")
    return [load_manifest(p) for p in paths]


@dataclass(frozen=True)
class PoolSample:
    manifest: DatasetManifest
    record: SampleRecord

    @property
    def id(self) -> str:
        return self.record.id


class DatasetPool:
    """Family-level view over manifests with image/label caching.

    The ``retouch`` family pools the vendor manifests; ``exclude_vendors``
    drops the given vendors from every listing (used by the leave-one-vendor-
    out protocol, where held-out data must not feed training or contexts).
    """

    def __init__(
        self,
        manifests: Iterable[DatasetManifest],
        exclude_vendors: tuple[str, ...] = (),
        only_vendors: tuple[str, ...] | None = None,
    ):
        self.manifests = list(manifests)
        self.exclude_vendors = set(exclude_vendors)
        self.only_vendors = set(only_vendors) if only_vendors is not None else None
        self.by_family: dict[str, list[DatasetManifest]] = {}
        for m in self.manifests:
            self.by_family.setdefault(m.role, []).append(m)
        self._index: dict[str, PoolSample] = {}
        for m in self.manifests:
            for rec in m.samples:
                self._index[rec.id] = PoolSample(m, rec)
        self._image_cache: dict[str, np.ndarray] = {}
        self._label_cache: dict[str, np.ndarray] = {}

    def _keep(self, rec: SampleRecord) -> bool:
        if rec.vendor is not None:
            if rec.vendor in self.exclude_vendors:
                return False
            if self.only_vendors is not None and rec.vendor not in self.only_vendors:
                return False
        return True

    def families(self) -> list[str]:
        return sorted(self.by_family)

    def palette(self, family: str):
        return self.by_family[family][0].palette

    def samples(self, family: str, split: str, require_fg: bool = False) -> list[PoolSample]:
        if family not in self.by_family:
            raise DataError(f"no dataset with role {family!r} in the pool")
        out = []
        for m in self.by_family[family]:
            for sid in m.split_ids(split):
                rec = m.sample(sid)
                if not self._keep(rec):
                    continue
                if require_fg and not rec.has_fg:
                    continue
                out.append(PoolSample(m, rec))
        return out

    def get(self, sample_id: str) -> PoolSample:
        try:
            return self._index[sample_id]
        except KeyError:
            raise DataError(f"unknown sample id {sample_id!r}") from None

    def image(self, sample_id: str) -> np.ndarray:
        if sample_id not in self._image_cache:
            ps = self.get(sample_id)
            self._image_cache[sample_id] = ps.manifest.load_image(ps.record)
        return self._image_cache[sample_id]

    def labels(self, sample_id: str) -> np.ndarray:
        if sample_id not in self._label_cache:
            ps = self.get(sample_id)
            img = self.image(sample_id)
            self._label_cache[sample_id] = ps.manifest.load_labels(ps.record, img.shape[:2])
        return self._label_cache[sample_id]
