"""Dataset manifests: JSON descriptions of on-disk sample collections.

A manifest lists samples (image path, optional label map path, vendor tag),
the class palette and the train/val/test split. The same format serves the
phantom corpus and ingested real data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .imaging import load_image_png, load_labelmap_png
from .palette import Palette

ROLES = ("layers", "dme", "umn", "retouch", "octdl")

DEFAULT_CLASS_NAMES = {
    "layers": ["background", "ilm-rnfl", "gcl-ipl", "inl", "opl", "onl-isos", "rpe", "choroid"],
    "dme": ["background", "fluid"],
    "umn": ["background", "fluid"],
    "retouch": ["background", "irf", "srf", "ped"],
    "octdl": ["background"],
}

_LAYER_COLORS = [
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
]

DEFAULT_PALETTES = {
    "layers": Palette(
        ids=tuple(range(8)),
        colors=np.asarray(_LAYER_COLORS, dtype=np.float32) / 255.0,
    ),
    "dme": Palette(ids=(0, 1), colors=np.asarray([(0, 0, 0), (230, 25, 75)], np.float32) / 255.0),
    "umn": Palette(ids=(0, 1), colors=np.asarray([(0, 0, 0), (255, 225, 25)], np.float32) / 255.0),
    "retouch": Palette(
        ids=(0, 1, 2, 3),
        colors=np.asarray([(0, 0, 0), (230, 25, 75), (60, 180, 75), (0, 130, 200)], np.float32)
        / 255.0,
    ),
    "octdl": Palette(ids=(0,), colors=np.zeros((1, 3), np.float32)),
}


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image: str
    labelmap: str | None = None
    vendor: str | None = None
    has_fg: bool = False


@dataclass
class DatasetManifest:
    name: str
    role: str
    class_names: list[str]
    palette: Palette
    samples: list[SampleRecord]
    splits: dict[str, list[str]]
    root: Path = field(default_factory=Path)

    def sample(self, sample_id: str) -> SampleRecord:
        try:
            return self._by_id[sample_id]
        except AttributeError:
            self._by_id = {s.id: s for s in self.samples}
            return self._by_id[sample_id]

    def split_ids(self, split: str) -> list[str]:
        if split not in self.splits:
            raise ManifestError(f"manifest {self.name} has no split {split!r}")
        return self.splits[split]

    def load_image(self, rec: SampleRecord) -> np.ndarray:
        return load_image_png(self.root / rec.image)

    def load_labels(self, rec: SampleRecord, shape: tuple[int, int]) -> np.ndarray:
        if rec.labelmap is None:
            return np.zeros(shape, dtype=np.int32)
        return load_labelmap_png(self.root / rec.labelmap)

    def validate(self, check_files: bool = True) -> None:
        if self.role not in ROLES:
            raise ManifestError(f"field 'role': unknown value {self.role!r}")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ManifestError("field 'samples': sample ids are not unique")
        id_set = set(ids)
        seen: set[str] = set()
        for split, members in self.splits.items():
            for sid in members:
                if sid not in id_set:
                    raise ManifestError(f"field 'splits.{split}': unknown sample id {sid!r}")
                if sid in seen:
                    raise ManifestError(f"field 'splits.{split}': sample {sid!r} in two splits")
                seen.add(sid)
        n_classes = len(self.class_names)
        if len(self.palette) != n_classes:
            raise ManifestError(
                f"field 'palette': {len(self.palette)} entries for {n_classes} class names"
            )
        if check_files:
            for s in self.samples:
                if not (self.root / s.image).exists():
                    raise ManifestError(f"field 'samples': missing image file {s.image!r}")
                if s.labelmap is not None and not (self.root / s.labelmap).exists():
                    raise ManifestError(f"field 'samples': missing labelmap file {s.labelmap!r}")


def split_samples(
    ids: list[str], ratios: tuple[float, float, float], seed: int
) -> tuple[list[str], list[str], list[str]]:
    """Deterministic shuffled partition into (train, val, test)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ManifestError(f"split ratios {ratios} do not sum to 1")
    order = list(np.random.default_rng(seed).permutation(len(ids)))
    shuffled = [ids[i] for i in order]
    counts = [int(np.floor(r * len(ids))) for r in ratios]
    for i in range(len(ids) - sum(counts)):
        counts[i % 3] += 1
    train = shuffled[: counts[0]]
    val = shuffled[counts[0] : counts[0] + counts[1]]
    test = shuffled[counts[0] + counts[1] :]
    return train, val, test


_REQUIRED_FIELDS = ("name", "role", "class_names", "palette", "samples", "splits")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    for fieldname in _REQUIRED_FIELDS:
        if fieldname not in data:
            raise ManifestError(f"field {fieldname!r}: missing from manifest {path}")
    try:
        palette = Palette.from_jsonable(data["palette"])
    except (TypeError, IndexError) as exc:
        raise ManifestError(f"field 'palette': malformed entries ({exc})") from exc
    samples = []
    for i, raw in enumerate(data["samples"]):
        if "id" not in raw or "image" not in raw:
            raise ManifestError(f"field 'samples[{i}]': needs at least 'id' and 'image'")
        samples.append(
            SampleRecord(
                id=raw["id"],
                image=raw["image"],
                labelmap=raw.get("labelmap"),
                vendor=raw.get("vendor"),
                has_fg=bool(raw.get("has_fg", False)),
            )
        )
    splits = {k: list(v) for k, v in data["splits"].items()}
    manifest = DatasetManifest(
        name=data["name"],
        role=data["role"],
        class_names=list(data["class_names"]),
        palette=palette,
        samples=samples,
        splits=splits,
        root=path.parent,
    )
    manifest.validate(check_files=True)
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    doc = {
        "name": manifest.name,
        "role": manifest.role,
        "class_names": manifest.class_names,
        "palette": manifest.palette.to_jsonable(),
        "samples": [
            {
                "id": s.id,
                "image": s.image,
                **({"labelmap": s.labelmap} if s.labelmap is not None else {}),
                **({"vendor": s.vendor} if s.vendor is not None else {}),
                "has_fg": s.has_fg,
            }
            for s in manifest.samples
        ],
        "splits": manifest.splits,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
