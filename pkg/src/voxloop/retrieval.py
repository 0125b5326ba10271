"""Slice embedding, flat exact nearest-neighbor search, and contrastive
reference retrieval.

The index is deliberately exhaustive: at desk scale (tens of thousands of
vectors) a full inner-product scan is fast, exactly reproducible, and
trivially checkable against a brute-force oracle, which approximate
structures are not.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RetrievalError
from .volume import SliceImage, Volume, slice_at, window_normalize

EMBED_DIM = 288  # 16x16 downsample + 32-bin histogram


class EmbeddingProvider:
    """Maps a slice to a unit-norm float32 vector of a fixed dimension."""

    dimension: int = EMBED_DIM
    identity: str = "abstract"

    def embed(self, image: SliceImage) -> np.ndarray:
        raise NotImplementedError


class HistogramEmbedding(EmbeddingProvider):
    """Built-in 288-dim descriptor: per-slice min-max normalization, a
    bilinear 16x16 downsample (center sampling, edges clamped), and a
    32-bin mass histogram of the normalized slice, L2-normalized together.

    Min-max normalization makes the descriptor invariant to affine
    intensity changes (a*v + b, a > 0). Constant slices have no contrast
    to describe and map to the reserved first basis vector.
    """

    identity = "histogram-16x16+32/1"

    def embed(self, image: SliceImage) -> np.ndarray:
        values = np.asarray(image.values, dtype=np.float64)
        h, w = values.shape
        vmin = values.min()
        vmax = values.max()
        if vmax <= vmin:
            out = np.zeros(EMBED_DIM, dtype=np.float32)
            out[0] = 1.0
            return out
        norm = (values - vmin) / (vmax - vmin)

        ys = np.clip((np.arange(16) + 0.5) * h / 16 - 0.5, 0, h - 1)
        xs = np.clip((np.arange(16) + 0.5) * w / 16 - 0.5, 0, w - 1)
        y0 = np.floor(ys).astype(int)
        x0 = np.floor(xs).astype(int)
        y1 = np.minimum(y0 + 1, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        top = norm[np.ix_(y0, x0)] * (1 - fx) + norm[np.ix_(y0, x1)] * fx
        bot = norm[np.ix_(y1, x0)] * (1 - fx) + norm[np.ix_(y1, x1)] * fx
        small = top * (1 - fy) + bot * fy

        hist = np.histogram(norm, bins=32, range=(0.0, 1.0))[0] / norm.size
        vec = np.concatenate([small.ravel(), hist])
        return (vec / np.linalg.norm(vec)).astype(np.float32)


def embed_slice(image: SliceImage, provider: EmbeddingProvider) -> np.ndarray:
    vec = np.asarray(provider.embed(image), dtype=np.float32)
    if vec.ndim != 1 or vec.shape[0] != provider.dimension:
        raise RetrievalError(
            f"provider {provider.identity} returned shape {vec.shape}, "
            f"expected ({provider.dimension},)"
        )
    if not np.isfinite(vec).all():
        raise RetrievalError(f"provider {provider.identity} returned non-finite values")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > 1e-5:
        raise RetrievalError(f"embedding norm {norm} is not 1 within 1e-5")
    return vec


@dataclass(frozen=True)
class ReferenceRecord:
    record_id: str
    patient_id: str
    slice_index: int
    has_pathology: bool
    vector: np.ndarray
    thumbnail_ref: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "vector", np.ascontiguousarray(self.vector, dtype=np.float32)
        )


@dataclass(frozen=True)
class Hit:
    record: ReferenceRecord
    score: float


@dataclass
class ReferenceIndex:
    """Immutable flat index over unit-norm reference vectors."""

    records: tuple[ReferenceRecord, ...]
    dimension: int = field(init=False)

    def __post_init__(self):
        if not self.records:
            raise RetrievalError("cannot build an index from zero records")
        self.records = tuple(self.records)
        dims = {r.vector.shape for r in self.records}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise RetrievalError(f"inconsistent vector shapes in records: {sorted(dims)}")
        self.dimension = self.records[0].vector.shape[0]
        ids = [r.record_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise RetrievalError("duplicate record_ids in index")
        self._matrix = np.vstack([r.vector for r in self.records]).astype(np.float64)
        self._ids = np.array(ids)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def label_counts(self) -> dict[str, int]:
        positive = sum(1 for r in self.records if r.has_pathology)
        return {"positive": positive, "negative": len(self.records) - positive}

    def record_by_id(self, record_id: str) -> ReferenceRecord:
        for r in self.records:
            if r.record_id == record_id:
                return r
        raise RetrievalError(f"no record {record_id!r} in index")


def build_index(records) -> ReferenceIndex:
    index = ReferenceIndex(records=tuple(records))
    counts = index.label_counts
    if counts["positive"] == 0 or counts["negative"] == 0:
        warnings.warn(
            f"index has labels {counts}; contrastive queries need both kinds",
            stacklevel=2,
        )
    return index


def knn_search(
    index: ReferenceIndex,
    query: np.ndarray,
    k: int,
    label_filter: bool | None = None,
    exclude_patient: str | None = None,
) -> list[Hit]:
    """Top-k by inner product (cosine on unit vectors), descending; exact
    score ties are broken by ascending record_id."""
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dimension,):
        raise RetrievalError(
            f"query shape {query.shape} does not match index dimension {index.dimension}"
        )
    keep = np.ones(len(index), dtype=bool)
    if label_filter is not None:
        keep &= np.array([r.has_pathology == label_filter for r in index.records])
    if exclude_patient is not None:
        keep &= np.array([r.patient_id != exclude_patient for r in index.records])
    candidates = np.flatnonzero(keep)
    if candidates.size == 0:
        raise RetrievalError("no candidates left after filtering")
    scores = index._matrix[candidates] @ query
    order = np.lexsort((index._ids[candidates], -scores))[:k]
    return [Hit(record=index.records[candidates[i]], score=float(scores[i])) for i in order]


def contrastive_retrieve(
    index: ReferenceIndex,
    query: np.ndarray,
    exclude_patient: str | None = None,
) -> tuple[ReferenceRecord, ReferenceRecord]:
    """Nearest with-pathology and nearest without-pathology references."""
    counts = index.label_counts
    if counts["positive"] == 0 or counts["negative"] == 0:
        raise RetrievalError(f"contrastive retrieval needs both labels, index has {counts}")
    positive = knn_search(index, query, k=1, label_filter=True, exclude_patient=exclude_patient)
    negative = knn_search(index, query, k=1, label_filter=False, exclude_patient=exclude_patient)
    return positive[0].record, negative[0].record


# --- persistence ----------------------------------------------------------
# Layout: <dir>/manifest.json, <dir>/vectors.f32 (packed little-endian
# float32, row-major), <dir>/records.jsonl (one metadata object per line,
# same order as the vector rows).

def save_index(index: ReferenceIndex, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dimension": index.dimension,
        "count": len(index),
        "labels": index.label_counts,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    vectors = np.vstack([r.vector for r in index.records]).astype("<f4")
    (path / "vectors.f32").write_bytes(vectors.tobytes(order="C"))
    with open(path / "records.jsonl", "w") as fh:
        for r in index.records:
            fh.write(
                json.dumps(
                    {
                        "record_id": r.record_id,
                        "patient_id": r.patient_id,
                        "slice_index": r.slice_index,
                        "has_pathology": r.has_pathology,
                        "thumbnail_ref": r.thumbnail_ref,
                    }
                )
                + "\n"
            )
    return path


def load_index(path) -> ReferenceIndex:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        raw = (path / "vectors.f32").read_bytes()
        lines = (path / "records.jsonl").read_text().splitlines()
    except (OSError, json.JSONDecodeError) as e:
        raise RetrievalError(f"cannot read index at {path}: {e}") from e
    dim = int(manifest["dimension"])
    count = int(manifest["count"])
    if len(raw) != dim * count * 4:
        raise RetrievalError(
            f"{path}: vector payload holds {len(raw)} bytes, "
            f"manifest declares {count} x {dim} float32"
        )
    if len(lines) != count:
        raise RetrievalError(f"{path}: {len(lines)} metadata rows for {count} vectors")
    vectors = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
    records = []
    for i, line in enumerate(lines):
        meta = json.loads(line)
        records.append(
            ReferenceRecord(
                record_id=meta["record_id"],
                patient_id=meta["patient_id"],
                slice_index=int(meta["slice_index"]),
                has_pathology=bool(meta["has_pathology"]),
                vector=vectors[i],
                thumbnail_ref=meta.get("thumbnail_ref", ""),
            )
        )
    return build_index(records)


def index_volume_slices(
    volume: Volume,
    patient_id: str,
    positive_slices,
    negative_slices,
    provider: EmbeddingProvider,
    thumbnails_dir: Path | None = None,
    source_tag: str = "",
) -> list[ReferenceRecord]:
    """Embed the listed slices of one volume into reference records,
    optionally writing a windowed PNG thumbnail per record."""
    tag = source_tag or volume.source_id or "volume"
    tag = "".join(c if c.isalnum() or c in "-_" else "-" for c in tag)
    records = []
    labeled = [(int(k), True) for k in positive_slices] + [
        (int(k), False) for k in negative_slices
    ]
    for k, has_pathology in labeled:
        image = slice_at(volume, k)
        vec = embed_slice(image, provider)
        record_id = f"{tag}-{k:04d}"
        thumbnail_ref = ""
        if thumbnails_dir is not None:
            from PIL import Image

            thumbnails_dir.mkdir(parents=True, exist_ok=True)
            png = thumbnails_dir / f"{record_id}.png"
            Image.fromarray(window_normalize(image, *image.window), mode="L").save(png)
            thumbnail_ref = f"{thumbnails_dir.name}/{png.name}"
        records.append(
            ReferenceRecord(
                record_id=record_id,
                patient_id=patient_id,
                slice_index=k,
                has_pathology=has_pathology,
                vector=vec,
                thumbnail_ref=thumbnail_ref,
            )
        )
    return records
