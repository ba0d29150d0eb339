"""Heatmap and one-hot feature extraction, plus heatmap correlation.

A sample stream is quantized onto a G x G grid (default 10) and normalized
to sum to one; the flattened grid is the behavioral feature of a stream.
Browser statistics are one-hot encoded against a vocabulary of (key, value)
pairs observed in training data. Feature vectors concatenate the selected
source blocks in the fixed order mouse, gaze, stats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .events import BrowserStats, SampleStream, SessionRecord

DEFAULT_GRID_SIZE = 10

# Largest double below 1.0; clamping normalized coordinates here keeps
# floor(v * G) strictly below G, so x == viewport_w lands in the last column.
_ONE_BELOW_ONE = float(np.nextafter(1.0, 0.0))


class ZeroVariance(ValueError):
    """A heatmap is constant, so a correlation coefficient is undefined."""


class EmptyCorpus(ValueError):
    """A stats vocabulary cannot be built from an empty corpus."""


class MissingSource(ValueError):
    """A selected feature source is absent (or empty) in a session record."""

    def __init__(self, source: "Source", session_id: str | None = None):
        self.source = source
        self.session_id = session_id
        where = f" in session {session_id!r}" if session_id else ""
        super().__init__(f"source {source.value!r} is missing or empty{where}")


class Source(Enum):
    MOUSE = "mouse"
    GAZE = "gaze"
    STATS = "stats"


#: Fixed concatenation order of feature blocks.
SOURCE_ORDER = (Source.MOUSE, Source.GAZE, Source.STATS)


@dataclass(frozen=True, eq=False)
class Heatmap:
    """G x G nonnegative grid summing to one, or the distinguished Empty value.

    Rows index the vertical axis (y), columns the horizontal axis (x).
    ``cells is None`` marks the Empty heatmap of a stream with no samples.
    """

    grid_size: int
    cells: np.ndarray | None
    _sum_tol: float = 1e-9

    def __post_init__(self):
        if not isinstance(self.grid_size, int) or self.grid_size < 1:
            raise ValueError("grid_size must be an integer >= 1")
        if self.cells is not None:
            cells = np.array(self.cells, dtype=np.float64, copy=True)
            if cells.shape != (self.grid_size, self.grid_size):
                raise ValueError(
                    f"cells must be {self.grid_size}x{self.grid_size}, got {cells.shape}"
                )
            if np.any(cells < 0):
                raise ValueError("heatmap cells must be nonnegative")
            if abs(float(cells.sum()) - 1.0) > self._sum_tol:
                raise ValueError(f"heatmap must sum to 1 within {self._sum_tol}")
            cells.setflags(write=False)
            object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, grid_size: int) -> "Heatmap":
        return cls(grid_size, None)

    @property
    def is_empty(self) -> bool:
        return self.cells is None

    def flat(self) -> np.ndarray:
        """Row-major flattened cells; raises on the Empty heatmap."""
        if self.cells is None:
            raise ValueError("empty heatmap has no cells")
        return self.cells.ravel()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Heatmap):
            return NotImplemented
        if self.grid_size != other.grid_size:
            return False
        if self.is_empty or other.is_empty:
            return self.is_empty and other.is_empty
        return np.array_equal(self.cells, other.cells)


def bin_indices(
    x: np.ndarray, y: np.ndarray, viewport_w: int, viewport_h: int, grid_size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Map pixel coordinates to (row, col) grid cells with edge clamping."""
    fx = np.clip(np.asarray(x, dtype=np.float64) / viewport_w, 0.0, _ONE_BELOW_ONE)
    fy = np.clip(np.asarray(y, dtype=np.float64) / viewport_h, 0.0, _ONE_BELOW_ONE)
    cols = np.minimum(np.floor(fx * grid_size).astype(np.int64), grid_size - 1)
    rows = np.minimum(np.floor(fy * grid_size).astype(np.int64), grid_size - 1)
    return rows, cols


def build_heatmap(stream: SampleStream, grid_size: int = DEFAULT_GRID_SIZE) -> Heatmap:
    """Quantize a stream onto a grid and normalize the sum to one.

    Every sample contributes equal mass to the cell containing it;
    out-of-viewport samples are clamped to the nearest edge cell. An empty
    stream yields the Empty heatmap.
    """
    if not isinstance(grid_size, int) or grid_size < 1:
        raise ValueError("grid_size must be an integer >= 1")
    n = len(stream)
    if n == 0:
        return Heatmap.empty(grid_size)
    rows, cols = bin_indices(stream.x, stream.y, stream.viewport_w, stream.viewport_h, grid_size)
    counts = np.bincount(rows * grid_size + cols, minlength=grid_size * grid_size)
    cells = counts.reshape(grid_size, grid_size).astype(np.float64) / n
    return Heatmap(grid_size, cells)


def pearson_correlation(a: Heatmap, b: Heatmap) -> float:
    """Pearson coefficient over the flattened cell pairs of two heatmaps."""
    if a.is_empty or b.is_empty:
        raise ValueError("cannot correlate an empty heatmap")
    if a.grid_size != b.grid_size:
        raise ValueError("heatmaps must share the grid size")
    av = a.flat()
    bv = b.flat()
    ac = av - av.mean()
    bc = bv - bv.mean()
    ss_a = float(ac @ ac)
    ss_b = float(bc @ bc)
    if ss_a == 0.0 or ss_b == 0.0:
        raise ZeroVariance("heatmap is constant; correlation undefined")
    r = float(ac @ bc) / float(np.sqrt(ss_a * ss_b))
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class StatsVocabulary:
    """Sorted, deduplicated (key, value) pairs observed in a training corpus."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if list(self.entries) != sorted(set(self.entries)):
            raise ValueError("vocabulary entries must be sorted and unique")

    @classmethod
    def build(cls, corpus: Sequence[BrowserStats]) -> "StatsVocabulary":
        if not corpus:
            raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
        pairs: set[tuple[str, str]] = set()
        for stats in corpus:
            pairs.update(stats.attributes)
        return cls(tuple(sorted(pairs)))

    def __len__(self) -> int:
        return len(self.entries)


def build_stats_vocabulary(corpus: Sequence[BrowserStats]) -> StatsVocabulary:
    return StatsVocabulary.build(corpus)


@dataclass(frozen=True)
class Block:
    """Location of one source's values inside a concatenated feature vector."""

    source: Source
    offset: int
    length: int


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    blocks: tuple[Block, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = [b.source for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError("block sources must be unique")
        pos = 0
        for b in self.blocks:
            if b.offset != pos or b.length < 0:
                raise ValueError("blocks must tile the vector contiguously")
            pos += b.length
        if pos != values.size:
            raise ValueError("block lengths must sum to the vector length")

    def block_values(self, source: Source) -> np.ndarray:
        for b in self.blocks:
            if b.source is source:
                return self.values[b.offset : b.offset + b.length]
        raise KeyError(f"no block for source {source.value!r}")

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FeatureVector)
            and self.blocks == other.blocks
            and np.array_equal(self.values, other.values)
        )


def encode_browser_stats(stats: BrowserStats, vocab: StatsVocabulary) -> FeatureVector:
    """One-hot encode stats against a vocabulary; unseen pairs contribute nothing."""
    if len(vocab) == 0:
        raise ValueError("vocabulary must be nonempty")
    present = stats.pairs()
    values = np.fromiter(
        (1.0 if entry in present else 0.0 for entry in vocab.entries),
        dtype=np.float64,
        count=len(vocab),
    )
    return FeatureVector(values, (Block(Source.STATS, 0, len(vocab)),))


def assemble_features(
    record: SessionRecord,
    selection: Iterable[Source],
    grid_size: int = DEFAULT_GRID_SIZE,
    vocab: StatsVocabulary | None = None,
) -> FeatureVector:
    """Concatenate the selected source blocks of one session record.

    Blocks appear in the fixed order mouse, gaze, stats regardless of the
    order of ``selection``. Mouse and gaze blocks are row-major flattened
    heatmaps of length ``grid_size ** 2``. A selected source that is absent
    or empty raises :class:`MissingSource` naming the session.
    """
    chosen = set(selection)
    if not chosen:
        raise ValueError("selection must name at least one source")
    session_id = record.meta.session_id
    parts: list[np.ndarray] = []
    blocks: list[Block] = []
    offset = 0
    for source in SOURCE_ORDER:
        if source not in chosen:
            continue
        if source is Source.MOUSE:
            hm = build_heatmap(record.mouse, grid_size)
            if hm.is_empty:
                raise MissingSource(source, session_id)
            values = hm.flat()
        elif source is Source.GAZE:
            if record.gaze is None:
                raise MissingSource(source, session_id)
            hm = build_heatmap(record.gaze, grid_size)
            if hm.is_empty:
                raise MissingSource(source, session_id)
            values = hm.flat()
        else:
            if vocab is None:
                raise ValueError("a stats vocabulary is required to encode stats")
            values = encode_browser_stats(record.stats, vocab).values
        parts.append(values)
        blocks.append(Block(source, offset, values.size))
        offset += values.size
    return FeatureVector(np.concatenate(parts), tuple(blocks))


def write_heatmap_csv(heatmap: Heatmap, path: str | Path) -> Path:
    """Write a heatmap as G rows x G columns of 9-fractional-digit decimals."""
    if heatmap.is_empty:
        raise ValueError("cannot export an empty heatmap")
    path = Path(path)
    lines = [",".join(f"{v:.9f}" for v in row) for row in heatmap.cells]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_heatmap_csv(path: str | Path) -> Heatmap:
    """Read a heatmap CSV written by :func:`write_heatmap_csv`.

    The 9-digit quantization can leave the reloaded sum up to G*G * 5e-10
    away from 1, so the construction tolerance is widened accordingly.
    """
    path = Path(path)
    rows = [
        [float(v) for v in line.split(",")]
        for line in path.read_text(encoding="utf-8").splitlines()
        if line
    ]
    grid_size = len(rows)
    cells = np.array(rows, dtype=np.float64)
    tol = 1e-9 + grid_size * grid_size * 5e-10
    return Heatmap(grid_size, cells, _sum_tol=tol)


def write_feature_csv(fv: FeatureVector, path: str | Path) -> tuple[Path, Path]:
    """Write a feature vector as a single CSV row plus a JSON schema sidecar."""
    path = Path(path)
    path.write_text(",".join(f"{v:.9f}" for v in fv.values) + "\n", encoding="utf-8")
    schema_path = path.with_suffix(".schema.json")
    schema = {
        "length": len(fv),
        "blocks": [
            {"source": b.source.value, "offset": b.offset, "length": b.length}
            for b in fv.blocks
        ],
    }
    schema_path.write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    return path, schema_path
