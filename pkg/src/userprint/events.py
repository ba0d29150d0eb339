"""Session data model and canonical JSONL serialization.

A session bundles everything one user produced in one recording: a mouse
stream, an optional gaze stream, and the browser statistics of the
machine/browser pair. Sessions are stored as UTF-8 JSONL, one object per
line: a meta line, a stats line, then one line per sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class MalformedLine(ValueError):
    """A session-file line is not valid JSON or has the wrong structure."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InvariantViolation(ValueError):
    """A record, or a line of a session file, violates a data-model invariant."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class StreamKind(str, Enum):
    MOUSE = "mouse"
    GAZE = "gaze"


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampleStream:
    """Timestamped 2-D positions of one signal kind, in viewport pixels.

    Timestamps are milliseconds since session start (nonnegative,
    nondecreasing). Coordinates are viewport-relative at capture time;
    out-of-viewport values are legal (drags can report them) and are
    handled downstream by the featurizer's edge clamping.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    viewport_w: int
    viewport_h: int
    kind: StreamKind

    def __post_init__(self):
        object.__setattr__(self, "t", _as_readonly(np.asarray(self.t, dtype=np.int64)))
        object.__setattr__(self, "x", _as_readonly(np.asarray(self.x, dtype=np.float64)))
        object.__setattr__(self, "y", _as_readonly(np.asarray(self.y, dtype=np.float64)))
        if self.t.ndim != 1 or self.x.shape != self.t.shape or self.y.shape != self.t.shape:
            raise InvariantViolation("t, x, y must be 1-D arrays of equal length")
        if not isinstance(self.kind, StreamKind):
            raise InvariantViolation(f"bad stream kind {self.kind!r}")
        if not (isinstance(self.viewport_w, int) and isinstance(self.viewport_h, int)):
            raise InvariantViolation("viewport dimensions must be integers")
        if self.viewport_w <= 0 or self.viewport_h <= 0:
            raise InvariantViolation("viewport dimensions must be positive")
        if self.t.size:
            if self.t[0] < 0:
                raise InvariantViolation("timestamps must be nonnegative")
            if np.any(np.diff(self.t) < 0):
                raise InvariantViolation("timestamps must be nondecreasing")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise InvariantViolation("coordinates must be finite")

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[tuple[int, float, float]],
        viewport_w: int,
        viewport_h: int,
        kind: StreamKind,
    ) -> "SampleStream":
        t = [s[0] for s in samples]
        x = [s[1] for s in samples]
        y = [s[2] for s in samples]
        return cls(np.array(t, dtype=np.int64), np.array(x), np.array(y), viewport_w, viewport_h, kind)

    @classmethod
    def empty(cls, viewport_w: int, viewport_h: int, kind: StreamKind) -> "SampleStream":
        return cls.from_samples([], viewport_w, viewport_h, kind)

    def __len__(self) -> int:
        return int(self.t.size)

    def samples(self) -> Iterator[tuple[int, float, float]]:
        for i in range(len(self)):
            yield int(self.t[i]), float(self.x[i]), float(self.y[i])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SampleStream)
            and self.kind == other.kind
            and self.viewport_w == other.viewport_w
            and self.viewport_h == other.viewport_h
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class SessionMeta:
    """Identifies one recording in the users x computers x browsers design."""

    session_id: str
    user_id: str
    computer_id: str
    browser_id: str
    recording_index: int

    def __post_init__(self):
        for name in ("session_id", "user_id", "computer_id", "browser_id"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise InvariantViolation(f"{name} must be a nonempty string")
        if not isinstance(self.recording_index, int) or isinstance(self.recording_index, bool):
            raise InvariantViolation("recording_index must be an integer")
        if self.recording_index < 1:
            raise InvariantViolation("recording_index must be >= 1")

    @property
    def recording_key(self) -> tuple[str, str, str, int]:
        """The tuple that must be unique across a dataset."""
        return (self.user_id, self.computer_id, self.browser_id, self.recording_index)


@dataclass(frozen=True)
class BrowserStats:
    """Ordered key/value attributes describing the machine+browser environment."""

    attributes: tuple[tuple[str, str], ...]

    def __post_init__(self):
        attrs = tuple((str(k), str(v)) for k, v in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        keys = [k for k, _ in attrs]
        if len(set(keys)) != len(keys):
            raise InvariantViolation("duplicate keys in browser stats")

    @classmethod
    def empty(cls) -> "BrowserStats":
        return cls(())

    def pairs(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.attributes)


@dataclass(frozen=True, eq=False)
class SessionRecord:
    """One recorded session: meta, mouse stream, optional gaze stream, stats.

    An empty gaze stream is normalized to ``gaze=None`` so that the canonical
    file format (which has no way to say "gaze present but empty") round-trips
    exactly.
    """

    meta: SessionMeta
    mouse: SampleStream
    gaze: SampleStream | None
    stats: BrowserStats

    def __post_init__(self):
        if self.mouse.kind is not StreamKind.MOUSE:
            raise InvariantViolation("mouse stream must have kind=mouse")
        if self.gaze is not None and len(self.gaze) == 0:
            object.__setattr__(self, "gaze", None)
        if self.gaze is not None:
            if self.gaze.kind is not StreamKind.GAZE:
                raise InvariantViolation("gaze stream must have kind=gaze")
            if (self.gaze.viewport_w, self.gaze.viewport_h) != (
                self.mouse.viewport_w,
                self.mouse.viewport_h,
            ):
                raise InvariantViolation("mouse and gaze streams must share the viewport")

    @property
    def viewport(self) -> tuple[int, int]:
        return (self.mouse.viewport_w, self.mouse.viewport_h)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SessionRecord)
            and self.meta == other.meta
            and self.mouse == other.mouse
            and self.gaze == other.gaze
            and self.stats == other.stats
        )


_META_KEYS = (
    "type",
    "session_id",
    "user_id",
    "computer_id",
    "browser_id",
    "recording_index",
    "viewport_w",
    "viewport_h",
)
_STATS_KEYS = ("type", "attributes")
_SAMPLE_KEYS = ("type", "kind", "t", "x", "y")


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def serialize_session(record: SessionRecord) -> bytes:
    """Encode a record as canonical JSONL: meta, stats, then samples.

    Mouse samples come before gaze samples; within a kind, capture order is
    preserved. Output is deterministic, so two calls on the same record are
    byte-identical.
    """
    meta = record.meta
    lines = [
        _dump(
            {
                "type": "meta",
                "session_id": meta.session_id,
                "user_id": meta.user_id,
                "computer_id": meta.computer_id,
                "browser_id": meta.browser_id,
                "recording_index": meta.recording_index,
                "viewport_w": record.mouse.viewport_w,
                "viewport_h": record.mouse.viewport_h,
            }
        ),
        _dump({"type": "stats", "attributes": [[k, v] for k, v in record.stats.attributes]}),
    ]
    streams = [record.mouse] if record.gaze is None else [record.mouse, record.gaze]
    for stream in streams:
        kind = stream.kind.value
        for t, x, y in stream.samples():
            lines.append(_dump({"type": "sample", "kind": kind, "t": t, "x": x, "y": y}))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _check_keys(obj: dict, expected: tuple[str, ...], line_no: int) -> None:
    if tuple(obj.keys()) != expected:
        raise MalformedLine(
            f"expected fields {list(expected)}, got {list(obj.keys())}", line_no
        )


def _require_str(obj: dict, key: str, line_no: int) -> str:
    v = obj[key]
    if not isinstance(v, str):
        raise MalformedLine(f"field {key!r} must be a string", line_no)
    return v


def _require_int(obj: dict, key: str, line_no: int) -> int:
    v = obj[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise MalformedLine(f"field {key!r} must be an integer", line_no)
    return v


def _require_num(obj: dict, key: str, line_no: int) -> float:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedLine(f"field {key!r} must be a number", line_no)
    v = float(v)
    if not math.isfinite(v):
        raise InvariantViolation(f"field {key!r} must be finite", line_no)
    return v


def parse_session(data: bytes | str) -> SessionRecord:
    """Parse a canonical session file back into a SessionRecord.

    Accepts the exact output of :func:`serialize_session` and the slightly
    looser wire order produced by live ingestion (stats line anywhere after
    the meta line, possibly absent; mouse and gaze sample lines interleaved).
    Raises :class:`MalformedLine` for structural problems and
    :class:`InvariantViolation` for value-domain problems, each tagged with
    the offending line number.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    if not text:
        raise MalformedLine("empty input, missing meta line", 1)
    if not text.endswith("\n"):
        raise MalformedLine("truncated final line (no trailing newline)", text.count("\n") + 1)
    lines = text.split("\n")[:-1]

    meta = None
    viewport = None
    stats: BrowserStats | None = None
    samples: dict[StreamKind, list[tuple[int, float, float]]] = {
        StreamKind.MOUSE: [],
        StreamKind.GAZE: [],
    }
    last_t: dict[StreamKind, int | None] = {StreamKind.MOUSE: None, StreamKind.GAZE: None}

    for idx, line in enumerate(lines):
        line_no = idx + 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(f"invalid JSON ({exc.msg})", line_no) from exc
        if not isinstance(obj, dict) or "type" not in obj:
            raise MalformedLine("expected a JSON object with a 'type' field", line_no)
        kind = obj["type"]

        if idx == 0:
            if kind != "meta":
                raise MalformedLine("first line must be the meta line", 1)
            _check_keys(obj, _META_KEYS, line_no)
            recording_index = _require_int(obj, "recording_index", line_no)
            vw = _require_int(obj, "viewport_w", line_no)
            vh = _require_int(obj, "viewport_h", line_no)
            if vw <= 0 or vh <= 0:
                raise InvariantViolation("viewport dimensions must be positive", line_no)
            try:
                meta = SessionMeta(
                    session_id=_require_str(obj, "session_id", line_no),
                    user_id=_require_str(obj, "user_id", line_no),
                    computer_id=_require_str(obj, "computer_id", line_no),
                    browser_id=_require_str(obj, "browser_id", line_no),
                    recording_index=recording_index,
                )
            except InvariantViolation as exc:
                raise InvariantViolation(str(exc), line_no) from exc
            viewport = (vw, vh)
            continue

        if kind == "meta":
            raise MalformedLine("duplicate meta line", line_no)
        if kind == "stats":
            if stats is not None:
                raise MalformedLine("duplicate stats line", line_no)
            _check_keys(obj, _STATS_KEYS, line_no)
            raw = obj["attributes"]
            if not isinstance(raw, list):
                raise MalformedLine("attributes must be a list of [key, value] pairs", line_no)
            pairs = []
            for item in raw:
                if (
                    not isinstance(item, list)
                    or len(item) != 2
                    or not all(isinstance(p, str) for p in item)
                ):
                    raise MalformedLine("attributes must be [string, string] pairs", line_no)
                pairs.append((item[0], item[1]))
            try:
                stats = BrowserStats(tuple(pairs))
            except InvariantViolation as exc:
                raise InvariantViolation(str(exc), line_no) from exc
        elif kind == "sample":
            _check_keys(obj, _SAMPLE_KEYS, line_no)
            kind_str = obj["kind"]
            if kind_str not in (StreamKind.MOUSE.value, StreamKind.GAZE.value):
                raise MalformedLine(f"unknown sample kind {kind_str!r}", line_no)
            stream_kind = StreamKind(kind_str)
            t = _require_int(obj, "t", line_no)
            x = _require_num(obj, "x", line_no)
            y = _require_num(obj, "y", line_no)
            if t < 0:
                raise InvariantViolation("timestamp must be nonnegative", line_no)
            prev = last_t[stream_kind]
            if prev is not None and t < prev:
                raise InvariantViolation(
                    f"{kind_str} timestamp decreased ({t} after {prev})", line_no
                )
            last_t[stream_kind] = t
            samples[stream_kind].append((t, x, y))
        else:
            raise MalformedLine(f"unknown line type {kind!r}", line_no)

    assert meta is not None and viewport is not None
    vw, vh = viewport
    mouse = SampleStream.from_samples(samples[StreamKind.MOUSE], vw, vh, StreamKind.MOUSE)
    gaze = None
    if samples[StreamKind.GAZE]:
        gaze = SampleStream.from_samples(samples[StreamKind.GAZE], vw, vh, StreamKind.GAZE)
    return SessionRecord(meta=meta, mouse=mouse, gaze=gaze, stats=stats or BrowserStats.empty())


def write_session(record: SessionRecord, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(serialize_session(record))
    return path


def read_session(path: str | Path) -> SessionRecord:
    path = Path(path)
    try:
        return parse_session(path.read_bytes())
    except (MalformedLine, InvariantViolation) as exc:
        exc.args = (f"{path.name}: {exc}",)
        raise


def load_corpus(directory: str | Path) -> list[SessionRecord]:
    """Read every ``*.jsonl`` session file in a corpus directory, sorted by name."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no session files (*.jsonl) in {directory}")
    return [read_session(p) for p in paths]
