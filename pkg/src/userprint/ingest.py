"""HTTP telemetry ingestion: receives session metadata, sample batches, and
browser stats from collectors, and persists canonical session files.

Storage is append-only JSONL per session. A live session grows in
``<data_dir>/live/`` in arrival order; closing rewrites it atomically into
canonical form under ``<data_dir>/sessions/``. All state is recoverable by
re-reading those directories, which is exactly what a restart does.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .events import (
    BrowserStats,
    InvariantViolation,
    SessionMeta,
    StreamKind,
    parse_session,
    serialize_session,
)

MAX_BATCH_SAMPLES = 10_000


class IngestError(Exception):
    """Base class; ``status`` is the HTTP status the service maps it to."""

    status = 500
    code = "internal"


class InvalidMeta(IngestError):
    status = 400
    code = "invalid_meta"


class InvalidBody(IngestError):
    status = 400
    code = "invalid_body"


class DuplicateRecording(IngestError):
    status = 409
    code = "duplicate_recording"


class UnknownSession(IngestError):
    status = 404
    code = "unknown_session"


class SessionClosed(IngestError):
    status = 409
    code = "session_closed"


class TimestampRegression(IngestError):
    status = 422
    code = "timestamp_regression"


class StatsAlreadySet(IngestError):
    status = 409
    code = "stats_already_set"


class BatchTooLarge(IngestError):
    status = 413
    code = "batch_too_large"


@dataclass
class _SessionState:
    meta: SessionMeta
    viewport_w: int
    viewport_h: int
    stats_set: bool = False
    closed: bool = False
    sample_counts: dict[str, int] = field(
        default_factory=lambda: {StreamKind.MOUSE.value: 0, StreamKind.GAZE.value: 0}
    )
    last_t: dict[str, int | None] = field(
        default_factory=lambda: {StreamKind.MOUSE.value: None, StreamKind.GAZE.value: None}
    )
    lock: threading.Lock = field(default_factory=threading.Lock)

    def summary(self) -> dict[str, Any]:
        return {
            "session_id": self.meta.session_id,
            "user_id": self.meta.user_id,
            "computer_id": self.meta.computer_id,
            "browser_id": self.meta.browser_id,
            "recording_index": self.meta.recording_index,
            "mouse_samples": self.sample_counts[StreamKind.MOUSE.value],
            "gaze_samples": self.sample_counts[StreamKind.GAZE.value],
            "stats_set": self.stats_set,
            "closed": self.closed,
        }


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


class SessionStore:
    """Durable session storage with per-session write serialization.

    Batches are validated in full before a single append write, so a
    rejected batch leaves the file byte-identical. ``fsync=True`` adds an
    fsync after every append (the injectable sync point used by the
    crash-replay tests).
    """

    def __init__(self, data_dir: str | Path, fsync: bool = False):
        self.data_dir = Path(data_dir)
        self.live_dir = self.data_dir / "live"
        self.closed_dir = self.data_dir / "sessions"
        self.live_dir.mkdir(parents=True, exist_ok=True)
        self.closed_dir.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._registry_lock = threading.Lock()
        self._sessions: dict[str, _SessionState] = {}
        self._recording_keys: set[tuple[str, str, str, int]] = set()
        self._recover()

    # -- recovery --------------------------------------------------------

    def _recover(self) -> None:
        for path in sorted(self.closed_dir.glob("*.jsonl")):
            record = parse_session(path.read_bytes())
            state = _SessionState(
                meta=record.meta,
                viewport_w=record.mouse.viewport_w,
                viewport_h=record.mouse.viewport_h,
                stats_set=bool(record.stats.attributes),
                closed=True,
            )
            state.sample_counts[StreamKind.MOUSE.value] = len(record.mouse)
            state.sample_counts[StreamKind.GAZE.value] = (
                len(record.gaze) if record.gaze is not None else 0
            )
            self._sessions[record.meta.session_id] = state
            self._recording_keys.add(record.meta.recording_key)
        for path in sorted(self.live_dir.glob("*.jsonl")):
            record = parse_session(path.read_bytes())
            state = _SessionState(
                meta=record.meta,
                viewport_w=record.mouse.viewport_w,
                viewport_h=record.mouse.viewport_h,
                stats_set=bool(record.stats.attributes),
                closed=False,
            )
            state.sample_counts[StreamKind.MOUSE.value] = len(record.mouse)
            state.sample_counts[StreamKind.GAZE.value] = (
                len(record.gaze) if record.gaze is not None else 0
            )
            if len(record.mouse):
                state.last_t[StreamKind.MOUSE.value] = int(record.mouse.t[-1])
            if record.gaze is not None and len(record.gaze):
                state.last_t[StreamKind.GAZE.value] = int(record.gaze.t[-1])
            self._sessions[record.meta.session_id] = state
            self._recording_keys.add(record.meta.recording_key)

    # -- helpers ---------------------------------------------------------

    def _live_path(self, session_id: str) -> Path:
        return self.live_dir / f"{session_id}.jsonl"

    def _closed_path(self, session_id: str) -> Path:
        return self.closed_dir / f"{session_id}.jsonl"

    def _state(self, session_id: str) -> _SessionState:
        with self._registry_lock:
            state = self._sessions.get(session_id)
        if state is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        return state

    def _append(self, path: Path, text: str) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())

    # -- operations ------------------------------------------------------

    def create_session(
        self,
        user_id: Any,
        computer_id: Any,
        browser_id: Any,
        recording_index: Any,
        viewport_w: Any,
        viewport_h: Any,
    ) -> str:
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (viewport_w, viewport_h)):
            raise InvalidMeta("viewport dimensions must be integers")
        if viewport_w <= 0 or viewport_h <= 0:
            raise InvalidMeta("viewport dimensions must be positive")
        session_id = uuid.uuid4().hex
        try:
            meta = SessionMeta(
                session_id=session_id,
                user_id=user_id,
                computer_id=computer_id,
                browser_id=browser_id,
                recording_index=recording_index,
            )
        except (InvariantViolation, TypeError) as exc:
            raise InvalidMeta(str(exc)) from exc

        with self._registry_lock:
            if meta.recording_key in self._recording_keys:
                raise DuplicateRecording(
                    f"recording {meta.recording_key!r} already exists"
                )
            self._recording_keys.add(meta.recording_key)
            state = _SessionState(meta=meta, viewport_w=viewport_w, viewport_h=viewport_h)
            self._sessions[session_id] = state

        line = _dump_line(
            {
                "type": "meta",
                "session_id": session_id,
                "user_id": meta.user_id,
                "computer_id": meta.computer_id,
                "browser_id": meta.browser_id,
                "recording_index": meta.recording_index,
                "viewport_w": viewport_w,
                "viewport_h": viewport_h,
            }
        )
        self._append(self._live_path(session_id), line + "\n")
        return session_id

    def append_events(self, session_id: str, kind: Any, samples: Any) -> tuple[int, int]:
        """Validate and durably append a whole batch, or reject it atomically."""
        if kind not in (StreamKind.MOUSE.value, StreamKind.GAZE.value):
            raise InvalidBody(f"kind must be 'mouse' or 'gaze', got {kind!r}")
        if not isinstance(samples, list):
            raise InvalidBody("samples must be a list of [t, x, y] triples")
        if len(samples) > MAX_BATCH_SAMPLES:
            raise BatchTooLarge(
                f"batch of {len(samples)} exceeds the {MAX_BATCH_SAMPLES}-sample cap"
            )
        parsed: list[tuple[int, float, float]] = []
        for i, item in enumerate(samples):
            if not isinstance(item, (list, tuple)) or len(item) != 3:
                raise InvalidBody(f"sample {i} must be a [t, x, y] triple")
            t, x, y = item
            if isinstance(t, bool) or not isinstance(t, (int, float)) or t != int(t):
                raise InvalidBody(f"sample {i}: t must be an integer millisecond count")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in (x, y)):
                raise InvalidBody(f"sample {i}: x and y must be numbers")
            t = int(t)
            if t < 0:
                raise InvalidBody(f"sample {i}: t must be nonnegative")
            parsed.append((t, float(x), float(y)))

        state = self._state(session_id)
        with state.lock:
            if state.closed:
                raise SessionClosed(f"session {session_id!r} is closed")
            last = state.last_t[kind]
            prev = last
            for i, (t, _, _) in enumerate(parsed):
                if prev is not None and t < prev:
                    raise TimestampRegression(
                        f"sample {i}: t={t} regresses below {prev} for kind {kind!r}"
                    )
                prev = t
            lines = "".join(
                _dump_line({"type": "sample", "kind": kind, "t": t, "x": x, "y": y}) + "\n"
                for t, x, y in parsed
            )
            if lines:
                self._append(self._live_path(session_id), lines)
            if parsed:
                state.last_t[kind] = parsed[-1][0]
            state.sample_counts[kind] += len(parsed)
            return len(parsed), state.sample_counts[kind]

    def put_stats(self, session_id: str, attributes: Any) -> None:
        # Nonempty is required so that "stats received" is recoverable from
        # the persisted file alone after a restart.
        if not isinstance(attributes, list) or not attributes:
            raise InvalidBody("attributes must be a nonempty list of [key, value] pairs")
        pairs = []
        for i, item in enumerate(attributes):
            if (
                not isinstance(item, (list, tuple))
                or len(item) != 2
                or not all(isinstance(p, str) for p in item)
            ):
                raise InvalidBody(f"attribute {i} must be a [string, string] pair")
            pairs.append((item[0], item[1]))
        try:
            stats = BrowserStats(tuple(pairs))
        except InvariantViolation as exc:
            raise InvalidBody(str(exc)) from exc

        state = self._state(session_id)
        with state.lock:
            if state.closed:
                raise SessionClosed(f"session {session_id!r} is closed")
            if state.stats_set:
                raise StatsAlreadySet(f"stats already set for session {session_id!r}")
            line = _dump_line(
                {"type": "stats", "attributes": [[k, v] for k, v in stats.attributes]}
            )
            self._append(self._live_path(session_id), line + "\n")
            state.stats_set = True

    def close_session(self, session_id: str) -> Path:
        """Finalize the live file into canonical form; idempotent."""
        state = self._state(session_id)
        with state.lock:
            closed_path = self._closed_path(session_id)
            if state.closed:
                return closed_path
            record = parse_session(self._live_path(session_id).read_bytes())
            tmp = closed_path.with_suffix(".tmp")
            tmp.write_bytes(serialize_session(record))
            if self.fsync:
                fd = os.open(tmp, os.O_RDONLY)
                try:
                    os.fsync(fd)
                finally:
                    os.close(fd)
            os.replace(tmp, closed_path)
            self._live_path(session_id).unlink()
            state.closed = True
            return closed_path

    def list_sessions(
        self,
        user: str | None = None,
        computer: str | None = None,
        browser: str | None = None,
    ) -> list[dict[str, Any]]:
        with self._registry_lock:
            states = sorted(self._sessions.values(), key=lambda s: s.meta.session_id)
        out = []
        for state in states:
            meta = state.meta
            if user is not None and meta.user_id != user:
                continue
            if computer is not None and meta.computer_id != computer:
                continue
            if browser is not None and meta.browser_id != browser:
                continue
            out.append(state.summary())
        return out


def create_app(store: SessionStore):
    """Build the FastAPI application around a session store."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    app = FastAPI(title="userprint ingest", docs_url=None, redoc_url=None)

    class CreateSessionBody(BaseModel):
        user_id: str
        computer_id: str
        browser_id: str
        recording_index: int
        viewport_w: int
        viewport_h: int

    class EventsBody(BaseModel):
        kind: str
        samples: list[list[float]]

    class StatsBody(BaseModel):
        attributes: list[list[str]]

    @app.exception_handler(IngestError)
    async def ingest_error_handler(request: Request, exc: IngestError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": exc.code, "message": str(exc)},
        )

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        session_id = store.create_session(
            user_id=body.user_id,
            computer_id=body.computer_id,
            browser_id=body.browser_id,
            recording_index=body.recording_index,
            viewport_w=body.viewport_w,
            viewport_h=body.viewport_h,
        )
        return {"session_id": session_id}

    @app.post("/v1/sessions/{session_id}/events")
    def append_events(session_id: str, body: EventsBody):
        accepted, total = store.append_events(session_id, body.kind, body.samples)
        return {"accepted": accepted, "total": total}

    @app.put("/v1/sessions/{session_id}/stats")
    def put_stats(session_id: str, body: StatsBody):
        store.put_stats(session_id, body.attributes)
        return {"ok": True}

    @app.post("/v1/sessions/{session_id}/close")
    def close_session(session_id: str):
        path = store.close_session(session_id)
        return {"path": str(path)}

    @app.get("/v1/sessions")
    def list_sessions(
        user: str | None = None,
        computer: str | None = None,
        browser: str | None = None,
    ):
        return {"sessions": store.list_sessions(user=user, computer=computer, browser=browser)}

    return app
