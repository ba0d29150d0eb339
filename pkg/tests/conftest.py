import numpy as np
import pytest
from hypothesis import strategies as st

from userprint.events import (
    BrowserStats,
    SampleStream,
    SessionMeta,
    SessionRecord,
    StreamKind,
)

IDENT = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-", min_size=1, max_size=12
)

COORD = st.floats(min_value=-200.0, max_value=4000.0, allow_nan=False, allow_infinity=False)


@st.composite
def sample_streams(draw, kind, viewport_w=None, viewport_h=None, max_samples=40):
    vw = viewport_w if viewport_w is not None else draw(st.integers(1, 2000))
    vh = viewport_h if viewport_h is not None else draw(st.integers(1, 2000))
    n = draw(st.integers(0, max_samples))
    deltas = draw(st.lists(st.integers(0, 50), min_size=n, max_size=n))
    t = np.cumsum(np.array(deltas, dtype=np.int64)) if n else np.array([], dtype=np.int64)
    xs = draw(st.lists(COORD, min_size=n, max_size=n))
    ys = draw(st.lists(COORD, min_size=n, max_size=n))
    return SampleStream(t, np.array(xs), np.array(ys), vw, vh, kind)


@st.composite
def browser_stats(draw):
    keys = draw(st.lists(IDENT, min_size=0, max_size=6, unique=True))
    values = draw(st.lists(IDENT, min_size=len(keys), max_size=len(keys)))
    return BrowserStats(tuple(zip(keys, values)))


@st.composite
def session_records(draw, with_gaze=st.booleans()):
    meta = SessionMeta(
        session_id=draw(IDENT),
        user_id=draw(IDENT),
        computer_id=draw(IDENT),
        browser_id=draw(IDENT),
        recording_index=draw(st.integers(1, 9)),
    )
    vw = draw(st.integers(1, 2000))
    vh = draw(st.integers(1, 2000))
    mouse = draw(sample_streams(StreamKind.MOUSE, vw, vh))
    gaze = None
    if draw(with_gaze):
        gaze = draw(sample_streams(StreamKind.GAZE, vw, vh))
    return SessionRecord(meta=meta, mouse=mouse, gaze=gaze, stats=draw(browser_stats()))


def make_stream(samples, vw=100, vh=100, kind=StreamKind.MOUSE):
    return SampleStream.from_samples(samples, vw, vh, kind)


def make_record(
    session_id="s1",
    user_id="u1",
    computer_id="c1",
    browser_id="b1",
    recording_index=1,
    mouse_samples=((0, 1.0, 2.0),),
    gaze_samples=None,
    stats=(("language", "de-DE"),),
    vw=100,
    vh=100,
):
    meta = SessionMeta(session_id, user_id, computer_id, browser_id, recording_index)
    mouse = make_stream(mouse_samples, vw, vh, StreamKind.MOUSE)
    gaze = (
        make_stream(gaze_samples, vw, vh, StreamKind.GAZE)
        if gaze_samples is not None
        else None
    )
    return SessionRecord(meta=meta, mouse=mouse, gaze=gaze, stats=BrowserStats(tuple(stats)))


@pytest.fixture(scope="session")
def tiny_corpus_config():
    from userprint.synth import SynthConfig

    return SynthConfig(
        num_users=3,
        num_computers=2,
        num_browsers=2,
        recordings_per_cell=2,
        samples_per_session=200,
        seed=7,
    )


@pytest.fixture(scope="session")
def tiny_corpus(tiny_corpus_config):
    from userprint.synth import gen_corpus

    return gen_corpus(tiny_corpus_config)
