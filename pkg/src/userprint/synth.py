"""Synthetic multi-user corpus generation.

Each user gets a distinct Gaussian-mixture prior over normalized screen
space; gaze samples are i.i.d. draws from that mixture and mouse samples
are a coupled, jittered copy of the gaze samples. Browser statistics are a
deterministic function of (computer, browser) only, never of the user, so
a fully-crossed corpus makes stats uninformative about user identity.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import BrowserStats, SampleStream, SessionMeta, SessionRecord, StreamKind
from .evaluation import Dataset

VIEWPORT_W = 1280
VIEWPORT_H = 720
TICK_MS = 20

# Substream tags for deriving independent RNG streams from the master seed.
_PROFILE_STREAM = 101
_SESSION_STREAM = 202

# Two profiles conflict when some component mean of one is within this
# L-infinity distance of some component mean of the other.
_MIN_COMPONENT_SEPARATION = 0.1
_MAX_PROFILE_RESAMPLES = 1000


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: tuple[float, float]
    stddev: tuple[float, float]


@dataclass(frozen=True)
class UserProfile:
    """A user's spatial behavior prior: a Gaussian mixture over the unit square."""

    user_id: str
    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("profile needs at least one component")
        weights = [c.weight for c in self.components]
        if any(w <= 0 for w in weights):
            raise ValueError("component weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        for c in self.components:
            if not all(0.0 <= m <= 1.0 for m in c.mean):
                raise ValueError("component means must lie in the unit square")
            if any(s <= 0 for s in c.stddev):
                raise ValueError("component stddevs must be positive")


@dataclass(frozen=True)
class SynthConfig:
    """Corpus shape and behavior knobs; defaults mirror the reference design
    of 6 users x 2 computers x 2 browsers x 3 recordings = 72 sessions."""

    num_users: int = 6
    num_computers: int = 2
    num_browsers: int = 2
    recordings_per_cell: int = 3
    samples_per_session: int = 1200
    coupling: float = 0.9
    mouse_noise: float = 0.01
    grid_size: int = 10
    seed: int = 42

    def __post_init__(self):
        if self.num_users < 2:
            raise ValueError("num_users must be >= 2")
        for name in ("num_computers", "num_browsers", "recordings_per_cell", "samples_per_session"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must be in [0, 1]")
        if self.mouse_noise < 0:
            raise ValueError("mouse_noise must be >= 0")
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")

    def num_sessions(self) -> int:
        return (
            self.num_users * self.num_computers * self.num_browsers * self.recordings_per_cell
        )

    def as_dict(self) -> dict:
        return {
            "num_users": self.num_users,
            "num_computers": self.num_computers,
            "num_browsers": self.num_browsers,
            "recordings_per_cell": self.recordings_per_cell,
            "samples_per_session": self.samples_per_session,
            "coupling": self.coupling,
            "mouse_noise": self.mouse_noise,
            "grid_size": self.grid_size,
            "seed": self.seed,
        }


def _profiles_separated(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    # Means of a and b as (Ka,2) and (Kb,2); the closest cross pair must
    # differ by at least the separation threshold in some coordinate.
    am = np.array(a)
    bm = np.array(b)
    linf = np.max(np.abs(am[:, None, :] - bm[None, :, :]), axis=2)
    return bool(linf.min() >= _MIN_COMPONENT_SEPARATION)


def gen_profiles(config: SynthConfig) -> tuple[UserProfile, ...]:
    """Deterministically draw pairwise-distinct user mixtures.

    A candidate profile is resampled while any of its component means falls
    within the separation threshold of an already accepted profile's
    component means.
    """
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, _PROFILE_STREAM)))
    profiles: list[UserProfile] = []
    accepted_means: list[list[np.ndarray]] = []
    for u in range(config.num_users):
        user_id = f"u{u + 1}"
        for _ in range(_MAX_PROFILE_RESAMPLES):
            k = int(rng.choice([2, 3, 4]))
            means = rng.uniform(0.0, 1.0, size=(k, 2))
            stddevs = rng.uniform(0.03, 0.08, size=(k, 2))
            weights = rng.dirichlet(np.ones(k))
            weights = weights / weights.sum()
            if all(_profiles_separated(list(means), prev) for prev in accepted_means):
                break
        else:
            raise RuntimeError(
                f"could not draw a separated profile for {user_id} "
                f"after {_MAX_PROFILE_RESAMPLES} attempts"
            )
        components = tuple(
            MixtureComponent(
                weight=float(w),
                mean=(float(m[0]), float(m[1])),
                stddev=(float(s[0]), float(s[1])),
            )
            for w, m, s in zip(weights, means, stddevs)
        )
        profiles.append(UserProfile(user_id=user_id, components=components))
        accepted_means.append(list(means))
    return tuple(profiles)


def _sample_mixture(rng: np.random.Generator, profile: UserProfile, n: int) -> np.ndarray:
    weights = np.array([c.weight for c in profile.components])
    means = np.array([c.mean for c in profile.components])
    stddevs = np.array([c.stddev for c in profile.components])
    which = rng.choice(len(weights), size=n, p=weights / weights.sum())
    points = means[which] + rng.standard_normal((n, 2)) * stddevs[which]
    return np.clip(points, 0.0, 1.0)


def _session_seed(config: SynthConfig, meta: SessionMeta) -> np.random.SeedSequence:
    digest = hashlib.sha256(meta.session_id.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "big")
    return np.random.SeedSequence((config.seed, _SESSION_STREAM, tag))


def gen_session(
    profile: UserProfile,
    config: SynthConfig,
    meta: SessionMeta,
    seed: np.random.SeedSequence | int | None = None,
) -> SessionRecord:
    """Generate one session: gaze from the profile mixture, mouse as a
    coupled noisy copy.

    Each mouse sample follows its gaze sample with probability ``coupling``
    and is a fresh mixture draw otherwise; Gaussian jitter of scale
    ``mouse_noise`` (normalized units) is added either way. Timestamps tick
    strictly upward at a fixed rate.
    """
    if seed is None:
        seed = _session_seed(config, meta)
    rng = np.random.default_rng(seed)
    n = config.samples_per_session

    gaze_unit = _sample_mixture(rng, profile, n)
    fresh_unit = _sample_mixture(rng, profile, n)
    follows_gaze = rng.random(n) < config.coupling
    base = np.where(follows_gaze[:, None], gaze_unit, fresh_unit)
    jitter = rng.standard_normal((n, 2)) * config.mouse_noise
    mouse_unit = np.clip(base + jitter, 0.0, 1.0)

    t = np.arange(n, dtype=np.int64) * TICK_MS
    scale = np.array([VIEWPORT_W, VIEWPORT_H], dtype=np.float64)
    gaze_px = gaze_unit * scale
    mouse_px = mouse_unit * scale

    gaze = SampleStream(t, gaze_px[:, 0], gaze_px[:, 1], VIEWPORT_W, VIEWPORT_H, StreamKind.GAZE)
    mouse = SampleStream(t, mouse_px[:, 0], mouse_px[:, 1], VIEWPORT_W, VIEWPORT_H, StreamKind.MOUSE)
    return SessionRecord(meta=meta, mouse=mouse, gaze=gaze, stats=assign_browser_stats(meta))


_STATS_KEYS = (
    "webdriver",
    "webgl",
    "header",
    "language",
    "device_memory",
    "screen",
    "timezone",
    "plugins",
)

_OS_POOL = (
    "Windows NT 10.0; Win64; x64",
    "X11; Linux x86_64",
    "Macintosh; Intel Mac OS X 13_4",
    "Windows NT 6.1; Win64; x64",
)
_GPU_POOL = (
    "NVIDIA GeForce GTX 1660",
    "Intel(R) UHD Graphics 630",
    "AMD Radeon RX 580",
    "NVIDIA GeForce RTX 3060",
)
_LANG_POOL = ("de-DE", "en-US", "en-GB", "fr-FR")
_TZ_POOL = ("Europe/Berlin", "America/New_York", "Europe/London", "Europe/Paris")
_SCREEN_POOL = ("1920x1080", "2560x1440", "1366x768", "3840x2160")
_MEMORY_POOL = ("4", "8", "16", "32")
_ENGINE_POOL = ("Chrome/124.0", "Firefox/126.0", "Safari/17.4", "Edge/124.0")
_PLUGIN_POOL = ("3", "5", "0", "2")


def _stable_index(value: str, salt: str, pool_len: int) -> int:
    digest = hashlib.sha256(f"{salt}:{value}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % pool_len

def _stable_tag(value: str) -> str:
    return hashlib.sha256(value.encode("utf-8")).hexdigest()[:12]


def assign_browser_stats(meta: SessionMeta) -> BrowserStats:
    """Deterministic synthetic stats for a (computer, browser) cell.

    The values never depend on the user, so two users sharing a machine and
    browser get identical statistics. Distinct browsers on one computer are
    guaranteed to differ in at least the header and webgl values (each
    embeds a digest of the browser id).
    """
    computer = meta.computer_id
    browser = meta.browser_id
    os_string = _OS_POOL[_stable_index(computer, "os", len(_OS_POOL))]
    gpu = _GPU_POOL[_stable_index(computer, "gpu", len(_GPU_POOL))]
    engine = _ENGINE_POOL[_stable_index(browser, "engine", len(_ENGINE_POOL))]
    browser_tag = _stable_tag(browser)
    values = {
        "webdriver": "false",
        "webgl": f"ANGLE ({gpu} Direct3D11 vs_5_0 ps_5_0, build {browser_tag})",
        "header": f"Mozilla/5.0 ({os_string}) AppleWebKit/537.36 {engine} rev/{browser_tag}",
        "language": _LANG_POOL[_stable_index(computer, "lang", len(_LANG_POOL))],
        "device_memory": _MEMORY_POOL[_stable_index(computer, "mem", len(_MEMORY_POOL))],
        "screen": _SCREEN_POOL[_stable_index(computer, "screen", len(_SCREEN_POOL))],
        "timezone": _TZ_POOL[_stable_index(computer, "tz", len(_TZ_POOL))],
        "plugins": _PLUGIN_POOL[_stable_index(browser, "plugins", len(_PLUGIN_POOL))],
    }
    return BrowserStats(tuple((k, values[k]) for k in _STATS_KEYS))


def gen_corpus(config: SynthConfig) -> Dataset:
    """Generate the fully-crossed corpus: every user on every computer and
    browser, deterministic from the master seed."""
    profiles = gen_profiles(config)
    records = []
    for u, profile in enumerate(profiles):
        for c in range(config.num_computers):
            for b in range(config.num_browsers):
                for r in range(config.recordings_per_cell):
                    meta = SessionMeta(
                        session_id=f"u{u + 1}-c{c + 1}-b{b + 1}-r{r + 1}",
                        user_id=profile.user_id,
                        computer_id=f"c{c + 1}",
                        browser_id=f"b{b + 1}",
                        recording_index=r + 1,
                    )
                    records.append(gen_session(profile, config, meta))
    return Dataset(records=tuple(records))


def write_corpus(dataset: Dataset, out_dir: str | Path, config: SynthConfig) -> Path:
    """Write one JSONL file per session plus a manifest echoing the config."""
    import json

    from .events import write_session

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for record in dataset.records:
        name = f"{record.meta.session_id}.jsonl"
        write_session(record, out_dir / name)
        files.append(name)
    manifest = {
        "config": config.as_dict(),
        "seed": config.seed,
        "num_sessions": len(dataset.records),
        "files": files,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path
