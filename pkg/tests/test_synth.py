import json

import numpy as np
import pytest

from userprint.events import serialize_session
from userprint.featurize import build_heatmap, pearson_correlation
from userprint.synth import (
    SynthConfig,
    UserProfile,
    MixtureComponent,
    assign_browser_stats,
    gen_corpus,
    gen_profiles,
    gen_session,
    write_corpus,
    _MIN_COMPONENT_SEPARATION,
)
from userprint.events import SessionMeta


class TestProfiles:
    def test_deterministic_from_seed(self):
        config = SynthConfig(seed=5)
        assert gen_profiles(config) == gen_profiles(config)

    def test_different_seeds_differ(self):
        assert gen_profiles(SynthConfig(seed=1)) != gen_profiles(SynthConfig(seed=2))

    def test_two_user_separation(self):
        config = SynthConfig(num_users=2, seed=3)
        a, b = gen_profiles(config)
        for ca in a.components:
            for cb in b.components:
                linf = max(abs(ca.mean[0] - cb.mean[0]), abs(ca.mean[1] - cb.mean[1]))
                assert linf >= _MIN_COMPONENT_SEPARATION

    def test_weights_normalized(self):
        for profile in gen_profiles(SynthConfig(seed=9)):
            assert abs(sum(c.weight for c in profile.components) - 1.0) <= 1e-9
            assert 2 <= len(profile.components) <= 4

    def test_profile_invariants_enforced(self):
        with pytest.raises(ValueError):
            UserProfile("u", ())
        with pytest.raises(ValueError):
            UserProfile("u", (MixtureComponent(0.5, (0.5, 0.5), (0.1, 0.1)),))
        with pytest.raises(ValueError):
            UserProfile("u", (MixtureComponent(1.0, (1.5, 0.5), (0.1, 0.1)),))


class TestGenSession:
    def _meta(self):
        return SessionMeta("s1", "u1", "c1", "b1", 1)

    def _profile(self, config):
        return gen_profiles(config)[0]

    def test_full_coupling_no_noise_copies_gaze(self):
        config = SynthConfig(coupling=1.0, mouse_noise=0.0, samples_per_session=300)
        record = gen_session(self._profile(config), config, self._meta(), seed=4)
        assert np.array_equal(record.mouse.x, record.gaze.x)
        assert np.array_equal(record.mouse.y, record.gaze.y)
        corr = pearson_correlation(build_heatmap(record.mouse, 10), build_heatmap(record.gaze, 10))
        assert corr == 1.0

    def test_zero_coupling_matches_self_correlation_floor(self):
        # at coupling 0 with no jitter, mouse is an independent draw from the
        # same mixture; its correlation to gaze must match the correlation of
        # two fresh gaze draws (measured independently over 20 seeds)
        config = SynthConfig(coupling=0.0, mouse_noise=0.0, samples_per_session=400)
        profile = self._profile(config)
        coupled, reference = [], []
        for seed in range(20):
            record = gen_session(profile, config, self._meta(), seed=seed)
            coupled.append(
                pearson_correlation(build_heatmap(record.mouse, 10), build_heatmap(record.gaze, 10))
            )
            r1 = gen_session(profile, config, self._meta(), seed=1000 + seed)
            r2 = gen_session(profile, config, self._meta(), seed=2000 + seed)
            reference.append(
                pearson_correlation(build_heatmap(r1.gaze, 10), build_heatmap(r2.gaze, 10))
            )
        assert np.mean(coupled) == pytest.approx(np.mean(reference), abs=0.05)

    def test_timestamps_strictly_increasing_at_fixed_tick(self):
        config = SynthConfig(samples_per_session=50)
        record = gen_session(self._profile(config), config, self._meta(), seed=0)
        diffs = np.diff(record.mouse.t)
        assert np.all(diffs > 0)
        assert len(set(diffs.tolist())) == 1

    def test_deterministic_given_seed(self):
        config = SynthConfig(samples_per_session=100)
        profile = self._profile(config)
        a = gen_session(profile, config, self._meta(), seed=7)
        b = gen_session(profile, config, self._meta(), seed=7)
        assert a == b

    def test_stats_attached_from_meta(self):
        config = SynthConfig(samples_per_session=10)
        record = gen_session(self._profile(config), config, self._meta(), seed=0)
        assert record.stats == assign_browser_stats(self._meta())


class TestBrowserStats:
    def test_user_independent(self):
        a = assign_browser_stats(SessionMeta("s1", "alice", "c1", "b1", 1))
        b = assign_browser_stats(SessionMeta("s2", "bob", "c1", "b1", 2))
        assert a == b

    def test_browsers_differ_in_header_and_webgl(self):
        a = dict(assign_browser_stats(SessionMeta("s1", "u", "c1", "b1", 1)).attributes)
        b = dict(assign_browser_stats(SessionMeta("s2", "u", "c1", "b2", 1)).attributes)
        assert a["header"] != b["header"]
        assert a["webgl"] != b["webgl"]

    def test_full_design_has_four_distinct_values(self):
        seen = set()
        for c in ("c1", "c2"):
            for b in ("b1", "b2"):
                seen.add(assign_browser_stats(SessionMeta("s", "u", c, b, 1)).attributes)
        assert len(seen) == 4

    def test_fixed_key_set(self):
        stats = assign_browser_stats(SessionMeta("s", "u", "c", "b", 1))
        assert [k for k, _ in stats.attributes] == [
            "webdriver", "webgl", "header", "language",
            "device_memory", "screen", "timezone", "plugins",
        ]


class TestGenCorpus:
    def test_default_design_is_72_sessions(self):
        ds = gen_corpus(SynthConfig(samples_per_session=20))
        assert len(ds.records) == 72
        assert len(ds.users) == 6
        assert len(ds.computers) == 2
        assert len(ds.browsers) == 2

    def test_fully_crossed(self):
        ds = gen_corpus(SynthConfig(samples_per_session=10))
        seen = {(m.user_id, m.computer_id, m.browser_id) for m in (r.meta for r in ds.records)}
        assert len(seen) == 6 * 2 * 2

    def test_minimal_corpus(self):
        config = SynthConfig(
            num_users=2, num_computers=1, num_browsers=1,
            recordings_per_cell=1, samples_per_session=5,
        )
        ds = gen_corpus(config)
        assert len(ds.records) == 2

    def test_byte_identical_for_same_seed(self):
        config = SynthConfig(
            num_users=2, num_computers=1, num_browsers=1,
            recordings_per_cell=2, samples_per_session=30, seed=13,
        )
        a = [serialize_session(r) for r in gen_corpus(config).records]
        b = [serialize_session(r) for r in gen_corpus(config).records]
        assert a == b

    def test_records_satisfy_event_invariants(self, tiny_corpus):
        for record in tiny_corpus.records:
            assert record.mouse.viewport_w > 0
            assert np.all(np.diff(record.mouse.t) >= 0)
            assert record.gaze is not None
            assert len(record.gaze) == len(record.mouse)


class TestCouplingRegime:
    def test_monotone_in_coupling(self):
        medians = []
        for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
            config = SynthConfig(coupling=rho, samples_per_session=400, seed=42)
            ds = gen_corpus(config)
            cs = [
                pearson_correlation(build_heatmap(r.mouse, 10), build_heatmap(r.gaze, 10))
                for r in ds.records
            ]
            medians.append(float(np.median(cs)))
        assert all(medians[i] <= medians[i + 1] for i in range(len(medians) - 1)), medians

    def test_default_coupling_stays_above_half(self):
        ds = gen_corpus(SynthConfig(seed=1, samples_per_session=400))
        cs = np.array([
            pearson_correlation(build_heatmap(r.mouse, 10), build_heatmap(r.gaze, 10))
            for r in ds.records
        ])
        assert np.median(cs) > 0.5
        assert (cs > 0.5).mean() >= 0.95


class TestWriteCorpus:
    def test_writes_files_and_manifest(self, tmp_path):
        config = SynthConfig(
            num_users=2, num_computers=1, num_browsers=1,
            recordings_per_cell=1, samples_per_session=5, seed=2,
        )
        ds = gen_corpus(config)
        manifest_path = write_corpus(ds, tmp_path / "corpus", config)
        manifest = json.loads(manifest_path.read_text())
        assert manifest["num_sessions"] == 2
        assert manifest["seed"] == 2
        assert manifest["config"]["num_users"] == 2
        files = sorted((tmp_path / "corpus").glob("*.jsonl"))
        assert len(files) == 2

    def test_calibration_fixture_reproduces(self):
        """The committed calibration run must match regenerated values."""
        from pathlib import Path

        fixture_path = Path(__file__).parent / "fixtures" / "coupling_calibration.json"
        fixture = json.loads(fixture_path.read_text())
        config = SynthConfig(seed=fixture["seed"], samples_per_session=fixture["samples_per_session"])
        for rho_str, expected in fixture["median_by_coupling"].items():
            ds = gen_corpus(
                SynthConfig(
                    coupling=float(rho_str),
                    seed=fixture["seed"],
                    samples_per_session=fixture["samples_per_session"],
                )
            )
            cs = [
                pearson_correlation(build_heatmap(r.mouse, 10), build_heatmap(r.gaze, 10))
                for r in ds.records
            ]
            assert float(np.median(cs)) == pytest.approx(expected, abs=1e-12)
