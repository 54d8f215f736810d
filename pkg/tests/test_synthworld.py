import zipfile

import numpy as np
import pytest

from multisense.core import ValidationError
from multisense.synthworld import (AvailabilitySchedule, Dataset,
                                   DatasetFormatError, DeviceProfile,
                                   LatentTrace, QualityProcess,
                                   WorkloadConfig, WorldConfig,
                                   export_dataset, generate_latent,
                                   import_dataset, observe, render_stream,
                                   sample_availability)


class TestGenerateLatent:
    def test_deterministic_given_seed(self, small_world):
        a = generate_latent(small_world, seed=7)
        b = generate_latent(small_world, seed=7)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.base, b.base)

    def test_identity_chain_gives_constant_label(self):
        cfg = WorldConfig(n_classes=3, n_channels=2, sample_rate=20.0,
                          horizon=50.0, stay_prob=1.0)
        trace = generate_latent(cfg, seed=3)
        assert np.unique(trace.labels).size == 1

    def test_label_histogram_near_stationary(self):
        # symmetric chain: stationary distribution is uniform; a long
        # horizon keeps dwell-time correlation from swamping the check
        cfg = WorldConfig(n_classes=8, n_channels=1, sample_rate=4.0,
                          horizon=10_000.0, stay_prob=0.5)
        trace = generate_latent(cfg, seed=0)
        freq = np.bincount(trace.labels, minlength=8) / trace.n_windows
        assert np.all(np.abs(freq - 1.0 / 8) < 0.1 * (1.0 / 8))

    def test_degenerate_configs_rejected(self):
        with pytest.raises(ValidationError):
            generate_latent(WorldConfig(n_classes=1), seed=0)
        with pytest.raises(ValidationError):
            generate_latent(WorldConfig(horizon=0.0), seed=0)


class TestObserve:
    def test_identity_profile_returns_base(self, small_world):
        trace = generate_latent(small_world, seed=1)
        prof = DeviceProfile(id=0, gain=1.0, bias=0.0, noise_std=0.0)
        w = observe(trace, prof, 5, seed=1)
        assert np.allclose(w.samples, trace.base[5], atol=1e-7)

    def test_affine_arithmetic(self):
        cfg = WorldConfig(n_classes=2, n_channels=1, sample_rate=10.0,
                          horizon=5.0, signal_jitter=0.0)
        trace = generate_latent(cfg, seed=0)
        prof = DeviceProfile(id=1, gain=2.0, bias=1.0, noise_std=0.0)
        w = observe(trace, prof, 0, seed=0)
        assert np.allclose(w.samples, 2.0 * trace.base[0] + 1.0, atol=1e-6)

    def test_noise_std_monte_carlo(self):
        cfg = WorldConfig(n_classes=2, n_channels=1, sample_rate=100.0,
                          horizon=100.0, signal_jitter=0.0)
        trace = generate_latent(cfg, seed=0)
        prof = DeviceProfile(id=0, gain=1.0, bias=0.0, noise_std=0.1)
        residuals = []
        for t in range(100):
            w = observe(trace, prof, t, seed=0)
            residuals.append(w.samples - trace.base[t])
        std = np.concatenate(residuals, axis=None).std()
        assert 0.097 <= std <= 0.103

    def test_out_of_range_index(self, small_world):
        trace = generate_latent(small_world, seed=0)
        prof = DeviceProfile(id=0, gain=1.0, bias=0.0, noise_std=0.0)
        with pytest.raises(IndexError):
            observe(trace, prof, trace.n_windows, seed=0)

    def test_zero_gain_rejected(self):
        with pytest.raises(ValidationError):
            DeviceProfile(id=0, gain=0.0, bias=0.0, noise_std=0.1)


class TestAvailability:
    def test_static_all_true(self):
        cfg = WorkloadConfig(kind="static", availability_p=1.0, seed=0,
                             horizon=100.0)
        sched = sample_availability(cfg, [0, 1, 2])
        assert sched.mask.all()

    def test_static_with_partial_p_rejected(self):
        with pytest.raises(ValidationError):
            WorkloadConfig(kind="static", availability_p=0.7)

    def test_p_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            WorkloadConfig(kind="dynamic", availability_p=0.0)
        with pytest.raises(ValidationError):
            WorkloadConfig(kind="dynamic", availability_p=1.2)

    def test_at_least_two_devices_fraction(self):
        # 3 C 2 * 0.7^2 * 0.3 + 0.7^3 = 0.784 exactly
        cfg = WorkloadConfig(kind="dynamic", availability_p=0.7, seed=11,
                             horizon=1e5)
        sched = sample_availability(cfg, [0, 1, 2], epoch_length=10.0)
        frac = np.mean(sched.mask.sum(axis=0) >= 2)
        assert abs(frac - 0.784) < 0.01

    def test_zero_devices_fraction(self):
        cfg = WorkloadConfig(kind="dynamic", availability_p=0.7, seed=5,
                             horizon=1e5)
        sched = sample_availability(cfg, [0, 1, 2], epoch_length=10.0)
        frac = np.mean(sched.mask.sum(axis=0) == 0)
        assert abs(frac - 0.027) < 0.005

    def test_per_device_marginal(self):
        cfg = WorkloadConfig(kind="dynamic", availability_p=0.8, seed=9,
                             horizon=1e5)
        sched = sample_availability(cfg, [0, 1], epoch_length=10.0)
        for row in sched.mask:
            assert abs(row.mean() - 0.8) < 0.01

    def test_unknown_device_defaults_available(self):
        cfg = WorkloadConfig(kind="dynamic", availability_p=0.5, seed=0,
                             horizon=100.0)
        sched = sample_availability(cfg, [0])
        assert sched.is_available(42, 0.0)


class TestDatasetArchive:
    def _world(self):
        return WorldConfig(n_classes=3, n_channels=2, sample_rate=10.0,
                           horizon=20.0)

    def _profiles(self):
        return [DeviceProfile(id=0, gain=1.0, bias=0.0, noise_std=0.1),
                DeviceProfile(id=1, gain=0.5, bias=0.2, noise_std=0.05)]

    def test_round_trip(self, tmp_path):
        trace = generate_latent(self._world(), seed=4)
        path = str(tmp_path / "ds.zip")
        export_dataset(trace, self._profiles(), path, seed=4)
        ds = import_dataset(path)
        assert np.array_equal(ds.trace.labels, trace.labels)
        assert np.array_equal(ds.trace.base, trace.base)
        assert ds.trace.config == trace.config
        for orig, back in zip(self._profiles(), ds.profiles):
            assert np.allclose(orig.expand(2).gain, back.gain)
            assert np.allclose(orig.expand(2).noise_std, back.noise_std)
        # streams match the deterministic render, at float32 precision
        want = render_stream(trace, self._profiles()[1], seed=4)
        assert np.allclose(ds.streams[1], want, atol=1e-5)

    def test_truncated_block_names_offset(self, tmp_path):
        trace = generate_latent(self._world(), seed=4)
        path = str(tmp_path / "ds.zip")
        export_dataset(trace, self._profiles(), path, seed=4)
        bad = str(tmp_path / "bad.zip")
        with zipfile.ZipFile(path) as src, zipfile.ZipFile(bad, "w") as dst:
            for name in src.namelist():
                data = src.read(name)
                if name == "base.f32":
                    data = data[:-8]
                dst.writestr(name, data)
        with pytest.raises(DatasetFormatError, match="byte offset"):
            import_dataset(bad)

    def test_unknown_version_rejected(self, tmp_path):
        trace = generate_latent(self._world(), seed=4)
        path = str(tmp_path / "ds.zip")
        export_dataset(trace, self._profiles(), path, seed=4)
        bad = str(tmp_path / "bad.zip")
        import json
        with zipfile.ZipFile(path) as src, zipfile.ZipFile(bad, "w") as dst:
            for name in src.namelist():
                data = src.read(name)
                if name == "header.json":
                    doc = json.loads(data)
                    doc["version"] = "999"
                    data = json.dumps(doc)
                dst.writestr(name, data)
        with pytest.raises(DatasetFormatError, match="version"):
            import_dataset(bad)

    def test_not_an_archive(self, tmp_path):
        path = tmp_path / "junk.zip"
        path.write_bytes(b"not a zip at all")
        with pytest.raises(DatasetFormatError):
            import_dataset(str(path))
