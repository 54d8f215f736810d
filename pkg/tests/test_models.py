import numpy as np
import pytest

from multisense.models import (Classifier, ModelError, TrainingSet,
                               fit_classifier, infer, load_model, save_model,
                               training_accuracy, window_features)
from multisense.synthworld import DeviceProfile, generate_latent, observe
from conftest import make_window


def _two_class_set(rng, n_per_class=60, sep=6.0, device=0):
    windows, labels = [], []
    for label, mu in ((0, 0.0), (1, sep)):
        for _ in range(n_per_class):
            w = make_window(rng.normal(mu, 1.0, size=(2, 20)), device=device)
            windows.append(w)
            labels.append(label)
    return TrainingSet(device=device, windows=windows, labels=np.array(labels))


class TestFit:
    def test_well_separated_classes_high_accuracy(self):
        # 6 sigma mean separation: Bayes error below 0.002
        rng = np.random.default_rng(0)
        data = _two_class_set(rng, sep=6.0)
        clf = fit_classifier(data, n_classes=2, variant="gaussian")
        assert training_accuracy(clf, data) >= 0.99

    def test_logistic_variant_beats_chance(self):
        rng = np.random.default_rng(1)
        data = _two_class_set(rng, sep=4.0)
        clf = fit_classifier(data, n_classes=2, variant="logistic")
        assert training_accuracy(clf, data) > 0.5

    def test_single_class_rejected(self):
        rng = np.random.default_rng(0)
        data = _two_class_set(rng)
        with pytest.raises(ModelError):
            fit_classifier(data, n_classes=1)

    def test_missing_class_rejected(self):
        rng = np.random.default_rng(0)
        data = _two_class_set(rng)
        with pytest.raises(ModelError, match="missing"):
            fit_classifier(data, n_classes=3)

    def test_deterministic_fit(self):
        rng = np.random.default_rng(2)
        data = _two_class_set(rng)
        a = fit_classifier(data, n_classes=2, variant="logistic", seed=5)
        b = fit_classifier(data, n_classes=2, variant="logistic", seed=5)
        assert np.array_equal(a.weights, b.weights)

    def test_mixed_device_training_set_rejected(self):
        rng = np.random.default_rng(0)
        w0 = make_window(rng.normal(size=(2, 20)), device=0)
        w1 = make_window(rng.normal(size=(2, 20)), device=1)
        with pytest.raises(ModelError, match="single device"):
            TrainingSet(device=0, windows=[w0, w1], labels=np.array([0, 1]))


def _manual_gaussian(means, variances):
    k, f = means.shape
    return Classifier(id=0, training_device=0, n_classes=k,
                      variant="gaussian", n_channels=f // 3,
                      means=means, variances=variances,
                      log_priors=np.log(np.full(k, 1.0 / k)))


class TestInfer:
    def test_window_at_class_mean_wins(self):
        rng = np.random.default_rng(3)
        data = _two_class_set(rng, sep=6.0)
        clf = fit_classifier(data, n_classes=2, variant="gaussian")
        w = make_window(np.zeros((2, 20)))
        feats0 = window_features(w)
        # build a window whose features equal class-0 training mean is
        # awkward; instead check a clean draw near each class mean
        for label, mu in ((0, 0.0), (1, 6.0)):
            w = make_window(np.full((2, 20), mu) + rng.normal(0, 0.01, (2, 20)))
            assert infer(clf, w).argmax() == label

    def test_equidistant_symmetric_posteriors(self):
        # two classes with identical variances, probe half way between
        means = np.array([[0.0, 1.0, 1.0], [2.0, 1.0, 1.0]])
        variances = np.ones_like(means)
        clf = _manual_gaussian(means, variances)
        w = make_window(np.full((1, 10), 1.0))
        feats = window_features(w)
        # feats = [1.0, 0.0, 0.0]; distance to both means is symmetric in
        # the mean channel only if the other features match too, so probe
        # via direct posteriors
        p = infer(clf, w).probs
        assert abs(p[0] - p[1]) < 1e-9

    def test_posteriors_normalized_for_random_windows(self):
        rng = np.random.default_rng(4)
        data = _two_class_set(rng)
        clf = fit_classifier(data, n_classes=2)
        for _ in range(1000):
            w = make_window(rng.normal(0, 3.0, size=(2, 20)))
            p = infer(clf, w)
            assert abs(p.probs.sum() - 1.0) < 1e-9

    def test_channel_mismatch(self):
        rng = np.random.default_rng(0)
        clf = fit_classifier(_two_class_set(rng), n_classes=2)
        w = make_window(rng.normal(size=(3, 20)))
        with pytest.raises(ModelError, match="channel"):
            infer(clf, w)


class TestHeterogeneitySensitivity:
    def test_foreign_device_accuracy_drops(self, small_world):
        trace = generate_latent(small_world, seed=0)
        dev0 = DeviceProfile(id=0, gain=1.0, bias=0.0, noise_std=0.1)
        dev1 = DeviceProfile(id=1, gain=0.4, bias=0.8, noise_std=0.1)
        train = [observe(trace, dev0, t, seed=0) for t in range(trace.n_windows)]
        data = TrainingSet(device=0, windows=train, labels=trace.labels)
        clf = fit_classifier(data, n_classes=small_world.n_classes)
        eval_trace = generate_latent(small_world, seed=1)
        own = np.mean([
            infer(clf, observe(eval_trace, dev0, t, seed=1)).argmax() == lab
            for t, lab in enumerate(eval_trace.labels)])
        foreign_windows = [observe(eval_trace, dev1, t, seed=1)
                           for t in range(eval_trace.n_windows)]
        foreign = np.mean([
            infer(clf, w).argmax() == lab
            for w, lab in zip(foreign_windows, eval_trace.labels)])
        assert foreign < own


class TestSerialization:
    def test_round_trip_bitwise_inference(self, tmp_path):
        rng = np.random.default_rng(5)
        data = _two_class_set(rng)
        for variant in ("gaussian", "logistic"):
            clf = fit_classifier(data, n_classes=2, variant=variant)
            path = str(tmp_path / ("m_%s.json" % variant))
            save_model(clf, path)
            back = load_model(path)
            for _ in range(100):
                w = make_window(rng.normal(size=(2, 20)))
                assert np.array_equal(infer(clf, w).probs,
                                      infer(back, w).probs)

    def test_wrong_channel_count_after_load(self, tmp_path):
        rng = np.random.default_rng(6)
        clf = fit_classifier(_two_class_set(rng), n_classes=2)
        path = str(tmp_path / "m.json")
        save_model(clf, path)
        back = load_model(path)
        with pytest.raises(ModelError, match="channel"):
            infer(back, make_window(rng.normal(size=(5, 20))))

    def test_corrupted_file(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{{{{")
        with pytest.raises(ModelError):
            load_model(str(path))
