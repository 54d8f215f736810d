import numpy as np
import pytest

from multisense.core import SensorWindow
from multisense.synthworld import DeviceProfile, QualityProcess, WorldConfig


@pytest.fixture(scope="session")
def small_world():
    return WorldConfig(n_classes=4, n_channels=2, sample_rate=20.0,
                       horizon=120.0, class_separation=0.8)


@pytest.fixture(scope="session")
def small_profiles():
    return [
        DeviceProfile(id=0, gain=1.0, bias=0.0, noise_std=0.3,
                      quality=QualityProcess(period=60.0, amplitude=0.9)),
        DeviceProfile(id=1, gain=0.5, bias=0.7, noise_std=0.1,
                      quality=QualityProcess(period=60.0, amplitude=0.9,
                                             phase=2.1)),
        DeviceProfile(id=2, gain=0.6, bias=-0.4, noise_std=0.1,
                      quality=QualityProcess(period=60.0, amplitude=0.9,
                                             phase=4.2)),
    ]


@pytest.fixture(scope="session")
def small_scenario(small_world, small_profiles):
    from multisense.evaluation import build_scenario
    return build_scenario(small_world, small_profiles, seed=0,
                          train_horizon=100.0, n_alignment_windows=100)


def make_window(samples, device=0, rate=None, duration=1.0, start=0.0):
    samples = np.asarray(samples, dtype=float)
    if rate is None:
        rate = samples.shape[1] / duration
    return SensorWindow(device=device, start_time=start, samples=samples,
                        sample_rate=rate, duration=duration)
