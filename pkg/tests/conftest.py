import pytest

from drivesense.event_class import EventClass
from drivesense.network.config import NetworkConfig
from drivesense.telemetry.synthetic import (NoiseSigma, PlantedEvent,
                                            SyntheticSpec,
                                            generate_synthetic_session)

from utils import make_window_set


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run acceptance-scale tests",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def planted_spec():
    """One well separated event per aggressive class, noise free."""
    return SyntheticSpec(
        duration=60.0,
        cruise_speed=50.0,
        noise_sigma=NoiseSigma(),
        planted_events=(
            PlantedEvent(EventClass.HarshBrake, 10.0, 1.0, 0.5),
            PlantedEvent(EventClass.HarshAccel, 25.0, 1.5, 0.5),
            PlantedEvent(EventClass.HarshTurn, 40.0, 3.0, 0.7),
        ),
        seed=7,
    )


@pytest.fixture
def planted_session(planted_spec):
    return generate_synthetic_session(planted_spec)


@pytest.fixture
def tiny_network():
    return NetworkConfig(
        input_rows=8,
        input_channels=2,
        conv1_filters=3,
        conv1_kernel=3,
        conv2_filters=3,
        conv2_kernel=3,
        lstm1_hidden=3,
        lstm2_hidden=2,
        dense1=3,
        dense2=3,
        dropout=0.0,
        recurrent_dropout=0.0,
    )


@pytest.fixture
def grouped_windows():
    """Six drivers, one session each, every class present per driver."""
    return make_window_set(
        labels=[0, 0, 0, 1, 2, 3] * 6,
        drivers=[f"driver-{i // 6}" for i in range(36)],
        rows=8,
        channels=2,
        seed=3,
    )
