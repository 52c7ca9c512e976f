import numpy as np
import pytest

from drivesense.event_class import EventClass
from drivesense.exceptions import (ExecutionException, ValidationException,
                                   ValidationExceptionCode)
from drivesense.features.frame import FEATURE_CHANNELS, engineer_features
from drivesense.windowing.config import WindowConfig
from drivesense.windowing.splits import (DataSplit, SplitProtocol,
                                         leave_one_driver_out,
                                         require_valid_split, split_grouped,
                                         split_stratified, verify_split)
from drivesense.windowing.window_set import (WindowSet, assign_window_label,
                                             load_window_set, save_window_set,
                                             segment)

from utils import make_session, make_window_set

G = 9.80665


def cruise_frame(seconds):
    return engineer_features(make_session(int(seconds * 25)))


def window_features(rows=100, **channels):
    frame = engineer_features(make_session(rows, **channels))
    return frame.values


def test_window_count():
    """
    Test a 10 s session with W=4, S=1, H=0
    """
    frame = cruise_frame(10)
    windows = segment(frame, np.zeros(len(frame), dtype=np.int64),
                      WindowConfig(W=4, S=1, H=0))

    assert len(windows) == 7
    assert windows.start_t.tolist() == [0, 1, 2, 3, 4, 5, 6]
    assert windows.features.shape == (7, 100, 10)
    assert windows.channels == FEATURE_CHANNELS


def test_tiling_windows():
    frame = cruise_frame(10)
    windows = segment(frame, np.zeros(len(frame), dtype=np.int64),
                      WindowConfig(W=4, S=4))

    assert windows.start_t.tolist() == [0, 4]
    np.testing.assert_array_equal(windows.features[1], frame.values[100:200])


def test_horizon_shortens_the_session():
    frame = cruise_frame(10)
    windows = segment(frame, np.zeros(len(frame), dtype=np.int64),
                      WindowConfig(W=4, S=1, H=2))

    assert len(windows) == 5


def test_horizon_labels_look_ahead():
    """
    Test the label interval starts H seconds after the window
    """
    frame = cruise_frame(10)
    labels = np.zeros(len(frame), dtype=np.int64)
    labels[150:200] = EventClass.HarshBrake
    windows = segment(frame, labels, WindowConfig(W=2, S=2, H=2))

    # the window starting at 4 s is labelled from 6..8 s
    assert windows.labels.tolist() == [0, 0, 2, 0]


def test_session_too_short():
    frame = cruise_frame(3)
    with pytest.raises(ValidationException) as err:
        segment(frame, np.zeros(len(frame), dtype=np.int64), WindowConfig())

    assert err.value.exception_code == ValidationExceptionCode.SessionTooShort


def test_vote_majority():
    label = assign_window_label(
        np.zeros(100, dtype=np.int64), window_features(), WindowConfig())
    assert label == EventClass.Normal


def test_vote_sustained_minority():
    """
    Test 20 % braking beats an 80 % normal majority
    """
    labels = np.zeros(100, dtype=np.int64)
    labels[:20] = EventClass.HarshBrake

    assert assign_window_label(
        labels, window_features(), WindowConfig()) == EventClass.HarshBrake


def test_vote_priority():
    labels = np.zeros(100, dtype=np.int64)
    labels[:20] = EventClass.HarshBrake
    labels[20:35] = EventClass.HarshTurn

    assert assign_window_label(
        labels, window_features(), WindowConfig()) == EventClass.HarshTurn


def test_override_on_extreme_dynamics():
    """
    Test a hard turn at speed overrides an all-normal vote
    """
    a_lat = np.zeros(100)
    a_lat[50] = 0.65 * G
    features = window_features(speed=40 / 3.6, a_lat=a_lat)

    assert assign_window_label(
        np.zeros(100, dtype=np.int64), features, WindowConfig()
    ) == EventClass.HarshTurn


def test_override_needs_pedal():
    a_long = np.zeros(100)
    a_long[10] = -0.5 * G
    soft = window_features(a_long=a_long, brake=0.2)
    hard = window_features(a_long=a_long, brake=0.6)
    labels = np.zeros(100, dtype=np.int64)

    assert assign_window_label(labels, soft, WindowConfig()) == 0
    assert assign_window_label(
        labels, hard, WindowConfig()) == EventClass.HarshBrake


def test_window_container(tmp_path, grouped_windows):
    save_window_set(grouped_windows, tmp_path / "windows.bin")
    loaded = load_window_set(tmp_path / "windows.bin")

    assert loaded.labels.tolist() == grouped_windows.labels.tolist()
    assert loaded.driver_ids == grouped_windows.driver_ids
    assert loaded.channels == grouped_windows.channels
    np.testing.assert_allclose(
        loaded.features, grouped_windows.features, rtol=1e-6, atol=1e-6)


def test_window_set_metadata_lengths():
    with pytest.raises(ExecutionException):
        WindowSet(
            features=np.zeros((2, 4, 1)),
            labels=np.zeros(3, dtype=np.int64),
            session_ids=("a", "b"),
            driver_ids=("a", "b"),
            start_t=np.zeros(2),
            sample_rate_hz=25.0,
            channels=("c0",),
        )


def test_stratified_ratios():
    """
    Test 100 windows of one class split 70/15/15
    """
    windows = make_window_set([0] * 100)
    split = split_stratified(windows, (0.7, 0.15, 0.15), seed=1)

    assert (len(split.train), len(split.validation), len(split.test)) == (
        70, 15, 15)
    assert verify_split(split, windows) == []


def test_stratified_is_seeded():
    windows = make_window_set([0] * 30 + [1] * 10 + [2] * 10)
    first = split_stratified(windows, (0.7, 0.15, 0.15), seed=4)
    second = split_stratified(windows, (0.7, 0.15, 0.15), seed=4)

    assert first.to_json() == second.to_json()


def test_stratified_class_too_small():
    windows = make_window_set([0] * 30 + [3] * 2)
    with pytest.raises(ValidationException) as err:
        split_stratified(windows, (0.7, 0.15, 0.15), seed=0)

    assert err.value.exception_code == ValidationExceptionCode.ClassTooSmall


def test_hold_out_session():
    """
    Test a held-out session lands entirely in the test split
    """
    sessions = [f"s-{i % 4}" for i in range(40)]
    windows = make_window_set([0] * 40, drivers=sessions, sessions=sessions)
    split = split_grouped(windows, SplitProtocol.session, ["s-3"], seed=0)
    test_sessions = {windows.session_ids[i] for i in split.test}
    other = {
        windows.session_ids[i]
        for i in np.concatenate((split.train, split.validation))
    }

    assert test_sessions == {"s-3"}
    assert "s-3" not in other
    assert len(split.test) == 10
    require_valid_split(split, windows)


def test_grouped_ratio_split(grouped_windows):
    split = split_grouped(
        grouped_windows, SplitProtocol.driver, (0.7, 0.15, 0.15), seed=2)

    assert verify_split(split, grouped_windows) == []
    assert len(split.train) + len(split.validation) + len(split.test) == 36
    assert len(split.test) > 0 and len(split.validation) > 0


def test_unknown_group(grouped_windows):
    with pytest.raises(ValidationException) as err:
        split_grouped(grouped_windows, SplitProtocol.driver, ["nobody"], 0)

    assert err.value.exception_code == ValidationExceptionCode.UnknownGroupId


def test_too_few_groups():
    windows = make_window_set([0] * 10, drivers=["a"] * 5 + ["b"] * 5)
    with pytest.raises(ValidationException) as err:
        split_grouped(windows, SplitProtocol.driver, (0.7, 0.15, 0.15), 0)

    assert err.value.exception_code == ValidationExceptionCode.TooFewGroups


def test_leave_one_driver_out():
    """
    Test each of three drivers is tested exactly once
    """
    drivers = [f"d-{i % 3}" for i in range(30)]
    windows = make_window_set([0] * 30, drivers=drivers)
    folds = leave_one_driver_out(windows, seed=0)

    assert len(folds) == 3
    tested = [{windows.driver_ids[i] for i in fold.test} for fold in folds]
    assert tested == [{"d-0"}, {"d-1"}, {"d-2"}]
    for fold in folds:
        assert verify_split(fold, windows) == []


def test_verifier_flags_leaked_session():
    sessions = ["a", "a", "b", "c"]
    windows = make_window_set([0] * 4, drivers=sessions, sessions=sessions)
    split = DataSplit(
        train=np.array([0, 2]),
        validation=np.array([3]),
        test=np.array([1]),
        protocol=SplitProtocol.session,
    )

    violations = verify_split(split, windows)
    assert len(violations) == 1
    assert "['a']" in violations[0]
    with pytest.raises(ValidationException) as err:
        require_valid_split(split, windows)
    assert err.value.exception_code == ValidationExceptionCode.InvalidSplit


def test_split_manifest(tmp_path, grouped_windows):
    split = split_grouped(
        grouped_windows, SplitProtocol.driver, (0.7, 0.15, 0.15), seed=2)
    split.save(tmp_path / "split.json")
    loaded = DataSplit.load(tmp_path / "split.json")

    assert loaded.to_json() == split.to_json()


def test_config_validation():
    with pytest.raises(ValidationException) as err:
        WindowConfig(S=5.0, split_protocol="random")

    assert "S <= W" in err.value.message
    assert "split_protocol" in err.value.message
