from dataclasses import replace

import numpy as np
import pytest

from drivesense.event_class import EventClass
from drivesense.exceptions import ValidationException, ValidationExceptionCode
from drivesense.telemetry.session import (DEFAULT_SCHEMA, FILE_UNITS,
                                          convert_units, g_to_mps2,
                                          kmh_to_mps, load_csv_session,
                                          save_csv_session)
from drivesense.telemetry.synthetic import (NoiseSigma, PlantedEvent,
                                            SimulationConfig, SyntheticSpec,
                                            generate_synthetic_session,
                                            load_ground_truth,
                                            save_ground_truth, simulate_fleet)


def write_csv(path, times, session_id="trip-1", driver_id="alice"):
    header = ",".join(DEFAULT_SCHEMA.header())
    lines = [header] + [
        f"{t},50.0,0.01,-0.02,0,15,{session_id},{driver_id}" for t in times]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_two_row_csv(tmp_path):
    """
    Test a well-formed CSV keeps its samples, ids and file units
    """
    session = load_csv_session(write_csv(tmp_path / "s.csv", [0.0, 0.04]))

    assert len(session) == 2
    assert session.session_id == "trip-1"
    assert session.driver_id == "alice"
    assert session.sample_rate_hz == 25.0
    assert session.units == FILE_UNITS
    assert session.throttle[0] == pytest.approx(0.15)


def test_duplicated_timestamp(tmp_path):
    """
    Test a repeated timestamp is reported at its row
    """
    path = write_csv(tmp_path / "s.csv", [0.0, 0.04, 0.04, 0.08])
    with pytest.raises(ValidationException) as err:
        load_csv_session(path)

    assert err.value.exception_code == ValidationExceptionCode.NonMonotonicTime
    assert "row 2" in err.value.message


def test_gap_in_sampling(tmp_path):
    """
    Test a 0.2 s gap in a 25 Hz recording
    """
    times = np.arange(1500) * 0.04
    times[700:] += 0.16
    with pytest.raises(ValidationException) as err:
        load_csv_session(write_csv(tmp_path / "s.csv", times.round(6)))

    assert err.value.exception_code == (
        ValidationExceptionCode.NonUniformSampling)


def test_missing_column(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("time_s,speed_kmh\n0,1\n")
    with pytest.raises(ValidationException) as err:
        load_csv_session(path)

    assert err.value.exception_code == ValidationExceptionCode.MissingColumn


def test_unparsable_value(tmp_path):
    path = write_csv(tmp_path / "s.csv", [0.0, 0.04, 0.08])
    path.write_text(path.read_text().replace("50.0", "fast", 1))
    with pytest.raises(ValidationException) as err:
        load_csv_session(path)

    assert err.value.exception_code == ValidationExceptionCode.UnparsableValue


def test_unit_helpers():
    """
    Test km/h and g conversions
    """
    assert kmh_to_mps(15.0) == pytest.approx(4.16667, abs=1e-5)
    assert g_to_mps2(0.35) == pytest.approx(0.35 * 9.80665)
    assert kmh_to_mps(0.0) == 0.0
    assert g_to_mps2(0.0) == 0.0


def test_convert_units_is_idempotent(tmp_path):
    session = load_csv_session(write_csv(tmp_path / "s.csv", [0.0, 0.04]))
    once = convert_units(session)
    twice = convert_units(once)

    assert once.units.is_si
    assert once.speed[0] == pytest.approx(50.0 / 3.6)
    assert once.a_lat[0] == pytest.approx(-0.02 * 9.80665)
    np.testing.assert_allclose(twice.speed, once.speed, rtol=1e-12)
    np.testing.assert_allclose(twice.a_long, once.a_long, rtol=1e-12)


def test_csv_round_trip(tmp_path, planted_session):
    session, _ = planted_session
    save_csv_session(session, tmp_path / "s.csv")
    loaded = convert_units(load_csv_session(tmp_path / "s.csv"))

    assert loaded.session_id == session.session_id
    assert loaded.sample_rate_hz == session.sample_rate_hz
    for name in ("t", "speed", "a_long", "a_lat", "brake", "throttle"):
        np.testing.assert_allclose(
            loaded.channel(name), session.channel(name),
            rtol=1e-9, atol=1e-12)


def test_quiet_session():
    """
    Test zero noise and no planted events give constant dynamics
    """
    spec = SyntheticSpec(
        duration=20.0, cruise_speed=50.0, cruise_variation=0.0,
        lateral_sway=0.0)
    session, ground_truth = generate_synthetic_session(spec)

    assert len(ground_truth) == 0
    assert len(session) == 500
    np.testing.assert_allclose(session.speed, 50.0 / 3.6)
    np.testing.assert_allclose(session.a_long, 0.0, atol=1e-12)
    np.testing.assert_allclose(session.a_lat, 0.0, atol=1e-12)


def test_planted_brake(planted_session):
    """
    Test a planted 0.5 g brake shows in the deceleration and pedal channels
    """
    session, ground_truth = planted_session
    brake_event = ground_truth.of_class(EventClass.HarshBrake)[0]
    inside = (session.t >= brake_event.start) & (session.t < brake_event.end)

    assert session.a_long[inside].min() <= -0.45 * 9.80665
    assert session.brake[inside].min() >= 0.7
    assert len(ground_truth) == 3
    assert [e.start for e in ground_truth] == sorted(
        e.start for e in ground_truth)


def test_generation_is_deterministic(planted_spec):
    first, _ = generate_synthetic_session(planted_spec)
    second, _ = generate_synthetic_session(planted_spec)

    for name in ("t", "speed", "a_long", "a_lat", "brake", "throttle"):
        assert np.array_equal(first.channel(name), second.channel(name))


def test_noise_depends_on_seed(planted_spec):
    noisy = replace(planted_spec, noise_sigma=NoiseSigma(a_long=0.1))
    first, _ = generate_synthetic_session(noisy)
    second, _ = generate_synthetic_session(replace(noisy, seed=8))

    assert not np.array_equal(first.a_long, second.a_long)


def test_rejects_overlapping_events():
    with pytest.raises(ValidationException) as err:
        SyntheticSpec(
            duration=30.0,
            cruise_speed=50.0,
            planted_events=(
                PlantedEvent(EventClass.HarshTurn, 5.0, 3.0, 0.7),
                PlantedEvent(EventClass.HarshTurn, 7.0, 3.0, 0.7),
            ),
        )

    assert err.value.exception_code == ValidationExceptionCode.InvalidConfig


def test_infeasible_brake():
    """
    Test braking a slow car past standstill
    """
    spec = SyntheticSpec(
        duration=10.0,
        cruise_speed=10.0,
        planted_events=(
            PlantedEvent(EventClass.HarshBrake, 2.0, 3.0, 0.8),),
    )
    with pytest.raises(ValidationException) as err:
        generate_synthetic_session(spec)

    assert err.value.exception_code == ValidationExceptionCode.InfeasibleEvent


def test_simulate_fleet():
    cfg = SimulationConfig(sessions=5, drivers=2, duration=60.0)
    fleet = simulate_fleet(cfg, seed=11)

    assert len(fleet) == 5
    assert [s.driver_id for s, _ in fleet] == [
        "driver-00", "driver-01", "driver-00", "driver-01", "driver-00"]
    for session, ground_truth in fleet:
        assert len(ground_truth) == 3
        events = list(ground_truth)
        for first, second in zip(events, events[1:]):
            assert second.start - first.end >= cfg.min_gap - 1e-9
        assert events[-1].end <= session.t[-1] + session.dt


def test_ground_truth_file(tmp_path, planted_session):
    _, ground_truth = planted_session
    save_ground_truth(ground_truth, tmp_path / "truth.csv")

    assert load_ground_truth(tmp_path / "truth.csv") == ground_truth
