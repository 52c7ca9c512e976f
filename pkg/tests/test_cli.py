import json
from pathlib import Path
from signal import SIGTERM

import pandas as pd
import pytest

from drivesense.cli_manager import (InitData, PipelineConfig, Subcommand,
                                    SweepGrid, build_config,
                                    parse_config_text, render_config)
from drivesense.exceptions import ValidationException, ValidationExceptionCode
from drivesense.main import EXIT_OK, EXIT_VALIDATION, main
from drivesense.pipeline_endpoint import PipelineEndpoint
from drivesense.utils.SignalHaltError import SignalHaltError, immediate_exit
from drivesense.windowing.window_set import load_window_set

SIMULATION_CONFIG = """
# two quiet sessions with well separated events
simulate.sessions = 2
simulate.drivers = 2
simulate.duration = 90
simulate.noise_speed = 0
simulate.noise_accel = 0
simulate.noise_pedal = 0
simulate.min_gap = 10
simulate.brake_intensity = 0.45, 0.5
simulate.longitudinal_duration = 0.8, 1.2
simulate.turn_duration = 3, 4
"""

SMALL_MODEL = """
model.conv1_filters = 8
model.conv2_filters = 8
model.lstm1_hidden = 4
model.lstm2_hidden = 4
model.dense1 = 8
model.dense2 = 8
"""


def write_config(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


@pytest.mark.asyncio
async def test_simulate_then_label(tmp_path):
    """
    Test the labeller recovers every event the simulator planted
    """
    config = write_config(tmp_path / "sim.conf", SIMULATION_CONFIG)
    simulated = tmp_path / "sim"
    labelled = tmp_path / "label"

    assert await main(
        ["simulate", "--config", config, "--seed", "3",
         "--out", str(simulated)]) == EXIT_OK
    assert len(list((simulated / "sessions").glob("*.csv"))) == 2
    assert len(list((simulated / "ground_truth").glob("*.csv"))) == 2

    assert await main(
        ["label", "--config", config,
         "--input", str(simulated / "sessions"),
         "--ground_truth", str(simulated / "ground_truth"),
         "--out", str(labelled)]) == EXIT_OK
    document = json.loads((labelled / "event_comparison.json").read_text())

    assert document["overall"]["overall"]["recall"] == 1.0
    assert len(document["sessions"]) == 2
    assert len(list((labelled / "labels").glob("*.csv"))) == 2


@pytest.mark.asyncio
async def test_run_artifacts(tmp_path):
    config = write_config(tmp_path / "sim.conf", SIMULATION_CONFIG)
    await main(["simulate", "--config", config, "--seed", "4",
                "--out", str(tmp_path / "out")])
    run_info = json.loads((tmp_path / "out" / "run_info.json").read_text())
    resolved = (tmp_path / "out" / "resolved.conf").read_text()

    assert run_info["subcommand"] == "simulate"
    assert run_info["seed"] == 4
    assert "seed = 4" in resolved
    assert "simulate.sessions = 2" in resolved


@pytest.mark.asyncio
async def test_unknown_config_key(tmp_path, caplog):
    config = write_config(tmp_path / "bad.conf", "window.width = 3\n")
    status = await main(
        ["simulate", "--config", config, "--out", str(tmp_path / "out")])

    assert status == EXIT_VALIDATION
    assert "window.width" in caplog.text


@pytest.mark.asyncio
async def test_unknown_subcommand(tmp_path):
    assert await main(["fly", "--out", str(tmp_path)]) == EXIT_VALIDATION


@pytest.mark.asyncio
async def test_missing_input(tmp_path):
    status = await main(["label", "--out", str(tmp_path / "out")])
    assert status == EXIT_VALIDATION


@pytest.mark.asyncio
async def test_evaluate_needs_one_window_container(tmp_path, caplog):
    for name in ("a.bin", "b.bin"):
        (tmp_path / name).write_bytes(b"")
    status = await main(
        ["evaluate", "--input", str(tmp_path / "a.bin"),
         str(tmp_path / "b.bin"),
         "--checkpoint", str(tmp_path / "missing.bin"),
         "--out", str(tmp_path / "out")])

    assert status == EXIT_VALIDATION
    assert "Expected one window container, got 2" in caplog.text


@pytest.mark.asyncio
async def test_bench(tmp_path):
    config = write_config(
        tmp_path / "bench.conf",
        SMALL_MODEL + "eval.bench_windows = 100\neval.bench_warmup = 10\n")
    out = tmp_path / "out"

    assert await main(
        ["bench", "--config", config, "--out", str(out), "--metrics"]
    ) == EXIT_OK
    latency = json.loads((out / "latency.json").read_text())
    assert latency["windows"] == 100
    assert latency["p95_ms"] >= latency["p50_ms"]
    assert "window_forward_seconds" in (out / "metrics.prom").read_text()


class StoppableLoop:
    stopped = False

    def stop(self):
        self.stopped = True


def test_signal_halt(tmp_path, caplog):
    """
    Test SIGTERM stops the loop and exits with 143 naming the output folder
    """
    loop = StoppableLoop()
    with pytest.raises(SignalHaltError) as err:
        immediate_exit(SIGTERM, loop, tmp_path)

    assert loop.stopped
    assert err.value.code == 143
    assert "SIGTERM" in caplog.text
    assert str(tmp_path) in caplog.text


def test_config_round_trip():
    """
    Test a rendered configuration parses back to the same values
    """
    cfg = build_config(
        {
            "window.W": "3.0",
            "window.split_protocol": "session",
            "train.gamma": "2, 2, 1, 1",
            "eval.calibrate": "true",
        },
        seed=9,
    )
    rendered = render_config(cfg)

    assert build_config(parse_config_text(rendered)) == cfg
    assert cfg.loss.gamma == (2.0, 2.0, 1.0, 1.0)
    assert cfg.window.W == 3.0
    assert cfg.evaluation.calibrate


def test_config_errors():
    with pytest.raises(ValidationException) as err:
        build_config({"smote.seed": "3"})
    assert err.value.exception_code == ValidationExceptionCode.ConfigError

    with pytest.raises(ValidationException) as err:
        build_config({"train.lr": "fast"})
    assert "train.lr" in err.value.message

    with pytest.raises(ValidationException) as err:
        parse_config_text("seed = 1\nseed = 2\n")
    assert "duplicate" in err.value.message


def test_endpoint_registers_every_subcommand(tmp_path):
    init_data = InitData(
        subcommand=Subcommand.simulate,
        config=PipelineConfig(),
        out=tmp_path,
        inputs=[],
        ground_truth=None,
        checkpoint=None,
        grid=SweepGrid.window_horizon,
        is_verbose=False,
        is_metrics=False,
    )
    endpoint = PipelineEndpoint(init_data)

    assert sorted(endpoint.command_names) == sorted(
        s.value for s in Subcommand)


PIPELINE_CONFIG = SIMULATION_CONFIG.replace(
    "sessions = 2", "sessions = 6").replace(
    "drivers = 2", "drivers = 3") + SMALL_MODEL + """
simulate.events_per_class = 2
window.W = 2
train.max_epochs = 3
train.batch_size = 32
"""


async def simulate_and_window(tmp_path, config):
    assert await main(["simulate", "--config", config,
                       "--out", str(tmp_path / "sim")]) == EXIT_OK
    assert await main(["windows", "--config", config,
                       "--input", str(tmp_path / "sim" / "sessions"),
                       "--out", str(tmp_path / "windows")]) == EXIT_OK
    return tmp_path / "windows" / "windows.bin"


@pytest.mark.slow
@pytest.mark.asyncio
async def test_full_pipeline(tmp_path):
    config = write_config(tmp_path / "run.conf", PIPELINE_CONFIG)
    windows = await simulate_and_window(tmp_path, config)
    assert len(list((tmp_path / "windows" / "folds").glob("*.json"))) == 3

    train_out = tmp_path / "train"
    assert await main(["train", "--config", config, "--input", str(windows),
                       "--out", str(train_out)]) == EXIT_OK
    eval_out = tmp_path / "eval"
    assert await main(["evaluate", "--config", config,
                       "--input", str(windows),
                       "--checkpoint", str(train_out / "checkpoint.bin"),
                       "--out", str(eval_out)]) == EXIT_OK

    report = json.loads((eval_out / "report.json").read_text())
    assert 0.0 <= report["macro_fbeta"] <= 1.0
    assert set(report["classes"]) == {
        "normal", "harsh_accel", "harsh_brake", "harsh_turn"}
    assert (eval_out / "probabilities.csv").is_file()
    assert (eval_out / "confusion.csv").is_file()


@pytest.mark.slow
@pytest.mark.asyncio
async def test_training_is_reproducible(tmp_path):
    """
    Test two runs with the same seed write identical histories
    """
    config = write_config(tmp_path / "run.conf", PIPELINE_CONFIG)
    windows = await simulate_and_window(tmp_path, config)
    histories = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert await main(["train", "--config", config, "--seed", "5",
                           "--input", str(windows),
                           "--out", str(out)]) == EXIT_OK
        histories.append((out / "history.csv").read_bytes())

    assert histories[0] == histories[1]


DESK_SCALE_CONFIG = """
simulate.sessions = 12
simulate.drivers = 6
simulate.events_per_class = 2
window.split_protocol = driver
model.conv1_filters = 32
model.conv2_filters = 64
model.lstm1_hidden = 32
model.lstm2_hidden = 16
model.dense1 = 32
model.dense2 = 16
train.max_epochs = 50
"""


@pytest.mark.slow
@pytest.mark.asyncio
async def test_desk_scale_training(tmp_path):
    """
    Test about 2,000 mostly normal windows train to a held-out driver
    macro-F2 of at least 0.85 within 50 epochs
    """
    config = write_config(tmp_path / "desk.conf", DESK_SCALE_CONFIG)
    windows_file = await simulate_and_window(tmp_path, config)
    windows = load_window_set(windows_file)
    shares = windows.class_counts() / len(windows)

    assert 1_800 <= len(windows) <= 2_400
    assert 0.75 <= shares[0] <= 0.92
    assert all(0.02 <= share <= 0.10 for share in shares[1:])

    train_out = tmp_path / "train"
    assert await main(["train", "--config", config,
                       "--input", str(windows_file),
                       "--out", str(train_out)]) == EXIT_OK
    history = pd.read_csv(train_out / "history.csv")
    assert len(history) <= 50

    eval_out = tmp_path / "eval"
    assert await main(["evaluate", "--config", config,
                       "--input", str(windows_file),
                       "--checkpoint", str(train_out / "checkpoint.bin"),
                       "--out", str(eval_out)]) == EXIT_OK
    report = json.loads((eval_out / "report.json").read_text())
    assert report["macro_fbeta"] >= 0.85
