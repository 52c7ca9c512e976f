import logging
from asyncio.events import AbstractEventLoop
from pathlib import Path
from signal import Signals

# credits : https://stackoverflow.com/a/68732870


class SignalHaltError(SystemExit):
    """Shell-style exit status ``128 + signal`` for an interrupted run."""

    def __init__(self, signal_enum: Signals, out: Path | None = None):
        self.signal_enum = signal_enum
        self.out = out
        logging.warning(repr(self))
        super().__init__(self.exit_code)

    @property
    def exit_code(self) -> int:
        return 128 + self.signal_enum.value

    def __repr__(self) -> str:
        where = "the output directory" if self.out is None else str(self.out)
        return f"Interrupted by {self.signal_enum.name}, partial outputs" \
            f" may remain in {where}"


def immediate_exit(
    signal_enum: Signals, loop: AbstractEventLoop, out: Path | None = None
) -> None:
    loop.stop()
    raise SignalHaltError(signal_enum=signal_enum, out=out)
