from dataclasses import dataclass
from enum import Enum


class ValidationExceptionCode(Enum):
    # ingestion
    MissingColumn = 101
    NonMonotonicTime = 102
    NonUniformSampling = 103
    UnparsableValue = 104
    MixedSessionIds = 105
    InvalidSample = 106
    InfeasibleEvent = 107
    # labelling / features
    InvalidConfig = 201
    EmptySignal = 202
    LeakageGuard = 203
    EmptyTrainingPool = 204
    ChannelMismatch = 205
    # windowing / splits
    SessionTooShort = 301
    ClassTooSmall = 302
    UnknownGroupId = 303
    TooFewGroups = 304
    InvalidSplit = 305
    # imbalance
    NotTrainingSplit = 401
    DegenerateClass = 402
    EmptyClass = 403
    # network / training
    BatchTooSmall = 501
    LabelOutOfRange = 502
    EmptySplit = 503
    # evaluation
    LengthMismatch = 601
    EmptyTestSet = 602
    InvalidBenchmark = 603
    # cli
    UnknownSubcommand = 701
    ConfigError = 702
    MissingInput = 703


@dataclass
class ValidationException(Exception):
    exception_code: ValidationExceptionCode
    message: str

    def __str__(self) -> str:
        return f"{self.exception_code.name}: {self.message}"


class ExecutionExceptionCode(Enum):
    ShapeMismatch = -1
    StaleCache = -2
    DivergedLoss = -3
    CorruptContainer = -4


@dataclass
class ExecutionException(Exception):
    exception_code: ExecutionExceptionCode
    message: str

    def __str__(self) -> str:
        return f"{self.exception_code.name}: {self.message}"
