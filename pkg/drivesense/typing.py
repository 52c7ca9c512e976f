from typing import NewType

import numpy as np
import numpy.typing as npt

SessionId = NewType("SessionId", str)
DriverId = NewType("DriverId", str)
GroupId = NewType("GroupId", str)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]
