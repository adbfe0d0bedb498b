from typing import Callable, Iterable, Optional, TypedDict, Union

import numpy as np
import numpy.typing as npt

# Numeric aliases
Vector = npt.NDArray[np.floating]
Matrix = npt.NDArray[np.floating]


class MetricsRow(TypedDict):
    """TypedDict for one row of the metrics TSV"""

    mode: str
    m: int
    p: Optional[int]
    n: int
    seed: int
    accuracy: Optional[float]
    whitenessError: Optional[float]
    amariIndex: Optional[float]


# A training source is a sample matrix or a callable producing one matrix per epoch.
EpochSource = Callable[[], Union[Matrix, Iterable[Vector]]]
