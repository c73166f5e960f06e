from typing import Any, Union

import numpy as np

# Just aliases to ease reading.
ArrayLike = Any
Scalar = Union[float, int, np.floating]
