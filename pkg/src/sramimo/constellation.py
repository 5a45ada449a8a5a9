"""Gray-mapped QPSK alphabet and the nearest-point slicer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class Constellation:
    name: str
    points: np.ndarray  # unit average power, index order defines slicer ties
    bits: np.ndarray  # (len(points), bits_per_symbol) Gray labels

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return self.bits.shape[1]

    def nearest_index(self, x: np.ndarray) -> np.ndarray:
        """Index of the closest point; ties go to the lowest index."""
        x = np.asarray(x)
        d = np.abs(x[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def slice(self, x: np.ndarray) -> np.ndarray:
        return self.points[self.nearest_index(x)]


# quadrant order I, II, III, IV; neighbours differ in exactly one bit
QPSK = Constellation(
    "qpsk",
    np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2),
    np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.int8),
)

_REGISTRY = {"qpsk": QPSK}


def get_constellation(name: str | Constellation) -> Constellation:
    if isinstance(name, Constellation):
        return name
    try:
        return _REGISTRY[str(name).lower()]
    except KeyError:
        raise InvalidParameterError(f"unsupported constellation {name!r}") from None
