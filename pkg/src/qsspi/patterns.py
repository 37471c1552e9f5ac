"""Sylvester-Hadamard matrices and the binary shot sequences displayed on the modulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_HADAMARD_EXPONENT = 12
MAX_PATTERN_EXPONENT = 6

PLUS = "+"
MINUS = "-"


class SizeLimitError(ValueError):
    """Requested Hadamard order exceeds the configured memory cap."""


@dataclass(frozen=True)
class HadamardMatrix:
    order: int
    entries: np.ndarray

    def __post_init__(self):
        if self.entries.shape != (self.order, self.order):
            raise ValueError(f"entries shape {self.entries.shape} does not match order {self.order}")
        self.entries.setflags(write=False)


@lru_cache(maxsize=8)
def _sylvester(k: int) -> np.ndarray:
    h = np.ones((1, 1), dtype=np.int64)
    h2 = np.array([[1, 1], [1, -1]], dtype=np.int64)
    for _ in range(k):
        h = np.kron(h, h2)
    h.setflags(write=False)
    return h


def build_hadamard(k: int, max_exponent: int = MAX_HADAMARD_EXPONENT) -> HadamardMatrix:
    """Return the Sylvester Hadamard matrix of order ``2**k``.

    Built by repeated Kronecker products with ``[[1, 1], [1, -1]]``, so rows
    come out in natural (not sequency) order.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > max_exponent:
        raise SizeLimitError(f"Hadamard exponent {k} exceeds cap {max_exponent}")
    return HadamardMatrix(order=2**k, entries=_sylvester(k))


@dataclass(frozen=True)
class PatternSet:
    """All ``4**n`` Hadamard patterns at ``2**n x 2**n`` and their ``2 * 4**n`` shots.

    Shot ``2*p`` displays the +1 entries of pattern ``p`` as white, shot
    ``2*p + 1`` the -1 entries.
    """

    n: int
    hadamard: HadamardMatrix = field(repr=False)

    @property
    def side(self) -> int:
        return 2**self.n

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.side, self.side)

    @property
    def num_patterns(self) -> int:
        return self.hadamard.order

    @property
    def num_shots(self) -> int:
        return 2 * self.num_patterns

    @property
    def patterns(self) -> np.ndarray:
        """Array of shape (num_patterns, side, side) with entries in {+1, -1}."""
        return self.hadamard.entries.reshape(self.num_patterns, self.side, self.side)

    @property
    def shots(self) -> np.ndarray:
        """Array of shape (num_shots, side, side) with entries in {0, 1}, (+, -) interleaved."""
        plus = (self.patterns > 0).astype(np.uint8)
        out = np.empty((self.num_shots, self.side, self.side), dtype=np.uint8)
        out[0::2] = plus
        out[1::2] = 1 - plus
        return out

    def shot(self, shot_index: int) -> np.ndarray:
        pattern_index, sign = self.pattern_index_of_shot(shot_index)
        row = self.hadamard.entries[pattern_index].reshape(self.side, self.side)
        on = row > 0 if sign == PLUS else row < 0
        return on.astype(np.uint8)

    def pattern_index_of_shot(self, shot_index: int) -> tuple[int, str]:
        if not 0 <= shot_index < self.num_shots:
            raise IndexError(f"shot {shot_index} out of range [0, {self.num_shots})")
        return shot_index // 2, PLUS if shot_index % 2 == 0 else MINUS

    def shot_index_of(self, pattern_index: int, sign: str) -> int:
        if sign not in (PLUS, MINUS):
            raise ValueError(f"sign must be '+' or '-', got {sign!r}")
        if not 0 <= pattern_index < self.num_patterns:
            raise IndexError(f"pattern {pattern_index} out of range")
        return 2 * pattern_index + (0 if sign == PLUS else 1)


def build_pattern_set(n: int, max_n: int = MAX_PATTERN_EXPONENT) -> PatternSet:
    """Reshape each row of ``H_{4**n}`` (row-major) into a ``2**n x 2**n`` pattern."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n > max_n:
        raise SizeLimitError(f"pattern exponent {n} exceeds cap {max_n}")
    return PatternSet(n=n, hadamard=build_hadamard(2 * n, max_exponent=2 * max_n))


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along axis 0, natural order.

    Equivalent to ``H @ x`` for the Sylvester ``H``; ``H`` is symmetric so this
    is also ``H.T @ x``.
    """
    a = np.array(x, dtype=np.float64, copy=True)
    length = a.shape[0]
    if length & (length - 1):
        raise ValueError("length must be a power of two")
    h = 1
    while h < length:
        a = a.reshape((length // (2 * h), 2, h) + a.shape[1:])
        lo = a[:, 0].copy()
        hi = a[:, 1]
        a[:, 0] += hi
        a[:, 1] = lo - hi
        a = a.reshape((length,) + a.shape[3:])
        h *= 2
    return a
