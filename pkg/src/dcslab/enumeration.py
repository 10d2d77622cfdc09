"""Measurable enumeration of Brownian local minimizers by dyadic intervals.

Index ``n >= 2`` names the interval ``I_n``: writing ``n = 2**k + i`` with
``1 <= i <= 2**k`` gives ``I_n = ((i - 1) / 2**k, i / 2**k)``.  Its halves are
``I_{2n-1}`` and ``I_{2n}``.  ``X_1`` is the global argmin and, for ``n >= 2``,
``X_n`` is the argmin of whichever half of ``I_n`` has the greater minimum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .brownian import BrownianPath, DyadicInterval
from .errors import DegeneratePathError, DomainError, ResolutionError

GUARD = 2


def interval_of_index(n: int) -> DyadicInterval:
    if n < 2:
        raise DomainError(f"dyadic index must be >= 2, got {n}")
    level = (n - 1).bit_length() - 1
    return DyadicInterval(level, n - 2**level)


def index_of_interval(interval: DyadicInterval) -> int:
    return 2**interval.level + interval.position


def children(n: int) -> tuple[int, int]:
    if n < 2:
        raise DomainError(f"dyadic index must be >= 2, got {n}")
    return 2 * n - 1, 2 * n


def _level_table(values: np.ndarray, depth: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Argmin grid indices and minima of every level-``level`` cell (left, right]."""
    span = 2 ** (depth - level)
    cells = values[1:].reshape(2**level, span)
    local = cells.argmin(axis=1)
    return np.arange(2**level) * span + 1 + local, cells[np.arange(2**level), local]


def _required_level(m: int) -> int:
    return max(0, (m - 1).bit_length())


def _check_resolution(depth: int, level: int, guard: int) -> None:
    if level > depth - guard:
        raise ResolutionError(
            f"level {level} needs path depth >= {level + guard} (guard {guard}), got {depth}"
        )


def level_argmins(path: BrownianPath, k: int, guard: int = GUARD) -> np.ndarray:
    """Argmins of the 2**k level-k cells, in interval order."""
    _check_resolution(path.depth, k, guard)
    idx, _ = _level_table(path.values, path.depth, k)
    return idx / 2**path.depth


@dataclass(frozen=True, eq=False)
class MinimizerEnumeration:
    xs: np.ndarray
    levels: np.ndarray
    positions: np.ndarray
    source: str = ""

    @property
    def m(self) -> int:
        return len(self.xs)

    def write_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "x_n", "interval_level", "interval_position"])
            for n, (x, lv, pos) in enumerate(zip(self.xs, self.levels, self.positions), start=1):
                w.writerow([n, repr(float(x)), int(lv), int(pos)])


def enumerate_minimizers(path: BrownianPath, m: int, guard: int = GUARD, source: str = "") -> MinimizerEnumeration:
    """First ``m`` minimizers ``X_1, ..., X_m`` of ``path``.

    ``levels``/``positions`` record the dyadic cell each ``X_n`` was taken from
    (level 0, position 1 for ``X_1``).  An exact tie between the two half
    minima raises :class:`DegeneratePathError`.
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    top = _required_level(m)
    _check_resolution(path.depth, top, guard)
    scale = 2**path.depth
    tables = [_level_table(path.values, path.depth, k) for k in range(top + 1)]

    xs = np.empty(m)
    levels = np.empty(m, dtype=np.int64)
    positions = np.empty(m, dtype=np.int64)
    idx0, _ = tables[0]
    xs[0], levels[0], positions[0] = idx0[0] / scale, 0, 1
    for n in range(2, m + 1):
        parent = interval_of_index(n)
        child_idx, child_min = tables[parent.level + 1]
        left = 2 * parent.position - 2
        if child_min[left] > child_min[left + 1]:
            pick = left
        elif child_min[left] < child_min[left + 1]:
            pick = left + 1
        else:
            raise DegeneratePathError(f"equal half minima in I_{n} = ({parent.left}, {parent.right})")
        xs[n - 1] = child_idx[pick] / scale
        levels[n - 1] = parent.level + 1
        positions[n - 1] = pick + 1
    return MinimizerEnumeration(xs, levels, positions, source)


def active_half(path: BrownianPath, n: int) -> DyadicInterval:
    """The half of ``I_n`` containing ``X_n`` (the one with the greater minimum)."""
    parent = interval_of_index(n)
    _check_resolution(path.depth, parent.level + 1, 1)
    _, mins = _level_table(path.values, path.depth, parent.level + 1)
    left = 2 * parent.position - 2
    if mins[left] == mins[left + 1]:
        raise DegeneratePathError(f"equal half minima in I_{n}")
    pos = left + 1 if mins[left] > mins[left + 1] else left + 2
    return DyadicInterval(parent.level + 1, pos)
