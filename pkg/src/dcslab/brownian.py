"""Brownian paths and bridges on dyadic grids.

Paths are built by the Levy midpoint construction.  The Gaussian variables used
at refinement level ``j`` come from their own stream keyed by ``(seed, batch, j)``,
so a path sampled at depth ``k + 1`` contains the depth ``k`` path bit-exactly at
its even grid indices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ResolutionError

MAX_DEPTH = 24
DEFAULT_DEPTH = 14

_PATH_STREAM = 0
_BRIDGE_STREAM = 1
_REFINE_STREAM = 2


@dataclass(frozen=True)
class DyadicInterval:
    """The dyadic interval ((position - 1) / 2**level, position / 2**level)."""

    level: int
    position: int

    def __post_init__(self):
        if self.level < 0 or not 1 <= self.position <= 2**self.level:
            raise ValueError(f"invalid dyadic interval level={self.level} position={self.position}")

    @property
    def left(self) -> float:
        return (self.position - 1) / 2**self.level

    @property
    def right(self) -> float:
        return self.position / 2**self.level

    @property
    def width(self) -> float:
        return 2.0**-self.level

    def grid_slice(self, depth: int) -> slice:
        """Grid indices of the half-open cell (left, right] on a depth-``depth`` grid."""
        if self.level > depth:
            raise ResolutionError(
                f"level-{self.level} interval is not representable on a depth-{depth} grid"
            )
        span = 2 ** (depth - self.level)
        return slice((self.position - 1) * span + 1, self.position * span + 1)

    def contains(self, x: float) -> bool:
        return self.left < x <= self.right


@dataclass(frozen=True, eq=False)
class BrownianPath:
    depth: int
    values: np.ndarray
    origin: float = 0.0

    def __post_init__(self):
        if self.values.shape != (2**self.depth + 1,):
            raise ValueError(f"depth {self.depth} needs {2**self.depth + 1} values, got {self.values.shape}")
        if self.values[0] != self.origin:
            raise ValueError("values[0] must equal origin")
        self.values.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return np.arange(2**self.depth + 1) / 2**self.depth

    @property
    def step(self) -> float:
        return 2.0**-self.depth

    def coarsen(self, depth: int) -> "BrownianPath":
        if not 0 <= depth <= self.depth:
            raise ResolutionError(f"cannot coarsen depth {self.depth} to {depth}")
        return BrownianPath(depth, self.values[:: 2 ** (self.depth - depth)].copy(), self.origin)

    def value_at(self, t: float) -> float:
        i = t * 2**self.depth
        if i != int(i) or not 0 <= i <= 2**self.depth:
            raise ResolutionError(f"t={t} is not a grid point at depth {self.depth}")
        return float(self.values[int(i)])


def _check_depth(depth: int) -> None:
    if not 0 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [0, {MAX_DEPTH}], got {depth}")


def _stream(seed, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _levy_refine(ends: np.ndarray, depth: int, seed, kind: int, batch: int) -> np.ndarray:
    """Fill midpoints level by level between the two endpoints given per row."""
    n = ends.shape[0]
    size = 2**depth
    values = np.empty((n, size + 1))
    values[:, 0] = ends[:, 0]
    values[:, size] = ends[:, 1]
    for level in range(1, depth + 1):
        # midpoint of a bridge over a cell of width 2**-(level-1) has variance 2**-(level+1)
        sd = math.sqrt(2.0 ** -(level + 1))
        half = 2 ** (depth - level)
        z = _stream(seed, kind, batch, level).standard_normal((n, 2 ** (level - 1)))
        z *= sd
        mid = values[:, half::2 * half]
        np.add(values[:, 0:-1:2 * half], values[:, 2 * half :: 2 * half], out=mid)
        mid *= 0.5
        mid += z
    return values


def sample_paths(depth: int, n: int, seed, batch: int = 0, origin: float = 0.0) -> np.ndarray:
    """``n`` independent Brownian paths on [0, 1] as an ``(n, 2**depth + 1)`` array."""
    _check_depth(depth)
    ends = np.empty((n, 2))
    ends[:, 0] = origin
    ends[:, 1] = origin + _stream(seed, _PATH_STREAM, batch, 0).standard_normal(n)
    return _levy_refine(ends, depth, seed, _PATH_STREAM, batch)


def sample_bridges(a: float, b: float, depth: int, n: int, seed, batch: int = 0) -> np.ndarray:
    """``n`` Brownian bridges from ``a`` at t=0 to ``b`` at t=1."""
    _check_depth(depth)
    ends = np.empty((n, 2))
    ends[:, 0] = a
    ends[:, 1] = b
    return _levy_refine(ends, depth, seed, _BRIDGE_STREAM, batch)


def sample_path(depth: int, seed, origin: float = 0.0) -> BrownianPath:
    return BrownianPath(depth, sample_paths(depth, 1, seed, origin=origin)[0], origin)


def sample_bridge(a: float, b: float, depth: int, seed) -> BrownianPath:
    return BrownianPath(depth, sample_bridges(a, b, depth, 1, seed)[0], a)


def iter_batches(depth: int, n: int, seed, batch_size: int = 1000, bridge=None) -> Iterator[np.ndarray]:
    """Yield ``n`` paths (or bridges when ``bridge=(a, b)``) in deterministic batches."""
    for batch, start in enumerate(range(0, n, batch_size)):
        size = min(batch_size, n - start)
        if bridge is None:
            yield sample_paths(depth, size, seed, batch=batch)
        else:
            yield sample_bridges(bridge[0], bridge[1], depth, size, seed, batch=batch)


def argmin_on(path: BrownianPath, interval: DyadicInterval) -> tuple[float, float]:
    """Grid argmin and minimum of ``path`` over the cell (left, right].

    Only grid points strictly right of ``interval.left`` count, so sibling cells
    partition their parent and no grid point belongs to two cells.  Ties go to
    the smallest grid index.
    """
    sl = interval.grid_slice(path.depth)
    seg = path.values[sl]
    i = int(np.argmin(seg))
    return (sl.start + i) / 2**path.depth, float(seg[i])


def _argmin_within_cell(alpha: np.ndarray, beta: np.ndarray, u: np.ndarray, nodes: int = 257) -> np.ndarray:
    """Position in (0, 1) of the minimum of a unit-time bridge given its depth below each end.

    ``alpha``/``beta`` are the distances from the minimum up to the left/right
    endpoint, already scaled by ``1/sqrt(cell width)``.  The position has
    density proportional to
    ``s^{-3/2} (1-s)^{-3/2} exp(-alpha^2/(2s) - beta^2/(2(1-s)))``; it is
    sampled by inverting a tabulated CDF on nodes clustered at both ends.
    """
    g = np.linspace(0.0, 1.0, nodes)[1:-1]
    s = 0.5 * (1.0 - np.cos(np.pi * g))
    jac = 0.5 * np.pi * np.sin(np.pi * g)
    alpha = np.maximum(alpha, 1e-12)[:, None]
    beta = np.maximum(beta, 1e-12)[:, None]
    logd = -1.5 * np.log(s * (1 - s)) - alpha**2 / (2 * s) - beta**2 / (2 * (1 - s)) + np.log(jac)
    dens = np.exp(logd - logd.max(axis=1, keepdims=True))
    cum = np.cumsum(dens, axis=1)
    cum /= cum[:, -1:]
    k = (cum < u[:, None]).sum(axis=1)
    k = np.minimum(k, s.size - 1)
    lo_c = np.where(k > 0, cum[np.arange(k.size), np.maximum(k - 1, 0)], 0.0)
    hi_c = cum[np.arange(k.size), k]
    lo_s = np.where(k > 0, s[np.maximum(k - 1, 0)], 0.0)
    w = np.clip((u - lo_c) / np.maximum(hi_c - lo_c, 1e-300), 0.0, 1.0)
    return lo_s + w * (s[k] - lo_s)


def refined_minimum(values: np.ndarray, seed, cutoff: float = 6.0) -> tuple[np.ndarray, np.ndarray]:
    """Continuum argmin and minimum of paths known on a uniform grid over [0, 1].

    Between neighbouring grid points the path is a Brownian bridge, whose
    minimum has the closed-form inverse CDF
    ``(x0 + x1 - sqrt((x1 - x0)**2 - 2 dt log U)) / 2``.  Only cells whose
    lower endpoint lies within ``cutoff * sqrt(dt)`` of the grid minimum are
    sampled; any other cell dips below the grid minimum with probability at
    most ``exp(-2 cutoff**2)``.  The argmin inside the winning cell is then
    drawn from its conditional law given the minimum.
    """
    values = np.atleast_2d(values)
    ncell = values.shape[1] - 1
    dt = 1.0 / ncell
    thr = values.min(axis=1) + cutoff * math.sqrt(dt)
    prow, pidx = np.nonzero(values < thr[:, None])
    # a cell is a candidate when either endpoint is below the threshold
    rows = np.concatenate([prow, prow])
    cols = np.concatenate([pidx - 1, pidx])
    keep = (cols >= 0) & (cols < ncell)
    key = np.unique(rows[keep] * ncell + cols[keep])
    rows, cols = np.divmod(key, ncell)
    x0 = values[rows, cols]
    x1 = values[rows, cols + 1]
    rng = _stream(seed, _REFINE_STREAM)
    u = 1.0 - rng.random(rows.size)
    m = 0.5 * (x0 + x1 - np.sqrt((x1 - x0) ** 2 - 2.0 * dt * np.log(u)))
    order = np.lexsort((m, rows))
    first = np.ones(order.size, dtype=bool)
    first[1:] = rows[order][1:] != rows[order][:-1]
    best = order[first]
    scale = 1.0 / math.sqrt(dt)
    frac = _argmin_within_cell((x0[best] - m[best]) * scale, (x1[best] - m[best]) * scale, rng.random(best.size))
    return (cols[best] + frac) * dt, m[best]


def write_path_csv(path: BrownianPath, file) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(path.times, path.values):
            w.writerow([repr(float(t)), repr(float(v))])
