"""Poisson-strip coupling by exponential racing.

A Poisson set of intensity one on ``(0, 1) x (0, H)`` is swept from below by
the graph ``S_n(y) = sum_{k<=n} T_k g_k(Y_1..Y_{k-1}, y)``.  At step ``n`` the
first unconsumed point hit by the rising curve ``S_{n-1} + t g_n`` is
consumed; its abscissa is ``Y_n`` and the hitting time is ``T_n``.  Then
``(Y_n)`` has the law prescribed by the oracle, ``(T_n)`` are i.i.d. Exp(1)
independent of it, and once the graph is above a level ``L`` everywhere the
consumed points below ``L`` are exactly the strip's points below ``L``.

The strip is truncated at ``H``; statements are only made below the achieved
level ``L_star = min(min_y S_n(y), H)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, ConsistencyError, DomainError

log = logging.getLogger(__name__)

ON_GRAPH_TOL = 1e-9
NORMALIZATION_TOL = 1e-4

_GL_X, _GL_W = leggauss(16)


def _composite_nodes(panels: int = 32) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


_QX, _QW = _composite_nodes()


# --- oracles -----------------------------------------------------------------


class DensityOracle:
    """Conditional densities ``g_n(y_1, ..., y_{n-1}, x)`` on (0, 1).

    Subclasses implement :meth:`density`; ``history`` holds ``y_1..y_{n-1}``.
    """

    name = "oracle"

    def density(self, history: Sequence[float], x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, history, x):
        return self.density(history, np.asarray(x, float))

    def normalization(self, history: Sequence[float]) -> float:
        """Integral of ``g_n(history, .)`` over (0, 1) by composite Gauss-Legendre."""
        return float(np.dot(_QW, self.density(history, _QX)))

    def params(self) -> dict:
        return {}


class IIDOracle(DensityOracle):
    """History-independent oracle: every ``g_n`` equals one density ``pdf``."""

    def __init__(self, pdf, name="iid", params=None):
        self.pdf = pdf
        self.name = name
        self._params = params or {}

    def density(self, history, x):
        return np.broadcast_to(np.asarray(self.pdf(x), float), x.shape)

    def params(self):
        return dict(self._params)


def uniform_oracle() -> IIDOracle:
    return IIDOracle(lambda x: np.ones_like(x), name="iid-uniform")


def linear_oracle(slope: float = 1.0) -> IIDOracle:
    """i.i.d. with density ``1 + slope (x - 1/2)``; positive on [0, 1] for |slope| < 2."""
    if not abs(slope) < 2:
        raise ConfigError(f"linear oracle needs |slope| < 2, got {slope}")
    return IIDOracle(lambda x: 1.0 + slope * (x - 0.5), name="iid-linear", params={"slope": slope})


class CosineMarkovOracle(DensityOracle):
    """``g_1 = 1`` and ``g_n(x) = 1 + c cos(2 pi k (x - y_{n-1}))`` for ``n >= 2``."""

    name = "markov-cosine"

    def __init__(self, amplitude: float = 0.5, frequency: int = 1):
        if not 0 <= amplitude < 1:
            raise ConfigError(f"amplitude must be in [0, 1), got {amplitude}")
        self.amplitude = amplitude
        self.frequency = int(frequency)

    def density(self, history, x):
        if not history:
            return np.ones_like(x)
        return 1.0 + self.amplitude * np.cos(2 * np.pi * self.frequency * (x - history[-1]))

    def params(self):
        return {"amplitude": self.amplitude, "frequency": self.frequency}


class ScaledOracle(DensityOracle):
    """Multiplies another oracle by a constant; used to exercise normalization checks."""

    def __init__(self, base: DensityOracle, factor: float):
        self.base = base
        self.factor = factor
        self.name = f"{base.name}*{factor:g}"

    def density(self, history, x):
        return self.factor * self.base.density(history, x)

    def params(self):
        return {**self.base.params(), "scale": self.factor}


# --- strip and trace -----------------------------------------------------------


@dataclass(eq=False)
class PoissonStrip:
    height: float
    ys: np.ndarray
    hs: np.ndarray
    seed: object = None
    consumed: np.ndarray = None

    def __post_init__(self):
        if self.consumed is None:
            self.consumed = np.zeros(self.ys.size, dtype=bool)

    def __len__(self):
        return self.ys.size


def sample_strip(H: float, seed) -> PoissonStrip:
    """Poisson points of unit intensity on (0, 1) x (0, H)."""
    if not H > 0:
        raise DomainError(f"strip height must be positive, got {H}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    count = rng.poisson(H)
    ys = rng.random(count)
    hs = H * rng.random(count)
    return PoissonStrip(float(H), ys, hs, seed)


@dataclass
class Step:
    n: int
    T: float
    Y: float
    point_id: int
    h: float
    level_before: float
    g: float

    @property
    def residual(self) -> float:
        return self.h - self.level_before - self.T * self.g


@dataclass(eq=False)
class CouplingTrace:
    oracle: DensityOracle
    strip: PoissonStrip
    grid: np.ndarray
    steps: list = field(default_factory=list)
    level_points: np.ndarray = None
    level_grid: np.ndarray = None
    L_star: float = 0.0
    finished: bool = False

    def __post_init__(self):
        if self.level_points is None:
            self.level_points = np.zeros(len(self.strip))
        if self.level_grid is None:
            self.level_grid = np.zeros(self.grid.size)

    @property
    def ys(self) -> np.ndarray:
        return np.array([s.Y for s in self.steps])

    @property
    def ts(self) -> np.ndarray:
        return np.array([s.T for s in self.steps])

    @property
    def point_ids(self) -> list[int]:
        return [s.point_id for s in self.steps]

    def graph(self, y, n: int | None = None) -> np.ndarray:
        """``S_n(y)``; defaults to the current number of steps."""
        y = np.asarray(y, float)
        n = len(self.steps) if n is None else n
        total = np.zeros_like(y)
        ys = [s.Y for s in self.steps]
        for k, s in enumerate(self.steps[:n]):
            total = total + s.T * self.oracle(ys[:k], y)
        return total

    def unconsumed(self) -> list[tuple[float, float]]:
        free = ~self.strip.consumed
        return list(zip(self.strip.ys[free].tolist(), self.strip.hs[free].tolist()))

    def consumed_below(self, level: float) -> np.ndarray:
        """Abscissas of consumed points lower than ``level``."""
        ids = np.array(self.point_ids, dtype=int)
        if ids.size == 0:
            return np.empty(0)
        ids = ids[self.strip.hs[ids] < level]
        return self.strip.ys[ids]

    def max_residual(self) -> float:
        return max((abs(s.residual) / max(1.0, s.h) for s in self.steps), default=0.0)

    def to_dict(self) -> dict:
        seed = self.strip.seed
        return {
            "seed": list(seed) if isinstance(seed, tuple) else seed,
            "oracle": self.oracle.name,
            "oracle_params": self.oracle.params(),
            "H": self.strip.height,
            "n_steps": len(self.steps),
            "L_star": self.L_star,
            "steps": [{"n": s.n, "T": s.T, "Y": s.Y, "point_id": s.point_id} for s in self.steps],
            "unconsumed": [{"y": y, "h": h} for y, h in self.unconsumed()],
        }

    def write_json(self, file) -> None:
        with open(file, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def write_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "T", "Y", "point_id", "h", "level_before", "g"])
            for s in self.steps:
                w.writerow([s.n, repr(s.T), repr(s.Y), s.point_id, repr(s.h), repr(s.level_before), repr(s.g)])


def new_trace(strip: PoissonStrip, oracle: DensityOracle, grid_size: int = 1024) -> CouplingTrace:
    grid = (np.arange(grid_size) + 0.5) / grid_size
    return CouplingTrace(oracle, strip, grid)


def extract_next(strip: PoissonStrip, oracle: DensityOracle, trace: CouplingTrace):
    """One racing step; returns ``(T_n, Y_n)`` or ``None`` when no candidate remains."""
    if trace.finished:
        raise ConsistencyError("trace is already finished")
    history = [s.Y for s in trace.steps]
    free = ~strip.consumed
    if not free.any():
        return None
    g = np.asarray(oracle(history, strip.ys), float)
    excess = strip.hs - trace.level_points
    slack = -1e-12 * np.maximum(1.0, strip.hs)
    bad = free & (excess < slack)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ConsistencyError(f"unconsumed point {i} lies below the graph (excess {excess[i]:.3e})")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(free & (g > 0), np.maximum(excess, 0.0) / g, np.inf)
    i = int(np.argmin(t))
    T = float(t[i])
    if not math.isfinite(T):
        return None
    if np.count_nonzero(t == T) > 1:
        log.warning("racing tie at step %d between points %s; taking %d",
                    len(trace.steps) + 1, np.flatnonzero(t == T).tolist(), i)
    step = Step(len(trace.steps) + 1, T, float(strip.ys[i]), i, float(strip.hs[i]), float(trace.level_points[i]), float(g[i]))
    if abs(step.residual) > ON_GRAPH_TOL * max(1.0, step.h):
        raise ConsistencyError(f"consumed point {i} is off the graph by {step.residual:.3e}")
    strip.consumed[i] = True
    trace.level_points += T * g
    trace.level_grid += T * np.asarray(oracle(history, trace.grid), float)
    trace.steps.append(step)
    return T, step.Y


def finish(trace: CouplingTrace) -> CouplingTrace:
    """Record the achieved level and check that everything below it was consumed."""
    level = float(trace.level_grid.min())
    if len(trace.strip):
        level = min(level, float(trace.level_points.min()))
    trace.L_star = min(level, trace.strip.height)
    missed = ~trace.strip.consumed & (trace.strip.hs < trace.L_star)
    if missed.any():
        raise ConsistencyError(f"{int(missed.sum())} points below L*={trace.L_star} were never consumed")
    trace.finished = True
    return trace


def run_coupling(oracle: DensityOracle, H: float, n_max: int | None = None, seed=0,
                 grid_size: int = 1024, normalization_tol: float = NORMALIZATION_TOL) -> CouplingTrace:
    """Run the racing construction until ``n_max`` steps or exhaustion."""
    if n_max is None:
        n_max = int(math.ceil(10 * H))
    if n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {n_max}")
    strip = sample_strip(H, seed)
    trace = new_trace(strip, oracle, grid_size)
    for _ in range(n_max):
        if normalization_tol is not None:
            mass = oracle.normalization([s.Y for s in trace.steps])
            if abs(mass - 1.0) > normalization_tol:
                raise ConfigError(
                    f"oracle {oracle.name} integrates to {mass:.6g} at step {len(trace.steps) + 1}"
                )
        if extract_next(strip, oracle, trace) is None:
            break
    return finish(trace)


# --- divergence diagnostics ----------------------------------------------------


@dataclass
class DivergenceReport:
    eps: np.ndarray
    profile: np.ndarray
    sup_profile: np.ndarray
    mean_partial_sums: np.ndarray
    min_partial_sums: np.ndarray
    positive_mass: bool
    profile_vanishes: bool
    growth_ratio: float
    divergent: bool

    def to_dict(self) -> dict:
        return {
            "eps": self.eps.tolist(),
            "sup_profile": self.sup_profile.tolist(),
            "mean_partial_sums": self.mean_partial_sums.tolist(),
            "positive_mass": self.positive_mass,
            "profile_vanishes": self.profile_vanishes,
            "growth_ratio": self.growth_ratio,
            "divergent": self.divergent,
        }


def divergence_diagnostics(samples, eps, vanish_level: float = 0.05, growth_floor: float = 0.5) -> DivergenceReport:
    """Empirical checks of ``lim_eps sup_n P(0 < Y_n < eps) = 0`` and of ``sum Y_n = inf``.

    ``samples`` is ``(replicas, n)``.  The profile "vanishes" when its value at
    the smallest ``eps`` is at most ``vanish_level``.  Partial sums count as
    growing without saturation when the mean term over the second half of the
    columns is at least ``growth_floor`` times that over the first half.
    """
    y = np.asarray(samples, float)
    if y.ndim != 2 or y.shape[1] == 0:
        raise ValueError("samples must be a nonempty (replicas, n) matrix")
    if np.any(y < 0):
        raise DomainError("samples must be nonnegative")
    eps = np.sort(np.asarray(eps, float))
    profile = ((y[:, :, None] > 0) & (y[:, :, None] < eps[None, None, :])).mean(axis=0)
    sup = profile.max(axis=0)
    partial = np.cumsum(y, axis=1)
    half = y.shape[1] // 2
    first = y[:, :half].mean() if half else 0.0
    second = y[:, half:].mean()
    ratio = float(second / first) if first > 0 else (math.inf if second > 0 else 0.0)
    positive = bool(np.any(y > 0))
    return DivergenceReport(
        eps=eps,
        profile=profile,
        sup_profile=sup,
        mean_partial_sums=partial.mean(axis=0),
        min_partial_sums=partial.min(axis=0),
        positive_mass=positive,
        profile_vanishes=bool(sup[0] <= vanish_level),
        growth_ratio=ratio,
        divergent=positive and ratio >= growth_floor,
    )


def conditional_tail_bound(y, z, eps) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``P(0 < Y < eps) <= 2 P(0 < Z < 2 eps)`` for paired samples."""
    y = np.asarray(y, float)
    z = np.asarray(z, float)
    eps = np.asarray(eps, float)
    lhs = ((y[:, None] > 0) & (y[:, None] < eps[None, :])).mean(axis=0)
    rhs = 2 * ((z[:, None] > 0) & (z[:, None] < 2 * eps[None, :])).mean(axis=0)
    return lhs, rhs


# --- approximate Brownian oracle -----------------------------------------------------


_MAP_X, _MAP_W = leggauss(200)
_MAP_S = 0.5 * (_MAP_X + 1.0)


class BrownianProxyOracle(DensityOracle):
    """Nested Monte Carlo stand-in for the Brownian minimizer densities.

    ``g_1`` is the arcsine density.  For ``n >= 2`` the history decides which
    half of ``I_n`` is active (the half free of earlier minimizers) and the
    density is the average of ``g_n`` over ``inner`` reference paths whose
    active half agrees.  The conditional density of the true construction is
    not available in closed form, so runs with this oracle are demonstrations.
    """

    name = "brownian-proxy"

    def __init__(self, depth: int = 10, inner: int = 400, seed=0, variant: str = "joint", guard: int = 3):
        from .brownian import sample_paths

        self.depth = int(depth)
        self.inner = int(inner)
        self.seed = seed
        self.variant = variant
        self.guard = int(guard)
        self._values = sample_paths(self.depth, self.inner, seed)
        self._cache: dict = {}

    def params(self):
        return {"depth": self.depth, "inner": self.inner, "seed": self.seed, "variant": self.variant}

    def _boundary(self, history):
        """Active half and the boundary data of the matching reference paths."""
        from .brownian import DyadicInterval
        from .enumeration import interval_of_index
        from .errors import ResolutionError

        n = len(history) + 1
        parent = interval_of_index(n)
        if parent.level + 1 > self.depth - self.guard:
            raise ResolutionError(f"step {n} needs reference paths deeper than {self.depth}")
        left = DyadicInterval(parent.level + 1, 2 * parent.position - 1)
        right = DyadicInterval(parent.level + 1, 2 * parent.position)
        active = left if any(right.left < y <= right.right for y in history) else right
        key = (active.level, active.position)
        if key not in self._cache:
            other = right if active is left else left
            v = self._values
            m_act = v[:, active.grid_slice(self.depth)].min(axis=1)
            m_oth = v[:, other.grid_slice(self.depth)].min(axis=1)
            scale = 2**self.depth
            a = v[:, int(round(active.left * scale))] - m_oth
            b = v[:, int(round(active.right * scale))] - m_oth
            keep = (m_act > m_oth) & (a > 0) & (b > 0)
            r = math.sqrt(active.width)
            self._cache[key] = (a[keep] / r, b[keep] / r)
        return active, self._cache[key]

    def density(self, history, x):
        x = np.asarray(x, float)
        if not history:
            with np.errstate(divide="ignore"):
                return np.where((x > 0) & (x < 1), 1.0 / (np.pi * np.sqrt(x * (1 - x))), 0.0)
        from .densities import phi_array

        half, (a, b) = self._boundary(history)
        w = half.width
        out = np.zeros_like(x)
        inside = (x > half.left) & (x < half.right)
        if not inside.any():
            return out
        t = (x[inside] - half.left) / w
        if a.size == 0:
            out[inside] = 1.0 / w
        else:
            out[inside] = phi_array(a[:, None], b[:, None], t[None, :], self.variant).mean(axis=0) / w
        return out

    def normalization(self, history) -> float:
        """Gauss-Legendre after ``t = (1 - cos(pi s)) / 2``, which absorbs the endpoint singularities."""
        if history:
            half, _ = self._boundary(history)
            lo, w = half.left, half.width
        else:
            lo, w = 0.0, 1.0
        t = 0.5 * (1 - np.cos(np.pi * _MAP_S))
        jac = 0.5 * np.pi * np.sin(np.pi * _MAP_S) * 0.5 * _MAP_W
        return float(np.dot(jac * w, self.density(history, lo + w * t)))
