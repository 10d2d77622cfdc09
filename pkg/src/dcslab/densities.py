"""Argmin densities of Brownian bridges conditioned to stay above a level.

For a bridge from ``a`` (t=0) to ``b`` (t=1) the joint density of the argmin
``T`` and the minimum ``Y`` is

    sqrt(2/pi) (a-y)(b-y) / (t - t^2)^{3/2}
        * exp((a-b)^2/2 - (a-y)^2/(2t) - (b-y)^2/(2(1-t)))

on ``0 < t < 1, y < min(a, b)``.  Completing the square, the exponent equals
``-(y - mu)^2 / (2 s^2)`` with ``mu = a(1-t) + bt`` and ``s^2 = t(1-t)``.

``phi(a, b, t)`` is the density of ``T`` given ``Y > 0``.  Two candidates are
provided:

* ``"joint"``  integrates the joint density above over ``0 < y < min(a, b)``,
  so it carries the ``(t - t^2)^{-3/2}`` factor;
* ``"bare"``   integrates ``(a-y)(b-y) exp(...)`` alone, without that factor.

Both are normalized to integrate to one over ``(0, 1)``.  Monte Carlo
(``dcslab.suites.adjudicate_variants``) decides which one is the conditional law; with
the default seed it selects ``"joint"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .brownian import DyadicInterval
from .errors import DomainError, NumericError

VARIANTS = ("joint", "bare")
DEFAULT_VARIANT = "joint"

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class QuadratureSpec:
    """Adaptive quadrature settings: subdivision limit, rule tag and tolerance."""

    nodes: int = 200
    scheme: str = "adaptive"
    tolerance: float = 1e-6
    inner_tolerance: float = 1e-8


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class BoundaryData:
    """Path values at the ends of ``(u, v)`` measured above the competing minimum."""

    a: float
    b: float
    u: float
    v: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError(
                f"boundary values must exceed the competing minimum (a={self.a}, b={self.b})"
            )
        if not self.v > self.u:
            raise DomainError(f"empty interval ({self.u}, {self.v})")

    @property
    def width(self) -> float:
        return self.v - self.u

    def scaled(self) -> tuple[float, float]:
        r = math.sqrt(self.width)
        return self.a / r, self.b / r


def _check_ab(a, b) -> None:
    if not (np.all(np.asarray(a) > 0) and np.all(np.asarray(b) > 0)):
        raise DomainError("phi needs a > 0 and b > 0")


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


# --- joint density -----------------------------------------------------------


def minmin_joint_density(a: float, b: float, t: float, y: float) -> float:
    """Joint density of (argmin, min) of the bridge from ``a`` to ``b`` on [0, 1]."""
    if not 0 < t < 1:
        raise DomainError(f"t must lie in (0, 1), got {t}")
    if not y < min(a, b):
        raise DomainError(f"y must be below min(a, b) = {min(a, b)}, got {y}")
    s2 = t - t * t
    mu = a * (1 - t) + b * t
    return _SQRT_2_OVER_PI * (a - y) * (b - y) / s2**1.5 * math.exp(-((y - mu) ** 2) / (2 * s2))


def min_cdf(a: float, b: float, y: float) -> float:
    """P(min of the bridge <= y) = exp(-2 (a-y)(b-y)) for y < min(a, b)."""
    if y >= min(a, b):
        return 1.0
    return math.exp(-2.0 * (a - y) * (b - y))


# --- the y-integral ----------------------------------------------------------


def _inner_closed(a, b, t, y0=0.0, y1=None):
    """Integral over y0 < y < y1 of (a-y)(b-y) exp(-(y-mu)^2 / (2 s^2)).

    ``y1`` defaults to min(a, b).  Vectorized; uses Gaussian moments of the
    completed square.
    """
    a, b, t = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(t, float))
    if y1 is None:
        y1 = np.minimum(a, b)
    s = np.sqrt(t * (1 - t))
    mu = a * (1 - t) + b * t
    p = a - mu
    q = b - mu
    z0 = (y0 - mu) / s
    z1 = (y1 - mu) / s
    mass = _SQRT_2PI * (special.ndtr(z1) - special.ndtr(z0))
    e0 = np.exp(-0.5 * z0 * z0)
    e1 = np.exp(-0.5 * z1 * z1)
    m1 = e0 - e1
    # z * exp(-z^2/2) -> 0 at infinite bounds
    m2 = mass + np.where(np.isfinite(z0), z0, 0.0) * e0 - np.where(np.isfinite(z1), z1, 0.0) * e1
    # (a-y)(b-y) = pq - (p+q) s z + s^2 z^2 with y = mu + s z, dy = s dz
    return s * (p * q * mass - (p + q) * s * m1 + s * s * m2)


def joint_cell_probability(a: float, b: float, t0: float, t1: float, y0: float, y1: float) -> float:
    """P(t0 < T < t1, y0 < Y < y1) for the bridge argmin/min pair."""
    y1 = min(y1, a, b)
    if y1 <= y0:
        return 0.0

    def f(t):
        return _SQRT_2_OVER_PI * (t * (1 - t)) ** -1.5 * float(_inner_closed(a, b, t, y0, y1))

    val, _ = integrate.quad(f, t0, t1, epsabs=1e-13, epsrel=1e-10, limit=200)
    return val


def min_quantile(a: float, b: float, p: float) -> float:
    """Inverse of :func:`min_cdf`: the level y with P(min <= y) = p."""
    if p <= 0:
        return -math.inf
    if p >= 1:
        return min(a, b)
    # (a-y)(b-y) = c  with c = -log(p)/2, root below min(a, b)
    c = -math.log(p) / 2
    return 0.5 * (a + b - math.sqrt((a - b) ** 2 + 4 * c))


def _inner_quad(a: float, b: float, t: float, q: QuadratureSpec) -> float:
    s2 = t * (1 - t)
    mu = a * (1 - t) + b * t

    def f(y):
        return (a - y) * (b - y) * math.exp(-((y - mu) ** 2) / (2 * s2))

    val, err = integrate.quad(f, 0.0, min(a, b), epsabs=0.0, epsrel=q.inner_tolerance, limit=q.nodes)
    if err > max(q.inner_tolerance * abs(val), 1e-300):
        raise NumericError(f"inner integral at (a={a}, b={b}, t={t}) missed tolerance", achieved=err)
    return val


def _time_weight(t, variant):
    if variant == "joint":
        return _SQRT_2_OVER_PI * (t * (1 - t)) ** -1.5
    return 1.0


def _unnormalized(a, b, t, variant):
    return _time_weight(t, variant) * _inner_closed(a, b, t)


@lru_cache(maxsize=65536)
def _normalizer_quad(a: float, b: float, variant: str, q: QuadratureSpec) -> float:
    """Integral over t of the unnormalized phi; the inner integral is done by quad as well."""

    def f(t):
        return _time_weight(t, variant) * _inner_quad(a, b, t, q)

    val, err = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=q.tolerance * 1e-2, limit=q.nodes)
    if err > q.tolerance * val:
        raise NumericError(f"normalizing integral for (a={a}, b={b}) missed tolerance", achieved=err)
    return val


@lru_cache(maxsize=65536)
def _normalizer_fast(a: float, b: float, variant: str) -> float:
    if variant == "joint":
        # P(min > 0) for the bridge
        return -math.expm1(-2.0 * a * b)
    val, _ = integrate.quad(lambda t: float(_inner_closed(a, b, t)), 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=400)
    return val


def normalizing_constant(a: float, b: float, variant: str = DEFAULT_VARIANT, q: QuadratureSpec | None = None) -> float:
    """The constant making phi a probability density in t (returned as 1/const)."""
    _check_ab(a, b)
    _check_variant(variant)
    if q is None:
        return _normalizer_fast(float(a), float(b), variant)
    return _normalizer_quad(float(a), float(b), variant, q)


def phi(a: float, b: float, t: float, q: QuadratureSpec = DEFAULT_QUADRATURE, variant: str = DEFAULT_VARIANT) -> float:
    """Density of the bridge argmin at ``t`` given that the bridge stays above 0.

    Evaluated entirely by adaptive quadrature under ``q``.
    """
    _check_ab(a, b)
    _check_variant(variant)
    if not 0 < t < 1:
        raise DomainError(f"t must lie in (0, 1), got {t}")
    z = _normalizer_quad(float(a), float(b), variant, q)
    return _time_weight(t, variant) * _inner_quad(a, b, t, q) / z


def phi_array(a, b, t, variant: str = DEFAULT_VARIANT) -> np.ndarray:
    """Vectorized phi using the closed-form y-integral.

    ``a`` and ``b`` may be arrays; the normalizer is computed per distinct pair.
    """
    _check_variant(variant)
    a, b, t = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(t, float))
    _check_ab(a, b)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    if variant == "joint":
        z = -np.expm1(-2.0 * a * b)
    else:
        pairs, inv = np.unique(np.stack([a.ravel(), b.ravel()]), axis=1, return_inverse=True)
        zs = np.array([_normalizer_fast(float(x), float(y), variant) for x, y in pairs.T])
        z = zs[inv.ravel()].reshape(a.shape)
    return np.where(inside, _unnormalized(a, b, tt, variant) / z, 0.0)


def normalization_defect(a: float, b: float, q: QuadratureSpec = DEFAULT_QUADRATURE, variant: str = DEFAULT_VARIANT) -> float:
    """|integral of phi over (0, 1) - 1| with the closed-form path checked against the quadrature constant."""
    z = _normalizer_quad(float(a), float(b), variant, q)
    val, _ = integrate.quad(
        lambda t: float(_unnormalized(a, b, t, variant)) / z, 0.0, 1.0, epsabs=0.0, epsrel=1e-10, limit=q.nodes
    )
    return abs(val - 1.0)


def phi_cdf(a: float, b: float, variant: str = DEFAULT_VARIANT, nodes: int = 4097) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of phi(a, b, .) tabulated and interpolated linearly.

    Nodes follow t = (1 - cos(pi u)) / 2 so they cluster at both ends, where
    phi may blow up like t^{-1/2} when a != b.
    """
    u = np.linspace(0.0, 1.0, nodes)
    t = 0.5 * (1.0 - np.cos(np.pi * u))
    dens = phi_array(a, b, t, variant) * (0.5 * np.pi * np.sin(np.pi * u))
    cum = integrate.cumulative_simpson(dens, x=u, initial=0.0)
    cum /= cum[-1]
    return lambda x: np.interp(x, t, cum)


# --- the dyadic conditional density ------------------------------------------


def g_n_density(bd: BoundaryData, x: float, q: QuadratureSpec = DEFAULT_QUADRATURE, variant: str = DEFAULT_VARIANT) -> float:
    """Conditional density of ``X_n`` at ``x`` on its active half ``(u, v)``."""
    if not bd.u < x < bd.v:
        raise DomainError(f"x={x} outside ({bd.u}, {bd.v})")
    a, b = bd.scaled()
    return phi(a, b, (x - bd.u) / bd.width, q, variant) / bd.width


def g_n_array(bd: BoundaryData, x, variant: str = DEFAULT_VARIANT) -> np.ndarray:
    """Vectorized ``g_n``; zero outside ``(u, v)``."""
    x = np.asarray(x, float)
    a, b = bd.scaled()
    return phi_array(a, b, (x - bd.u) / bd.width, variant) / bd.width


def psi(a: float, b: float, variant: str = DEFAULT_VARIANT, nodes: int = 2001) -> float:
    """Minimum of phi(a, b, .) over the inner half [1/4, 3/4] (grid scan plus local polish)."""
    _check_ab(a, b)
    grid = np.linspace(0.25, 0.75, nodes)
    vals = phi_array(a, b, grid, variant)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, nodes - 1)]
    if hi > lo:
        from scipy.optimize import minimize_scalar

        res = minimize_scalar(lambda t: float(phi_array(a, b, t, variant)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return float(min(res.fun, vals[i]))
    return float(vals[i])


# --- tail profile ------------------------------------------------------------


class TailProfile:
    """Empirical map eps -> P(0 < g < eps) from a sample of g values."""

    def __init__(self, samples):
        s = np.asarray(samples, float).ravel()
        if s.size == 0:
            raise ValueError("tail profile needs a nonempty sample")
        if np.any(s < 0):
            raise DomainError("density values must be nonnegative")
        self.n = s.size
        self._pos = np.sort(s[s > 0])

    def __call__(self, eps):
        eps = np.asarray(eps, float)
        return np.searchsorted(self._pos, eps, side="left") / self.n

    def threshold(self, level: float) -> float:
        """Largest eps (among sample values) with profile(eps) <= level."""
        k = int(math.floor(level * self.n))
        if k >= self._pos.size:
            return math.inf
        return float(self._pos[k])


def tail_profile(samples) -> TailProfile:
    return TailProfile(samples)


# Envelope of sup over n of P(0 < g_n(x) < eps), maximized over inner-half x,
# on TAIL_EPS.  Calibrated once from 4000 depth-12 paths (seed 1, parent
# levels 0..5, intervals through 0.4 and 0.8) and frozen.
TAIL_EPS = tuple(float(e) for e in np.logspace(-3.0, 0.0, 31))
RECORDED_TAIL_ENVELOPE = (
    0.0112, 0.0118, 0.012, 0.0135, 0.0152, 0.0158, 0.017, 0.0185, 0.0205, 0.0235, 0.026,
    0.0282, 0.031, 0.0348, 0.0385, 0.0428, 0.0488, 0.0545, 0.06, 0.0672, 0.0748, 0.0848,
    0.0975, 0.11, 0.124, 0.1395, 0.1568, 0.1785, 0.2045, 0.234, 0.2688,
)
# largest eps on TAIL_EPS at which the recorded envelope sits safely below 0.05
RECORDED_TAIL_THRESHOLD = 0.02


# --- g_n realized on sampled paths ----------------------------------------------


def g_values_at(values: np.ndarray, n: int, x: float, variant: str = DEFAULT_VARIANT) -> np.ndarray:
    """``g_n(x)`` on each row of ``values`` (paths on a common dyadic grid).

    Zero when ``x`` lies in the inactive half of ``I_n``.  Rows where a
    boundary gap is not positive on the grid (the competing argmin sits on the
    shared endpoint) or the half minima tie are returned as NaN.
    """
    from .enumeration import interval_of_index

    values = np.atleast_2d(values)
    depth = int(round(math.log2(values.shape[1] - 1)))
    parent = interval_of_index(n)
    left = DyadicInterval(parent.level + 1, 2 * parent.position - 1)
    right = DyadicInterval(parent.level + 1, 2 * parent.position)
    min_l = values[:, left.grid_slice(depth)].min(axis=1)
    min_r = values[:, right.grid_slice(depth)].min(axis=1)
    if left.left < x <= left.right:
        half, active, other_min = left, min_l > min_r, min_r
    elif right.left < x < right.right:
        half, active, other_min = right, min_r > min_l, min_l
    else:
        raise DomainError(f"x={x} is not inside I_{n}")
    scale = 2**depth
    bu = values[:, int(round(half.left * scale))]
    bv = values[:, int(round(half.right * scale))]
    a = bu - other_min
    b = bv - other_min
    w = half.width
    out = np.zeros(values.shape[0])
    bad = (min_l == min_r) | (active & ((a <= 0) | (b <= 0)))
    use = active & ~bad
    if use.any():
        r = math.sqrt(w)
        out[use] = phi_array(a[use] / r, b[use] / r, (x - half.left) / w, variant) / w
    out[bad] = np.nan
    return out


def inner_half_points(n: int, fractions=(0.3, 0.5, 0.7)) -> list[float]:
    """Points in the inner halves of both children of ``I_n``."""
    from .enumeration import interval_of_index

    parent = interval_of_index(n)
    out = []
    for pos in (2 * parent.position - 1, 2 * parent.position):
        child = DyadicInterval(parent.level + 1, pos)
        out.extend(child.left + fr * child.width for fr in fractions)
    return out
