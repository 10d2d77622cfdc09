"""Joinings concentrated on ``{(x, y) : y - x rational}`` built on a rational grid.

Densities live on a grid of rational step ``1/L``.  The greedy constructor
walks through a list of grid-aligned shifts ``q`` and moves
``min(f_res(x), g_res(x + q))`` from both residuals into the plan entry for
``q``, repeating the list for a number of sweeps.  Every piece of the plan is
carried by a line ``y = x + q`` with ``q`` rational, so the target relation
holds exactly; only the marginals carry grid error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

MASS_TOL = 1e-12


@dataclass(eq=False)
class GridDensity:
    """Piecewise-constant density: ``values[i]`` on ``[origin + i step, origin + (i+1) step)``."""

    origin: Fraction
    step: Fraction
    values: np.ndarray
    declared_mass: float | None = None

    def __post_init__(self):
        self.origin = Fraction(self.origin)
        self.step = Fraction(self.step)
        self.values = np.asarray(self.values, float)
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")
        if self.declared_mass is not None and abs(self.mass - self.declared_mass) > MASS_TOL:
            raise ValueError(f"declared mass {self.declared_mass} != computed {self.mass}")

    @property
    def mass(self) -> float:
        return float(self.step) * float(self.values.sum())

    @property
    def size(self) -> int:
        return self.values.size

    def edges(self) -> np.ndarray:
        return float(self.origin) + float(self.step) * np.arange(self.size + 1)

    def centers(self) -> np.ndarray:
        return float(self.origin) + float(self.step) * (np.arange(self.size) + 0.5)

    def zeros_like(self) -> "GridDensity":
        return GridDensity(self.origin, self.step, np.zeros(self.size))

    def write_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "value"])
            for x, v in zip(self.centers(), self.values):
                w.writerow([repr(float(x)), repr(float(v))])


def uniform_density(L: int, lo: int = 0, hi: int = 1) -> GridDensity:
    """Uniform law on ``(lo, hi)`` on the grid of step ``1/L``."""
    n = (hi - lo) * L
    return GridDensity(Fraction(lo), Fraction(1, L), np.full(n, 1.0 / (hi - lo)))


def exponential_density(L: int, x_max: int = 5, rate: float = 1.0) -> tuple[GridDensity, float]:
    """Exp(rate) truncated to ``(0, x_max)`` and renormalized; cell values are exact cell averages.

    Also returns the truncated tail mass ``exp(-rate x_max)``.
    """
    n = x_max * L
    edges = np.arange(n + 1) / L
    cdf = -np.expm1(-rate * edges)
    cell = np.diff(cdf) / cdf[-1]
    return GridDensity(Fraction(0), Fraction(1, L), cell * L), math.exp(-rate * x_max)


@dataclass(eq=False)
class ShiftPlan:
    f_grid: GridDensity
    g_grid: GridDensity
    entries: list = field(default_factory=list)
    f_res: GridDensity | None = None
    g_res: GridDensity | None = None
    sweep_log: list = field(default_factory=list)
    transfer_log: list = field(default_factory=list)
    stalled: bool = False

    def __post_init__(self):
        if self.f_res is None:
            self.f_res = GridDensity(self.f_grid.origin, self.f_grid.step, self.f_grid.values.copy())
        if self.g_res is None:
            self.g_res = GridDensity(self.g_grid.origin, self.g_grid.step, self.g_grid.values.copy())

    @property
    def residual_mass(self) -> float:
        return self.f_res.mass

    @property
    def step(self) -> Fraction:
        return self.f_grid.step

    def offset(self, q: Fraction) -> int:
        """Index shift from f's grid to g's grid along ``y = x + q``."""
        k = (q + self.f_grid.origin - self.g_grid.origin) / self.step
        if k.denominator != 1:
            raise ValueError(f"shift {q} is not aligned with the grid step {self.step}")
        return int(k)

    def to_dict(self) -> dict:
        entries = []
        for q, m in self.entries:
            nz = np.flatnonzero(m.values)
            rng = [float(m.origin + m.step * int(nz[0])), float(m.origin + m.step * int(nz[-1] + 1))] if nz.size else None
            entries.append({"q": _as_over(q, self.step), "mass": m.mass, "support_range": rng})
        return {
            "step": _as_over(self.step, self.step),
            "entries": entries,
            "residual_mass": self.residual_mass,
            "sweeps": len(self.sweep_log),
            "residual_curve": list(self.sweep_log),
            "stalled": self.stalled,
        }


def _as_over(q: Fraction, step: Fraction) -> str:
    """Write ``q`` as ``p/L`` over the grid denominator ``L``."""
    L = Fraction(1) / step if step.numerator == 1 else Fraction(step.denominator)
    p = q * L
    if p.denominator == 1 and L.denominator == 1:
        return f"{p.numerator}/{L.numerator}"
    return str(q)


def _check_shift(q: Fraction, step: Fraction) -> None:
    if (q / step).denominator != 1:
        raise ValueError(f"shift {q} is not a multiple of the grid step {step}")


def greedy_join(f: GridDensity, g: GridDensity, shifts: Sequence, sweeps: int,
                mass_tol: float = 1e-9) -> ShiftPlan:
    """Greedy shift-by-shift transfer of mass from ``f`` to ``g``."""
    if f.step != g.step:
        raise ValueError("f and g must share the grid step")
    if abs(f.mass - g.mass) > mass_tol:
        raise ValueError(f"total masses differ: {f.mass} vs {g.mass}")
    if ((g.origin - f.origin) / f.step).denominator != 1:
        raise ValueError("grids of f and g are not aligned")
    shifts = [Fraction(q) for q in shifts]
    for q in shifts:
        _check_shift(q, f.step)
    plan = ShiftPlan(f, g)
    by_shift: dict = {}
    fr = plan.f_res.values
    gr = plan.g_res.values
    nf, ng = fr.size, gr.size
    h = float(f.step)
    for _ in range(sweeps):
        moved = 0.0
        for q in shifts:
            k = plan.offset(q)
            lo, hi = max(0, -k), min(nf, ng - k)
            if hi <= lo:
                continue
            m = np.minimum(fr[lo:hi], gr[lo + k : hi + k])
            mass = h * float(m.sum())
            if mass == 0.0:
                continue
            before = (plan.f_res.mass, plan.g_res.mass)
            fr[lo:hi] -= m
            gr[lo + k : hi + k] -= m
            if q not in by_shift:
                by_shift[q] = GridDensity(f.origin, f.step, np.zeros(nf))
                plan.entries.append((q, by_shift[q]))
            by_shift[q].values[lo:hi] += m
            plan.transfer_log.append((q, mass, before, (plan.f_res.mass, plan.g_res.mass)))
            moved += mass
        plan.sweep_log.append(plan.residual_mass)
        if moved == 0.0:
            plan.stalled = plan.residual_mass > MASS_TOL
            break
    return plan


def plan_marginals(plan: ShiftPlan) -> tuple[GridDensity, GridDensity]:
    """First marginal on f's grid and second marginal on g's grid (residuals excluded)."""
    first = plan.f_grid.zeros_like()
    second = plan.g_grid.zeros_like()
    nf, ng = first.size, second.size
    for q, m in plan.entries:
        k = plan.offset(q)
        lo, hi = max(0, -k), min(nf, ng - k)
        first.values += m.values
        second.values[lo + k : hi + k] += m.values[lo:hi]
    return first, second


def verify_rationality(plan: ShiftPlan) -> dict:
    """Check that every shift is an exact rational and report the denominators used."""
    dens = []
    ok = True
    for q, _ in plan.entries:
        if not isinstance(q, Fraction):
            ok = False
            continue
        dens.append(q.denominator)
    bound = math.lcm(*dens) if dens else 1
    return {
        "rational": ok,
        "n_entries": len(plan.entries),
        "denominators": sorted(set(dens)),
        "denominator_bound": bound,
        "divides_grid": bool(plan.step.numerator == 1 and plan.step.denominator % bound == 0),
    }


def grid_shifts(L: int, lo: int, hi: int) -> list[Fraction]:
    """All multiples of ``1/L`` in ``[lo, hi]``, ascending."""
    return [Fraction(k, L) for k in range(lo * L, hi * L + 1)]
