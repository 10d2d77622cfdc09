"""Finite marriage-lemma duality in exact rational arithmetic.

For measures ``mu, nu`` on a finite ground set ``B = {0, ..., n-1}`` and a
union of rectangles ``W``::

    max { m(W) : m on W, m_1 <= mu, m_2 <= nu }
        = min { mu(U) + nu(V) : W subset (U x B) u (B x V) }

Both sides come from one max-flow on the bipartite network
``source -> x (mu(x)) -> y (unbounded, x,y in W) -> sink (nu(y))``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import chain, combinations
from typing import Iterable, Sequence

from .errors import ConfigError


def as_fraction(v) -> Fraction:
    if isinstance(v, float):
        # go through repr so 0.1 means 1/10, not the binary expansion
        return Fraction(repr(v))
    return Fraction(v)


@dataclass(frozen=True)
class FiniteMeasure:
    weights: tuple

    def __init__(self, weights: Iterable):
        w = tuple(as_fraction(v) for v in weights)
        if any(v < 0 for v in w):
            raise ValueError("measure weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    @property
    def total(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    def mass(self, index_set: Iterable[int]) -> Fraction:
        return sum((self.weights[i] for i in index_set), Fraction(0))


@dataclass(frozen=True)
class BlockSet:
    """``W = U_1 x V_1 u ... u U_k x V_k`` on ``B x B``."""

    blocks: tuple

    def __init__(self, blocks: Iterable):
        object.__setattr__(self, "blocks", tuple((frozenset(u), frozenset(v)) for u, v in blocks))

    def __contains__(self, pair) -> bool:
        x, y = pair
        return any(x in u and y in v for u, v in self.blocks)

    def pairs(self) -> set[tuple[int, int]]:
        return {(x, y) for u, v in self.blocks for x in u for y in v}

    def max_index(self) -> int:
        return max((max(chain(u, v), default=-1) for u, v in self.blocks), default=-1)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "BlockSet":
        return cls(({x}, {y}) for x, y in pairs)


class FinitePartition:
    """Equivalence relation on ``{0, ..., n-1}`` given by class labels."""

    def __init__(self, labels: Sequence):
        self.labels = tuple(labels)

    def __len__(self):
        return len(self.labels)

    def classes(self) -> list[frozenset]:
        out: dict = {}
        for i, lab in enumerate(self.labels):
            out.setdefault(lab, set()).add(i)
        return [frozenset(c) for c in out.values()]

    def related(self, x: int, y: int) -> bool:
        return self.labels[x] == self.labels[y]

    def blocks(self) -> BlockSet:
        """``E`` itself as a block set: the union of ``C x C`` over classes."""
        return BlockSet((c, c) for c in self.classes())


def saturate(A: Iterable[int], E: FinitePartition) -> frozenset:
    hit = {E.labels[i] for i in A}
    return frozenset(i for i, lab in enumerate(E.labels) if lab in hit)


def _check_instance(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet | None = None) -> None:
    if len(mu) != len(nu):
        raise ValueError(f"ground sets differ: |mu|={len(mu)}, |nu|={len(nu)}")
    if W is not None and W.max_index() >= len(mu):
        raise ValueError(f"block set refers to element {W.max_index()} outside the ground set")


# --- max-flow ----------------------------------------------------------------


class _Network:
    def __init__(self, size: int):
        self.cap = [dict() for _ in range(size)]

    def add(self, u: int, v: int, c: Fraction) -> None:
        self.cap[u][v] = self.cap[u].get(v, Fraction(0)) + c
        self.cap[v].setdefault(u, Fraction(0))

    def _bfs(self, s: int, t: int):
        parent = {s: None}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v, c in self.cap[u].items():
                if c > 0 and v not in parent:
                    parent[v] = u
                    if v == t:
                        return parent
                    queue.append(v)
        return parent

    def maxflow(self, s: int, t: int) -> Fraction:
        """Edmonds-Karp on residual capacities (mutated in place)."""
        total = Fraction(0)
        while True:
            parent = self._bfs(s, t)
            if t not in parent:
                return total
            path = []
            v = t
            while parent[v] is not None:
                path.append((parent[v], v))
                v = parent[v]
            push = min(self.cap[u][v] for u, v in path)
            for u, v in path:
                self.cap[u][v] -= push
                self.cap[v][u] += push
            total += push

    def reachable(self, s: int) -> set[int]:
        return set(self._bfs(s, -1))


@dataclass
class FlowSolution:
    value: Fraction
    plan: dict
    U: frozenset
    V: frozenset


def solve(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet) -> FlowSolution:
    """Max-flow for the instance, with the plan and the min-cut cover read off it."""
    _check_instance(mu, nu, W)
    n = len(mu)
    src, sink = 2 * n, 2 * n + 1
    net = _Network(2 * n + 2)
    # bigger than any possible flow through a single edge, so never part of a min cut
    unbounded = mu.total + nu.total + 1
    for x in range(n):
        if mu[x] > 0:
            net.add(src, x, mu[x])
        if nu[x] > 0:
            net.add(n + x, sink, nu[x])
    pairs = sorted(W.pairs())
    for x, y in pairs:
        net.add(x, n + y, unbounded)
    value = net.maxflow(src, sink)
    plan = {}
    for x, y in pairs:
        sent = net.cap[n + y][x]
        if sent > 0:
            plan[(x, y)] = sent
    reach = net.reachable(src)
    U = frozenset(x for x in range(n) if x not in reach)
    V = frozenset(y for y in range(n) if n + y in reach)
    return FlowSolution(value, plan, U, V)


def max_mass(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet) -> tuple[Fraction, dict]:
    sol = solve(mu, nu, W)
    return sol.value, sol.plan


def min_cover(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet) -> tuple[frozenset, frozenset, Fraction]:
    sol = solve(mu, nu, W)
    return sol.U, sol.V, mu.mass(sol.U) + nu.mass(sol.V)


def covers(U, V, W: BlockSet) -> bool:
    return all(x in U or y in V for x, y in W.pairs())


def plan_marginals(plan: dict, n: int) -> tuple[list, list]:
    first = [Fraction(0)] * n
    second = [Fraction(0)] * n
    for (x, y), m in plan.items():
        first[x] += m
        second[y] += m
    return first, second


def null_cover(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet):
    """A cover of ``W`` by a mu-null ``U`` and a nu-null ``V``, or ``None``."""
    _check_instance(mu, nu, W)
    U = frozenset(x for x in range(len(mu)) if mu[x] == 0)
    V = frozenset(y for y in range(len(nu)) if nu[y] == 0)
    return (U, V) if covers(U, V, W) else None


# --- threshold rounding ---------------------------------------------------------


class InfeasibleDual(ValueError):
    def __init__(self, pair):
        super().__init__(f"f(x) + g(y) < 1 at (x, y) = {pair}")
        self.pair = pair


def check_dual(f, g, W: BlockSet) -> None:
    for x, y in sorted(W.pairs()):
        if as_fraction(f[x]) + as_fraction(g[y]) < 1:
            raise InfeasibleDual((x, y))


def threshold_cover(f, g, theta, W: BlockSet | None = None) -> tuple[frozenset, frozenset]:
    """``U = {f >= theta}``, ``V = {g >= 1 - theta}``; covers ``W`` whenever (f, g) is dual feasible."""
    if W is not None:
        check_dual(f, g, W)
    theta = as_fraction(theta)
    U = frozenset(x for x, v in enumerate(f) if as_fraction(v) >= theta)
    V = frozenset(y for y, v in enumerate(g) if as_fraction(v) >= 1 - theta)
    return U, V


def _theta_pieces(f, g):
    """Breakpoints splitting (0, 1) into pieces on which both threshold sets are constant."""
    cuts = {Fraction(0), Fraction(1)}
    cuts.update(as_fraction(v) for v in f)
    cuts.update(1 - as_fraction(v) for v in g)
    pts = sorted(c for c in cuts if 0 <= c <= 1)
    return list(zip(pts[:-1], pts[1:]))


def threshold_averages(f, g, mu: FiniteMeasure, nu: FiniteMeasure) -> tuple[Fraction, Fraction]:
    """``int_0^1 mu(U_theta) dtheta`` and ``int_0^1 nu(V_theta) dtheta``, exactly."""
    a = b = Fraction(0)
    for lo, hi in _theta_pieces(f, g):
        U, V = threshold_cover(f, g, (lo + hi) / 2)
        a += (hi - lo) * mu.mass(U)
        b += (hi - lo) * nu.mass(V)
    return a, b


def best_threshold(f, g, mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet | None = None):
    """Scan the pieces of (0, 1) for the cheapest threshold cover.

    Returns ``(theta, U, V, cost)``; the cost never exceeds the dual objective
    ``sum f mu + sum g nu`` when ``0 <= f, g <= 1``.
    """
    if W is not None:
        check_dual(f, g, W)
    best = None
    for lo, hi in _theta_pieces(f, g):
        theta = (lo + hi) / 2
        U, V = threshold_cover(f, g, theta)
        cost = mu.mass(U) + nu.mass(V)
        if best is None or cost < best[3]:
            best = (theta, U, V, cost)
    return best


# --- joinings concentrated on an equivalence relation ---------------------------------


@dataclass
class JoinResult:
    plan: dict | None
    witness: frozenset | None

    @property
    def ok(self) -> bool:
        return self.plan is not None


def maximal_join(mu: FiniteMeasure, nu: FiniteMeasure, E: FinitePartition) -> JoinResult:
    """A joining of ``mu`` and ``nu`` concentrated on ``E``, or a saturated set separating them.

    Classes with equal masses are joined by the normalized product of the
    restricted measures.
    """
    _check_instance(mu, nu)
    if len(E) != len(mu):
        raise ValueError("partition and measures live on different ground sets")
    plan = {}
    for c in sorted(E.classes(), key=min):
        a, b = mu.mass(c), nu.mass(c)
        if a != b:
            return JoinResult(None, c)
        if a == 0:
            continue
        for x in sorted(c):
            for y in sorted(c):
                m = mu[x] * nu[y] / a
                if m:
                    plan[(x, y)] = m
    return JoinResult(plan, None)


# --- instance files -----------------------------------------------------------------


def _subsets(items):
    items = list(items)
    return chain.from_iterable(combinations(items, r) for r in range(len(items) + 1))


def brute_force_cover(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet) -> Fraction:
    """Minimum of ``mu(U) + nu(V)`` over all ``4**n`` candidate covers."""
    n = len(mu)
    pairs = W.pairs()
    best = None
    for U in _subsets(range(n)):
        us = set(U)
        need = {y for x, y in pairs if x not in us}
        cost = mu.mass(us) + nu.mass(need)
        if best is None or cost < best:
            best = cost
    return best


def load_instance(data) -> tuple[FiniteMeasure, FiniteMeasure, BlockSet]:
    """Parse ``{ground, mu, nu, blocks}`` (a dict or JSON text); weights may be strings like ``"1/3"``."""
    try:
        if isinstance(data, (str, bytes)):
            data = json.loads(data)
        n = int(data["ground"])
        mu = FiniteMeasure(data["mu"])
        nu = FiniteMeasure(data["nu"])
        W = BlockSet((set(u), set(v)) for u, v in data["blocks"])
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"malformed instance: {exc}") from exc
    if len(mu) != n or len(nu) != n:
        raise ConfigError(f"instance declares ground {n} but has |mu|={len(mu)}, |nu|={len(nu)}")
    if W.max_index() >= n:
        raise ConfigError("block index outside the ground set")
    return mu, nu, W


def dump_instance(mu: FiniteMeasure, nu: FiniteMeasure, W: BlockSet) -> dict:
    return {
        "ground": len(mu),
        "mu": [str(v) for v in mu.weights],
        "nu": [str(v) for v in nu.weights],
        "blocks": [[sorted(u), sorted(v)] for u, v in W.blocks],
    }


def plan_triples(plan: dict) -> list:
    return [[x, y, str(m)] for (x, y), m in sorted(plan.items())]


def random_instance(rng, max_size: int = 8, max_blocks: int = 4, max_den: int = 12):
    """Random instance with rational weights; ``rng`` is a numpy Generator."""
    n = int(rng.integers(1, max_size + 1))

    def weights():
        return [Fraction(int(rng.integers(0, 2 * max_den + 1)), int(rng.integers(1, max_den + 1))) for _ in range(n)]

    blocks = []
    for _ in range(int(rng.integers(0, max_blocks + 1))):
        U = {i for i in range(n) if rng.random() < 0.4}
        V = {i for i in range(n) if rng.random() < 0.4}
        blocks.append((U, V))
    return FiniteMeasure(weights()), FiniteMeasure(weights()), BlockSet(blocks)
