"""Periodic lattice torus with L_p-range adjacency and graph-distance balls.

Vertices of the torus {0, ..., n-1}^d are indexed row-major (last coordinate
varies fastest).  Two vertices are adjacent when the componentwise difference
mod n has L_p norm at most ``rho``.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence, Union

import numpy as np

INF = math.inf

Vertex = Union[int, Sequence[int]]
Offset = tuple[int, ...]


def parse_norm(p) -> float:
    """Accept an integer >= 1 or ``"inf"``/``math.inf`` and return the norm selector."""
    if isinstance(p, str):
        token = p.strip().lower()
        if token in ("inf", "infinity"):
            return INF
        try:
            p = int(token)
        except ValueError:
            raise ValueError(f"invalid norm selector {p!r}") from None
    if p == INF:
        return INF
    if isinstance(p, float) and not p.is_integer():
        raise ValueError(f"norm selector must be an integer >= 1 or inf, got {p}")
    p = int(p)
    if p < 1:
        raise ValueError(f"norm selector must be >= 1, got {p}")
    return p


def norm_label(p: float) -> str:
    return "inf" if p == INF else str(int(p))


def _within_range(offset: Offset, p: float, rho: int) -> bool:
    if p == INF:
        return max(abs(c) for c in offset) <= rho
    # exact integer comparison of ||o||_p^p against rho^p
    return sum(abs(c) ** p for c in offset) <= rho**p


@lru_cache(maxsize=None)
def neighbor_offsets(d: int, p: float, rho: int) -> tuple[Offset, ...]:
    """All nonzero integer offsets with L_p norm at most ``rho``, lexicographic."""
    out = []
    for o in itertools.product(range(-rho, rho + 1), repeat=d):
        if any(o) and _within_range(o, p, rho):
            out.append(o)
    return tuple(out)


@lru_cache(maxsize=None)
def ball_offsets(d: int, p: float, rho: int, r: int) -> dict[Offset, int]:
    """Offsets within graph distance ``r`` of the origin in Z^d, with their distance.

    This is the n-independent shape of every torus ball B(x, r) with n > 2*rho*r.
    """
    steps = neighbor_offsets(d, p, rho)
    origin = (0,) * d
    dist = {origin: 0}
    frontier = [origin]
    for level in range(1, r + 1):
        nxt = []
        for v in frontier:
            for s in steps:
                w = tuple(a + b for a, b in zip(v, s))
                if w not in dist:
                    dist[w] = level
                    nxt.append(w)
        frontier = nxt
    return dict(sorted(dist.items()))


@dataclass(frozen=True)
class Ball:
    center: int
    radius: int
    members: tuple[int, ...]
    offsets: tuple[Offset, ...]
    beta: int
    alpha: int

    @cached_property
    def member_set(self) -> frozenset[int]:
        return frozenset(self.members)

    def position(self) -> dict[int, int]:
        """Map vertex index -> position in ``members``."""
        return {v: i for i, v in enumerate(self.members)}


@dataclass(frozen=True)
class TorusLattice:
    n: int
    d: int
    p: float
    rho: int
    neighbor_offsets: tuple[Offset, ...] = field(repr=False)

    @property
    def V(self) -> int:
        return len(self.neighbor_offsets)

    @property
    def num_sites(self) -> int:
        return self.n**self.d

    @cached_property
    def _strides(self) -> tuple[int, ...]:
        return tuple(self.n ** (self.d - 1 - i) for i in range(self.d))

    def index(self, x: Vertex) -> int:
        """Row-major index of a vertex given as an index or a coordinate tuple."""
        if isinstance(x, (int, np.integer)):
            x = int(x)
            if not 0 <= x < self.num_sites:
                raise IndexError(f"vertex index {x} out of range [0, {self.num_sites})")
            return x
        coords = tuple(int(c) for c in x)
        if len(coords) != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {len(coords)}")
        return sum((c % self.n) * s for c, s in zip(coords, self._strides))

    def coords(self, x: int) -> tuple[int, ...]:
        x = self.index(x)
        return tuple((x // s) % self.n for s in self._strides)

    def translate(self, x: Vertex, offset: Sequence[int]) -> int:
        c = self.coords(self.index(x))
        return self.index(tuple(a + b for a, b in zip(c, offset)))

    def centered_offset(self, x: Vertex, y: Vertex) -> Offset:
        """Representative of y - x with components in (-n/2, n/2]."""
        cx, cy = self.coords(self.index(x)), self.coords(self.index(y))
        out = []
        for a, b in zip(cx, cy):
            t = (b - a) % self.n
            if t > self.n // 2:
                t -= self.n
            out.append(t)
        return tuple(out)

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """(num_sites, V) int array; row x lists x + o mod n for each offset o."""
        N = self.num_sites
        coords = np.array([self.coords(x) for x in range(N)], dtype=np.int64).reshape(N, self.d)
        offs = np.array(self.neighbor_offsets, dtype=np.int64).reshape(self.V, self.d)
        shifted = (coords[:, None, :] + offs[None, :, :]) % self.n
        strides = np.array(self._strides, dtype=np.int64)
        table = shifted @ strides
        table.setflags(write=False)
        return table

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) array of unordered edges {x, y} with x < y, each listed once."""
        t = self.neighbor_table
        pairs = {(min(x, int(y)), max(x, int(y))) for x in range(self.num_sites) for y in t[x]}
        arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    def neighbors(self, x: Vertex) -> list[int]:
        return [int(y) for y in self.neighbor_table[self.index(x)]]

    def is_adjacent(self, x: Vertex, y: Vertex) -> bool:
        return self.index(y) in self.neighbors(x)

    def check_radius(self, r: int) -> None:
        if r < 0:
            raise ValueError(f"radius must be nonnegative, got {r}")
        if self.n <= 2 * self.rho * r:
            raise ValueError(
                f"self-overlapping balls: need n > 2*rho*r = {2 * self.rho * r}, got n = {self.n}"
            )

    def ball(self, x: Vertex, r: int) -> Ball:
        self.check_radius(r)
        return self._ball(self.index(x), r)

    def _ball(self, x: int, r: int) -> Ball:
        # BFS on the torus itself under graph distance
        t = self.neighbor_table
        dist = {x: 0}
        queue = deque([x])
        while queue:
            v = queue.popleft()
            if dist[v] == r:
                continue
            for w in t[v]:
                w = int(w)
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        ordered = sorted(dist, key=lambda v: self.centered_offset(x, v))
        members = tuple(ordered)
        member_set = set(members)
        alpha = sum(1 for v in members for w in t[v] if int(w) in member_set and v < int(w))
        return Ball(
            center=x,
            radius=r,
            members=members,
            offsets=tuple(self.centered_offset(x, v) for v in members),
            beta=len(members),
            alpha=alpha,
        )

    def boundary(self, vertices) -> list[int]:
        """Outer vertex boundary: vertices outside the set with a neighbor inside it."""
        inside = {self.index(v) for v in vertices}
        t = self.neighbor_table
        out = {int(w) for v in inside for w in t[v] if int(w) not in inside}
        return sorted(out)

    def ball_boundary(self, ball: Ball) -> list[int]:
        """delta B, ordered lexicographically by offset from the ball's center."""
        out = self.boundary(ball.members)
        return sorted(out, key=lambda v: self.centered_offset(ball.center, v))

    def beta(self, r: int) -> int:
        return self.ball(0, r).beta

    def alpha(self, r: int) -> int:
        return self.ball(0, r).alpha


def build_lattice(n: int, d: int, p=1, rho: int = 1) -> TorusLattice:
    """Construct the torus G_n for side ``n``, dimension ``d``, norm ``p`` and range ``rho``.

    ``p`` is an integer >= 1 or ``"inf"``.  The side must exceed ``2 * rho`` so that
    distinct neighbor offsets stay distinct modulo n.
    """
    p = parse_norm(p)
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if int(rho) != rho or rho < 1:
        raise ValueError(f"range rho must be a positive integer, got {rho}")
    if int(n) != n or n < 2:
        raise ValueError(f"size n must be an integer >= 2, got {n}")
    if n <= 2 * rho:
        raise ValueError(f"size n = {n} too small for range rho = {rho}: offsets would wrap (need n > 2*rho)")
    return TorusLattice(int(n), int(d), p, int(rho), neighbor_offsets(int(d), p, int(rho)))
