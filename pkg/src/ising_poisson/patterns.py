"""Local configurations on a ball and their weights, gaps and occurrence counts.

A local configuration of radius ``r`` is a full sign assignment on the ball
B(0, r), stored as its set of positive offsets.  All weights are handled in log
scale: ``log W = 2*a*k - 2*b*gamma``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .lattice import INF, Offset, TorusLattice, ball_offsets, norm_label, parse_norm

log = logging.getLogger(__name__)

MAX_ENUMERATION_BITS = 24


class EnumerationLimitError(ValueError):
    """Raised when an exhaustive enumeration would exceed 2**24 states."""


def _guard(bits: int, what: str) -> None:
    if bits > MAX_ENUMERATION_BITS:
        raise EnumerationLimitError(
            f"{what}: 2^{bits} states exceeds the enumeration limit 2^{MAX_ENUMERATION_BITS}"
        )


@dataclass(frozen=True)
class Potentials:
    """Magnetic field ``a`` and pair potential ``b`` (``b >= 0``)."""

    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"potentials must be finite, got a={self.a}, b={self.b}")
        if self.b < 0:
            raise ValueError(f"pair potential must be nonnegative, got b={self.b}")

    @property
    def in_theorem_regime(self) -> bool:
        return self.a < 0


@dataclass(frozen=True)
class LocalPattern:
    radius: int
    positives: frozenset
    d: int
    p: float
    rho: int

    @classmethod
    def create(cls, positives: Iterable[Sequence[int]], radius: int, d: int, p=1, rho: int = 1):
        p = parse_norm(p)
        if radius < 0:
            raise ValueError(f"radius must be nonnegative, got {radius}")
        shape = ball_offsets(d, p, rho, radius)
        pos = []
        for o in positives:
            o = tuple(int(c) for c in o)
            if len(o) != d:
                raise ValueError(f"offset {o} does not have dimension {d}")
            if o not in shape:
                raise ValueError(f"offset {o} lies outside the ball of radius {radius}")
            pos.append(o)
        if len(set(pos)) != len(pos):
            raise ValueError("duplicate positive offsets")
        return cls(radius, frozenset(pos), d, p, rho)

    @classmethod
    def single_plus(cls, radius: int, d: int, p=1, rho: int = 1):
        return cls.create([(0,) * d], radius, d, p, rho)

    @classmethod
    def null(cls, radius: int, d: int, p=1, rho: int = 1):
        return cls.create([], radius, d, p, rho)

    @property
    def ball_offsets(self) -> tuple[Offset, ...]:
        return tuple(ball_offsets(self.d, self.p, self.rho, self.radius))

    @property
    def k(self) -> int:
        return len(self.positives)

    @property
    def is_null(self) -> bool:
        return not self.positives

    @property
    def clean(self) -> bool:
        inner = ball_offsets(self.d, self.p, self.rho, self.radius - 1) if self.radius >= 1 else {}
        return all(o in inner for o in self.positives)

    def sign_vector(self) -> np.ndarray:
        """Signs on the ball in lexicographic offset order."""
        return np.array([1 if o in self.positives else -1 for o in self.ball_offsets], dtype=np.int8)

    def with_positives(self, positives: Iterable[Sequence[int]]) -> "LocalPattern":
        return LocalPattern.create(positives, self.radius, self.d, self.p, self.rho)

    def check_lattice(self, lattice: TorusLattice) -> None:
        if (self.d, self.p, self.rho) != (lattice.d, lattice.p, lattice.rho):
            raise ValueError(
                f"pattern built for (d, p, rho) = ({self.d}, {norm_label(self.p)}, {self.rho}), "
                f"lattice has ({lattice.d}, {norm_label(lattice.p)}, {lattice.rho})"
            )
        lattice.check_radius(self.radius)


@dataclass(frozen=True)
class PatternReport:
    k: int
    gamma: int
    log_weight: float
    delta: float
    theta: float
    clean: bool

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


# ---------------------------------------------------------------------------
# generic configurations on vertex subsets of the torus


def _positive_edges(lattice: TorusLattice, positives: set[int]) -> int:
    t = lattice.neighbor_table
    return sum(1 for v in positives for w in t[v] if v < int(w) and int(w) in positives)


def config_stats(lattice: TorusLattice, positives: Iterable) -> tuple[int, int]:
    """(k, gamma) of any configuration, given its positive vertices."""
    pos = {lattice.index(v) for v in positives}
    k = len(pos)
    return k, lattice.V * k - 2 * _positive_edges(lattice, pos)


def log_weight(k: int, gamma: int, potentials: Potentials) -> float:
    if potentials.b < 0:
        raise ValueError("pair potential must be nonnegative")
    return 2.0 * potentials.a * k - 2.0 * potentials.b * gamma


def config_log_weight(lattice: TorusLattice, positives: Iterable, potentials: Potentials) -> float:
    return log_weight(*config_stats(lattice, positives), potentials)


def _positive_support(zeta: Mapping, lattice: TorusLattice) -> tuple[set[int], set[int]]:
    support, pos = set(), set()
    for v, s in zeta.items():
        i = lattice.index(v)
        if s not in (1, -1):
            raise ValueError(f"sign at vertex {v} must be +1 or -1, got {s}")
        support.add(i)
        if s == 1:
            pos.add(i)
    return support, pos


def connection(zeta_a: Mapping, zeta_b: Mapping, lattice: TorusLattice) -> int:
    """Number of edges joining a positive vertex of ``zeta_a`` to one of ``zeta_b``.

    Both assignments map vertices (index or coordinates) to +1/-1 and must have
    disjoint supports.
    """
    supp_a, pos_a = _positive_support(zeta_a, lattice)
    supp_b, pos_b = _positive_support(zeta_b, lattice)
    if supp_a & supp_b:
        raise ValueError("connection requires disjoint supports")
    t = lattice.neighbor_table
    return sum(1 for v in pos_a for w in t[v] if int(w) in pos_b)


# ---------------------------------------------------------------------------
# patterns placed on the torus


def placed_positives(pattern: LocalPattern, lattice: TorusLattice, x=0) -> list[int]:
    return [lattice.translate(x, o) for o in sorted(pattern.positives)]


def pattern_stats(pattern: LocalPattern, lattice: TorusLattice) -> tuple[int, int]:
    pattern.check_lattice(lattice)
    return config_stats(lattice, placed_positives(pattern, lattice))


def pattern_log_weight(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> float:
    return log_weight(*pattern_stats(pattern, lattice), potentials)


def _local_geometry(pattern: LocalPattern, lattice: TorusLattice):
    """Ball members, boundary, and closure edges as local index pairs."""
    ball = lattice.ball(0, pattern.radius)
    boundary = lattice.ball_boundary(ball)
    local = {v: i for i, v in enumerate(ball.members + tuple(boundary))}
    t = lattice.neighbor_table
    edges = sorted(
        {(min(local[v], local[int(w)]), max(local[v], local[int(w)])) for v in local for w in t[v] if int(w) in local}
    )
    return ball, boundary, np.array(edges, dtype=np.int64).reshape(-1, 2)


def log_probability_gap(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> float:
    """Closed form: the best boundary configuration has a single positive vertex."""
    pattern.check_lattice(lattice)
    ball = lattice.ball(0, pattern.radius)
    pos = set(placed_positives(pattern, lattice))
    t = lattice.neighbor_table
    c_star = max((sum(1 for w in t[z] if int(w) in pos) for z in lattice.ball_boundary(ball)), default=0)
    return 2.0 * potentials.a - 2.0 * potentials.b * (lattice.V - 2 * c_star)


def log_probability_gap_bruteforce(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> float:
    """Exact max over all nonnull boundary configurations of log W(eta sigma) - log W(eta)."""
    pattern.check_lattice(lattice)
    ball, boundary, edges = _local_geometry(pattern, lattice)
    m = len(boundary)
    _guard(m, "probability gap enumeration")
    beta = ball.beta
    ball_pos = np.zeros(beta, dtype=bool)
    pos = set(placed_positives(pattern, lattice))
    for i, v in enumerate(ball.members):
        ball_pos[i] = v in pos
    k_eta = int(ball_pos.sum())
    eta_edges = sum(1 for i, j in edges if j < beta and ball_pos[i] and ball_pos[j])
    gamma_eta = lattice.V * k_eta - 2 * eta_edges
    best = -math.inf
    chunk = 1 << 20
    for lo in range(1, 1 << m, chunk):
        sig = np.arange(lo, min(lo + chunk, 1 << m), dtype=np.uint64)
        k = k_eta + np.bitwise_count(sig).astype(np.int64)
        npos = np.zeros(sig.shape, dtype=np.int64)
        for i, j in edges:
            pi = _site_bit(sig, i, beta, ball_pos)
            pj = _site_bit(sig, j, beta, ball_pos)
            npos += pi & pj
        gamma = lattice.V * k - 2 * npos
        val = 2.0 * potentials.a * (k - k_eta) - 2.0 * potentials.b * (gamma - gamma_eta)
        best = max(best, float(val.max()))
    return best


def _site_bit(sig: np.ndarray, i: int, beta: int, ball_pos: np.ndarray) -> np.ndarray:
    if i < beta:
        return np.full(sig.shape, int(ball_pos[i]), dtype=np.int64)
    return ((sig >> np.uint64(i - beta)) & np.uint64(1)).astype(np.int64)


def probability_gap(
    pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice, verify: bool = False
) -> float:
    """Delta_n(eta).  With ``verify``, cross-check against enumeration; enumeration wins."""
    lg = log_probability_gap(pattern, potentials, lattice)
    if verify:
        brute = log_probability_gap_bruteforce(pattern, potentials, lattice)
        if not math.isclose(lg, brute, rel_tol=1e-12, abs_tol=1e-12):
            log.warning("closed-form probability gap %.17g disagrees with enumeration %.17g", lg, brute)
            lg = brute
    return math.exp(lg)


def probability_gap_bruteforce(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> float:
    return math.exp(log_probability_gap_bruteforce(pattern, potentials, lattice))


def log_maximality_probability(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> float:
    pattern.check_lattice(lattice)
    offsets = pattern.ball_offsets
    free = [i for i, o in enumerate(offsets) if o not in pattern.positives]
    if not free:
        raise ValueError("maximality probability undefined: pattern covers the whole ball")
    _guard(len(free), "maximality enumeration")
    ball = lattice.ball(0, pattern.radius)
    local = ball.position()
    t = lattice.neighbor_table
    edges = sorted({(local[v], local[int(w)]) for v in ball.members for w in t[v] if int(w) in local and v < int(w)})
    is_pos = np.array([o in pattern.positives for o in offsets])
    free_bit = {i: b for b, i in enumerate(free)}
    k_eta = pattern.k
    gamma_eta = lattice.V * k_eta - 2 * sum(1 for i, j in edges if is_pos[i] and is_pos[j])
    best = -math.inf
    chunk = 1 << 20
    for lo in range(1, 1 << len(free), chunk):
        s = np.arange(lo, min(lo + chunk, 1 << len(free)), dtype=np.uint64)
        extra = np.bitwise_count(s).astype(np.int64)
        npos = np.zeros(s.shape, dtype=np.int64)
        for i, j in edges:
            bi = np.int64(1) if is_pos[i] else ((s >> np.uint64(free_bit[i])) & np.uint64(1)).astype(np.int64)
            bj = np.int64(1) if is_pos[j] else ((s >> np.uint64(free_bit[j])) & np.uint64(1)).astype(np.int64)
            npos += bi & bj
        gamma = lattice.V * (k_eta + extra) - 2 * npos
        val = 2.0 * potentials.a * extra - 2.0 * potentials.b * (gamma - gamma_eta)
        best = max(best, float(val.max()))
    return best


def maximality_probability(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> float:
    return math.exp(log_maximality_probability(pattern, potentials, lattice))


def pattern_report(pattern: LocalPattern, potentials: Potentials, lattice: TorusLattice) -> PatternReport:
    k, gamma = pattern_stats(pattern, lattice)
    try:
        theta = maximality_probability(pattern, potentials, lattice)
    except ValueError:
        theta = math.nan
    return PatternReport(
        k=k,
        gamma=gamma,
        log_weight=log_weight(k, gamma, potentials),
        delta=probability_gap(pattern, potentials, lattice),
        theta=theta,
        clean=pattern.clean,
    )


# ---------------------------------------------------------------------------
# spin states and occurrence counts


@dataclass(frozen=True)
class SpinState:
    """Full configuration, bit-packed: bit i set means vertex i is positive."""

    bits: int
    num_sites: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.num_sites:
            raise ValueError("state has bits beyond num_sites")

    @classmethod
    def from_signs(cls, signs) -> "SpinState":
        signs = np.asarray(signs).ravel()
        bits = 0
        for i, s in enumerate(signs):
            if s > 0:
                bits |= 1 << i
        return cls(bits, len(signs))

    @classmethod
    def all_minus(cls, num_sites: int) -> "SpinState":
        return cls(0, num_sites)

    @classmethod
    def all_plus(cls, num_sites: int) -> "SpinState":
        return cls((1 << num_sites) - 1, num_sites)

    @classmethod
    def from_positives(cls, lattice: TorusLattice, positives: Iterable) -> "SpinState":
        bits = 0
        for v in positives:
            bits |= 1 << lattice.index(v)
        return cls(bits, lattice.num_sites)

    def signs(self) -> np.ndarray:
        return np.array([1 if (self.bits >> i) & 1 else -1 for i in range(self.num_sites)], dtype=np.int8)

    def __getitem__(self, i: int) -> int:
        return 1 if (self.bits >> i) & 1 else -1


@dataclass(frozen=True)
class PatternTables:
    ball: np.ndarray  # (N, beta) vertex indices of x + ball offsets
    target: np.ndarray  # (beta,) signs of eta
    positives: np.ndarray  # (N, k) vertex indices of x + V_+(eta)


@lru_cache(maxsize=128)
def pattern_tables(pattern: LocalPattern, lattice: TorusLattice) -> PatternTables:
    pattern.check_lattice(lattice)
    N = lattice.num_sites
    offsets = pattern.ball_offsets
    ball = np.array([[lattice.translate(x, o) for o in offsets] for x in range(N)], dtype=np.int64).reshape(N, -1)
    pos_idx = [i for i, o in enumerate(offsets) if o in pattern.positives]
    pos = ball[:, pos_idx]
    for arr in (ball, pos):
        arr.setflags(write=False)
    return PatternTables(ball, pattern.sign_vector(), pos)


StateLike = Union[SpinState, np.ndarray, Sequence[int]]


def _as_signs(state: StateLike, lattice: TorusLattice) -> np.ndarray:
    if isinstance(state, SpinState):
        s = state.signs()
    else:
        s = np.asarray(state)
        if s.dtype == bool:
            s = np.where(s, 1, -1)
    if s.shape[-1] != lattice.num_sites:
        raise ValueError(f"state has {s.shape[-1]} sites, lattice has {lattice.num_sites}")
    return s


def count_occurrences(state: StateLike, pattern: LocalPattern, lattice: TorusLattice):
    """X_n(eta): number of x whose ball B(x, r) carries exactly the translate of eta.

    Accepts a single state or a batch with shape (M, num_sites).
    """
    s = _as_signs(state, lattice)
    tab = pattern_tables(pattern, lattice)
    match = np.all(s[..., tab.ball] == tab.target, axis=-1)
    out = match.sum(axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def count_upper(state: StateLike, pattern: LocalPattern, lattice: TorusLattice):
    """Upper count: number of x with every vertex of x + V_+(eta) positive."""
    s = _as_signs(state, lattice)
    tab = pattern_tables(pattern, lattice)
    match = np.all(s[..., tab.positives] > 0, axis=-1)
    out = match.sum(axis=-1)
    return int(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# pattern files


def parse_pattern(text: str) -> LocalPattern:
    """Parse the line-oriented pattern format (header ``d p rho r`` then offsets)."""
    header = None
    offsets = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if header is None:
            if len(fields) != 4:
                raise ValueError(f"line {lineno}: header must be 'd p rho r'")
            try:
                d, rho, r = int(fields[0]), int(fields[2]), int(fields[3])
            except ValueError:
                raise ValueError(f"line {lineno}: invalid header {line!r}") from None
            header = (d, parse_norm(fields[1]), rho, r)
            continue
        if len(fields) != header[0]:
            raise ValueError(f"line {lineno}: expected {header[0]} integers, got {len(fields)}")
        try:
            offsets.append(tuple(int(f) for f in fields))
        except ValueError:
            raise ValueError(f"line {lineno}: offsets must be integers") from None
    if header is None:
        raise ValueError("pattern file has no header line")
    d, p, rho, r = header
    if d < 1 or rho < 1:
        raise ValueError("header requires d >= 1 and rho >= 1")
    return LocalPattern.create(offsets, r, d, p, rho)


def load_pattern(path: Union[str, Path]) -> LocalPattern:
    return parse_pattern(Path(path).read_text())


def format_pattern(pattern: LocalPattern) -> str:
    lines = [f"{pattern.d} {norm_label(pattern.p)} {pattern.rho} {pattern.radius}"]
    lines += [" ".join(str(c) for c in o) for o in sorted(pattern.positives)]
    return "\n".join(lines) + "\n"


__all__ = [
    "INF",
    "EnumerationLimitError",
    "LocalPattern",
    "PatternReport",
    "Potentials",
    "SpinState",
    "config_stats",
    "connection",
    "count_occurrences",
    "count_upper",
    "load_pattern",
    "log_maximality_probability",
    "log_probability_gap",
    "log_probability_gap_bruteforce",
    "log_weight",
    "maximality_probability",
    "parse_pattern",
    "pattern_report",
    "pattern_stats",
    "probability_gap",
    "probability_gap_bruteforce",
]
