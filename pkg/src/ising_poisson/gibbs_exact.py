"""Exact Gibbs measure on tiny tori by exhaustive enumeration.

States are enumerated as integers 0 .. 2**N - 1 where bit i is the sign of
vertex i (1 = plus).  The enumeration is cut into fixed shards of 2**16
states; each shard is reduced against its own maximum log-weight and the
shards are recombined in index order, so every result is bit-identical for
any number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .lattice import Ball, TorusLattice
from .patterns import (
    EnumerationLimitError,
    LocalPattern,
    Potentials,
    SpinState,
    _guard,
    pattern_tables,
)

SHARD_BITS = 16

Statistic = Callable[[np.ndarray], np.ndarray]
Reducer = Callable[[np.ndarray, np.ndarray], np.ndarray]


def state_log_weight(state: Union[SpinState, Sequence[int], np.ndarray], lattice: TorusLattice, potentials: Potentials) -> float:
    """a * sum_x sigma(x) + b * sum over edges sigma(x) sigma(y), each edge once."""
    if isinstance(state, SpinState):
        s = state.signs().astype(np.int64)
    else:
        s = np.asarray(state, dtype=np.int64)
    if s.shape != (lattice.num_sites,):
        raise ValueError(f"state must have {lattice.num_sites} sites")
    e = lattice.edges
    pair = int(np.sum(s[e[:, 0]] * s[e[:, 1]]))
    return potentials.a * int(s.sum()) + potentials.b * pair


def log_weights(states: np.ndarray, lattice: TorusLattice, potentials: Potentials) -> np.ndarray:
    """Vectorized ``state_log_weight`` over bit-packed states (uint64 array)."""
    N = lattice.num_sites
    mag = 2 * np.bitwise_count(states).astype(np.int64) - N
    disagree = np.zeros(states.shape, dtype=np.int64)
    one = np.uint64(1)
    for i, j in lattice.edges:
        disagree += (((states >> np.uint64(i)) ^ (states >> np.uint64(j))) & one).astype(np.int64)
    pair = len(lattice.edges) - 2 * disagree
    return potentials.a * mag + potentials.b * pair


def _enumerate(
    lattice: TorusLattice,
    potentials: Potentials,
    reduce: Reducer,
    threads: int = 1,
    max_bits: int = 24,
) -> tuple[float, np.ndarray]:
    """Return (log_Z, normalized reduction) over the whole state space.

    ``reduce(states, w)`` maps a shard of states and their (shard-scaled)
    weights to a float vector; vectors are summed across shards.
    """
    N = lattice.num_sites
    if N > max_bits:
        raise EnumerationLimitError(f"2^{N} states exceeds the enumeration limit 2^{max_bits}")
    total = 1 << N
    size = 1 << min(SHARD_BITS, N)
    bounds = [(lo, lo + size) for lo in range(0, total, size)]

    def work(bound):
        states = np.arange(bound[0], bound[1], dtype=np.uint64)
        lw = log_weights(states, lattice, potentials)
        m = float(lw.max())
        w = np.exp(lw - m)
        return m, float(w.sum()), np.asarray(reduce(states, w), dtype=np.float64)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    top = max(m for m, _, _ in parts)
    z = 0.0
    acc = np.zeros_like(parts[0][2])
    for m, wz, vec in parts:
        scale = math.exp(m - top)
        z += wz * scale
        acc += vec * scale
    return top + math.log(z), acc / z


def expectations(
    lattice: TorusLattice, potentials: Potentials, statistics: Sequence[Statistic], threads: int = 1
) -> np.ndarray:
    """Exact expectations of vectorized statistics of the bit-packed state."""

    def reduce(states, w):
        return np.array([np.dot(w, np.asarray(f(states), dtype=np.float64)) for f in statistics])

    return _enumerate(lattice, potentials, reduce, threads)[1]


def log_partition(lattice: TorusLattice, potentials: Potentials, threads: int = 1) -> float:
    return _enumerate(lattice, potentials, lambda s, w: np.zeros(1), threads)[0]


# ---------------------------------------------------------------------------
# pattern statistics on bit-packed states


def _masks(pattern: LocalPattern, lattice: TorusLattice) -> tuple[np.ndarray, np.ndarray]:
    tab = pattern_tables(pattern, lattice)
    ball = np.array([sum(1 << int(v) for v in row) for row in tab.ball], dtype=np.uint64)
    pos = np.array([sum(1 << int(v) for v in row) for row in tab.positives], dtype=np.uint64)
    return ball, pos


def count_statistic(pattern: LocalPattern, lattice: TorusLattice, mode: str = "exact") -> Statistic:
    """Vectorized X_n (``mode="exact"``) or upper count (``mode="upper"``) on bit-packed states."""
    if mode not in ("exact", "upper"):
        raise ValueError(f"mode must be 'exact' or 'upper', got {mode!r}")
    ball, pos = _masks(pattern, lattice)
    check = pos if mode == "upper" else ball

    def stat(states: np.ndarray) -> np.ndarray:
        out = np.zeros(states.shape, dtype=np.int64)
        for cm, pm in zip(check, pos):
            out += (states & cm) == pm
        return out

    return stat


def upper_indicator(mask: int) -> Statistic:
    """Increasing indicator: all vertices in ``mask`` are positive."""
    m = np.uint64(mask)
    return lambda states: ((states & m) == m).astype(np.int64)


@dataclass(frozen=True)
class ExactLaw:
    log_Z: float
    pmf: np.ndarray
    mean: float
    variance: float
    second_factorial_moment: float

    @classmethod
    def from_pmf(cls, log_Z: float, pmf: np.ndarray) -> "ExactLaw":
        m = np.arange(len(pmf), dtype=np.float64)
        mean = float(np.dot(m, pmf))
        var = float(np.dot((m - mean) ** 2, pmf))
        m2 = float(np.dot(m * (m - 1), pmf))
        return cls(log_Z, pmf, mean, var, m2)

    def prob_positive(self) -> float:
        return float(self.pmf[1:].sum())


def exact_law(
    lattice: TorusLattice,
    potentials: Potentials,
    pattern: LocalPattern,
    mode: str = "exact",
    threads: int = 1,
) -> ExactLaw:
    """Exact law of X_n(eta) (``mode="exact"``) or of the upper count (``mode="upper"``)."""
    _guard(lattice.num_sites, "exact law")
    stat = count_statistic(pattern, lattice, mode)
    N = lattice.num_sites

    def reduce(states, w):
        return np.bincount(stat(states), weights=w, minlength=N + 1)

    log_Z, pmf = _enumerate(lattice, potentials, reduce, threads)
    return ExactLaw.from_pmf(log_Z, pmf)


@dataclass(frozen=True)
class JointLaw:
    log_Z: float
    joint: np.ndarray  # joint[i, j] = P(X = i, upper count = j)

    def marginal(self, mode: str) -> ExactLaw:
        axis = 1 if mode == "exact" else 0
        return ExactLaw.from_pmf(self.log_Z, self.joint.sum(axis=axis))


def exact_joint_law(
    lattice: TorusLattice, potentials: Potentials, pattern: LocalPattern, threads: int = 1
) -> JointLaw:
    """Joint law of (X_n, upper count) from a single enumeration."""
    _guard(lattice.num_sites, "exact law")
    fx = count_statistic(pattern, lattice, "exact")
    fu = count_statistic(pattern, lattice, "upper")
    K = lattice.num_sites + 1

    def reduce(states, w):
        return np.bincount(fx(states) * K + fu(states), weights=w, minlength=K * K)

    log_Z, flat = _enumerate(lattice, potentials, reduce, threads)
    return JointLaw(log_Z, flat.reshape(K, K))


# ---------------------------------------------------------------------------
# conditional probabilities given the boundary of a ball


def _bits_of(states: np.ndarray, vertices: Sequence[int]) -> np.ndarray:
    code = np.zeros(states.shape, dtype=np.int64)
    one = np.uint64(1)
    for j, v in enumerate(vertices):
        code |= (((states >> np.uint64(v)) & one).astype(np.int64)) << j
    return code


def pattern_code(pattern: LocalPattern, ball: Ball) -> int:
    """Bit code of the pattern over ``ball.members`` (bit j <-> members[j])."""
    return sum(1 << j for j, o in enumerate(ball.offsets) if o in pattern.positives)


def _boundary_code(boundary: Union[Mapping, Sequence[int]], vertices: Sequence[int], lattice: TorusLattice) -> int:
    if isinstance(boundary, Mapping):
        signs = {lattice.index(v): s for v, s in boundary.items()}
        if set(signs) != set(vertices):
            raise ValueError("boundary assignment must cover exactly the ball's boundary")
        seq = [signs[v] for v in vertices]
    else:
        seq = list(boundary)
        if len(seq) != len(vertices):
            raise ValueError(f"boundary needs {len(vertices)} signs, got {len(seq)}")
    if any(s not in (1, -1) for s in seq):
        raise ValueError("boundary signs must be +1 or -1")
    return sum(1 << j for j, s in enumerate(seq) if s == 1)


@dataclass(frozen=True)
class ConditionalTable:
    ball: Ball
    boundary: tuple[int, ...]
    probs: np.ndarray  # probs[eta_code, sigma_code]

    def prob(self, pattern: LocalPattern, boundary, lattice: TorusLattice) -> float:
        return float(self.probs[pattern_code(pattern, self.ball), _boundary_code(boundary, self.boundary, lattice)])


def exact_conditional_table(
    lattice: TorusLattice, potentials: Potentials, r: int, x=0, threads: int = 1
) -> ConditionalTable:
    """All conditionals mu(ball = eta | boundary = sigma) from the full measure."""
    ball = lattice.ball(x, r)
    boundary = tuple(lattice.ball_boundary(ball))
    _guard(ball.beta + len(boundary), "conditional table")
    verts = ball.members + boundary
    size = 1 << len(verts)

    def reduce(states, w):
        return np.bincount(_bits_of(states, verts), weights=w, minlength=size)

    _, joint = _enumerate(lattice, potentials, reduce, threads)
    joint = joint.reshape(1 << len(boundary), 1 << ball.beta).T
    return ConditionalTable(ball, boundary, joint / joint.sum(axis=0, keepdims=True))


def exact_conditional(
    lattice: TorusLattice,
    potentials: Potentials,
    pattern: LocalPattern,
    x,
    boundary: Union[Mapping, Sequence[int]],
    threads: int = 1,
) -> float:
    """mu(I_x = 1 | boundary) summed over all states compatible with the boundary.

    ``boundary`` is a sign sequence ordered like ``lattice.ball_boundary`` or a
    vertex -> sign mapping.
    """
    pattern.check_lattice(lattice)
    table = exact_conditional_table(lattice, potentials, pattern.radius, x, threads)
    return table.prob(pattern, boundary, lattice)


def _closure_log_weights(
    lattice: TorusLattice, ball: Ball, boundary: Sequence[int], potentials: Potentials
) -> np.ndarray:
    """log W of every configuration on the closure, indexed [eta_code, sigma_code]."""
    verts = ball.members + tuple(boundary)
    local = {v: i for i, v in enumerate(verts)}
    t = lattice.neighbor_table
    edges = sorted({(local[v], local[int(w)]) for v in verts for w in t[v] if int(w) in local and v < int(w)})
    nbits = len(verts)
    codes = np.arange(1 << nbits, dtype=np.uint64)
    k = np.bitwise_count(codes).astype(np.int64)
    npos = np.zeros(codes.shape, dtype=np.int64)
    one = np.uint64(1)
    for i, j in edges:
        npos += (((codes >> np.uint64(i)) & (codes >> np.uint64(j))) & one).astype(np.int64)
    gamma = lattice.V * k - 2 * npos
    lw = 2.0 * potentials.a * k - 2.0 * potentials.b * gamma
    return lw.reshape(1 << len(boundary), 1 << ball.beta).T


def weight_ratio_table(lattice: TorusLattice, potentials: Potentials, r: int, x=0) -> ConditionalTable:
    """W(eta sigma) / sum_eta' W(eta' sigma) for every (eta, sigma), via log-sum-exp."""
    ball = lattice.ball(x, r)
    boundary = tuple(lattice.ball_boundary(ball))
    _guard(ball.beta + len(boundary), "weight ratio table")
    lw = _closure_log_weights(lattice, ball, boundary, potentials)
    top = lw.max(axis=0, keepdims=True)
    lse = top + np.log(np.exp(lw - top).sum(axis=0, keepdims=True))
    return ConditionalTable(ball, boundary, np.exp(lw - lse))


def weight_ratio_conditional(
    pattern: LocalPattern,
    boundary: Union[Mapping, Sequence[int]],
    potentials: Potentials,
    lattice: TorusLattice,
    x=0,
) -> float:
    """Conditional probability of the pattern on B(x, r) given the boundary, from weights alone."""
    pattern.check_lattice(lattice)
    ball = lattice.ball(x, pattern.radius)
    _guard(ball.beta, "weight ratio conditional")
    bverts = tuple(lattice.ball_boundary(ball))
    sigma = _boundary_code(boundary, bverts, lattice)
    local = {v: i for i, v in enumerate(ball.members)}
    sig_pos = {v for j, v in enumerate(bverts) if (sigma >> j) & 1}
    t = lattice.neighbor_table
    inner = sorted({(local[v], local[int(w)]) for v in ball.members for w in t[v] if int(w) in local and v < int(w)})
    # number of positive boundary neighbours of each ball vertex
    cross = np.array([sum(1 for w in t[v] if int(w) in sig_pos) for v in ball.members], dtype=np.int64)
    k_sig = len(sig_pos)
    sig_edges = sum(1 for v in sig_pos for w in t[v] if int(w) in sig_pos and v < int(w))
    codes = np.arange(1 << ball.beta, dtype=np.uint64)
    one = np.uint64(1)
    bits = np.stack([((codes >> np.uint64(j)) & one).astype(np.int64) for j in range(ball.beta)])
    k = bits.sum(axis=0) + k_sig
    npos = sig_edges + cross @ bits
    for i, j in inner:
        npos = npos + (bits[i] & bits[j])
    lw = 2.0 * potentials.a * k - 2.0 * potentials.b * (lattice.V * k - 2 * npos)
    top = lw.max()
    lse = top + math.log(float(np.exp(lw - top).sum()))
    return math.exp(float(lw[pattern_code(pattern, ball)]) - lse)


def local_energy(set_v, zeta: Mapping, potentials: Potentials, lattice: TorusLattice) -> float:
    """H^V(zeta): field term over V plus pair terms of every edge touching V (once each).

    ``zeta`` maps vertices of V and of its outer boundary to +1/-1.
    """
    V = {lattice.index(v) for v in set_v}
    z = {lattice.index(v): s for v, s in zeta.items()}
    closure = V | set(lattice.boundary(V))
    missing = closure - set(z)
    if missing:
        raise ValueError(f"zeta must be defined on the closure of V; missing {sorted(missing)}")
    t = lattice.neighbor_table
    field = sum(z[y] for y in V)
    pair = 0
    for y in V:
        for w in t[y]:
            w = int(w)
            if w in V and w < y:
                continue
            pair += z[y] * z[w]
    return potentials.a * field + potentials.b * pair


def is_increasing(stat: Statistic, num_sites: int) -> bool:
    """Check f(s) <= f(s + plus at i) for every state and site (enumerative)."""
    _guard(num_sites, "monotonicity check")
    states = np.arange(1 << num_sites, dtype=np.uint64)
    fs = np.asarray(stat(states), dtype=np.float64)
    for i in range(num_sites):
        bit = np.uint64(1 << i)
        low = states[(states & bit) == 0]
        if np.any(fs[low.astype(np.int64)] > fs[(low | bit).astype(np.int64)]):
            return False
    return True


def fkg_covariance(
    lattice: TorusLattice,
    potentials: Potentials,
    f: Statistic,
    g: Statistic,
    threads: int = 1,
    check_monotone: bool = True,
) -> float:
    """E[fg] - E[f]E[g] under the exact measure, for increasing f and g."""
    N = lattice.num_sites
    if N > 20:
        raise EnumerationLimitError(f"FKG covariance limited to 20 sites, got {N}")
    if check_monotone and not (is_increasing(f, N) and is_increasing(g, N)):
        raise ValueError("FKG covariance requires increasing statistics")
    ef, eg, efg = expectations(lattice, potentials, [f, g, lambda s: f(s) * g(s)], threads)
    return float(efg - ef * eg)


def pair_sum_upper(
    lattice: TorusLattice, potentials: Potentials, pattern: LocalPattern, threads: int = 1
) -> float:
    """E[sum over ordered x1 != x2 of upper indicators I_x1 * I_x2], by explicit pair loop."""
    _, pos = _masks(pattern, lattice)
    N = lattice.num_sites

    def reduce(states, w):
        ind = [((states & m) == m).astype(np.float64) for m in pos]
        total = np.zeros(states.shape, dtype=np.float64)
        for i in range(N):
            for j in range(N):
                if i != j:
                    total += ind[i] * ind[j]
        return np.array([np.dot(w, total)])

    return float(_enumerate(lattice, potentials, reduce, threads)[1][0])


def markov_violation(lattice: TorusLattice, potentials: Potentials, r: int, x=0) -> float:
    """Largest change of mu(ball | boundary) under extra conditioning on the outside."""
    N = lattice.num_sites
    if N > 16:
        raise EnumerationLimitError("Markov check limited to 16 sites")
    ball = lattice.ball(x, r)
    boundary = tuple(lattice.ball_boundary(ball))
    rest = tuple(v for v in range(N) if v not in ball.member_set and v not in boundary)
    states = np.arange(1 << N, dtype=np.uint64)
    lw = log_weights(states, lattice, potentials)
    w = np.exp(lw - lw.max())
    shape = (1 << len(rest), 1 << len(boundary), 1 << ball.beta)
    code = (_bits_of(states, rest) << (len(boundary) + ball.beta)) | (_bits_of(states, boundary) << ball.beta) | _bits_of(states, ball.members)
    table = np.bincount(code, weights=w, minlength=int(np.prod(shape))).reshape(shape)
    full = table / table.sum(axis=2, keepdims=True)
    marg = table.sum(axis=0)
    marg = marg / marg.sum(axis=1, keepdims=True)
    return float(np.max(np.abs(full - marg[None, :, :])))
