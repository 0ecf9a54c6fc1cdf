"""Systematic-scan heat-bath (Glauber) sampler for the torus Ising measure.

Randomness: chain ``i`` of a run with seed ``s`` draws its uniforms from
``numpy.random.PCG64(numpy.random.SeedSequence(s, spawn_key=(i,)))``, i.e. the
i-th child of ``SeedSequence(s).spawn(chains)``.  Each sweep consumes exactly
``num_sites`` uniforms, in vertex order; uniform-random initialization consumes
``num_sites`` more before the first sweep.  The output therefore depends only
on (lattice, potentials, pattern, config), never on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numba import njit

from .gibbs_exact import state_log_weight
from .lattice import TorusLattice
from .patterns import LocalPattern, Potentials, pattern_tables

INITS = ("all-minus", "all-plus", "uniform-random")

_BLOCK_UNIFORMS = 1 << 20


def heat_bath_probability(local_field_sum: float, potentials: Potentials) -> float:
    """P(sigma(x) = + | neighbours) = 1 / (1 + exp(-2 (a + b * sum of neighbour spins)))."""
    t = 2.0 * (potentials.a + potentials.b * local_field_sum)
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass(frozen=True)
class ChainConfig:
    sweeps: int
    burn_in: Optional[int] = None
    thin: int = 1
    chains: int = 1
    seed: int = 0
    init: str = "all-minus"

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        if self.chains < 1:
            raise ValueError("chains must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.burn_in is not None and self.retained < 1:
            raise ValueError(
                f"no retained samples: sweeps={self.sweeps}, burn_in={self.burn_in}, thin={self.thin}"
            )

    @property
    def retained(self) -> int:
        return (self.sweeps - (self.burn_in or 0)) // self.thin

    def resolve(self, lattice: TorusLattice) -> "ChainConfig":
        """Fill the default burn-in, max(1000, 20 n) sweeps (a heuristic, not a mixing bound)."""
        if self.burn_in is not None:
            return self
        return replace(self, burn_in=max(1000, 20 * lattice.n))


@dataclass(frozen=True)
class ChainResult:
    samples: np.ndarray  # (chains, retained, 2): columns are X_n and the upper count
    config: ChainConfig

    @property
    def x(self) -> np.ndarray:
        return self.samples[:, :, 0].ravel()

    @property
    def upper(self) -> np.ndarray:
        return self.samples[:, :, 1].ravel()


@njit(cache=True, nogil=True)
def _advance(spins, nbr, p_plus, V, u, ball, target, pos, thin, phase, out, filled):
    n_sweeps, N = u.shape
    for s in range(n_sweeps):
        for i in range(N):
            h = 0
            for j in range(nbr.shape[1]):
                h += spins[nbr[i, j]]
            spins[i] = 1 if u[s, i] < p_plus[h + V] else -1
        if thin == 0:
            continue
        phase += 1
        if phase == thin:
            phase = 0
            x = 0
            xu = 0
            for c in range(ball.shape[0]):
                ok = True
                for j in range(ball.shape[1]):
                    if spins[ball[c, j]] != target[j]:
                        ok = False
                        break
                if ok:
                    x += 1
                ok = True
                for j in range(pos.shape[1]):
                    if spins[pos[c, j]] != 1:
                        ok = False
                        break
                if ok:
                    xu += 1
            out[filled, 0] = x
            out[filled, 1] = xu
            filled += 1
    return phase, filled


def chain_rng(seed: int, chain_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chain_index,))))


def _run_one(lattice, potentials, pattern, config, chain_index):
    N = lattice.num_sites
    V = lattice.V
    rng = chain_rng(config.seed, chain_index)
    nbr = np.ascontiguousarray(lattice.neighbor_table, dtype=np.int64)
    tab = pattern_tables(pattern, lattice)
    ball = np.ascontiguousarray(tab.ball, dtype=np.int64)
    pos = np.ascontiguousarray(tab.positives, dtype=np.int64)
    target = np.ascontiguousarray(tab.target, dtype=np.int8)
    p_plus = np.array([heat_bath_probability(h, potentials) for h in range(-V, V + 1)])
    if config.init == "all-minus":
        spins = -np.ones(N, dtype=np.int8)
    elif config.init == "all-plus":
        spins = np.ones(N, dtype=np.int8)
    else:
        spins = np.where(rng.random(N) < 0.5, 1, -1).astype(np.int8)
    out = np.zeros((config.retained, 2), dtype=np.int64)
    block = max(1, _BLOCK_UNIFORMS // N)
    phase = filled = 0
    n_record = config.retained * config.thin
    for stage, total, thin in (("burn", config.burn_in, 0), ("record", n_record, config.thin)):
        done = 0
        while done < total:
            s = min(block, total - done)
            u = rng.random((s, N))
            phase, filled = _advance(spins, nbr, p_plus, V, u, ball, target, pos, thin, phase, out, filled)
            done += s
    return out


def run_chain(
    lattice: TorusLattice,
    potentials: Potentials,
    pattern: LocalPattern,
    config: ChainConfig,
    threads: int = 1,
) -> ChainResult:
    """Run ``config.chains`` independent chains and record (X_n, upper count) per retained sweep.

    Sweeps left over when ``sweeps - burn_in`` is not a multiple of ``thin`` are not run.
    """
    pattern.check_lattice(lattice)
    config = config.resolve(lattice)
    if config.retained < 1:
        raise ValueError("no retained samples")
    args = [(lattice, potentials, pattern, config, i) for i in range(config.chains)]
    if threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: _run_one(*a), args))
    else:
        parts = [_run_one(*a) for a in args]
    return ChainResult(np.stack(parts), config)


def detailed_balance_residual(
    lattice: TorusLattice, potentials: Potentials, trials: int = 1000, seed: int = 0
) -> float:
    """Max |log mu(s) P(s -> s') - log mu(s') P(s' -> s)| over random single-site flips."""
    rng = np.random.default_rng(seed)
    N = lattice.num_sites
    t = lattice.neighbor_table
    worst = 0.0
    for _ in range(trials):
        s = np.where(rng.random(N) < 0.5, 1, -1)
        i = int(rng.integers(N))
        s2 = s.copy()
        s2[i] = -s[i]
        h = int(s[t[i]].sum())  # neighbours are unchanged by the flip
        p = heat_bath_probability(h, potentials)
        p_to = p if s2[i] == 1 else 1.0 - p
        p_back = p if s[i] == 1 else 1.0 - p
        lhs = state_log_weight(s, lattice, potentials) + math.log(p_to)
        rhs = state_log_weight(s2, lattice, potentials) + math.log(p_back)
        worst = max(worst, abs(lhs - rhs))
    return worst
