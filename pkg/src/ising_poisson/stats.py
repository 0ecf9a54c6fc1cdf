"""Count distributions, total variation, and the Poisson convergence experiment."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .asymptotics import Schedule, gap_and_maximality, stein_chen_rhs
from .gibbs_exact import exact_joint_law
from .lattice import build_lattice
from .patterns import EnumerationLimitError, LocalPattern
from .sampler import ChainConfig, run_chain

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountDistribution:
    """pmf over 0..support_max; ``tail`` is the mass dropped by truncation."""

    pmf: np.ndarray
    source: str
    tail: float = 0.0
    samples: Optional[int] = None
    replicates: Optional[int] = None
    stderr: Optional[np.ndarray] = None

    @property
    def support_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))

    @property
    def variance(self) -> float:
        m = np.arange(len(self.pmf), dtype=np.float64)
        return float(np.dot((m - self.mean) ** 2, self.pmf))

    @classmethod
    def exact(cls, pmf: np.ndarray) -> "CountDistribution":
        return cls(np.asarray(pmf, dtype=np.float64), "exact")


def poisson_pmf(lam: float, tail_tol: float = 1e-12) -> CountDistribution:
    """Poisson(lam) truncated at the first K with P(X > K) < tail_tol."""
    if not lam > 0:
        raise ValueError(f"Poisson parameter must be positive, got {lam}")
    if not 0 < tail_tol <= 1e-6:
        raise ValueError(f"tail_tol must lie in (0, 1e-6], got {tail_tol}")
    kmax = int(math.ceil(lam + 50 * math.sqrt(lam) + 50))
    ks = np.arange(kmax + 1)
    sf = sps.poisson.sf(ks, lam)
    K = int(np.argmax(sf < tail_tol))
    logp = np.empty(K + 1)
    logp[0] = -lam
    if K:
        logp[1:] = -lam + np.cumsum(math.log(lam) - np.log(np.arange(1, K + 1)))
    return CountDistribution(np.exp(logp), "poisson", tail=float(sf[K]))


def _aligned(P: CountDistribution, Q: CountDistribution) -> tuple[np.ndarray, np.ndarray]:
    size = max(len(P.pmf), len(Q.pmf))
    p = np.zeros(size)
    q = np.zeros(size)
    p[: len(P.pmf)] = P.pmf
    q[: len(Q.pmf)] = Q.pmf
    return p, q


def tv_distance(P: CountDistribution, Q: CountDistribution) -> float:
    """Half the L1 distance over the union of the stored supports (sum from m = 0)."""
    p, q = _aligned(P, Q)
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def tv_budget(P: CountDistribution, Q: CountDistribution) -> float:
    """Bound on |true distance - tv_distance| caused by truncated tails."""
    return 0.5 * (P.tail + Q.tail)


def empirical_distribution(samples: Sequence[int], replicates: Optional[int] = None) -> CountDistribution:
    x = np.asarray(samples)
    if x.size == 0:
        raise ValueError("empirical distribution of an empty sample")
    if np.any(x < 0):
        raise ValueError("counts must be nonnegative")
    counts = np.bincount(x.astype(np.int64).ravel())
    N = x.size
    pmf = counts / N
    return CountDistribution(pmf, "empirical", samples=N, replicates=replicates, stderr=np.sqrt(pmf * (1 - pmf) / N))


def batch_means_stderr(x: Sequence[float], batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, dtype=np.float64)
    size = len(x) // batches
    if size < 1:
        raise ValueError("series too short for batch means")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    a: float
    b: float
    delta: float
    theta: float
    M: float
    lam: float
    lam_n: Optional[float]
    d_tv_X: float
    d_tv_Xbar: Optional[float]
    sc_bound: Optional[float]
    engine: str
    mean_X: float
    p_positive: float
    d_tv_X_Xbar: float
    d_tv_lams: Optional[float]
    samples: Optional[int] = None


def convergence_table(
    schedule: Schedule,
    pattern: LocalPattern,
    n_grid: Iterable[int],
    engine: str = "exact",
    chain_config: Optional[ChainConfig] = None,
    threads: int = 1,
) -> list[ConvergenceRow]:
    """One row per in-regime n, comparing L(X_n) with Poisson(lambda)."""
    if engine not in ("exact", "mcmc"):
        raise ValueError(f"engine must be 'exact' or 'mcmc', got {engine!r}")
    if engine == "mcmc" and chain_config is None:
        raise ValueError("the mcmc engine needs a chain configuration")
    rows = []
    for n in sorted(n_grid):
        if not schedule.in_regime(n):
            log.info("n = %d is out of regime; skipped", n)
            continue
        lattice = build_lattice(n, pattern.d, pattern.p, pattern.rho)
        pot = schedule.potentials(n)
        lam = schedule.lam_at(n)
        delta, theta = gap_and_maximality(pattern, pot, lattice)
        target = poisson_pmf(lam)
        if engine == "exact":
            if lattice.num_sites > 24:
                raise EnumerationLimitError(f"exact engine needs n^d <= 24, got {lattice.num_sites}")
            joint = exact_joint_law(lattice, pot, pattern, threads)
            lx, lu = joint.marginal("exact"), joint.marginal("upper")
            PX, PU = CountDistribution.exact(lx.pmf), CountDistribution.exact(lu.pmf)
            samples = None
            var_u = lu.variance
        else:
            res = run_chain(lattice, pot, pattern, chain_config, threads)
            PX, PU = empirical_distribution(res.x, res.config.chains), empirical_distribution(res.upper, res.config.chains)
            samples = PX.samples
            var_u = PU.variance
        lam_n = PU.mean
        if lam_n > 0:
            pl = poisson_pmf(lam_n)
            d_xbar = tv_distance(PU, pl)
            sc = stein_chen_rhs(lam_n, var_u, lattice.num_sites)
            d_lams = tv_distance(pl, target)
        else:
            d_xbar = sc = d_lams = None
        rows.append(
            ConvergenceRow(
                n=n,
                a=pot.a,
                b=pot.b,
                delta=delta,
                theta=theta,
                M=max(delta, theta),
                lam=lam,
                lam_n=lam_n,
                d_tv_X=tv_distance(PX, target),
                d_tv_Xbar=d_xbar,
                sc_bound=sc,
                engine=engine,
                mean_X=PX.mean,
                p_positive=float(PX.pmf[1:].sum()),
                d_tv_X_Xbar=tv_distance(PX, PU),
                d_tv_lams=d_lams,
                samples=samples,
            )
        )
    if not rows:
        raise ValueError("no in-regime n in the grid")
    return rows


def big_o_ratios(rows: Sequence[ConvergenceRow]) -> list[float]:
    """d_TV(L(X_n), P(lambda)) / M_n along the rows."""
    return [r.d_tv_X / r.M for r in rows]
