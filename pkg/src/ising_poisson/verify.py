"""Self-verification suites: every bound and identity checked on tiny exact instances.

``run_suite("quick")`` runs reduced versions of each check in a few seconds;
``run_suite("full")`` runs the full-size criteria, each with its tolerance and
wall-clock budget.
"""

from __future__ import annotations

import io
import itertools
import math
import time
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .asymptotics import (
    mean_sandwich_constant,
    h2_constant,
    schedule_for_pattern,
    stein_chen_rhs,
    strict_superset_count,
)
from .gibbs_exact import (
    exact_conditional_table,
    exact_joint_law,
    fkg_covariance,
    local_energy,
    markov_violation,
    pair_sum_upper,
    upper_indicator,
    weight_ratio_conditional,
    weight_ratio_table,
)
from .lattice import TorusLattice, build_lattice
from .patterns import (
    LocalPattern,
    Potentials,
    config_log_weight,
    config_stats,
    connection,
    format_pattern,
    log_probability_gap,
    log_probability_gap_bruteforce,
    maximality_probability,
    pattern_log_weight,
    probability_gap,
)
from .sampler import ChainConfig, detailed_balance_residual, run_chain
from .stats import (
    CountDistribution,
    batch_means_stderr,
    big_o_ratios,
    convergence_table,
    empirical_distribution,
    poisson_pmf,
    tv_distance,
)

A_GRID = (-0.5, -1.0, -2.0)
B_GRID = (0.0, 0.3, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0
    budget: Optional[float] = None


def _timed(name: str, budget: Optional[float], fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    if budget is not None and elapsed > budget:
        ok = False
        detail += f"; runtime {elapsed:.1f}s exceeds {budget:.0f}s"
    return CheckResult(name, ok, detail, elapsed, budget)


def _grid(a_grid=A_GRID, b_grid=B_GRID):
    return [Potentials(a, b) for a in a_grid for b in b_grid]


def _patterns_on_ball(lattice: TorusLattice, r: int) -> list[LocalPattern]:
    offs = list(LocalPattern.null(r, lattice.d, lattice.p, lattice.rho).ball_offsets)
    out = []
    for code in range(1 << len(offs)):
        pos = [o for j, o in enumerate(offs) if (code >> j) & 1]
        out.append(LocalPattern.create(pos, r, lattice.d, lattice.p, lattice.rho))
    return out


CONDITIONAL_INSTANCES = ((8, 1, 1), (4, 2, 1))  # (n, d, p) with rho = r = 1


def check_conditional_ratio(instances=CONDITIONAL_INSTANCES, grid=None, rel_tol: float = 1e-10, threads: int = 1) -> tuple[bool, str]:
    """Full-measure conditionals equal weight ratios for every (eta, sigma)."""
    grid = grid or _grid()
    worst = 0.0
    cells = 0
    for n, d, p in instances:
        lattice = build_lattice(n, d, p, 1)
        pats = _patterns_on_ball(lattice, 1)
        for pot in grid:
            exact = exact_conditional_table(lattice, pot, 1, 0, threads)
            ratio = weight_ratio_table(lattice, pot, 1, 0)
            worst = max(worst, float(np.max(np.abs(exact.probs / ratio.probs - 1.0))))
            cells += exact.probs.size
            # the single-query path on the null and all-plus boundaries
            m = len(exact.boundary)
            for sigma in ([-1] * m, [1] * m):
                for eta in pats:
                    single = weight_ratio_conditional(eta, sigma, pot, lattice)
                    worst = max(worst, abs(single / exact.prob(eta, sigma, lattice) - 1.0))
    return worst <= rel_tol, f"max relative error {worst:.3e} over {cells} (eta, sigma) cells"


def check_conditional_bounds(instances=CONDITIONAL_INSTANCES, grid=None, threads: int = 1) -> tuple[bool, str]:
    """Lower and upper bounds on the conditional probability, for every (eta, sigma)."""
    grid = grid or _grid()
    min_lower = min_upper = math.inf
    pairs = 0
    for n, d, p in instances:
        lattice = build_lattice(n, d, p, 1)
        pats = _patterns_on_ball(lattice, 1)
        for pot in grid:
            exact = exact_conditional_table(lattice, pot, 1, 0, threads)
            boundary = exact.boundary
            n_configs = 1 << exact.ball.beta
            lw_sigma = [
                config_log_weight(lattice, [v for j, v in enumerate(boundary) if (s >> j) & 1], pot)
                for s in range(1 << len(boundary))
            ]
            for eta in pats:
                w = math.exp(pattern_log_weight(eta, pot, lattice))
                gap = probability_gap(eta, pot, lattice, verify=True)
                row = exact.probs[sum(1 << j for j, o in enumerate(exact.ball.offsets) if o in eta.positives)]
                for s, mu in enumerate(row):
                    null = s == 0
                    lower = w * (1.0 - n_configs * gap) if null else 0.0
                    upper = w if null else w * (1.0 + gap / math.exp(lw_sigma[s]))
                    min_lower = min(min_lower, mu - lower)
                    min_upper = min(min_upper, (upper - mu) / upper)
                    pairs += 1
    tol = 1e-12
    ok = min_lower >= -tol and min_upper >= -tol
    return ok, f"{pairs} pairs; min slack lower {min_lower:.3e}, min relative slack upper {min_upper:.3e}"


def check_factorization(trials: int = 1000, seed: int = 0, tol: float = 1e-12) -> tuple[bool, str]:
    """log W(zeta zeta') = log W(zeta) + log W(zeta') + 4 b conn, for random disjoint supports."""
    rng = np.random.default_rng(seed)
    geometries = [(9, 1, 1, 1), (8, 2, 1, 1), (8, 2, "inf", 1), (10, 1, 1, 2), (5, 3, 1, 1)]
    worst = 0.0
    for n, d, p, rho in geometries:
        lattice = build_lattice(n, d, p, rho)
        N = lattice.num_sites
        for _ in range(trials):
            size = int(rng.integers(2, min(N, 12) + 1))
            verts = rng.choice(N, size=size, replace=False)
            cut = int(rng.integers(1, size))
            za = {int(v): int(rng.choice([-1, 1])) for v in verts[:cut]}
            zb = {int(v): int(rng.choice([-1, 1])) for v in verts[cut:]}
            pot = Potentials(float(rng.uniform(-3, 0)), float(rng.uniform(0, 2)))
            lhs = config_log_weight(lattice, [v for z in (za, zb) for v, s in z.items() if s == 1], pot)
            rhs = (
                config_log_weight(lattice, [v for v, s in za.items() if s == 1], pot)
                + config_log_weight(lattice, [v for v, s in zb.items() if s == 1], pot)
                + 4 * pot.b * connection(za, zb, lattice)
            )
            worst = max(worst, abs(lhs - rhs))
    return worst <= tol, f"{trials} pairs x {len(geometries)} geometries; max abs error {worst:.3e}"


def check_gap_closed_form(grid=None, tol: float = 1e-12) -> tuple[bool, str]:
    """Closed-form probability gap equals the boundary enumeration on every r = 1 pattern."""
    grid = grid or _grid()
    worst = 0.0
    count = 0
    for n, d, p in ((8, 1, 1), (8, 2, 1)):
        lattice = build_lattice(n, d, p, 1)
        for eta in _patterns_on_ball(lattice, 1):
            for pot in grid:
                worst = max(worst, abs(log_probability_gap(eta, pot, lattice) - log_probability_gap_bruteforce(eta, pot, lattice)))
                count += 1
    return worst <= tol, f"{count} (pattern, potentials) cases; max log difference {worst:.3e}"


def _random_increasing(rng, N: int):
    masks = []
    for _ in range(int(rng.integers(1, 4))):
        sites = rng.choice(N, size=int(rng.integers(1, 4)), replace=False)
        masks.append(sum(1 << int(s) for s in sites))
    inds = [upper_indicator(m) for m in masks]
    return lambda states: np.maximum.reduce([f(states) for f in inds])


def check_fkg(n: int = 10, pairs: int = 200, b_values=(0.0, 0.5, 1.0), a: float = -0.5, seed: int = 0, tol: float = 1e-12, threads: int = 1) -> tuple[bool, str]:
    """Covariance of random increasing indicators is nonnegative under b >= 0."""
    rng = np.random.default_rng(seed)
    lattice = build_lattice(n, 1, 1, 1)
    worst = math.inf
    for b in b_values:
        pot = Potentials(a, b)
        for _ in range(pairs):
            f = _random_increasing(rng, lattice.num_sites)
            g = _random_increasing(rng, lattice.num_sites)
            worst = min(worst, fkg_covariance(lattice, pot, f, g, threads))
    return worst >= -tol, f"{pairs * len(b_values)} pairs; min covariance {worst:.3e}"


def _single_plus_instances(ns, lam=1.0, threads=1):
    eta = LocalPattern.single_plus(1, 1)
    schedule = schedule_for_pattern(eta, "example34", lam)
    for n in ns:
        lattice = build_lattice(n, 1, 1, 1)
        pot = schedule.potentials(n)
        yield n, eta, lattice, pot, schedule.lam_at(n), exact_joint_law(lattice, pot, eta, threads)


def check_stein_chen(ns=(8, 10, 12), threads: int = 1) -> tuple[bool, str]:
    """Exact d_TV(L(upper count), P(lambda_n)) is dominated by the Stein-Chen bound."""
    ok = True
    parts = []
    for n, eta, lattice, pot, lam, joint in _single_plus_instances(ns, threads=threads):
        lu = joint.marginal("upper")
        dist = tv_distance(CountDistribution.exact(lu.pmf), poisson_pmf(lu.mean))
        bound = stein_chen_rhs(lu.mean, lu.variance, lattice.num_sites)
        ok &= dist <= bound
        parts.append(f"n={n}: {dist:.4g} <= {bound:.4g}")
    return ok, "; ".join(parts)


def check_mean_sandwich(ns=(8, 10, 12), threads: int = 1) -> tuple[bool, str]:
    """Mean sandwich with the explicit constants, and the distance between X_n and the upper count."""
    ok = True
    parts = []
    for n, eta, lattice, pot, lam, joint in _single_plus_instances(ns, threads=threads):
        lx, lu = joint.marginal("exact"), joint.marginal("upper")
        theta = maximality_probability(eta, pot, lattice)
        delta = probability_gap(eta, pot, lattice)
        c_ball = h2_constant(lattice.ball(0, 1).members, lattice)
        slack = strict_superset_count(eta) * lam * c_ball * theta
        lam_n = lu.mean
        strict = lx.mean < lam_n < lx.mean + slack
        d_xx = tv_distance(CountDistribution.exact(lx.pmf), CountDistribution.exact(lu.pmf))
        K = float(mean_sandwich_constant(eta, lattice))
        M = max(delta, theta)
        sandwich = lam * (1 - K * M) <= lam_n <= lam * (1 + K * M)
        ok &= strict and sandwich and d_xx <= slack
        vac = " (vacuous)" if K * M >= 1 else ""
        parts.append(
            f"n={n}: E[X]={lx.mean:.6g} < lam_n={lam_n:.6g} < {lx.mean + slack:.6g}; "
            f"K={int(K)} sandwich [{lam * (1 - K * M):.4g}, {lam * (1 + K * M):.4g}]{vac}; d_TV(X, Xbar)={d_xx:.4g}"
        )
    return ok, "; ".join(parts)


def check_convergence(ns=(8, 12, 16, 20), threads: int = 1) -> tuple[bool, str]:
    """d_TV(L(X_n), P(1)) decreases strictly and stays below c * M_n with c fitted at the first n."""
    eta = LocalPattern.single_plus(1, 1)
    rows = convergence_table(schedule_for_pattern(eta, "example34", 1.0), eta, ns, threads=threads)
    d = [r.d_tv_X for r in rows]
    ratios = big_o_ratios(rows)
    decreasing = all(q < p for p, q in zip(d, d[1:]))
    bounded = all(x <= ratios[0] for x in ratios[1:])
    detail = ", ".join(f"n={r.n}: d_TV={r.d_tv_X:.5g} ratio={x:.4g}" for r, x in zip(rows, ratios))
    return decreasing and bounded, detail


def check_threshold(ns=(8, 12, 16, 20), threads: int = 1) -> tuple[bool, str]:
    """P(X_n > 0) falls when n^d W_n = n^-1/2 and rises toward 1 when n^d W_n = n^1/2."""
    eta = LocalPattern.single_plus(1, 1)
    out = {}
    for label, exponent in (("down", -0.5), ("up", 0.5)):
        sched = schedule_for_pattern(eta, "example34", lambda n, e=exponent: n**e)
        out[label] = [r.p_positive for r in convergence_table(sched, eta, ns, threads=threads)]
    down, up = out["down"], out["up"]
    ok = all(q < p for p, q in zip(down, down[1:])) and all(q > p for p, q in zip(up, up[1:]))
    fmt = lambda xs: "[" + ", ".join(f"{x:.4f}" for x in xs) + "]"
    return ok, f"P(X>0) with lambda=n^-1/2: {fmt(down)}; with lambda=n^1/2: {fmt(up)}"


def check_sampler(
    samples: int = 100_000,
    tv_tol: float = 0.02,
    z_tol: float = 4.0,
    db_tol: float = 1e-10,
    seed: int = 2024,
    threads: int = 1,
) -> tuple[bool, str]:
    """Detailed balance of the heat-bath kernel, then empirical law of X_n against the exact law."""
    lattice = build_lattice(4, 2, 1, 1)
    pot = Potentials(-1.0, 0.3)
    db = detailed_balance_residual(lattice, pot, trials=1000, seed=seed)
    eta = LocalPattern.single_plus(1, 2)
    exact = exact_joint_law(lattice, pot, eta, threads).marginal("exact")
    config = ChainConfig(sweeps=samples + 1000, burn_in=1000, seed=seed)
    res = run_chain(lattice, pot, eta, config, threads)
    emp = empirical_distribution(res.x)
    tv = tv_distance(emp, CountDistribution.exact(exact.pmf))
    se = batch_means_stderr(res.x)
    z = abs(emp.mean - exact.mean) / se
    ok = db <= db_tol and tv <= tv_tol and z <= z_tol
    return ok, (
        f"detailed balance residual {db:.2e}; {emp.samples} samples: d_TV={tv:.4g}, "
        f"mean {emp.mean:.5g} vs exact {exact.mean:.5g} ({z:.2f} batch-means SE)"
    )


# ---------------------------------------------------------------------------
# structural invariants (quick level only)


def check_lattice_invariants() -> tuple[bool, str]:
    ok = True
    for n, d, p, rho in ((8, 1, 1, 1), (8, 2, 1, 1), (9, 2, "inf", 1), (11, 2, 2, 2)):
        L = build_lattice(n, d, p, rho)
        t = L.neighbor_table
        ok &= all(x in L.neighbors(int(y)) for x in range(L.num_sites) for y in t[x])
        for r in range(0, (n - 1) // (2 * rho) + 1):
            if n <= 2 * rho * r:
                continue
            b = L.ball(0, r)
            ok &= all(L.ball(x, r).beta == b.beta and L.ball(x, r).alpha == b.alpha for x in range(0, L.num_sites, 7))
            if n > 2 * rho * (r + 1):
                ok &= set(L.ball_boundary(b)) == set(L.ball(0, r + 1).members) - set(b.members)
    return ok, "symmetry, translation invariance of balls, boundary = shell"


def _perimeter_identity_gap(lattice: TorusLattice, eta: LocalPattern) -> int:
    ball = lattice.ball(0, eta.radius)
    inside = ball.member_set
    sign = {v: (1 if o in eta.positives else -1) for v, o in zip(ball.members, ball.offsets)}
    t = lattice.neighbor_table
    internal = sum(sign[v] * sign[int(w)] for v in ball.members for w in t[v] if int(w) in inside and v < int(w))
    crossing = sum(1 + sign[v] for v in ball.members for w in t[v] if int(w) not in inside)
    _, gamma = config_stats(lattice, [v for v in ball.members if sign[v] == 1])
    return abs(2 * gamma - (ball.alpha - internal + crossing))


def check_local_identities() -> tuple[bool, str]:
    """Perimeter identity, local-energy factorization, Markov property, pair-sum second moment."""
    worst_perim = 0
    worst_energy = 0.0
    rng = np.random.default_rng(1)
    for n, d, p in ((8, 1, 1), (8, 2, 1), (8, 2, "inf")):
        L = build_lattice(n, d, p, 1)
        pats = _patterns_on_ball(L, 1)
        for eta in pats:
            worst_perim = max(worst_perim, _perimeter_identity_gap(L, eta))
        ball = L.ball(0, 1)
        bnd = L.ball_boundary(ball)
        for _ in range(50):
            eta = pats[int(rng.integers(len(pats)))]
            pot = Potentials(float(rng.uniform(-2, 1)), float(rng.uniform(0, 1)))
            sigma = {v: int(rng.choice([-1, 1])) for v in bnd}
            zeta = dict(sigma)
            zeta.update({v: (1 if o in eta.positives else -1) for v, o in zip(ball.members, ball.offsets)})
            lhs = local_energy(ball.members, zeta, pot, L) - pattern_log_weight(eta, pot, L)
            t = L.neighbor_table
            cross = sum(1 + zeta[v] * (1 + zeta[int(w)]) for v in ball.members for w in t[v] if int(w) not in ball.member_set)
            rhs = -pot.a * ball.beta + pot.b * (ball.alpha + cross)
            worst_energy = max(worst_energy, abs(lhs - rhs))
    markov = markov_violation(build_lattice(8, 1, 1, 1), Potentials(-1.0, 0.7), 1)
    L = build_lattice(8, 1, 1, 1)
    pot = Potentials(-0.8, 0.4)
    eta = LocalPattern.single_plus(1, 1)
    m2 = exact_joint_law(L, pot, eta).marginal("upper").second_factorial_moment
    pairs = pair_sum_upper(L, pot, eta)
    ok = worst_perim == 0 and worst_energy <= 1e-12 and markov <= 1e-12 and abs(m2 - pairs) <= 1e-12 * max(1.0, pairs)
    return ok, (
        f"perimeter identity max gap {worst_perim}; local energy max error {worst_energy:.2e}; "
        f"Markov violation {markov:.2e}; M2 {m2:.10g} vs pair sum {pairs:.10g}"
    )


def check_triangle(ns=(8, 10), threads: int = 1) -> tuple[bool, str]:
    """d_TV(X, P(lam)) <= d_TV(X, Xbar) + d_TV(Xbar, P(lam_n)) + d_TV(P(lam_n), P(lam))."""
    eta = LocalPattern.single_plus(1, 1)
    rows = convergence_table(schedule_for_pattern(eta, "example34", 1.0), eta, ns, threads=threads)
    ok = all(r.d_tv_X <= r.d_tv_X_Xbar + r.d_tv_Xbar + r.d_tv_lams + 1e-12 for r in rows)
    return ok, ", ".join(f"n={r.n}: {r.d_tv_X:.4g} <= {r.d_tv_X_Xbar + r.d_tv_Xbar + r.d_tv_lams:.4g}" for r in rows)


def check_determinism(threads: Sequence[int] = (1, 4)) -> tuple[bool, str]:
    """Each CLI command twice with identical flags gives identical bytes; exact output independent of threads."""
    import tempfile

    from .cli import main

    def run(argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(argv)
        return code, out.getvalue()

    with tempfile.TemporaryDirectory() as tmp:
        pat = Path(tmp) / "single.pat"
        pat.write_text(format_pattern(LocalPattern.single_plus(1, 1)))
        f = str(pat)
        commands = [
            ["pattern", "--file", f, "--a", "-1", "--b", "0.2"],
            ["schedule", "--file", f, "--lambda", "1", "--schedule", "example34", "--n-grid", "8:24:4"],
            ["exact", "--file", f, "--n", "12", "--a", "-1", "--b", "0.3", "--upper"],
            ["sample", "--file", f, "--n", "16", "--a", "-1", "--b", "0.3", "--sweeps", "3000", "--burn-in", "500", "--chains", "2", "--seed", "7"],
            ["converge", "--file", f, "--lambda", "1", "--schedule", "example34", "--n-grid", "8:16:4", "--engine", "exact", "--format", "csv"],
            ["converge", "--file", f, "--lambda", "1", "--schedule", "fixed_b", "--b-fixed", "0.2", "--n-grid", "8:12:4",
             "--engine", "mcmc", "--sweeps", "2000", "--burn-in", "200", "--seed", "3", "--format", "tsv"],
        ]
        bad = []
        for cmd in commands:
            first = run(cmd + ["--threads", str(threads[0])])
            again = run(cmd + ["--threads", str(threads[0])])
            if first != again or first[0] != 0:
                bad.append(" ".join(cmd[:1]) + " (repeat)")
            if cmd[0] in ("exact", "converge", "sample"):
                for t in threads[1:]:
                    if run(cmd + ["--threads", str(t)]) != first:
                        bad.append(f"{cmd[0]} (threads={t})")
    return not bad, "all byte-identical" if not bad else "mismatch: " + ", ".join(bad)


# criteria: (name, budget seconds, full-size check, quick check)
CRITERIA = [
    ("1 conditional equals weight ratio", 60, lambda t: check_conditional_ratio(threads=t),
     lambda t: check_conditional_ratio(grid=[Potentials(-1.0, 0.3)], threads=t)),
    ("2 conditional probability sandwich", 60, lambda t: check_conditional_bounds(threads=t),
     lambda t: check_conditional_bounds(grid=[Potentials(-1.0, 0.3)], threads=t)),
    ("3 weight factorization", 10, lambda t: check_factorization(), lambda t: check_factorization(trials=100)),
    ("4 probability gap closed form", 30, lambda t: check_gap_closed_form(),
     lambda t: check_gap_closed_form(grid=[Potentials(-1.0, 1.0)])),
    ("5 FKG covariance", 120, lambda t: check_fkg(threads=t), lambda t: check_fkg(n=8, pairs=20, threads=t)),
    ("6 Stein-Chen domination", 60, lambda t: check_stein_chen(threads=t), lambda t: check_stein_chen((8,), threads=t)),
    ("7 mean sandwich constants", 60, lambda t: check_mean_sandwich(threads=t), lambda t: check_mean_sandwich((8,), threads=t)),
    ("8 convergence trend", 600, lambda t: check_convergence(threads=t), lambda t: check_convergence((8, 10, 12), threads=t)),
    ("9 threshold behaviour", 600, lambda t: check_threshold(threads=t), lambda t: check_threshold((8, 10, 12), threads=t)),
    ("10 sampler validity", 300, lambda t: check_sampler(threads=t),
     lambda t: check_sampler(samples=20_000, tv_tol=0.03, threads=t)),
]

STRUCTURAL = [
    ("lattice invariants", check_lattice_invariants),
    ("local identities", check_local_identities),
    ("triangle assembly", lambda: check_triangle()),
]


def run_suite(level: str = "quick", threads: int = 1, include_determinism: bool = False) -> list[CheckResult]:
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    results = [_timed(name, None, fn) for name, fn in STRUCTURAL]
    for name, budget, full, quick in CRITERIA:
        fn = full if level == "full" else quick
        results.append(_timed(name, budget if level == "full" else None, lambda: fn(threads)))
    if include_determinism:
        results.append(_timed("11 determinism", None, check_determinism))
    return results
