"""Ising model on the discrete torus and Poisson approximation of local-pattern counts."""

from .asymptotics import (
    Schedule,
    check_hypotheses,
    mean_sandwich_constant,
    schedule_example34,
    schedule_for_pattern,
    schedule_solve_a,
    stein_chen_rhs,
)
from .gibbs_exact import exact_conditional, exact_joint_law, exact_law, weight_ratio_conditional
from .lattice import TorusLattice, build_lattice
from .patterns import (
    LocalPattern,
    Potentials,
    count_occurrences,
    count_upper,
    load_pattern,
    maximality_probability,
    pattern_report,
    probability_gap,
)
from .sampler import ChainConfig, run_chain
from .stats import CountDistribution, convergence_table, poisson_pmf, tv_distance

__version__ = "0.1.0"
