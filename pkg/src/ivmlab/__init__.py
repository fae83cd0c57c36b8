"""Simulation and analysis laboratory for the incremental voter model.

Three layers: exact event-driven simulation of the finite-population chain
(`ivmlab.abm`), deterministic integration of its large-population limit
(`ivmlab.meanfield`), and the quantitative harness comparing the two
(`ivmlab.analysis`, `ivmlab.verify`).  The `ivmlab` CLI drives reproducible
experiments with delimited output and companion figures.
"""

from .abm import (
    AbsorptionRecord,
    EnsembleStats,
    PopulationState,
    SimConfig,
    SimResult,
    derive_seed,
    detect_absorption,
    empirical_pmf,
    run_ensemble,
    sample_initial,
    simulate_ctmc,
    simulate_meanfield_particle,
    step_embedded,
)
from .analysis import (
    BasinVerdict,
    PocResult,
    RateFit,
    classify_basin,
    consensus_gap_series,
    fit_exponential_rate,
    poc_experiment,
    verify_against_equilibrium,
    wasserstein1,
)
from .core import (
    OpinionSpace,
    Pmf,
    flip,
    is_symmetric,
    make_pmf,
    mean_opinion,
    mean_opinion_signed,
    point_mass,
    relabel_p_to_q,
    relabel_q_to_p,
    uniform_pmf,
)
from .meanfield import (
    LinearOperator,
    OdeTrajectory,
    closed_form_k1_critical,
    dirichlet_form,
    equilibria,
    equilibrium_polynomial,
    equilibrium_polynomial_root,
    integrate_rk4,
    linear_operator,
    mean_derivative,
    reduced_rhs_k1,
    rhs,
)

__version__ = "0.1.0"
