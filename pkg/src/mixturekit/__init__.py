"""Homogeneity testing for Gaussian location mixtures.

The nonparametric (Kiefer-Wolfowitz) likelihood ratio test, its simulated
asymptotic critical values, the C(alpha) score test and the Monte Carlo
machinery to compare them.
"""

__version__ = "0.1.0"

from .asymcrit import CritSimConfig, CritTable, critical_values, moment_matrix, simulate_D
from .exceptions import (
    ConvergenceError,
    DegenerateSampleError,
    EmptySupportError,
    InfeasibleProblemError,
    InvalidArgumentError,
    MixtureKitError,
    NumericDomainError,
    ReplicationError,
)
from .experiments import (
    MixingFamily,
    PowerConfig,
    PowerTable,
    SizeConfig,
    SizeTable,
    calibrate_null,
    draw_mixture_sample,
    power_experiment,
    size_experiment,
)
from .homogeneity import (
    TestResult,
    calpha_general,
    calpha_test,
    calpha_zn,
    chibar_critical,
    kw_lrt,
    ks_stat,
    parametric_lrt,
)
from .model import (
    GAUSSIAN,
    GaussianLocation,
    Grid,
    MixingMeasure,
    Sample,
    bin_sample,
    build_grid,
    likelihood_matrix,
    log_likelihood,
    mixture_density,
    read_sample,
)
from .montecarlo import empirical_quantile
from .npmle import NpmleFit, duality_gap, em_npmle, extract_support, solve_npmle
from .qpsolve import QPProblem, QPSolution, solve_nn_qp
