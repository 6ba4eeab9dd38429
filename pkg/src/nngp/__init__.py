"""Gaussian processes equivalent to infinitely wide deep networks.

The pieces, bottom up: :mod:`nngp.lookup` precomputes the two-point Gaussian
expectation of a nonlinearity on a (variance, correlation) grid;
:mod:`nngp.kernel` composes it into the deep-network kernel;
:mod:`nngp.regression` does exact Bayesian prediction from that kernel;
:mod:`nngp.phase` analyzes the recurrence's fixed points and critical line;
:mod:`nngp.finite_width` validates the infinite-width limit by Monte Carlo;
:mod:`nngp.data` and :mod:`nngp.experiment` handle datasets and end-to-end
runs. See demos/ for worked examples of each capability.
"""

from .activations import ACTIVATIONS, Activation, get_activation
from .data import (
    DataFormatError,
    Dataset,
    load_cifar10_binary,
    load_csv,
    load_mnist_idx,
    preprocess,
    synthetic_blobs,
)
from .experiment import RunConfig, build_dataset, find_mnist, run_experiment
from .finite_width import (
    FiniteNetSample,
    NormalityStats,
    gaussianity_check,
    sample_empirical_kernel,
)
from .kernel import (
    AngularProfile,
    KernelMatrix,
    NetworkHyperparams,
    analytic_relu_step,
    angular_profile,
    base_kernel,
    build_kernel_matrix,
    iter_kernel_layers,
    sample_prior,
    step_kernel,
)
from .lookup import (
    GridParameterError,
    LookupTable,
    NonFiniteActivationError,
    QuadratureGrid,
    TableRangeError,
    build_grid,
    default_grid,
    expectation_direct,
    interpolate,
    load_or_build,
    load_table,
    populate,
    save_table,
)
from .phase import (
    HeatmapSweep,
    PhaseDiagnostics,
    chi1_at,
    correlation_fixed_point,
    critical_line,
    diagnose,
    heatmap_sweep,
    variance_fixed_point,
)
from .regression import (
    FactorizationError,
    PosteriorPrediction,
    calibration_bins,
    evaluate,
    posterior,
)

__version__ = "0.1.0"
