"""Sparse Bayesian discovery of Lagrangians from trajectory and field data.

The pipeline is: simulate or load data, build a candidate dictionary, apply
the Euler-Lagrange operator column by column, select terms with a
spike-and-slab Gibbs sampler, then derive the Hamiltonian and equations of
motion and integrate them for prediction.
"""

from ._core import BACKEND
from .data import (
    Boundary,
    DatasetError,
    FieldDataset,
    NoiseSpec,
    TrajectoryDataset,
    add_noise,
    load_dataset,
    save_dataset,
    smooth_dataset,
    spatial_derivatives,
    time_derivative,
)
from .dictionary import (
    PRESETS,
    CandidateFunction,
    Dictionary,
    DictionaryConfig,
    EulerLagrangeLibrary,
    Kind,
    build_dictionary,
    euler_lagrange_apply,
    extract_regression,
    prune_null_columns,
)
from .discovery import (
    DiscoveredLagrangian,
    LagrangianTerm,
    aggregate_shared_terms,
    discover,
    relative_l2_error,
)
from .sbl import DegenerateChainError, GibbsChain, Hyperparameters, fb_initialize, run_gibbs
from .systems import SystemName, SystemSpec, paper_spec, simulate, true_lagrangian
from .transforms import (
    EquationOfMotion,
    HamiltonianExpression,
    equations_of_motion,
    generalize_chain,
    hamiltonian_drift,
    legendre_transform,
    posterior_predict_band,
    predict,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Boundary",
    "CandidateFunction",
    "DatasetError",
    "DegenerateChainError",
    "Dictionary",
    "DictionaryConfig",
    "DiscoveredLagrangian",
    "EquationOfMotion",
    "EulerLagrangeLibrary",
    "FieldDataset",
    "GibbsChain",
    "HamiltonianExpression",
    "Hyperparameters",
    "Kind",
    "LagrangianTerm",
    "NoiseSpec",
    "PRESETS",
    "SystemName",
    "SystemSpec",
    "TrajectoryDataset",
    "add_noise",
    "aggregate_shared_terms",
    "build_dictionary",
    "discover",
    "equations_of_motion",
    "euler_lagrange_apply",
    "extract_regression",
    "fb_initialize",
    "generalize_chain",
    "hamiltonian_drift",
    "legendre_transform",
    "load_dataset",
    "paper_spec",
    "posterior_predict_band",
    "predict",
    "prune_null_columns",
    "relative_l2_error",
    "run_gibbs",
    "save_dataset",
    "simulate",
    "smooth_dataset",
    "spatial_derivatives",
    "time_derivative",
    "true_lagrangian",
]
