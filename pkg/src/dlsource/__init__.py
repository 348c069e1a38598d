"""Source recovery for diffusion-logistic spread from integral observations.

The package solves the forward reaction-diffusion problem, generates
integral-type synthetic data, and inverts for the discrete initial source by
minimizing a Tikhonov-regularized misfit with a tensor-train grid search.
"""

from .model import (
    DEFAULT_BOUNDS,
    Constant,
    ExpDecay,
    Grid,
    GrowthRate,
    ModelParams,
    SourceParam,
    Tabulated,
    build_knots,
    err_metric,
    spline_coefficients,
    spline_phi,
)
from .forward import (
    DivergenceError,
    Field,
    GridAlignmentError,
    StabilityError,
    build_grid,
    observe,
    solve,
    solve_phi,
    stability_check,
)
from .observation import (
    DataSet,
    DatasetFormatError,
    ObservationSpec,
    add_noise,
    generate_exact,
    load,
    reference_dataset,
    save,
)
from .tikhonov import TikhonovConfig, TikhonovFunctional, evaluate, misfit, penalty
from .ttopt import (
    ObjectiveEvaluationError,
    SubmatrixSelectionError,
    TTConfig,
    TTResult,
    discretize,
    maxvol,
    optimize,
)
from .experiments import (
    DEFAULT_ALPHAS,
    DEFAULT_Q_EX,
    RunRecord,
    ScenarioConfig,
    cmd_alpha_sweep,
    cmd_apriori,
    cmd_forward,
    cmd_generate_data,
    cmd_invert,
    cmd_noise_table,
    run_inversion,
    write_phi_csv,
    write_runs_csv,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ALPHAS",
    "DEFAULT_BOUNDS",
    "DEFAULT_Q_EX",
    "Constant",
    "DataSet",
    "DatasetFormatError",
    "DivergenceError",
    "ExpDecay",
    "Field",
    "Grid",
    "GridAlignmentError",
    "GrowthRate",
    "ModelParams",
    "ObjectiveEvaluationError",
    "ObservationSpec",
    "RunRecord",
    "ScenarioConfig",
    "SourceParam",
    "StabilityError",
    "SubmatrixSelectionError",
    "TTConfig",
    "TTResult",
    "Tabulated",
    "TikhonovConfig",
    "TikhonovFunctional",
    "add_noise",
    "build_grid",
    "build_knots",
    "cmd_alpha_sweep",
    "cmd_apriori",
    "cmd_forward",
    "cmd_generate_data",
    "cmd_invert",
    "cmd_noise_table",
    "discretize",
    "err_metric",
    "evaluate",
    "generate_exact",
    "load",
    "maxvol",
    "misfit",
    "observe",
    "optimize",
    "penalty",
    "reference_dataset",
    "run_inversion",
    "save",
    "solve",
    "solve_phi",
    "spline_coefficients",
    "spline_phi",
    "stability_check",
    "write_phi_csv",
    "write_runs_csv",
]
