"""Data-driven reachable tube estimation with scenario-based certificates."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    BallTube,
    FixedEllipsoidTube,
    InputError,
    LogdetEllipsoidTube,
    PerturbationModel,
    SizeReport,
    Trajectory,
    TrajectoryBatch,
    TubeParams,
    ZonotopeTube,
    margin,
    perturbation_vertices,
    size_proxy,
    size_report,
    trajectory_margin,
)
from .fit import (  # noqa: F401
    DefaultShapes,
    FitConfig,
    FitError,
    FitResult,
    default_shapes,
    fit,
    fit_ball_radius,
    fit_ball_volume,
    fit_ellipsoid_fixed,
    fit_ellipsoid_logdet,
    fit_zonotope,
)
from .certify import (  # noqa: F401
    Certificate,
    ComplexityReport,
    adversarial_complexity,
    certificate,
    epsilon_roots,
    gaussian_w2_bound,
    ood_bound,
)
from .simulate import (  # noqa: F401
    BenchmarkConfig,
    DiagonalGaussian,
    UniformBox,
    ValidationReport,
    coverage_experiment,
    empirical_adv_violation,
    empirical_violation,
    ood_experiment,
    preset,
    rho_sweep,
    simulate_benchmark,
)
