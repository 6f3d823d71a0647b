"""Spectral Galerkin simulation of the stochastic constrained modified
Swift-Hohenberg equation on the unit sphere of L2, with verification tools."""

from .spectral import (
    DimensionError,
    SpectralField,
    SpectralSpace,
    apply_A,
    from_physical,
    inner_H,
    inner_V,
    norm_E,
    norm_H,
    norm_L2n,
    norm_V,
    pointwise_power,
    read_checkpoint,
    semigroup_apply,
    seminorm_h10,
    seminorm_h20,
    to_physical,
    write_checkpoint,
)
from .manifold import (
    diffusion_B,
    frechet_dB,
    gamma_identity_residuals,
    ito_correction_m,
    project_tangent,
)
from .dynamics import (
    BlowUpError,
    DriftParams,
    NoiseModel,
    PathNormTracker,
    SchemeConfig,
    nonlinear_F,
    projected_drift,
    step_em_ito,
    step_heun_strat,
    theta,
    theta_m,
    xnorm_update,
)
from .diagnostics import (
    TrajectoryDiagnostics,
    energy_identity_residuals,
    energy_pairing,
    energy_Y,
    eta_coefficients,
    eta_value,
    ito_energy_decomposition,
    khashminskii_report,
)
from .trajectory import picard_solve, run_trajectory
from .montecarlo import (
    EnsembleConfig,
    consistency_gap_estimate,
    eta_order_estimate,
    run_ensemble,
    strong_order_estimate,
)
from .wiener import coarsen, generate_path

__version__ = "0.1.0"
