"""Certificates, step sizes and iteration engines for averaged fixed-point methods
under diagonally weighted infinity norms."""

from .certify import (
    EwcCertificate,
    InfeasibleError,
    StepSizePlan,
    check_contractive,
    check_ewc,
    check_order_preserving,
    check_strong_monotone,
    check_subhomogeneous,
    check_weak_contractive,
    find_weight,
    krasnoselskij_plan,
    min_b,
    monotone_baseline_plan,
    optimize_rate,
)
from .consensus import (
    Digraph,
    EdgeRule,
    MasModel,
    build_mas_operator,
    consensus_step_bound,
    has_globally_reachable_node,
    simulate_consensus,
)
from .iterate import IterationConfig, IterationTrace, forward_step, krasnoselskij, verify_contraction_rate
from .matnorm import (
    metzler_majorant,
    nonneg_majorant,
    perron,
    weighted_inf_norm_mat,
    weighted_inf_norm_vec,
)
from .operators import (
    AffineOp,
    DiagNonlinAffineOp,
    JacobianEnvelope,
    LeakyReLU,
    PiecewiseLinear,
    SectorBounds,
    diag_lower,
    evaluate,
    jacobian_envelope,
    leaky_relu,
)

__version__ = "0.1.0"
