"""Numerical certification of the weighted dual Hardy inequality on finite dyadic trees.

The Bellman function ``B(F, f, A, v)`` is checked as a certificate for the
inequality node by node, and as the value function of a controlled diffusion
by Monte Carlo.
"""

from .bellman import (
    BellmanPoint,
    DomainError,
    bellman_derivatives,
    bellman_value,
    bounds_margin,
    domain_support_concavity,
    hessian_eigenvalue,
    hessian_spectrum,
    in_domain,
    lemma_scalar_phi,
    midpoint_margin,
    telescoping_replay,
)
from .control import (
    ControlPolicy,
    ControlVector,
    bequest_ext,
    dynkin_gap,
    estimate_value,
    hjb_residual,
    optimal_value_closed_form,
    payoff_density,
    simulate_path,
)
from .hardy import (
    adjointness_gap,
    ancestor_sum,
    dual_ratio,
    hardy_lhs,
    hardy_ratio,
    hardy_rhs,
    necessity_identity,
)
from .instance_io import emit_csv, emit_instance, parse_instance
from .probe import maximize_ratio, p_sweep, saturating_alpha
from .tree import (
    InstanceError,
    NodeAggregates,
    PExponent,
    TreeInstance,
    build_instance,
    compute_aggregates,
    interval_length,
    testing_margins,
)

__version__ = "0.1.0"
