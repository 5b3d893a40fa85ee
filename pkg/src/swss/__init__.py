"""Safety staffing analysis of tree-structured multiclass multi-pool networks."""

from .errors import *  # noqa: F401,F403
from .network import (  # noqa: F401
    FluidSolution,
    Model,
    NetworkSpec,
    NthSystemParams,
    ValidatedNetwork,
    derive_hat_params,
    load_spec,
    nth_system,
    solve_fluid,
    validate_topology,
)
from .gains import (  # noqa: F401
    GainTable,
    SwssResult,
    class_headroom,
    compute_gains,
    compute_swss,
    compute_swss_nth,
    lp_oracle,
    reallocate,
)
from .drift import (  # noqa: F401
    DriftModel,
    build_drift,
    build_drift_nth,
    eval_drift,
    gains_from_B1,
    vertex_margin,
    solve_psi,
    swss_from_drift,
)

__version__ = "0.1.0"
