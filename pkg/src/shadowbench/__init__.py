"""Library and CLI workbench for hyperbolic toral dynamics: pseudo-orbit
shadowing, shadowing-closure stabilization, local-product-structure and
maximal-invariant-set computations, and exact symbolic analogs on shifts."""

from .torus import (
    FlowState,
    HyperbolicSplitting,
    NotHyperbolicError,
    ProductSystem,
    SuspensionFlow,
    ToralAutomorphism,
    TorusPoint,
    cat_map,
    compute_splitting,
    crovisier_product,
    default_product,
    golden_map,
    system_from_config,
    torus_distance,
    two_fixed_point_map,
)

__version__ = "0.1.0"
