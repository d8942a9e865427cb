"""Semi-parametric robot dynamics.

A rigid-body model whose inertial parameters adapt online, plus an
incremental Gaussian mixture that learns the residual torque and is
transformed whenever the parameters move so the two stay consistent.
"""
from .chain import (
    KinematicChain,
    batch_param_product,
    batch_param_product_partials,
    forward_dynamics,
    inverse_dynamics,
    load_chain,
    mass_matrix,
    reference_torque,
    regressor,
    regressor_param_product_partials,
)
from .adaptive import (
    AdaptiveGains,
    ParametricState,
    bgf_gain_update,
    composite_update,
    control_law,
    filter_step,
    resolved_rates,
)
from .mixture import GaussianComponent, MixtureModel, gmr_predict, igmm_update, prune
from .consistency import transform_component, transform_model, residual_target
from .metrics import nmse

__all__ = [
    "KinematicChain", "load_chain", "inverse_dynamics", "reference_torque", "regressor",
    "mass_matrix", "forward_dynamics", "regressor_param_product_partials",
    "batch_param_product", "batch_param_product_partials",
    "AdaptiveGains", "ParametricState", "resolved_rates", "filter_step", "composite_update",
    "bgf_gain_update", "control_law",
    "GaussianComponent", "MixtureModel", "gmr_predict", "igmm_update", "prune",
    "transform_component", "transform_model", "residual_target", "nmse",
]
