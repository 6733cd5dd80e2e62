"""L1-penalized optimal control of homogeneous neural ODEs.

Library plus experiment CLI for training piecewise-constant controls under a
running error cost, an integrated l1 control penalty and a per-step l1-ball
constraint, and for verifying the structure the theory predicts: bang-bang
temporal sparsity up to a stopping time T*, C/T decay of the error at T*,
and turnpike behavior of driftless control-affine systems.
"""

from .dynamics import (
    Activation,
    AffineField,
    DynamicsSpec,
    activation_deriv,
    check_homogeneity,
    eval_field,
    field_vjp,
)
from .integrator import (
    ControlTrajectory,
    DivergenceError,
    StateTrajectory,
    TimeGrid,
    integrate,
    rescale_control,
    zero_extend,
)
from .objective import (
    ObjectiveSpec,
    OutputMap,
    error_E,
    error_sequence,
    functional_J,
    h_bound,
    h_inverse,
    loss_eval,
    margin,
)
from .adjoint import grad_fd, grad_running, l1_subgradient
from .optimizer import (
    AdamState,
    TrainConfig,
    TrainResult,
    adam_step,
    project_l1,
    prox_l1,
    train,
)
from .analysis import (
    SparsityReport,
    TurnpikeReport,
    check_theorem_bounds,
    detect_Tstar,
    improve_control,
    saturation_profile,
    sparsity_report,
    turnpike_check,
    zero_tail_delta,
)
from .datagen import (
    Dataset,
    augment_zero,
    gen_circles,
    gen_two_gaussians,
    separability_check,
)

__version__ = "0.1.0"
