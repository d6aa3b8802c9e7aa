"""Model-driven Bregman proximal minimization.

Library surface: Legendre kernels and Bregman distances (kernels), the
model-function contract and its samplers (models), concrete problem
families (problems), subproblem solvers (subsolve), the outer loop with
descent certificates (solver), and the experiment CLI (cli).
"""

from ._accel import COMPILED, backend_name
from .kernels import (
    DomainError,
    KernelKind,
    KernelSpec,
    bregman,
    bregman_generic,
    kernel_grad,
    kernel_hess_apply,
    kernel_value,
    three_point_residual,
)
from .models import (
    MapResidualReport,
    ModelProblem,
    SubproblemKind,
    first_order_consistency,
    growth_bound_running_example,
    map_residual_check,
    model_value,
)
from .solver import (
    CertificateReport,
    IterateTrace,
    SolverConfig,
    backtrack_L,
    descent_certificate,
    lyapunov,
    relative_error_diagnostic,
    run,
    trace_to_csv,
)
from .subsolve import (
    PdhgConfig,
    PdhgResult,
    Reg,
    SubproblemSpec,
    bpg_step_euclidean,
    bpg_step_quartic,
    oracle_minimize,
    pdhg_solve,
    poisson_step,
    prox_l1,
    quartic_radial_scale,
    subproblem_value,
)

__version__ = "0.1.0"
