"""Outer loop of model-driven Bregman proximal minimization.

Each iteration minimizes the model around the current iterate plus a
Bregman proximity term, with step size tau < 1/L_upper.  Progress is
tracked through the Lyapunov value model(x; center) + L_upper * D_h and
certified after the fact by descent_certificate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .kernels import assert_interior, bregman, kernel_grad, kernel_hess_apply
from .models import ModelProblem, SubproblemKind, model_value
from .subsolve import (
    PdhgConfig,
    StepTooLargeError,
    SubsolverError,
    bpg_step_euclidean,
    bpg_step_quartic,
    pdhg_solve,
    poisson_step,
)

__all__ = [
    "SolverConfig",
    "IterateTrace",
    "CertificateReport",
    "SolverError",
    "BacktrackError",
    "UnsupportedModelError",
    "lyapunov",
    "run",
    "backtrack_L",
    "descent_certificate",
    "certificate_slack",
    "relative_error_diagnostic",
    "trace_to_csv",
    "CSV_HEADER",
]

CSV_HEADER = "iter,time_s,f,lyapunov,breg_step,L_k,tau_k,inner_residual"

_MAX_TAU_HALVINGS = 60
_MAX_BACKTRACK_SCALINGS = 60


class SolverError(RuntimeError):
    """Outer solve failed; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class BacktrackError(RuntimeError):
    """Backtracking exhausted its scaling budget (constant misconfigured)."""


class UnsupportedModelError(RuntimeError):
    """The requested diagnostic needs data this model family lacks."""


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    tau_fraction in (0, 1) sets tau = tau_fraction / L_upper, keeping the
    descent gap 1/tau - L_upper positive.  record_time=False zeroes the
    wall-clock column so replays are byte identical.
    """

    tau_fraction: float = 0.99
    max_iters: int = 1000
    move_tol: float = 1e-9
    backtracking: bool = False
    nu: float = 2.0
    L_init: Optional[float] = None
    seed: int = 0
    inner: PdhgConfig = field(default_factory=PdhgConfig)
    store_iterates: bool = True
    record_time: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau_fraction < 1.0:
            raise ValueError("tau_fraction must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.move_tol < 0.0:
            raise ValueError("move_tol must be nonnegative")
        if not self.nu > 1.0:
            raise ValueError("nu must exceed 1")
        if self.L_init is not None and not self.L_init > 0.0:
            raise ValueError("L_init must be positive")


@dataclass
class IterateTrace:
    """Per-iteration log; row 0 is the initial point, row k the k-th update."""

    problem: str
    time_s: np.ndarray
    f: np.ndarray
    lyapunov: np.ndarray
    breg_step: np.ndarray
    L_k: np.ndarray
    tau_k: np.ndarray
    inner_residual: np.ndarray
    xs: Optional[List[np.ndarray]] = None

    def __len__(self) -> int:
        return self.f.shape[0]

    @property
    def final_x(self) -> np.ndarray:
        if self.xs is None:
            raise ValueError("iterate snapshots were not stored")
        return self.xs[-1]


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of the three descent inequalities over a trace."""

    passed: bool
    function_descent_ok: bool
    lyapunov_descent_ok: bool
    complexity_ok: bool
    worst_function_margin: float
    worst_lyapunov_margin: float
    complexity_margin: float
    slack: float

    def as_items(self):
        return [
            ("function_descent", self.function_descent_ok, self.worst_function_margin),
            ("lyapunov_descent", self.lyapunov_descent_ok, self.worst_lyapunov_margin),
            ("complexity_bound", self.complexity_ok, self.complexity_margin),
        ]


def lyapunov(p: ModelProblem, x, center, L_bar: float) -> float:
    """Model value at x around the center plus L_bar times the Bregman step."""
    return model_value(p, x, center) + L_bar * bregman(p.kernel, x, center)


def _solve_at(p: ModelProblem, center: np.ndarray, tau: float, cfg: SolverConfig,
              warm_dual: Optional[np.ndarray], iteration: int):
    """One subproblem solve; returns (x_next, inner_residual, tau_used, dual)."""
    kind = p.subproblem_kind
    try:
        if kind is SubproblemKind.CLOSED_FORM_QUARTIC:
            return bpg_step_quartic(p.subproblem(center, tau)), 0.0, tau, None
        if kind is SubproblemKind.CLOSED_FORM_EUCLIDEAN:
            return bpg_step_euclidean(p.subproblem(center, tau)), 0.0, tau, None
        if kind is SubproblemKind.CLOSED_FORM_BURG:
            t = tau
            for _ in range(_MAX_TAU_HALVINGS + 1):
                spec = p.subproblem(center, t)
                try:
                    return poisson_step(spec, spec.linear_part), 0.0, t, None
                except StepTooLargeError:
                    t *= 0.5
            raise SolverError(
                f"step size still inadmissible after {_MAX_TAU_HALVINGS} halvings",
                iteration,
            )
        result = pdhg_solve(p.subproblem(center, tau), cfg.inner,
                            x0=center, y0=warm_dual)
        return result.x, result.residual, tau, result.dual
    except SubsolverError as exc:
        raise SolverError(str(exc), iteration) from exc


def run(p: ModelProblem, cfg: SolverConfig, x0) -> IterateTrace:
    """Run the outer loop from x0 and return the iterate trace.

    Stops at max_iters or when the relative iterate move drops below
    cfg.move_tol.  With backtracking enabled the model constant is adapted
    per iteration with the monotone rule, otherwise tau is constant.
    """
    x = np.asarray(x0, dtype=float).copy()
    assert_interior(p.kernel, x, "x0")
    f0 = p.objective(x)  # also validates x0 in dom f

    time_s = [0.0]
    fs = [f0]
    lya = [f0]
    breg_step = [0.0]
    l_col = []
    tau_col = []
    res_col = [0.0]
    xs = [x.copy()] if cfg.store_iterates else None

    L = cfg.L_init if (cfg.backtracking and cfg.L_init is not None) else p.map_upper
    l_col.append(L)
    tau_col.append(cfg.tau_fraction / L)

    warm_dual: Optional[np.ndarray] = None
    t_start = time.monotonic()

    for k in range(1, cfg.max_iters + 1):
        if cfg.backtracking:
            inner_box = [0.0, warm_dual]

            def candidate(L_try: float, _center=x, _box=inner_box):
                x_next, res, _tau, dual = _solve_at(
                    p, _center, cfg.tau_fraction / L_try, cfg, _box[1], k
                )
                _box[0] = res
                if dual is not None:
                    _box[1] = dual
                return x_next

            L, x_next = backtrack_L(p, x, candidate, L, cfg.nu)
            tau_used = cfg.tau_fraction / L
            res = inner_box[0]
            warm_dual = inner_box[1]
        else:
            x_next, res, tau_used, dual = _solve_at(
                p, x, cfg.tau_fraction / L, cfg, warm_dual, k
            )
            if dual is not None:
                warm_dual = dual

        d = bregman(p.kernel, x_next, x)
        fs.append(p.objective(x_next))
        lya.append(p.model(x_next, x) + L * d)
        breg_step.append(d)
        l_col.append(L)
        tau_col.append(tau_used)
        res_col.append(res)
        time_s.append(time.monotonic() - t_start if cfg.record_time else 0.0)
        if cfg.store_iterates:
            xs.append(x_next.copy())

        move = float(np.linalg.norm(x_next - x)) / max(1.0, float(np.linalg.norm(x)))
        x = x_next
        if move <= cfg.move_tol:
            break

    return IterateTrace(
        problem=p.name,
        time_s=np.array(time_s),
        f=np.array(fs),
        lyapunov=np.array(lya),
        breg_step=np.array(breg_step),
        L_k=np.array(l_col),
        tau_k=np.array(tau_col),
        inner_residual=np.array(res_col),
        xs=xs,
    )


def backtrack_L(p: ModelProblem, x_k, candidate_provider: Callable[[float], np.ndarray],
                L_prev: float, nu: float):
    """Scale the model constant up by nu until the local upper bound holds.

    The accepted condition is f(x+) <= model(x+; x_k) + L * D_h(x+, x_k);
    starting from L_prev keeps the sequence of constants nondecreasing.
    Returns (L, x+).
    """
    if not nu > 1.0:
        raise ValueError("nu must exceed 1")
    if not L_prev > 0.0:
        raise ValueError("L_prev must be positive")
    x_k = np.asarray(x_k, dtype=float)
    L = L_prev
    for _ in range(_MAX_BACKTRACK_SCALINGS + 1):
        x_plus = candidate_provider(L)
        bound = p.model(x_plus, x_k) + L * bregman(p.kernel, x_plus, x_k)
        if p.objective(x_plus) <= bound + 1e-12 * (1.0 + abs(bound)):
            return L, x_plus
        L = nu * L
    raise BacktrackError(
        f"no admissible constant within {_MAX_BACKTRACK_SCALINGS} scalings "
        f"starting from {L_prev:g}"
    )


def certificate_slack(trace: IterateTrace) -> float:
    """Slack policy: rounding allowance for exact subsolvers, widened by the
    accumulated inner residuals when the run used the inexact inner solver
    (the descent chain assumes exact argmin, so each row may miss by its
    inner error)."""
    return 1e-9 * (1.0 + abs(float(trace.lyapunov[0]))) + float(
        np.sum(trace.inner_residual)
    )


def descent_certificate(p: ModelProblem, trace: IterateTrace,
                        slack: Optional[float] = None) -> CertificateReport:
    """Check the per-iteration descent inequalities and the telescoped
    complexity bound over a recorded trace.

    For every update k: (a) f_k <= f_{k-1} - eps_k D_k and (b) the Lyapunov
    column obeys the same inequality, with eps_k = 1/tau_k - L_k; (c) the
    minimum Bregman step is bounded by the telescoped Lyapunov drop divided
    by eps_low * n.  Report-only; margins are positive amounts by which an
    inequality failed beyond the slack.
    """
    if len(trace) < 2:
        raise ValueError("certificate needs a trace with at least two rows")
    if slack is None:
        slack = certificate_slack(trace)

    eps = 1.0 / trace.tau_k[1:] - trace.L_k[1:]
    if np.any(eps <= 0.0):
        raise ValueError("descent gap 1/tau - L must be positive on every row")

    d = trace.breg_step[1:]
    func_gap = trace.f[1:] - (trace.f[:-1] - eps * d)
    lyap_gap = trace.lyapunov[1:] - (trace.lyapunov[:-1] - eps * d)
    worst_f = float(np.max(func_gap))
    worst_l = float(np.max(lyap_gap))

    n = len(trace) - 1
    eps_low = float(np.min(eps))
    bound = (float(trace.lyapunov[0]) - float(trace.lyapunov[-1])) / (eps_low * n)
    comp_margin = float(np.min(d)) - bound

    f_ok = worst_f <= slack
    l_ok = worst_l <= slack
    c_ok = comp_margin <= slack
    return CertificateReport(
        passed=f_ok and l_ok and c_ok,
        function_descent_ok=f_ok,
        lyapunov_descent_ok=l_ok,
        complexity_ok=c_ok,
        worst_function_margin=worst_f,
        worst_lyapunov_margin=worst_l,
        complexity_margin=comp_margin,
        slack=float(slack),
    )


def relative_error_diagnostic(p: ModelProblem, trace: IterateTrace) -> float:
    """Empirical constant bounding the Lyapunov subgradient by the step norm.

    From the update's optimality condition the model subgradient at x_{k}
    equals -(1/tau)(grad h(x_k) - grad h(x_{k-1})); the diagnostic measures
    the two blocks of the Lyapunov subgradient against ||x_k - x_{k-1}||
    and returns the worst ratio (0/0 reported as 0).
    """
    if p.model_subgrad_center is None:
        raise UnsupportedModelError(
            f"model family {p.name!r} does not expose a center subgradient"
        )
    if trace.xs is None:
        raise ValueError("relative_error_diagnostic needs stored iterates")
    worst = 0.0
    for j in range(1, len(trace)):
        x_new, x_old = trace.xs[j], trace.xs[j - 1]
        dx = x_new - x_old
        nd = float(np.linalg.norm(dx))
        if nd == 0.0:
            continue
        dgh = kernel_grad(p.kernel, x_new) - kernel_grad(p.kernel, x_old)
        term1 = abs(trace.L_k[j] - 1.0 / trace.tau_k[j]) * float(np.linalg.norm(dgh))
        term2 = float(np.linalg.norm(
            p.model_subgrad_center(x_new, x_old)
            + trace.L_k[j] * kernel_hess_apply(p.kernel, x_old, dx)
        ))
        worst = max(worst, (term1 + term2) / nd)
    return worst


def trace_to_csv(trace: IterateTrace) -> str:
    """Render the trace with 17 significant digits per value."""
    lines = [CSV_HEADER]
    for i in range(len(trace)):
        vals = (
            trace.time_s[i],
            trace.f[i],
            trace.lyapunov[i],
            trace.breg_step[i],
            trace.L_k[i],
            trace.tau_k[i],
            trace.inner_residual[i],
        )
        lines.append(str(i) + "," + ",".join(f"{v:.17g}" for v in vals))
    return "\n".join(lines) + "\n"
