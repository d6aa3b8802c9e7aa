"""Shared test utilities: independent scalar oracles and problem builders.

The oracles here deliberately avoid the production code paths: golden
section and bisection for one-dimensional checks, so closed forms are
validated against something that cannot share their bugs.
"""

import numpy as np

from bregmin.kernels import KernelKind, KernelSpec
from bregmin.models import ModelProblem, SubproblemKind
from bregmin.subsolve import Reg, SubproblemSpec

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Minimizer of a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def bisect_root(f, lo: float, hi: float, tol: float = 1e-13) -> float:
    """Root of a scalar function with a sign change on [lo, hi]."""
    flo = f(lo)
    if flo == 0.0:
        return lo
    assert flo * f(hi) <= 0.0, "no sign change on the bracket"
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def central_diff_grad(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def quadratic_problem(curvature: float, n: int) -> ModelProblem:
    """Euclidean-kernel quadratic with exactly known model constant.

    f(x) = (curvature/2) ||x||^2 with its linearization as model: the
    two-sided model error equals curvature * D_h exactly, so 'curvature'
    is the sharp constant (handy for backtracking tests).
    """
    kernel = KernelSpec(KernelKind.EUCLIDEAN, n)
    c = curvature

    def objective(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * c * float(x @ x)

    def model(x, center):
        x = np.asarray(x, dtype=float)
        center = np.asarray(center, dtype=float)
        return objective(center) + c * float(center @ (x - center))

    def subproblem(center, tau):
        center = np.asarray(center, dtype=float)
        return SubproblemSpec(
            model_center=center,
            tau=tau,
            kernel=kernel,
            reg=Reg.NONE,
            lam=0.0,
            linear_part=c * center,
        )

    return ModelProblem(
        name="synthetic_quadratic",
        objective=objective,
        model=model,
        kernel=kernel,
        map_upper=c,
        map_lower=c,
        subproblem_kind=SubproblemKind.CLOSED_FORM_EUCLIDEAN,
        subproblem=subproblem,
        model_subgrad_center=lambda x, center: c * (np.asarray(x) - np.asarray(center)),
    )


def random_quartic_spec(rng: np.random.Generator, n_max: int = 8) -> SubproblemSpec:
    """Random additive-composite subproblem under the quartic kernel."""
    n = int(rng.integers(1, n_max + 1))
    reg = rng.choice([Reg.NONE, Reg.L1, Reg.SQUARED_L2])
    return SubproblemSpec(
        model_center=rng.normal(size=n),
        tau=float(10.0 ** rng.uniform(-4, -1)),
        kernel=KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, n),
        reg=reg,
        lam=float(rng.uniform(0.01, 1.0)) if reg is not Reg.NONE else 0.0,
        linear_part=rng.normal(size=n) * 10.0 ** rng.uniform(0, 2),
    )


def random_burg_spec(rng: np.random.Generator, n_max: int = 8) -> SubproblemSpec:
    """Random Burg-kernel subproblem with an admissible step size."""
    n = int(rng.integers(1, n_max + 1))
    center = rng.uniform(0.05, 3.0, size=n)
    grad = rng.normal(size=n) * 10.0 ** rng.uniform(-1, 1)
    tau = 0.5 / max(1.0, float(np.max(np.abs(grad * center)))) * float(
        rng.uniform(0.1, 1.0)
    )
    reg = rng.choice([Reg.NONE, Reg.L1, Reg.SQUARED_L2])
    return SubproblemSpec(
        model_center=center,
        tau=tau,
        kernel=KernelSpec(KernelKind.BURG, n),
        reg=reg,
        lam=float(rng.uniform(0.01, 1.0)) if reg is not Reg.NONE else 0.0,
        linear_part=grad,
        box_floor=1e-8,
    )


def random_pdhg_spec(rng: np.random.Generator, n_max: int = 5,
                     m_max: int = 8) -> SubproblemSpec:
    """Random piecewise-linear subproblem (small, oracle-friendly)."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    kind = rng.choice([KernelKind.EUCLIDEAN, KernelKind.QUARTIC_PLUS_QUADRATIC])
    reg = rng.choice([Reg.NONE, Reg.L1, Reg.SQUARED_L2])
    scale = 10.0 ** rng.uniform(-1, 1)
    return SubproblemSpec(
        model_center=rng.normal(size=n),
        tau=float(10.0 ** rng.uniform(-3, 0)),
        kernel=KernelSpec(kind, n),
        reg=reg,
        lam=float(rng.uniform(0.1, 1.0)) if reg is not Reg.NONE else 0.0,
        affine_rows=rng.normal(size=(m, n)) * scale,
        affine_offsets=rng.normal(size=m) * scale,
    )
