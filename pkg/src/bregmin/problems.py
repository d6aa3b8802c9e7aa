"""Concrete problem families: phase retrieval, robust phase retrieval, and
Poisson linear inverse problems.

Each family ships instance generation, objective/model evaluation, the
model-approximation constant, and a factory wiring everything into a
ModelProblem for the outer solver.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .kernels import DomainError, KernelKind, KernelSpec
from .models import ModelProblem, SubproblemKind
from .subsolve import Reg, SubproblemSpec

__all__ = [
    "PhaseRetrievalInstance",
    "PoissonInstance",
    "gen_phase_retrieval",
    "phase_retrieval_objective",
    "model_m1",
    "model_m2",
    "phase_retrieval_L0",
    "robust_pr_objective",
    "robust_pr_model",
    "robust_pr_L1",
    "gen_poisson",
    "poisson_objective",
    "poisson_grad_smooth",
    "poisson_L",
    "model_problem_m1",
    "model_problem_m2",
    "model_problem_robust",
    "model_problem_poisson",
    "instance_to_json",
    "instance_from_json",
    "instance_digest",
]


def _reg_value(reg: Reg, lam: float, x: np.ndarray) -> float:
    if reg is Reg.L1:
        return lam * float(np.sum(np.abs(x)))
    if reg is Reg.SQUARED_L2:
        return 0.5 * lam * float(x @ x)
    return 0.0


def _reg_value_batch(reg: Reg, lam: float, xs: np.ndarray) -> np.ndarray:
    if reg is Reg.L1:
        return lam * np.sum(np.abs(xs), axis=1)
    if reg is Reg.SQUARED_L2:
        return 0.5 * lam * np.sum(xs * xs, axis=1)
    return np.zeros(xs.shape[0])


@dataclass(frozen=True)
class PhaseRetrievalInstance:
    """Symmetric PSD sampling matrices A_i with measurements b_i."""

    matrices: np.ndarray  # (M, N, N)
    measurements: np.ndarray  # (M,)
    reg: Reg = Reg.NONE
    lam: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.matrices, dtype=float)
        b = np.asarray(self.measurements, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ValueError(f"matrices must be (M, N, N), got {a.shape}")
        if b.shape != (a.shape[0],) or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("need M >= 1 measurements matching the matrices")
        asym = np.max(np.abs(a - np.transpose(a, (0, 2, 1))))
        if asym > 1e-12:
            raise ValueError(f"sampling matrices not symmetric (max asymmetry {asym:g})")
        min_eig = min(float(np.linalg.eigvalsh(ai)[0]) for ai in a)
        if min_eig < -1e-10:
            raise ValueError(f"sampling matrices not PSD (min eigenvalue {min_eig:g})")
        if self.lam < 0.0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "matrices", a)
        object.__setattr__(self, "measurements", b)

    @property
    def m(self) -> int:
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]


@dataclass(frozen=True)
class PoissonInstance:
    """Nonnegative sensing rows a_i with positive counts b_i and the
    coordinate floor epsilon keeping iterates inside the Burg domain."""

    rows: np.ndarray  # (M, N)
    counts: np.ndarray  # (M,)
    epsilon: float = 1e-8
    reg: Reg = Reg.NONE
    lam: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.rows, dtype=float)
        b = np.asarray(self.counts, dtype=float)
        if a.ndim != 2 or b.shape != (a.shape[0],):
            raise ValueError("rows must be (M, N) with matching counts")
        if np.any(a < 0.0):
            raise ValueError("sensing rows must be nonnegative")
        if np.any(np.all(a == 0.0, axis=1)):
            raise ValueError("every sensing row must be nonzero")
        if np.any(a.sum(axis=0) <= 0.0):
            raise ValueError("every column sum of the sensing rows must be positive")
        if np.any(b <= 0.0):
            raise ValueError("counts must be positive")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.lam < 0.0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "rows", a)
        object.__setattr__(self, "counts", b)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]


# ---------------------------------------------------------------------------
# phase retrieval
# ---------------------------------------------------------------------------

def gen_phase_retrieval(seed: int, m: int, n: int, reg: Reg = Reg.NONE,
                        lam: float = 0.0, noise: float = 0.0) -> PhaseRetrievalInstance:
    """Rank-one Gaussian sampling matrices with a planted signal.

    A_i = g_i g_i^T for standard-normal g_i, b_i = xstar^T A_i xstar for a
    hidden standard-normal xstar; optional multiplicative log-normal noise
    keeps measurements nonnegative.  Deterministic per seed.
    """
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((m, n))
    mats = np.einsum("mi,mj->mij", g, g)
    xstar = rng.standard_normal(n)
    b = (g @ xstar) ** 2
    if noise > 0.0:
        b = b * np.exp(noise * rng.standard_normal(m))
    return PhaseRetrievalInstance(matrices=mats, measurements=b, reg=reg, lam=lam)


def _residuals(inst: PhaseRetrievalInstance, x: np.ndarray) -> np.ndarray:
    ax = np.einsum("mij,j->mi", inst.matrices, x)
    return ax @ x - inst.measurements


def phase_retrieval_objective(inst: PhaseRetrievalInstance, x) -> float:
    """(1/M) sum_i (x^T A_i x - b_i)^2 plus the regularizer."""
    x = np.asarray(x, dtype=float)
    r = _residuals(inst, x)
    return float(np.mean(r * r)) + _reg_value(inst.reg, inst.lam, x)


def _grad_smooth_pr(inst: PhaseRetrievalInstance, c: np.ndarray) -> np.ndarray:
    ac = np.einsum("mij,j->mi", inst.matrices, c)
    rc = ac @ c - inst.measurements
    return (4.0 / inst.m) * (ac.T @ rc)


def model_m1(inst: PhaseRetrievalInstance, x, center) -> float:
    """Linearized data term around the center plus the untouched regularizer."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    ac = np.einsum("mij,j->mi", inst.matrices, c)
    rc = ac @ c - inst.measurements
    lin = (4.0 / inst.m) * float((ac.T @ rc) @ (x - c))
    return float(np.mean(rc * rc)) + lin + _reg_value(inst.reg, inst.lam, x)


def model_m2(inst: PhaseRetrievalInstance, x, center) -> float:
    """Absolute values of the per-measurement linearizations; exploits the
    nonnegativity of each squared residual term."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    ac = np.einsum("mij,j->mi", inst.matrices, c)
    rc = ac @ c - inst.measurements
    terms = rc * rc + 4.0 * rc * (ac @ (x - c))
    return float(np.mean(np.abs(terms))) + _reg_value(inst.reg, inst.lam, x)


def phase_retrieval_L0(inst: PhaseRetrievalInstance) -> float:
    """Model-approximation constant sum_i (3 ||A_i||_F^2 + ||A_i||_F |b_i|)."""
    fro = np.sqrt(np.sum(inst.matrices ** 2, axis=(1, 2)))
    return float(np.sum(3.0 * fro * fro + fro * np.abs(inst.measurements)))


# ---------------------------------------------------------------------------
# robust phase retrieval
# ---------------------------------------------------------------------------

def robust_pr_objective(inst: PhaseRetrievalInstance, x) -> float:
    """(1/M) sum_i |x^T A_i x - b_i| plus the regularizer."""
    x = np.asarray(x, dtype=float)
    return float(np.mean(np.abs(_residuals(inst, x)))) + _reg_value(
        inst.reg, inst.lam, x
    )


def robust_pr_model(inst: PhaseRetrievalInstance, x, center) -> float:
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    ac = np.einsum("mij,j->mi", inst.matrices, c)
    rc = ac @ c - inst.measurements
    terms = rc + 2.0 * (ac @ (x - c))
    return float(np.mean(np.abs(terms))) + _reg_value(inst.reg, inst.lam, x)


def robust_pr_L1(inst: PhaseRetrievalInstance) -> float:
    """Two-sided constant 2 sum_i lambda_max(A_i) / M for the Euclidean kernel."""
    top = sum(float(np.linalg.eigvalsh(a)[-1]) for a in inst.matrices)
    return 2.0 * top / inst.m


# ---------------------------------------------------------------------------
# Poisson linear inverse problems
# ---------------------------------------------------------------------------

def gen_poisson(seed: int, m: int, n: int, epsilon: float = 1e-8,
                reg: Reg = Reg.NONE, lam: float = 0.0,
                noise: float = 0.0) -> PoissonInstance:
    """Uniform [0,1] sensing rows (with a column-positivity repair pass) and
    counts from a planted positive signal, optionally noisy."""
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(m, n))
    dead = np.flatnonzero(a.sum(axis=0) <= 1e-12)
    for j in dead:
        a[rng.integers(m), j] = rng.uniform(0.5, 1.0)
    xstar = rng.uniform(0.5, 1.5, size=n)
    b = a @ xstar
    if noise > 0.0:
        b = b * np.exp(noise * rng.standard_normal(m))
    return PoissonInstance(rows=a, counts=b, epsilon=epsilon, reg=reg, lam=lam)


def _check_floor(inst: PoissonInstance, x: np.ndarray) -> None:
    bad = np.flatnonzero(x < inst.epsilon)
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"x[{i}] = {x[i]!r} below the domain floor {inst.epsilon!r}"
        )


def poisson_objective(inst: PoissonInstance, x) -> float:
    """sum_i (<a_i, x> - b_i log <a_i, x>) plus the regularizer, on the
    floored orthant (the floor's indicator is enforced by the solver)."""
    x = np.asarray(x, dtype=float)
    _check_floor(inst, x)
    ax = inst.rows @ x
    return float(np.sum(ax - inst.counts * np.log(ax))) + _reg_value(
        inst.reg, inst.lam, x
    )


def poisson_grad_smooth(inst: PoissonInstance, x) -> np.ndarray:
    """Gradient of the smooth data term: sum_i (1 - b_i/<a_i, x>) a_i."""
    x = np.asarray(x, dtype=float)
    _check_floor(inst, x)
    ax = inst.rows @ x
    return inst.rows.T @ (1.0 - inst.counts / ax)


def poisson_L(inst: PoissonInstance) -> float:
    """Burg-kernel model constant: the total count sum_i b_i."""
    return float(np.sum(inst.counts))


# ---------------------------------------------------------------------------
# model-problem factories
# ---------------------------------------------------------------------------

def _pr_batch_residuals(inst, xs: np.ndarray) -> np.ndarray:
    ax = np.einsum("mij,kj->kmi", inst.matrices, xs)
    return np.einsum("kmi,ki->km", ax, xs) - inst.measurements


def model_problem_m1(inst: PhaseRetrievalInstance) -> ModelProblem:
    """Phase retrieval with the linearized data-term model and the quartic
    kernel; updates are closed-form."""
    l0 = phase_retrieval_L0(inst)
    kernel = KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, inst.n)

    def subproblem(center: np.ndarray, tau: float) -> SubproblemSpec:
        return SubproblemSpec(
            model_center=np.asarray(center, dtype=float),
            tau=tau,
            kernel=kernel,
            reg=inst.reg,
            lam=inst.lam,
            linear_part=_grad_smooth_pr(inst, np.asarray(center, dtype=float)),
        )

    def subgrad_center(x: np.ndarray, c: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(c, dtype=float)
        ac = np.einsum("mij,j->mi", inst.matrices, c)
        rc = ac @ c - inst.measurements
        return (8.0 / inst.m) * (ac.T @ (ac @ d)) + (4.0 / inst.m) * np.einsum(
            "m,mij,j->i", rc, inst.matrices, d
        )

    def model_batch(xs: np.ndarray, cs: np.ndarray) -> np.ndarray:
        ac = np.einsum("mij,kj->kmi", inst.matrices, cs)
        rc = np.einsum("kmi,ki->km", ac, cs) - inst.measurements
        lin = (4.0 / inst.m) * np.einsum("km,kmi,ki->k", rc, ac, xs - cs)
        return np.mean(rc * rc, axis=1) + lin + _reg_value_batch(
            inst.reg, inst.lam, xs
        )

    return ModelProblem(
        name="phase_retrieval_m1",
        objective=lambda x: phase_retrieval_objective(inst, x),
        model=lambda x, c: model_m1(inst, x, c),
        kernel=kernel,
        map_upper=l0,
        map_lower=l0,
        subproblem_kind=SubproblemKind.CLOSED_FORM_QUARTIC,
        subproblem=subproblem,
        model_subgrad_center=subgrad_center,
        objective_batch=lambda xs: np.mean(_pr_batch_residuals(inst, xs) ** 2, axis=1)
        + _reg_value_batch(inst.reg, inst.lam, xs),
        model_batch=model_batch,
    )


def model_problem_m2(inst: PhaseRetrievalInstance) -> ModelProblem:
    """Phase retrieval with the absolute-value model; updates solved by the
    primal-dual inner solver under the quartic kernel."""
    l0 = phase_retrieval_L0(inst)
    kernel = KernelSpec(KernelKind.QUARTIC_PLUS_QUADRATIC, inst.n)

    def subproblem(center: np.ndarray, tau: float) -> SubproblemSpec:
        c = np.asarray(center, dtype=float)
        ac = np.einsum("mij,j->mi", inst.matrices, c)
        rc = ac @ c - inst.measurements
        rows = 4.0 * rc[:, None] * ac
        offs = rc * rc - rows @ c
        return SubproblemSpec(
            model_center=c,
            tau=tau,
            kernel=kernel,
            reg=inst.reg,
            lam=inst.lam,
            affine_rows=rows,
            affine_offsets=offs,
        )

    def model_batch(xs: np.ndarray, cs: np.ndarray) -> np.ndarray:
        ac = np.einsum("mij,kj->kmi", inst.matrices, cs)
        rc = np.einsum("kmi,ki->km", ac, cs) - inst.measurements
        inner = np.einsum("kmi,ki->km", ac, xs - cs)
        return np.mean(np.abs(rc * rc + 4.0 * rc * inner), axis=1) + _reg_value_batch(
            inst.reg, inst.lam, xs
        )

    return ModelProblem(
        name="phase_retrieval_m2",
        objective=lambda x: phase_retrieval_objective(inst, x),
        model=lambda x, c: model_m2(inst, x, c),
        kernel=kernel,
        map_upper=l0,
        map_lower=l0,
        subproblem_kind=SubproblemKind.PIECEWISE_LINEAR_PDHG,
        subproblem=subproblem,
        objective_batch=lambda xs: np.mean(_pr_batch_residuals(inst, xs) ** 2, axis=1)
        + _reg_value_batch(inst.reg, inst.lam, xs),
        model_batch=model_batch,
    )


def model_problem_robust(inst: PhaseRetrievalInstance) -> ModelProblem:
    """Robust phase retrieval: L1 data loss, Euclidean kernel, PDHG updates."""
    l1 = robust_pr_L1(inst)
    kernel = KernelSpec(KernelKind.EUCLIDEAN, inst.n)

    def subproblem(center: np.ndarray, tau: float) -> SubproblemSpec:
        c = np.asarray(center, dtype=float)
        ac = np.einsum("mij,j->mi", inst.matrices, c)
        rc = ac @ c - inst.measurements
        rows = 2.0 * ac
        offs = rc - rows @ c
        return SubproblemSpec(
            model_center=c,
            tau=tau,
            kernel=kernel,
            reg=inst.reg,
            lam=inst.lam,
            affine_rows=rows,
            affine_offsets=offs,
        )

    def model_batch(xs: np.ndarray, cs: np.ndarray) -> np.ndarray:
        ac = np.einsum("mij,kj->kmi", inst.matrices, cs)
        rc = np.einsum("kmi,ki->km", ac, cs) - inst.measurements
        inner = np.einsum("kmi,ki->km", ac, xs - cs)
        return np.mean(np.abs(rc + 2.0 * inner), axis=1) + _reg_value_batch(
            inst.reg, inst.lam, xs
        )

    return ModelProblem(
        name="robust_pr",
        objective=lambda x: robust_pr_objective(inst, x),
        model=lambda x, c: robust_pr_model(inst, x, c),
        kernel=kernel,
        map_upper=l1,
        map_lower=l1,
        subproblem_kind=SubproblemKind.PIECEWISE_LINEAR_PDHG,
        subproblem=subproblem,
        objective_batch=lambda xs: np.mean(
            np.abs(_pr_batch_residuals(inst, xs)), axis=1
        )
        + _reg_value_batch(inst.reg, inst.lam, xs),
        model_batch=model_batch,
    )


def model_problem_poisson(inst: PoissonInstance) -> ModelProblem:
    """Poisson inverse problem under the Burg kernel with closed-form updates
    on the floored orthant."""
    lc = poisson_L(inst)
    kernel = KernelSpec(KernelKind.BURG, inst.n)

    def model(x, c) -> float:
        x = np.asarray(x, dtype=float)
        c = np.asarray(c, dtype=float)
        _check_floor(inst, x)
        return (
            poisson_objective(inst, c)
            - _reg_value(inst.reg, inst.lam, c)
            + float(poisson_grad_smooth(inst, c) @ (x - c))
            + _reg_value(inst.reg, inst.lam, x)
        )

    def subproblem(center: np.ndarray, tau: float) -> SubproblemSpec:
        c = np.asarray(center, dtype=float)
        return SubproblemSpec(
            model_center=c,
            tau=tau,
            kernel=kernel,
            reg=inst.reg,
            lam=inst.lam,
            linear_part=poisson_grad_smooth(inst, c),
            box_floor=inst.epsilon,
        )

    def subgrad_center(x: np.ndarray, c: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(c, dtype=float)
        ax = inst.rows @ np.asarray(c, dtype=float)
        return inst.rows.T @ (inst.counts * (inst.rows @ d) / (ax * ax))

    def objective_batch(xs: np.ndarray) -> np.ndarray:
        ax = xs @ inst.rows.T
        return np.sum(ax - inst.counts * np.log(ax), axis=1) + _reg_value_batch(
            inst.reg, inst.lam, xs
        )

    def model_batch(xs: np.ndarray, cs: np.ndarray) -> np.ndarray:
        ac = cs @ inst.rows.T
        f1c = np.sum(ac - inst.counts * np.log(ac), axis=1)
        w = 1.0 - inst.counts / ac
        lin = np.einsum("km,km->k", w, (xs - cs) @ inst.rows.T)
        return f1c + lin + _reg_value_batch(inst.reg, inst.lam, xs)

    return ModelProblem(
        name="poisson",
        objective=lambda x: poisson_objective(inst, x),
        model=model,
        kernel=kernel,
        map_upper=lc,
        map_lower=lc,
        subproblem_kind=SubproblemKind.CLOSED_FORM_BURG,
        subproblem=subproblem,
        model_subgrad_center=subgrad_center,
        box_floor=inst.epsilon,
        objective_batch=objective_batch,
        model_batch=model_batch,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def instance_to_json(inst) -> str:
    """Serialize an instance to a JSON document (matrices row-major)."""
    if isinstance(inst, PhaseRetrievalInstance):
        doc = {
            "type": "phase_retrieval",
            "m": inst.m,
            "n": inst.n,
            "matrices": [a.ravel().tolist() for a in inst.matrices],
            "measurements": inst.measurements.tolist(),
            "reg": inst.reg.value,
            "lambda": inst.lam,
        }
    elif isinstance(inst, PoissonInstance):
        doc = {
            "type": "poisson",
            "m": inst.m,
            "n": inst.n,
            "rows": [a.tolist() for a in inst.rows],
            "counts": inst.counts.tolist(),
            "epsilon": inst.epsilon,
            "reg": inst.reg.value,
            "lambda": inst.lam,
        }
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    return json.dumps(doc, sort_keys=True)


def instance_from_json(text: str):
    doc = json.loads(text)
    kind = doc.get("type")
    if kind == "phase_retrieval":
        n = doc["n"]
        mats = np.array([np.array(a).reshape(n, n) for a in doc["matrices"]])
        return PhaseRetrievalInstance(
            matrices=mats,
            measurements=np.array(doc["measurements"], dtype=float),
            reg=Reg(doc["reg"]),
            lam=float(doc["lambda"]),
        )
    if kind == "poisson":
        return PoissonInstance(
            rows=np.array(doc["rows"], dtype=float),
            counts=np.array(doc["counts"], dtype=float),
            epsilon=float(doc["epsilon"]),
            reg=Reg(doc["reg"]),
            lam=float(doc["lambda"]),
        )
    raise ValueError(f"unknown instance type {kind!r}")


def instance_digest(inst) -> str:
    """Stable content hash of an instance, for replay bookkeeping."""
    return hashlib.sha256(instance_to_json(inst).encode()).hexdigest()[:16]


def with_regularizer(inst, reg: Reg, lam: float):
    """Copy of an instance with a different regularizer configuration."""
    return replace(inst, reg=reg, lam=lam)
