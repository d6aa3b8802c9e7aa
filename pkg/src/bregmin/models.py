"""Model functions and the two-sided model-approximation contract.

A model problem bundles an objective f with a family of model functions
f(. ; center) that agree with f at the center and whose error is bounded
both ways by a Bregman distance:

    -L_lower * D_h(x, center) <= f(x) - f(x; center) <= L_upper * D_h(x, center)

This module holds the problem container plus samplers that try to falsify
that inequality and the first-order agreement of the model.  Sampling is a
falsification test, not a proof: the inequality is universal, the sampler
only reports the worst violation it found.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .kernels import KernelKind, KernelSpec, assert_interior, bregman

__all__ = [
    "SubproblemKind",
    "ModelProblem",
    "MapResidualReport",
    "model_value",
    "map_residual_check",
    "first_order_consistency",
    "growth_bound_running_example",
    "running_example_objective",
    "running_example_model",
]


class SubproblemKind(enum.Enum):
    """How the proximal update argmin f(.; c) + D_h(., c)/tau is solved."""

    CLOSED_FORM_QUARTIC = "closed_form_quartic"
    CLOSED_FORM_EUCLIDEAN = "closed_form_euclidean"
    CLOSED_FORM_BURG = "closed_form_burg"
    PIECEWISE_LINEAR_PDHG = "piecewise_linear_pdhg"


@dataclass(frozen=True)
class ModelProblem:
    """An objective together with its model family and approximation constants.

    Attributes
    ----------
    objective : callable x -> float
    model : callable (x, center) -> float, with model(c, c) == objective(c)
    kernel : the Legendre kernel whose Bregman distance bounds the model error
    map_upper : L_upper > 0 in the two-sided model error bound
    map_lower : L_lower <= map_upper (lower-side constant)
    subproblem_kind : dispatch tag for the update solver
    subproblem : callable (center, tau) -> SubproblemSpec with the update data
    model_subgrad_center : optional callable (x, center) -> vector giving the
        partial subgradient of the model in its center argument; required by
        the relative-error diagnostic, available for differentiable families.
    box_floor : coordinatewise lower bound of the domain (Poisson's epsilon
        floor), or None when the domain is the whole space.
    objective_batch / model_batch : optional vectorized evaluators over row
        stacks, used by the samplers when present.
    """

    name: str
    objective: Callable[[np.ndarray], float]
    model: Callable[[np.ndarray, np.ndarray], float]
    kernel: KernelSpec
    map_upper: float
    map_lower: float
    subproblem_kind: SubproblemKind
    subproblem: Callable[[np.ndarray, float], object]
    model_subgrad_center: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    box_floor: Optional[float] = None
    objective_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    model_batch: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.map_upper > 0.0:
            raise ValueError("map_upper must be positive")
        if self.map_lower > self.map_upper:
            raise ValueError("map_lower must not exceed map_upper")

    @property
    def dimension(self) -> int:
        return self.kernel.dimension


@dataclass(frozen=True)
class MapResidualReport:
    """Worst observed violations of the two-sided model error bound.

    Violations are signed excesses clipped at zero and scaled by
    1/(1 + |f(x)|), so a compliant model yields both fields ~ 0.
    """

    samples: int
    worst_upper_violation: float
    worst_lower_violation: float


def model_value(p: ModelProblem, x, center) -> float:
    """Evaluate the model of p at x around the given center."""
    x = np.asarray(x, dtype=float)
    center = assert_interior(p.kernel, np.asarray(center, dtype=float), "center")
    return float(p.model(x, center))


def _sample_pair_batch(p: ModelProblem, rng: np.random.Generator,
                       radius: float, count: int) -> np.ndarray:
    """Uniform draws from (ball of given radius) intersected with the domain.

    For floor-bounded domains the ball is centered at (1 + floor) * ones so
    the intersection has bulk; infeasible draws are redrawn a bounded number
    of times.
    """
    n = p.dimension
    out = np.empty((count, n))
    have = 0
    rate = 1.0
    for _ in range(50):
        need = count - have
        if need <= 0:
            break
        draw = min(int(need / max(rate, 1e-3) * 1.5) + 64, 4_000_000)
        u = rng.normal(size=(draw, n))
        u *= (radius * rng.uniform(size=draw) ** (1.0 / n)
              / np.linalg.norm(u, axis=1))[:, None]
        if p.box_floor is None:
            out[have:have + need] = u[:need]
            have = count
            break
        pts = u + (1.0 + p.box_floor)
        ok = np.all(pts >= p.box_floor, axis=1)
        feasible = pts[ok]
        k = min(feasible.shape[0], need)
        out[have:have + k] = feasible[:k]
        have += k
        rate = max(float(np.mean(ok)), 1e-6)
    if have < count:
        raise RuntimeError(
            f"could not draw {count} feasible samples within the retry budget"
        )
    return out


def map_residual_check(p: ModelProblem, n_samples: int, radius: float,
                       seed: int) -> MapResidualReport:
    """Sample (x, center) pairs and report the worst MAP-bound violations."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    xs = _sample_pair_batch(p, rng, radius, n_samples)
    cs = _sample_pair_batch(p, rng, radius, n_samples)

    if p.objective_batch is not None and p.model_batch is not None:
        f = np.asarray(p.objective_batch(xs), dtype=float)
        m = np.asarray(p.model_batch(xs, cs), dtype=float)
    else:
        f = np.array([p.objective(x) for x in xs])
        m = np.array([p.model(x, c) for x, c in zip(xs, cs)])
    d = _bregman_batch(p.kernel, xs, cs)

    scale = 1.0 + np.abs(f)
    err = f - m
    upper = np.max((err - p.map_upper * d) / scale, initial=0.0)
    lower = np.max((-p.map_lower * d - err) / scale, initial=0.0)
    return MapResidualReport(
        samples=n_samples,
        worst_upper_violation=max(0.0, float(upper)),
        worst_lower_violation=max(0.0, float(lower)),
    )


def _bregman_batch(spec: KernelSpec, xs: np.ndarray, cs: np.ndarray) -> np.ndarray:
    """Row-wise D_h(xs[i], cs[i]) for the shipped kernels."""
    if spec.kind is KernelKind.EUCLIDEAN:
        d = xs - cs
        return 0.5 * np.sum(d * d, axis=1)
    if spec.kind is KernelKind.BURG:
        r = xs / cs
        return np.sum(r - np.log(r) - 1.0, axis=1)
    if spec.kind is KernelKind.QUARTIC_PLUS_QUADRATIC:
        sx = np.sum(xs * xs, axis=1)
        sc = np.sum(cs * cs, axis=1)
        hx = 0.25 * sx * sx + 0.5 * sx
        hc = 0.25 * sc * sc + 0.5 * sc
        cross = np.sum((xs - cs) * cs, axis=1)
        return hx - hc - (sc + 1.0) * cross
    return np.array([bregman(spec, x, c) for x, c in zip(xs, cs)])


def first_order_consistency(p: ModelProblem, center, directions: int,
                            step: float, seed: int = 0) -> float:
    """Worst directional mismatch between f and its model near the center.

    Returns max over sampled unit directions d of
    |[f(c + step d) - f(c)] - [model(c + step d; c) - model(c; c)]| / step,
    which tends to zero with the step for any model that preserves first
    order information.
    """
    center = np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)
    fc = p.objective(center)
    mc = p.model(center, center)
    worst = 0.0
    for _ in range(directions):
        d = rng.normal(size=center.shape)
        d /= np.linalg.norm(d)
        xp = center + step * d
        if p.box_floor is not None and np.any(xp < p.box_floor):
            continue
        gap = abs((p.objective(xp) - fc) - (p.model(xp, center) - mc)) / step
        worst = max(worst, gap)
    return worst


def growth_bound_running_example(x, center) -> float:
    """Model-error envelope 24 ||c||^2 t^2 + 8 t^4 with t = ||x - c||."""
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    t = float(np.linalg.norm(x - center))
    c2 = float(center @ center)
    return 24.0 * c2 * t * t + 8.0 * t ** 4


def running_example_objective(x) -> float:
    """f(x) = | ||x||^4 - 1 |, the nonsmooth composite toy objective."""
    x = np.asarray(x, dtype=float)
    s = float(x @ x)
    return abs(s * s - 1.0)


def running_example_model(x, center) -> float:
    """|g(c) + <grad g(c), x - c>| for g(x) = ||x||^4 - 1."""
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    sc = float(center @ center)
    g = sc * sc - 1.0
    grad = 4.0 * sc * center
    return abs(g + float(grad @ (x - center)))
