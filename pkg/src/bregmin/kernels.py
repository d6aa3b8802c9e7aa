"""Legendre kernel functions and the Bregman distances they generate.

Four kernels are shipped: the Euclidean half-squared norm, Burg's entropy
on the open positive orthant, the Boltzmann-Shannon entropy on the closed
positive orthant, and the quartic-plus-quadratic kernel used for quadratic
inverse problems.  All operations are pure functions of immutable inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelKind",
    "KernelSpec",
    "DomainError",
    "kernel_value",
    "kernel_grad",
    "kernel_hess_apply",
    "bregman",
    "bregman_generic",
    "three_point_residual",
    "assert_interior",
]

# Burg coordinates below this are rejected instead of letting -1/x overflow.
_BURG_FLOOR = 1e-300


class DomainError(ValueError):
    """Input lies outside the kernel's (interior) domain."""


class KernelKind(enum.Enum):
    EUCLIDEAN = "euclidean"
    BURG = "burg"
    BOLTZMANN_SHANNON = "boltzmann_shannon"
    QUARTIC_PLUS_QUADRATIC = "quartic_plus_quadratic"


@dataclass(frozen=True)
class KernelSpec:
    """A Legendre kernel: its kind plus the ambient dimension."""

    kind: KernelKind
    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")


def _as_vector(spec: KernelSpec, x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dimension,):
        raise ValueError(
            f"{name} has shape {x.shape}, expected ({spec.dimension},)"
        )
    return x


def _check_domain(spec: KernelSpec, x: np.ndarray, name: str, interior: bool) -> None:
    if spec.kind is KernelKind.BURG:
        bad = np.flatnonzero(x < _BURG_FLOOR)
        if bad.size:
            i = int(bad[0])
            raise DomainError(
                f"{name}[{i}] = {x[i]!r} outside the Burg domain (coordinates "
                f"must exceed {_BURG_FLOOR})"
            )
    elif spec.kind is KernelKind.BOLTZMANN_SHANNON:
        bad = np.flatnonzero(x <= 0.0 if interior else x < 0.0)
        if bad.size:
            i = int(bad[0])
            where = "interior of the" if interior else "the"
            raise DomainError(
                f"{name}[{i}] = {x[i]!r} outside {where} Boltzmann-Shannon "
                "domain (nonnegative orthant)"
            )
    # Euclidean and quartic kernels have full domain.


def assert_interior(spec: KernelSpec, x, name: str = "x") -> np.ndarray:
    """Validate that x lies in the interior of dom h; returns x as an array."""
    x = _as_vector(spec, x, name)
    _check_domain(spec, x, name, interior=True)
    return x


def kernel_value(spec: KernelSpec, x) -> float:
    """Evaluate the kernel h at a point of its effective domain."""
    x = _as_vector(spec, x, "x")
    _check_domain(spec, x, "x", interior=False)
    if spec.kind is KernelKind.EUCLIDEAN:
        return 0.5 * float(x @ x)
    if spec.kind is KernelKind.BURG:
        return -float(np.sum(np.log(x)))
    if spec.kind is KernelKind.BOLTZMANN_SHANNON:
        # 0 log 0 := 0 at boundary points.
        return float(np.sum(np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)))
    sq = float(x @ x)
    return 0.25 * sq * sq + 0.5 * sq


def kernel_grad(spec: KernelSpec, x) -> np.ndarray:
    """Gradient of h; defined only on the interior of the domain."""
    x = _as_vector(spec, x, "x")
    _check_domain(spec, x, "x", interior=True)
    if spec.kind is KernelKind.EUCLIDEAN:
        return x.copy()
    if spec.kind is KernelKind.BURG:
        return -1.0 / x
    if spec.kind is KernelKind.BOLTZMANN_SHANNON:
        return 1.0 + np.log(x)
    return (float(x @ x) + 1.0) * x


def kernel_hess_apply(spec: KernelSpec, x, v) -> np.ndarray:
    """Hessian-vector product (d^2 h)(x) v on the domain interior."""
    x = _as_vector(spec, x, "x")
    v = _as_vector(spec, v, "v")
    _check_domain(spec, x, "x", interior=True)
    if spec.kind is KernelKind.EUCLIDEAN:
        return v.copy()
    if spec.kind is KernelKind.BURG:
        return v / (x * x)
    if spec.kind is KernelKind.BOLTZMANN_SHANNON:
        return v / x
    return (float(x @ x) + 1.0) * v + 2.0 * float(x @ v) * x


def bregman(spec: KernelSpec, x, y) -> float:
    """Bregman distance D_h(x, y) = h(x) - h(y) - <x - y, grad h(y)>.

    Uses the kernel-specific closed forms for the Burg and Boltzmann-Shannon
    entropies (better conditioned near the boundary); the generic formula
    otherwise.  Always nonnegative, and zero only at x = y.
    """
    x = _as_vector(spec, x, "x")
    y = _as_vector(spec, y, "y")
    _check_domain(spec, x, "x", interior=False)
    _check_domain(spec, y, "y", interior=True)
    if spec.kind is KernelKind.BURG:
        r = x / y
        return float(np.sum(r - np.log(r) - 1.0))
    if spec.kind is KernelKind.BOLTZMANN_SHANNON:
        xlog = np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0) / y), 0.0)
        return float(np.sum(xlog - (x - y)))
    return bregman_generic(spec, x, y)


def bregman_generic(spec: KernelSpec, x, y) -> float:
    """D_h via the defining formula; cross-validates the closed forms."""
    x = _as_vector(spec, x, "x")
    y = _as_vector(spec, y, "y")
    _check_domain(spec, x, "x", interior=False)
    return kernel_value(spec, x) - kernel_value(spec, y) - float(
        (x - y) @ kernel_grad(spec, y)
    )


def three_point_residual(spec: KernelSpec, x, u, v) -> float:
    """Residual of the three point identity; zero up to rounding.

    The identity D_h(x,u) = D_h(x,v) + D_h(v,u) + <x - v, grad h(v) - grad h(u)>
    holds exactly in real arithmetic, so the returned absolute residual
    measures floating-point accumulation only.
    """
    x = _as_vector(spec, x, "x")
    u = _as_vector(spec, u, "u")
    v = _as_vector(spec, v, "v")
    lhs = bregman(spec, x, u)
    rhs = bregman(spec, x, v) + bregman(spec, v, u) + float(
        (x - v) @ (kernel_grad(spec, v) - kernel_grad(spec, u))
    )
    return abs(lhs - rhs)
