"""Shared domain types and primitives.

Model parameters, probability-simplex states, interaction kernels with their
Fourier transforms, periodic 1-D grids, extinction/sustaining classification,
and the Poisson-weight coefficient family H_j(r) = e^{-r} r^j / j! that every
other module builds on.

Fourier convention: J_hat(xi) = integral of J(x) exp(-2*pi*i*xi*x) dx with
modes xi in (1/L)*Z on a periodic box of side L.  All kernels are symmetric,
so every transform here is real.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

__all__ = [
    "SimplexError",
    "FrozenStateError",
    "KernelEvalError",
    "KernelSupportError",
    "InvariantViolationError",
    "NonConvergenceError",
    "StepSizeError",
    "FrontLostError",
    "ModelParams",
    "PopulationState",
    "DeltaKernel",
    "BoxKernel",
    "GaussianKernel",
    "TableKernel",
    "Kernel",
    "Grid1D",
    "Outcome",
    "Classification",
    "check_simplex",
    "sustaining_state",
    "h_coeff",
    "h_stack",
    "h_cumsum",
    "h_integral",
    "kernel_eval",
    "kernel_fourier",
]

_trapz = getattr(np, "trapezoid", np.trapz)


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class SimplexError(ValueError):
    """State vector is not a valid point on the probability simplex."""


class FrozenStateError(ValueError):
    """Initial state has no active mass and can never leave its initial state."""


class KernelEvalError(ValueError):
    """Kernel has no pointwise values (delta variant is analytic-only)."""


class KernelSupportError(ValueError):
    """Kernel support is too wide for the periodic domain (must be < L/2)."""


class InvariantViolationError(RuntimeError):
    """A numerical invariant (conservation, positivity, decay) was violated."""


class NonConvergenceError(RuntimeError):
    """Iteration hit its step budget before reaching tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StepSizeError(RuntimeError):
    """Integration produced an invalid state; retry with a smaller dt."""


class FrontLostError(RuntimeError):
    """Front left the measurement window or entered the boundary guard zone."""


# ---------------------------------------------------------------------------
# Model parameters and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Number of stages k (>= 1) and coupling strength lam (> 0)."""

    k: int
    lam: float

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or isinstance(self.k, bool):
            raise ValueError(f"k must be an integer, got {self.k!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (self.lam > 0):
            raise ValueError(f"lam must be > 0, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "k", int(self.k))

    @property
    def klam(self) -> float:
        """Combined jump rate k*lam appearing in every stage-advance term."""
        return self.k * self.lam


def check_simplex(v, *, sum_tol: float = 1e-12, neg_tol: float = 1e-9) -> np.ndarray:
    """Validate a fraction vector: components >= -neg_tol, sum within sum_tol of 1.

    Returns the vector as a float array.  The small negative tolerance admits
    roundoff from numerical integration.
    """
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise SimplexError(f"state must be a vector of length >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SimplexError("state contains non-finite components")
    if arr.min() < -neg_tol:
        raise SimplexError(f"negative component {arr.min():.3e} below tolerance -{neg_tol:.0e}")
    dev = abs(arr.sum() - 1.0)
    if dev > sum_tol:
        raise SimplexError(f"components sum to 1{arr.sum() - 1.0:+.3e}, beyond tolerance {sum_tol:.0e}")
    return arr


@dataclass(frozen=True)
class PopulationState:
    """Fractions (v_0, ..., v_k) of the population in each stage."""

    v: np.ndarray

    def __post_init__(self):
        arr = check_simplex(self.v).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "v", arr)

    @property
    def k(self) -> int:
        return self.v.size - 1


def sustaining_state(params: ModelParams) -> np.ndarray:
    """Active stationary state: v_j = 1/(lam*k) for j < k, v_k = (lam-1)/lam.

    Exists only for lam > 1.
    """
    if params.lam <= 1:
        raise ValueError(f"sustaining state requires lam > 1, got lam={params.lam}")
    v = np.full(params.k + 1, 1.0 / (params.lam * params.k))
    v[-1] = (params.lam - 1.0) / params.lam
    return v


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaKernel:
    """Zero-width interaction: coupling reduces to the local value."""

    @property
    def support_radius(self) -> float:
        return 0.0

    def evaluate(self, x):
        raise KernelEvalError("delta kernel is not pointwise evaluable; use it analytically")

    def fourier(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.ones_like(xi)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoxKernel:
    """Uniform interaction of half-width b: J(x) = 1/(2b) for |x| < b."""

    half_width: float

    def __post_init__(self):
        if not (self.half_width > 0):
            raise ValueError(f"half_width must be > 0, got {self.half_width}")
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def support_radius(self) -> float:
        return self.half_width

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(np.abs(x) < self.half_width, 0.5 / self.half_width, 0.0)
        return float(out) if out.ndim == 0 else out

    def fourier(self, xi):
        # sin(2*pi*b*xi) / (2*pi*b*xi) with limit 1 at xi = 0
        xi = np.asarray(xi, dtype=float)
        out = np.sinc(2.0 * self.half_width * xi)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized Gaussian of standard deviation `width`.

    The tail is truncated at `cutoff_sigmas` standard deviations when the
    kernel is laid onto a grid; the discarded mass at the default cutoff is
    below 1e-15.
    """

    width: float
    cutoff_sigmas: float = 8.0

    def __post_init__(self):
        if not (self.width > 0):
            raise ValueError(f"width must be > 0, got {self.width}")
        object.__setattr__(self, "width", float(self.width))

    @property
    def support_radius(self) -> float:
        return self.cutoff_sigmas * self.width

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        s = self.width
        out = np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        return float(out) if out.ndim == 0 else out

    def fourier(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.exp(-2.0 * math.pi ** 2 * self.width ** 2 * xi ** 2)
        return float(out) if out.ndim == 0 else out


class TableKernel:
    """Tabulated interaction profile, renormalized on construction.

    The table must be symmetric about 0 and nonnegative; it is trapezoid
    integrated on its own abscissae and rescaled so the stored profile has
    unit mass exactly as integrated.
    """

    def __init__(self, x, j):
        x = np.asarray(x, dtype=float)
        j = np.asarray(j, dtype=float)
        if x.ndim != 1 or x.shape != j.shape or x.size < 3:
            raise ValueError("table kernel needs matching 1-D abscissae/values of length >= 3")
        order = np.argsort(x)
        x, j = x[order], j[order]
        if np.any(np.diff(x) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        if j.min() < 0:
            raise ValueError("table kernel values must be nonnegative")
        scale = max(abs(x[0]), abs(x[-1]))
        if np.max(np.abs(x + x[::-1])) > 1e-9 * scale or \
                np.max(np.abs(j - j[::-1])) > 1e-9 * max(j.max(), 1e-300):
            raise ValueError("table kernel must be symmetric: J(x) = J(-x)")
        mass = _trapz(j, x)
        if not (mass > 0):
            raise ValueError("table kernel has zero mass")
        self.x = x
        self.j = j / mass
        self.x.setflags(write=False)
        self.j.setflags(write=False)

    @property
    def support_radius(self) -> float:
        return float(self.x[-1])

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.j, left=0.0, right=0.0)
        return float(out) if out.ndim == 0 else out

    def fourier(self, xi):
        xi = np.asarray(xi, dtype=float)
        scalar = xi.ndim == 0
        xi = np.atleast_1d(xi)
        out = _trapz(self.j[None, :] * np.cos(2.0 * math.pi * xi[:, None] * self.x[None, :]),
                     self.x, axis=1)
        return float(out[0]) if scalar else out

    def __repr__(self):
        return f"TableKernel(support={self.support_radius:g}, points={self.x.size})"


Kernel = Union[DeltaKernel, BoxKernel, GaussianKernel, TableKernel]


def kernel_eval(kernel: Kernel, x):
    """Pointwise kernel value J(x).  Rejects the delta variant."""
    return kernel.evaluate(x)


def kernel_fourier(kernel: Kernel, xi):
    """Real Fourier transform J_hat(xi); J_hat(0) = 1 for every valid kernel."""
    return kernel.fourier(xi)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid of n points on [0, L)."""

    L: float
    n: int
    periodic: bool = True

    def __post_init__(self):
        if not (self.L > 0):
            raise ValueError(f"L must be > 0, got {self.L}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.L / self.n

    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

class Outcome(enum.Enum):
    SUSTAINING = "sustaining"
    EXTINCT = "extinct"
    # Activity decays to zero without a finite root of the flow (lam <= 1).
    EXTINCT_ASYMPTOTIC = "extinct_asymptotic"


@dataclass(frozen=True)
class Classification:
    """Fate of a uniform initial state: sustaining, or extinct with root r0."""

    outcome: Outcome
    r0: float = math.nan

    def __post_init__(self):
        if self.outcome is Outcome.EXTINCT and not (self.r0 > 0):
            raise ValueError("extinct classification requires a positive root r0")

    @property
    def is_extinct(self) -> bool:
        return self.outcome in (Outcome.EXTINCT, Outcome.EXTINCT_ASYMPTOTIC)


# ---------------------------------------------------------------------------
# Poisson-weight coefficients H_j
# ---------------------------------------------------------------------------

def h_coeff(j: int, r):
    """H_j(r) = e^{-r} r^j / j!, evaluated in log-space for stability.

    Valid for any j >= 0 and r >= 0; never overflows because H_j <= 1.
    Accepts scalar or array r.
    """
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if j == 0:
        out = np.exp(-r)
    else:
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = np.exp(j * np.log(r[pos]) - r[pos] - gammaln(j + 1))
    return float(out[0]) if scalar else out


def h_stack(n_terms: int, r) -> np.ndarray:
    """H_0(r), ..., H_{n_terms-1}(r) stacked along the first axis."""
    r = np.asarray(r, dtype=float)
    out = np.empty((n_terms,) + r.shape)
    out[0] = np.exp(-r)
    for j in range(1, n_terms):
        # running product keeps every intermediate in [0, 1]
        out[j] = out[j - 1] * r / j
    return out


def h_cumsum(j: int, r):
    """Partial sum H_0(r) + ... + H_j(r) = Q(j+1, r) (upper regularized gamma)."""
    return gammaincc(j + 1, np.asarray(r, dtype=float))


def h_integral(j: int, r):
    """Exact integral of H_j over [0, r]: P(j+1, r) = 1 - sum_{i<=j} H_i(r)."""
    return gammainc(j + 1, np.asarray(r, dtype=float))
