"""Linear stability of the sustaining and inert states.

Perturbations of the sustaining state at Fourier mode xi evolve as
df_hat/dt = alpha (A - beta(xi) M) f_hat with alpha = (lam-1)*k and
beta(xi) = (1 - J_hat(xi))/alpha.  The k eigenvalues x of A - beta*M are the
roots of the multiplied-through polynomial

    y^{k+1} - (1 - beta) y^k - beta = 0,   y = x + 1,

after discarding the spurious root y = 1.  Every eigenvalue has negative real
part for beta >= 0, so the sustaining state is linearly stable at all modes.
The inert state v_0 = 1 is unstable for k = 1 when lam > 1 (per-mode rate
lam*J_hat(xi) - 1) and linearly stable for k > 1 (perturbation decay e^{-t}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid1D, InvariantViolationError, Kernel, ModelParams, kernel_fourier

__all__ = [
    "StabilityReport",
    "sustaining_spectrum",
    "char_residual",
    "beta_of_mode",
    "sustaining_report",
    "inert_rate_k1",
    "inert_decay_kgt1",
]


def sustaining_spectrum(k: int, beta: float) -> np.ndarray:
    """Eigenvalues x (length k, complex) of the mode matrix A - beta*M.

    Companion-matrix roots of y^{k+1} - (1-beta) y^k - beta, with the
    always-present spurious root y = 1 removed by nearest-root deletion and a
    few Newton polish steps on the survivors.  Sorted by descending real part
    (ties by imaginary part) for deterministic output.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    coeffs = np.zeros(k + 2)
    coeffs[0] = 1.0
    coeffs[1] = -(1.0 - beta)
    coeffs[-1] = -beta
    y = np.roots(coeffs)
    spurious = int(np.argmin(np.abs(y - 1.0)))
    y = np.delete(y, spurious)
    for _ in range(3):
        p = y ** (k + 1) - (1.0 - beta) * y ** k - beta
        dp = (k + 1) * y ** k - (1.0 - beta) * k * y ** (k - 1)
        step = np.where(np.abs(dp) > 0, p / np.where(dp == 0, 1.0, dp), 0.0)
        y = y - step
    x = y - 1.0
    order = np.lexsort((x.imag, -x.real))
    return x[order]


def char_residual(k: int, beta: float, x) -> np.ndarray:
    """Relative residual of the mapped characteristic equation at eigenvalue x.

    |y^k (y - (1-beta)) - beta| scaled by the magnitude of the terms involved;
    the raw residual scales like |y|^{k+1} and is not meaningful in absolute
    terms for large beta.
    """
    y = np.asarray(x, dtype=complex) + 1.0
    raw = np.abs(y ** k * (y - (1.0 - beta)) - beta)
    scale = np.maximum(1.0, np.abs(y) ** k * np.maximum(np.abs(y), abs(1.0 - beta)) + beta)
    return raw / scale


def beta_of_mode(params: ModelParams, kernel: Kernel, xi) -> float:
    """Mode-dependent stability parameter (1 - J_hat(xi)) / ((lam-1)*k)."""
    if params.lam <= 1:
        raise ValueError(f"sustaining state requires lam > 1, got lam={params.lam}")
    alpha = (params.lam - 1.0) * params.k
    b = (1.0 - kernel_fourier(kernel, xi)) / alpha
    # |J_hat| <= 1, so beta >= 0 up to roundoff
    return np.maximum(b, 0.0) if np.ndim(b) else max(float(b), 0.0)


@dataclass(frozen=True)
class StabilityReport:
    """Per-mode spectra of the linearized dynamics around the sustaining state.

    `rates` carries alpha * max Re(x) per mode (the physical decay rate of the
    mode, including the alpha prefactor of the linearized system).
    """

    params: ModelParams
    kernel: Kernel
    xi: np.ndarray              # (n_xi,)
    beta: np.ndarray            # (n_xi,)
    eigenvalues: np.ndarray     # (n_xi, k) complex
    rates: np.ndarray           # (n_xi,)
    max_rate: float

    def to_csv(self, path) -> None:
        """Columns xi, beta, re_x_1..k, im_x_1..k, max_rate."""
        k = self.params.k
        header = (["xi", "beta"]
                  + [f"re_x_{j}" for j in range(1, k + 1)]
                  + [f"im_x_{j}" for j in range(1, k + 1)]
                  + ["max_rate"])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(self.xi.size):
                row = [self.xi[i], self.beta[i]]
                row += list(self.eigenvalues[i].real)
                row += list(self.eigenvalues[i].imag)
                row.append(self.rates[i])
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def sustaining_report(params: ModelParams, kernel: Kernel, grid: Grid1D,
                      n_modes: int) -> StabilityReport:
    """Spectrum and decay rate at every Fourier mode xi = m/L, |m| <= n_modes.

    The global maximum rate must be negative (linear stability of the
    sustaining state); a nonnegative maximum raises.
    """
    if n_modes < 0:
        raise ValueError("n_modes must be >= 0")
    alpha = (params.lam - 1.0) * params.k
    ms = np.arange(-n_modes, n_modes + 1)
    xi = ms / grid.L
    beta = np.array([beta_of_mode(params, kernel, x) for x in xi])
    eigs = np.empty((xi.size, params.k), dtype=complex)
    rates = np.empty(xi.size)
    for i, b in enumerate(beta):
        x = sustaining_spectrum(params.k, b)
        eigs[i] = x
        rates[i] = alpha * x.real.max()
    max_rate = float(rates.max())
    if max_rate >= 0:
        raise InvariantViolationError(
            f"sustaining state spectrum reached nonnegative rate {max_rate:.3e}")
    return StabilityReport(params=params, kernel=kernel, xi=xi, beta=beta,
                           eigenvalues=eigs, rates=rates, max_rate=max_rate)


def inert_rate_k1(lam: float, kernel: Kernel, xi):
    """Per-mode linear growth rate lam*J_hat(xi) - 1 around v_0 = 1 for k = 1.

    Positive for small xi when lam > 1: the inert state is unstable.
    """
    if not (lam > 0):
        raise ValueError(f"lam must be > 0, got {lam}")
    return lam * kernel_fourier(kernel, xi) - 1.0


def inert_decay_kgt1(k: int, f_k_0: float, t):
    """Linearized active fraction near v_0 = 1 for k >= 2: f_k(0) e^{-t}.

    The coupling back into f_k is second order, so the inert state is linearly
    stable for k > 1.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2 (use inert_rate_k1 for k=1), got {k}")
    t = np.asarray(t, dtype=float)
    out = f_k_0 * np.exp(-t)
    return float(out) if out.ndim == 0 else out
