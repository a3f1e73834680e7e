"""1-D spatially extended solver with nonlocal coupling.

The field equations couple every stage to the convolved active fraction
R_k(x) = (J * v_k)(x) on a periodic grid.  The convolution is a trapezoid
quadrature of the kernel laid onto grid offsets, renormalized so a constant
field reproduces R_k = v_k exactly and the spatial mean is preserved to the
last bit.  Time stepping is fixed-step RK4 with the convolution re-evaluated
per stage.

Also here: the k=1 squared-deviation functional whose monotone decay drives
global convergence, Picard iteration for the stationary coupling profile,
front-position tracking, front-velocity/profile measurement, and the exact
zero-width-kernel traveling wave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .core import (
    DeltaKernel,
    FrontLostError,
    Grid1D,
    InvariantViolationError,
    Kernel,
    KernelSupportError,
    ModelParams,
    NonConvergenceError,
    sustaining_state,
)

__all__ = [
    "Field",
    "FieldTrajectory",
    "FrontObservation",
    "StepIC",
    "TanhIC",
    "PlugIC",
    "kernel_weights",
    "convolve",
    "rhs",
    "simulate_spatial",
    "lyapunov_k1",
    "stationary_iterate",
    "front_position",
    "measure_front",
    "delta_wave",
    "delta_wave_residual",
    "uniform_field",
    "blend_field",
    "nucleus_sweep",
]

SUM_TOL = 1e-10
NEG_TOL = 1e-9


# ---------------------------------------------------------------------------
# Field container and initial conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    """Population fractions on a periodic grid: values[j, i] = v_j(x_i)."""

    grid: Grid1D
    values: np.ndarray          # (k+1, n)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != self.grid.n:
            raise ValueError(f"values must be (k+1, n={self.grid.n}), got {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def k(self) -> int:
        return self.values.shape[0] - 1

    def check(self, *, sum_tol: float = SUM_TOL, neg_tol: float = NEG_TOL) -> None:
        sums = self.values.sum(axis=0)
        dev = np.abs(sums - 1.0)
        i = int(np.argmax(dev))
        if dev[i] > sum_tol:
            raise InvariantViolationError(
                f"column sum off by {sums[i] - 1.0:+.3e} at point {i} (x={i * self.grid.h:.4g})")
        mn = self.values.min()
        if mn < -neg_tol:
            j, i = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
            raise InvariantViolationError(
                f"component v_{j} = {mn:.3e} at point {i} (x={i * self.grid.h:.4g})")


def uniform_field(grid: Grid1D, v) -> Field:
    v = np.asarray(v, dtype=float)
    return Field(grid, np.repeat(v[:, None], grid.n, axis=1))


def blend_field(grid: Grid1D, params: ModelParams, s: np.ndarray) -> Field:
    """Interpolate between the inert state (1,0,...,0) and the sustaining state.

    s(x) in [0, 1] is the local weight of the sustaining state; column sums are
    1 by construction.
    """
    vbar = sustaining_state(params)
    e0 = np.zeros_like(vbar)
    e0[0] = 1.0
    values = vbar[:, None] * s[None, :] + e0[:, None] * (1.0 - s[None, :])
    return Field(grid, values)


@dataclass(frozen=True)
class StepIC:
    """Sustaining state for x < x0, inert for x >= x0."""
    x0: float

    def profile(self, grid: Grid1D) -> np.ndarray:
        return (grid.x() < self.x0).astype(float)


@dataclass(frozen=True)
class TanhIC:
    """Hyperbolic-tangent ramp of steepness alpha_front centered at x0."""
    alpha_front: float
    x0: float

    def profile(self, grid: Grid1D) -> np.ndarray:
        return 0.5 * (1.0 - np.tanh(self.alpha_front * (grid.x() - self.x0)))


@dataclass(frozen=True)
class PlugIC:
    """Sustaining plug of the given width centered at `center`, inert outside."""
    center: float
    width: float

    def profile(self, grid: Grid1D) -> np.ndarray:
        return (np.abs(grid.x() - self.center) < 0.5 * self.width).astype(float)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def kernel_weights(kernel: Kernel, grid: Grid1D) -> np.ndarray:
    """Discrete convolution weights (offsets -M..M), summing to 1 exactly.

    Trapezoid quadrature of J on the grid offsets: box kernels get half weight
    at |x| = b, then the whole stencil is renormalized so a constant field is
    reproduced exactly.  Delta short-circuits to the identity stencil.
    """
    if isinstance(kernel, DeltaKernel):
        return np.array([1.0])
    support = kernel.support_radius
    if support >= grid.L / 2:
        raise KernelSupportError(
            f"kernel support {support:g} must be < L/2 = {grid.L / 2:g}")
    h = grid.h
    M = int(math.floor(support / h + 1e-9))
    x = np.arange(-M, M + 1) * h
    w = kernel.evaluate(x)
    if hasattr(kernel, "half_width"):
        b = kernel.half_width
        on_edge = np.isclose(np.abs(x), b, rtol=0.0, atol=1e-9 * max(b, h))
        w = np.where(on_edge, 0.5 / (2.0 * b) , w)
    w = np.asarray(w, dtype=float) * h
    total = w.sum()
    if total <= 0:
        raise KernelSupportError("kernel support too narrow for the grid spacing")
    return w / total


def _conv(row: np.ndarray, w: np.ndarray) -> np.ndarray:
    M = w.size // 2
    if M == 0:
        return row * w[0]
    pad = np.concatenate((row[-M:], row, row[:M]))
    # correlate against the reversed stencil => true convolution
    return np.correlate(pad, w[::-1], mode="valid")


def convolve(field_row: np.ndarray, kernel: Kernel, grid: Grid1D) -> np.ndarray:
    """Periodic nonlocal coupling R(x) = (J * row)(x) on the grid."""
    row = np.asarray(field_row, dtype=float)
    if row.shape != (grid.n,):
        raise ValueError(f"row must have shape ({grid.n},), got {row.shape}")
    return _conv(row, kernel_weights(kernel, grid))


# ---------------------------------------------------------------------------
# Right-hand side and time integration
# ---------------------------------------------------------------------------

def _rhs_values(values: np.ndarray, klam: float, w: np.ndarray) -> np.ndarray:
    k = values.shape[0] - 1
    g = klam * _conv(values[k], w)
    dv = np.empty_like(values)
    dv[0] = values[k] - values[0] * g
    if k > 1:
        dv[1:k] = (values[0:k - 1] - values[1:k]) * g
    dv[k] = -values[k] + values[k - 1] * g
    return dv


def rhs(field: Field, params: ModelParams, kernel: Kernel) -> np.ndarray:
    """Time derivative of the field; columns of the output sum to zero."""
    w = kernel_weights(kernel, field.grid)
    return _rhs_values(field.values, params.klam, w)


@dataclass(frozen=True)
class FieldTrajectory:
    """Strided snapshots of a spatial run plus run-wide invariant extrema."""

    grid: Grid1D
    times: np.ndarray           # (S,)
    fields: np.ndarray          # (S, k+1, n)
    min_component: float
    max_sum_dev: float

    def field_at(self, s: int) -> Field:
        return Field(self.grid, self.fields[s])


def simulate_spatial(field: Field, params: ModelParams, kernel: Kernel,
                     t_end: float, dt: float = 1e-2,
                     snapshot_stride: int = 10) -> FieldTrajectory:
    """Fixed-step RK4 evolution with per-snapshot invariant checks.

    The nonlocal term is bounded, so there is no diffusive CFL restriction;
    dt only needs to resolve the O(k*lam) reaction rates.  A simplex violation
    at any snapshot aborts with step and point diagnostics.
    """
    if field.k != params.k:
        raise ValueError(f"field has k={field.k}, params have k={params.k}")
    if not (t_end > 0 and dt > 0):
        raise ValueError("t_end and dt must be > 0")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    field.check()
    w = kernel_weights(kernel, field.grid)
    klam = params.klam

    n_steps = max(1, int(round(t_end / dt)))
    n_snap = n_steps // snapshot_stride + 1
    times = np.empty(n_snap)
    fields = np.empty((n_snap,) + field.values.shape)
    times[0] = 0.0
    fields[0] = field.values

    v = field.values.copy()
    min_comp = float(v.min())
    max_dev = float(np.abs(v.sum(axis=0) - 1.0).max())
    snap = 1
    for step in range(1, n_steps + 1):
        a1 = _rhs_values(v, klam, w)
        a2 = _rhs_values(v + 0.5 * dt * a1, klam, w)
        a3 = _rhs_values(v + 0.5 * dt * a2, klam, w)
        a4 = _rhs_values(v + dt * a3, klam, w)
        v = v + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if step % snapshot_stride == 0:
            t = step * dt
            snap_field = Field(field.grid, v)
            try:
                snap_field.check()
            except InvariantViolationError as err:
                raise InvariantViolationError(
                    f"aborted at step {step} (t={t:.6g}): {err}") from err
            mc = float(v.min())
            min_comp = min(min_comp, mc)
            max_dev = max(max_dev, float(np.abs(v.sum(axis=0) - 1.0).max()))
            times[snap] = t
            fields[snap] = v
            snap += 1
    return FieldTrajectory(grid=field.grid, times=times[:snap], fields=fields[:snap],
                           min_component=min_comp, max_sum_dev=max_dev)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def lyapunov_k1(field: Field, lam: float) -> float:
    """Squared deviation functional for k=1: integral of (v_1 - vbar_1)^2.

    Non-increasing along every k=1 trajectory; trapezoid rule on the periodic
    grid reduces to a plain sum times h.
    """
    if field.k != 1:
        raise ValueError(f"lyapunov_k1 requires k=1, got k={field.k}")
    if not (lam > 1):
        raise ValueError(f"deviation is measured from the active state; need lam > 1, got {lam}")
    f = field.values[1] - (lam - 1.0) / lam
    return float(field.grid.h * np.sum(f * f))


def stationary_iterate(R_init, kernel: Kernel, lam: float, grid: Grid1D,
                       tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Picard iteration of the stationary coupling equation.

    R <- lam * J * (R / (lam R + 1)), stopped when the sup-norm update drops
    below tol.  From strictly positive data the iteration lands on the uniform
    value (lam-1)/lam; R = 0 is the extinct fixed point.
    """
    if lam <= 1:
        raise ValueError(f"stationary iteration requires lam > 1, got {lam}")
    R = np.asarray(R_init, dtype=float).copy()
    if R.shape != (grid.n,):
        raise ValueError(f"R_init must have shape ({grid.n},), got {R.shape}")
    if R.min() < 0:
        raise ValueError("R_init must be nonnegative")
    w = kernel_weights(kernel, grid)
    delta = np.inf
    for _ in range(max_iter):
        R_next = lam * _conv(R / (lam * R + 1.0), w)
        delta = float(np.abs(R_next - R).max())
        R = R_next
        if delta < tol:
            return R
    raise NonConvergenceError(
        f"stationary iteration did not reach tol={tol:g} in {max_iter} steps "
        f"(last update {delta:.3e})", residual=delta)


def front_position(field: Field, level: float) -> float:
    """Rightmost level crossing of the active component, linearly interpolated."""
    row = field.values[-1]
    x = field.grid.x()
    candidates = _level_crossings(row, x, field.grid.h, level)
    if not candidates:
        raise FrontLostError(f"no crossing of level {level:g} in the field")
    return max(candidates)


def _level_crossings(row: np.ndarray, x: np.ndarray, h: float, level: float) -> list[float]:
    d = row - level
    out = [float(x[i]) for i in np.flatnonzero(d == 0)]
    for i in np.flatnonzero(d[:-1] * d[1:] < 0):
        frac = d[i] / (d[i] - d[i + 1])
        out.append(float(x[i] + frac * h))
    return out


# ---------------------------------------------------------------------------
# Front measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrontObservation:
    """Front track and fitted profile from a single spatial run.

    `times`/`positions` cover every retained snapshot after the transient cut;
    `velocity` is the least-squares slope over the measurement window,
    `alpha_fit`/`amplitude_fit` parameterize the tanh profile fitted to the
    final snapshot, and `fit_residual` is its relative L2 misfit.
    """

    times: np.ndarray
    positions: np.ndarray
    velocity: float
    alpha_fit: float
    amplitude_fit: float
    fit_residual: float
    level: float

    def to_csv(self, summary_path, positions_path) -> None:
        with open(summary_path, "w", newline="") as fh:
            fh.write("t_start,t_end,velocity,alpha_fit,fit_residual\n")
            fh.write(",".join(format(v, ".17g") for v in
                              (self.times[0], self.times[-1], self.velocity,
                               self.alpha_fit, self.fit_residual)) + "\n")
        with open(positions_path, "w", newline="") as fh:
            fh.write("t,x_front\n")
            for t, p in zip(self.times, self.positions):
                fh.write(f"{t:.17g},{p:.17g}\n")


def _tanh_profile(x, amplitude, alpha, x0):
    return amplitude * 0.5 * (1.0 - np.tanh(alpha * (x - x0)))


def measure_front(params: ModelParams, kernel: Kernel, grid: Grid1D, ic,
                  t_end: float, dt: float = 0.05,
                  window: tuple[float, float] = (0.25, 1.0),
                  snapshot_stride: int | None = None) -> FrontObservation:
    """Run a front experiment and measure velocity plus the tanh profile.

    `ic` is a StepIC or TanhIC; the field blends the sustaining state (left)
    into the inert state (right).  Front positions are tracked at half the
    sustaining amplitude on snapshots inside `window` (fractions of the run,
    default discards the first 25% as transient); the velocity is the
    least-squares slope through them.  The final profile is fitted to a
    rescaled shifted tanh by nonlinear least squares.  The front entering the
    boundary guard zone (10x the kernel support) aborts the measurement.
    """
    field = blend_field(grid, params, ic.profile(grid))
    if snapshot_stride is None:
        snapshot_stride = max(1, int(round(1.0 / dt)))
    traj = simulate_spatial(field, params, kernel, t_end, dt=dt,
                            snapshot_stride=snapshot_stride)

    vbar_k = sustaining_state(params)[-1]
    level = 0.5 * vbar_k
    guard = max(10.0 * kernel.support_radius, 10.0 * grid.h)

    n_snap = traj.times.size
    lo = int(math.ceil(window[0] * (n_snap - 1)))
    hi = int(math.floor(window[1] * (n_snap - 1)))
    if hi - lo < 2:
        raise ValueError("measurement window holds fewer than 3 snapshots")

    # track the front by continuity from the initial edge location: the wrap
    # edge of the active region is also a level crossing on a periodic domain,
    # so "rightmost" is not the right selector here
    x = grid.x()
    tracked = float(ic.x0)
    times, positions = [], []
    for s in range(lo, hi + 1):
        crossings = _level_crossings(traj.fields[s][-1], x, grid.h, level)
        if not crossings:
            raise FrontLostError(
                f"front vanished at t={traj.times[s]:.4g}; no crossing of level {level:g}")
        pos = min(crossings, key=lambda c: abs(c - tracked))
        tracked = pos
        if pos < guard or pos > grid.L - guard:
            raise FrontLostError(
                f"front at x={pos:.4g} entered the guard zone at t={traj.times[s]:.4g}; "
                "measurement truncated")
        times.append(traj.times[s])
        positions.append(pos)
    times = np.array(times)
    positions = np.array(positions)
    velocity = float(np.polyfit(times, positions, 1)[0])

    # fit the final profile on a window centered at the front, clear of the
    # periodic wrap edge
    final = traj.fields[-1][-1]
    x_front = positions[-1]
    span = min(x_front / 2.0, (grid.L - x_front) / 2.0)
    mask = np.abs(x - x_front) <= span
    amp0 = float(final[mask].max())
    alpha0 = _initial_steepness(x[mask], final[mask], amp0)
    popt, _ = curve_fit(_tanh_profile, x[mask], final[mask],
                        p0=(amp0, alpha0, x_front), maxfev=20_000)
    fit = _tanh_profile(x[mask], *popt)
    resid = float(np.linalg.norm(final[mask] - fit) / np.linalg.norm(final[mask]))
    return FrontObservation(times=times, positions=positions, velocity=velocity,
                            alpha_fit=float(abs(popt[1])), amplitude_fit=float(popt[0]),
                            fit_residual=resid, level=level)


def _initial_steepness(x, row, amplitude):
    """Steepness estimate from the 10%-90% width of the measured profile."""
    hi = row >= 0.9 * amplitude
    lo = row <= 0.1 * amplitude
    if hi.any() and lo.any():
        width = abs(x[lo].min() - x[hi].max())
        if width > 0:
            return 2.0 * math.atanh(0.8) / width
    return 1.0


# ---------------------------------------------------------------------------
# Exact zero-width-kernel traveling wave (k = 1)
# ---------------------------------------------------------------------------

def delta_wave(lam: float, alpha_front: float, x, t):
    """Exact k=1 traveling wave for the zero-width kernel.

    u(x,t) = vbar_1 * [1 - tanh(alpha_front (x - V t))]/2 with
    alpha_front * V = (lam - 1)/2, moving rightward for lam > 1.
    """
    if lam <= 1:
        raise ValueError(f"traveling wave requires lam > 1, got {lam}")
    if not (alpha_front > 0):
        raise ValueError("alpha_front must be > 0")
    V = (lam - 1.0) / (2.0 * alpha_front)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out = (lam - 1.0) / lam * 0.5 * (1.0 - np.tanh(alpha_front * (x - V * t)))
    return float(out) if out.ndim == 0 else out


def delta_wave_residual(lam: float, alpha_front: float, x, t):
    """Residual of the tanh profile in the local k=1 equation, analytically.

    du/dt - [-u + lam (1 - u) u] with du/dt taken in closed form; zero up to
    roundoff when alpha_front * V = (lam - 1)/2.
    """
    if lam <= 1:
        raise ValueError(f"traveling wave requires lam > 1, got {lam}")
    V = (lam - 1.0) / (2.0 * alpha_front)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    z = alpha_front * (x - V * t)
    vbar = (lam - 1.0) / lam
    u = vbar * 0.5 * (1.0 - np.tanh(z))
    dudt = vbar * 0.5 * alpha_front * V / np.cosh(z) ** 2
    out = dudt - (-u + lam * (1.0 - u) * u)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Critical-nucleus experiment (exploratory)
# ---------------------------------------------------------------------------

def nucleus_sweep(params: ModelParams, kernel: Kernel, grid: Grid1D,
                  w_lo: float, w_hi: float, t_end: float, dt: float = 1e-2,
                  n_bisect: int = 8) -> dict:
    """Bisect the plug width separating extinction from spreading.

    A centered sustaining plug of width w inside inert surroundings either
    dies out (max v_k small at t_end) or spreads; the bracket endpoints must
    disagree.  Returns the trial log and the final bracket.  Exploratory: no
    quantitative reference value exists for the threshold.
    """
    threshold = 0.5 * sustaining_state(params)[-1]

    def spreads(w: float) -> bool:
        field = blend_field(grid, params, PlugIC(grid.L / 2.0, w).profile(grid))
        traj = simulate_spatial(field, params, kernel, t_end, dt=dt,
                                snapshot_stride=max(1, int(round(t_end / dt / 20))))
        return float(traj.fields[-1][-1].max()) > threshold

    trials = []
    lo_spreads = spreads(w_lo)
    hi_spreads = spreads(w_hi)
    trials.append({"width": w_lo, "spreads": lo_spreads})
    trials.append({"width": w_hi, "spreads": hi_spreads})
    if lo_spreads or not hi_spreads:
        raise ValueError(
            f"bracket does not straddle the threshold: w={w_lo:g} spreads={lo_spreads}, "
            f"w={w_hi:g} spreads={hi_spreads}")
    lo, hi = w_lo, w_hi
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        s = spreads(mid)
        trials.append({"width": mid, "spreads": s})
        if s:
            hi = mid
        else:
            lo = mid
    return {"w_extinct": lo, "w_spreading": hi,
            "w_critical_estimate": 0.5 * (lo + hi), "trials": trials}
