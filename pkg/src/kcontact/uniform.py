"""Spatially uniform dynamics of the k-stage contact process.

The uniform system

    dv_0/dt = v_k - (k*lam*v_k) v_0
    dv_j/dt = (k*lam*v_k) (v_{j-1} - v_j),   1 <= j <= k-1
    dv_k/dt = -v_k + (k*lam*v_k) v_{k-1}

is solved two ways: a closed form in the reparameterized clock
r(t) = integral of k*lam*v_k dt (``vtilde``/``phi``/``time_of_r``), and a
fixed-step RK4 integration in physical time (``simulate_uniform``) that serves
as the independent oracle.  ``classify`` decides extinction vs sustaining from
the smallest positive root of phi, and ``basin_map`` sweeps the k=2 triangle
of initial conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate import quad
from scipy.optimize import brentq

from .core import (
    Classification,
    FrozenStateError,
    ModelParams,
    Outcome,
    StepSizeError,
    check_simplex,
    h_integral,
    h_stack,
)

__all__ = [
    "Trajectory",
    "BasinMap",
    "vtilde",
    "phi",
    "classify",
    "time_of_r",
    "simulate_uniform",
    "k1_analytic",
    "basin_map",
]

DEFAULT_R_MAX = 50.0
DEFAULT_N_SCAN = 2048


# ---------------------------------------------------------------------------
# Closed form in the r clock
# ---------------------------------------------------------------------------

def vtilde(params: ModelParams, v_init, r):
    """State as a function of the reparameterized clock r.

    For j < k:  vtilde_j(r) = sum_{i<=j} H_{j-i}(r) v_i(0) + P(j+1, r)/(k*lam),
    where P is the regularized lower incomplete gamma (the exact integral of
    H_j over [0, r]); vtilde_k = 1 - sum of the others.

    `r` may be a scalar (returns shape (k+1,)) or an array (returns
    shape r.shape + (k+1,)).
    """
    v0 = check_simplex(v_init)
    k = params.k
    if v0.size != k + 1:
        raise ValueError(f"v_init has length {v0.size}, expected k+1 = {k + 1}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    scalar = r.ndim == 0
    r = np.atleast_1d(r)

    H = h_stack(k, r)                      # (k, nr)
    q0 = 1.0 / (k * params.lam)
    out = np.empty(r.shape + (k + 1,))
    for j in range(k):
        acc = np.zeros_like(r)
        for i in range(j + 1):
            acc += H[j - i] * v0[i]
        out[..., j] = acc + q0 * h_integral(j, r)
    out[..., k] = 1.0 - out[..., :k].sum(axis=-1)
    return out[0] if scalar else out


def phi(params: ModelParams, v_init, r):
    """Autonomous right-hand side dr/dt = phi(r) = k*lam*vtilde_k(r).

    Evaluated through the collapsed double sum
        phi(r) = k*(lam - 1) - k*lam * sum_m H_m(r) * c_m,
        c_m = sum_{i <= k-1-m} (v_i(0) - 1/(lam*k)),
    a code path independent of ``vtilde`` (the two agree to ~1e-13).
    """
    v0 = check_simplex(v_init)
    k, lam = params.k, params.lam
    if v0.size != k + 1:
        raise ValueError(f"v_init has length {v0.size}, expected k+1 = {k + 1}")
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)

    q0 = 1.0 / (k * lam)
    dev = v0[:k] - q0
    # c_m collects every (j, i) pair with j - i = m, j < k, i <= j
    c = np.array([dev[: k - m].sum() for m in range(k)])
    H = h_stack(k, r)
    out = k * (lam - 1.0) - k * lam * np.tensordot(c, H, axes=(0, 0))
    return float(out[0]) if scalar else out


def classify(params: ModelParams, v_init, r_max: float = DEFAULT_R_MAX,
             n_scan: int = DEFAULT_N_SCAN) -> Classification:
    """Decide extinction vs sustaining from the sign structure of phi.

    Scans phi on [0, r_max]; the first sign change is sharpened to the
    smallest positive root r0 (extinct).  With no sign change, lam > 1 is
    certified sustaining (every H_m(r_max) term is < 1e-15 at the default
    r_max = 50, so phi(r) >= k*(lam-1) - eps beyond the scan), while
    lam <= 1 decays to zero activity without a finite root.
    """
    v0 = check_simplex(v_init)
    if v0.size != params.k + 1:
        raise ValueError(f"v_init has length {v0.size}, expected k+1 = {params.k + 1}")
    if v0[-1] <= 0:
        raise FrozenStateError("frozen initial state: v_k(0) = 0 never evolves")
    if not (r_max > 0) or n_scan < 2:
        raise ValueError("need r_max > 0 and n_scan >= 2")

    rs = np.linspace(0.0, r_max, n_scan)
    ph = phi(params, v0, rs)
    neg = ph <= 0.0
    if neg.any():
        idx = int(np.argmax(neg))
        if idx == 0:
            # phi(0) = k*lam*v_k(0) rounded to <= 0: extinct immediately
            return Classification(Outcome.EXTINCT, 0.0)
        if ph[idx] == 0.0:
            return Classification(Outcome.EXTINCT, float(rs[idx]))
        r0 = brentq(lambda s: phi(params, v0, s), rs[idx - 1], rs[idx],
                    xtol=1e-15, rtol=8.9e-16)
        return Classification(Outcome.EXTINCT, float(r0))
    if params.lam > 1:
        return Classification(Outcome.SUSTAINING)
    return Classification(Outcome.EXTINCT_ASYMPTOTIC, float("inf"))


def time_of_r(params: ModelParams, v_init, r: float) -> float:
    """Physical time at which the clock reaches r: t = integral of 1/phi.

    Diverges (+inf) as r approaches the extinction root r0; raises if phi
    vanishes strictly before r.
    """
    if not (r > 0):
        raise ValueError("r must be > 0")
    cls = classify(params, v_init, r_max=max(DEFAULT_R_MAX, 2.0 * r))
    if cls.outcome is Outcome.EXTINCT and np.isfinite(cls.r0):
        if cls.r0 < r * (1 - 1e-12):
            raise ValueError(f"phi vanishes at r0 = {cls.r0:.6g} < r = {r:.6g}")
        if r >= cls.r0 * (1 - 1e-12):
            return float("inf")
    t, _ = quad(lambda s: 1.0 / phi(params, v_init, s), 0.0, r,
                epsrel=1e-10, limit=200)
    return t


# ---------------------------------------------------------------------------
# Direct time integration (oracle)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Uniform trajectory: states on the simplex plus the accumulated clock r."""

    times: np.ndarray           # (S,)
    states: np.ndarray          # (S, k+1)
    r: np.ndarray               # (S,)
    min_component: float        # most negative component seen over the full run
    max_sum_dev: float          # largest |sum - 1| seen over the full run


@njit(cache=True)
def _uniform_rhs(v, klam):
    k = v.size - 1
    g = klam * v[k]
    dv = np.empty_like(v)
    dv[0] = v[k] - v[0] * g
    for j in range(1, k):
        dv[j] = (v[j - 1] - v[j]) * g
    dv[k] = -v[k] + v[k - 1] * g
    return dv


@njit(cache=True)
def _rk4_uniform(v_init, klam, dt, n_steps, stride):
    k = v_init.size - 1
    n_snap = n_steps // stride + 1
    times = np.empty(n_snap)
    states = np.empty((n_snap, k + 1))
    rs = np.empty(n_snap)

    v = v_init.copy()
    r = 0.0
    times[0] = 0.0
    states[0] = v
    rs[0] = 0.0
    min_comp = v.min()
    max_dev = abs(v.sum() - 1.0)

    snap = 1
    for step in range(1, n_steps + 1):
        a1 = _uniform_rhs(v, klam)
        r1 = klam * v[k]
        v2 = v + 0.5 * dt * a1
        a2 = _uniform_rhs(v2, klam)
        r2 = klam * v2[k]
        v3 = v + 0.5 * dt * a2
        a3 = _uniform_rhs(v3, klam)
        r3 = klam * v3[k]
        v4 = v + dt * a3
        a4 = _uniform_rhs(v4, klam)
        r4 = klam * v4[k]
        v = v + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        r = r + (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)

        mc = v.min()
        if mc < min_comp:
            min_comp = mc
        dev = abs(v.sum() - 1.0)
        if dev > max_dev:
            max_dev = dev
        if step % stride == 0:
            times[snap] = step * dt
            states[snap] = v
            rs[snap] = r
            snap += 1
    return times[:snap], states[:snap], rs[:snap], min_comp, max_dev


def simulate_uniform(params: ModelParams, v_init, t_end: float,
                     dt: float = 1e-3, stride: int = 1) -> Trajectory:
    """Fixed-step classical RK4 trajectory of the uniform system.

    The right-hand side components sum to zero identically, so the simplex sum
    is preserved to machine precision; the accumulated clock r(t) is
    co-integrated with the state.  Snapshots are kept every `stride` steps.
    """
    v0 = check_simplex(v_init)
    if v0.size != params.k + 1:
        raise ValueError(f"v_init has length {v0.size}, expected k+1 = {params.k + 1}")
    if not (t_end > 0):
        raise ValueError("t_end must be > 0")
    if not (0 < dt <= 1e-2):
        raise ValueError(f"dt must be in (0, 1e-2], got {dt}")
    if stride < 1:
        raise ValueError("stride must be >= 1")

    n_steps = max(1, int(round(t_end / dt)))
    times, states, rs, min_comp, max_dev = _rk4_uniform(
        np.ascontiguousarray(v0), params.klam, float(dt), n_steps, int(stride))
    if min_comp < -1e-9:
        raise StepSizeError(
            f"component dropped to {min_comp:.3e} during integration; use a smaller dt")
    return Trajectory(times=times, states=states, r=rs,
                      min_component=float(min_comp), max_sum_dev=float(max_dev))


def k1_analytic(lam: float, v1_0: float, t):
    """Exact logistic solution of the two-stage (k=1) uniform system.

    v1(t) -> (lam-1)/lam for lam > 1 and -> 0 for lam < 1.  The formula
    degenerates at lam = 1, which is rejected.
    """
    if lam == 1:
        raise ValueError("lam = 1 is outside the formula's domain")
    if not (0 < v1_0 <= 1):
        raise ValueError(f"v1_0 must be in (0, 1], got {v1_0}")
    t = np.asarray(t, dtype=float)
    c = lam / (lam - 1.0) * v1_0
    out = v1_0 / (c + (1.0 - c) * np.exp(-(lam - 1.0) * t))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Basin of attraction sweep (k = 2)
# ---------------------------------------------------------------------------

OUTCOME_SUSTAINING = 0
OUTCOME_EXTINCT = 1
OUTCOME_BOUNDARY = 2


@dataclass(frozen=True)
class BasinMap:
    """Classification of the k=2 initial-condition triangle on a uniform grid.

    `outcome[i, j]` classifies cell center (v0, v1) = (centers[i], centers[j]);
    cells with v2 = 1 - v0 - v1 <= 0 are marked boundary.  `r0` holds the
    extinction root for extinct cells and NaN elsewhere.
    """

    lam: float
    resolution: int
    centers: np.ndarray         # (resolution,)
    outcome: np.ndarray         # (resolution, resolution) int8
    r0: np.ndarray              # (resolution, resolution) float

    @property
    def extinct_count(self) -> int:
        return int(np.count_nonzero(self.outcome == OUTCOME_EXTINCT))

    def cell_index(self, v0: float, v1: float) -> tuple[int, int]:
        """Indices of the cell containing the point (v0, v1)."""
        res = self.resolution
        i = min(int(v0 * res), res - 1)
        j = min(int(v1 * res), res - 1)
        return i, j

    def to_csv(self, path) -> None:
        """Columns v0_init, v1_init, outcome {0,1,2}, r0 (empty unless extinct)."""
        with open(path, "w", newline="") as fh:
            fh.write("v0_init,v1_init,outcome,r0\n")
            for i in range(self.resolution):
                for j in range(self.resolution):
                    r0 = self.r0[i, j]
                    r0s = format(r0, ".17g") if np.isfinite(r0) else ""
                    fh.write(f"{self.centers[i]:.17g},{self.centers[j]:.17g},"
                             f"{self.outcome[i, j]},{r0s}\n")


def basin_map(lam: float, resolution: int = 400, r_max: float = DEFAULT_R_MAX,
              n_scan: int = DEFAULT_N_SCAN) -> BasinMap:
    """Classify every k=2 cell center in the (v0(0), v1(0)) triangle.

    Uses the k=2 closed form phi(r) = 2(lam-1) - 2*lam*(H_0(r) c0 + H_1(r) c1)
    vectorized over cells (chunked to bound memory), with a vectorized
    bisection for the extinction roots; agrees cell-for-cell with ``classify``.
    """
    if lam <= 1:
        raise ValueError(f"basin map requires lam > 1, got lam={lam}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")

    centers = (np.arange(resolution) + 0.5) / resolution
    V0, V1 = np.meshgrid(centers, centers, indexing="ij")
    v0f, v1f = V0.ravel(), V1.ravel()
    v2f = 1.0 - v0f - v1f

    outcome = np.full(v0f.shape, OUTCOME_BOUNDARY, dtype=np.int8)
    r0 = np.full(v0f.shape, np.nan)

    interior = v2f > 0
    q0 = 1.0 / (2.0 * lam)
    rs = np.linspace(0.0, r_max, n_scan)
    H0 = np.exp(-rs)
    H1 = rs * H0

    idx_interior = np.flatnonzero(interior)
    chunk = 4096
    for start in range(0, idx_interior.size, chunk):
        sel = idx_interior[start:start + chunk]
        c1 = v0f[sel] - q0
        c0 = c1 + v1f[sel] - q0
        ph = 2.0 * (lam - 1.0) - 2.0 * lam * (np.outer(c0, H0) + np.outer(c1, H1))
        neg = ph <= 0.0
        has_root = neg.any(axis=1)
        outcome[sel[~has_root]] = OUTCOME_SUSTAINING

        if has_root.any():
            rows = np.flatnonzero(has_root)
            first = np.argmax(neg[rows], axis=1)     # phi(0) = 2*lam*v2 > 0
            lo = rs[first - 1]
            hi = rs[first]
            cc0, cc1 = c0[rows], c1[rows]

            def ph_at(r):
                e = np.exp(-r)
                return 2.0 * (lam - 1.0) - 2.0 * lam * e * (cc0 + cc1 * r)

            for _ in range(70):
                mid = 0.5 * (lo + hi)
                pm = ph_at(mid)
                go_hi = pm > 0.0
                lo = np.where(go_hi, mid, lo)
                hi = np.where(go_hi, hi, mid)
            root = 0.5 * (lo + hi)
            outcome[sel[rows]] = OUTCOME_EXTINCT
            r0[sel[rows]] = root

    res = resolution
    return BasinMap(lam=float(lam), resolution=res, centers=centers,
                    outcome=outcome.reshape(res, res), r0=r0.reshape(res, res))
