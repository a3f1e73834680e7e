"""Acceptance gate: twelve end-to-end checks with stated tolerances.

Each test records a single PASS/FAIL line (echoed in the terminal summary by
conftest) and enforces its runtime budget.  Budgets assume the jit stepper is
already compiled (the session-scoped warm-up fixture in conftest handles that).
"""

import json
import math
import time

import numpy as np

from kcontact import cli, stability, uniform
from kcontact.core import BoxKernel, Grid1D, ModelParams, Outcome
from kcontact.spatial import (
    Field,
    StepIC,
    TanhIC,
    delta_wave_residual,
    lyapunov_k1,
    measure_front,
    simulate_spatial,
    stationary_iterate,
)
from kcontact.uniform import basin_map, classify, k1_analytic, simulate_uniform, vtilde


RESULTS = []


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# a shared log of (max_sum_dev, min_component) pairs from every trajectory the
# gate produces, consumed by the conservation check
_INVARIANTS = []


def _track(traj):
    _INVARIANTS.append((traj.max_sum_dev, traj.min_component))
    return traj


def test_criterion_01_k1_analytic_agreement():
    with Timer() as tm:
        traj = _track(simulate_uniform(ModelParams(1, 2.0), [0.9, 0.1], 20.0, dt=1e-3))
        err = float(np.abs(traj.states[:, 1] - k1_analytic(2.0, 0.1, traj.times)).max())
        limit_err = abs(float(traj.states[-1, 1]) - 0.5)
    ok = err < 1e-8 and limit_err < 1e-8 and tm.elapsed < 1.0
    report(1, ok, f"max|dv1|={err:.2e} (<1e-8), |v1(20)-0.5|={limit_err:.2e}, "
                  f"{tm.elapsed:.2f}s (<1s)")


def test_criterion_02_closed_form_equivalence():
    rng = np.random.default_rng(42)
    combos = [(k, lam) for k in (1, 2, 3, 5) for lam in (0.5, 1.5, 3.0)]
    with Timer() as tm:
        worst = 0.0
        for i in range(50):
            k, lam = combos[i % len(combos)]
            p = ModelParams(k, lam)
            v0 = rng.dirichlet(np.ones(k + 1))
            while v0[-1] <= 1e-6:
                v0 = rng.dirichlet(np.ones(k + 1))
            traj = _track(simulate_uniform(p, v0, 20.0, dt=1e-3, stride=100))
            err = float(np.abs(vtilde(p, v0, traj.r) - traj.states).max())
            worst = max(worst, err)
    ok = worst < 1e-6 and tm.elapsed < 30.0
    report(2, ok, f"50 states, worst componentwise error {worst:.2e} (<1e-6), "
                  f"{tm.elapsed:.1f}s (<30s)")


def test_criterion_03_k2_threshold():
    with Timer() as tm:
        all_sustaining = True
        for lam in (1.2, 1.5, 2.0, 3.0):
            p = ModelParams(2, lam)
            thr = 1.0 / (2.0 * lam)
            for v0 in np.linspace(0.0, thr * 0.999, 8):
                for v1 in np.linspace(0.0, (1.0 - v0) * 0.95, 8):
                    v2 = 1.0 - v0 - v1
                    if v2 <= 1e-9:
                        continue
                    c = classify(p, [v0, v1, v2])
                    all_sustaining &= c.outcome is Outcome.SUSTAINING
        p = ModelParams(2, 1.5)
        c = classify(p, [0.9, 0.05, 0.05])
        extinct_ok = c.outcome is Outcome.EXTINCT and np.isfinite(c.r0)
        traj = _track(simulate_uniform(p, [0.9, 0.05, 0.05], 500.0, dt=5e-3, stride=200))
        vk_final = float(traj.states[-1, -1])
    ok = all_sustaining and extinct_ok and vk_final < 1e-6 and tm.elapsed < 10.0
    report(3, ok, f"below-threshold states sustaining={all_sustaining}, "
                  f"(0.9,0.05,0.05) r0={c.r0:.6f}, v2(500)={vk_final:.2e} (<1e-6), "
                  f"{tm.elapsed:.1f}s (<10s)")


def test_criterion_04_basin_monotonicity():
    with Timer() as tm:
        counts = []
        fixed_ok = True
        for lam in (1.2, 1.5, 2.0):
            bm = basin_map(lam, resolution=200)
            counts.append(bm.extinct_count)
            i, j = bm.cell_index(1.0 / (2 * lam), 1.0 / (2 * lam))
            fixed_ok &= bm.outcome[i, j] == uniform.OUTCOME_SUSTAINING
        decreasing = counts[0] > counts[1] > counts[2]
    ok = decreasing and fixed_ok and tm.elapsed < 60.0
    report(4, ok, f"extinct cells {counts} strictly decreasing={decreasing}, "
                  f"stationary cell sustaining={fixed_ok}, {tm.elapsed:.1f}s (<60s)")


def test_criterion_05_spectrum_negativity():
    with Timer() as tm:
        betas = np.logspace(-6, 3, 60)
        max_re = -np.inf
        worst_resid = 0.0
        for k in range(1, 11):
            for b in betas:
                x = stability.sustaining_spectrum(k, b)
                max_re = max(max_re, float(x.real.max()))
                worst_resid = max(worst_resid, float(stability.char_residual(k, b, x).max()))
        beta0_err = max(float(np.abs(stability.sustaining_spectrum(k, 0.0) + 1.0).max())
                        for k in range(1, 11))
        k1_err = max(abs(float(stability.sustaining_spectrum(1, b)[0]) + 1.0 + b)
                     for b in betas)
    ok = (max_re < 0 and beta0_err < 1e-10 and k1_err < 1e-10
          and worst_resid < 1e-9 and tm.elapsed < 5.0)
    report(5, ok, f"max Re(x)={max_re:.3e} (<0), beta=0 err={beta0_err:.1e}, "
                  f"k=1 err={k1_err:.1e}, residual={worst_resid:.1e} (<1e-9), "
                  f"{tm.elapsed:.1f}s (<5s)")


def test_criterion_06_conservation():
    # consumes the invariant extrema logged by every trajectory the gate ran
    assert _INVARIANTS, "conservation check requires earlier trajectories"
    worst_dev = max(d for d, _ in _INVARIANTS)
    worst_min = min(m for _, m in _INVARIANTS)
    ok = worst_dev < 1e-10 and worst_min >= -1e-9
    report(6, ok, f"{len(_INVARIANTS)} trajectories, worst sum dev {worst_dev:.2e} "
                  f"(<1e-10), min component {worst_min:.2e} (>=-1e-9)")


def test_criterion_07_lyapunov_decay():
    with Timer() as tm:
        p = ModelParams(1, 2.0)
        grid = Grid1D(20.0, 800)
        x = grid.x()
        v1 = 0.5 * (1.0 + 0.3 * np.cos(2 * np.pi * x / grid.L))
        field = Field(grid, np.stack([1.0 - v1, v1]))
        traj = _track(simulate_spatial(field, p, BoxKernel(0.5), 40.0,
                                       dt=0.01, snapshot_stride=50))
        vals = np.array([lyapunov_k1(traj.field_at(s), 2.0)
                         for s in range(traj.times.size)])
        monotone = bool(np.all(np.diff(vals) <= 1e-12))
        final = float(vals[-1])
    ok = monotone and final < 1e-12 and tm.elapsed < 30.0
    report(7, ok, f"monotone={monotone} (slack 1e-12), value(40)={final:.2e} (<1e-12), "
                  f"{tm.elapsed:.1f}s (<30s)")


def _mode_amplitudes(row, modes):
    amps = np.fft.rfft(row)
    return np.abs(amps[modes])


def test_criterion_08_linearized_rates():
    with Timer() as tm:
        p = ModelParams(1, 2.0)
        grid = Grid1D(20.0, 800)
        kernel = BoxKernel(0.5)
        x = grid.x()
        modes = np.arange(1, 6)
        alpha = (p.lam - 1.0) * p.k

        # decay around the sustaining state
        eps = 1e-4
        v1 = 0.5 + eps * np.cos(2 * np.pi * modes[:, None] * x[None, :] / grid.L).sum(axis=0)
        traj = _track(simulate_spatial(Field(grid, np.stack([1.0 - v1, v1])), p, kernel,
                                       2.5, dt=0.005, snapshot_stride=100))
        t = traj.times
        s1, s2 = int(np.argmin(np.abs(t - 0.5))), int(np.argmin(np.abs(t - 2.5)))
        a1 = _mode_amplitudes(traj.fields[s1][1] - 0.5, modes)
        a2 = _mode_amplitudes(traj.fields[s2][1] - 0.5, modes)
        measured = np.log(a2 / a1) / (t[s2] - t[s1])
        predicted = np.array([
            alpha * stability.sustaining_spectrum(
                1, stability.beta_of_mode(p, kernel, m / grid.L))[0].real
            for m in modes])
        decay_rel = float(np.abs(measured / predicted - 1.0).max())

        # growth around the inert state, one run per mode so the profile
        # eps*(1 + cos) stays nonnegative
        measured_g = []
        for m in modes:
            v1 = eps * (1.0 + np.cos(2 * np.pi * m * x / grid.L))
            traj = _track(simulate_spatial(Field(grid, np.stack([1.0 - v1, v1])), p,
                                           kernel, 1.25, dt=0.005, snapshot_stride=50))
            t = traj.times
            s1, s2 = int(np.argmin(np.abs(t - 0.25))), int(np.argmin(np.abs(t - 1.25)))
            a1 = _mode_amplitudes(traj.fields[s1][1], [m])[0]
            a2 = _mode_amplitudes(traj.fields[s2][1], [m])[0]
            measured_g.append(math.log(a2 / a1) / (t[s2] - t[s1]))
        predicted_g = np.array([stability.inert_rate_k1(p.lam, kernel, m / grid.L)
                                for m in modes])
        growth_rel = float(np.abs(np.array(measured_g) / predicted_g - 1.0).max())
    ok = decay_rel < 0.03 and growth_rel < 0.05 and tm.elapsed < 30.0
    report(8, ok, f"decay-rate mismatch {decay_rel:.2%} (<3%), "
                  f"growth-rate mismatch {growth_rel:.2%} (<5%), {tm.elapsed:.1f}s (<30s)")


FRONT_PARAMS = dict(lam=1.1, b=0.5, L=400.0, n=8000, x0=100.0, t_end=400.0, dt=0.05)


def test_criterion_09_front_measurement():
    with Timer() as tm:
        fp = FRONT_PARAMS
        p = ModelParams(1, fp["lam"])
        kernel = BoxKernel(fp["b"])
        grid = Grid1D(fp["L"], fp["n"])

        obs_a = measure_front(p, kernel, grid, StepIC(fp["x0"]), t_end=fp["t_end"],
                              dt=fp["dt"], window=(0.5, 0.75))
        obs_b = measure_front(p, kernel, grid, StepIC(fp["x0"]), t_end=fp["t_end"],
                              dt=fp["dt"], window=(0.75, 1.0))
        v_diff = abs(obs_a.velocity / obs_b.velocity - 1.0)
        resid = obs_b.fit_residual

        v_tanh = []
        for a in (0.05, 0.1):
            obs = measure_front(p, kernel, Grid1D(400.0, 8000), TanhIC(a, 60.0),
                                t_end=100.0, dt=0.05)
            v_tanh.append(obs.velocity)
        ratio = v_tanh[0] / v_tanh[1]
    ok = v_diff < 0.05 and resid < 0.05 and abs(ratio - 2.0) <= 0.3 and tm.elapsed < 120.0
    report(9, ok, f"window velocities {obs_a.velocity:.4f}/{obs_b.velocity:.4f} "
                  f"(diff {v_diff:.2%} <5%), fit residual {resid:.2%} (<5%), "
                  f"tanh velocity ratio {ratio:.3f} (2 +/- 15%), recorded "
                  f"V={obs_b.velocity:.4f}, {tm.elapsed:.1f}s (<120s)")


def test_criterion_10_delta_wave_identity():
    rng = np.random.default_rng(5)
    with Timer() as tm:
        worst = 0.0
        for lam in (1.5, 2.0):
            for a in (0.05, 0.1):
                xs = rng.uniform(-50, 50, 100)
                ts = rng.uniform(0, 20, 100)
                worst = max(worst, float(np.abs(delta_wave_residual(lam, a, xs, ts)).max()))
    ok = worst < 1e-12 and tm.elapsed < 1.0
    report(10, ok, f"max residual {worst:.2e} (<1e-12) over 100 points x 4 cases, "
                   f"{tm.elapsed:.2f}s (<1s)")


def test_criterion_11_stationary_iteration():
    with Timer() as tm:
        grid = Grid1D(10.0, 400)
        R0 = 0.5 * (1.0 + 0.3 * np.cos(2 * np.pi * grid.x() / grid.L))
        R = stationary_iterate(R0, BoxKernel(0.5), 2.0, grid, tol=1e-12, max_iter=10_000)
        dev = float(np.abs(R - 0.5).max())
    ok = dev < 1e-10 and tm.elapsed < 10.0
    report(11, ok, f"sup deviation from 0.5 is {dev:.2e} (<1e-10), "
                   f"{tm.elapsed:.1f}s (<10s)")


def test_criterion_12_cli_determinism(tmp_path):
    fp = FRONT_PARAMS
    cfg = {
        "experiment": "front",
        "model": {"k": 1, "lambda": fp["lam"]},
        "kernel": {"type": "box", "b": fp["b"]},
        "grid": {"L": fp["L"], "n": fp["n"]},
        "ic": {"type": "step", "x0": fp["x0"]},
        "numerics": {"dt": fp["dt"], "t_end": fp["t_end"]},
        "output": {"prefix": str(tmp_path / "t1")},
    }
    cfg_path = tmp_path / "front.json"
    cfg_path.write_text(json.dumps(cfg))
    code1 = cli.main(["run", str(cfg_path), "--threads", "1"])
    code8 = cli.main(["run", str(cfg_path), "--threads", "8",
                      "--override", f"output.prefix={tmp_path / 't8'}"])
    same = all(
        (tmp_path / f"t1{suffix}").read_bytes() == (tmp_path / f"t8{suffix}").read_bytes()
        for suffix in ("_front.csv", "_positions.csv"))
    ok = code1 == 0 and code8 == 0 and same
    report(12, ok, f"exit codes ({code1},{code8}), --threads 1 vs 8 CSVs "
                   f"byte-identical={same}")
