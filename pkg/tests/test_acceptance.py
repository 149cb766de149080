"""Acceptance checks 1-10.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts.  Run directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from nnlif import (
    ConstantDiffusion,
    EntropyReference,
    Grid,
    NetworkParams,
    PopulationDensity,
    PotentialParams,
    SolverConfig,
    decay_rate_fit,
    entropy_admissibility,
    find_steady_states,
    maxwellian_initial,
    relative_entropy,
    run_simulation,
)
from nnlif.experiments import render_table, run_experiment
from nnlif.presets import preset_config, run_preset
from nnlif.solver import RunStatus, advection_rhs, make_state, ssp_rk3_step
from nnlif.steady import (
    F_of_NE,
    I1_eval,
    I2_eval,
    NI_slope,
    reduced_variables,
    solve_NI_with_residual,
)

from oracles import double_integral

POT = PotentialParams()  # V_F = 2, V_R = 1


def tag(n):
    def deco(fn):
        fn.criterion_number = n
        return fn
    return deco


# ---------------------------------------------------------------- oracles

def reference_rk3_order():
    """Observed order of SSP-RK3 on u' = -u, u(0) = 1, at t = 1."""
    errs = []
    steps = (10, 20, 40, 80)
    for n in steps:
        u, dt = np.array([1.0]), 1.0 / n
        for _ in range(n):
            u = ssp_rk3_step(lambda x: -x, u, dt)
        errs.append(abs(u[0] - math.exp(-1.0)))
    return np.polyfit(np.log(1.0 / np.array(steps)), np.log(errs), 1)[0]


def weno_order():
    errs, dvs = [], []
    for M in (100, 200, 400, 800):
        grid = Grid.build(PotentialParams(-4.0, 1.0, 2.0), M)
        v = grid.nodes
        x = (v + 1.0) / 1.5
        bump = np.where(np.abs(x) < 1, np.cos(0.5 * np.pi * x) ** 8, 0.0)
        # d/dv of cos^8(pi x / 2) with x = (v + 1) / 1.5
        dbump = np.where(np.abs(x) < 1, -8 * np.cos(0.5 * np.pi * x) ** 7
                         * np.sin(0.5 * np.pi * x) * (0.5 * np.pi / 1.5), 0.0)
        h = -v
        exact = -(-bump + h * dbump)
        errs.append(np.abs(advection_rhs(bump, h, grid) - exact).max())
        dvs.append(grid.dv)
    return np.polyfit(np.log(dvs[1:]), np.log(errs[1:]), 1)[0]


# ------------------------------------------------------------- criteria

FIVE_SETS = [((3, 0.75, 0.5, 5), 0), ((1.8, 0.75, 0.5, 0.25), 2), ((0.5, 0.5, 3, 0.5), 1),
             ((3, 9, 0.5, 0.25), 1), ((3, 7, 0.5, 0.25), 3)]


@tag(1)
def test_c1_steady_state_counts(criterion):
    counts, times = [], []
    for b, _ in FIVE_SETS:
        t0 = time.perf_counter()
        counts.append(len(find_steady_states(NetworkParams(*b), POT, with_profiles=False)))
        times.append(time.perf_counter() - t0)
    expected = [n for _, n in FIVE_SETS]
    ok = counts == expected
    criterion(1, ok, f"counts {counts} (expected {expected}); max {max(times):.1f} s per set")
    assert ok


@tag(2)
def test_c2_F_limit(criterion):
    value = F_of_NE(1e3, NetworkParams(1.8, 0.75, 0.5, 0.25), POT)
    ok = 0.660 <= value <= 0.674
    criterion(2, ok, f"F(1e3) = {value:.6f}, band [0.660, 0.674], closed form 2/3")
    assert ok


@tag(3)
def test_c3_quadrature_oracle(criterion):
    rng = np.random.default_rng(20240501)
    worst, n = 0.0, 0
    t0 = time.perf_counter()
    while n < 100:
        b = rng.uniform(0.0, 3.0, 4)
        N_E, N_I = rng.uniform(0.0, 3.0, 2)
        aE, aI = rng.uniform(0.5, 2.0, 2)
        params = NetworkParams(*b, diffusion=ConstantDiffusion(aE, aI))
        red = reduced_variables(N_E, N_I, params, POT)
        if not (-3 <= red.w_F <= 3 and -3 <= red.wt_F <= 3):
            continue
        worst = max(worst,
                    abs(I1_eval(N_E, N_I, params, POT) - double_integral(red.w_F, red.w_R)),
                    abs(I2_eval(N_E, N_I, params, POT) - double_integral(red.wt_F, red.wt_R)))
        n += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8
    criterion(3, ok, f"max |single - double| = {worst:.2e} over {n} tuples ({elapsed:.0f} s)")
    assert ok


@tag(4)
def test_c4_blowup_presets(criterion):
    details, ok = [], True
    for name in ("blowup_bEE", "blowup_ci", "blowup_bII"):
        config = preset_config(name)
        grid = Grid.build(config.potentials, config.M)
        art = run_experiment(config)
        rows = art.rows("series")
        status = rows[-1][-1]
        N_E = np.array([r[4] for r in rows])
        meta = dict(art.rows("regime"))
        increasing = len(N_E) >= 21 and bool(np.all(np.diff(N_E[-20:]) > 0))
        t_stop = meta["t_stop"]
        cert = meta["certificate_satisfied"]
        consistent = status == "BlowUp" or not cert  # certificate is one-sided
        good = (status == "BlowUp" and t_stop is not None and t_stop < 5.0
                and grid.M == 800 and increasing and consistent)
        ok &= good
        details.append(f"{name}: {status} at t={t_stop if t_stop is None else round(t_stop, 4)}, "
                       f"last-20 increasing={increasing}, certificate={cert}")
    criterion(4, ok, "; ".join(details))
    assert ok


@tag(5)
def test_c5_conservation_and_order(criterion):
    params = NetworkParams(0.1, 0.1, 0.1, 0.1)
    grid = Grid.build(PotentialParams(-4.0, 1.0, 2.0), 400)
    rho = maxwellian_initial(grid, 0.0, math.sqrt(0.5))
    rho_I = maxwellian_initial(grid, 0.0, math.sqrt(0.5), "I")
    out = run_simulation((rho, rho_I), params, grid, SolverConfig(t_end=10.0, record_every=50))
    drift = max(np.abs(out.series.column("mass_E") - 1).max(),
                np.abs(out.series.column("mass_I") - 1).max())
    p_weno = weno_order()
    p_rk = reference_rk3_order()
    ok = (out.status is RunStatus.COMPLETED and drift <= 1e-6 and p_weno >= 4.5
          and abs(p_rk - 3) <= 0.1)
    criterion(5, ok, f"mass drift {drift:.1e} over t in [0,10]; WENO order {p_weno:.2f}; "
                     f"RK3 order {p_rk:.3f}")
    assert ok


@tag(6)
def test_c6_steady_state_seeding(criterion):
    params = NetworkParams(0.5, 0.5, 3.0, 0.5)
    grid = Grid.build(PotentialParams(-4.0, 1.0, 2.0), 800)
    (state,) = find_steady_states(params, grid.potential, grid=grid)
    rho_E = state.profile_E.values / state.profile_E.mass(grid)
    rho_I = state.profile_I.values / state.profile_I.mass(grid)
    times = np.arange(0.5, 5.01, 0.5)
    out = run_simulation((PopulationDensity(rho_E, "E"), PopulationDensity(rho_I, "I")), params,
                         grid, SolverConfig(t_end=5.0, record_every=100), snapshot_times=times)
    dev = max(max(np.abs(s.rho_E - rho_E).max(), np.abs(s.rho_I - rho_I).max())
              for s in out.snapshots)
    ok = out.status is RunStatus.COMPLETED and len(out.snapshots) == len(times) and dev <= 1e-3
    criterion(6, ok, f"max_t ||rho(t) - rho(0)||_inf = {dev:.2e} at M={grid.M}, t in [0,5]")
    assert ok


@tag(7)
def test_c7_stability(criterion):
    two = dict(run_preset("stability_two").rows("regime"))
    three = dict(run_preset("stability_three").rows("regime"))
    conv2 = [two[f"root{k}_converges"] for k in range(2)]
    dep2 = [two[f"root{k}_departs"] for k in range(2)]
    conv3 = [three[f"root{k}_converges"] for k in range(3)]
    ok = (two["root_count"] == 2 and conv2 == [True, False] and dep2[1]
          and three["root_count"] == 3 and conv3 == [True, False, False])
    criterion(7, ok, f"two: converges {conv2}, upper departs {dep2[1]}; "
                     f"three: converges {conv3}")
    assert ok


@tag(8)
def test_c8_entropy_decay(criterion):
    params = NetworkParams(0.1, 0.1, 0.1, 0.1)
    grid = Grid.build(PotentialParams(-4.0, 1.0, 2.0), 400)
    (st,) = find_steady_states(params, grid.potential, grid=grid)
    prof_E = PopulationDensity(st.profile_E.values / st.profile_E.mass(grid), "E")
    prof_I = PopulationDensity(st.profile_I.values / st.profile_I.mass(grid), "I")
    # reference: the scheme's own equilibrium, reached from the stationary profile
    relaxed = run_simulation((prof_E, prof_I), params, grid,
                             SolverConfig(t_end=10.0, record_every=1000)).final_state
    ref = EntropyReference(relaxed.rho_E, relaxed.rho_I, relaxed.rates.N_E, relaxed.rates.N_I)
    bump = maxwellian_initial(grid, 0.0, math.sqrt(0.5)).values
    init = (PopulationDensity(0.5 * ref.rho_E.values + 0.5 * bump, "E"),
            PopulationDensity(0.5 * ref.rho_I.values + 0.5 * bump, "I"))
    admissible = entropy_admissibility(ref, make_state(*init, params, grid), params, grid)
    out = run_simulation(init, params, grid, SolverConfig(t_end=10.0, record_every=50),
                         entropy_ref=ref)
    E = out.series.column("E_t")
    monotone = bool(np.all(np.diff(E) <= 1e-8))
    fit = decay_rate_fit(out.series)
    ok = admissible and monotone and fit.mu_hat > 0 and fit.r_squared >= 0.95
    criterion(8, ok, f"admissible={admissible}, E[0]={E[0]:.3e}, monotone={monotone}, "
                     f"mu_hat={fit.mu_hat:.3f}, R^2={fit.r_squared:.4f}")
    assert ok


@tag(9)
def test_c9_bisection_contract(criterion):
    worst_res, worst_slope = 0.0, 0.0
    rng = np.random.default_rng(7)
    for b, _ in FIVE_SETS:
        params = NetworkParams(*b)
        for N_E in np.concatenate(([0.0], np.geomspace(1e-4, 50, 15))):
            _, res = solve_NI_with_residual(N_E, params, POT)
            worst_res = max(worst_res, abs(res))
        for N_E in rng.uniform(0.05, 5.0, 4):
            h = 1e-4 * max(1.0, N_E)
            fd = (solve_NI_with_residual(N_E + h, params, POT)[0]
                  - solve_NI_with_residual(N_E - h, params, POT)[0]) / (2 * h)
            worst_slope = max(worst_slope, abs(fd - NI_slope(N_E, params, POT)))
    params = NetworkParams(1.8, 0.75, 0.5, 0.25)
    limit = params.b_EI / (POT.V_F - POT.V_R + params.b_II)
    rel = abs(NI_slope(1e3, params, POT) / limit - 1)
    ok = worst_res <= 1e-8 and worst_slope <= 1e-4 and rel <= 0.01
    criterion(9, ok, f"max |residual| {worst_res:.1e}; max |FD - slope| {worst_slope:.1e}; "
                     f"slope(1e3) off limit by {100 * rel:.2f}%")
    assert ok


@tag(10)
def test_c10_determinism(criterion):
    serial = run_preset("crossed_sweep", workers=1)
    parallel = run_preset("crossed_sweep", workers=2)
    same_roots = (render_table(*serial.tables["roots"]) == render_table(*parallel.tables["roots"]))
    a = run_experiment(preset_config("blowup_ci"))
    b = run_experiment(preset_config("blowup_ci"))
    same_status = a.rows("series")[-1][-1] == b.rows("series")[-1][-1]
    same_series = render_table(*a.tables["series"]) == render_table(*b.tables["series"])
    ok = same_roots and same_status and same_series
    criterion(10, ok, f"crossed_sweep roots.csv identical (1 vs 2 workers): {same_roots}; "
                      f"blowup_ci status/series identical: {same_status}/{same_series}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
