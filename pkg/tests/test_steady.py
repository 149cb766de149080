import math

import numpy as np
import pytest

from nnlif.errors import BracketFailure, UndefinedLimit, ValidationError
from nnlif.model import ConstantDiffusion, NetworkParams, PotentialParams
from nnlif.steady import (
    F_limit,
    F_of_NE,
    I1_eval,
    I2_eval,
    NI_slope,
    Parity,
    ScanSettings,
    bisect,
    bifurcation_sweep,
    classify_regime,
    find_steady_states,
    flux_integral,
    reduced_variables,
    solve_NI,
    solve_NI_with_residual,
)

from oracles import double_integral

POT = PotentialParams()
CASO1_RIGHT = NetworkParams(1.8, 0.75, 0.5, 0.25)
CASO2_ONE = NetworkParams(0.5, 0.5, 3.0, 0.5)


def test_flux_integral_degenerate_gap():
    assert flux_integral(1.3, 1.3) == 0.0
    assert flux_integral(-40.0, -40.0) == 0.0


def test_I2_matches_double_integral_at_rest():
    r = reduced_variables(0.0, 0.0, CASO1_RIGHT, POT)
    assert I2_eval(0.0, 0.0, CASO1_RIGHT, POT) == pytest.approx(
        double_integral(r.wt_F, r.wt_R), abs=1e-8)


def test_I1_matches_double_integral_uncoupled():
    # V0 = 0, a = 1: w_F = 2, w_R = 1
    assert I1_eval(0.0, 0.0, NetworkParams(), POT) == pytest.approx(double_integral(2.0, 1.0),
                                                                      abs=1e-8)


def test_I1_matches_double_integral_with_unequal_diffusion():
    p = NetworkParams(1.0, 0.5, 0.5, 0.25, diffusion=ConstantDiffusion(2.0, 0.5))
    r = reduced_variables(0.3, 0.7, p, POT)
    assert I1_eval(0.3, 0.7, p, POT) == pytest.approx(double_integral(r.w_F, r.w_R), rel=1e-8)
    assert I2_eval(0.3, 0.7, p, POT) == pytest.approx(double_integral(r.wt_F, r.wt_R), rel=1e-8)


@pytest.mark.parametrize("N_E,N_I", [(0.5, 0.5), (2.0, 1.0), (0.1, 3.0)])
def test_integral_monotonicity(N_E, N_I):
    h = 1e-4
    for f in (I1_eval, I2_eval):
        assert f(N_E, N_I + h, CASO1_RIGHT, POT) > f(N_E, N_I, CASO1_RIGHT, POT)
        assert f(N_E + h, N_I, CASO1_RIGHT, POT) < f(N_E, N_I, CASO1_RIGHT, POT)


def test_bisect_contract():
    root, res = bisect(lambda x: x * x - 2.0, 0.0, 2.0)
    assert abs(res) <= 1e-8
    assert root == pytest.approx(math.sqrt(2), abs=1e-8)
    with pytest.raises(BracketFailure):
        bisect(lambda x: x * x + 1.0, -1.0, 1.0)
    assert bisect(lambda x: x - 1.0, 1.0, 3.0) == (1.0, 0.0)


def test_solve_NI_residual_and_positivity():
    for N_E in (0.0, 0.1, 1.0, 10.0, 100.0):
        N_I, res = solve_NI_with_residual(N_E, CASO1_RIGHT, POT)
        assert N_I > 0
        assert abs(res) <= 1e-8
    with pytest.raises(ValueError):
        solve_NI(-1.0, CASO1_RIGHT, POT)


def test_solve_NI_bracket_cap():
    # without self-inhibition I_2 no longer grows with N_I; a huge drive makes
    # it ~1e-9, so N_I I_2 stays below 1 on [0, 1e6]
    with pytest.raises(BracketFailure):
        solve_NI(1e9, NetworkParams(b_EI=1.0), POT)


def test_NI_nondecreasing_with_bounded_slope():
    xs = np.linspace(0.0, 20.0, 41)
    NI = np.array([solve_NI(x, CASO1_RIGHT, POT) for x in xs])
    d = np.diff(NI) / np.diff(xs)
    assert np.all(d > 0)
    assert np.all(d < CASO1_RIGHT.b_EI / CASO1_RIGHT.b_II)


def test_NI_slope_matches_finite_difference():
    rng = np.random.default_rng(3)
    for N_E in rng.uniform(0.1, 20.0, 5):
        h = 1e-3
        fd = (solve_NI(N_E + h, CASO1_RIGHT, POT) - solve_NI(N_E - h, CASO1_RIGHT, POT)) / (2 * h)
        assert NI_slope(N_E, CASO1_RIGHT, POT) == pytest.approx(fd, abs=1e-4)


def test_NI_slope_special_cases():
    assert NI_slope(1.0, NetworkParams(b_EE=1.0), POT) == 0.0
    limit = CASO1_RIGHT.b_EI / (POT.V_F - POT.V_R + CASO1_RIGHT.b_II)
    assert NI_slope(1e3, CASO1_RIGHT, POT) == pytest.approx(limit, rel=0.01)


def test_F_at_zero_and_near_zero():
    assert F_of_NE(0.0, CASO1_RIGHT, POT) == 0.0
    assert F_of_NE(2e-3, CASO1_RIGHT, POT) > F_of_NE(1e-3, CASO1_RIGHT, POT)


def test_F_limit_cases():
    assert F_limit(CASO1_RIGHT, POT) == pytest.approx(2 / 3)
    assert F_of_NE(1e3, CASO1_RIGHT, POT) == pytest.approx(2 / 3, rel=0.01)
    assert F_limit(CASO2_ONE, POT) == math.inf
    assert F_limit(NetworkParams(b_EE=2.5, b_II=0.25), POT) == pytest.approx(1 / 2.5)
    with pytest.raises(UndefinedLimit):
        F_limit(NetworkParams(), POT)


def test_parity_examples():
    r = classify_regime(CASO1_RIGHT, POT)
    assert (r.lhs, r.rhs) == (1.0, pytest.approx(1.625))
    assert r.parity is Parity.EVEN
    r = classify_regime(CASO2_ONE, POT)
    assert r.rhs == pytest.approx(-1.25) and r.parity is Parity.ODD
    r = classify_regime(NetworkParams(3.0, 7.0, 0.5, 0.25), POT)
    assert r.rhs == pytest.approx(0.0) and r.parity is Parity.ODD


def test_degenerate_parity():
    # (V_F-V_R)^2 = 1 = (b_EE - b_II) + b_EE b_II - b_IE b_EI with b_EE = 1, b_II = 0.5, b_IE b_EI = 0
    r = classify_regime(NetworkParams(b_EE=1.0, b_II=0.5), POT)
    assert r.parity is Parity.DEGENERATE
    assert not r.coupled


@pytest.mark.parametrize("params,count", [
    (CASO1_RIGHT, 2),
    (CASO2_ONE, 1),
    (NetworkParams(3.0, 7.0, 0.5, 0.25), 3),
    (NetworkParams(3.0, 0.75, 0.5, 5.0), 0),
])
def test_root_counts_and_parity(params, count):
    states = find_steady_states(params, POT, with_profiles=False)
    assert len(states) == count
    r = classify_regime(params, POT)
    expected = Parity.EVEN if count % 2 == 0 else Parity.ODD
    assert r.parity is expected
    for s in states:
        assert abs(s.residuals[0]) <= 1e-8 and abs(s.residuals[1]) <= 1e-8
        assert F_of_NE(s.N_E_star, params, POT) == pytest.approx(1.0, abs=1e-8)
    assert [s.N_E_star for s in states] == sorted(s.N_E_star for s in states)


def test_two_state_certificate():
    # 2 a_E b_EE = 3.6 > [V_R + b_IE N_I(2)] = 1 + 0.75 N_I(2): not certified
    assert not classify_regime(CASO1_RIGHT, POT).two_state_certified
    strong = NetworkParams(2.5, 30.0, 0.05, 0.25)
    r = classify_regime(strong, POT)
    assert r.parity is Parity.EVEN and r.two_state_certified
    assert len(find_steady_states(strong, POT, with_profiles=False)) >= 2


def test_scan_settings_validation():
    with pytest.raises(ValidationError):
        ScanSettings(n_points=10)
    with pytest.raises(ValidationError):
        ScanSettings(N_E_max=-1.0)


def test_single_value_sweep_equals_find_steady_states():
    (row,) = bifurcation_sweep(NetworkParams(3.0, 0.0, 0.5, 0.25), POT, "b_IE", [7.0])
    states = find_steady_states(NetworkParams(3.0, 7.0, 0.5, 0.25), POT, with_profiles=False)
    assert row.error is None
    assert row.roots == [(s.N_E_star, s.N_I_star, *s.residuals) for s in states]


def test_sweep_rejects_other_parameters():
    with pytest.raises(ValueError):
        bifurcation_sweep(CASO1_RIGHT, POT, "nu_ext", [1.0])


def test_sweep_order_independent_of_workers():
    values = [2.5, 0.5, 1.5, 1.0]
    serial = bifurcation_sweep(NetworkParams(b_II=0.25), POT, "b_EE", values, workers=1)
    pooled = bifurcation_sweep(NetworkParams(b_II=0.25), POT, "b_EE", values, workers=2)
    assert [r.value for r in pooled] == values
    assert [r.roots for r in serial] == [r.roots for r in pooled]
    assert [r.count for r in serial] == [0, 1, 2, 1]
