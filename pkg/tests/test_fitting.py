import numpy as np
import pytest

from opencurrents.errors import BracketError, FitError, SubtractionError
from opencurrents.fitting import (
    classify_crossover,
    constant_sign_segment,
    count_zero_crossings,
    dho,
    dho_lorentzian,
    extrapolate_thermodynamic,
    first_onset,
    fit_damped_cosine,
    fit_dho,
    fit_dho_lorentzian,
    late_time_behaviour,
    locate_tau_s_peak,
    rabi_frequency,
    subtract_overdamped,
)

W = np.linspace(0.0, 4.0, 401)


@pytest.mark.parametrize("A,w0,g0,c", [(2.0, 1.3, 0.6, 0.1), (0.5, 0.9, 1.5, 0.0), (3.0, 0.6, 2.5, 0.2)])
def test_dho_recovers_parameters(A, w0, g0, c):
    fit = fit_dho(W, dho(W, A, w0, g0, c))
    assert fit.converged
    assert fit.omega0 == pytest.approx(w0, rel=1e-7)
    assert fit.gamma0 == pytest.approx(g0, rel=1e-7)
    assert fit.amplitude == pytest.approx(A, rel=1e-6)
    assert fit.offset == pytest.approx(c, abs=1e-7)
    assert fit.OmegaR == pytest.approx(rabi_frequency(w0, g0), abs=1e-6)
    assert fit.relative_rms < 1e-8


def test_dho_fit_of_a_dip():
    S = dho(W, -0.4, 1.1, 1.8, 1.0)
    fit = fit_dho(W, S)
    assert fit.amplitude < 0
    assert fit.omega0 == pytest.approx(1.1, rel=1e-6)


def test_dho_standard_errors_shrink_with_noise():
    rng = np.random.default_rng(3)
    clean = dho(W, 2.0, 1.3, 0.6)
    errs = []
    for sigma in (1e-3, 1e-4):
        fit = fit_dho(W, clean + sigma * rng.standard_normal(W.size))
        errs.append(fit.stderr["omega0"])
        assert abs(fit.omega0 - 1.3) < 5 * fit.stderr["omega0"]
    assert errs[1] == pytest.approx(errs[0] / 10, rel=0.3)


def test_fit_window_needs_twenty_points():
    with pytest.raises(FitError):
        fit_dho(W, dho(W, 1.0, 1.0, 1.0), window=(0.0, 0.1))
    fit = fit_dho(W, dho(W, 1.0, 1.0, 1.0), window=(0.5, 2.0))
    assert fit.window == (0.5, 2.0)


def test_dho_plus_lorentzian_recovers_both_modes():
    S = dho_lorentzian(W, 1.0, 1.5, 0.4, 0.3, 0.2, 0.05)
    fit = fit_dho_lorentzian(W, S)
    assert fit.omega0 == pytest.approx(1.5, rel=1e-6)
    assert fit.gamma0 == pytest.approx(0.4, rel=1e-6)
    assert fit.gamma2 == pytest.approx(0.2, rel=1e-6)
    assert np.allclose(fit.evaluate(W), S, atol=1e-8)
    d = fit.to_dict()
    assert d["model"] == "DHO_plus_Lorentzian" and d["omega_peak"] == pytest.approx(fit.omega_peak)


def test_damped_cosine_with_background():
    tau = np.linspace(0, 20, 801)
    C = 0.7 * np.cos(1.2 * tau) * np.exp(-0.3 * tau) - 0.2 * np.exp(-0.1 * tau)
    fit = fit_damped_cosine(tau, C, 1.1, 0.25)
    assert fit.omega == pytest.approx(1.2, rel=1e-6)
    assert fit.gamma == pytest.approx(0.3, rel=1e-6)
    assert fit.background == pytest.approx(-0.2, rel=1e-5)


def test_pure_exponential_subtracts_to_one():
    tau = np.linspace(0, 30, 601)
    sub = subtract_overdamped(tau, 2.0 * np.exp(-0.37 * tau))
    assert sub.gamma2 == pytest.approx(0.37, rel=1e-10)
    assert np.allclose(sub.C_sub, 1.0, atol=1e-9)
    assert late_time_behaviour(tau, sub.C_sub) == "constant"
    with pytest.raises(SubtractionError):
        subtract_overdamped(tau, np.zeros_like(tau))


def test_late_time_classes():
    tau = np.linspace(0, 30, 601)
    # subleading oscillation under a slower real mode
    osc = np.exp(-0.5 * tau) + 1e-3 * np.cos(0.8 * tau) * np.exp(-0.7 * tau)
    sub = subtract_overdamped(tau, osc)
    assert sub.gamma2 == pytest.approx(0.5, rel=1e-3)
    assert late_time_behaviour(tau, sub.C_sub) == "oscillatory"
    # two real modes: C_sub relaxes monotonically onto its plateau
    mono = np.exp(-0.5 * tau) + 5 * np.exp(-0.6 * tau)
    assert late_time_behaviour(tau, subtract_overdamped(tau, mono).C_sub) == "monotone"


def test_zero_crossings_and_crossover():
    tau = np.linspace(0, 20, 401)
    assert count_zero_crossings(np.cos(tau) * np.exp(-0.1 * tau)) == 6
    assert classify_crossover(tau, np.cos(tau) * np.exp(-tau)) == "underdamped"
    assert classify_crossover(tau, -np.exp(-tau) + 0.5 * np.exp(-2 * tau)) == "overdamped"
    # crossings below the noise floor are ignored
    assert count_zero_crossings(np.r_[1.0, 1e-14, -1e-14, 1e-14, 0.5]) == 0


def test_tau_s_peak_is_parabola_vertex():
    x = np.linspace(0.9, 1.3, 9)
    y = 5 - (x - 1.112) ** 2
    assert locate_tau_s_peak(x, y) == pytest.approx(1.112, abs=1e-12)
    with pytest.raises(BracketError):
        locate_tau_s_peak(x, x)
    with pytest.raises(BracketError):
        locate_tau_s_peak(x[:4], y[:4])


def test_tau_s_peak_ignores_pole_segment():
    x = np.linspace(0.0, 1.0, 11)
    y = np.r_[50.0, 80.0, 40.0, 1 - (x[3:] - 0.7) ** 2]
    C0 = np.r_[1.0, 1.0, 1.0, -np.ones(8)]
    assert constant_sign_segment(C0) == slice(3, 11)
    assert locate_tau_s_peak(x, y, C0) == pytest.approx(0.7, abs=1e-12)
    assert constant_sign_segment([1.0, np.nan, -1.0, -2.0]) == slice(2, 4)


def test_tau_s_peak_stays_on_one_side_of_a_dark_point():
    # larger values on the short side of the undefined point must not win
    x = np.round(np.arange(0.85, 1.2, 0.01), 2)
    y = np.where(x < 0.9, 1.02, 1.0 - (x - 0.944) ** 2)
    y[x == 0.9] = np.nan
    assert locate_tau_s_peak(x, y, np.ones_like(x)) == pytest.approx(0.944, abs=1e-9)


def test_extrapolation():
    two = extrapolate_thermodynamic([(0.5, 1.2), (0.25, 1.1)])
    assert two.low_confidence and two.extrapolated == pytest.approx(1.0)
    three = extrapolate_thermodynamic([(0.5, 1.2), (0.4, 1.16), (0.25, 1.1)])
    assert not three.low_confidence and three.slope == pytest.approx(0.4)
    with pytest.raises(ValueError):
        extrapolate_thermodynamic([(0.5, 1.0)])


def test_first_onset():
    x = [1.0, 1.1, 1.2, 1.3]
    assert first_onset(x, [0.0, 0.0, 0.2, 0.4]) == 1.2
    assert first_onset(x, [0.0, 0.1, 0.2, 0.4], errors=[1, 1, 0.1, 0.1]) == 1.3
    assert first_onset(x, [0.0] * 4) is None
