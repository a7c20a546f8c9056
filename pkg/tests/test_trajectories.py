import numpy as np
import pytest

from opencurrents.engine import steady_state
from opencurrents.models import QubitParams, build_qubit
from opencurrents.stats import correlation, output_current, white_noise_strength
from opencurrents.trajectories import (
    binned_currents,
    estimate_correlation,
    simulate_ensemble,
    simulate_trajectory,
)


def test_dark_qubit_never_jumps():
    sys = build_qubit(QubitParams(gamma_up=0.0))
    rec = simulate_trajectory(sys, 50.0, seed=1)
    assert rec.times.size == 0 and rec.channels.size == 0


def test_seed_determinism(pumped_qubit):
    sys, ss = pumped_qubit
    a = simulate_trajectory(sys, 10.0, seed=5, ss=ss)
    b = simulate_trajectory(sys, 10.0, seed=5, ss=ss)
    c = simulate_trajectory(sys, 10.0, seed=6, ss=ss)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.channels, b.channels)
    assert not np.array_equal(a.times, c.times)
    ens = simulate_ensemble(sys, 3, 10.0, seed=5)
    assert [r.seed for r in ens] == [5, 6, 7]
    assert np.array_equal(ens[0].times, a.times)


def test_jump_times_are_ordered_and_bounded(driven_qubit):
    sys, ss = driven_qubit
    rec = simulate_trajectory(sys, 15.0, seed=2, ss=ss)
    assert np.all(np.diff(rec.times) > 0)
    assert rec.times.min() >= 0 and rec.times.max() <= 15.0
    assert set(rec.channels) <= {0, 1}
    with pytest.raises(ValueError):
        simulate_trajectory(sys, 0.0, seed=2, ss=ss)


def test_pumped_qubit_channel_rates(pumped_qubit):
    sys, ss = pumped_qubit
    recs = simulate_ensemble(sys, 200, 20.0, seed=11)
    total = 200 * 20.0
    for ch in (0, 1):
        n = sum(int(np.count_nonzero(r.channels == ch)) for r in recs)
        # Poisson counts at rate 1/2 per channel
        assert abs(n / total - 0.5) < 4 * np.sqrt(0.5 / total)


def test_pumped_qubit_estimator(pumped_qubit):
    sys, ss = pumped_qubit
    recs = simulate_ensemble(sys, 200, 20.0, seed=3)
    est = estimate_correlation(recs, 0.1, [0.0, 0.5, 1.0, 2.0], sys.weights)
    assert abs(est.J - output_current(sys, ss)) < 4 * est.J_stderr
    assert abs(est.K - white_noise_strength(sys, ss)) < 4 * est.K_stderr
    assert np.all(np.abs(est.estimate) < 4 * est.stderr)
    assert not est.low_statistics


def test_driven_qubit_correlation_within_errors(driven_qubit):
    sys, ss = driven_qubit
    tau = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    recs = simulate_ensemble(sys, 300, 20.0, seed=21)
    est = estimate_correlation(recs, 0.05, tau, sys.weights)
    exact = correlation(sys, ss, tau)
    # bin averaging smooths C(0) over one bin width; the lag-zero deviation is O(bin_width)
    assert np.all(np.abs(est.estimate[1:] - exact[1:]) < 4 * est.stderr[1:])


def test_stderr_scales_as_inverse_sqrt_records(driven_qubit):
    sys, _ = driven_qubit
    recs = simulate_ensemble(sys, 300, 10.0, seed=40)
    small = estimate_correlation(recs[:150], 0.1, [0.0, 1.0], sys.weights)
    large = estimate_correlation(recs, 0.1, [0.0, 1.0], sys.weights)
    assert small.J_stderr / large.J_stderr == pytest.approx(np.sqrt(2), rel=0.2)


def test_estimator_guards(pumped_qubit):
    sys, _ = pumped_qubit
    recs = simulate_ensemble(sys, 10, 5.0, seed=0)
    with pytest.warns(RuntimeWarning):
        est = estimate_correlation(recs, 0.1, [0.0, 1.0], sys.weights)
    assert est.low_statistics
    with pytest.warns(RuntimeWarning), pytest.raises(ValueError):
        estimate_correlation(recs, 0.5, [0.0, 0.1, 0.2], sys.weights)
    with pytest.warns(RuntimeWarning), pytest.raises(ValueError):
        estimate_correlation(recs, 0.1, [0.0, 6.0], sys.weights)


def test_binned_currents_are_weighted_counts():
    from opencurrents.trajectories import JumpRecord

    rec = JumpRecord(np.array([0.05, 0.15, 0.16, 0.95]), np.array([0, 1, 0, 1]), 1.0, 0)
    I = binned_currents([rec], np.array([-1.0, 2.0]), 0.5)
    assert np.allclose(I, [[(-1 + 2 - 1) / 0.5, 2 / 0.5]])


def test_record_csv(tmp_path, pumped_qubit):
    sys, ss = pumped_qubit
    rec = simulate_trajectory(sys, 5.0, seed=9, ss=ss)
    path = tmp_path / "deep" / "rec.csv"
    rec.to_csv(path)
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    assert np.allclose(data[:, 0], rec.times) and np.array_equal(data[:, 1].astype(int), rec.channels)
