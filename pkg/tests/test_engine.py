import numpy as np
import pytest
import scipy.linalg as sl
import scipy.sparse as sp

from opencurrents import operators as ops
from opencurrents.engine import (
    LindbladSystem,
    liouvillian_spectrum,
    propagate,
    resolvent_solve,
    steady_state,
)
from opencurrents.errors import DegenerateSteadyStateError, ShapeError, SingularSystemError
from opencurrents.models import KerrParams, QubitParams, XYZParams, build_kerr, build_qubit, build_xyz
from opencurrents.settings import override
from opencurrents.stats import characteristic_timescale, correlation, power_spectrum


def dense_L(sys):
    return ops.to_dense(sys.liouvillian)


def test_driven_decay_steady_state_matches_bloch_solution():
    # excited population w^2 / (gamma^2 + 2 w^2) with Rabi frequency w = 2 Omega
    Omega, g = 0.7, 1.3
    ss = steady_state(build_qubit(QubitParams(Omega=Omega, gamma_down=g, gamma_up=0.0)))
    w = 2 * Omega
    assert ss.rho[0, 0].real == pytest.approx(w**2 / (g**2 + 2 * w**2), abs=1e-13)
    assert np.trace(ss.rho).real == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(ss.rho, ss.rho.conj().T)
    assert np.linalg.eigvalsh(ss.rho).min() > -1e-14


def test_steady_state_is_dense_null_vector(driven_qubit):
    sys, ss = driven_qubit
    null = sl.null_space(dense_L(sys))
    assert null.shape[1] == 1
    ref = ops.unvec(null[:, 0], 2)
    ref /= np.trace(ref)
    assert np.allclose(ss.rho, ref, atol=1e-12)


def test_pure_dephasing_has_degenerate_steady_state():
    sys = LindbladSystem(sp.csr_matrix((2, 2), dtype=complex), [ops.pauli("z")])
    with pytest.raises(DegenerateSteadyStateError):
        steady_state(sys)


def test_jump_dimension_mismatch():
    with pytest.raises(ShapeError):
        LindbladSystem(np.eye(2), [np.eye(3)])
    with pytest.raises(ShapeError):
        LindbladSystem(np.eye(2), [np.eye(2)], weights=[1.0, 2.0])


def test_decay_spectrum():
    # amplitude damping: 0, -g/2 (twice), -g
    g = 0.8
    info = liouvillian_spectrum(build_qubit(QubitParams(gamma_down=g, gamma_up=0.0)), nev=4)
    assert np.allclose(np.sort(info.eigenvalues.real), [-g, -g / 2, -g / 2, 0.0], atol=1e-12)
    assert info.gap == pytest.approx(g / 2)
    assert info.has_zero_mode
    assert info.slowest_frequency == 0.0


def test_propagate_excited_population_decays_exponentially():
    g = 0.8
    sys = build_qubit(QubitParams(gamma_down=g, gamma_up=0.0))
    excited = ops.vec(np.diag([1.0, 0.0]))
    tau = np.linspace(0, 5, 11)
    pe = propagate(sys, excited, tau, observable=ops.vec(np.diag([1.0, 0.0])))
    assert np.allclose(pe, np.exp(-g * tau), atol=1e-13)
    full = propagate(sys, excited, tau)
    assert full.shape == (11, 4)


def test_propagate_matches_dense_expm(driven_qubit):
    sys, ss = driven_qubit
    v0 = ops.vec(np.array([[0.2, 0.1 - 0.3j], [0.1 + 0.3j, 0.8]]))
    tau = [0.0, 0.4, 1.7]
    out = propagate(sys, v0, tau)
    for t, v in zip(tau, out):
        assert np.allclose(v, sl.expm(t * dense_L(sys)) @ v0, atol=1e-12)


@pytest.mark.parametrize("grid", [[0.0, 1.0, 1.0], [1.0, 0.5], [-0.1, 1.0], []])
def test_bad_tau_grid(driven_qubit, grid):
    sys, ss = driven_qubit
    with pytest.raises(ValueError):
        propagate(sys, ss.rho_vec, grid)


def test_propagate_vector_length(driven_qubit):
    sys, _ = driven_qubit
    with pytest.raises(ShapeError):
        propagate(sys, np.zeros(3), [0.0])


def test_resolvent_at_zero_needs_trace_free_rhs(driven_qubit):
    sys, ss = driven_qubit
    with pytest.raises(SingularSystemError):
        resolvent_solve(sys, 0.0, ss.rho_vec)


def test_resolvent_matches_dense_solve(driven_qubit):
    sys, ss = driven_qubit
    rhs = ops.vec(np.array([[0.3, 0.2j], [-0.2j, -0.3]]))
    for w in (0.5, 2.0):
        ref = np.linalg.solve(1j * w * np.eye(4) - dense_L(sys), rhs)
        assert np.allclose(resolvent_solve(sys, w, rhs), ref, atol=1e-12)
    # Drazin branch: trace-free solution of -L y = rhs
    y = resolvent_solve(sys, 0.0, rhs)
    assert np.allclose(-dense_L(sys) @ y, rhs, atol=1e-12)
    assert abs(ops.identity_vec(2) @ y) < 1e-12


def test_hessenberg_resolvent_on_large_dense_sector():
    # nmax = 30: each parity sector has 450 states and is solved in Hessenberg form
    sys = build_kerr(KerrParams(U=0.1, G=1.2, nmax=30))
    ss = steady_state(sys, check_degeneracy=False)
    a = ops.to_dense(sys.jump_operators[0])
    rhs = ops.vec(a @ ss.rho)  # odd sector
    L = dense_L(sys)
    for w in (0.3, 1.7):
        ref = np.linalg.solve(1j * w * np.eye(900) - L, rhs)
        assert np.allclose(resolvent_solve(sys, w, rhs), ref, atol=1e-10)


def test_sector_reduction_agrees_with_full_space():
    p = XYZParams(Jy=1.2)
    sym, full = build_xyz(p), build_xyz(p, symmetric=False)
    a, b = steady_state(sym), steady_state(full)
    assert a.sector == "parity0" and b.sector == "full"
    assert np.allclose(a.rho, b.rho, atol=1e-12)
    tau = np.linspace(0, 6, 13)
    assert np.allclose(correlation(sym, a, tau), correlation(full, b, tau), atol=1e-11)
    assert characteristic_timescale(sym, a) == pytest.approx(characteristic_timescale(full, b), rel=1e-10)


def test_sparse_krylov_path_matches_dense():
    p = XYZParams(Jy=1.1)
    dense = build_xyz(p)
    with override(dense_hilbert_max=2):
        sparse = build_xyz(p)
    assert sp.issparse(sparse.liouvillian) and not sp.issparse(dense.liouvillian)
    sd, ssp = steady_state(dense), steady_state(sparse)
    assert np.allclose(sd.rho, ssp.rho, atol=1e-11)
    tau = np.linspace(0, 8, 17)
    assert np.allclose(correlation(dense, sd, tau), correlation(sparse, ssp, tau), atol=1e-9)
    w = [0.0, 0.7, 2.0]
    assert np.allclose(power_spectrum(dense, sd, w), power_spectrum(sparse, ssp, w), rtol=1e-9)
