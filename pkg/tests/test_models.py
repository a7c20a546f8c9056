import numpy as np
import pytest
import scipy.sparse as sp

from opencurrents import operators as ops
from opencurrents.engine import steady_state
from opencurrents.errors import CapacityError, DomainError, InvalidTruncationError, TruncationTooSmallError
from opencurrents.models import (
    KerrParams,
    QubitParams,
    XYZParams,
    build_kerr,
    build_qubit,
    build_xyz,
    check_kerr_truncation,
    default_nmax,
    lattice_automorphisms,
    lattice_bonds,
)
from opencurrents.symmetry import LiouvilleSymmetry


@pytest.mark.parametrize("shape,nbonds", [((1, 2), 1), ((2, 2), 4), ((2, 3), 9), ((3, 3), 18)])
def test_bond_counts(shape, nbonds):
    assert len(lattice_bonds(*shape)) == nbonds


def test_doubled_bonds_repeat_extent_two_wraps():
    assert len(lattice_bonds(2, 2, doubled=True)) == 8
    assert len(lattice_bonds(2, 3, doubled=True)) == 12
    assert len(lattice_bonds(3, 3, doubled=True)) == 18


@pytest.mark.parametrize("shape,order", [((1, 2), 2), ((2, 2), 8), ((2, 3), 12), ((3, 3), 72)])
def test_automorphism_group_orders(shape, order):
    maps = lattice_automorphisms(*shape)
    assert len(maps) == order
    bonds = set(lattice_bonds(*shape))
    for m in maps:
        assert {(min(m[a], m[b]), max(m[a], m[b])) for a, b in bonds} == bonds


def burnside_sector_dim(sym, p):
    # orbit count = average number of fixed basis pairs (a, b) with the given parity
    d = sym.dim
    total = 0
    for perm in sym.perms:
        fixed = np.flatnonzero(perm == np.arange(d))
        par = sym.parity[fixed]
        total += int(np.sum((par[:, None] ^ par[None, :]) == p))
    assert total % sym.order == 0
    return total // sym.order


@pytest.mark.parametrize("shape,dims", [((2, 2), (31, 24)), ((2, 3), (226, 204)), ((3, 3), (2240, 2240))])
def test_sector_dimensions(shape, dims):
    sys = build_xyz(XYZParams(rows=shape[0], cols=shape[1]))
    for p, expected in enumerate(dims):
        P = sys.symmetry.sector_basis(p)
        assert P.shape[1] == expected == burnside_sector_dim(sys.symmetry, p)


def test_sector_basis_is_isometry_and_invariant():
    sys = build_xyz(XYZParams(Jy=1.3, rows=2, cols=3), symmetric=True)
    L = ops.to_sparse(sys.liouvillian)
    for p in (0, 1):
        P = sys.symmetry.sector_basis(p)
        assert abs(P.T @ P - sp.identity(P.shape[1])).max() < 1e-14
        LP = L @ P
        assert abs(P @ (P.T @ LP) - LP).max() < 1e-12


def test_hamiltonian_symmetries():
    sys = build_xyz(XYZParams(Jy=1.2, rows=2, cols=3))
    H = ops.to_dense(sys.hamiltonian)
    assert np.allclose(H, H.conj().T)
    parity = np.diag((-1.0) ** sys.symmetry.parity)
    assert np.allclose(parity @ H, H @ parity)
    for perm in sys.symmetry.perms:
        U = np.eye(sys.dim)[perm]
        assert np.allclose(U @ H @ U.T, H)


def test_xyz_metadata_and_capacity():
    sys = build_xyz(XYZParams(rows=2, cols=3))
    assert sys.dim == 64 and len(sys.jumps) == 6
    assert sys.metadata["nbonds"] == 9
    assert sys.metadata["bond_convention"] == "deduplicated"
    assert XYZParams(rows=2, cols=3).L == pytest.approx(np.sqrt(6))
    with pytest.raises(CapacityError):
        build_xyz(XYZParams(rows=2, cols=5))
    with pytest.raises(DomainError):
        XYZParams(gamma=0.0)


def test_two_site_hamiltonian_by_hand():
    Jx, Jy, Jz = 0.9, 1.1, 1.0
    sys = build_xyz(XYZParams(Jx=Jx, Jy=Jy, Jz=Jz, rows=1, cols=2, periodic=False))
    s = {a: ops.pauli(a) for a in "xyz"}
    H = sum(J * np.kron(s[a], s[a]) for a, J in zip("xyz", (Jx, Jy, Jz)))
    assert np.allclose(ops.to_dense(sys.hamiltonian), H)


def test_kerr_parameter_domain():
    with pytest.raises(DomainError):
        KerrParams(U=0.0)
    with pytest.raises(DomainError):
        KerrParams(G=-1.0)
    with pytest.raises(InvalidTruncationError):
        KerrParams(nmax=1)
    assert KerrParams(G=0.0, U=1.0).truncation == 30
    assert default_nmax(1.0, 1 / 30) == 85


def test_kerr_vacuum_without_drive():
    sys = build_kerr(KerrParams(G=0.0, U=0.1, nmax=10))
    ss = steady_state(sys, check_degeneracy=False)
    assert ss.rho[0, 0].real == pytest.approx(1.0, abs=1e-12)
    assert ss.purity == pytest.approx(1.0, abs=1e-12)


def test_kerr_truncation_guard():
    small = build_kerr(KerrParams(U=1 / 30, G=1.5, nmax=10))
    with pytest.raises(TruncationTooSmallError):
        check_kerr_truncation(steady_state(small, check_degeneracy=False))
    ok = build_kerr(KerrParams(U=0.2, G=1.0))
    assert check_kerr_truncation(steady_state(ok, check_degeneracy=False)) < 1e-8


def test_pumped_qubit_is_maximally_mixed(pumped_qubit):
    sys, ss = pumped_qubit
    assert np.allclose(ss.rho, np.eye(2) / 2, atol=1e-14)
    assert len(build_qubit(QubitParams(gamma_up=0.0)).jumps) == 1


def test_symmetry_rejects_non_permutation():
    with pytest.raises(ValueError):
        LiouvilleSymmetry(np.array([[0, 0]]), np.array([0, 1]))
