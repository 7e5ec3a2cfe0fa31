import numpy as np
import pytest

from collective_twa import AtomEnsemble, DriveField, build_matrices, build_square_lattice, dicke_override
from collective_twa.errors import IntegratorFailureError, InvalidArgumentError
from collective_twa.geometry import rabi_vector
from collective_twa.observables import dicke_degeneracy, trapping_steady_state
from collective_twa.oracles import (
    LindbladSystem,
    basis_state,
    dicke_evolve,
    initial_density,
    lindblad_evolve,
    single_atom_exact_drift,
    single_atom_exact_sde_step,
    single_atom_sigma_z,
)
from collective_twa.rng import CounterRNG

T = np.linspace(0.0, 2.0, 41)


def test_dicke_single_atom():
    sol = dicke_evolve(1, "excited", T)
    assert np.allclose(sol.excitations, np.exp(-T), atol=1e-12)
    assert np.allclose(sol.rate, np.exp(-T), atol=1e-12)


def test_dicke_pair_closed_form():
    sol = dicke_evolve(2, "excited", T)
    p1 = np.exp(-2 * T)
    p0 = 2 * T * np.exp(-2 * T)
    pm = 1 - p1 - p0
    assert np.allclose(sol.excitations, 1 + p1 - pm, atol=1e-12)
    # rate = 2 p_1 + 2 p_0 from (j+m)(j-m+1)
    assert np.allclose(sol.rate, 2 * p1 + 2 * p0, atol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_mixed_long_time_matches_trapping(n):
    sol = dicke_evolve(n, "mixed", np.array([0.0, 30.0]))
    assert sol.excitations[-1] == pytest.approx(trapping_steady_state(n)[1], abs=1e-8)
    assert sol.excitations[0] == pytest.approx(n / 2, abs=1e-12)


def test_ladder_probability_conserved():
    sol = dicke_evolve(6, "mixed", T)
    for lad in sol.ladders:
        tot = lad.populations.sum(axis=1)
        assert np.abs(tot - tot[0]).max() < 1e-9 * T[-1]
        assert lad.populations.min() >= -1e-9
    assert sum(l.populations[0].sum() for l in sol.ladders) == pytest.approx(1.0)


def test_dicke_step_refinement():
    a = dicke_evolve(16, "excited", T)
    b = dicke_evolve(16, "excited", T, max_step=0.5e-4 / 16)
    assert np.abs(a.excitations - b.excitations).max() < 1e-8
    assert np.abs(a.rate - b.rate).max() < 1e-8


def test_dicke_negative_population_detected():
    with pytest.raises(IntegratorFailureError):
        dicke_evolve(16, "excited", np.array([0.0, 2.0]), max_step=0.5)


def test_dicke_grid_validation():
    with pytest.raises(InvalidArgumentError):
        dicke_evolve(4, "excited", [0.0, 0.5, 0.5])


def test_dicke_variance_of_pure_ladder_state():
    sol = dicke_evolve(4, "excited", T)
    assert sol.sz_variance[0] == pytest.approx(0.0, abs=1e-14)
    assert np.all(sol.sz_variance >= -1e-12)


def test_lindblad_single_atom():
    ens = AtomEnsemble([[0, 0, 0]])
    sol = lindblad_evolve(ens, t_grid=T, directions=[(0, 0, 1), (1, 0, 0)])
    assert np.allclose(2 * sol.excitations - 1, single_atom_sigma_z(T), atol=1e-10)
    assert np.allclose(sol.total_rate, np.exp(-T), atol=1e-10)
    # circular dipole in the x-y plane: full profile along z, half along x
    assert np.allclose(sol.directional_rates[(0.0, 0.0, 1.0)], np.exp(-T), atol=1e-10)
    assert np.allclose(sol.directional_rates[(1.0, 0.0, 0.0)], 0.5 * np.exp(-T), atol=1e-10)


@pytest.mark.parametrize("n", [2, 4])
def test_lindblad_agrees_with_ladder(n):
    grid = np.linspace(0, 1.0, 11)
    a = lindblad_evolve(dicke_override(n), t_grid=grid)
    b = dicke_evolve(n, "excited", grid)
    assert np.abs(a.excitations - b.excitations).max() < 1e-6
    assert np.abs(a.total_rate - b.rate).max() < 1e-6
    assert np.abs(a.sz_variance - b.sz_variance).max() < 1e-6


def test_lindblad_driven_positivity_and_refinement():
    ens = AtomEnsemble(build_square_lattice(2, 2, 0.8))
    drive = DriveField(5.0)
    grid = np.linspace(0, 1.0, 11)
    a = lindblad_evolve(ens, drive, "ground", grid)
    b = lindblad_evolve(ens, drive, "ground", grid, max_step=5e-4)
    assert np.nanmin(a.min_eigenvalue) >= -1e-8
    assert np.abs(a.excitations - b.excitations).max() < 1e-8
    assert np.abs(a.total_rate - b.total_rate).max() < 1e-8


def test_lindblad_drive_convention():
    # H = -(1/2)(Omega sigma^+ + h.c.) without decay: Rabi flopping at frequency |Omega|
    from collective_twa.couplings import CouplingMatrices
    zero = CouplingMatrices(J=np.zeros((1, 1)), Gamma=np.zeros((1, 1)), G=np.zeros((1, 1)),
                            eigenvalues=np.zeros(1), eigenvectors=np.eye(1))
    grid = np.linspace(0, 3, 31)
    sol = lindblad_evolve(LindbladSystem(zero, rabi=[2.0]), rho0="ground", t_grid=grid)
    assert np.allclose(sol.excitations, np.sin(grid) ** 2, atol=1e-10)
    # <sigma_y> = -sin(Omega t): the drive rotates the ground state towards -y
    assert np.allclose(sol.mean_spin[:, 1], -0.5 * np.sin(2 * grid), atol=1e-10)


def test_lindblad_atom_limit():
    ens = AtomEnsemble(np.arange(11)[:, None] * np.array([[1.0, 0, 0]]))
    with pytest.raises(InvalidArgumentError):
        LindbladSystem(build_matrices(ens))


def test_basis_states():
    rho = basis_state("eg")
    assert rho.shape == (4, 4) and rho[1, 1] == 1
    assert np.trace(initial_density("mixed", 3)) == pytest.approx(1.0)
    assert initial_density("ground", 2)[3, 3] == 1


def test_exact_single_atom_drift_pinned():
    theta = np.arccos(1 / np.sqrt(3))
    assert single_atom_exact_drift(theta) == pytest.approx(np.sqrt(2), rel=1e-14)


def test_exact_single_atom_sde_step():
    theta, phi = np.arccos(1 / np.sqrt(3)), 0.25
    same = single_atom_exact_sde_step(np.array([theta]), np.array([phi]), 0.0, CounterRNG(0))
    assert same[0][0] == theta and same[1][0] == phi
    # theta is deterministic: sqrt(3) cos(theta) follows 2 exp(-t) - 1 up to O(dt)
    th = np.full(1000, theta)
    ph = np.zeros(1000)
    rng = np.random.default_rng(0)
    dt = 1e-3
    worst = 0.0
    for step in range(1, 5001):
        th, ph = single_atom_exact_sde_step(th, ph, dt, rng)
        if step % 250 == 0:
            worst = max(worst, abs(np.sqrt(3) * np.cos(th).mean() - single_atom_sigma_z(step * dt)))
    assert worst < 2e-3


def test_degeneracy_identity():
    for n in range(2, 13):
        js = np.arange(n / 2, -0.25, -1.0)
        assert sum((2 * j + 1) * dicke_degeneracy(n, j) for j in js) == 2**n
