import numpy as np
import pytest

from collective_twa import (
    AtomEnsemble,
    DriveField,
    InitialState,
    PhasePoint,
    SimConfig,
    build_matrices,
    build_square_lattice,
    dicke_override,
    run_ensemble,
    run_trajectory,
)
from collective_twa.couplings import CouplingMatrices, factorize
from collective_twa.errors import InvalidArgumentError, NumericalBlowupError
from collective_twa.observables import excitation_number, kuramoto_order, total_emission_rate
from collective_twa.phase_space import SQRT3
from collective_twa.rng import CounterRNG
from collective_twa.sde import (
    cartesian_drift,
    dicke_timestep,
    diffusion_apply,
    drift,
    step_collective_dephasing,
    step_euler_maruyama,
    step_larmor,
)


class GeneratorRNG:
    """Adapter so a numpy Generator can feed the single-step functions."""

    def __init__(self, seed):
        self.g = np.random.default_rng(seed)

    def normals(self, k):
        return self.g.standard_normal(k)


def drift_loop(theta, phi, J, Gamma, rabi, detuning):
    # scalar transcription of the angle drift, independent of the vectorized code
    n = len(theta)
    dth, dph = np.zeros(n), np.zeros(n)
    for i in range(n):
        a = b = 0.0
        for m in range(n):
            pmn = phi[m] - phi[i]
            a += np.sin(theta[m]) * (J[m, i] * np.sin(pmn) + 0.5 * Gamma[m, i] * np.cos(pmn))
            b += np.sin(theta[m]) * (-J[m, i] * np.cos(pmn) + 0.5 * Gamma[m, i] * np.sin(pmn))
        e = rabi[i] * np.exp(1j * phi[i])
        cot = 1.0 / np.tan(theta[i])
        dth[i] = 0.5 * Gamma[i, i] * cot + SQRT3 * a + e.imag
        dph[i] = SQRT3 * cot * b + e.real * cot - detuning
    return dth, dph


@pytest.fixture
def dense4():
    ens = AtomEnsemble(build_square_lattice(2, 2, 0.2))
    return ens, build_matrices(ens)


def test_drift_matches_formula(dense4):
    ens, cm = dense4
    rng = np.random.default_rng(1)
    theta, phi = rng.uniform(0.2, 2.9, 4), rng.uniform(-7, 7, 4)
    rabi = np.array([1.0, 2j, -0.5, 0.3 + 0.4j])
    drive = DriveField(0.0, detuning=0.7)
    got = drift(PhasePoint.from_angles(theta, phi), cm, drive, rabi)
    want = drift_loop(theta, phi, cm.J, cm.Gamma, rabi, 0.7)
    assert np.allclose(got[0], want[0], atol=1e-12) and np.allclose(got[1], want[1], atol=1e-12)


def test_single_atom_drift_value():
    # at theta = pi/2 only the self term survives: sqrt(3)/2
    dth, dph = drift(PhasePoint.from_angles(np.array([np.pi / 2]), np.array([0.4])), dicke_override(1))
    assert dth[0] == pytest.approx(SQRT3 / 2, abs=1e-12)
    assert dph[0] == pytest.approx(0.0, abs=1e-12)


def test_dicke_pair_synchronized_cross_term():
    theta = 1.0
    one = drift(PhasePoint.from_angles(np.array([theta]), np.array([0.3])), dicke_override(1))[0][0]
    two = drift(PhasePoint.from_angles(np.array([theta, theta]), np.array([0.3, 0.3])), dicke_override(2))[0]
    assert np.allclose(two - one, SQRT3 * np.sin(theta) / 2, atol=1e-12)


def test_drive_at_quarter_phase():
    pt = PhasePoint.from_angles(np.array([0.9]), np.array([np.pi / 2]))
    cm = dicke_override(1)
    base = drift(pt, cm)
    driven = drift(pt, cm, rabi=np.array([3.0]))
    assert driven[0][0] - base[0][0] == pytest.approx(3.0)
    assert driven[1][0] - base[1][0] == pytest.approx(0.0, abs=1e-12)


def test_drift_raises_on_non_finite():
    with pytest.raises(NumericalBlowupError):
        drift(PhasePoint(np.array([0.1]), np.array([np.nan])), dicke_override(1))


def test_independent_atoms_decouple():
    cm = CouplingMatrices(J=np.zeros((3, 3)), Gamma=np.eye(3), G=np.eye(3), eigenvalues=np.ones(3),
                          eigenvectors=np.eye(3))
    theta = np.array([0.5, 1.2, 2.0])
    dth, dph = drift(PhasePoint.from_angles(theta, np.array([0.0, 1.0, 2.0])), cm)
    assert np.allclose(dth, 0.5 / np.tan(theta) + SQRT3 / 2 * np.sin(theta))
    assert np.allclose(dph, 0.0)


def test_dicke_permutation_symmetry():
    rng = np.random.default_rng(4)
    theta, phi = rng.uniform(0.3, 2.8, 5), rng.uniform(0, 6, 5)
    perm = rng.permutation(5)
    cm = dicke_override(5)
    a = drift(PhasePoint.from_angles(theta, phi), cm)
    b = drift(PhasePoint.from_angles(theta[perm], phi[perm]), cm)
    assert np.allclose(a[0][perm], b[0]) and np.allclose(a[1][perm], b[1])


def test_diffusion_examples():
    pt = PhasePoint.from_angles(np.array([0.7, 1.9]), np.array([0.2, -1.0]))
    zero = diffusion_apply(pt, np.zeros((2, 2)), np.ones(4))
    assert np.all(zero[0] == 0) and np.all(zero[1] == 0)
    one = PhasePoint.from_angles(np.array([0.7]), np.array([0.0]))
    dth, dph = diffusion_apply(one, np.array([[1.0]]), np.array([0.3, -0.2]))
    assert dth[0] == pytest.approx(-0.3)
    assert dph[0] == pytest.approx(-0.2 / np.tan(0.7))


def test_dicke_noise_shared():
    cm = dicke_override(4)
    g = cm.noise_factor
    assert g.shape == (4, 1)
    pt = PhasePoint.from_angles(np.full(4, 1.1), np.full(4, 0.5))
    dth, dph = diffusion_apply(pt, g, np.array([0.4, -0.9]))
    assert np.ptp(dth) == 0 and np.ptp(dph) == 0


def _angle_ito_generator(theta, phi, cm, drive, rabi):
    """Ito drift of s(theta, phi) implied by the angle SDE, with derivatives from finite differences."""
    n = len(theta)
    pt = PhasePoint.from_angles(theta, phi)
    a, b = drift(pt, cm, drive, rabi)
    G = cm.noise_factor
    k = G.shape[1]
    cols = [diffusion_apply(pt, G, e) for e in np.eye(2 * k)]
    bt = np.array([c[0] for c in cols])  # (2K, N)
    bp = np.array([c[1] for c in cols])
    s = lambda th, ph: SQRT3 * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    out = np.zeros((n, 3))
    h = 1e-4
    for i in range(n):
        th, ph = theta[i], phi[i]
        d_t = (s(th + h, ph) - s(th - h, ph)) / (2 * h)
        d_p = (s(th, ph + h) - s(th, ph - h)) / (2 * h)
        d_tt = (s(th + h, ph) - 2 * s(th, ph) + s(th - h, ph)) / h**2
        d_pp = (s(th, ph + h) - 2 * s(th, ph) + s(th, ph - h)) / h**2
        d_tp = (s(th + h, ph + h) - s(th + h, ph - h) - s(th - h, ph + h) + s(th - h, ph - h)) / (4 * h * h)
        vtt = bt[:, i] @ bt[:, i]
        vpp = bp[:, i] @ bp[:, i]
        vtp = bt[:, i] @ bp[:, i]
        out[i] = d_t * a[i] + d_p * b[i] + 0.5 * (d_tt * vtt + 2 * d_tp * vtp + d_pp * vpp)
    return out


@pytest.mark.parametrize("which", ["dicke", "lattice"])
def test_cartesian_drift_is_ito_image_of_angle_sde(which, dense4):
    cm = dicke_override(4) if which == "dicke" else dense4[1]
    rng = np.random.default_rng(7)
    theta, phi = rng.uniform(0.4, 2.7, 4), rng.uniform(-3, 3, 4)
    rabi = np.array([0.5, 1j, -2.0, 0.1])
    drive = DriveField(0.0, detuning=-1.3)
    s = PhasePoint.from_angles(theta, phi).bloch()
    got = cartesian_drift(s, cm, drive, rabi)
    want = _angle_ito_generator(theta, phi, cm, drive, rabi)
    assert np.allclose(got, want, atol=1e-5)


def test_cartesian_noise_matches_angle_noise_to_first_order(dense4):
    # with vanishing dt, the Cartesian step moves s along the angle-noise Jacobian
    _, cm = dense4
    pt = PhasePoint.from_angles(np.array([0.8, 1.5, 2.2, 1.0]), np.array([0.1, 2.0, -1.0, 3.0]))
    k = cm.noise_factor.shape[1]
    eps = 1e-7
    z = np.random.default_rng(2).standard_normal(2 * k)

    class Fixed:
        def normals(self, m):
            return z.copy()

    dt = eps**2
    new = step_euler_maruyama(pt, cm, None, dt, Fixed(), scheme="cartesian")
    dth, dph = diffusion_apply(pt, cm.noise_factor, z * eps)
    assert np.allclose(new.theta - pt.theta, dth, atol=1e-11)
    assert np.allclose(new.phi - pt.phi, dph, atol=1e-11)


@pytest.mark.parametrize("scheme", ["angles", "cartesian"])
def test_zero_step_is_identity(scheme, dense4):
    pt = PhasePoint.from_angles(np.array([0.8, 1.5, 2.2, 1.0]), np.array([0.1, 2.0, -1.0, 3.0]))
    out = step_euler_maruyama(pt, dense4[1], None, 0.0, CounterRNG(0), scheme=scheme)
    assert np.array_equal(out.cos_theta, pt.cos_theta) and np.array_equal(out.phi, pt.phi)


def test_angle_step_clamps_poles():
    pt = PhasePoint.from_angles(np.array([1e-6]), np.array([0.0]))
    for seed in range(20):
        out = step_euler_maruyama(pt, dicke_override(1), None, 0.5, CounterRNG(seed), scheme="angles")
        assert 1e-6 * (1 - 1e-9) <= out.theta[0] <= np.pi - 1e-6 * (1 - 1e-9)


def test_step_rejects_unknown_scheme():
    pt = PhasePoint.from_angles(np.array([1.0]), np.array([0.0]))
    with pytest.raises(InvalidArgumentError):
        step_euler_maruyama(pt, dicke_override(1), None, 1e-3, CounterRNG(0), scheme="milstein")


def test_dephasing_identity_and_uniform_weights():
    pt = PhasePoint.from_angles(np.array([0.5, 1.0, 2.0]), np.array([0.0, 1.0, 4.0]))
    same = step_collective_dephasing(pt, np.ones(3), 0.0, 0.1, GeneratorRNG(0))
    assert np.array_equal(same.phi, pt.phi)
    r0 = kuramoto_order(pt.phi)[0]
    moved = step_collective_dephasing(pt, np.ones(3), 2.0, 0.1, GeneratorRNG(0))
    assert np.ptp(moved.phi - pt.phi) < 1e-12
    assert kuramoto_order(moved.phi)[0] == pytest.approx(r0, abs=1e-12)
    assert np.array_equal(moved.cos_theta, pt.cos_theta)


def test_dephasing_phase_difference_variance():
    gamma, dt, steps, m = 0.3, 0.2, 5, 4000
    rng = GeneratorRNG(11)
    diffs = np.empty(m)
    for i in range(m):
        pt = PhasePoint.from_angles(np.array([1.0, 1.0]), np.zeros(2))
        for _ in range(steps):
            pt = step_collective_dephasing(pt, np.array([1.0, -1.0]), gamma, dt, rng)
        diffs[i] = pt.phi[0] - pt.phi[1]
    var = 16 * gamma * dt * steps
    assert abs(diffs.var() / var - 1) < 5 * np.sqrt(2 / m)


def test_larmor_aligned_spins_do_not_move():
    for axis, (th, ph) in (("z", (1e-6, 0.0)), ("x", (np.pi / 2, 0.0)), ("y", (np.pi / 2, np.pi / 2))):
        pt = PhasePoint.from_angles(np.full(3, th), np.full(3, ph))
        out = step_larmor(pt, np.array([1.0, 0.5, -2.0]), axis, 0.01)
        # at the pole the guard leaves a transverse remnant of order sqrt(3) * 1e-6
        assert np.allclose(out.bloch(), pt.bloch(), atol=1e-7)


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_larmor_preserves_norm(axis):
    rng = np.random.default_rng(3)
    pt = PhasePoint.from_angles(rng.uniform(0.2, 2.9, 6), rng.uniform(0, 6, 6))
    out = step_larmor(pt, rng.normal(size=6), axis, 0.05)
    assert np.allclose(np.sum(out.bloch() ** 2, axis=-1), 3.0, atol=1e-12)


def test_larmor_z_matches_angle_ode_and_rotated_frame():
    theta, phi = np.array([0.7, 2.1]), np.array([0.3, -1.2])
    w, dt = np.array([1.0, 1.0]), 1e-3
    pt = PhasePoint.from_angles(theta, phi)
    s = pt.bloch()
    out = step_larmor(pt, w, "z", dt)
    # angle form: dphi_n = 2 J_n (sum_m J_m s^z_m) dt
    assert np.allclose(out.phi, phi + 2 * w * (w @ s[:, 2]) * dt, atol=1e-14)
    # cyclic relabelling (x, y, z) -> (y, z, x) turns a z rotation into an x rotation
    cyc = s[:, [2, 0, 1]]
    viax = step_larmor(PhasePoint.from_bloch(cyc), w, "x", dt).bloch()[:, [1, 2, 0]]
    assert np.allclose(out.bloch(), viax, atol=1e-12)


def test_default_dicke_timestep():
    assert dicke_timestep(1) == 1e-3
    assert np.log(32) * 1e-3 / 32 == dicke_timestep(32)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        SimConfig(dt=0.0, t_final=1.0, n_traj=1)
    with pytest.raises(InvalidArgumentError):
        SimConfig(dt=0.1, t_final=0.01, n_traj=1)
    with pytest.raises(InvalidArgumentError):
        SimConfig(dt=0.1, t_final=1.0, n_traj=0)
    cfg = SimConfig(dt=0.1, t_final=1.0, n_traj=1, sample_stride=3)
    assert list(cfg.record_steps) == [0, 3, 6, 9, 10]


def test_worker_count_does_not_change_bits(dense4):
    ens, cm = dense4
    cfg = SimConfig(dt=1e-3, t_final=0.3, n_traj=700, seed=5, sample_stride=50, block_size=128)
    kw = dict(rabi=np.full(4, 2.0 + 0j), ensemble=ens, directions=[(0, 0, 1)])
    a = run_ensemble(cfg, cm, "ground", workers=1, **kw).accumulator.state_dict()
    b = run_ensemble(cfg, cm, "ground", workers=3, **kw).accumulator.state_dict()
    for key in a:
        assert np.array_equal(a[key], b[key]), key


def test_one_trajectory_equals_run_trajectory(dense4):
    _, cm = dense4
    cfg = SimConfig(dt=1e-3, t_final=0.2, n_traj=1, seed=3, sample_stride=20)
    acc = run_ensemble(cfg, cm, "excited").accumulator
    times, hist = run_trajectory(cfg, cm, "excited", trajectory=0)
    assert np.array_equal(times, acc.times)
    assert np.array_equal(hist, acc.mean_s)


def test_initial_records_are_exact():
    cfg = SimConfig(dt=1e-3, t_final=0.01, n_traj=300, seed=1, sample_stride=10)
    for state, target in (("excited", 6.0), ("ground", 0.0)):
        acc = run_ensemble(cfg, dicke_override(6), state).accumulator
        assert excitation_number(acc)[0] == target
        assert acc.standard_error("excitations")[0] == 0.0
    acc = run_ensemble(cfg, dicke_override(6), "excited").accumulator
    assert total_emission_rate(acc)[0] == pytest.approx(6.0, abs=6 * 4 / np.sqrt(300))


def test_rank_one_and_generic_factor_agree():
    n = 4
    gamma = np.ones((n, n))
    w, u, g = factorize(gamma)
    generic = CouplingMatrices(J=np.zeros((n, n)), Gamma=gamma, G=g + 0.0, eigenvalues=w, eigenvectors=u)
    # drop the numerically zero columns only through noise_factor's exact-zero test
    cfg = SimConfig(dt=dicke_timestep(n), t_final=1.5, n_traj=6000, seed=2, sample_stride=100)
    a = run_ensemble(cfg, dicke_override(n), "excited").accumulator
    b = run_ensemble(cfg.__class__(**{**cfg.__dict__, "seed": 99}), generic, "excited").accumulator
    se = np.hypot(a.standard_error("excitations"), b.standard_error("excitations"))
    diff = np.abs(excitation_number(a) - excitation_number(b))
    assert np.all(diff[1:] <= 4.5 * se[1:])


def test_blowup_is_reported():
    cfg = SimConfig(dt=1e-3, t_final=0.01, n_traj=10)
    bad = np.full((2, 3), np.nan)
    with pytest.raises(NumericalBlowupError) as err:
        run_ensemble(cfg, dicke_override(2), bad)
    assert err.value.n_blowup == 10 and err.value.n_traj == 10
    assert err.value.trajectory == 0 and err.value.step == 0
