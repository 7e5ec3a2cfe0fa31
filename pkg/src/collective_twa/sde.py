"""Stochastic integration of the truncated-Wigner spin equations.

Two equivalent Ito discretizations are provided:

* ``"cartesian"`` (default) advances the Weyl vectors ``s_n`` directly,
  ``ds_n = (z x q_n) x s_n - (Gamma_nn/2)(s_n + s^z_n z) dt - Delta z x s_n dt``
  where ``q_n = (Qt_n + i conj(Omega_n)) dt + xi_n`` is a complex transverse
  increment, ``Qt_n = sum_m (Gamma_mn/2 - i J_mn) s+_m`` and
  ``xi_n = sum_k G_nk (-dW_theta_k + i dW_phi_k)``.  It is the same SDE as the
  angle form after Ito's lemma, but the cot(theta) terms cancel, so no pole
  guard is needed.  Vectors are rescaled to ``|s| = sqrt(3)`` after each step.
* ``"angles"`` applies Euler-Maruyama to (theta, phi) literally and clamps theta
  into the pole guard.  Kept for sensitivity studies.

Both schemes consume the same counter-based normals, so a trajectory's noise is
fixed by ``(seed, trajectory, step)`` alone.
"""

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidArgumentError, NumericalBlowupError
from .observables import MomentAccumulator, ObservableContext
from .phase_space import COS_POLE, SQRT3, InitialState, PhasePoint, discrete_bloch_samples
from .rng import STREAM_NOISE, block_normals, fill_normals

SCHEMES = ("cartesian", "angles")
MAX_BLOWUP_FRACTION = 0.01
LOW_RANK_FRACTION = 0.25
# reassociation lets the spin loops vectorize; NaN/inf semantics stay intact for the blowup guard
_FAST = {"reassoc", "contract", "nsz", "arcp"}


def dicke_timestep(n_atoms):
    """Step with ``ln(N) dt / N = 1e-3``; plain 1e-3 for a single atom."""
    return 1e-3 if n_atoms < 2 else 1e-3 * np.log(n_atoms) / n_atoms


def spatial_timestep():
    return 1e-3


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_final: float
    n_traj: int
    seed: int = 0
    sample_stride: int = 1
    block_size: int = 1024
    scheme: str = "cartesian"

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.t_final) and self.t_final >= self.dt):
            raise InvalidArgumentError(f"t_final must be >= dt, got {self.t_final}")
        if int(self.n_traj) < 1:
            raise InvalidArgumentError("n_traj must be >= 1")
        if int(self.sample_stride) < 1 or int(self.block_size) < 1:
            raise InvalidArgumentError("sample_stride and block_size must be >= 1")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must fit in 64 unsigned bits")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def record_steps(self):
        steps = list(range(0, self.n_steps + 1, self.sample_stride))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return np.array(steps)

    @property
    def record_times(self):
        return self.record_steps * self.dt


# ---------------------------------------------------------------- angle form

def _rabi_or_zero(rabi, n):
    return np.zeros(n, dtype=complex) if rabi is None else np.asarray(rabi, dtype=complex)


def _drift_raw(point, couplings, drive, rabi):
    detuning = 0.0 if drive is None else drive.detuning
    om = _rabi_or_zero(rabi, couplings.n_atoms)
    ct = point.cos_theta
    st = point.sin_theta
    cot = ct / st
    ephi = np.exp(1j * point.phi)
    w = ephi.conj() * ((st * ephi) @ (0.5 * couplings.Gamma - 1j * couplings.J))
    drv = om * ephi
    dtheta = 0.5 * np.diag(couplings.Gamma) * cot + SQRT3 * w.real + drv.imag
    dphi = SQRT3 * cot * w.imag + drv.real * cot - detuning
    return dtheta, dphi


def drift(point, couplings, drive=None, rabi=None):
    """Deterministic rates ``(dtheta/dt, dphi/dt)``; broadcasts over leading axes."""
    dtheta, dphi = _drift_raw(point, couplings, drive, rabi)
    if not (np.all(np.isfinite(dtheta)) and np.all(np.isfinite(dphi))):
        raise NumericalBlowupError("non-finite drift")
    return dtheta, dphi


def diffusion_apply(point, G, noise):
    """Increments from Wiener increments ``noise = (dW_theta, dW_phi)`` stacked on the last axis (2K)."""
    G = np.asarray(G, dtype=float)
    k = G.shape[1]
    noise = np.asarray(noise, dtype=float)
    a = noise[..., :k] @ G.T
    b = noise[..., k:] @ G.T
    c, s = np.cos(point.phi), np.sin(point.phi)
    cot = point.cos_theta / point.sin_theta
    return -c * a + s * b, cot * (s * a + c * b)


def cartesian_drift(s, couplings, drive=None, rabi=None):
    """Ito drift of the Weyl vectors ``s[..., N, 3]`` (the ``dt`` part of the Cartesian scheme)."""
    n = couplings.n_atoms
    detuning = 0.0 if drive is None else drive.detuning
    om = _rabi_or_zero(rabi, n)
    s = np.asarray(s, dtype=float)
    splus = s[..., 0] + 1j * s[..., 1]
    q = splus @ (0.5 * couplings.Gamma - 1j * couplings.J) + 1j * om.conj()
    gd = np.diag(couplings.Gamma)
    out = np.empty_like(s)
    out[..., 0] = q.real * s[..., 2] - 0.5 * gd * s[..., 0] + detuning * s[..., 1]
    out[..., 1] = q.imag * s[..., 2] - 0.5 * gd * s[..., 1] - detuning * s[..., 0]
    out[..., 2] = -(q.real * s[..., 0] + q.imag * s[..., 1]) - gd * s[..., 2]
    return out


def step_euler_maruyama(point, couplings, drive, dt, rng, rabi=None, scheme="angles"):
    """One Euler-Maruyama step of a single trajectory.

    ``rng`` supplies ``2K`` unit normals per call (``K`` noise columns), e.g. a
    :class:`~collective_twa.rng.CounterRNG`.  The angle scheme clamps theta into the
    pole guard and leaves phi unwrapped; the Cartesian scheme returns phi
    unwrapped against its previous value.
    """
    if dt == 0:
        return point.copy()
    G = couplings.noise_factor
    noise = rng.normals(2 * G.shape[1]) * np.sqrt(dt)
    if scheme == "angles":
        dth, dph = drift(point, couplings, drive, rabi)
        nth, nph = diffusion_apply(point, G, noise)
        theta = point.theta + dth * dt + nth
        theta = np.clip(theta, np.arccos(COS_POLE), np.pi - np.arccos(COS_POLE))
        return PhasePoint(np.cos(theta), point.phi + dph * dt + nph)
    if scheme != "cartesian":
        raise InvalidArgumentError(f"unknown scheme {scheme!r}")
    n = couplings.n_atoms
    state = np.ascontiguousarray(point.bloch().T[:, None, :])  # (3, 1, N)
    prop = _Propagator(couplings, drive, rabi, dt)
    alive = np.ones(1, dtype=np.bool_)
    prop.advance(state, noise.reshape(1, -1) / np.sqrt(dt), alive)
    if not alive[0]:
        raise NumericalBlowupError("trajectory left the sphere", trajectory=getattr(rng, "trajectory", None))
    return PhasePoint.from_bloch(state[:, 0, :].T.reshape(n, 3), phi_ref=point.phi)


def step_collective_dephasing(point, weights, gamma, dt, rng):
    """Collective dephasing: every phi_n gets ``2 sqrt(gamma) J_n`` times one shared Wiener increment."""
    if gamma < 0:
        raise InvalidArgumentError("dephasing rate must be >= 0")
    dw = rng.normals(1)[0] * np.sqrt(dt)
    return PhasePoint(point.cos_theta.copy(), point.phi + 2.0 * np.sqrt(gamma) * np.asarray(weights) * dw)


_AXES = {"x": 0, "y": 1, "z": 2}


def step_larmor(point, weights, axis, dt):
    """Exact rotation ``ds_n = 2 J_n S^mu(J) e_mu x s_n dt`` with the field frozen over the step."""
    mu = _AXES[axis] if isinstance(axis, str) else int(axis)
    w = np.asarray(weights, dtype=float)
    s = point.bloch()
    field_ = np.sum(w * s[..., mu], axis=-1)
    angle = 2.0 * w * field_[..., None] * dt
    if mu == 2:
        return PhasePoint(point.cos_theta.copy(), point.phi + angle)
    e = np.zeros(3)
    e[mu] = 1.0
    c, sn = np.cos(angle)[..., None], np.sin(angle)[..., None]
    rotated = s * c + np.cross(e, s) * sn + e * s[..., mu:mu + 1] * (1.0 - c)
    return PhasePoint.from_bloch(rotated, phi_ref=point.phi)


# ------------------------------------------------------------ block kernels

@numba.njit(cache=True, nogil=True, error_model="numpy", fastmath=_FAST)
def _apply(state, b, qx, qy, gd, delta, dt, alive):
    """Advance the spins of trajectory ``b`` given the transverse increments ``q``."""
    n = state.shape[2]
    target = np.sqrt(3.0)
    guard = 0.0
    for i in range(n):
        sx = state[0, b, i]
        sy = state[1, b, i]
        sz = state[2, b, i]
        h = 0.5 * gd[i] * dt
        nx = sx + qx[i] * sz - h * sx + delta * dt * sy
        ny = sy + qy[i] * sz - h * sy - delta * dt * sx
        nz = sz - (qx[i] * sx + qy[i] * sy) - 2.0 * h * sz
        f = target / np.sqrt(nx * nx + ny * ny + nz * nz)
        guard += f
        state[0, b, i] = nx * f
        state[1, b, i] = ny * f
        state[2, b, i] = nz * f
    if not np.isfinite(guard):
        # a zero or non-finite norm poisons the whole trajectory
        alive[b] = False
        state[:, b, :] = np.nan


@numba.njit(cache=True, nogil=True, error_model="numpy", fastmath=_FAST)
def _blas_kernel(state, fx, fy, noise, gd, om_re, om_im, delta, dt, sdt, alive):
    # fields and correlated noise precomputed for the whole block
    nb, n = state.shape[1], state.shape[2]
    qx = np.empty(n)
    qy = np.empty(n)
    for b in range(nb):
        if not alive[b]:
            continue
        for i in range(n):
            qx[i] = (fx[b, i] + om_im[i]) * dt - noise[b, 0, i] * sdt
            qy[i] = (fy[b, i] + om_re[i]) * dt + noise[b, 1, i] * sdt
        _apply(state, b, qx, qy, gd, delta, dt, alive)


@numba.njit(cache=True, nogil=True, error_model="numpy", fastmath=_FAST)
def _low_rank_kernel(state, F, normals, gd, om_re, om_im, delta, dt, sdt, alive):
    # Gamma = F F^T, J = 0: project once per trajectory, O(N K) work
    nb, n = state.shape[1], state.shape[2]
    k = F.shape[1]
    qx = np.empty(n)
    qy = np.empty(n)
    for b in range(nb):
        if not alive[b]:
            continue
        for i in range(n):
            qx[i] = om_im[i] * dt
            qy[i] = om_re[i] * dt
        for c in range(k):
            ax = 0.0
            ay = 0.0
            for i in range(n):
                ax += F[i, c] * state[0, b, i]
                ay += F[i, c] * state[1, b, i]
            cx = 0.5 * ax * dt - normals[b, c] * sdt
            cy = 0.5 * ay * dt + normals[b, k + c] * sdt
            for i in range(n):
                qx[i] += F[i, c] * cx
                qy[i] += F[i, c] * cy
        _apply(state, b, qx, qy, gd, delta, dt, alive)

class _Propagator:
    """Precomputed operators for advancing a block of trajectories by one step."""

    def __init__(self, couplings, drive, rabi, dt):
        n = couplings.n_atoms
        self.n = n
        self.dt = float(dt)
        self.sdt = float(np.sqrt(dt))
        self.half_gamma = np.ascontiguousarray(0.5 * couplings.Gamma)
        self.J = np.ascontiguousarray(couplings.J) if couplings.has_coherent else None
        self.F = couplings.noise_factor
        self.Ft = np.ascontiguousarray(self.F.T)
        self.k = self.F.shape[1]
        # Gamma = F F^T when the factorization is exact; use the cheap path for low rank
        self.low_rank = (
            self.J is None
            and self.k <= max(1, int(LOW_RANK_FRACTION * n))
            and np.allclose(self.F @ self.F.T, couplings.Gamma, atol=1e-12, rtol=0)
        )
        self.gd = np.ascontiguousarray(np.diag(couplings.Gamma))
        om = _rabi_or_zero(rabi, n)
        self.om_re = np.ascontiguousarray(om.real)
        self.om_im = np.ascontiguousarray(om.imag)
        self.delta = 0.0 if drive is None else float(drive.detuning)

    def fields(self, state):
        """Real and imaginary parts of ``Qt`` for a state of shape (3, B, N)."""
        b = state.shape[1]
        perp = state[:2].reshape(2 * b, self.n)
        if self.low_rank:
            a = (0.5 * (perp @ self.F)) @ self.Ft
        else:
            a = perp @ self.half_gamma
        a = a.reshape(2, b, self.n)
        fx, fy = a[0], a[1]
        if self.J is not None:
            c = (perp @ self.J).reshape(2, b, self.n)
            fx = fx + c[1]
            fy = fy - c[0]
        return np.ascontiguousarray(fx), np.ascontiguousarray(fy)

    def correlated_noise(self, normals):
        """Map unit normals (B, 2K) onto the spins: returns (B, 2, N) = (G dW_theta, G dW_phi) / sqrt(dt)."""
        b = normals.shape[0]
        return (normals.reshape(2 * b, self.k) @ self.Ft).reshape(b, 2, self.n)

    def advance(self, state, normals, alive):
        if self.low_rank:
            _low_rank_kernel(state, self.F, normals, self.gd, self.om_re, self.om_im,
                             self.delta, self.dt, self.sdt, alive)
        else:
            fx, fy = self.fields(state)
            noise = self.correlated_noise(normals)
            _blas_kernel(state, fx, fy, noise, self.gd, self.om_re, self.om_im,
                         self.delta, self.dt, self.sdt, alive)


def _advance_angles(prop, couplings, drive, rabi, cos_theta, phi, normals, alive):
    pt = PhasePoint(cos_theta, phi)
    with np.errstate(all="ignore"):
        dth, dph = _drift_raw(pt, couplings, drive, rabi)
        noise = prop.correlated_noise(normals) * prop.sdt
        c, s = np.cos(phi), np.sin(phi)
        cot = pt.cos_theta / pt.sin_theta
        theta = np.arccos(pt.cos_theta) + dth * prop.dt - c * noise[:, 0] + s * noise[:, 1]
        phi_new = phi + dph * prop.dt + cot * (s * noise[:, 0] + c * noise[:, 1])
    bad = ~(np.all(np.isfinite(theta), axis=1) & np.all(np.isfinite(phi_new), axis=1))
    alive &= ~bad
    theta[bad] = np.nan
    phi_new[bad] = np.nan
    cos_new = np.cos(theta)
    np.clip(cos_new, -COS_POLE, COS_POLE, out=cos_new)
    cos_theta[...] = cos_new
    phi[...] = phi_new


# ------------------------------------------------------------------ ensemble

@dataclass
class EnsembleResult:
    accumulator: MomentAccumulator
    n_blowup: int = 0
    blowup_trajectories: list = field(default_factory=list)
    config: SimConfig = None

    @property
    def times(self):
        return self.accumulator.times


def _context_for(couplings, ensemble, directions, pair_correlations):
    positions = None if ensemble is None else np.asarray(ensemble.positions)
    pol = None if ensemble is None else np.asarray(ensemble.polarization)
    return ObservableContext(
        n_atoms=couplings.n_atoms, gamma=np.asarray(couplings.Gamma), positions=positions,
        polarization=pol, directions=directions, pair_correlations=pair_correlations,
    )


def _initial_state(initial, n, seed, traj_ids):
    if isinstance(initial, np.ndarray):
        s = np.broadcast_to(initial, (len(traj_ids), n, 3))
    else:
        s = discrete_bloch_samples(InitialState.parse(initial), n, seed, traj_ids)
    return np.ascontiguousarray(np.moveaxis(s, -1, 0), dtype=float)  # (3, B, N)


def _integrate_block(config, couplings, initial, drive, rabi, context, traj_ids, history=False):
    n = couplings.n_atoms
    b = len(traj_ids)
    prop = _Propagator(couplings, drive, rabi, config.dt)
    state = _initial_state(initial, n, config.seed, traj_ids)
    alive = np.ones(b, dtype=np.bool_)
    died_at = np.full(b, -1, dtype=np.int64)
    steps = config.record_steps
    acc = MomentAccumulator.empty(context, config.record_times)
    normals = np.empty((b, 2 * prop.k))
    ids = np.asarray(traj_ids, dtype=np.int64)
    seed = int(config.seed)
    trail = [] if history else None

    angles = config.scheme == "angles"
    if angles:
        ct = state[2] / SQRT3
        pt = PhasePoint(ct, np.arctan2(state[1], state[0]))
        cos_theta, phi = pt.cos_theta.copy(), pt.phi.copy()

    def snapshot():
        if angles:
            return PhasePoint(cos_theta, phi).bloch()
        return np.moveaxis(state, 0, -1)

    rec = 0
    for step in range(config.n_steps + 1):
        if step == steps[rec]:
            snap = snapshot()
            acc.record(rec, snap, alive)
            if history:
                trail.append(np.array(snap[0]))
            rec += 1
            if step == config.n_steps:
                break
        fill_normals(seed, STREAM_NOISE, ids, step, normals)
        before = alive.copy()
        if angles:
            _advance_angles(prop, couplings, drive, rabi, cos_theta, phi, normals, alive)
        else:
            prop.advance(state, normals, alive)
        died_at[before & ~alive] = step
    dead = [(int(ids[i]), int(died_at[i])) for i in np.nonzero(~alive)[0]]
    return acc, dead, trail


def _default_workers():
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_ensemble(config, couplings, initial=InitialState.ALL_EXCITED, drive=None, rabi=None,
                 ensemble=None, directions=(), pair_correlations=False, workers=None,
                 reproducible=True):
    """Integrate ``config.n_traj`` trajectories and return their merged moments.

    Trajectories are processed in fixed blocks of ``config.block_size`` consecutive
    indices; each block depends only on its indices and the seed, so the result is
    independent of the worker count.  With ``reproducible`` the block accumulators are
    merged left to right in block order; otherwise in completion order.
    """
    context = _context_for(couplings, ensemble, directions, pair_correlations)
    blocks = [np.arange(lo, min(lo + config.block_size, config.n_traj))
              for lo in range(0, config.n_traj, config.block_size)]
    workers = _default_workers() if workers is None else max(1, int(workers))
    job = lambda ids: _integrate_block(config, couplings, initial, drive, rabi, context, ids)[:2]

    if workers == 1 or len(blocks) == 1:
        parts = [job(ids) for ids in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            if reproducible:
                parts = list(pool.map(job, blocks))
            else:
                futs = [pool.submit(job, ids) for ids in blocks]
                parts = [f.result() for f in as_completed(futs)]

    acc = parts[0][0]
    for other, _ in parts[1:]:
        acc = acc.merge(other)
    dead = sorted(d for _, ds in parts for d in ds)
    if len(dead) > MAX_BLOWUP_FRACTION * config.n_traj:
        traj, step = dead[0]
        raise NumericalBlowupError(
            f"{len(dead)} of {config.n_traj} trajectories blew up (first: trajectory {traj} at step {step})",
            trajectory=traj, step=step, n_blowup=len(dead), n_traj=config.n_traj,
        )
    return EnsembleResult(accumulator=acc, n_blowup=len(dead), blowup_trajectories=dead, config=config)


def run_trajectory(config, couplings, initial=InitialState.ALL_EXCITED, drive=None, rabi=None,
                   trajectory=0, ensemble=None, directions=()):
    """Single trajectory: returns ``(times, s_history)`` with ``s_history`` of shape (T, N, 3)."""
    context = _context_for(couplings, ensemble, directions, False)
    _, dead, trail = _integrate_block(config, couplings, initial, drive, rabi, context,
                                      np.array([trajectory]), history=True)
    if dead:
        raise NumericalBlowupError("trajectory blew up", trajectory=trajectory, step=dead[0][1])
    return config.record_times, np.array(trail)
