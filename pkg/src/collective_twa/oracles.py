"""Numerically exact references: Dicke ladder rate equations, dense Lindblad
propagation for a few atoms, and the single-atom solution.

Conventions match the stochastic engine: |e> = (1, 0), sigma^- = |g><e|, and the
Hamiltonian (rates in Gamma0, hbar = 1)

    H = -(Delta/2) sum_n sigma^z_n - 1/2 sum_n (Omega_n sigma^+_n + h.c.)
        + sum_{m != n} J_mn sigma^+_m sigma^-_n .
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .couplings import CouplingMatrices, build_matrices
from .errors import IntegratorFailureError, InvalidArgumentError
from .geometry import AtomEnsemble
from .observables import dicke_degeneracy, single_atom_profile
from .phase_space import COS_POLE, InitialState

SQRT3 = np.sqrt(3.0)
MAX_LINDBLAD_ATOMS = 10
NEGATIVE_POPULATION_TOL = 1e-9


# ------------------------------------------------------------- single atom

def single_atom_excitation(t):
    return np.exp(-np.asarray(t, dtype=float))


def single_atom_sigma_z(t):
    return 2.0 * np.exp(-np.asarray(t, dtype=float)) - 1.0


def single_atom_exact_drift(theta):
    """Drift of the exact single-atom decay equation, ``cot(theta) + csc(theta)/sqrt(3)``."""
    return 1.0 / np.tan(theta) + 1.0 / (SQRT3 * np.sin(theta))


def single_atom_exact_diffusion(theta):
    cot = 1.0 / np.tan(theta)
    return np.sqrt(1.0 + 2.0 * cot**2 + 2.0 * cot / (SQRT3 * np.sin(theta)))


def single_atom_exact_sde_step(theta, phi, dt, rng):
    """Euler-Maruyama step of the exact single-atom decay SDE; theta is deterministic, phi diffuses."""
    theta = np.asarray(theta, dtype=float)
    if dt == 0:
        return theta.copy(), np.array(phi, dtype=float)
    dw = np.asarray(rng.normals(theta.size) if hasattr(rng, "normals") else rng.standard_normal(theta.size))
    dw = dw.reshape(theta.shape) * np.sqrt(dt)
    eps = np.arccos(COS_POLE)
    new_theta = np.clip(theta + single_atom_exact_drift(theta) * dt, eps, np.pi - eps)
    return new_theta, phi + single_atom_exact_diffusion(theta) * dw


# -------------------------------------------------------------- Dicke ladders

@dataclass
class DickeLadder:
    j: float
    weight: float
    populations: np.ndarray  # (T, 2j+1), index k <-> m = -j + k

    @property
    def m_values(self):
        return np.arange(-self.j, self.j + 0.5)


@dataclass
class DickeSolution:
    times: np.ndarray
    excitations: np.ndarray
    rate: np.ndarray
    sz_variance: np.ndarray
    ladders: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.excitations, self.rate))


def _ladder_generator(j):
    """Rate matrix for ``dp_m/dt = (j+m+1)(j-m) p_{m+1} - (j+m)(j-m+1) p_m``."""
    m = np.arange(-j, j + 0.5)
    out = (j + m) * (j - m + 1)  # decay out of m
    a = np.diag(-out)
    a[np.arange(len(m) - 1), np.arange(1, len(m))] = out[1:]
    return a


def _rk4_propagator(a, h):
    ha = h * a
    eye = np.eye(len(a))
    term = eye.copy()
    total = eye.copy()
    for k in range(1, 5):
        term = term @ ha / k
        total = total + term
    return total


def _interval_propagators(a, t_grid, max_step):
    cache = {}
    props = []
    for dt in np.diff(t_grid):
        n_sub = max(1, int(np.ceil(dt / max_step - 1e-9)))
        key = (round(dt, 14), n_sub)
        if key not in cache:
            cache[key] = np.linalg.matrix_power(_rk4_propagator(a, dt / n_sub), n_sub)
        props.append(cache[key])
    return props


def dicke_evolve(n_atoms, initial, t_grid, max_step=None):
    """Collective decay of N atoms with all-to-all identical rates.

    ``initial`` is the inverted state (one ladder, ``j = N/2`` starting at ``m = j``)
    or the fully mixed state (every ladder, weight ``d_j / 2^N`` on each ``m``).
    Fixed-step RK4 with step at most ``1e-4 / N`` unless ``max_step`` is given.
    """
    n = int(n_atoms)
    if n < 1:
        raise InvalidArgumentError("need at least one atom")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) <= 0):
        raise InvalidArgumentError("t_grid must be strictly increasing")
    state = InitialState.parse(initial)
    if state is InitialState.ALL_EXCITED:
        js = [(n / 2.0, 1.0)]
    elif state is InitialState.FULLY_MIXED:
        js = [(j, dicke_degeneracy(n, j) / 2.0**n) for j in np.arange(n / 2.0, -0.25, -1.0)]
    else:
        js = [(n / 2.0, 1.0)]
    h = 1e-4 / n if max_step is None else float(max_step)

    ladders = []
    exc = np.zeros(len(t_grid))
    rate = np.zeros(len(t_grid))
    second = np.zeros(len(t_grid))
    for j, weight in js:
        a = _ladder_generator(j)
        m = np.arange(-j, j + 0.5)
        p = np.zeros(len(m))
        if state is InitialState.ALL_EXCITED:
            p[-1] = 1.0
        elif state is InitialState.ALL_GROUND:
            p[0] = 1.0
        else:
            p[:] = weight
        if t_grid[0] != 0.0:
            p = np.linalg.matrix_power(_rk4_propagator(a, t_grid[0] / max(1, int(np.ceil(t_grid[0] / h)))),
                                       max(1, int(np.ceil(t_grid[0] / h)))) @ p
        pops = np.empty((len(t_grid), len(m)))
        pops[0] = p
        for i, prop in enumerate(_interval_propagators(a, t_grid, h)):
            pops[i + 1] = prop @ pops[i]
        if pops.min() < -NEGATIVE_POPULATION_TOL:
            raise IntegratorFailureError(f"negative population {pops.min():.3g} in ladder j={j}")
        total0 = pops[0].sum()
        drift = np.abs(pops.sum(axis=1) - total0).max()
        if drift > 1e-9 * max(1.0, t_grid[-1]) * max(total0, 1e-300) + 1e-14:
            raise IntegratorFailureError(f"probability drift {drift:.3g} in ladder j={j}")
        exc += pops @ m
        rate += pops @ ((j + m) * (j - m + 1))
        second += pops @ (m * m)
        ladders.append(DickeLadder(j=j, weight=weight, populations=pops))
    sz = exc.copy()
    return DickeSolution(times=t_grid, excitations=n / 2.0 + sz, rate=rate,
                         sz_variance=second - sz**2, ladders=ladders)


# ------------------------------------------------------------ dense Lindblad

_SM = sp.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))  # |g><e|
_SZ = sp.csr_matrix(np.diag([1.0, -1.0]))


def _site_operator(op, site, n):
    left = sp.identity(2**site, format="csr")
    right = sp.identity(2 ** (n - site - 1), format="csr")
    return sp.kron(sp.kron(left, op, format="csr"), right, format="csr")


def basis_state(bits):
    """Product state from a sequence of 'e'/'g' (or 1/0) labels, atom 0 first."""
    vec = np.ones(1, dtype=complex)
    for b in bits:
        excited = b in ("e", 1, True)
        vec = np.kron(vec, np.array([1.0, 0.0]) if excited else np.array([0.0, 1.0]))
    return np.outer(vec, vec.conj())


def initial_density(state, n_atoms):
    state = InitialState.parse(state)
    if state is InitialState.FULLY_MIXED:
        return np.eye(2**n_atoms, dtype=complex) / 2**n_atoms
    return basis_state(["e" if state is InitialState.ALL_EXCITED else "g"] * n_atoms)


@dataclass
class LindbladSolution:
    times: np.ndarray
    excitations: np.ndarray
    total_rate: np.ndarray
    sz_variance: np.ndarray
    squeezing: np.ndarray
    mean_spin: np.ndarray
    directional_rates: dict = field(default_factory=dict)
    min_eigenvalue: np.ndarray = None
    final_state: np.ndarray = None


class LindbladSystem:
    """Sparse operators of one scenario, materialized once."""

    def __init__(self, couplings, rabi=None, detuning=0.0, positions=None, polarization=None):
        n = couplings.n_atoms
        if n > MAX_LINDBLAD_ATOMS:
            raise InvalidArgumentError(f"dense Lindblad propagation is limited to N <= {MAX_LINDBLAD_ATOMS}")
        self.n = n
        self.couplings = couplings
        self.positions = positions
        self.polarization = polarization
        sm = [_site_operator(_SM, k, n) for k in range(n)]
        sz = [_site_operator(_SZ, k, n) for k in range(n)]
        self.sm = sm
        self.sp = [s.T.tocsr() for s in sm]
        om = np.zeros(n, dtype=complex) if rabi is None else np.asarray(rabi, dtype=complex)
        h = sp.csr_matrix((2**n, 2**n), dtype=complex)
        for k in range(n):
            h = h - 0.5 * detuning * sz[k] - 0.5 * (om[k] * self.sp[k] + np.conj(om[k]) * sm[k])
        self.hop = [[(self.sp[a] @ sm[b]).tocsr() for b in range(n)] for a in range(n)]
        decay = sp.csr_matrix((2**n, 2**n), dtype=complex)
        for a in range(n):
            for b in range(n):
                if a != b and couplings.J[a, b] != 0.0:
                    h = h + couplings.J[a, b] * self.hop[a][b]
                if couplings.Gamma[a, b] != 0.0:
                    decay = decay + couplings.Gamma[a, b] * self.hop[a][b]
        self.hamiltonian = h.tocsr()
        self.h_eff = (h - 0.5j * decay).tocsr()
        self.h_eff_dag = self.h_eff.conj().T.tocsr()
        w, u = np.linalg.eigh(np.asarray(couplings.Gamma, dtype=float))
        self.jumps = []
        for lam, vec in zip(w, u.T):
            if lam > 1e-12:
                op = sum(np.sqrt(lam) * vec[k] * sm[k] for k in range(n))
                self.jumps.append((op.tocsr(), op.conj().T.tocsr()))
        self.collective = [0.5 * sum(_site_operator(sp.csr_matrix(p), k, n) for k in range(n))
                           for p in (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]))]

    def rhs(self, rho):
        """Master-equation right-hand side for Hermitian ``rho``.

        Uses ``rho H^dag = (H rho)^dag`` and ``L rho L^dag = L (L rho)^dag``, then
        symmetrizes so the result is exactly Hermitian.
        """
        x = self.h_eff @ rho
        out = -1j * (x - x.conj().T)
        for op, _ in self.jumps:
            y = op @ rho
            out += op @ np.ascontiguousarray(y.conj().T)
        return 0.5 * (out + out.conj().T)

    def coherences(self, rho):
        """``C[m, n] = <sigma^+_m sigma^-_n>``."""
        n = self.n
        c = np.empty((n, n), dtype=complex)
        rt = rho.T
        for a in range(n):
            for b in range(n):
                c[a, b] = self.hop[a][b].multiply(rt).sum()
        return c

    def spin_moments(self, rho):
        ops = self.collective
        mean = np.array([np.trace(o @ rho).real for o in ops])
        second = np.empty((3, 3))
        for a in range(3):
            for b in range(3):
                sym = 0.5 * (ops[a] @ ops[b] + ops[b] @ ops[a])
                second[a, b] = (sym.multiply(rho.T)).sum().real
        return mean, second


def _squeezing_from_moments(n, mean, second):
    norm = np.linalg.norm(mean)
    if norm <= 1e-6 * n:
        return np.nan
    cov = second - np.outer(mean, mean)
    u = mean / norm
    a = np.cross(u, [1.0, 0.0, 0.0] if abs(u[0]) < 0.9 else [0.0, 1.0, 0.0])
    a /= np.linalg.norm(a)
    b = np.cross(u, a)
    basis = np.stack([a, b])
    return n * np.linalg.eigvalsh(basis @ cov @ basis.T)[0] / norm**2


def lindblad_evolve(system, drive=None, rho0=InitialState.ALL_EXCITED, t_grid=(0.0,), rabi=None,
                    directions=(), max_step=1e-3, check_positivity=None):
    """Integrate the master equation with fixed-step RK4 and evaluate observables on ``t_grid``.

    ``system`` may be an :class:`AtomEnsemble` (free-space couplings), a
    :class:`CouplingMatrices` or a prepared :class:`LindbladSystem`.
    """
    if isinstance(system, LindbladSystem):
        sysm = system
    else:
        if isinstance(system, AtomEnsemble):
            couplings, pos, pol = build_matrices(system), system.positions, system.polarization
        elif isinstance(system, CouplingMatrices):
            couplings, pos, pol = system, None, None
        else:
            raise InvalidArgumentError("system must be an AtomEnsemble, CouplingMatrices or LindbladSystem")
        if rabi is None and drive is not None and pos is not None:
            from .geometry import rabi_vector
            rabi = rabi_vector(drive, system)
        sysm = LindbladSystem(couplings, rabi, 0.0 if drive is None else drive.detuning, pos, pol)
    n = sysm.n
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise InvalidArgumentError("t_grid must be strictly increasing")
    rho = initial_density(rho0, n) if not isinstance(rho0, np.ndarray) else np.array(rho0, dtype=complex)
    if rho.shape != (2**n, 2**n):
        raise InvalidArgumentError(f"density matrix must be {2**n} x {2**n}")
    if check_positivity is None:
        check_positivity = n <= 4
    dirs = [np.asarray(d, dtype=float) / np.linalg.norm(d) for d in directions]
    if dirs and (sysm.positions is None or sysm.polarization is None):
        raise InvalidArgumentError("directional rates need positions and polarization")
    gamma = np.asarray(sysm.couplings.Gamma)

    T = len(t_grid)
    out = LindbladSolution(times=t_grid, excitations=np.zeros(T), total_rate=np.zeros(T),
                           sz_variance=np.zeros(T), squeezing=np.zeros(T), mean_spin=np.zeros((T, 3)),
                           directional_rates={tuple(d): np.zeros(T) for d in dirs},
                           min_eigenvalue=np.full(T, np.nan))
    tr0 = np.trace(rho).real

    def measure(i, rho):
        c = sysm.coherences(rho)
        out.excitations[i] = np.trace(c).real
        out.total_rate[i] = np.sum(gamma * c).real
        mean, second = sysm.spin_moments(rho)
        out.mean_spin[i] = mean
        out.sz_variance[i] = second[2, 2] - mean[2] ** 2
        out.squeezing[i] = _squeezing_from_moments(n, mean, second)
        for d in dirs:
            ph = np.exp(2j * np.pi * (np.asarray(sysm.positions) @ d))
            val = np.einsum("m,mn,n->", ph, c, ph.conj())
            out.directional_rates[tuple(d)][i] = single_atom_profile(sysm.polarization, d) * val.real
        herm = np.abs(rho - rho.conj().T).max()
        tr_err = abs(np.trace(rho).real - tr0)
        t = t_grid[i] - t_grid[0]
        if tr_err > 1e-8 or herm > 1e-9 * max(t, 1.0):
            raise IntegratorFailureError(f"trace drift {tr_err:.3g} / Hermiticity drift {herm:.3g} at t={t_grid[i]}")
        if check_positivity:
            out.min_eigenvalue[i] = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
            if out.min_eigenvalue[i] < -1e-8:
                raise IntegratorFailureError(f"density matrix lost positivity ({out.min_eigenvalue[i]:.3g})")

    def rk4(rho, h):
        k1 = sysm.rhs(rho)
        k2 = sysm.rhs(rho + 0.5 * h * k1)
        k3 = sysm.rhs(rho + 0.5 * h * k2)
        k4 = sysm.rhs(rho + h * k3)
        return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    if t_grid[0] > 0:
        n_sub = int(np.ceil(t_grid[0] / max_step))
        for _ in range(n_sub):
            rho = rk4(rho, t_grid[0] / n_sub)
    measure(0, rho)
    for i in range(1, T):
        dt = t_grid[i] - t_grid[i - 1]
        n_sub = max(1, int(np.ceil(dt / max_step - 1e-9)))
        for _ in range(n_sub):
            rho = rk4(rho, dt / n_sub)
        measure(i, rho)
    out.final_state = rho
    return out

