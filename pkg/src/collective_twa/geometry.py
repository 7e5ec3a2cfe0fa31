"""Emitter configurations and the classical drive field.

All lengths are in units of the transition wavelength, so the optical phase
between two points is ``2*pi*k_hat.(r_m - r_n)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgumentError

CIRCULAR_POLARIZATION = np.array([1.0, 1.0j, 0.0]) / np.sqrt(2.0)
MIN_SEPARATION = 1e-9
CLOUD_MIN_SEPARATION = 1e-3
MAX_RESAMPLES = 1000


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AtomEnsemble:
    positions: np.ndarray
    polarization: np.ndarray = field(default_factory=lambda: CIRCULAR_POLARIZATION.copy())
    source: str = "explicit"

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise InvalidArgumentError(f"positions must be an (N, 3) array with N >= 1, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("positions must be finite")
        pol = np.asarray(self.polarization, dtype=complex).reshape(-1)
        if pol.shape != (3,):
            raise InvalidArgumentError("polarization must be a complex 3-vector")
        if abs(np.vdot(pol, pol).real - 1.0) > 1e-12:
            raise InvalidArgumentError(f"polarization must have unit Hermitian norm, got {np.vdot(pol, pol).real}")
        if len(pos) > 1:
            dmin = min_pairwise_distance(pos)
            if dmin <= MIN_SEPARATION:
                raise InvalidArgumentError(f"emitters overlap: minimum separation {dmin:.3g} wavelengths")
        object.__setattr__(self, "positions", _frozen(pos, float))
        object.__setattr__(self, "polarization", _frozen(pol, complex))

    @property
    def n_atoms(self):
        return len(self.positions)

    N = n_atoms


@dataclass(frozen=True)
class DriveField:
    """Plane-wave drive.  ``rabi`` and ``detuning`` are in units of Gamma0."""

    rabi: float = 0.0
    direction: tuple = (0.0, 0.0, 1.0)
    detuning: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.rabi) or self.rabi < 0:
            raise InvalidArgumentError("rabi amplitude must be finite and >= 0")
        if not np.isfinite(self.detuning):
            raise InvalidArgumentError("detuning must be finite")
        n = np.asarray(self.direction, dtype=float)
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"propagation direction must be a unit 3-vector, got {self.direction}")
        object.__setattr__(self, "direction", tuple(float(x) for x in n))


def min_pairwise_distance(positions):
    pos = np.asarray(positions, dtype=float)
    if len(pos) < 2:
        return np.inf
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    d[np.diag_indices(len(pos))] = np.inf
    return d.min()


def build_square_lattice(rows, cols, spacing):
    """Sites of a ``rows x cols`` square lattice in the z=0 plane, row-major from the origin."""
    if int(rows) < 1 or int(cols) < 1:
        raise InvalidArgumentError("rows and cols must be >= 1")
    if not spacing > 0:
        raise InvalidArgumentError(f"lattice spacing must be positive, got {spacing}")
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pos = np.zeros((rows * cols, 3))
    pos[:, 0] = c.ravel() * spacing
    pos[:, 1] = r.ravel() * spacing
    return pos


def sample_gaussian_cloud(n_atoms, sigma, rng, min_separation=CLOUD_MIN_SEPARATION):
    """Independent normal positions with per-axis standard deviations ``sigma``.

    A draw closer than ``min_separation`` to an accepted atom is redrawn, at most
    ``MAX_RESAMPLES`` times per atom.  ``rng`` is a seed or a numpy Generator.
    """
    if int(n_atoms) < 1:
        raise InvalidArgumentError("need at least one atom")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (3,) or np.any(~(sigma > 0)):
        raise InvalidArgumentError("sigma must be three positive standard deviations")
    rng = np.random.default_rng(rng)
    pos = rng.normal(size=(n_atoms, 3)) * sigma
    for n in range(1, n_atoms):
        for _ in range(MAX_RESAMPLES):
            if np.min(np.linalg.norm(pos[:n] - pos[n], axis=1)) >= min_separation:
                break
            pos[n] = rng.normal(size=3) * sigma
        else:
            raise DegenerateGeometryError(
                f"atom {n} could not be placed {min_separation} wavelengths from the others "
                f"after {MAX_RESAMPLES} resamples"
            )
    return pos


def rabi_at(drive, position):
    """Complex Rabi frequency ``Omega * exp(2 pi i n.r)`` at ``position`` (broadcasts over rows)."""
    r = np.asarray(position, dtype=float)
    phase = 2.0 * np.pi * (r @ np.asarray(drive.direction))
    return drive.rabi * np.exp(1j * phase)


def rabi_vector(drive, ensemble):
    if drive is None:
        return np.zeros(ensemble.n_atoms, dtype=complex)
    return np.atleast_1d(rabi_at(drive, ensemble.positions))


def save_positions(path, ensemble_or_positions):
    pos = getattr(ensemble_or_positions, "positions", ensemble_or_positions)
    np.savetxt(path, np.asarray(pos), fmt="%.17g", header="x y z  (units of the transition wavelength)")


def load_positions(path):
    pos = np.loadtxt(path, comments="#", ndmin=2)
    if pos.shape[1] != 3:
        raise InvalidArgumentError(f"{path}: expected three columns 'x y z', found {pos.shape[1]}")
    return pos
