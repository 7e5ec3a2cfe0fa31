"""Free-space dipole-dipole couplings and the factorization of the decay matrix.

``J`` is the coherent exchange, ``Gamma`` the collective decay matrix, both in
units of the single-atom rate.  ``G`` satisfies ``G @ G.T == Gamma`` and sets the
correlation of the noise acting on different emitters.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KernelInconsistencyError, SingularKernelError

SERIES_CUTOFF = 1e-2
PSD_TOLERANCE = 1e-10


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CouplingMatrices:
    J: np.ndarray
    Gamma: np.ndarray
    G: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    kind: str = "free-space"

    def __post_init__(self):
        for name in ("J", "Gamma", "G", "eigenvalues", "eigenvectors"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_atoms(self):
        return self.Gamma.shape[0]

    @property
    def eigen_spectrum(self):
        return list(zip(self.eigenvalues, self.eigenvectors.T))

    @property
    def noise_factor(self):
        """Columns of ``G`` that carry noise; zero columns are dropped."""
        keep = np.any(self.G != 0.0, axis=0)
        return np.ascontiguousarray(self.G[:, keep])

    @property
    def has_coherent(self):
        return bool(np.any(self.J != 0.0))


def _sinc(x):
    if x < SERIES_CUTOFF:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return np.sin(x) / x


def _gamma_bracket(x):
    # cos x / x^2 - sin x / x^3, cancels to -1/3 as x -> 0
    if x < SERIES_CUTOFF:
        x2 = x * x
        return -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0 + x2 * x2 * x2 / 45360.0
    return (x * np.cos(x) - np.sin(x)) / x**3


def dipole_kernel(r, polarization):
    """Return ``(J_mn, Gamma_mn)`` for separation ``r`` (wavelengths) and unit dipole ``polarization``."""
    r = np.asarray(r, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        raise SingularKernelError("dipole kernel is singular at zero separation")
    p = np.asarray(polarization, dtype=complex)
    c = abs(np.dot(p, r / dist)) ** 2
    x = 2.0 * np.pi * dist
    gamma = 1.5 * ((1.0 - c) * _sinc(x) + (1.0 - 3.0 * c) * _gamma_bracket(x))
    j = -0.75 * ((1.0 - c) * np.cos(x) / x - (1.0 - 3.0 * c) * (np.sin(x) / x**2 + np.cos(x) / x**3))
    return j, gamma


def _kernel_matrix(positions, polarization):
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    r = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(r, axis=-1)
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0.0):
        raise SingularKernelError("two emitters share a position")
    d = np.where(off, dist, 1.0)
    proj = np.einsum("mni,i->mn", r, np.asarray(polarization, dtype=complex)) / d
    c = np.abs(proj) ** 2
    x = 2.0 * np.pi * d
    small = x < SERIES_CUTOFF
    x2 = x * x
    sinc = np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(x) / x)
    bracket = np.where(
        small,
        -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0 + x2 * x2 * x2 / 45360.0,
        (x * np.cos(x) - np.sin(x)) / x**3,
    )
    gamma = 1.5 * ((1.0 - c) * sinc + (1.0 - 3.0 * c) * bracket)
    j = -0.75 * ((1.0 - c) * np.cos(x) / x - (1.0 - 3.0 * c) * (np.sin(x) / x2 + np.cos(x) / x**3))
    gamma[~off] = 1.0
    j[~off] = 0.0
    # exact symmetry regardless of rounding in r_mn vs r_nm
    gamma = 0.5 * (gamma + gamma.T)
    j = 0.5 * (j + j.T)
    return j, gamma


def factorize(gamma, tol=PSD_TOLERANCE):
    """Eigen-factorize a symmetric PSD matrix: ``G = U sqrt(diag(clamped eigenvalues))``."""
    n = gamma.shape[0]
    w, u = np.linalg.eigh(gamma)
    if w.min() < -tol * n:
        raise KernelInconsistencyError(
            f"decay matrix has eigenvalue {w.min():.3e} below -{tol * n:.1e}; the kernel is inconsistent"
        )
    w = np.where(w < 0.0, 0.0, w)
    return w, u, u * np.sqrt(w)


def build_matrices(ensemble):
    j, gamma = _kernel_matrix(ensemble.positions, ensemble.polarization)
    w, u, g = factorize(gamma)
    return CouplingMatrices(J=j, Gamma=gamma, G=g, eigenvalues=w, eigenvectors=u, kind="free-space")


def dicke_override(n_atoms):
    """All-to-all identical decay, no coherent exchange, rank-one noise factor."""
    n = int(n_atoms)
    gamma = np.ones((n, n))
    g = np.zeros((n, n))
    g[:, 0] = 1.0
    w, u = np.linalg.eigh(gamma)
    w = np.where(w < 0.0, 0.0, w)
    return CouplingMatrices(J=np.zeros((n, n)), Gamma=gamma, G=g, eigenvalues=w, eigenvectors=u, kind="dicke")


def dump_csv(couplings, outdir):
    """Write J, Gamma, G and the eigen-spectrum of Gamma as CSV files; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat in (("J", couplings.J), ("Gamma", couplings.Gamma), ("G", couplings.G)):
        p = outdir / f"{name}.csv"
        np.savetxt(p, mat, delimiter=",", fmt="%.17g")
        paths.append(p)
    p = outdir / "spectrum.csv"
    with open(p, "w", newline="") as f:
        w = csv.writer(f)
        n = couplings.n_atoms
        w.writerow(["index", "gamma"] + [f"u{m}" for m in range(n)])
        for i, (val, vec) in enumerate(couplings.eigen_spectrum):
            w.writerow([i, repr(float(val))] + [repr(float(v)) for v in vec])
    paths.append(p)
    return paths
