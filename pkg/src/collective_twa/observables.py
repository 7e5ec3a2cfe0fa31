"""Weyl-symbol estimators of collective observables.

Trajectories are reduced to a :class:`MomentAccumulator` holding, per recorded
time, only the moments the estimators need.  Accumulators merge with the
pairwise (Chan et al.) update, so partial results from independent blocks of
trajectories combine in any order.

Conventions: ``S = 1/2 sum_n sigma_n`` (so ``S^z`` ranges over -N/2..N/2) and
"excitations" is ``N/2 + <S^z>``.  Rates are in units of Gamma0.
"""

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np

from .errors import InvalidArgumentError, UndefinedDirectionError

SQRT3 = np.sqrt(3.0)
_STATS = ("excitations", "total_rate", "kuramoto_r")


@dataclass(frozen=True)
class ObservableContext:
    """Static inputs the estimators need besides trajectory moments."""

    n_atoms: int
    gamma: np.ndarray = None
    positions: np.ndarray = None
    polarization: np.ndarray = None
    directions: np.ndarray = None
    pair_correlations: bool = False

    def __post_init__(self):
        if self.directions is not None and len(self.directions):
            d = np.atleast_2d(np.asarray(self.directions, dtype=float))
            d = d / np.linalg.norm(d, axis=1, keepdims=True)
            object.__setattr__(self, "directions", d)
            if self.positions is None:
                raise InvalidArgumentError("directional observables need emitter positions")
        else:
            object.__setattr__(self, "directions", np.zeros((0, 3)))

    @property
    def phase_matrix(self):
        # e^{2 pi i k.r_m}, shape (N, D)
        return np.exp(2j * np.pi * (np.asarray(self.positions) @ self.directions.T))

    @property
    def gamma_diag(self):
        return None if self.gamma is None else np.diag(self.gamma).copy()


def _merge_mean(ma, na, mb, nb):
    n = na + nb
    w = np.divide(nb, n, out=np.zeros_like(n, dtype=float), where=n > 0)
    w = w.reshape(w.shape + (1,) * (ma.ndim - w.ndim))
    return ma + (mb - ma) * w


@dataclass
class MomentAccumulator:
    """Trajectory means of the moments behind every estimator, for T recorded times."""

    context: ObservableContext
    times: np.ndarray
    count: np.ndarray
    mean_s: np.ndarray
    onsite: np.ndarray
    collective: np.ndarray
    gamma_pair: np.ndarray
    directional_pair: np.ndarray
    stat_mean: dict
    stat_m2: dict
    pair_corr: np.ndarray = None

    @classmethod
    def empty(cls, context, times):
        times = np.asarray(times, dtype=float)
        t, n, d = len(times), context.n_atoms, len(context.directions)
        return cls(
            context=context,
            times=times,
            count=np.zeros(t, dtype=np.int64),
            mean_s=np.zeros((t, n, 3)),
            onsite=np.zeros((t, 3, 3)),
            collective=np.zeros((t, 3, 3)),
            gamma_pair=np.zeros(t),
            directional_pair=np.zeros((t, d)),
            stat_mean={k: np.zeros(t) for k in _STATS},
            stat_m2={k: np.zeros(t) for k in _STATS},
            pair_corr=np.zeros((t, n, n), dtype=complex) if context.pair_correlations else None,
        )

    @classmethod
    def from_bloch(cls, s, context=None, t=0.0):
        """Single-time accumulator from Weyl vectors ``s`` of shape (B, N, 3)."""
        s = np.asarray(s, dtype=float)
        if s.ndim == 2:
            s = s[None]
        if context is None:
            context = ObservableContext(n_atoms=s.shape[1])
        acc = cls.empty(context, [t])
        acc.record(0, s)
        return acc

    @property
    def n_atoms(self):
        return self.context.n_atoms

    @property
    def n_times(self):
        return len(self.times)

    def record(self, i, s, alive=None):
        """Overwrite record ``i`` with the moments of the batch ``s`` (B, N, 3)."""
        if alive is not None and not np.all(alive):
            s = s[alive]
        b = len(s)
        self.count[i] = b
        if b == 0:
            return
        ctx = self.context
        splus = s[..., 0] + 1j * s[..., 1]
        self.mean_s[i] = s.mean(axis=0)
        self.onsite[i] = np.einsum("bnu,bnv->uv", s, s) / b
        total = s.sum(axis=1)
        self.collective[i] = total.T @ total / b

        exc = 0.5 * ctx.n_atoms + 0.5 * s[..., 2].sum(axis=1)
        if ctx.gamma is not None:
            quad = np.einsum("bm,bm->b", splus.conj(), splus @ ctx.gamma).real
            self.gamma_pair[i] = quad.mean()
            rate = 0.5 * s[..., 2] @ ctx.gamma_diag + 0.25 * quad
        else:
            rate = np.full(b, np.nan)
        if len(ctx.directions):
            amp = splus @ ctx.phase_matrix
            self.directional_pair[i] = (np.abs(amp) ** 2).mean(axis=0)
        phases = np.arctan2(s[..., 1], s[..., 0])
        r, _ = kuramoto_order(phases)
        for name, v in (("excitations", exc), ("total_rate", rate), ("kuramoto_r", r)):
            m = v.mean()
            self.stat_mean[name][i] = m
            self.stat_m2[name][i] = ((v - m) ** 2).sum()
        if self.pair_corr is not None:
            self.pair_corr[i] = splus.T @ splus.conj() / b

    def merge(self, other):
        """Combine with an accumulator over disjoint trajectories on the same time grid."""
        if self.n_times != other.n_times or not np.array_equal(self.times, other.times):
            raise InvalidArgumentError("cannot merge accumulators on different time grids")
        na, nb = self.count, other.count
        n = na + nb
        mm = lambda a, b: _merge_mean(a, na, b, nb)
        stat_mean, stat_m2 = {}, {}
        for k in self.stat_mean:
            delta = other.stat_mean[k] - self.stat_mean[k]
            stat_mean[k] = mm(self.stat_mean[k], other.stat_mean[k])
            corr = np.divide(delta**2 * na * nb, n, out=np.zeros_like(delta), where=n > 0)
            stat_m2[k] = self.stat_m2[k] + other.stat_m2[k] + corr
        return MomentAccumulator(
            context=self.context,
            times=self.times,
            count=n,
            mean_s=mm(self.mean_s, other.mean_s),
            onsite=mm(self.onsite, other.onsite),
            collective=mm(self.collective, other.collective),
            gamma_pair=mm(self.gamma_pair, other.gamma_pair),
            directional_pair=mm(self.directional_pair, other.directional_pair),
            stat_mean=stat_mean,
            stat_m2=stat_m2,
            pair_corr=None if self.pair_corr is None else mm(self.pair_corr, other.pair_corr),
        )

    def standard_error(self, name):
        n = self.count.astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(self.stat_m2[name] / (n - 1.0) / n)

    def state_dict(self):
        """Flat dict of arrays, for exact comparisons and serialization."""
        out = {"times": self.times, "count": self.count, "mean_s": self.mean_s, "onsite": self.onsite,
               "collective": self.collective, "gamma_pair": self.gamma_pair,
               "directional_pair": self.directional_pair}
        for k in self.stat_mean:
            out[f"{k}_mean"] = self.stat_mean[k]
            out[f"{k}_m2"] = self.stat_m2[k]
        if self.pair_corr is not None:
            out["pair_corr"] = self.pair_corr
        return out


def excitation_number(acc):
    return 0.5 * acc.n_atoms + 0.5 * acc.mean_s[..., 2].sum(axis=-1)


def total_emission_rate(acc):
    """Photon emission rate into all directions (positive), from Ito's lemma on the S^z symbol."""
    gd = acc.context.gamma_diag
    if gd is None:
        raise InvalidArgumentError("total emission rate needs the decay matrix in the observable context")
    return 0.5 * acc.mean_s[..., 2] @ gd + 0.25 * acc.gamma_pair


def _direction_index(acc, k_hat):
    k = np.asarray(k_hat, dtype=float)
    k = k / np.linalg.norm(k)
    for i, d in enumerate(acc.context.directions):
        if np.allclose(d, k, atol=1e-12):
            return i
    return None


def single_atom_profile(polarization, k_hat):
    k = np.asarray(k_hat, dtype=float)
    k = k / np.linalg.norm(k)
    return 1.0 - abs(np.dot(np.asarray(polarization, dtype=complex), k)) ** 2


def directional_emission_rate(acc, k_hat):
    """Emission rate along ``k_hat``, normalized so one fully excited atom emits ``1 - |p.k|^2``.

    Uses the recorded moments for a registered direction, or the full pair
    correlations when they were recorded.
    """
    ctx = acc.context
    if ctx.polarization is None:
        raise InvalidArgumentError("directional emission needs the dipole polarization")
    prof = single_atom_profile(ctx.polarization, k_hat)
    diag = (0.5 * (1.0 + acc.mean_s[..., 2])).sum(axis=-1)
    onsite_t = acc.onsite[..., 0, 0] + acc.onsite[..., 1, 1]
    i = _direction_index(acc, k_hat)
    if i is not None:
        return prof * (diag + 0.25 * (acc.directional_pair[..., i] - onsite_t))
    if acc.pair_corr is None:
        raise InvalidArgumentError(f"direction {k_hat} was not recorded and pair correlations are off")
    k = np.asarray(k_hat, dtype=float) / np.linalg.norm(k_hat)
    ph = np.exp(2j * np.pi * (np.asarray(ctx.positions) @ k))
    corr = acc.pair_corr.copy()
    idx = np.arange(acc.n_atoms)
    corr[..., idx, idx] = 0.0
    cross = 0.25 * np.einsum("m,...mn,n->...", ph, corr, ph.conj())
    total = diag + cross
    bad = np.abs(total.imag) > 1e-2 * np.maximum(np.abs(total.real), 1e-300)
    if np.any(bad):
        warnings.warn("directional emission estimate has a large imaginary residual", RuntimeWarning)
    return prof * total.real


def collective_spin(acc):
    """Mean collective spin <S> (T, 3) and symmetrized second moments (T, 3, 3)."""
    n = acc.n_atoms
    mean = 0.5 * acc.mean_s.sum(axis=-2)
    second = 0.25 * (acc.collective - acc.onsite + n * np.eye(3))
    return mean, second


def spin_squeezing(acc, strict=True):
    """Wineland squeezing parameter per record; NaN (or an error if ``strict``) where <S> vanishes."""
    n = acc.n_atoms
    mean, second = collective_spin(acc)
    out = np.full(len(mean), np.nan)
    for t in range(len(mean)):
        m = mean[t]
        norm = np.linalg.norm(m)
        if norm <= 1e-6 * n:
            if strict:
                raise UndefinedDirectionError(f"mean spin {norm:.3g} too small to define a squeezing plane")
            continue
        cov = second[t] - np.outer(m, m)
        u = m / norm
        a = np.cross(u, [1.0, 0.0, 0.0] if abs(u[0]) < 0.9 else [0.0, 1.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(u, a)
        basis = np.stack([a, b])
        plane = basis @ cov @ basis.T
        out[t] = n * np.linalg.eigvalsh(0.5 * (plane + plane.T))[0] / norm**2
    return out


def kuramoto_order(phases):
    """Coherence ``r`` and mean phase ``psi`` of ``(1/N) sum exp(i phi_n)`` over the last axis."""
    z = np.exp(1j * np.asarray(phases, dtype=float)).mean(axis=-1)
    return np.abs(z), np.angle(z)


def dicke_degeneracy(n_atoms, j):
    """Number of spin-j multiplets among N spin-1/2; ``j`` may be half-integer."""
    n = int(n_atoms)
    two_j = int(round(2 * j))
    a = (n + two_j) // 2 + 1
    b = (n - two_j) // 2
    return (two_j + 1) * factorial(n) // (factorial(a) * factorial(b))


def trapping_steady_state(n_atoms):
    """Long-time ``<S^z>`` of collective decay from the fully mixed state, and the excitations above ground.

    Each state ``|j, m, alpha>`` holds weight 2^-N and ends at ``m = -j``.
    """
    n = int(n_atoms)
    if n < 2 or n % 2:
        raise InvalidArgumentError(f"trapping formula is defined for even N >= 2, got {n_atoms}")
    sz = Fraction(0)
    for j in range(n // 2 + 1):
        sz += Fraction((2 * j + 1) * dicke_degeneracy(n, j) * (-j), 2**n)
    return float(sz), float(Fraction(n, 2) + sz)


def validity_ratio(weights, purity, collective_norm):
    """Upper bound ``sqrt(2 |J|^2 Tr rho^2) / ||W_{S rho}||`` on the truncation error."""
    if not 0.0 < purity <= 1.0:
        raise InvalidArgumentError("purity must lie in (0, 1]")
    if not collective_norm > 0:
        raise InvalidArgumentError("collective norm must be positive")
    w = np.asarray(weights, dtype=complex)
    return np.sqrt(2.0 * np.vdot(w, w).real * purity) / collective_norm


def dicke_validity_ratio(n_atoms, j):
    """Bound for a symmetric eigenstate ``|j, m>`` under all-ones weights."""
    return np.sqrt(2.0 * n_atoms) / j


@dataclass
class ObservableRecord:
    t: float
    excitations: float
    total_rate: float = np.nan
    directional_rates: dict = field(default_factory=dict)
    squeezing: float = np.nan
    kuramoto_r: float = np.nan
    kuramoto_r_std: float = np.nan
    flags: list = field(default_factory=list)


def records(acc):
    """Per-time :class:`ObservableRecord` list from an accumulator."""
    exc = excitation_number(acc)
    rate = total_emission_rate(acc) if acc.context.gamma is not None else np.full(acc.n_times, np.nan)
    xi2 = spin_squeezing(acc, strict=False)
    dirs = {tuple(d): directional_emission_rate(acc, d) for d in acc.context.directions}
    n = np.maximum(acc.count - 1, 1)
    r_std = np.sqrt(acc.stat_m2["kuramoto_r"] / n)
    out = []
    for i, t in enumerate(acc.times):
        rec = ObservableRecord(
            t=float(t), excitations=float(exc[i]), total_rate=float(rate[i]),
            directional_rates={d: float(v[i]) for d, v in dirs.items()}, squeezing=float(xi2[i]),
            kuramoto_r=float(acc.stat_mean["kuramoto_r"][i]), kuramoto_r_std=float(r_std[i]),
        )
        if not -0.5 <= rec.excitations <= acc.n_atoms + 0.5:
            rec.flags.append("excitations-out-of-range")
        out.append(rec)
    return out
