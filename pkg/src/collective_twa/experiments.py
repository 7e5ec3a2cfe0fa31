"""Reference experiments shared by the test suite and the scripts in ``scripts/``.

Each function runs one TWA ensemble plus its exact reference and returns plain
numbers, so callers decide what to assert or print.
"""

from dataclasses import dataclass

import numpy as np

from .couplings import build_matrices, dicke_override
from .geometry import AtomEnsemble, DriveField, build_square_lattice, rabi_vector, sample_gaussian_cloud
from .observables import (
    directional_emission_rate,
    excitation_number,
    spin_squeezing,
    total_emission_rate,
    trapping_steady_state,
)
from .oracles import dicke_evolve, lindblad_evolve, single_atom_sigma_z
from .sde import SimConfig, dicke_timestep, run_ensemble, spatial_timestep


@dataclass
class Comparison:
    times: np.ndarray
    twa: dict
    exact: dict
    metrics: dict


def _stride_for(dt, spacing):
    return max(1, int(round(spacing / dt)))


def single_atom_decay(n_traj=100_000, seed=0, t_final=5.0, spacing=0.05, workers=None):
    """N=1 free-space decay through the full collective machinery vs ``2 exp(-t) - 1``."""
    ens = AtomEnsemble(np.zeros((1, 3)))
    cfg = SimConfig(dt=spatial_timestep(), t_final=t_final, n_traj=n_traj, seed=seed,
                    sample_stride=_stride_for(spatial_timestep(), spacing))
    res = run_ensemble(cfg, build_matrices(ens), "excited", workers=workers)
    acc = res.accumulator
    sz = 2.0 * excitation_number(acc) - 1.0
    se = 2.0 * acc.standard_error("excitations")
    exact = single_atom_sigma_z(acc.times)
    dev = np.abs(sz - exact)
    ok = se > 0
    return Comparison(acc.times, {"sigma_z": sz, "se": se}, {"sigma_z": exact},
                      {"max_abs": float(dev.max()), "max_se": float((dev[ok] / se[ok]).max()),
                       "final_twa": float(sz[-1]), "final_exact": float(exact[-1])})


def dicke_benchmark(n_atoms, n_traj=64_000, seed=0, t_final=1.0, spacing=0.005, workers=None):
    """Inverted Dicke decay: excitation deviation and burst peak vs the ladder equations."""
    dt = dicke_timestep(n_atoms)
    cfg = SimConfig(dt=dt, t_final=t_final, n_traj=n_traj, seed=seed, sample_stride=_stride_for(dt, spacing))
    res = run_ensemble(cfg, dicke_override(n_atoms), "excited", workers=workers)
    acc = res.accumulator
    exc, rate = excitation_number(acc), total_emission_rate(acc)
    ref = dicke_evolve(n_atoms, "excited", acc.times)
    i, k = int(np.argmax(rate)), int(np.argmax(ref.rate))
    metrics = {
        "max_abs_dev": float(np.abs(exc - ref.excitations).max()),
        "peak_time_twa": float(acc.times[i]), "peak_time_exact": float(acc.times[k]),
        "peak_height_twa": float(rate[i]), "peak_height_exact": float(ref.rate[k]),
    }
    metrics["peak_time_rel"] = abs(metrics["peak_time_twa"] / metrics["peak_time_exact"] - 1.0)
    metrics["peak_height_rel"] = abs(metrics["peak_height_twa"] / metrics["peak_height_exact"] - 1.0)
    return Comparison(acc.times, {"excitations": exc, "rate": rate,
                                  "excitations_se": acc.standard_error("excitations")},
                      {"excitations": ref.excitations, "rate": ref.rate}, metrics)


def trapping_benchmark(n_atoms, n_traj=16_000, seed=0, t_final=6.0, window=1.0, workers=None):
    """Fully mixed start: long-time excitations vs the closed-form trapped population."""
    dt = dicke_timestep(n_atoms)
    cfg = SimConfig(dt=dt, t_final=t_final, n_traj=n_traj, seed=seed, sample_stride=_stride_for(dt, 0.05))
    res = run_ensemble(cfg, dicke_override(n_atoms), "mixed", workers=workers)
    acc = res.accumulator
    exc = excitation_number(acc)
    late = acc.times >= t_final - window
    _, exact = trapping_steady_state(n_atoms)
    twa = float(exc[late].mean())
    return Comparison(acc.times, {"excitations": exc}, {"trapped": exact},
                      {"twa": twa, "exact": exact, "rel": abs(twa / exact - 1.0)})


def driven_array(rabi, n_traj=20_000, seed=0, rows=2, cols=2, spacing=0.8, t_final=4.0,
                 record_spacing=0.05, squeezing_max=2.0, workers=None):
    """Driven square array from the ground state vs dense Lindblad propagation.

    The squeezing comparison is restricted to times where the exact xi^2 is at most
    ``squeezing_max``; elsewhere the mean spin nearly vanishes and xi^2 is a ratio of
    small numbers.
    """
    ens = AtomEnsemble(build_square_lattice(rows, cols, spacing))
    drive = DriveField(rabi)
    om = rabi_vector(drive, ens)
    cfg = SimConfig(dt=spatial_timestep(), t_final=t_final, n_traj=n_traj, seed=seed,
                    sample_stride=_stride_for(spatial_timestep(), record_spacing))
    res = run_ensemble(cfg, build_matrices(ens), "ground", drive, om, ens, workers=workers)
    acc = res.accumulator
    twa = {"excitations": excitation_number(acc), "rate": total_emission_rate(acc),
           "xi2": spin_squeezing(acc, strict=False)}
    ref = lindblad_evolve(ens, drive, "ground", acc.times, rabi=om)
    exact = {"excitations": ref.excitations, "rate": ref.total_rate, "xi2": ref.squeezing}
    n = ens.n_atoms
    mask = np.isfinite(twa["xi2"]) & np.isfinite(exact["xi2"]) & (exact["xi2"] <= squeezing_max)
    metrics = {
        "rms_excitations_over_n": float(np.sqrt(np.mean((twa["excitations"] - exact["excitations"]) ** 2)) / n),
        "rms_rate_over_n": float(np.sqrt(np.mean((twa["rate"] - exact["rate"]) ** 2)) / n),
        "max_xi2_dev": float(np.abs(twa["xi2"] - exact["xi2"])[mask].max()) if mask.any() else float("nan"),
        "xi2_points": int(mask.sum()),
    }
    return Comparison(acc.times, twa, exact, metrics)


def inverted_array(initial="excited", n_traj=4096, seed=0, spacing=0.2, t_final=5.0, workers=None):
    """Dense 4x4 array: excitation curve from full inversion (plateau) or from the ground state."""
    ens = AtomEnsemble(build_square_lattice(4, 4, spacing))
    cfg = SimConfig(dt=spatial_timestep(), t_final=t_final, n_traj=n_traj, seed=seed,
                    sample_stride=_stride_for(spatial_timestep(), 0.05))
    res = run_ensemble(cfg, build_matrices(ens), initial, workers=workers)
    acc = res.accumulator
    return acc.times, excitation_number(acc), acc.standard_error("excitations")


CLOUD_SIGMA = (0.15, 0.15, 5.5)
CLOUD_DIRECTIONS = ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0))


def cloud_enhancement(n_traj=8_000, seed=0, geometry_seeds=range(8), n_atoms=50, rabi=20.0, t_final=6.0,
                      window=3.0, workers=None, single_atom_traj=20_000):
    """Steady-state directional emission of a driven cigar-shaped cloud per atom, relative to one atom.

    Each geometry seed draws one frozen cloud and integrates ``n_traj`` trajectories
    for it.  The enhancement ``<gamma_cloud(k)> / (N gamma_1(k)) - 1`` averages the
    late-time rate over clouds; ``se`` is the standard error of that average across
    clouds (one cloud: from 0.5-wide time bins).  The reference single-atom rate is
    the exact steady state; a TWA single-atom run is reported alongside.
    """
    geometry_seeds = list(geometry_seeds)
    drive = DriveField(rabi)
    stride = 50
    per_cloud = {d: [] for d in CLOUD_DIRECTIONS}
    for g in geometry_seeds:
        ens = AtomEnsemble(sample_gaussian_cloud(n_atoms, CLOUD_SIGMA, g))
        cfg = SimConfig(dt=spatial_timestep(), t_final=t_final, n_traj=n_traj, seed=seed + g, sample_stride=stride)
        acc = run_ensemble(cfg, build_matrices(ens), "ground", drive, rabi_vector(drive, ens), ens,
                           directions=CLOUD_DIRECTIONS, workers=workers).accumulator
        late = acc.times >= t_final - window
        for d in CLOUD_DIRECTIONS:
            per_cloud[d].append(directional_emission_rate(acc, d)[late])

    one = AtomEnsemble(np.zeros((1, 3)))
    ref = lindblad_evolve(one, drive, "ground", acc.times, directions=CLOUD_DIRECTIONS)
    cfg1 = SimConfig(dt=spatial_timestep(), t_final=t_final, n_traj=single_atom_traj, seed=seed + 10_007,
                     sample_stride=stride)
    acc1 = run_ensemble(cfg1, build_matrices(one), "ground", drive, rabi_vector(drive, one), one,
                        directions=CLOUD_DIRECTIONS, workers=workers).accumulator
    out = {}
    for d in CLOUD_DIRECTIONS:
        exact = ref.directional_rates[d][late].mean()
        twa1 = directional_emission_rate(acc1, d)[late].mean()
        means = np.array([c.mean() for c in per_cloud[d]])
        if len(means) > 1:
            se = means.std(ddof=1) / np.sqrt(len(means))
        else:
            # one cloud: per-record values are correlated in time, so block them into 0.5-wide bins
            c = per_cloud[d][0]
            per_bin = max(1, int(round(0.5 / (spatial_timestep() * stride))))
            bins = c[: len(c) // per_bin * per_bin].reshape(-1, per_bin).mean(axis=1)
            se = bins.std(ddof=1) / np.sqrt(len(bins)) if len(bins) > 1 else float("nan")
        out[d] = {"enhancement": float(means.mean() / (n_atoms * exact) - 1.0),
                  "enhancement_twa_ref": float(means.mean() / (n_atoms * twa1) - 1.0),
                  "se": float(se / (n_atoms * exact)),
                  "per_cloud": [float(m / (n_atoms * exact) - 1.0) for m in means]}
    return out
