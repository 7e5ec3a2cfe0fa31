"""Command-line front end: ``collective-twa {run,validate,dump-couplings,version}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 validation
tolerance exceeded.  Times are in 1/Gamma0 and rates in Gamma0 everywhere.
"""

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .couplings import dump_csv
from .errors import TWAError, UnsupportedScenarioError
from .observables import (
    directional_emission_rate,
    excitation_number,
    spin_squeezing,
    total_emission_rate,
    trapping_steady_state,
)
from .oracles import MAX_LINDBLAD_ATOMS, dicke_evolve, lindblad_evolve, single_atom_excitation
from .phase_space import InitialState
from .scenario import load_scenario
from .sde import _default_workers, run_ensemble

log = logging.getLogger("collective_twa")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 2, 3, 4
FIXED_COLUMNS = ("t", "excitations", "total_rate", "excitations_se", "total_rate_se",
                 "squeezing_xi2", "kuramoto_r", "kuramoto_r_std")
CSV_HEADER_NOTE = "# t in 1/Gamma0; rates in Gamma0; excitations = N/2 + <S^z>"


def direction_label(i):
    return f"gamma_dir_{i}"


def twa_columns(scenario, result):
    acc = result.accumulator
    n = acc.count.astype(float)
    cols = {"t": acc.times, "excitations": excitation_number(acc), "total_rate": total_emission_rate(acc),
            "excitations_se": acc.standard_error("excitations"), "total_rate_se": acc.standard_error("total_rate")}
    cols["squeezing_xi2"] = spin_squeezing(acc, strict=False) if scenario.squeezing else np.full(len(n), np.nan)
    if scenario.kuramoto:
        cols["kuramoto_r"] = acc.stat_mean["kuramoto_r"]
        cols["kuramoto_r_std"] = np.sqrt(acc.stat_m2["kuramoto_r"] / np.maximum(n - 1.0, 1.0))
    else:
        cols["kuramoto_r"] = cols["kuramoto_r_std"] = np.full(len(n), np.nan)
    for i, d in enumerate(scenario.directions):
        cols[direction_label(i)] = directional_emission_rate(acc, d)
    return cols


def write_csv(path, columns, note=CSV_HEADER_NOTE, extra_notes=()):
    names = list(columns)
    rows = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with open(path, "w", newline="") as fh:
        fh.write(note + "\n")
        for line in extra_notes:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    names = next(reader)
    data = np.array([[float(x) for x in row] for row in reader])
    return {k: data[:, i] for i, k in enumerate(names)}


def burst(times, rate):
    i = int(np.nanargmax(rate))
    return {"peak_time": float(times[i]), "peak_height": float(rate[i])}


def simulate(scenario, workers=None, reproducible=False):
    couplings = scenario.couplings()
    t0 = time.perf_counter()
    result = run_ensemble(scenario.sim, couplings, scenario.initial, scenario.drive, scenario.rabi(),
                          scenario.ensemble, scenario.directions, scenario.pair_correlations,
                          workers=workers, reproducible=reproducible)
    elapsed = time.perf_counter() - t0
    log.info("integrated %d trajectories of %d atoms in %.1f s", scenario.sim.n_traj, scenario.n_atoms, elapsed)
    return result, elapsed


def _dir_notes(scenario):
    return [f"{direction_label(i)}: k = {list(d)}" for i, d in enumerate(scenario.directions)]


def cmd_run(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result, elapsed = simulate(scenario, args.workers, args.reproducible)
    cols = twa_columns(scenario, result)
    write_csv(out / "timeseries.csv", cols, extra_notes=_dir_notes(scenario))
    meta = {"scenario": scenario.resolved(), "seed": int(scenario.sim.seed), "version": __version__,
            "reproducible": bool(args.reproducible)}
    (out / "run.yaml").write_text(yaml.safe_dump(meta, sort_keys=False))
    summary = {
        "name": scenario.name, "n_atoms": scenario.n_atoms, "n_traj": scenario.sim.n_traj,
        "n_blowup": result.n_blowup, "seed": int(scenario.sim.seed), "version": __version__,
        "final": {k: float(v[-1]) for k, v in cols.items() if k != "t"},
        "burst": burst(cols["t"], cols["total_rate"]),
        "directions": {direction_label(i): list(d) for i, d in enumerate(scenario.directions)},
        "runtime_s": elapsed,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {out / 'timeseries.csv'}, {out / 'run.yaml'}, {out / 'summary.json'}")
    return EXIT_OK


def oracle_columns(scenario, times):
    """Exact reference on the TWA grid, or UnsupportedScenarioError."""
    n = scenario.n_atoms
    nan = np.full(len(times), np.nan)
    cols = {"t": times}
    if scenario.coupling == "dicke-override":
        if scenario.drive.rabi != 0.0 or scenario.drive.detuning != 0.0:
            raise UnsupportedScenarioError("the Dicke ladder oracle covers undriven decay only")
        if scenario.initial is InitialState.ALL_GROUND:
            raise UnsupportedScenarioError("nothing to validate for an undriven ground state")
        sol = dicke_evolve(n, scenario.initial, times)
        cols.update(excitations=sol.excitations, total_rate=sol.rate)
        kind = "dicke-ladder"
    elif n == 1 and scenario.drive.rabi == 0.0 and scenario.initial is InitialState.ALL_EXCITED:
        cols.update(excitations=single_atom_excitation(times), total_rate=single_atom_excitation(times))
        kind = "single-atom"
    elif n <= MAX_LINDBLAD_ATOMS:
        sol = lindblad_evolve(scenario.ensemble, scenario.drive, scenario.initial, times, rabi=scenario.rabi(),
                              directions=scenario.directions)
        cols.update(excitations=sol.excitations, total_rate=sol.total_rate, squeezing_xi2=sol.squeezing)
        for i, d in enumerate(scenario.directions):
            cols[direction_label(i)] = sol.directional_rates[tuple(np.asarray(d) / np.linalg.norm(d))]
        kind = "lindblad"
    else:
        raise UnsupportedScenarioError(
            f"no exact oracle for a free-space scenario with N={n} > {MAX_LINDBLAD_ATOMS}")
    cols.setdefault("squeezing_xi2", nan)
    return kind, cols


def compare(scenario, twa, oracle, kind):
    """Per-observable deviation metrics and tolerance verdicts."""
    report = {}
    pairs = {"excitations": ("excitations", "excitations_se"), "total_rate": ("total_rate", "total_rate_se")}
    if kind == "single-atom":
        pairs["sigma_z"] = ("sigma_z", "sigma_z_se")
        twa = dict(twa, sigma_z=2.0 * twa["excitations"] - 1.0, sigma_z_se=2.0 * twa["excitations_se"])
        oracle = dict(oracle, sigma_z=2.0 * oracle["excitations"] - 1.0)
    if np.any(np.isfinite(oracle.get("squeezing_xi2", np.nan))):
        pairs["squeezing_xi2"] = ("squeezing_xi2", None)
    for name, (col, se_col) in pairs.items():
        a, b = np.asarray(twa[col]), np.asarray(oracle[col])
        mask = np.isfinite(a) & np.isfinite(b)
        if name == "squeezing_xi2" and scenario.squeezing_max is not None:
            mask &= b <= scenario.squeezing_max
        if not mask.any():
            continue
        dev = a[mask] - b[mask]
        entry = {"max_abs": float(np.abs(dev).max()), "rms": float(np.sqrt(np.mean(dev**2))),
                 "final_rel": float(abs(a[-1] - b[-1]) / max(abs(b[-1]), 1e-300)), "n_points": int(mask.sum())}
        if se_col is not None:
            se = np.asarray(twa[se_col])[mask]
            ok = se > 0
            entry["max_se"] = float(np.max(np.abs(dev[ok]) / se[ok])) if ok.any() else float("nan")
        tol = scenario.tolerances.get(name, {})
        entry["tolerances"] = tol
        entry["pass"] = all(entry[k] <= v for k, v in tol.items())
        report[name] = entry
    return report


def cmd_validate(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    times = scenario.sim.record_times
    # fail fast before the expensive ensemble if no oracle applies
    if scenario.coupling != "dicke-override" and scenario.n_atoms > MAX_LINDBLAD_ATOMS:
        raise UnsupportedScenarioError(
            f"no exact oracle for a free-space scenario with N={scenario.n_atoms} > {MAX_LINDBLAD_ATOMS}")
    kind, oracle = oracle_columns(scenario, times)
    result, _ = simulate(scenario, args.workers, args.reproducible)
    twa = twa_columns(scenario, result)
    report = compare(scenario, twa, oracle, kind)
    extra = {}
    if (kind == "dicke-ladder" and scenario.initial is InitialState.FULLY_MIXED
            and scenario.n_atoms % 2 == 0 and scenario.n_atoms >= 2):
        _, trapped = trapping_steady_state(scenario.n_atoms)
        rel = abs(twa["excitations"][-1] - trapped) / trapped
        extra["trapping"] = {"exact": trapped, "twa_final": float(twa["excitations"][-1]), "rel": float(rel)}
        tol = scenario.tolerances.get("excitations", {}).get("final_rel")
        if tol is not None:
            extra["trapping"]["pass"] = bool(rel <= tol)
    passed = all(e["pass"] for e in report.values()) and extra.get("trapping", {}).get("pass", True)
    doc = {"scenario": scenario.name, "oracle": kind, "n_traj": scenario.sim.n_traj, "observables": report,
           **extra, "pass": bool(passed)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "timeseries.csv", twa, extra_notes=_dir_notes(scenario))
        full = {k: oracle.get(k, np.full(len(times), np.nan)) for k in twa}
        write_csv(out / "oracle.csv", full, extra_notes=[f"exact reference: {kind}"] + _dir_notes(scenario))
        (out / "report.json").write_text(json.dumps(doc, indent=2))
    for name, e in report.items():
        se = f" max_se={e['max_se']:.3g}" if "max_se" in e else ""
        print(f"{name:14s} max_abs={e['max_abs']:.4g} rms={e['rms']:.4g}{se} "
              f"final_rel={e['final_rel']:.3g} {'PASS' if e['pass'] else 'FAIL'}")
    if "trapping" in extra:
        tr = extra["trapping"]
        print(f"trapping       exact={tr['exact']:.6g} twa={tr['twa_final']:.6g} rel={tr['rel']:.3g}")
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_TOLERANCE


def cmd_dump(args):
    scenario = load_scenario(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_csv(scenario.couplings(), out)
    print(f"wrote coupling matrices to {out}")
    return EXIT_OK


def cmd_version(args):
    print(f"collective-twa {__version__}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="collective-twa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required):
        sp.add_argument("--scenario", required=True, help="scenario YAML file (or a run.yaml)")
        sp.add_argument("--out", required=out_required, help="output directory")

    def sim_flags(sp):
        sp.add_argument("--workers", type=int, default=_default_workers(), help="worker threads")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--reproducible", action="store_true", help="merge blocks in a fixed order")

    r = sub.add_parser("run", help="integrate a scenario and write CSV, metadata and summary")
    common(r, True)
    sim_flags(r)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="compare a scenario against its exact oracle")
    common(v, False)
    sim_flags(v)
    v.set_defaults(func=cmd_validate)
    d = sub.add_parser("dump-couplings", help="write J, Gamma, G and the spectrum as CSV")
    common(d, True)
    d.set_defaults(func=cmd_dump)
    sub.add_parser("version", help="print the version").set_defaults(func=cmd_version)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in 64 unsigned bits", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except TWAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
