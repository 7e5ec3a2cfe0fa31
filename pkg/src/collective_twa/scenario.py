"""Scenario files: YAML documents validated against ``schema/scenario.schema.json``.

A scenario fixes geometry, couplings, drive, initial state, integration settings
and which observables to record.  :func:`load_scenario` returns a
:class:`Scenario` whose :meth:`Scenario.resolved` tree has every default filled
in; feeding that tree back (also when wrapped under a top-level ``scenario`` key,
as in run metadata) reproduces the run exactly.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .couplings import build_matrices, dicke_override
from .errors import InvalidArgumentError, ScenarioError, TWAError
from .geometry import (
    CIRCULAR_POLARIZATION,
    CLOUD_MIN_SEPARATION,
    AtomEnsemble,
    DriveField,
    build_square_lattice,
    load_positions,
    rabi_vector,
    sample_gaussian_cloud,
)
from .phase_space import InitialState
from .sde import SimConfig, dicke_timestep, spatial_timestep

# records per unit time when sample_stride is "auto"
AUTO_RECORDS_PER_TIME = 100

_POLARIZATIONS = {
    "circular": CIRCULAR_POLARIZATION,
    "linear-x": np.array([1.0, 0.0, 0.0], dtype=complex),
    "linear-y": np.array([0.0, 1.0, 0.0], dtype=complex),
    "linear-z": np.array([0.0, 0.0, 1.0], dtype=complex),
}


def load_schema():
    text = resources.files("collective_twa").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def _node_line(node, path):
    """1-based line of the YAML node at ``path``, falling back to the deepest parent found."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def _where(source, path, node):
    field_ = ".".join(str(p) for p in path) or "<root>"
    line = _node_line(node, path) if node is not None else None
    return f"{source}:{line}: {field_}" if line else f"{source}: {field_}"


def parse_text(text, source="<scenario>"):
    """YAML text to a validated plain tree; errors carry line and field."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        tree = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ScenarioError(f"{source}:{line}: YAML syntax error: {exc.problem}") from None
    if not isinstance(tree, dict):
        raise ScenarioError(f"{source}: a scenario must be a mapping")
    if set(tree) >= {"scenario"} and isinstance(tree["scenario"], dict):
        # run metadata: the resolved scenario sits under "scenario"
        tree = tree["scenario"]
        node = next(v for k, v in node.value if k.value == "scenario")
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(tree), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        raise ScenarioError(f"{_where(source, path, node)}: {err.message}")
    _check_finite(tree, [], source, node)
    return tree


def _check_finite(obj, path, source, node):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ScenarioError(f"{_where(source, path, node)}: value must be finite, got {obj}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, path + [k], source, node)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, path + [i], source, node)


def _polarization(spec):
    if spec is None:
        return CIRCULAR_POLARIZATION.copy()
    if isinstance(spec, str):
        return _POLARIZATIONS[spec].copy()
    return np.array([complex(re, im) for re, im in spec])


def _polarization_tree(p):
    for name, vec in _POLARIZATIONS.items():
        if np.allclose(p, vec, atol=0, rtol=0):
            return name
    return [[float(z.real), float(z.imag)] for z in p]


@dataclass(frozen=True)
class Scenario:
    name: str
    n_atoms: int
    coupling: str
    ensemble: AtomEnsemble
    drive: DriveField
    initial: InitialState
    sim: SimConfig
    directions: tuple = ()
    squeezing: bool = True
    kuramoto: bool = True
    pair_correlations: bool = False
    tolerances: dict = field(default_factory=dict)
    squeezing_max: float = None
    geometry: dict = field(default_factory=dict)

    def couplings(self):
        if self.coupling == "dicke-override":
            return dicke_override(self.n_atoms)
        return build_matrices(self.ensemble)

    def rabi(self):
        if self.drive.rabi == 0.0:
            return np.zeros(self.n_atoms, dtype=complex)
        if self.ensemble is None:
            return np.full(self.n_atoms, self.drive.rabi, dtype=complex)
        return rabi_vector(self.drive, self.ensemble)

    def with_seed(self, seed):
        sim = SimConfig(**{**self.sim.__dict__, "seed": int(seed)})
        return Scenario(**{**self.__dict__, "sim": sim})

    def resolved(self):
        """Plain tree with all defaults made explicit."""
        tree = {
            "name": self.name,
            "geometry": dict(self.geometry),
            "coupling": self.coupling,
            "drive": {"rabi": float(self.drive.rabi), "direction": list(self.drive.direction),
                      "detuning": float(self.drive.detuning)},
            "initial": self.initial.value,
            "sim": {"dt": float(self.sim.dt), "t_final": float(self.sim.t_final), "n_traj": int(self.sim.n_traj),
                    "seed": int(self.sim.seed), "sample_stride": int(self.sim.sample_stride),
                    "block_size": int(self.sim.block_size), "scheme": self.sim.scheme},
            "observables": {"directions": [list(map(float, d)) for d in self.directions],
                            "squeezing": self.squeezing, "kuramoto": self.kuramoto,
                            "pair_correlations": self.pair_correlations},
        }
        if self.tolerances or self.squeezing_max is not None:
            tree["validate"] = {"tolerances": {k: dict(v) for k, v in self.tolerances.items()}}
            if self.squeezing_max is not None:
                tree["validate"]["squeezing_max"] = float(self.squeezing_max)
        return tree


def _build_geometry(geo, base_dir, where):
    kind = geo["kind"]
    pol = _polarization(geo.get("polarization"))
    resolved = {"kind": kind, "polarization": _polarization_tree(pol)}
    if kind == "dicke":
        resolved["n_atoms"] = int(geo["n_atoms"])
        return None, int(geo["n_atoms"]), resolved
    if kind == "lattice":
        pos = build_square_lattice(geo["rows"], geo["cols"], float(geo["spacing"]))
        resolved.update(rows=int(geo["rows"]), cols=int(geo["cols"]), spacing=float(geo["spacing"]))
        source = "lattice"
    elif kind == "cloud":
        seed = int(geo.get("seed", 0))
        sep = float(geo.get("min_separation", CLOUD_MIN_SEPARATION))
        pos = sample_gaussian_cloud(int(geo["n_atoms"]), [float(s) for s in geo["sigma"]], seed, sep)
        resolved.update(n_atoms=int(geo["n_atoms"]), sigma=[float(s) for s in geo["sigma"]], seed=seed,
                        min_separation=sep)
        source = "cloud"
    else:
        if "file" in geo:
            path = Path(geo["file"])
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ScenarioError(f"{where}: geometry.file: positions file {path} does not exist")
            pos = load_positions(path)
            resolved["file"] = str(path.resolve())
        else:
            pos = np.asarray(geo["positions"], dtype=float)
            resolved["positions"] = pos.tolist()
        source = "positions"
    try:
        ens = AtomEnsemble(pos, pol, source)
    except TWAError as exc:
        raise ScenarioError(f"{where}: geometry: {exc}") from None
    return ens, ens.n_atoms, resolved


def build_scenario(tree, source="<scenario>", base_dir="."):
    """Turn a validated tree into a :class:`Scenario`."""
    base_dir = Path(base_dir)
    ens, n, geo = _build_geometry(tree["geometry"], base_dir, source)
    coupling = tree.get("coupling", "dicke-override" if ens is None else "free-space")
    if ens is None and coupling != "dicke-override":
        raise ScenarioError(f"{source}: coupling: a dicke geometry has no positions; use dicke-override")
    obs = tree.get("observables", {})
    directions = tuple(tuple(float(x) for x in d) for d in obs.get("directions", []))
    if directions and coupling == "dicke-override":
        raise ScenarioError(f"{source}: observables.directions: directional rates need positions, "
                            "unavailable with dicke-override")
    for d in directions:
        if np.linalg.norm(d) == 0:
            raise ScenarioError(f"{source}: observables.directions: zero vector")
    directions = tuple(tuple((np.asarray(d) / np.linalg.norm(d)).tolist()) for d in directions)

    d = tree.get("drive", {})
    try:
        direction = np.asarray(d.get("direction", [0.0, 0.0, 1.0]), dtype=float)
        direction = direction / np.linalg.norm(direction)
        drive = DriveField(float(d.get("rabi", 0.0)), tuple(direction), float(d.get("detuning", 0.0)))
    except (TWAError, ZeroDivisionError, FloatingPointError) as exc:
        raise ScenarioError(f"{source}: drive: {exc}") from None

    s = tree["sim"]
    dt = s.get("dt", "auto")
    if dt == "auto":
        dt = dicke_timestep(n) if coupling == "dicke-override" else spatial_timestep()
    stride = s.get("sample_stride", "auto")
    if stride == "auto":
        stride = max(1, int(round(1.0 / (AUTO_RECORDS_PER_TIME * dt))))
    try:
        sim = SimConfig(dt=float(dt), t_final=float(s["t_final"]), n_traj=int(s["n_traj"]),
                        seed=int(s.get("seed", 0)), sample_stride=int(stride),
                        block_size=int(s.get("block_size", 1024)), scheme=s.get("scheme", "cartesian"))
    except InvalidArgumentError as exc:
        raise ScenarioError(f"{source}: sim: {exc}") from None

    val = tree.get("validate", {})
    return Scenario(
        name=tree.get("name", Path(str(source)).stem),
        n_atoms=n,
        coupling=coupling,
        ensemble=ens,
        drive=drive,
        initial=InitialState.parse(tree.get("initial", "excited")),
        sim=sim,
        directions=directions,
        squeezing=bool(obs.get("squeezing", True)),
        kuramoto=bool(obs.get("kuramoto", True)),
        pair_correlations=bool(obs.get("pair_correlations", False)),
        tolerances={k: dict(v) for k, v in val.get("tolerances", {}).items()},
        squeezing_max=val.get("squeezing_max"),
        geometry=geo,
    )


def load_scenario(path):
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file {path} does not exist")
    tree = parse_text(path.read_text(), source=str(path))
    return build_scenario(tree, source=str(path), base_dir=path.parent)


def scenario_from_text(text, base_dir="."):
    return build_scenario(parse_text(text), base_dir=base_dir)
