"""Spin phase space: Weyl symbols of Pauli matrices and initial-state sampling.

A spin-1/2 at angles ``(theta, phi)`` has Pauli Weyl symbol
``s = sqrt(3) (sin t cos p, sin t sin p, cos t)``, so ``|s|^2 = 3`` everywhere.
Initial states are sampled on the discrete set ``s in {+-1}^3``, which reproduces
the first and second Pauli moments of each product state exactly per draw.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .rng import STREAM_INITIAL, block_words

SQRT3 = np.sqrt(3.0)
EPS_POLE = 1e-6
# |cos(theta)| may not exceed this inside the pole guard
COS_POLE = np.cos(EPS_POLE)


class InitialState(enum.Enum):
    ALL_EXCITED = "excited"
    ALL_GROUND = "ground"
    FULLY_MIXED = "mixed"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"inverted": "excited", "allexcited": "excited", "allground": "ground", "fullymixed": "mixed"}
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown initial state {value!r}; expected one of excited, ground, mixed")


@dataclass
class PhasePoint:
    """Angles of N spins.  ``cos_theta`` is the stored polar coordinate; ``phi`` is unwrapped."""

    cos_theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.cos_theta = np.clip(np.asarray(self.cos_theta, dtype=float), -COS_POLE, COS_POLE)
        self.phi = np.asarray(self.phi, dtype=float)

    @classmethod
    def from_angles(cls, theta, phi):
        return cls(np.cos(np.clip(theta, EPS_POLE, np.pi - EPS_POLE)), phi)

    @classmethod
    def from_bloch(cls, s, phi_ref=None):
        """Angles from Weyl vectors ``s[..., 3]``.  If ``phi_ref`` is given, phi is unwrapped against it."""
        s = np.asarray(s, dtype=float)
        norm = np.linalg.norm(s, axis=-1)
        phi = np.arctan2(s[..., 1], s[..., 0])
        if phi_ref is not None:
            phi = phi_ref + np.angle(np.exp(1j * (phi - phi_ref)))
        return cls(s[..., 2] / norm, phi)

    @property
    def theta(self):
        return np.arccos(self.cos_theta)

    @property
    def sin_theta(self):
        return np.sqrt(1.0 - self.cos_theta**2)

    @property
    def n_atoms(self):
        return self.cos_theta.shape[-1]

    def bloch(self):
        st = self.sin_theta
        return SQRT3 * np.stack([st * np.cos(self.phi), st * np.sin(self.phi), self.cos_theta], axis=-1)

    def copy(self):
        return PhasePoint(self.cos_theta.copy(), self.phi.copy())


def bloch_weyl(theta, phi):
    """Weyl symbol of the Pauli vector at ``(theta, phi)``; broadcasts, last axis has length 3."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return SQRT3 * np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def discrete_bloch_samples(state, n_atoms, seed, traj_ids):
    """Weyl vectors of shape ``(len(traj_ids), n_atoms, 3)`` with entries in {-1, +1}.

    Spin ``n`` of trajectory ``b`` is decided by one 64-bit word of the
    ``(seed, trajectory)`` counter stream: bit 0 signs s_x, bit 1 signs s_y and,
    for the mixed state, bit 2 picks excited or ground.
    """
    state = InitialState.parse(state)
    words = block_words(seed, traj_ids, 0, n_atoms, stream=STREAM_INITIAL)
    bits = lambda k: ((words >> np.uint64(k)) & np.uint64(1)).astype(float)
    s = np.empty((len(traj_ids), n_atoms, 3))
    s[..., 0] = 2.0 * bits(0) - 1.0
    s[..., 1] = 2.0 * bits(1) - 1.0
    if state is InitialState.ALL_EXCITED:
        s[..., 2] = 1.0
    elif state is InitialState.ALL_GROUND:
        s[..., 2] = -1.0
    else:
        s[..., 2] = 2.0 * bits(2) - 1.0
    return s


def sample_initial(state, n_atoms, rng, trajectory=None):
    """One phase point for ``n_atoms`` spins.

    ``rng`` is either an integer seed (then ``trajectory`` picks the counter
    stream, default 0) or a numpy Generator.  cos(theta) is +-1/sqrt(3) and phi
    sits on the four diagonals pi/4 + k pi/2.
    """
    if n_atoms < 1:
        raise ValueError("need at least one spin")
    if isinstance(rng, np.random.Generator):
        state = InitialState.parse(state)
        s = np.empty((n_atoms, 3))
        s[:, :2] = rng.choice([-1.0, 1.0], size=(n_atoms, 2))
        if state is InitialState.FULLY_MIXED:
            s[:, 2] = rng.choice([-1.0, 1.0], size=n_atoms)
        else:
            s[:, 2] = 1.0 if state is InitialState.ALL_EXCITED else -1.0
    else:
        s = discrete_bloch_samples(state, n_atoms, rng, [0 if trajectory is None else trajectory])[0]
    return PhasePoint.from_bloch(s)
