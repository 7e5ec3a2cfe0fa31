"""Counter-based random numbers for reproducible trajectory ensembles.

Every draw is a pure function of ``(seed, stream, trajectory, step, word)``, so a
trajectory's noise does not depend on how trajectories are batched or which
worker integrates them.  The generator is Philox4x64-10 (Salmon et al., SC'11),
bit-compatible with :class:`numpy.random.Philox`.
"""

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

STREAM_NOISE = 0
STREAM_INITIAL = 1


@nb.njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _SH32
    b_lo = b & _MASK32
    b_hi = b >> _SH32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _SH32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _SH32) + (cross >> _SH32)
    return hi, a * b


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox block function on a 256-bit counter and 128-bit key."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def _unit_open(x):
    # (0, 1]: never zero, safe for log
    return ((x >> _SH11) + np.uint64(1)) * _TWO_M53


@nb.njit(cache=True, nogil=True)
def fill_normals(seed, stream, traj_ids, step, out):
    """Fill ``out[b, :]`` with standard normals for trajectory ``traj_ids[b]`` at ``step``.

    Each Philox block yields four words, turned into four normals by Box-Muller.
    Word ``w`` of a row always comes from counter ``(traj, step, w // 4, stream)``.
    """
    n_rows, width = out.shape
    k0 = np.uint64(seed)
    k1 = np.uint64(0)
    st = np.uint64(stream)
    stp = np.uint64(step)
    two_pi = 2.0 * np.pi
    for b in range(n_rows):
        tr = np.uint64(traj_ids[b])
        for blk in range((width + 3) // 4):
            r0, r1, r2, r3 = philox4x64(tr, stp, np.uint64(blk), st, k0, k1)
            rad = np.sqrt(-2.0 * np.log(_unit_open(r0)))
            ang = two_pi * _unit_open(r1)
            j = 4 * blk
            out[b, j] = rad * np.cos(ang)
            if j + 1 < width:
                out[b, j + 1] = rad * np.sin(ang)
            if j + 2 < width:
                rad = np.sqrt(-2.0 * np.log(_unit_open(r2)))
                ang = two_pi * _unit_open(r3)
                out[b, j + 2] = rad * np.cos(ang)
                if j + 3 < width:
                    out[b, j + 3] = rad * np.sin(ang)


@nb.njit(cache=True, nogil=True)
def fill_words(seed, stream, traj_ids, step, out):
    """Raw 64-bit words; ``out[b, w]`` comes from counter ``(traj, step, w // 4, stream)``."""
    n_rows, width = out.shape
    k0 = np.uint64(seed)
    k1 = np.uint64(0)
    st = np.uint64(stream)
    stp = np.uint64(step)
    for b in range(n_rows):
        tr = np.uint64(traj_ids[b])
        for blk in range((width + 3) // 4):
            r0, r1, r2, r3 = philox4x64(tr, stp, np.uint64(blk), st, k0, k1)
            j = 4 * blk
            out[b, j] = r0
            if j + 1 < width:
                out[b, j + 1] = r1
            if j + 2 < width:
                out[b, j + 2] = r2
            if j + 3 < width:
                out[b, j + 3] = r3


class CounterRNG:
    """Per-trajectory random stream addressed by ``(trajectory, step)``.

    A lightweight handle: it stores only the seed, trajectory index and a step
    cursor.  ``normals(k)`` returns the Gaussian draws for the current step and
    advances the cursor.
    """

    def __init__(self, seed, trajectory=0, stream=STREAM_NOISE, step=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.trajectory = int(trajectory)
        self.stream = int(stream)
        self.step = int(step)

    def normals(self, k):
        out = np.empty((1, k))
        fill_normals(self.seed, self.stream, np.array([self.trajectory], dtype=np.int64), self.step, out)
        self.step += 1
        return out[0]

    def words(self, k):
        out = np.empty((1, k), dtype=np.uint64)
        fill_words(self.seed, self.stream, np.array([self.trajectory], dtype=np.int64), self.step, out)
        self.step += 1
        return out[0]


def block_normals(seed, traj_ids, step, width, stream=STREAM_NOISE):
    out = np.empty((len(traj_ids), width))
    fill_normals(int(seed) & 0xFFFFFFFFFFFFFFFF, stream, np.asarray(traj_ids, dtype=np.int64), step, out)
    return out


def block_words(seed, traj_ids, step, width, stream=STREAM_INITIAL):
    out = np.empty((len(traj_ids), width), dtype=np.uint64)
    fill_words(int(seed) & 0xFFFFFFFFFFFFFFFF, stream, np.asarray(traj_ids, dtype=np.int64), step, out)
    return out
