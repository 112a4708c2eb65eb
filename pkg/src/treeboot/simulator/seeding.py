"""Counter-based randomness: every draw is a pure function of (seed, replica, vertex, k).

Bit-exact derivation, all arithmetic modulo 2**64::

    mix(z)        = SplitMix64 finalizer
                    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
                    z ^= z >> 27; z *= 0x94D049BB133111EB
                    z ^= z >> 31
    splitmix(i)   = mix((i + 1) * GAMMA)        # i-th output of SplitMix64 from state 0
    replica key   = seed ^ splitmix(i)
    vertex key    = mix(replica_key + (v + 1) * GAMMA)
    draw k        = mix(vertex_key + (k + 1) * GAMMA)
    uniform       = (draw >> 11) * 2**-53       # in [0, 1)

Draw 0 decides the initial state (occupied iff ``u < p``, shared across all
``p`` so that runs at different densities are monotonically coupled).
Draws ``1, 2, ...`` are Exp(1) variables ``-log1p(-u)``: the first is the
activation delay of the eligibility clock, and the sequence is the gaps
between successive rings of the Poisson clock.

Results therefore do not depend on chunking, worker count or the order in
which vertices are visited.  The scalar (pure ``int``) and vectorized
(``uint64`` array) paths agree bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_U53 = 2.0 ** -53

_GAMMA_U = np.uint64(GAMMA)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_S11, _S27, _S30, _S31 = (np.uint64(s) for s in (11, 27, 30, 31))
_ONE = np.uint64(1)


def mix(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    # wrap-around is the point; numpy only warns about it for 0-d inputs
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1_U
        z = (z ^ (z >> _S27)) * _M2_U
    return z ^ (z >> _S31)


def splitmix(i) -> np.ndarray:
    i = np.asarray(i, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix((i + _ONE) * _GAMMA_U)


def replica_keys(seed: int, replicas, start: int = 0) -> np.ndarray:
    """Keys for replicas ``start .. start+replicas-1`` (or an explicit index array)."""
    if np.isscalar(replicas):
        idx = np.arange(start, start + int(replicas), dtype=np.uint64)
    else:
        idx = np.asarray(replicas, dtype=np.uint64)
    return np.uint64(int(seed) & MASK) ^ splitmix(idx)


def vertex_keys(rkeys, vids) -> np.ndarray:
    rkeys = np.asarray(rkeys, dtype=np.uint64)
    vids = np.asarray(vids, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        return mix(rkeys + (vids + _ONE) * _GAMMA_U)


def draw(vkeys, k: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return mix(np.asarray(vkeys, dtype=np.uint64) + np.uint64((k + 1) * GAMMA & MASK))


def uniform(z) -> np.ndarray:
    return (np.asarray(z, dtype=np.uint64) >> _S11).astype(np.float64) * _U53


def exponential(vkeys, k: int) -> np.ndarray:
    return -np.log1p(-uniform(draw(vkeys, k)))


# scalar twins, used by the per-vertex engines


def mix_int(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def replica_key_int(seed: int, i: int) -> int:
    return (seed & MASK) ^ mix_int((i + 1) * GAMMA)


def vertex_key_int(rkey: int, v: int) -> int:
    return mix_int(rkey + (v + 1) * GAMMA)


def uniform_int(vkey: int, k: int) -> float:
    return (mix_int(vkey + (k + 1) * GAMMA) >> 11) * _U53


def exponential_int(vkey: int, k: int) -> float:
    # numpy's log1p, not math.log1p: the two differ in the last ulp and the
    # scalar and array paths must agree exactly
    return float(-np.log1p(-uniform_int(vkey, k)))
