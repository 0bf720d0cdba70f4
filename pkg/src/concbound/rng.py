"""Counter-based uniform streams.

Every draw is a pure function of (seed, trial, counter): trial ``t`` owns a
splitmix64 sequence whose state is keyed by ``hash(seed, t)``.  The scalar
``Stream`` and the vectorised ``uniforms`` produce identical bits, so serial
and batched simulations agree exactly.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def trial_keys(seed: int, trials: np.ndarray) -> np.ndarray:
    """Per-trial stream keys for an array of trial indices."""
    with np.errstate(over="ignore"):
        s = _mix(np.asarray([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) * _SEED_SALT + _GOLDEN)
        t = np.asarray(trials, dtype=np.uint64)
        return _mix(s ^ (t * _GOLDEN + _M1))


def uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Uniform doubles in [0, 1) for draw ``counters`` of streams ``keys``."""
    with np.errstate(over="ignore"):
        c = np.asarray(counters, dtype=np.uint64) + np.uint64(1)
        z = _mix(keys + c * _GOLDEN)
    return (z >> _S11).astype(np.float64) * _INV53


class Stream:
    """Sequential view of one trial's stream (used by the serial simulators)."""

    def __init__(self, seed: int = 0, trial: int = 0):
        self.key = trial_keys(seed, np.array([trial]))
        self.counter = 0

    def uniform(self) -> float:
        u = float(uniforms(self.key, np.array([self.counter]))[0])
        self.counter += 1
        return u


class ForcedStream:
    """Replays a fixed list of uniforms; handy for pinning trajectories in tests."""

    def __init__(self, draws):
        self._draws = list(draws)
        self.counter = 0

    def uniform(self) -> float:
        u = self._draws[self.counter]
        self.counter += 1
        return u
