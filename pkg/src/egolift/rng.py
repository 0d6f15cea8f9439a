"""Deterministic random number generation.

The generator is a permuted-congruential generator with 64-bit state and
32-bit output (PCG-XSH-RR): the state advances through a 64-bit LCG
(multiplier 6364136223846793005, odd per-stream increment) and each output
is an xorshifted, randomly-rotated slice of the pre-advance state.  All
derived draws (uniform doubles, Box-Muller normals, bounded integers) are
defined purely in terms of that 32-bit stream, so equal seeds produce
identical streams on every platform.

Blocks of outputs are produced with the LCG jump-ahead formula
``state_k = a^k * s + c * (a^k - 1) / (a - 1)  (mod 2^64)`` so large draws
are vectorized without changing the stream.
"""

from __future__ import annotations

import numpy as np

_MUL = 6364136223846793005
_MASK = (1 << 64) - 1
_BLOCK = 4096

# A[k] = MUL^k mod 2^64 and S[k] = 1 + MUL + ... + MUL^(k-1) mod 2^64,
# for k = 0 .. _BLOCK.  Shared by all instances (increment-independent).
_A = np.empty(_BLOCK + 1, dtype=np.uint64)
_S = np.empty(_BLOCK + 1, dtype=np.uint64)
_a, _s = 1, 0
for _k in range(_BLOCK + 1):
    _A[_k] = _a
    _S[_k] = _s
    _s = (_s + _a) & _MASK
    _a = (_a * _MUL) & _MASK
del _a, _s, _k

_INV53 = float(2.0 ** -53)


def _mix64(x: int) -> int:
    """splitmix64 finalizer; used to fold keys into derived seeds."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class Rng:
    """Seeded generator; equal seeds give bit-identical draw streams."""

    def __init__(self, seed: int, stream: int = 0):
        self._inc = (((stream & _MASK) << 1) | 1) & _MASK
        s = (self._inc * _MUL + self._inc) & _MASK  # one step from state 0
        s = (s + (seed & _MASK)) & _MASK
        self._state = (s * _MUL + self._inc) & _MASK
        self._c = (_S * np.uint64(self._inc))  # jump-ahead additive terms

    # -- state (for checkpointing) --

    def get_state(self) -> dict:
        return {"state": int(self._state), "inc": int(self._inc)}

    def set_state(self, state: dict) -> None:
        self._state = int(state["state"]) & _MASK
        self._inc = int(state["inc"]) & _MASK
        self._c = (_S * np.uint64(self._inc))

    def derive(self, *keys: int) -> "Rng":
        """Child generator with a seed mixed from this seed's stream position
        and the given keys; used for per-sample / per-epoch substreams."""
        h = self._state
        for k in keys:
            h = _mix64(h ^ _mix64(int(k) & _MASK))
        return Rng(h, stream=_mix64(h ^ 0xDA3E39CB94B95BDB))

    # -- raw stream --

    def _block_u32(self, n: int) -> np.ndarray:
        # oldstates for draws 0..n-1, then advance the state by n steps
        old = _A[:n] * np.uint64(self._state) + self._c[:n]
        self._state = (int(_A[n]) * self._state + int(self._c[n])) & _MASK
        xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)).astype(np.uint32)
        rot = (old >> np.uint64(59)).astype(np.uint32)
        return (xorshifted >> rot) | (xorshifted << ((np.uint32(32) - rot) & np.uint32(31)))

    def u32(self, n: int) -> np.ndarray:
        """n raw 32-bit outputs as uint32."""
        if n <= _BLOCK:
            return self._block_u32(n)
        parts = []
        left = n
        while left > 0:
            take = min(left, _BLOCK)
            parts.append(self._block_u32(take))
            left -= take
        return np.concatenate(parts)

    # -- derived draws --

    def random(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1) with 53-bit resolution."""
        raw = self.u32(2 * n)
        hi = (raw[0::2] >> np.uint32(5)).astype(np.float64)
        lo = (raw[1::2] >> np.uint32(6)).astype(np.float64)
        return (hi * 67108864.0 + lo) * _INV53

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Standard-normal draws via Box-Muller on consecutive uniform pairs."""
        if isinstance(shape, int):
            shape = (shape,)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)  # (0, 1]: log stays finite
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        t = 2.0 * np.pi * u2
        z = np.empty(2 * m, dtype=np.float64)
        z[0::2] = r * np.cos(t)
        z[1::2] = r * np.sin(t)
        return (mean + std * z[:n]).reshape(shape)

    def integer(self, bound: int) -> int:
        """One integer uniform on [0, bound), by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        threshold = (1 << 32) % bound
        while True:
            x = int(self.u32(1)[0])
            if x >= threshold:
                return x % bound

    def shuffle(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
