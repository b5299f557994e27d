"""Dense linear algebra helpers and a deterministic, portable random stream.

Matrices are 2-D C-contiguous float64 numpy arrays, row-major; batched inputs
are laid out batch x features everywhere in this package.

Random numbers come from SplitMix64 run in counter mode: draw ``i`` (1-based)
of a stream with seed ``s`` is ``mix64((s + i * GOLDEN) mod 2**64)`` where
``GOLDEN = 0x9E3779B97F4A7C15`` and ``mix64`` is the SplitMix64 finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic mod 2**64).  Because the state is a pure function of the
draw counter, the same bits are produced one value at a time or in
vectorised blocks, on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SEED_FOLD_INIT = 0x6A09E667F3BCC909  # arbitrary fixed constant (frac bits of sqrt 2)


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_seed(*parts: int | str) -> int:
    """Fold ints and strings into a 64-bit child seed, order-sensitive.

    Strings are first reduced to 8 bytes with blake2b so the folding rule
    only ever sees integers.
    """
    h = _SEED_FOLD_INIT
    for part in parts:
        if isinstance(part, str):
            part = int.from_bytes(
                hashlib.blake2b(part.encode(), digest_size=8).digest(), "little"
            )
        h = _mix64(((h ^ (part & _MASK64)) + _GOLDEN) & _MASK64)
    return h


class SeededRng:
    """Deterministic random stream; single-owner, never shared across threads.

    Parallel work must use independent streams made with :func:`derive_seed`.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._n = 0  # draws consumed so far

    def next_u64(self) -> int:
        self._n += 1
        return _mix64((self.seed + self._n * _GOLDEN) & _MASK64)

    def u64_block(self, n: int) -> np.ndarray:
        """The next ``n`` raw draws as a uint64 array (same bits as n calls)."""
        idx = np.arange(self._n + 1, self._n + n + 1, dtype=np.uint64)
        self._n += n
        return _mix64_array(np.uint64(self.seed) + idx * np.uint64(_GOLDEN))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """One double in [lo, hi)."""
        if not lo < hi:
            raise ValueError(f"uniform bounds must satisfy lo < hi, got lo={lo} hi={hi}")
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def uniform_block(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"uniform bounds must satisfy lo < hi, got lo={lo} hi={hi}")
        u = (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return lo + (hi - lo) * u

    def below(self, n: int) -> int:
        """Integer in [0, n).  Modulo bias is ~n/2**64, irrelevant at our sizes."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return self.next_u64() % n

    def coin(self) -> bool:
        return bool(self.next_u64() & 1)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n): stable argsort of fresh u64 keys."""
        return np.argsort(self.u64_block(n), kind="stable")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def argmax(v) -> int:
    """Index of the maximum; ties broken by lowest index."""
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("argmax of an empty sequence")
    return int(np.argmax(v))
