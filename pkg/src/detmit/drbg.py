"""Deterministic byte generation.

Everything random in the simulator flows through :class:`HashDrbg`, a
counter-mode SHA-256 generator.  Python's stdlib RNGs would work, but a hash
DRBG gives bit-exact streams across platforms and interpreter versions, which
the transcript-determinism contract depends on.
"""

from __future__ import annotations

import hashlib


def _as_seed_bytes(seed: bytes | int | str) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        return seed.to_bytes(16, "big", signed=True)
    return seed.encode("utf-8")


class HashDrbg:
    """Counter-mode SHA-256 generator over a 32-byte internal key."""

    __slots__ = ("_key", "_counter", "_buf", "_pos")

    def __init__(self, seed: bytes | int | str):
        self._key = hashlib.sha256(b"drbg-key:" + _as_seed_bytes(seed)).digest()
        self._counter = 0
        self._buf = b""
        self._pos = 0

    def take(self, n: int) -> bytes:
        """Return the next n bytes of the stream."""
        out = bytearray()
        while n > 0:
            if self._pos >= len(self._buf):
                block = self._key + self._counter.to_bytes(8, "big")
                self._buf = hashlib.sha256(block).digest()
                self._pos = 0
                self._counter += 1
            chunk = self._buf[self._pos : self._pos + n]
            out += chunk
            self._pos += len(chunk)
            n -= len(chunk)
        return bytes(out)

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def uniform(self) -> float:
        """Float in [0, 1) with 53 bits of precision."""
        return (self.u64() >> 11) * (2.0**-53)

    def bit(self) -> int:
        return self.take(1)[0] & 1

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        span = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.u64()
            if v < span:
                return v % n

    def child(self, label: bytes | int | str) -> "HashDrbg":
        """Derive an independent generator; used for per-party sub-streams."""
        return HashDrbg(self._key + b"/child/" + _as_seed_bytes(label))


def derive_trial_seed(master_seed: int, trial_index: int) -> bytes:
    """Sub-seed for one trial: hash of (master seed, trial index)."""
    material = master_seed.to_bytes(16, "big", signed=True) + trial_index.to_bytes(
        8, "big"
    )
    return hashlib.sha256(b"trial-seed:" + material).digest()
