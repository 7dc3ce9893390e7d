"""Counter-based deterministic randomness keyed by (seed, tag path, draw index).

Every draw is a pure function of the stream's seed, its tag path, and a
per-stream counter, so results do not depend on scheduling or worker
count.  Fork a child stream per (role, index) for order-independence;
consume a single stream sequentially within one logical cell.
"""

from __future__ import annotations

import hashlib
from typing import Tuple, Union

Tag = Union[str, int]

_BLOCK_BITS = 512


class RngStream:
    __slots__ = ("seed", "path", "_counter", "_key")

    def __init__(self, seed: int, path: Tuple[Tag, ...] = ()):
        self.seed = seed & 0xFFFFFFFFFFFFFFFF
        self.path = path
        self._counter = 0
        self._key = self.seed.to_bytes(8, "big") + b"|".join(
            str(t).encode() for t in path
        )

    def child(self, *tags: Tag) -> "RngStream":
        return RngStream(self.seed, self.path + tags)

    def _block(self, counter: int, block: int) -> int:
        h = hashlib.blake2b(
            self._key + counter.to_bytes(8, "big") + block.to_bytes(4, "big"),
            digest_size=64,
        )
        return int.from_bytes(h.digest(), "big")

    def word(self, nbits: int) -> str:
        """Draw the next nbits as a bit word; advances this stream's counter."""
        if nbits < 0:
            raise ValueError("bit count must be nonnegative")
        counter = self._counter
        self._counter += 1
        if nbits == 0:
            return ""
        chunks = []
        for block in range((nbits + _BLOCK_BITS - 1) // _BLOCK_BITS):
            chunks.append(format(self._block(counter, block), "0512b"))
        return "".join(chunks)[:nbits]

    def uniform(self) -> float:
        """Next float in [0, 1) with 53 bits of precision."""
        counter = self._counter
        self._counter += 1
        return (self._block(counter, 0) >> (_BLOCK_BITS - 53)) / float(1 << 53)

    def randint(self, n: int) -> int:
        """Next integer uniform on [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        k = max(n.bit_length() + 8, 16)
        while True:
            counter = self._counter
            self._counter += 1
            v = self._block(counter, 0) >> (_BLOCK_BITS - k)
            if v < (1 << k) - ((1 << k) % n):
                return v % n
