"""Counter-based random streams keyed by (master_seed, replica_index).

Each replica gets its own Philox4x64-10 key, derived by numpy's SeedSequence
from ``(master_seed, spawn_key=(replica_index,))``.  Output word ``k`` of a
stream depends only on that key and ``k``, so results never depend on how
replicas are spread over workers or in which order they run.
"""

from __future__ import annotations

import numpy as np

GENERATOR = "numpy Philox4x64-10, key = SeedSequence(master_seed, spawn_key=(replica_index,))"


class RngStream:
    """One replica's stream of 64-bit words (plus a numpy Generator on the same bits)."""

    def __init__(self, master_seed: int, replica_index: int = 0):
        if master_seed < 0 or master_seed >= 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if replica_index < 0:
            raise ValueError("replica_index must be >= 0")
        self.master_seed = int(master_seed)
        self.replica_index = int(replica_index)
        self._bitgen = np.random.Philox(
            np.random.SeedSequence(self.master_seed, spawn_key=(self.replica_index,)))
        self._generator = None

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(int(n))

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            self._generator = np.random.Generator(self._bitgen)
        return self._generator

    @property
    def counter(self) -> int:
        """Number of 64-bit words consumed so far."""
        st = self._bitgen.state
        blocks = int(st["state"]["counter"][0])  # 2**64 blocks is out of reach
        return 4 * blocks - (4 - int(st["buffer_pos"]))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, replica_index={self.replica_index}, counter={self.counter})"
