"""Deterministic seed streams.

Sample ``j`` of a run with master seed ``m`` lives in stream
``i = j // STREAM_LEN`` and is drawn from a Philox generator keyed by
``mix64(m, i)`` with its counter's third word set to ``j % STREAM_LEN``.
Any single sample can therefore be replayed without touching the others,
and the draws do not depend on how samples are spread over workers.
"""

import numpy as np

MASK64 = (1 << 64) - 1
STREAM_LEN = 256


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(seed, index):
    """Mix a 64-bit seed with a stream index into a child seed.

    Two rounds of the splitmix64 finalizer: the index is folded in after
    the first round so that (seed, index) and (seed + 1, index - 1) do not
    collide.
    """
    seed = int(seed) & MASK64
    index = int(index) & MASK64
    return _splitmix64(_splitmix64(seed) ^ ((index * 0xD1B54A32D192ED03) & MASK64))


def philox(key, counter_word=0):
    return np.random.Generator(
        np.random.Philox(key=int(key) & MASK64, counter=[0, 0, int(counter_word), 0])
    )


class SeedPlan:
    """Maps a global sample index to its generator and a replayable seed id."""

    def __init__(self, master_seed, stream_len=STREAM_LEN):
        if stream_len < 1:
            raise ValueError("stream_len must be >= 1")
        self.master_seed = int(master_seed) & MASK64
        self.stream_len = int(stream_len)

    def locate(self, index):
        return divmod(int(index), self.stream_len)

    def rng(self, index):
        stream, j = self.locate(index)
        return philox(mix64(self.master_seed, stream), j)

    def child(self, tag):
        """An independent plan, e.g. for the second factor of a decomposition."""
        return SeedPlan(mix64(self.master_seed ^ 0x5DEECE66D, tag), self.stream_len)

    def sample_seed(self, index):
        """A single 64-bit label for sample ``index`` (used in CSV output)."""
        stream, j = self.locate(index)
        return mix64(mix64(self.master_seed, stream), j)

    def __repr__(self):
        return f"SeedPlan(master_seed={self.master_seed}, stream_len={self.stream_len})"
