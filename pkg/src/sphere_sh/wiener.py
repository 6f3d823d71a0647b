"""Counter-based Brownian increments with exact dyadic coupling.

Every increment is addressable by (master_seed, path_index, channel, step): the
Philox key is derived from the first three, and step s consumes raw outputs
2s and 2s+1 of that stream (Box-Muller, cosine branch).  Nothing depends on
the order in which paths or channels are generated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream(master_seed: int, path_index: int, channel: int) -> np.random.Philox:
    seq = np.random.SeedSequence([master_seed & _MASK64, path_index, channel])
    return np.random.Philox(key=seq.generate_state(2, dtype=np.uint64))


def standard_normals(master_seed: int, path_index: int, channel: int,
                     start: int, stop: int) -> np.ndarray:
    """N(0,1) draws for steps ``start..stop-1`` of one channel."""
    if stop <= start:
        return np.empty(0)
    bg = _stream(master_seed, path_index, channel)
    # one Philox counter value yields four raw words
    block, skip = divmod(2 * start, 4)
    bg.advance(block)
    raw = bg.random_raw(skip + 2 * (stop - start))[skip:].reshape(-1, 2)
    # 53-bit uniforms; u1 in (0, 1] keeps the logarithm finite.
    u1 = ((raw[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class WienerGrid:
    channels: int
    steps: int
    dt_fine: float
    increments: np.ndarray
    master_seed: int
    path_index: int

    def coarsen(self, level: int) -> np.ndarray:
        return coarsen(self, level)


def generate_path(master_seed: int, path_index: int, channels: int, steps: int,
                  dt_fine: float) -> WienerGrid:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not dt_fine > 0:
        raise ValueError("dt_fine must be positive")
    scale = np.sqrt(dt_fine)
    inc = np.empty((channels, steps))
    for k in range(channels):
        inc[k] = scale * standard_normals(master_seed, path_index, k, 0, steps)
    inc.setflags(write=False)
    return WienerGrid(channels, steps, dt_fine, inc, master_seed, path_index)


def coarsen(grid: WienerGrid, level: int) -> np.ndarray:
    """Increments over blocks of 2**level fine steps (exact block sums)."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    block = 1 << level
    if grid.steps % block:
        raise ValueError(f"{grid.steps} steps are not divisible by 2**{level}")
    if level == 0:
        return np.array(grid.increments)
    return grid.increments.reshape(grid.channels, grid.steps // block, block).sum(axis=2)
