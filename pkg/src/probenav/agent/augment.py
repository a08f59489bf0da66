"""Random-shift image augmentation: replicate-pad then crop."""

from __future__ import annotations

import numpy as np


def augment_observation(obs: np.ndarray, rng: np.random.Generator,
                        pad: int = 4) -> np.ndarray:
    """Shift an (H, W) image by uniform integer offsets in [-pad, pad]."""
    if pad == 0:
        return obs.copy()
    padded = np.pad(obs, pad, mode="edge")
    r, c = rng.integers(0, 2 * pad + 1, size=2)
    h, w = obs.shape
    return padded[r:r + h, c:c + w].copy()


def augment_batch(batch: np.ndarray, rng: np.random.Generator,
                  pad: int = 4) -> np.ndarray:
    """Independent random shift per image in an (N, H, W) batch."""
    if pad == 0:
        return batch.copy()
    n, h, w = batch.shape
    padded = np.pad(batch, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    out = np.empty_like(batch)
    for i, (r, c) in enumerate(offsets):
        out[i] = padded[i, r:r + h, c:c + w]
    return out
