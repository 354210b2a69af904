"""Counter-based noise generation keyed by global sample index.

Every conversion in a capture owns an independent Philox stream keyed by
(seed, sample_index).  A segment running samples {k, k+M, ...} therefore
draws exactly the same noise values as a full-rate run visiting the same
indices, which is what makes interleaved captures bit-identical to
single-shot ones.
"""

from __future__ import annotations

import numpy as np

NoiseKey = tuple[int, int]  # (seed, global sample index)


def stream(key: NoiseKey) -> np.random.Generator:
    """Independent generator for one conversion."""
    seed, index = key
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, index], dtype=np.uint64))
    )


def conversion_noise(key: NoiseKey | None, n_bits: int) -> tuple[float, np.ndarray]:
    """Standard-normal draws for one conversion.

    Returns (sampling draw, per-bit comparator draws).  A ``None`` key
    disables noise and returns zeros.
    """
    if key is None:
        return 0.0, np.zeros(n_bits)
    draws = stream(key).standard_normal(n_bits + 1)
    return float(draws[0]), draws[1:]


def noise_matrix(seed: int, indices: np.ndarray, n_bits: int) -> np.ndarray:
    """Stacked conversion draws, one row per sample index.

    Column 0 is the sampling-noise draw; columns 1..n_bits are the
    comparator draws.  Row m is identical to ``conversion_noise((seed,
    indices[m]), n_bits)`` regardless of how indices are partitioned.
    """
    out = np.empty((len(indices), n_bits + 1))
    for row, idx in enumerate(indices):
        out[row] = stream((seed, int(idx))).standard_normal(n_bits + 1)
    return out
