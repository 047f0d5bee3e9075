"""Counter-based random numbers.

Every uniform is a pure function of ``(seed, index, dimension)``: the stream
for one ``(seed, dimension)`` pair is a Philox generator keyed by that pair,
and draw ``index`` is the first word of counter block ``index``. Batches can
therefore be split across workers in any way without changing a single value.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


def _key(seed: int, dimension: int) -> np.ndarray:
    return np.array([seed & _MASK64, dimension & _MASK64], dtype=np.uint64)


def uniforms(seed: int, start: int, count: int, dimension: int = 0) -> np.ndarray:
    """Uniforms in the open interval (0, 1) for indices ``start .. start+count-1``."""
    if count <= 0:
        return np.empty(0)
    bitgen = np.random.Philox(key=_key(seed, dimension))
    if start:
        bitgen.advance(start)
    raw = bitgen.random_raw(4 * count)[::4]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def uniform_block(seed: int, start: int, count: int, dims: int, offset: int = 0) -> np.ndarray:
    """Array of shape ``(count, dims)``; column ``j`` uses dimension ``offset + j``."""
    return np.stack([uniforms(seed, start, count, offset + j) for j in range(dims)], axis=-1)


def normals(seed: int, start: int, count: int, dimension: int = 0) -> np.ndarray:
    """Standard normal draws by inverse-CDF of :func:`uniforms`."""
    return ndtri(uniforms(seed, start, count, dimension))


def derive_seed(seed: int, tag: int) -> int:
    """Independent child seed, e.g. for pilot batches or replicate ``tag``."""
    return int(np.random.SeedSequence([seed & _MASK64, tag]).generate_state(1, np.uint64)[0])
