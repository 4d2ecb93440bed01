"""Counter-based random streams.

Every draw is keyed by integers (seed, counter, side, ...) through
``numpy.random.SeedSequence`` feeding a Philox bit generator, so a stream can be
rebuilt from its key alone. Uniforms are formed directly from the raw 64-bit
outputs and Gaussians by Box-Muller, which avoids depending on numpy's
version-specific distribution samplers.
"""

import numpy as np

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0 ** -53

SIDE_X = 0
SIDE_Y = 1


def bit_generator(*key):
    """Philox generator keyed by a tuple of non-negative integers."""
    return np.random.Philox(np.random.SeedSequence([int(k) for k in key]))


def uniforms(bitgen, n):
    """``n`` doubles in the open interval (0, 1)."""
    raw = bitgen.random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def normals(bitgen, n):
    """``n`` standard normal draws by the Box-Muller transform."""
    pairs = (n + 1) // 2
    u = uniforms(bitgen, 2 * pairs)
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = _TWO_PI * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def derive_seed(seed, index):
    """Child seed for run ``index`` of a sweep rooted at ``seed``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
