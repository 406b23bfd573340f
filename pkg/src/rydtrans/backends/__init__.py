"""Sampling kernels for the Monte Carlo shot loop, in two interchangeable
implementations: a numba @njit kernel and a vectorized pure-numpy fallback.

Selection order: an explicit name passed to :func:`get_kernels`, then the
RYDTRANS_BACKEND environment variable ("numba" or "numpy"), then numba if
it imports, else numpy.

Both backends realize the same counter-based RNG, so results do not depend
on chunking or thread count:

    fin(z)          = splitmix64 finalizer
    derive(key, i)  = fin(key + GAMMA * (i + 1))        (mod 2^64)
    shot_key        = derive(base_seed, shot_index)
    channel_key     = derive(shot_key, channel)
    uniform(ck, j)  = (derive(ck, j) >> 11) * 2^-53     in [0, 1)

Channels: 0 draws the stored-excitation count (Knuth Poisson), 1 the
release-time exponentials (max over stored excitations), 2 the
overdispersion normal (Box-Muller), 3 + b the clicks of time bin b.
A shot is therefore a pure function of (base_seed, shot_index).
"""

from __future__ import annotations

import os

ENV_VAR = "RYDTRANS_BACKEND"
_BACKENDS = ("numba", "numpy")

# shared RNG constants (splitmix64)
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0
POISSON_DRAW_CAP = 1024

CH_STORAGE = 0
CH_RELEASE = 1
CH_SCALE = 2
CH_BIN0 = 3


def resolve_backend(name: str | None = None) -> str:
    """Pick the backend name without importing it yet."""
    if name is None:
        name = os.environ.get(ENV_VAR, "").strip().lower() or None
    if name is None:
        try:
            import numba  # noqa: F401
            return "numba"
        except ImportError:
            return "numpy"
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {_BACKENDS}")
    return name


def get_kernels(name: str | None = None):
    """Return the kernel module exposing sample_shots(...)."""
    name = resolve_backend(name)
    if name == "numba":
        from . import numba_backend
        return numba_backend
    from . import numpy_backend
    return numpy_backend
