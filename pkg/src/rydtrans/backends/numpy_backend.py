"""Pure-numpy implementation of the shot-sampling kernel.

Vectorizes over lanes (shot, bin) with masked compaction in the Knuth
Poisson loop; the drawn uniform sequence per lane is identical to the
numba backend's.
"""

from __future__ import annotations

import numpy as np

from . import (CH_BIN0, CH_RELEASE, CH_SCALE, CH_STORAGE, GAMMA, INV_2_53,
               MIX1, MIX2, POISSON_DRAW_CAP)

NAME = "numpy"

_GAMMA = np.uint64(GAMMA)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_TWO_PI = 2.0 * np.pi


def _fin(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    z = z ^ (z >> np.uint64(31))
    return z


def _derive(key, idx):
    return _fin(key + _GAMMA * (idx + np.uint64(1)))


def _uniform(key, j):
    return (_derive(key, np.uint64(j)) >> np.uint64(11)) * INV_2_53


def _poisson_lanes(keys, mu):
    """Knuth Poisson per lane; keys/mu are flat arrays of equal length."""
    out = np.zeros(mu.size, dtype=np.int64)
    idx = np.flatnonzero(mu > 0.0)
    if idx.size == 0:
        return out
    thresholds = np.exp(-mu[idx])
    if np.any(thresholds <= 0.0):  # exp underflow, Knuth needs L > 0
        raise RuntimeError(
            "Poisson mean too large for the sampler; reduce the bin width")
    p = np.ones(idx.size)
    active_keys = keys[idx]
    j = 0
    while idx.size:
        p = p * _uniform(active_keys, j)
        done = p <= thresholds
        out[idx[done]] = j
        keep = ~done
        idx = idx[keep]
        p = p[keep]
        thresholds = thresholds[keep]
        active_keys = active_keys[keep]
        j += 1
        if j >= POISSON_DRAW_CAP and idx.size:
            raise RuntimeError(
                f"Poisson draw exceeded {POISSON_DRAW_CAP} uniforms; "
                "per-bin means are too large, reduce the bin width")
    return out


def sample_shots(base_seed: int, shot_start: int, n_shots: int,
                 mu_bin: np.ndarray, bin_width_us: float,
                 storage_mean: float, tau_us: float, leak: float,
                 sigma_ln: float):
    """Simulate n_shots gate/target cycles starting at shot_start.

    Returns (clicks[n_shots, n_bins], n_stored[n_shots], release_us[n_shots]).
    """
    n_bins = mu_bin.size
    with np.errstate(over="ignore"):
        seed = np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF)
        shots = np.arange(shot_start, shot_start + n_shots, dtype=np.uint64)
        shot_keys = _derive(seed, shots)

        storage_keys = _derive(shot_keys, np.uint64(CH_STORAGE))
        n_stored = _poisson_lanes(storage_keys,
                                  np.full(n_shots, float(storage_mean)))

        release = np.zeros(n_shots)
        if n_stored.max(initial=0) > 0:
            release_keys = _derive(shot_keys, np.uint64(CH_RELEASE))
            for i in range(int(n_stored.max())):
                act = n_stored > i
                u = _uniform(release_keys[act], i)
                release[act] = np.maximum(release[act], -np.log1p(-u) * tau_us)

        if sigma_ln > 0.0:
            scale_keys = _derive(shot_keys, np.uint64(CH_SCALE))
            u0 = _uniform(scale_keys, 0)
            u1 = _uniform(scale_keys, 1)
            z = np.sqrt(-2.0 * np.log1p(-u0)) * np.cos(_TWO_PI * u1)
            scale = np.exp(sigma_ln * z - 0.5 * sigma_ln * sigma_ln)
        else:
            scale = np.ones(n_shots)

        bins = np.arange(n_bins, dtype=np.uint64)
        bin_keys = _derive(shot_keys[:, None], np.uint64(CH_BIN0) + bins[None, :])
        t_bin = np.arange(n_bins) * bin_width_us
        frac = np.clip((release[:, None] - t_bin[None, :]) / bin_width_us, 0.0, 1.0)
        factor = leak * frac + (1.0 - frac)
        mu_eff = mu_bin[None, :] * scale[:, None] * factor
        clicks = _poisson_lanes(bin_keys.ravel(), mu_eff.ravel())
    return clicks.reshape(n_shots, n_bins), n_stored, release
