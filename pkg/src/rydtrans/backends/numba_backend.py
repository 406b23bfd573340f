"""Numba @njit implementation of the shot-sampling kernel.

Shots are independent, so the chunk loop runs under prange; every shot
writes only its own output row. Draw-cap violations are flagged through
an error cell instead of raising inside the parallel region.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

from . import (CH_BIN0, CH_RELEASE, CH_SCALE, CH_STORAGE, GAMMA, INV_2_53,
               MIX1, MIX2, POISSON_DRAW_CAP)

NAME = "numba"

_GAMMA = np.uint64(GAMMA)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)
_ONE = np.uint64(1)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_PI = 2.0 * np.pi


@njit(cache=True)
def _fin(z):
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    z = z ^ (z >> _S31)
    return z


@njit(cache=True)
def _derive(key, idx):
    return _fin(key + _GAMMA * (idx + _ONE))


@njit(cache=True)
def _uniform(key, j):
    return (_derive(key, np.uint64(j)) >> _S11) * INV_2_53


@njit(cache=True)
def _poisson(key, mu):
    """Knuth Poisson; returns -1 on a mean the method cannot sample."""
    if mu <= 0.0:
        return 0
    threshold = math.exp(-mu)
    if threshold <= 0.0:  # exp underflow, Knuth needs L > 0
        return -1
    p = 1.0
    j = 0
    while True:
        p = p * _uniform(key, j)
        if p <= threshold:
            return j
        j += 1
        if j >= POISSON_DRAW_CAP:
            return -1


@njit(cache=True, parallel=True)
def _sample_chunk(seed, shot_start, n_shots, mu_bin, bin_width_us,
                  storage_mean, tau_us, leak, sigma_ln,
                  clicks, n_stored, release, err):
    n_bins = mu_bin.size
    for i in prange(n_shots):
        shot_key = _derive(seed, np.uint64(shot_start + i))

        k = _poisson(_derive(shot_key, np.uint64(CH_STORAGE)), storage_mean)
        if k < 0:
            err[0] = 1
            k = 0
        n_stored[i] = k

        d = 0.0
        if k > 0:
            release_key = _derive(shot_key, np.uint64(CH_RELEASE))
            for m in range(k):
                u = _uniform(release_key, m)
                e = -math.log1p(-u) * tau_us
                if e > d:
                    d = e
        release[i] = d

        if sigma_ln > 0.0:
            scale_key = _derive(shot_key, np.uint64(CH_SCALE))
            u0 = _uniform(scale_key, 0)
            u1 = _uniform(scale_key, 1)
            z = math.sqrt(-2.0 * math.log1p(-u0)) * math.cos(_TWO_PI * u1)
            s = math.exp(sigma_ln * z - 0.5 * sigma_ln * sigma_ln)
        else:
            s = 1.0

        for b in range(n_bins):
            t_bin = b * bin_width_us
            frac = (d - t_bin) / bin_width_us
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            factor = leak * frac + (1.0 - frac)
            mu_eff = mu_bin[b] * s * factor
            c = _poisson(_derive(shot_key, np.uint64(CH_BIN0 + b)), mu_eff)
            if c < 0:
                err[0] = 1
                c = 0
            clicks[i, b] = c


def sample_shots(base_seed: int, shot_start: int, n_shots: int,
                 mu_bin: np.ndarray, bin_width_us: float,
                 storage_mean: float, tau_us: float, leak: float,
                 sigma_ln: float):
    """Same contract as numpy_backend.sample_shots."""
    n_bins = mu_bin.size
    clicks = np.zeros((n_shots, n_bins), dtype=np.int64)
    n_stored = np.zeros(n_shots, dtype=np.int64)
    release = np.zeros(n_shots)
    err = np.zeros(1, dtype=np.int64)
    seed = np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF)
    _sample_chunk(seed, shot_start, n_shots, np.ascontiguousarray(mu_bin),
                  float(bin_width_us), float(storage_mean), float(tau_us),
                  float(leak), float(sigma_ln),
                  clicks, n_stored, release, err)
    if err[0]:
        raise RuntimeError(
            f"Poisson draw exceeded {POISSON_DRAW_CAP} uniforms; "
            "per-bin means are too large, reduce the bin width")
    return clicks, n_stored, release


def set_threads(n: int) -> int:
    """Clamp and apply the numba thread count; returns the applied value."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
