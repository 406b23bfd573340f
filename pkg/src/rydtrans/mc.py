"""Monte Carlo gate/target cycles: stochastic storage, blockade with
exponential release, per-bin photon detection.

Each cycle draws the number of stored gate excitations from
Poisson(storage_mean). While any excitation survives, target transmission
is t0_transmission * blockade_leak; after the last one decays (release
time = max of per-excitation exponentials with mean tau_blockade) it
returns to t0_transmission. Detected clicks per time bin are Poisson with
mean photon_rate_in * eta_det * bin_width * T(t), optionally scaled per
shot by a unit-mean lognormal to model slow technical noise.

Shot i of a run derives its RNG streams from (base_seed, i) only, so runs
are reproducible bit for bit regardless of chunking, thread count or
backend choice (see backends/).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from scipy.special import gammaln

from . import backends

_CHUNK_SHOTS = 16384


@dataclass(frozen=True)
class ExperimentConfig:
    """One gate/target cycle description. Times in us unless suffixed _ms."""

    n_gate_photons: float = 1.0     # incoming gate photons (analysis input)
    storage_mean: float = 0.5108256237659907
    eta_det: float = 0.24
    t0_transmission: float = 0.49
    photon_rate_in: float = 2.4433106575963717  # incident photons / us
    pulse_duration: float = 30.0
    bin_width: float = 2.0
    tau_blockade_ms: float = 0.10
    blockade_leak: float = 0.02
    dark_time: float = 0.15
    cycle_time_ms: float = 0.7
    overdispersion: float = 0.0     # shot-to-shot sigma/mu of the mean

    def __post_init__(self):
        positive = {
            "photon_rate_in": self.photon_rate_in,
            "pulse_duration": self.pulse_duration,
            "bin_width": self.bin_width,
            "tau_blockade_ms": self.tau_blockade_ms,
            "dark_time": self.dark_time,
            "cycle_time_ms": self.cycle_time_ms,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        for name, value in (("eta_det", self.eta_det),
                            ("t0_transmission", self.t0_transmission),
                            ("blockade_leak", self.blockade_leak)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.storage_mean < 0 or self.n_gate_photons < 0:
            raise ValueError("storage_mean and n_gate_photons must be nonnegative")
        if self.overdispersion < 0:
            raise ValueError("overdispersion must be nonnegative")
        n_bins = self.pulse_duration / self.bin_width
        if abs(n_bins - round(n_bins)) > 1e-9:
            raise ValueError("pulse_duration must be an integer number of bins")
        if self.mu_bin_detected() > 100.0:
            raise ValueError("detected mean per bin above 100; reduce bin_width")

    @property
    def n_bins(self) -> int:
        return int(round(self.pulse_duration / self.bin_width))

    def mu_bin_detected(self) -> float:
        """Unblocked detected-click mean per bin."""
        return (self.photon_rate_in * self.eta_det * self.t0_transmission
                * self.bin_width)

    def mu_ref_detected(self) -> float:
        """Unblocked detected-click mean over the whole pulse."""
        return self.mu_bin_detected() * self.n_bins

    def p_zero_stored(self) -> float:
        return math.exp(-self.storage_mean)

    def sigma_lognormal(self) -> float:
        return math.sqrt(math.log1p(self.overdispersion**2))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CycleOutcome:
    """Result of a single simulated cycle."""

    n_stored: int
    decay_time_us: float        # inf when nothing was stored
    clicks_per_bin: np.ndarray
    total_clicks: int = field(init=False)

    def __post_init__(self):
        self.clicks_per_bin = np.asarray(self.clicks_per_bin, dtype=np.int64)
        if self.n_stored < 0:
            raise ValueError("n_stored must be nonnegative")
        self.total_clicks = int(self.clicks_per_bin.sum())


@dataclass
class ClickHistogram:
    """Detector-click counting statistics.

    counts[k] is the number (or expected number, for synthetic data) of
    shots with k clicks; mean and variance (ddof=1) are derived from the
    counts on construction.
    """

    counts: np.ndarray
    n_shots: float = field(init=False)
    mean: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.ndim != 1 or self.counts.size == 0:
            raise ValueError("counts must be a nonempty 1-d array")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        self.n_shots = float(self.counts.sum())
        if self.n_shots <= 0:
            raise ValueError("histogram holds no events")
        k = np.arange(self.counts.size, dtype=float)
        self.mean = float((k * self.counts).sum() / self.n_shots)
        second = float((k * k * self.counts).sum())
        denom = max(self.n_shots - 1.0, 1.0)
        self.variance = (second - self.n_shots * self.mean**2) / denom

    @classmethod
    def from_totals(cls, totals: np.ndarray) -> "ClickHistogram":
        return cls(np.bincount(np.asarray(totals, dtype=np.int64)))

    def pmf(self) -> np.ndarray:
        return self.counts / self.n_shots

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("n_clicks,events\n")
            for k, c in enumerate(self.counts):
                fh.write(f"{k},{format(c, '.12g')}\n")

    @classmethod
    def from_csv(cls, path) -> "ClickHistogram":
        ks, cs = [], []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "n_clicks,events":
                raise ValueError(f"{path}: unexpected histogram header {header!r}")
            for line in fh:
                if not line.strip():
                    continue
                k_s, c_s = line.strip().split(",")
                ks.append(int(k_s))
                cs.append(float(c_s))
        counts = np.zeros(max(ks) + 1)
        counts[np.asarray(ks, dtype=int)] = cs
        return cls(counts)


@dataclass
class TimeTrace:
    """Per-bin mean transmitted photons (detected / eta_det) with stderr."""

    t_us: np.ndarray
    photons: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=float)
        self.photons = np.asarray(self.photons, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if not (self.t_us.shape == self.photons.shape == self.stderr.shape):
            raise ValueError("trace columns must have equal length")

    def total_photons(self) -> float:
        return float(self.photons.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t_us,transmitted_photons_per_bin,stderr\n")
            for t, p, s in zip(self.t_us, self.photons, self.stderr):
                fh.write(f"{format(t, '.12g')},{format(p, '.12g')},"
                         f"{format(s, '.12g')}\n")

    @classmethod
    def from_csv(cls, path) -> "TimeTrace":
        rows = []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "t_us,transmitted_photons_per_bin,stderr":
                raise ValueError(f"{path}: unexpected trace header {header!r}")
            for line in fh:
                if line.strip():
                    rows.append([float(v) for v in line.strip().split(",")])
        arr = np.asarray(rows)
        if arr.size == 0:
            raise ValueError(f"{path}: empty trace")
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])


@dataclass
class RunResult:
    histogram: ClickHistogram
    trace: TimeTrace
    stored_histogram: np.ndarray
    n_shots: int
    gated: bool
    base_seed: int
    backend: str
    config: ExperimentConfig


def simulate_cycle(config: ExperimentConfig, rng_seed: int,
                   backend: Optional[str] = None,
                   gated: bool = True) -> CycleOutcome:
    """Single cycle; equals shot 0 of simulate_run(base_seed=rng_seed)."""
    kernels = backends.get_kernels(backend)
    storage = config.storage_mean if gated else 0.0
    clicks, n_stored, release = kernels.sample_shots(
        rng_seed, 0, 1, np.full(config.n_bins, config.mu_bin_detected()),
        config.bin_width, storage, config.tau_blockade_ms * 1e3,
        config.blockade_leak, config.sigma_lognormal())
    stored = int(n_stored[0])
    decay = float(release[0]) if stored > 0 else math.inf
    return CycleOutcome(n_stored=stored, decay_time_us=decay,
                        clicks_per_bin=clicks[0])


def simulate_run(config: ExperimentConfig, n_shots: int, base_seed: int,
                 gated: bool = True, backend: Optional[str] = None,
                 chunk_size: int = _CHUNK_SHOTS) -> RunResult:
    """Aggregate n_shots cycles into a click histogram and a time trace.

    Deterministic for fixed (config, base_seed, n_shots, gated); chunk
    size and backend thread count do not affect the result.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be at least 1")
    kernels = backends.get_kernels(backend)
    n_bins = config.n_bins
    mu_bin = np.full(n_bins, config.mu_bin_detected())
    storage = config.storage_mean if gated else 0.0
    tau_us = config.tau_blockade_ms * 1e3
    sigma = config.sigma_lognormal()

    bin_sum = np.zeros(n_bins, dtype=np.int64)
    bin_sumsq = np.zeros(n_bins, dtype=np.int64)
    totals_hist = np.zeros(1, dtype=np.int64)
    stored_hist = np.zeros(1, dtype=np.int64)

    done = 0
    while done < n_shots:
        m = min(chunk_size, n_shots - done)
        clicks, n_stored, _ = kernels.sample_shots(
            base_seed, done, m, mu_bin, config.bin_width, storage,
            tau_us, config.blockade_leak, sigma)
        bin_sum += clicks.sum(axis=0)
        bin_sumsq += (clicks * clicks).sum(axis=0)
        totals = clicks.sum(axis=1)
        totals_hist = _accumulate_bincount(totals_hist, totals)
        stored_hist = _accumulate_bincount(stored_hist, n_stored)
        done += m

    mean_clicks = bin_sum / n_shots
    if n_shots > 1:
        var = (bin_sumsq - bin_sum.astype(float)**2 / n_shots) / (n_shots - 1)
        stderr = np.sqrt(np.clip(var, 0.0, None) / n_shots)
    else:
        stderr = np.zeros(n_bins)
    t_centers = (np.arange(n_bins) + 0.5) * config.bin_width
    trace = TimeTrace(t_us=t_centers,
                      photons=mean_clicks / config.eta_det,
                      stderr=stderr / config.eta_det)
    return RunResult(histogram=ClickHistogram(totals_hist),
                     trace=trace, stored_histogram=stored_hist,
                     n_shots=n_shots, gated=gated, base_seed=base_seed,
                     backend=getattr(kernels, "NAME", "unknown"),
                     config=config)


def _accumulate_bincount(acc: np.ndarray, values: np.ndarray) -> np.ndarray:
    add = np.bincount(values, minlength=acc.size).astype(np.int64)
    if add.size > acc.size:
        add[:acc.size] += acc
        return add
    return acc + add


# ---------------------------------------------------------------------------
# analytic click distributions

_GL_NODES = 256
_GH_NODES = 41


def _kmax_for(mu: float) -> int:
    return int(math.ceil(mu + 12.0 * math.sqrt(mu + 1.0) + 25.0))


def _poisson_matrix(mus: np.ndarray, kmax: int) -> np.ndarray:
    """Rows of Poisson PMFs for a vector of means."""
    ks = np.arange(kmax + 1, dtype=float)
    mus = np.asarray(mus, dtype=float)
    out = np.zeros((mus.size, kmax + 1))
    pos = mus > 0
    if np.any(pos):
        lm = np.log(mus[pos])[:, None]
        out[pos] = np.exp(ks[None, :] * lm - mus[pos][:, None]
                          - gammaln(ks + 1.0)[None, :])
    if np.any(~pos):
        out[~pos, 0] = 1.0
    return out


def blocked_click_pmf(config: ExperimentConfig,
                      kmax: Optional[int] = None) -> np.ndarray:
    """Click PMF conditional on at least one stored excitation.

    Marginalizes the release time d (max of k exponentials, k from the
    zero-truncated Poisson) over the pulse: Gauss-Legendre on [0, D] for
    the release density plus the point mass of shots blocked past D.
    """
    lam = config.storage_mean
    if lam <= 0:
        raise ValueError("blocked branch undefined for storage_mean = 0")
    d_us = config.pulse_duration
    tau = config.tau_blockade_ms * 1e3
    mu_ref = config.mu_ref_detected()
    leak = config.blockade_leak
    if kmax is None:
        kmax = _kmax_for(mu_ref * _scale_upper(config))

    xs, ws = np.polynomial.legendre.leggauss(_GL_NODES)
    d = 0.5 * d_us * (xs + 1.0)
    wd = 0.5 * d_us * ws
    q = np.exp(-d / tau)
    norm = -math.expm1(-lam)  # P(k >= 1)
    density = (lam / tau) * q * np.exp(-lam * q) / norm
    mus = mu_ref * (leak * d / d_us + (d_us - d) / d_us)
    weights = wd * density
    # shots whose last excitation outlives the pulse
    p_outlive = (math.exp(-lam * math.exp(-d_us / tau)) - math.exp(-lam)) / norm
    p_outlive = 1.0 - p_outlive
    mus = np.append(mus, mu_ref * leak)
    weights = np.append(weights, p_outlive)

    pmf = _lognormal_mix(mus, weights, config.sigma_lognormal(), kmax)
    _check_normalized(pmf, "blocked")
    return pmf


def analytic_click_pmf(config: ExperimentConfig, gated: bool,
                       kmax: Optional[int] = None) -> np.ndarray:
    """Click PMF of a reference (gated=False) or gated run."""
    mu_ref = config.mu_ref_detected()
    if kmax is None:
        kmax = _kmax_for(mu_ref * _scale_upper(config))
    ref = _lognormal_mix(np.array([mu_ref]), np.array([1.0]),
                         config.sigma_lognormal(), kmax)
    if not gated:
        _check_normalized(ref, "reference")
        return ref
    p0 = config.p_zero_stored()
    if p0 >= 1.0:
        _check_normalized(ref, "gated")
        return ref
    pmf = p0 * ref + (1.0 - p0) * blocked_click_pmf(config, kmax)
    _check_normalized(pmf, "gated")
    return pmf


def _scale_upper(config: ExperimentConfig) -> float:
    sigma = config.sigma_lognormal()
    return math.exp(6.0 * sigma) if sigma > 0 else 1.0


def _lognormal_mix(mus: np.ndarray, weights: np.ndarray, sigma: float,
                   kmax: int) -> np.ndarray:
    """Mixture PMF, optionally smeared by a unit-mean lognormal scale."""
    if sigma <= 0:
        return weights @ _poisson_matrix(mus, kmax)
    xs, ws = np.polynomial.hermite.hermgauss(_GH_NODES)
    scales = np.exp(sigma * math.sqrt(2.0) * xs - 0.5 * sigma * sigma)
    gh_w = ws / math.sqrt(math.pi)
    pmf = np.zeros(kmax + 1)
    for s, w in zip(scales, gh_w):
        pmf += w * (weights @ _poisson_matrix(mus * s, kmax))
    return pmf


def _check_normalized(pmf: np.ndarray, label: str) -> None:
    total = float(pmf.sum())
    if not math.isfinite(total) or abs(total - 1.0) > 1e-9:
        raise ValueError(f"{label} PMF not normalizable (sum = {total}); "
                         "extend kmax or check parameters")
