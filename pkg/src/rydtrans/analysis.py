"""Transistor figures of merit: extinction and gain from trace pairs,
blockade-recovery fitting, bimodal p0 extraction with cutoff scan,
threshold discrimination fidelity and storage-efficiency bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .constants import RADIATIVE_LIFETIME_REFERENCE_MS
from .fitkit import (FitConvergenceError, FitProblem, FitResult, nlls_fit,
                     poisson_pmf_vector)
from .mc import ClickHistogram, TimeTrace


@dataclass
class TransistorMetrics:
    """Extinction/gain numbers for one gated/reference trace pair.

    ratio is the raw transmitted-photon ratio gated/reference; suppression
    is 1 - ratio, the suppressed fraction. Both are reported because the
    two conventions coexist in the field; `gain` counts removed target
    photons per incoming gate photon.
    """

    n_trans: float
    n_trans_ref: float
    n_g: float
    ratio: float = field(init=False)
    suppression: float = field(init=False)
    gain: float = field(init=False)

    def __post_init__(self):
        if self.n_trans_ref <= 0:
            raise ValueError("reference trace integrates to zero photons")
        if self.n_g <= 0:
            raise ValueError("n_g must be positive")
        self.ratio = self.n_trans / self.n_trans_ref
        self.suppression = 1.0 - self.ratio
        self.gain = abs(self.n_trans_ref - self.n_trans) / self.n_g


def extinction_gain(trace_gated: TimeTrace, trace_ref: TimeTrace,
                    n_g: float) -> TransistorMetrics:
    """Integrate both traces and form the extinction ratio and the gain."""
    if trace_gated.t_us.shape != trace_ref.t_us.shape or \
            not np.allclose(trace_gated.t_us, trace_ref.t_us, rtol=0, atol=1e-9):
        raise ValueError("gated and reference traces use different binning")
    return TransistorMetrics(n_trans=trace_gated.total_photons(),
                             n_trans_ref=trace_ref.total_photons(),
                             n_g=n_g)


@dataclass
class DecayFit:
    """Blockade-recovery fit of ratio(t) = 1 - depth * exp(-t/tau)."""

    tau_ms: Optional[float]
    depth: Optional[float]
    tau_err_ms: Optional[float]
    degenerate: bool
    radiative_reference_ms: float
    fit: Optional[FitResult]


def decay_fit(trace_gated: TimeTrace, trace_ref: TimeTrace,
              fit_start_us: float = 0.0) -> DecayFit:
    """Fit the gated/reference ratio with an exponential recovery.

    Bins with t < fit_start_us are excluded (pulse onset is not modeled).
    A flat ratio is flagged degenerate instead of producing a meaningless
    time constant.
    """
    if trace_gated.t_us.shape != trace_ref.t_us.shape or \
            not np.allclose(trace_gated.t_us, trace_ref.t_us, rtol=0, atol=1e-9):
        raise ValueError("gated and reference traces use different binning")
    keep = trace_gated.t_us >= fit_start_us
    t = trace_gated.t_us[keep]
    ref = trace_ref.photons[keep]
    if np.any(ref <= 0):
        raise ValueError("reference trace must be strictly positive in fitted bins")
    ratio = trace_gated.photons[keep] / ref

    depth0 = 1.0 - float(np.min(ratio))
    if depth0 <= 1e-9:
        return DecayFit(tau_ms=None, depth=None, tau_err_ms=None,
                        degenerate=True,
                        radiative_reference_ms=RADIATIVE_LIFETIME_REFERENCE_MS,
                        fit=None)
    # initial tau: time for the deficit to fall to 1/e of its initial value
    deficit = np.clip(1.0 - ratio, 1e-12, None)
    target = deficit[0] / math.e
    below = np.nonzero(deficit <= target)[0]
    tau0 = float(t[below[0]] - t[0]) if below.size else float(t[-1] - t[0])
    tau0 = max(tau0, float(t[1] - t[0]) if t.size > 1 else 1.0)

    problem = FitProblem(model="exponential_recovery", x=t, y=ratio,
                         init=np.array([tau0, depth0]),
                         bounds=(np.array([1e-9, 0.0]),
                                 np.array([np.inf, 1.0])))
    result = nlls_fit(problem)
    if not result.converged:
        raise FitConvergenceError("blockade-recovery fit did not converge", result)
    tau_us, depth = result.params
    tau_err = result.param_errors()[0]
    degenerate = depth <= 2.0 * result.param_errors()[1] and depth < 0.05
    return DecayFit(tau_ms=float(tau_us) * 1e-3 if not degenerate else None,
                    depth=float(depth) if not degenerate else None,
                    tau_err_ms=float(tau_err) * 1e-3 if not degenerate else None,
                    degenerate=degenerate,
                    radiative_reference_ms=RADIATIVE_LIFETIME_REFERENCE_MS,
                    fit=result)


# ---------------------------------------------------------------------------
# bimodal histogram analysis

ReferenceLike = Union[ClickHistogram, float]


def _reference_pmf(ref: ReferenceLike, kmax: int) -> np.ndarray:
    if isinstance(ref, ClickHistogram):
        pmf = np.zeros(kmax + 1)
        upto = min(ref.counts.size, kmax + 1)
        pmf[:upto] = ref.pmf()[:upto]
        return pmf
    return poisson_pmf_vector(float(ref), kmax)


@dataclass
class BimodalFit:
    """Scale fit of p0 * reference to the gated histogram above a cutoff."""

    p0: float
    p0_err: float
    n_cut: float
    bins_used: np.ndarray
    subtracted: np.ndarray      # gated pmf - p0 * ref pmf, clipped at 0
    fit: FitResult


def bimodal_fit(hist_gated: ClickHistogram, ref: ReferenceLike,
                n_cut: float) -> BimodalFit:
    """Fit the zero-stored-excitation weight p0 on the high-click peak.

    Only bins with N_c > n_cut enter the fit; the blocked branch lives at
    low click numbers, so above the cutoff the gated histogram is the
    reference shape scaled by p0. Weights are 1/max(counts, 1), matching
    Poisson counting errors.
    """
    kmax = hist_gated.counts.size - 1
    ref_pmf = _reference_pmf(ref, kmax)
    ks = np.arange(kmax + 1)
    use = (ks > n_cut) & (ref_pmf > 0)
    populated = use & (hist_gated.counts > 0)
    if populated.sum() < 3:
        raise ValueError(
            f"only {int(populated.sum())} populated bins above n_cut = {n_cut}; "
            "need at least 3")
    y = hist_gated.counts[use]
    n = hist_gated.n_shots
    problem = FitProblem(model="scaled_pmf", x=ks[use], y=y,
                         init=np.array([max(y.sum() / (ref_pmf[use].sum() * n), 1e-6)]),
                         weights=1.0 / np.maximum(y, 1.0),
                         model_kwargs={"reference": ref_pmf * n})
    result = nlls_fit(problem)
    p0 = float(result.params[0])
    subtracted = np.clip(hist_gated.pmf() - p0 * ref_pmf, 0.0, None)
    return BimodalFit(p0=p0, p0_err=float(result.param_errors()[0]),
                      n_cut=float(n_cut), bins_used=ks[use],
                      subtracted=subtracted, fit=result)


@dataclass
class CutoffScan:
    cuts: np.ndarray
    p0_values: np.ndarray
    spread: float
    p0_min: float
    p0_max: float


def cutoff_scan(hist_gated: ClickHistogram, ref: ReferenceLike,
                cut_range: tuple[float, float]) -> CutoffScan:
    """p0 fits over half-integer cutoffs; spread = max - min."""
    lo, hi = cut_range
    if lo > hi:
        raise ValueError("cut_range must be increasing")
    cuts = np.arange(math.floor(lo) + 0.5, hi + 1e-9, 1.0)
    cuts = cuts[cuts >= lo]
    if cuts.size == 0:
        raise ValueError("cut_range contains no half-integer cutoffs")
    p0s = np.array([bimodal_fit(hist_gated, ref, c).p0 for c in cuts])
    return CutoffScan(cuts=cuts, p0_values=p0s,
                      spread=float(p0s.max() - p0s.min()),
                      p0_min=float(p0s.min()), p0_max=float(p0s.max()))


# ---------------------------------------------------------------------------
# threshold discrimination

@dataclass
class DiscriminationResult:
    """Threshold classification between the zero-stored and stored branches.

    c0 is the probability of correctly identifying a zero-stored shot
    (N_c > threshold), c1 that of a stored shot (N_c <= threshold);
    fidelity = min(c0, c1). p0 and p0_range are filled by the analysis
    pipeline when a bimodal fit accompanies the threshold scan.
    """

    threshold: float
    c0: float
    c1: float
    fidelity: float = field(init=False)
    p0: Optional[float] = None
    p0_range: Optional[tuple[float, float]] = None

    def __post_init__(self):
        for name, v in (("c0", self.c0), ("c1", self.c1)):
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        self.fidelity = min(self.c0, self.c1)


def threshold_curves(pmf_ref: np.ndarray, pmf_blocked: np.ndarray,
                     thresholds: Optional[Sequence[float]] = None):
    """(thresholds, c0, c1) over half-integer thresholds."""
    pmf_ref = np.asarray(pmf_ref, dtype=float)
    pmf_blocked = np.asarray(pmf_blocked, dtype=float)
    for name, pmf in (("reference", pmf_ref), ("blocked", pmf_blocked)):
        if abs(pmf.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} PMF is not normalized (sum {pmf.sum()})")
    kmax = max(pmf_ref.size, pmf_blocked.size) - 1
    ref = np.zeros(kmax + 1)
    ref[:pmf_ref.size] = pmf_ref
    blk = np.zeros(kmax + 1)
    blk[:pmf_blocked.size] = pmf_blocked
    if thresholds is None:
        thresholds = np.arange(kmax + 1) + 0.5
    thresholds = np.asarray(thresholds, dtype=float)
    ref_cdf = np.cumsum(ref)
    blk_cdf = np.cumsum(blk)
    idx = np.clip(np.floor(thresholds).astype(int), -1, kmax)
    c0 = np.where(idx >= 0, 1.0 - ref_cdf[np.maximum(idx, 0)], 1.0)
    c1 = np.where(idx >= 0, blk_cdf[np.maximum(idx, 0)], 0.0)
    return thresholds, c0, c1


def fidelity_threshold(pmf_ref: np.ndarray, pmf_blocked: np.ndarray,
                       thresholds: Optional[Sequence[float]] = None
                       ) -> DiscriminationResult:
    """Best half-integer threshold maximizing min(c0, c1).

    Ties resolve to the lowest threshold (the first maximum encountered
    scanning upward).
    """
    thr, c0, c1 = threshold_curves(pmf_ref, pmf_blocked, thresholds)
    fid = np.minimum(c0, c1)
    best = int(np.argmax(fid))  # argmax returns the first maximum
    return DiscriminationResult(threshold=float(thr[best]),
                                c0=float(c0[best]), c1=float(c1[best]))


# ---------------------------------------------------------------------------
# storage efficiency

@dataclass
class StorageEstimate:
    """Bounds on the storage efficiency from p0 and the gate photon number.

    eta_lower assumes at most one stored excitation (N_s >= 1 - p0);
    eta_poisson assumes Poissonian excitation numbers (p0 = exp(-N_s)).
    """

    p0: float
    n_g: float
    eta_lower: float = field(init=False)
    eta_poisson: float = field(init=False)
    poisson_defined: bool = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError("p0 must lie in [0, 1]")
        if self.n_g <= 0:
            raise ValueError("n_g must be positive")
        self.eta_lower = (1.0 - self.p0) / self.n_g
        self.poisson_defined = self.p0 > 0.0
        self.eta_poisson = (-math.log(self.p0) / self.n_g
                            if self.poisson_defined else math.inf)


def storage_bounds(p0: float, n_g: float) -> StorageEstimate:
    return StorageEstimate(p0=p0, n_g=n_g)


# ---------------------------------------------------------------------------
# resonance profile fit

@dataclass
class LorentzianFit:
    center: float
    fwhm: float
    amplitude: float
    offset: float
    center_err: float
    low_significance: bool
    fit: FitResult


def lorentzian_resonance_fit(points: Sequence[tuple[float, float]]) -> LorentzianFit:
    """Lorentzian fit of a resonance profile, e.g. extinction or gain vs n.

    Flags low_significance when the fitted amplitude is within two
    standard errors of zero (flat data).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 5:
        raise ValueError("need at least 5 (x, value) points")
    x, y = pts[:, 0], pts[:, 1]
    offset0 = float(np.min(y))
    amp0 = float(np.max(y) - np.min(y))
    center0 = float(x[int(np.argmax(y))])
    width0 = max((x.max() - x.min()) / 4.0, 1e-6)
    problem = FitProblem(model="lorentzian", x=x, y=y,
                         init=np.array([center0, width0, max(amp0, 1e-12), offset0]))
    result = nlls_fit(problem)
    if not result.converged:
        raise FitConvergenceError("resonance fit did not converge", result)
    center, fwhm, amplitude, offset = result.params
    errs = result.param_errors()
    return LorentzianFit(center=float(center), fwhm=float(abs(fwhm)),
                         amplitude=float(amplitude), offset=float(offset),
                         center_err=float(errs[0]),
                         low_significance=bool(amplitude <= 2.0 * errs[2]),
                         fit=result)
