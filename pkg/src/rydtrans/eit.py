"""Three-level ladder EIT transmission and Gaussian-cloud optical depth.

The absorption factor of the ladder system (signal on |g>-|e>, control on
|e>-|r>) is

    A(ds) = Re[ (Ge/2) / ( (Ge/2 - i ds) + (Oc^2/4)/(gr - i(ds + dc)) ) ]

and transmission is T = exp(-od * A). All rates and detunings are angular
frequencies divided by 2pi, expressed in MHz, so e.g. gamma_e = 5.75
stands for Gamma_e = 2pi x 5.75 MHz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .constants import BOLTZMANN_J_PER_K, GAMMA_E_D1_MHZ, RB87_MASS_KG, TWO_PI
from .fitkit import FitConvergenceError, FitProblem, FitResult, nlls_fit


@dataclass(frozen=True)
class EitParams:
    """Ladder-EIT parameters, rates/detunings in MHz (angular / 2pi)."""

    od: float
    omega_c: float
    gamma_r: float
    gamma_e: float = GAMMA_E_D1_MHZ
    delta_c: float = 0.0

    def __post_init__(self):
        if self.gamma_e <= 0:
            raise ValueError("gamma_e must be positive")
        if self.omega_c < 0 or self.gamma_r < 0 or self.od < 0:
            raise ValueError("omega_c, gamma_r and od must be nonnegative")


@dataclass(frozen=True)
class CloudParams:
    """Harmonically trapped thermal cloud and probe-beam geometry.

    trap_freqs_hz are ordinary frequencies (Hz); the first two axes are
    transverse to the probe, the third is the propagation axis.
    cross_section_prefactor rescales the two-level resonant cross section
    3 lambda^2 / 2pi for the actual transition strength (default 1/2, the
    sigma- line strength of the F=1,mF=-1 -> F'=2,mF'=-2 transition).
    """

    atom_number: float
    temperature_uk: float
    trap_freqs_hz: tuple[float, float, float]
    wavelength_nm: float = 795.0
    beam_waist_um: float = 8.0
    cross_section_prefactor: float = 0.5

    def __post_init__(self):
        values = (self.atom_number, self.temperature_uk, self.wavelength_nm,
                  self.beam_waist_um, self.cross_section_prefactor,
                  *self.trap_freqs_hz)
        if any(v <= 0 for v in values):
            raise ValueError("all cloud parameters must be strictly positive")

    def thermal_sigmas_um(self) -> tuple[float, float, float]:
        """1/e^(1/2) Gaussian radii sqrt(kB T / m) / omega_i, in um."""
        v = math.sqrt(BOLTZMANN_J_PER_K * self.temperature_uk * 1e-6 / RB87_MASS_KG)
        return tuple(v / (TWO_PI * f) * 1e6 for f in self.trap_freqs_hz)


@dataclass
class Spectrum:
    """Transmission vs signal detuning (MHz)."""

    detunings_mhz: np.ndarray
    transmissions: np.ndarray

    def __post_init__(self):
        self.detunings_mhz = np.asarray(self.detunings_mhz, dtype=float)
        self.transmissions = np.asarray(self.transmissions, dtype=float)
        if self.detunings_mhz.shape != self.transmissions.shape:
            raise ValueError("detuning and transmission lengths differ")
        if np.any(self.transmissions < -1e-12) or np.any(self.transmissions > 1 + 1e-12):
            raise ValueError("transmissions must lie in [0, 1]")


def eit_absorption(params: EitParams, delta_s):
    """Absorption factor A(delta_s) in [0, ~1]; accepts scalars or arrays."""
    ds = np.asarray(delta_s, dtype=float)
    scalar = ds.ndim == 0
    ds = np.atleast_1d(ds)
    den = (0.5 * params.gamma_e - 1j * ds).astype(complex)
    if params.omega_c > 0:
        two_photon = params.gamma_r - 1j * (ds + params.delta_c)
        pole = two_photon == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            den = den + np.where(pole, 0.0,
                                 (params.omega_c**2 / 4.0)
                                 / np.where(pole, 1.0, two_photon))
        out = np.real(0.5 * params.gamma_e / den)
        out[pole] = 0.0  # exact transparency on two-photon resonance
    else:
        out = np.real(0.5 * params.gamma_e / den)
    return float(out[0]) if scalar else out


@dataclass
class SpectrumResult:
    spectrum: Spectrum
    fwhm_mhz: Optional[float]
    t_peak: float
    t_at_zero: float
    grid_ok: bool


def transmission_spectrum(params: EitParams, detunings_mhz) -> SpectrumResult:
    """T(ds) = exp(-od A(ds)) plus the numerically extracted window FWHM.

    The FWHM is measured on the transparency peak at the half level
    between the peak transmission and the lowest transmission on the
    grid, with linear interpolation between grid points. grid_ok is False
    when the grid spacing exceeds FWHM/10 (or no window was resolvable);
    fwhm_mhz is None if the crossings do not lie inside the grid.
    """
    detunings = np.asarray(detunings_mhz, dtype=float)
    if detunings.size == 0:
        raise ValueError("empty detuning grid")
    trans = np.exp(-params.od * eit_absorption(params, detunings))
    spectrum = Spectrum(detunings_mhz=detunings, transmissions=trans)
    t_at_zero = float(np.exp(-params.od * eit_absorption(params, 0.0)))

    order = np.argsort(detunings)
    x, t = detunings[order], trans[order]
    ipk = int(np.argmax(t))
    t_peak = float(t[ipk])
    t_floor = float(np.min(t))
    fwhm = None
    grid_ok = False
    if t_peak - t_floor > 1e-12 and x.size >= 5:
        half = 0.5 * (t_peak + t_floor)
        left = right = None
        for i in range(ipk, 0, -1):
            if t[i - 1] <= half <= t[i]:
                left = x[i - 1] + (half - t[i - 1]) / (t[i] - t[i - 1]) * (x[i] - x[i - 1])
                break
        for i in range(ipk, x.size - 1):
            if t[i + 1] <= half <= t[i]:
                right = x[i] + (t[i] - half) / (t[i] - t[i + 1]) * (x[i + 1] - x[i])
                break
        if left is not None and right is not None:
            fwhm = float(right - left)
            spacing = float(np.max(np.diff(x)))
            grid_ok = spacing <= fwhm / 10.0
    return SpectrumResult(spectrum=spectrum, fwhm_mhz=fwhm,
                          t_peak=t_peak, t_at_zero=t_at_zero, grid_ok=grid_ok)


# ---------------------------------------------------------------------------
# optical depth of the cloud

def cloud_peak_od(cloud: CloudParams) -> float:
    """On-axis peak OD: sigma0 times the peak column density along z."""
    sx, sy, _ = cloud.thermal_sigmas_um()
    lam_um = cloud.wavelength_nm * 1e-3
    sigma0_um2 = cloud.cross_section_prefactor * 3.0 * lam_um**2 / TWO_PI
    column_peak = cloud.atom_number / (TWO_PI * sx * sy)
    return sigma0_um2 * column_peak


def cloud_od_profile(cloud: CloudParams) -> Callable:
    """OD(x, y) over the transverse plane, in um coordinates."""
    sx, sy, _ = cloud.thermal_sigmas_um()
    peak = cloud_peak_od(cloud)

    def profile(x, y):
        return peak * np.exp(-x**2 / (2 * sx**2) - y**2 / (2 * sy**2))

    return profile


class IntegrationError(RuntimeError):
    """Beam-average quadrature failed to converge."""


@dataclass
class BeamAverageResult:
    t_avg: float
    od_eff: float
    abs_error: float


def beam_averaged_transmission(cloud: CloudParams,
                               od_profile: Optional[Callable] = None,
                               rel_tol: float = 1e-6) -> BeamAverageResult:
    """Probe-intensity-weighted transmission <T> and OD_eff = -ln<T>.

    Integrates I(x,y) exp(-OD(x,y)) over +-4 beam waists with adaptive
    2D quadrature against the Gaussian intensity profile of waist
    beam_waist_um (1/e^2 intensity radius).
    """
    if od_profile is None:
        od_profile = cloud_od_profile(cloud)
    w = cloud.beam_waist_um
    lim = 4.0 * w

    def weighted(y, x):
        return math.exp(-2.0 * (x * x + y * y) / (w * w)) * math.exp(-od_profile(x, y))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            num, err_num = integrate.dblquad(weighted, -lim, lim,
                                             lambda _: -lim, lambda _: lim,
                                             epsabs=1e-14, epsrel=rel_tol)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(
                f"beam-average quadrature did not converge over [+-{lim} um]^2 "
                f"at rel_tol={rel_tol}: {exc}") from exc
    # Gaussian intensity normalization over the same square, analytic
    half = math.erf(math.sqrt(2.0) * lim / w)
    den = (math.pi * w * w / 2.0) * half * half
    t_avg = num / den
    if not 0.0 < t_avg <= 1.0 + 1e-12:
        raise IntegrationError(f"unphysical beam average <T> = {t_avg}")
    t_avg = min(t_avg, 1.0)
    return BeamAverageResult(t_avg=t_avg, od_eff=-math.log(t_avg),
                             abs_error=err_num / den)


# ---------------------------------------------------------------------------
# spectrum fitting

@dataclass
class SpectrumFit:
    params: EitParams
    covariance: np.ndarray
    fwhm_mhz: Optional[float]
    t_at_zero: float
    residual_norm: float
    fit: FitResult


def fit_spectrum(spectrum: Spectrum, init: EitParams,
                 tol: float = 1e-8, max_iter: int = 200) -> SpectrumFit:
    """Least-squares fit of (od, omega_c, gamma_r) to a spectrum.

    gamma_e and delta_c are held fixed at the values in init. Raises
    FitConvergenceError (with residual and iteration diagnostics) if the
    fit does not converge.
    """
    if spectrum.detunings_mhz.size < 5:
        raise ValueError("need at least 5 spectrum points")

    def model(x, p):
        # finite-difference probes may step just below the box bound
        p = np.maximum(p, 0.0)
        trial = replace(init, od=p[0], omega_c=p[1], gamma_r=p[2])
        return np.exp(-trial.od * eit_absorption(trial, x))

    problem = FitProblem(
        model=model, x=spectrum.detunings_mhz, y=spectrum.transmissions,
        init=np.array([init.od, init.omega_c, init.gamma_r]),
        bounds=(np.zeros(3), np.full(3, np.inf)))
    result = nlls_fit(problem, tol=tol, max_iter=max_iter)
    if not result.converged:
        raise FitConvergenceError("EIT spectrum fit did not converge", result)
    fitted = replace(init, od=result.params[0], omega_c=result.params[1],
                     gamma_r=result.params[2])
    # FWHM from the fitted model on a self-refining grid
    span = float(np.max(np.abs(spectrum.detunings_mhz))) or 10.0
    grid = np.linspace(-span, span, 4001)
    sr = transmission_spectrum(fitted, grid)
    if sr.fwhm_mhz is not None and not sr.grid_ok:
        grid = np.linspace(-span, span, 40001)
        sr = transmission_spectrum(fitted, grid)
    return SpectrumFit(params=fitted, covariance=result.covariance,
                       fwhm_mhz=sr.fwhm_mhz, t_at_zero=sr.t_at_zero,
                       residual_norm=result.residual_norm, fit=result)
