"""rydtrans: Rydberg-EIT photon-transistor simulation and analysis.

Subpackages cover the pipeline end to end: Rydberg pair-state structure
and blockade estimates (rydberg), ladder-EIT spectra and cloud optical
depth (eit), Monte Carlo gate/target cycles with numba or numpy sampling
kernels (mc, backends), least-squares fitting and Poisson utilities
(fitkit), figures of merit (analysis) and a CLI (cli).
"""

__version__ = "0.1.0"

from . import analysis, backends, eit, fitkit, mc, presets, rydberg  # noqa: F401
