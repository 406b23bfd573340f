"""Physical constants used across the package.

Values are CODATA-2018 where applicable. Energy-like quantities are kept
in frequency units (GHz or MHz, i.e. divided by h); lengths in micrometers
unless a suffix says otherwise.
"""

import math

BOLTZMANN_J_PER_K = 1.380649e-23

ATOMIC_MASS_KG = 1.66053906660e-27
RB87_MASS_KG = 86.909180531 * ATOMIC_MASS_KG

BOHR_RADIUS_UM = 5.29177210903e-5

# R_infinity * c in GHz (no reduced-mass correction; the mass-corrected
# value for a specific isotope lives in the quantum-defect data file).
RYDBERG_INF_GHZ = 3.2898419602508e6

# e^2 a0^2 / (4 pi eps0 h) in GHz um^3, the natural unit for a product of
# two dipole matrix elements expressed in units of e*a0.
DIPOLE_PAIR_UNIT_GHZ_UM3 = 2.0 * RYDBERG_INF_GHZ * BOHR_RADIUS_UM**3

# Rb 5P1/2 natural linewidth, Gamma / 2pi in MHz. Held fixed in spectrum
# fits; three-level fits with a free Gamma_e are badly conditioned.
GAMMA_E_D1_MHZ = 5.75

# Room-temperature radiative lifetime of an n ~ 69 S Rydberg state, in ms.
# Reported alongside fitted blockade-recovery times for comparison.
RADIATIVE_LIFETIME_REFERENCE_MS = 0.14

TWO_PI = 2.0 * math.pi
