"""Physical constants in the unit system used throughout the package.

Energies are in meV, lengths in nm, fields in tesla, potentials in volts.
"""
from scipy import constants as _c

HBAR2_2M0 = _c.hbar**2 / (2.0 * _c.m_e) / _c.e * 1e3 * 1e18  # meV nm^2
MU_B = _c.physical_constants["Bohr magneton in eV/T"][0] * 1e3  # meV / T
H_PLANCK = _c.h / _c.e * 1e3  # meV s
E_OVER_HBAR = _c.e / _c.hbar * 1e-18  # 1 / (T nm^2)
FLUX_QUANTUM = _c.h / _c.e * 1e18  # T nm^2, h/e
ELEMENTARY_CHARGE_MEV = 1e3  # meV per volt for a unit charge
G0 = 2.0  # bare spin g-factor in the Bloch Zeeman term
G0_FREE = 2.0023  # free-electron value, used by the spin-1/2 sanity model
