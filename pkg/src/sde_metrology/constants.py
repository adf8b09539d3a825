"""Physical constants (CODATA 2018, exact in the SI) and setup constants."""

H_PLANCK = 6.62607015e-34   # J s
C_LIGHT = 299792458.0       # m / s
SERIES_RESISTOR_OHM = 100e3  # quasi-current bias: I = V / R


def photon_energy_j(wavelength_nm: float) -> float:
    return H_PLANCK * C_LIGHT / (wavelength_nm * 1e-9)
