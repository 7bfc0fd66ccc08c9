"""Single-photon propagation through hot cesium vapor near the D1 line."""

from .atomdata import AtomModel, HyperfineTransition, VaporCell, cesium_d1, line_strengths, number_density, wigner6j
from .faddeeva import faddeeva
from .propagation import (
    DelayResult, FilterSpec, FullyAbsorbedError, PhotonSource, TimeGrid, WavePacket, apply_irf,
    average_spectral_diffusion, center_of_mass_delay, make_photon, propagate, simulate,
    spectral_delay_scan, transfer_function, transmitted_fraction,
)
from .pumping import Populations, PumpModel, effective_cell, evolve_populations, pump_sweep, steady_state
from .susceptibility import (
    ComplexSpectrum, FrequencyGrid, OpticalResponse, doppler_fwhm, group_delay, optical_response,
    refractive_index, susceptibility, transmission_spectrum,
)

__version__ = "0.1.0"
