"""Physical and numerical defaults, in one place.

Every entry can be overridden per scenario; the CLI writes the resolved table
into each run manifest. Keys carry their units.
"""

DEFAULTS = {
    # time / frequency grid
    "grid_points": 2**16,
    "grid_dt_s": 8e-12,
    "grid_t_start_s": -2048 * 8e-12,
    # photon
    "t1_s": 1.04e-9,
    "inhom_fwhm_hz": 3.57e9,
    "rise_time_s": 20e-12,
    # cell
    "length_mm": 40.0,
    "temperature_c": 83.5,
    # Fabry-Perot filter
    "filter_fwhm_hz": 192e6,
    "filter_fsr_hz": 37.8e9,
    "filter_mode": "transfer",
    "filter_tuning_hz_per_k": -2.64e9,
    "filter_tuning_correction": 1.0,
    # detection
    "irf_fwhm_s": 1060e-12,
    # spectral-diffusion quadrature
    "quadrature_nodes": 201,
    "quadrature_method": "trapezoid",
    # pumping
    "pump_mode": "temperature-mimic",
    "pump_ratios": [0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 30.0, 100.0],
    "pump_temperature_c": 110.0,
    # sweeps
    "temperatures_c": [35.0, 40.0, 45.0, 55.0, 65.0, 75.0, 83.5],
    "spectral_scan_hz": [-1.2e9, -0.9e9, -0.6e9, -0.3e9, 0.0, 0.3e9, 0.6e9, 0.9e9, 1.2e9],
    "spectral_temperature_c": 40.0,
    "photon_presets_hz": {"fl153": 153e6, "fl192": 192e6, "fl384": 384e6},
    # fitting
    "lorentz_fwhm_hz": 153e6,
    "weighting": "uniform",
    # output
    "waveform_stride": 4,
    "spectrum_stride": 1,
}

KELVIN_OFFSET = 273.15


def celsius_to_kelvin(t_c):
    return t_c + KELVIN_OFFSET
