"""Complex susceptibility, refractive index and derived observables of the vapor.

All spectra live in a frame rotating at ``grid.center``; sample values are
offsets from it. The absolute optical frequency only enters through the
wavenumber k = 2 pi (center + offset) / c.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c, e, epsilon_0, hbar, k as k_B, physical_constants
from scipy.optimize import brentq

from .atomdata import VaporCell
from .faddeeva import faddeeva

BOHR = physical_constants["Bohr radius"][0]

# Effective dipole moment in units of e*a0. Fixed once by ``calibrate_dipole``
# so that a 40 mm cell at 356.65 K has a natural-log peak OD of 69 on
# F=4 -> F'=3 (see tests/test_susceptibility.py, which re-derives it).
D_EFF_EA0 = 1.2143470869
CALIBRATION = {"temperature": 356.65, "length": 0.04, "od": 69.0, "transition": (4, 3)}


class ResolutionError(ValueError):
    """Frequency grid too coarse for the natural linewidth."""


@dataclass(frozen=True)
class FrequencyGrid:
    center: float
    span: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise ValueError("n_points must be a power of two >= 2")
        if not self.span > 0:
            raise ValueError("span must be positive")

    @property
    def spacing(self):
        return self.span / self.n_points

    @property
    def offsets(self):
        """Ascending offsets, FFT layout after fftshift (zero at index n/2)."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.spacing

    @property
    def frequencies(self):
        return self.center + self.offsets

    def index_of(self, offset):
        return int(np.argmin(np.abs(self.offsets - offset)))


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    grid: FrequencyGrid
    amplitude: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=complex)
        if amp.shape != (self.grid.n_points,):
            raise ValueError("amplitude length does not match grid")
        object.__setattr__(self, "amplitude", amp)


@dataclass(frozen=True, eq=False)
class OpticalResponse:
    chi: ComplexSpectrum
    n_complex: np.ndarray  # n_c - 1, kept small to avoid cancellation
    n_real: np.ndarray
    alpha: np.ndarray
    od: np.ndarray
    group_delay: np.ndarray
    length: float
    one_sided: np.ndarray = field(default=None)  # samples whose derivative is one-sided

    @property
    def grid(self):
        return self.chi.grid


def default_grid(model, n_points=2**16, dt=8e-12):
    """Frequency grid dual to the default time grid (span 1/dt)."""
    return FrequencyGrid(model.nu_line, 1.0 / dt, n_points)


def doppler_fwhm(model, temperature):
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    return model.nu_line * np.sqrt(8 * k_B * temperature * np.log(2) / (model.mass * c**2))


def _line_sum(model, temperature, offsets):
    """sum_j g_F S_j * i sqrt(pi)/(k u) * w(xi_j), xi = (2 pi dnu + i pi gamma)/(k u).

    This is the Doppler-averaged complex Lorentzian i/(Gamma/2 - i(Delta - k v))
    in angular units; Im >= 0 everywhere.
    """
    k = 2 * np.pi * model.nu_line / c
    ku = k * np.sqrt(2 * k_B * temperature / model.mass)
    out = np.zeros(np.shape(offsets), dtype=complex)
    for tr in model.transitions:
        xi = (2 * np.pi * (offsets - tr.detuning) + 1j * np.pi * model.gamma_nat) / ku
        out += model.ground_fraction(tr.f_ground) * tr.strength * faddeeva(xi)
    return out * (1j * np.sqrt(np.pi) / ku)


def _chi_values(model, cell, offsets, d_eff_ea0):
    n = cell.density * cell.population_factor
    if n == 0:
        return np.zeros(np.shape(offsets), dtype=complex)
    scale = (d_eff_ea0 * e * BOHR) ** 2 / (epsilon_0 * hbar)
    return scale * n * _line_sum(model, cell.temperature, offsets)


def susceptibility(model, cell, grid, d_eff_ea0=D_EFF_EA0):
    if grid.spacing > model.gamma_nat:
        raise ResolutionError(
            f"grid spacing {grid.spacing:.3g} Hz exceeds natural linewidth {model.gamma_nat:.3g} Hz"
        )
    return ComplexSpectrum(grid, _chi_values(model, cell, grid.offsets, d_eff_ea0))


def _n_minus_one(chi):
    # sqrt(1+x) - 1 rewritten to stay accurate when |x| << 1
    return chi / (1.0 + np.sqrt(1.0 + chi))


def refractive_index(chi):
    """Complex index n_c = sqrt(1 + chi) on the principal branch."""
    return ComplexSpectrum(chi.grid, 1.0 + _n_minus_one(chi.amplitude))


def _wavenumber(grid):
    return 2 * np.pi * grid.frequencies / c


def _group_delay(grid, n_minus_one_real, length):
    nu = grid.frequencies
    dn = np.gradient(n_minus_one_real, grid.spacing, edge_order=2)
    return length * (n_minus_one_real + nu * dn) / c


def optical_response(model, cell, grid, d_eff_ea0=D_EFF_EA0):
    chi = susceptibility(model, cell, grid, d_eff_ea0)
    nm1 = _n_minus_one(chi.amplitude)
    alpha = 2 * _wavenumber(grid) * nm1.imag
    one_sided = np.zeros(grid.n_points, dtype=bool)
    one_sided[[0, -1]] = True
    return OpticalResponse(
        chi=chi,
        n_complex=nm1,
        n_real=1.0 + nm1.real,
        alpha=alpha,
        od=alpha * cell.length,
        group_delay=_group_delay(grid, nm1.real, cell.length),
        length=cell.length,
        one_sided=one_sided,
    )


def transmission_spectrum(response):
    return np.exp(-response.od)


def decadic_od(response):
    return response.od / np.log(10.0)


def group_delay(response, cell):
    """Delay relative to vacuum, L (n + nu dn/dnu - 1)/c.

    Returns (delay, one_sided) where ``one_sided`` marks the two edge samples
    that use one-sided differences.
    """
    tau = _group_delay(response.grid, response.n_real - 1.0, cell.length)
    return tau, response.one_sided.copy()


# ---------------------------------------------------------------------------
# scalar probes

def od_at(model, cell, offsets, d_eff_ea0=D_EFF_EA0):
    """Natural OD at arbitrary offsets, without building a grid."""
    offsets = np.asarray(offsets, dtype=float)
    nm1 = _n_minus_one(_chi_values(model, cell, offsets, d_eff_ea0))
    return 2 * (2 * np.pi * (model.nu_line + offsets) / c) * nm1.imag * cell.length


def peak_od(model, cell, transition=(4, 3), d_eff_ea0=D_EFF_EA0):
    """Maximum OD in the neighbourhood of one hyperfine line."""
    center = model.transition(*transition).detuning
    width = max(doppler_fwhm(model, cell.temperature), model.gamma_nat)
    x = center + np.linspace(-width, width, 4001)
    od = od_at(model, cell, x, d_eff_ea0)
    i = int(np.argmax(od))
    # refine on a finer local grid
    x = np.linspace(x[max(i - 1, 0)], x[min(i + 1, len(x) - 1)], 401)
    return float(od_at(model, cell, x, d_eff_ea0).max())


def calibrate_dipole(model, target_od=CALIBRATION["od"], temperature=CALIBRATION["temperature"],
                     length=CALIBRATION["length"], transition=CALIBRATION["transition"]):
    """Effective dipole (units of e*a0) giving ``target_od`` at the peak of ``transition``."""
    cell = VaporCell(length=length, temperature=temperature)
    return brentq(lambda d: peak_od(model, cell, transition, d) - target_od, 0.01, 100.0, xtol=1e-12)


def transmission_window(response, center=0.0):
    """Transmission window around ``center``: (peak transmission, FWHM in Hz).

    The peak is the local maximum of T nearest to ``center``; the width is
    the full width at half of that maximum, linearly interpolated.
    """
    tr = transmission_spectrum(response)
    x = response.grid.offsets
    i = response.grid.index_of(center)
    while 0 < i < len(tr) - 1 and (tr[i + 1] > tr[i] or tr[i - 1] > tr[i]):
        i = i + 1 if tr[i + 1] > tr[i] else i - 1
    half = tr[i] / 2
    hi = i
    while hi < len(tr) - 1 and tr[hi] > half:
        hi += 1
    lo = i
    while lo > 0 and tr[lo] > half:
        lo -= 1
    if tr[hi] > half or tr[lo] > half:
        raise ValueError("transmission window does not close inside the grid")
    x_hi = np.interp(half, [tr[hi], tr[hi - 1]], [x[hi], x[hi - 1]])
    x_lo = np.interp(half, [tr[lo], tr[lo + 1]], [x[lo], x[lo + 1]])
    return float(tr[i]), float(x_hi - x_lo)


SPECTRUM_COLUMNS = (
    "frequency_offset_hz", "re_chi", "im_chi", "n_real", "alpha_per_m",
    "od", "transmission", "group_delay_s",
)


def spectrum_rows(response, stride=1):
    x = response.grid.offsets
    chi = response.chi.amplitude
    tr = transmission_spectrum(response)
    for i in range(0, len(x), stride):
        yield (x[i], chi[i].real, chi[i].imag, response.n_real[i], response.alpha[i],
               response.od[i], tr[i], response.group_delay[i])


def write_spectrum_csv(path, response, stride=1):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_COLUMNS)
        for row in spectrum_rows(response, stride):
            w.writerow([format(v, ".10g") for v in row])
