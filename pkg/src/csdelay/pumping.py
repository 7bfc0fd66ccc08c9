"""Two-ground-state optical pumping and optically controlled delay."""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .atomdata import number_density, temperature_for_density
from .propagation import FilterRangeWarning, simulate, transfer_function
from .susceptibility import optical_response

THERMAL_RHO44 = 0.5
DEFAULT_PUMP_RATIOS = (0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 30.0, 100.0)


@dataclass(frozen=True)
class PumpModel:
    gamma: float = 1.0
    pump_ratio: float = 0.0
    beta: float = None  # m^2/W, only for intensity conversion

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.pump_ratio < 0:
            raise ValueError("pump_ratio must be non-negative")

    @property
    def pump_rate(self):
        return self.pump_ratio * self.gamma

    @classmethod
    def from_intensity(cls, gamma, beta, intensity):
        """P = beta * I."""
        return cls(gamma=gamma, pump_ratio=beta * intensity / gamma, beta=beta)


@dataclass(frozen=True)
class Populations:
    rho33: float
    rho44: float

    def __post_init__(self):
        for v in (self.rho33, self.rho44):
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError("populations must lie in [0, 1]")
        if abs(self.rho33 + self.rho44 - 1) > 1e-12:
            raise ValueError("populations must sum to 1")


def steady_state(pump):
    rho44 = 1.0 / (2.0 + pump.pump_ratio)
    return Populations(1.0 - rho44, rho44)


def evolve_populations(initial, pump, t):
    """Exact solution of the rate equations: relaxation at rate 2 gamma + P."""
    if t < 0:
        raise ValueError("t must be non-negative")
    ss = steady_state(pump).rho44
    rate = 2 * pump.gamma + pump.pump_rate
    rho44 = ss + (initial.rho44 - ss) * np.exp(-rate * t)
    return Populations(1.0 - rho44, float(rho44))


def rate_equations(t, y, pump):
    """d(rho33, rho44)/dt, for use with a numerical integrator."""
    r33, r44 = y
    g, p = pump.gamma, pump.pump_rate
    return [g * r44 - g * r33 + p * r44, -g * r44 + g * r33 - p * r44]


def effective_cell(cell, populations, mode="temperature-mimic"):
    """Cell whose absorption reflects the pumped population of F=4.

    "density-scale" sets population_factor = rho44/0.5 and scales every
    transition alike. "temperature-mimic" lowers the temperature until the
    saturated density drops by the same factor, so the Doppler width
    shrinks too.
    """
    ratio = populations.rho44 / THERMAL_RHO44
    if mode == "density-scale":
        return replace(cell, population_factor=cell.population_factor * ratio)
    if mode == "temperature-mimic":
        if ratio == 1.0:
            return cell
        if cell.density_override is not None:
            raise ValueError("temperature-mimic mode needs the vapor-pressure density model")
        target = number_density(cell.temperature) * ratio
        t_eff = temperature_for_density(target, tol=1e-3, upper=cell.temperature)
        return replace(cell, temperature=t_eff)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True, eq=False)
class PumpPoint:
    pump_ratio: float
    rho44_bar: float
    effective_temperature: float
    transmitted_fraction: float
    mean_delay: float
    peak_delay: float
    peak_time: float
    result: object


def pump_point(args):
    model, source, cell, filt, ratio, mode, grid, irf_fwhm, nodes, filter_mode = args
    pops = steady_state(PumpModel(pump_ratio=ratio))
    eff = effective_cell(cell, pops, mode)
    fgrid = grid.frequency_grid(model.nu_line)
    transfer = transfer_function(optical_response(model, eff, fgrid))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FilterRangeWarning)
        r = simulate(source, transfer, grid, filt, irf_fwhm, nodes, filter_mode)
    return PumpPoint(ratio, pops.rho44, eff.temperature, r.transmitted_fraction, r.mean_delay,
                     r.peak_delay, r.peak_time, r)


def pump_sweep(model, source, cell, filt, grid, ratios=DEFAULT_PUMP_RATIOS, mode="temperature-mimic",
               irf_fwhm=1060e-12, nodes=201, filter_mode="transfer", executor=None):
    """One full propagation per pump ratio; ``executor`` may parallelize the points."""
    ratios = list(ratios)
    if ratios != sorted(ratios):
        raise ValueError("pump ratios must be sorted ascending")
    jobs = [(model, source, cell, filt, r, mode, grid, irf_fwhm, nodes, filter_mode) for r in ratios]
    mapper = map if executor is None else executor.map
    return list(mapper(pump_point, jobs))


def half_transmission_ratio(points, level=0.5):
    """Pump ratio where the transmitted fraction crosses ``level``.

    Interpolates linearly in log(P/gamma) between the bracketing points;
    returns nan when the level is not crossed.
    """
    for a, b in zip(points, points[1:]):
        if a.transmitted_fraction <= level <= b.transmitted_fraction:
            x = np.interp(level, [a.transmitted_fraction, b.transmitted_fraction],
                          np.log([a.pump_ratio, b.pump_ratio]))
            return float(np.exp(x))
    return float("nan")


def write_pump_table_csv(path, points):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("pump_ratio", "rho44_bar", "transmitted_fraction", "mean_delay_s", "peak_delay_s",
                    "peak_time_s"))
        for p in points:
            w.writerow([format(v, ".10g") for v in
                        (p.pump_ratio, p.rho44_bar, p.transmitted_fraction, p.mean_delay, p.peak_delay, p.peak_time)])
