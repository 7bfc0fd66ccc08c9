"""Regenerate the synthetic fit inputs in this directory.

Each curve is built by brute-force numerical convolution on a fine grid,
independent of the closed forms used by the fitting models, then Poisson
noise is added with a fixed seed.

    python3 scenarios/data/generate.py
"""

from pathlib import Path

import numpy as np
from scipy.special import wofz

from csdelay.atomdata import VaporCell, cesium_d1
from csdelay.susceptibility import od_at

HERE = Path(__file__).parent
FWHM_TO_SIGMA = 1 / (2 * np.sqrt(2 * np.log(2)))
IRF = 1060e-12
T1 = 1.04e-9


def gauss_convolve(t, f, fwhm):
    s = fwhm * FWHM_TO_SIGMA
    k = np.exp(-0.5 * ((t - t[len(t) // 2]) / s) ** 2)
    return np.convolve(f, k / k.sum(), mode="same")


def voigt(x, fwhm_g, fwhm_l):
    s = fwhm_g * FWHM_TO_SIGMA
    return wofz((x + 0.5j * fwhm_l) / (s * np.sqrt(2))).real / (s * np.sqrt(2 * np.pi))


def save(name, x, y):
    np.savetxt(HERE / name, np.column_stack([x, y]), delimiter=",", header="x,y", comments="", fmt="%.10g")


def main(seed=1):
    rng = np.random.default_rng(seed)

    tf = np.arange(-40e-9, 40e-9, 1e-12)
    decay = np.where(tf >= 0, np.exp(-np.maximum(tf, 0) / T1), 0.0)
    tb = np.arange(-5e-9, 20e-9, 64e-12)
    y = 2000 * np.interp(tb, tf, gauss_convolve(tf, decay, IRF)) + 10
    save("lifetime.csv", tb, rng.poisson(y))

    x = np.linspace(-10e9, 10e9, 201)
    y = 3e12 * voigt(x - 0.2e9, 2.4e9, 153e6) + 1e-8 * x + 200
    save("voigt.csv", x, rng.poisson(y))

    dip = 1 - 0.98 * np.exp(-np.abs(tf) / T1)
    tb = np.arange(-30e-9, 30e-9, 128e-12)
    y = 400 * np.interp(tb, tf, gauss_convolve(tf, dip, IRF))
    save("g2.csv", tb, rng.poisson(y) / 400)

    model = cesium_d1()
    nu = np.arange(-25e9, 35e9, 2e6)
    absorption = -np.expm1(-od_at(model, VaporCell(0.04, 303.15), nu))
    x = np.linspace(-8e9, 16e9, 161)
    conv = np.array([np.sum(voigt(nu - xi, 3.57e9, 153e6) * absorption) * 2e6 for xi in x])
    y = 5000 * (1 - conv) + 2e-8 * x + 100
    save("transmission.csv", x, rng.poisson(y))


if __name__ == "__main__":
    main()
