"""Least-squares models for lifetime, resonance-scan, g2 and transmission-scan data.

Every model is written in scaled units (ns for time axes, GHz for frequency
axes, data divided by its largest magnitude) so that the optimizer sees
parameters of order one. Results are converted back to SI on return.

The optimizer is scipy's bounded trust-region least squares with analytic
Jacobians; 1-sigma errors come from the linearized covariance at the optimum.
"""

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares
from scipy.special import erfc, erfcx

from .faddeeva import faddeeva
from .susceptibility import od_at

SQRT2 = np.sqrt(2.0)
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
MAX_NFEV = 200
XTOL = 1e-10


class FitWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Histogram1D:
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or len(x) < 3:
            raise ValueError("x and y must be 1-D arrays of equal length >= 3")
        if np.any(np.diff(x) <= 0):
            raise ValueError("bin centers must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("data must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != x.shape or np.any(s < 0):
                raise ValueError("uncertainties must be non-negative and match x")
            object.__setattr__(self, "sigma", s)

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if rows:
                        raise
                    continue  # header
        arr = np.array(rows)
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise ValueError(f"{path}: expected two or three numeric columns")
        return cls(arr[:, 0], arr[:, 1], arr[:, 2] if arr.shape[1] == 3 else None)


@dataclass
class FitResult:
    model: str
    params: dict
    uncertainties: dict
    residual_norm: float
    initial_residual_norm: float
    converged: bool
    nfev: int
    flags: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)
    message: str = ""

    @property
    def provisional(self):
        return not self.converged

    def to_json(self):
        d = asdict(self)
        d["provisional"] = self.provisional
        return json.dumps(d, indent=2, default=float)


# ---------------------------------------------------------------------------
# lineshape building blocks

def gaussian(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))


def emg(tau, t1, sigma):
    """exp(-tau/t1) Theta(tau) convolved with a unit-area Gaussian of width sigma."""
    tau = np.asarray(tau, dtype=float)
    if sigma == 0:
        # step value 1/2 at tau = 0, the limit of the convolution
        return np.where(tau > 0, np.exp(-np.maximum(tau, 0) / t1), np.where(tau == 0, 0.5, 0.0))
    x = (sigma / t1 - tau / sigma) / SQRT2
    out = np.empty_like(tau)
    pos = x > 0
    # for x > 0 rewrite with erfcx: the exponent collapses to -tau^2/(2 sigma^2)
    out[pos] = 0.5 * np.exp(-0.5 * (tau[pos] / sigma) ** 2) * erfcx(x[pos])
    neg = ~pos
    out[neg] = 0.5 * np.exp(0.5 * (sigma / t1) ** 2 - tau[neg] / t1) * erfc(x[neg])
    return out


def emg_derivatives(tau, t1, sigma, value=None):
    """(d/dtau, d/dt1) of ``emg``."""
    e = emg(tau, t1, sigma) if value is None else value
    if sigma == 0:
        return -e / t1, e * np.asarray(tau) / t1**2
    g = gaussian(tau, sigma)
    d_tau = g - e / t1
    d_t1 = (tau * e + sigma**2 * g - sigma**2 * e / t1) / t1**2
    return d_tau, d_t1


def voigt(x, sigma, gamma):
    """Area-normalized Voigt: Gaussian sigma, Lorentzian HWHM gamma."""
    z = (np.asarray(x) + 1j * gamma) / (sigma * SQRT2)
    return faddeeva(z).real / (sigma * np.sqrt(2 * np.pi))


def _voigt_and_derivatives(x, sigma, gamma):
    z = (np.asarray(x) + 1j * gamma) / (sigma * SQRT2)
    w = faddeeva(z)
    dw = -2 * z * w + 2j / np.sqrt(np.pi)
    norm = 1.0 / (sigma * np.sqrt(2 * np.pi))
    v = w.real * norm
    d_x = (dw / (sigma * SQRT2)).real * norm
    d_sigma = (dw * (-z / sigma)).real * norm - v / sigma
    return v, d_x, d_sigma


def voigt_fwhm(lorentz_fwhm, gauss_fwhm):
    """Olivero & Longbothum (1977) approximation, accurate to about 0.02 %."""
    fl = lorentz_fwhm
    return 0.5346 * fl + np.sqrt(0.2166 * fl**2 + gauss_fwhm**2)


# ---------------------------------------------------------------------------
# generic driver

def _weights(data, weighting):
    if data.sigma is not None:
        s = np.where(data.sigma > 0, data.sigma, np.inf)
        return 1.0 / s, True
    if weighting == "poisson":
        return 1.0 / np.sqrt(np.maximum(data.y, 1.0)), True
    if weighting == "uniform":
        return np.ones_like(data.y), False
    raise ValueError("weighting must be 'uniform' or 'poisson'")


def _solve(name, fun, jac, p0, bounds, w, y_scale, absolute, names, to_si):
    """Run the optimizer on scaled parameters and build a FitResult in SI units."""

    def res(p):
        return w * fun(p)

    def jres(p):
        return w[:, None] * jac(p)

    # residual norms are reported in data units, or as chi when weights are absolute
    norm_scale = 1.0 if absolute else y_scale
    r0 = float(np.linalg.norm(res(p0))) * norm_scale
    sol = least_squares(res, p0, jac=jres, bounds=bounds, method="trf", max_nfev=MAX_NFEV,
                        xtol=XTOL, ftol=1e-12, gtol=1e-12)
    p = sol.x
    r = sol.fun
    jm = sol.jac
    dof = max(len(r) - len(p), 1)
    s2 = 1.0 if absolute else float(r @ r) / dof
    cov = np.linalg.pinv(jm.T @ jm) * s2
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    vals, errs = to_si(p, err)
    result = FitResult(
        model=name,
        params=dict(zip(names, map(float, vals))),
        uncertainties=dict(zip(names, map(float, errs))),
        residual_norm=float(np.linalg.norm(r)) * norm_scale,
        initial_residual_norm=r0,
        converged=bool(sol.status > 0),
        nfev=int(sol.nfev),
        message=str(sol.message),
    )
    if not result.converged:
        warnings.warn(f"{name} fit did not converge: {sol.message}", FitWarning, stacklevel=3)
    return result, p


def _scaled(data, unit):
    y_scale = float(np.max(np.abs(data.y)))
    if y_scale == 0:
        y_scale = 1.0
    return data.x / unit, data.y / y_scale, y_scale


def _check_not_flat(y):
    if np.ptp(y) == 0:
        raise ValueError("data are flat; the model is degenerate")


# ---------------------------------------------------------------------------
# lifetime

def lifetime_model(t, amplitude, t0, t1, background, irf_fwhm):
    return amplitude * emg(np.asarray(t) - t0, t1, irf_fwhm * FWHM_TO_SIGMA) + background


def _lifetime_parts(t, p, sigma):
    a, t0, t1, b = p
    e = emg(t - t0, t1, sigma)
    d_tau, d_t1 = emg_derivatives(t - t0, t1, sigma, e)
    f = a * e + b
    j = np.column_stack([e, -a * d_tau, a * d_t1, np.ones_like(t)])
    return f, j


def fit_lifetime(data, irf_fwhm, weighting="uniform"):
    """Exponential decay convolved with a Gaussian IRF, plus flat background."""
    _check_not_flat(data.y)
    t, y, ys = _scaled(data, 1e-9)
    sigma = irf_fwhm * FWHM_TO_SIGMA / 1e-9
    w, absolute = _weights(data, weighting)
    w = w * ys if absolute else w

    # heuristics: background from the lowest decile, lifetime from the log tail
    b0 = float(np.percentile(y, 10))
    i_pk = int(np.argmax(y))
    tail = (t > t[i_pk]) & (y - b0 > 0.05 * (y[i_pk] - b0))
    if tail.sum() >= 3:
        slope = np.polyfit(t[tail], np.log(y[tail] - b0), 1)[0]
        t1_0 = -1.0 / slope if slope < 0 else (t[-1] - t[0]) / 10
    else:
        t1_0 = (t[-1] - t[0]) / 10
    t1_0 = float(np.clip(t1_0, 1e-3, t[-1] - t[0]))
    t0_0 = float(t[i_pk] - (sigma if sigma > 0 else 0.5 * (t[1] - t[0])))
    peak = emg(np.array([t[i_pk] - t0_0]), t1_0, sigma)[0]
    a0 = float((y[i_pk] - b0) / max(peak, 1e-12))
    p0 = np.array([a0, t0_0, t1_0, b0])

    lo = [-np.inf, t[0] - (t[-1] - t[0]), 1e-6, -np.inf]
    hi = [np.inf, t[-1], 10 * (t[-1] - t[0]), np.inf]
    names = ["amplitude", "t0", "t1", "background"]
    si = np.array([ys, 1e-9, 1e-9, ys])

    # without an IRF the onset is a step: t0 only trades off against the
    # amplitude and any move across a bin edge is discontinuous, so hold it
    free = [0, 1, 2, 3] if sigma > 0 else [0, 2, 3]

    def full(q):
        p = p0.copy()
        p[free] = q
        return p

    def to_si(q, e):
        return q * si[free], e * si[free]

    result, q = _solve("lifetime", lambda q: _lifetime_parts(t, full(q), sigma)[0] - y,
                       lambda q: _lifetime_parts(t, full(q), sigma)[1][:, free], p0[free],
                       ([lo[i] for i in free], [hi[i] for i in free]), w, ys, absolute,
                       [names[i] for i in free], to_si)
    if sigma == 0:
        result.params = {k: result.params.get(k, t0_0 * 1e-9) for k in names}
        result.uncertainties = {k: result.uncertainties.get(k, 0.0) for k in names}
        result.flags.append("t0_fixed_without_irf")
    result.derived["irf_fwhm"] = float(irf_fwhm)
    return result


# ---------------------------------------------------------------------------
# resonant Voigt scan

def voigt_scan_model(x, amplitude, center, gauss_fwhm, slope, offset, lorentz_fwhm, x_mean=0.0):
    v = voigt(np.asarray(x) - center, gauss_fwhm * FWHM_TO_SIGMA, lorentz_fwhm / 2)
    return amplitude * v + slope * (np.asarray(x) - x_mean) + offset


def _voigt_parts(x, p, gamma, xm):
    a, c, s, k, o = p
    v, d_x, d_s = _voigt_and_derivatives(x - c, s, gamma)
    f = a * v + k * (x - xm) + o
    j = np.column_stack([v, -a * d_x, a * d_s, x - xm, np.ones_like(x)])
    return f, j


def _fwhm_guess(x, y):
    i = int(np.argmax(y))
    half = y[i] / 2
    above = np.nonzero(y >= half)[0]
    return float(x[above[-1]] - x[above[0]]) if len(above) > 1 else float(np.median(np.diff(x)))


def fit_voigt_scan(data, fixed_lorentz_fwhm, weighting="uniform"):
    """Voigt with fixed Lorentzian width and free Gaussian width, plus a linear term."""
    if not fixed_lorentz_fwhm > 0:
        raise ValueError("fixed Lorentzian FWHM must be positive")
    _check_not_flat(data.y)
    x, y, ys = _scaled(data, 1e9)
    gamma = fixed_lorentz_fwhm / 2 / 1e9
    xm = float(x.mean())
    w, absolute = _weights(data, weighting)
    w = w * ys if absolute else w

    # linear baseline through the two ends, then peak and half-crossings
    k0 = (y[-1] - y[0]) / (x[-1] - x[0])
    base = y[0] + k0 * (x - x[0])
    o0 = float(np.mean(base - k0 * (x - xm)))
    peak = y - base
    c0 = float(x[np.argmax(peak)])
    fv = _fwhm_guess(x, peak)
    fl = 2 * gamma
    fg2 = (fv - 0.5346 * fl) ** 2 - 0.2166 * fl**2
    s_min = max(1e-3 * fl, 1e-6)
    s0 = max(np.sqrt(fg2) * FWHM_TO_SIGMA if fg2 > 0 else 0.0, 2 * s_min)
    a0 = float(peak.max() / voigt(np.array([0.0]), s0, gamma)[0])
    p0 = np.array([a0, c0, s0, k0, o0])
    span = x[-1] - x[0]
    lo = [-np.inf, x[0] - span, s_min, -np.inf, -np.inf]
    hi = [np.inf, x[-1] + span, 10 * span, np.inf, np.inf]

    def to_si(p, e):
        g = 1e9 / FWHM_TO_SIGMA
        s = np.array([ys * 1e9, 1e9, g, ys / 1e9, ys])
        return p * s, e * s

    result, p = _solve("voigt", lambda p: _voigt_parts(x, p, gamma, xm)[0] - y,
                       lambda p: _voigt_parts(x, p, gamma, xm)[1], p0, (lo, hi), w, ys, absolute,
                       ["amplitude", "center", "gauss_fwhm", "slope", "offset"], to_si)
    gf = result.params["gauss_fwhm"]
    result.derived.update(
        lorentz_fwhm=float(fixed_lorentz_fwhm),
        total_fwhm=float(voigt_fwhm(fixed_lorentz_fwhm, gf)),
        x_mean=xm * 1e9,
    )
    if p[2] <= 1.5 * s_min:
        result.flags.append("gauss_fwhm_at_lower_bound")
    return result


# ---------------------------------------------------------------------------
# g2 histogram

def g2_model(tau, amplitude, g0, dip_time, irf_fwhm):
    s = irf_fwhm * FWHM_TO_SIGMA
    tau = np.asarray(tau, dtype=float)
    dip = emg(tau, dip_time, s) + emg(-tau, dip_time, s)
    return amplitude * (1 - (1 - g0) * dip)


def g2_measured(g0, dip_time, irf_fwhm):
    """Value of the IRF-convolved model at zero delay, plateau normalized."""
    return float(g2_model(np.array([0.0]), 1.0, g0, dip_time, irf_fwhm)[0])


def _g2_parts(tau, p, sigma):
    a, g0, td = p
    ep = emg(tau, td, sigma)
    em = emg(-tau, td, sigma)
    _, dp = emg_derivatives(tau, td, sigma, ep)
    _, dm = emg_derivatives(-tau, td, sigma, em)
    dip = ep + em
    f = a * (1 - (1 - g0) * dip)
    j = np.column_stack([1 - (1 - g0) * dip, a * dip, -a * (1 - g0) * (dp + dm)])
    return f, j


def fit_g2(data, irf_fwhm, weighting="uniform"):
    """Exponential antibunching dip convolved with the Gaussian IRF."""
    tau, y, ys = _scaled(data, 1e-9)
    sigma = irf_fwhm * FWHM_TO_SIGMA / 1e-9
    w, absolute = _weights(data, weighting)
    w = w * ys if absolute else w

    # plateau from the outer fifth of the delay range
    edge = np.abs(tau) >= 0.8 * np.max(np.abs(tau))
    plateau = float(np.mean(y[edge]))
    if not plateau > 0:
        raise ValueError("cannot normalize: long-delay plateau is not positive")
    gm = float(np.min(y) / plateau)
    depth = 1 - gm
    if depth > 1e-12:
        hw = _fwhm_guess(tau, (1 - y / plateau))
        td0 = max(hw / (2 * np.log(2)), 1e-3)
        d0 = 2 * emg(np.array([0.0]), td0, sigma)[0]
        g0_0 = float(np.clip(1 - depth / d0, 0.0, 1.0))
    else:
        td0, g0_0 = max(np.ptp(tau) / 20, 1e-3), 1.0
    p0 = np.array([plateau, g0_0, td0])
    lo = [0.0, -0.5, 1e-4]
    hi = [np.inf, 2.0, np.ptp(tau)]

    def to_si(p, e):
        s = np.array([ys, 1.0, 1e-9])
        return p * s, e * s

    result, p = _solve("g2", lambda p: _g2_parts(tau, p, sigma)[0] - y,
                       lambda p: _g2_parts(tau, p, sigma)[1], p0, (lo, hi), w, ys, absolute,
                       ["amplitude", "g0_deconv", "dip_time"], to_si)
    result.derived["g0_measured"] = g2_measured(p[1], p[2] * 1e-9, irf_fwhm)
    result.derived["irf_fwhm"] = float(irf_fwhm)
    return result


# ---------------------------------------------------------------------------
# Cs transmission scan

class TransmissionKernel:
    """Cs absorption 1 - T(nu) on a fine uniform grid, convolved by FFT.

    The grid spacing is at most 5 MHz and at most a quarter of the data
    spacing; the absorption is zero-padded by ``pad`` on both sides so the
    circular convolution with the Voigt kernel does not wrap.
    """

    def __init__(self, model, cell, x, pad=40e9, max_step=5e6):
        x = np.asarray(x, dtype=float)
        step = min(max_step, float(np.min(np.diff(x))) / 4)
        lines = [tr.detuning for tr in model.transitions]
        lo = min(x.min(), min(lines)) - pad
        hi = max(x.max(), max(lines)) + pad
        n = int(2 ** np.ceil(np.log2((hi - lo) / step)))
        self.step = (hi - lo) / n
        self.nu = lo + self.step * np.arange(n)
        self.absorption = -np.expm1(-od_at(model, cell, self.nu))
        self._fa = np.fft.fft(self.absorption)
        self.freq = np.fft.fftfreq(n, self.step)

    def convolve(self, sigma, gamma, derivative=False):
        """Absorption convolved with the area-normalized Voigt (sigma, HWHM gamma)."""
        f = self.freq
        kernel = np.exp(-2 * (np.pi * sigma * f) ** 2 - 2 * np.pi * gamma * np.abs(f))
        conv = np.fft.ifft(self._fa * kernel).real
        if not derivative:
            return conv
        d_sigma = np.fft.ifft(self._fa * kernel * (-4 * np.pi**2 * sigma * f**2)).real
        return conv, d_sigma


def transmission_scan_model(kernel, x, amplitude, gauss_fwhm, slope, offset, freq_offset,
                            lorentz_fwhm, x_mean=0.0):
    conv = kernel.convolve(gauss_fwhm * FWHM_TO_SIGMA, lorentz_fwhm / 2)
    s = CubicSpline(kernel.nu, conv)
    x = np.asarray(x, dtype=float)
    return amplitude * (1 - s(x + freq_offset)) + slope * (x - x_mean) + offset


def fit_transmission_scan(data, model, cell, fixed_lorentz_fwhm, weighting="uniform",
                          gauss_guesses=(0.5e9, 1e9, 2e9, 3.5e9, 5e9)):
    """Voigt QD line scanned across the Cs D1 transmission, plus a linear term."""
    _check_not_flat(data.y)
    kernel = TransmissionKernel(model, cell, data.x)
    gamma = fixed_lorentz_fwhm / 2
    xs = 1e9
    x = data.x
    xm = float(x.mean())
    y_scale = float(np.max(np.abs(data.y)))
    y = data.y / y_scale
    w, absolute = _weights(data, weighting)
    w = w * y_scale if absolute else w
    s_min = 1e-4  # GHz

    def parts(p):
        a, s, k, o, d = p
        conv, d_s = kernel.convolve(s * xs, gamma, derivative=True)
        spl = CubicSpline(kernel.nu, conv)
        spl_s = CubicSpline(kernel.nu, d_s)
        at = x + d * xs
        c = spl(at)
        xr = (x - xm) / xs
        f = a * (1 - c) + k * xr + o
        j = np.column_stack([1 - c, -a * spl_s(at) * xs, xr, np.ones_like(x), -a * spl(at, 1) * xs])
        return f, j

    # start from the best of a few Gaussian widths, linear parameters by lstsq
    best = None
    xr = (x - xm) / xs
    for g in gauss_guesses:
        s = g * FWHM_TO_SIGMA / xs
        c = CubicSpline(kernel.nu, kernel.convolve(s * xs, gamma))(x)
        basis = np.column_stack([1 - c, xr, np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        rss = float(np.sum((basis @ coef - y) ** 2))
        if best is None or rss < best[0]:
            best = (rss, s, coef)
    _, s0, (a0, k0, o0) = best
    p0 = np.array([a0, max(s0, 2 * s_min), k0, o0, 0.0])
    lo = [-np.inf, s_min, -np.inf, -np.inf, -2.0]
    hi = [np.inf, 20.0, np.inf, np.inf, 2.0]

    def to_si(p, e):
        sc = np.array([y_scale, xs / FWHM_TO_SIGMA, y_scale / xs, y_scale, xs])
        return p * sc, e * sc

    result, p = _solve("transmission", lambda p: parts(p)[0] - y, lambda p: parts(p)[1], p0,
                       (lo, hi), w, y_scale, absolute,
                       ["amplitude", "gauss_fwhm", "slope", "offset", "freq_offset"], to_si)
    result.derived.update(
        lorentz_fwhm=float(fixed_lorentz_fwhm),
        total_fwhm=float(voigt_fwhm(fixed_lorentz_fwhm, result.params["gauss_fwhm"])),
        x_mean=xm,
        kernel_step=float(kernel.step),
    )
    if p[1] <= 1.5 * s_min:
        result.flags.append("gauss_fwhm_at_lower_bound")
    return result


# ---------------------------------------------------------------------------
# evaluation helpers for export

def model_curve(result, x, **context):
    """Evaluate the fitted model of ``result`` at ``x`` (SI units)."""
    p = result.params
    d = result.derived
    if result.model == "lifetime":
        return lifetime_model(x, p["amplitude"], p["t0"], p["t1"], p["background"], d["irf_fwhm"])
    if result.model == "voigt":
        return voigt_scan_model(x, p["amplitude"], p["center"], p["gauss_fwhm"], p["slope"], p["offset"],
                                d["lorentz_fwhm"], d["x_mean"])
    if result.model == "g2":
        return g2_model(x, p["amplitude"], p["g0_deconv"], p["dip_time"], d["irf_fwhm"])
    if result.model == "transmission":
        kernel = context["kernel"]
        return transmission_scan_model(kernel, x, p["amplitude"], p["gauss_fwhm"], p["slope"],
                                       p["offset"], p["freq_offset"], d["lorentz_fwhm"], d["x_mean"])
    raise ValueError(f"unknown model {result.model!r}")


def write_model_csv(path, data, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "y_data", "y_model"))
        for xi, yi, mi in zip(data.x, data.y, curve):
            w.writerow([format(xi, ".10g"), format(yi, ".10g"), format(mi, ".10g")])
