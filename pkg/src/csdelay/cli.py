"""Command-line front end: run a YAML scenario and write CSV/JSON artifacts."""

import argparse
import json
import math
import platform
import sys
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

from . import fitting
from .atomdata import VaporCell, cesium_d1
from .defaults import DEFAULTS, celsius_to_kelvin
from .propagation import (
    FilterRangeWarning, FilterSpec, PhotonSource, TimeGrid, precursor_ratio, simulate,
    spectral_delay_scan, temperature_point, transfer_function, write_delay_table_csv,
)
from .pumping import pump_point, steady_state, PumpModel
from .scenario import ScenarioError, load_scenario
from .susceptibility import (
    optical_response, peak_od, transmission_spectrum, transmission_window, write_spectrum_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def filter_frequency_from_temperature(delta_theta, coefficient=DEFAULTS["filter_tuning_hz_per_k"],
                                      correction=DEFAULTS["filter_tuning_correction"], nu0=0.0):
    """Filter line position nu0 + correction * coefficient * delta_theta (Hz)."""
    if coefficient == 0:
        raise ValueError("tuning coefficient must be non-zero")
    if not 0 < correction <= 1:
        raise ValueError("correction must lie in (0, 1]")
    return nu0 + correction * coefficient * delta_theta


def _fmt(v):
    return format(v, ".10g")


def _write_csv(path, header, rows):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "pydantic", "PyYAML"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


class Run:
    """Resolved objects for one scenario."""

    def __init__(self, scenario, config_path):
        self.sc = scenario
        self.config_path = Path(config_path)
        self.model = cesium_d1()
        g = scenario.grid
        self.grid = TimeGrid(g.points, g.dt_s, g.t_start_s)
        s = scenario.source
        self.source = PhotonSource(s.t1_s, s.nu0_offset_hz, s.inhom_fwhm_hz, s.rise_time_s)
        self.cell = self.make_cell(scenario.cell.temperature_c)
        self.filter = self.make_filter()
        self.nodes = scenario.quadrature.nodes
        self.resolved = {}

    def make_cell(self, temperature_c):
        c = self.sc.cell
        return VaporCell(c.length_mm * 1e-3, celsius_to_kelvin(temperature_c), c.density_override_per_m3,
                         c.population_factor)

    def make_filter(self):
        f = self.sc.filter
        if f is None:
            return None
        if f.delta_theta_k is not None:
            nu_f = filter_frequency_from_temperature(f.delta_theta_k, f.tuning_hz_per_k, f.tuning_correction)
        else:
            nu_f = f.nu_f_offset_hz or 0.0
        return FilterSpec(nu_f, f.fwhm_hz, f.fsr_hz)

    @property
    def filter_mode(self):
        return self.sc.filter.mode if self.sc.filter is not None else DEFAULTS["filter_mode"]

    def irf(self, default):
        v = self.sc.irf_fwhm_s
        v = default if v is None else v
        self.resolved["irf_fwhm_s"] = v
        return v or None


def _map(workers, fn, jobs):
    """Ordered map that keeps going past failing points."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_safe, [fn] * len(jobs), jobs))
    return [_safe(fn, j) for j in jobs]


def _safe(fn, job):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FilterRangeWarning)
            return True, fn(job)
    except Exception as exc:  # noqa: BLE001 - reported per point
        return False, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# scenario kinds

def _run_spectrum(run, out):
    grid = run.grid.frequency_grid(run.model.nu_line)
    resp = optical_response(run.model, run.cell, grid)
    write_spectrum_csv(out / "spectrum.csv", resp, run.sc.output.spectrum_stride)
    i0 = grid.index_of(0.0)
    summary = {
        "od_at_nu0": float(resp.od[i0]),
        "transmission_at_nu0": float(transmission_spectrum(resp)[i0]),
        "group_delay_at_nu0_s": float(resp.group_delay[i0]),
        "peak_od_f4_f3": peak_od(run.model, run.cell),
        "density_per_m3": run.cell.density,
    }
    try:
        peak_t, width = transmission_window(resp)
        summary.update(window_peak_transmission=peak_t, window_fwhm_hz=width)
    except ValueError:
        summary.update(window_peak_transmission=None, window_fwhm_hz=None)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return []


def _run_propagate(run, out):
    grid = run.grid.frequency_grid(run.model.nu_line)
    transfer = transfer_function(optical_response(run.model, run.cell, grid))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FilterRangeWarning)
        r = simulate(run.source, transfer, run.grid, run.filter, run.irf(0.0), run.nodes, run.filter_mode,
                     run.sc.quadrature.method)
    t = run.grid.times
    stride = run.sc.output.waveform_stride
    _write_csv(out / "waveform.csv", ("time_s", "intensity", "reference_intensity"),
               zip(t[::stride], r.waveform.intensity[::stride], r.reference.intensity[::stride]))
    summary = {
        "mean_delay_s": r.mean_delay,
        "transmitted_fraction": r.transmitted_fraction,
        "peak_time_s": r.peak_time,
        "peak_delay_s": r.peak_delay,
        "precursor_ratio": precursor_ratio(r.waveform),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return [] if not r.absorbed else ["pulse fully absorbed"]


def _run_temp_sweep(run, out, workers):
    temps = run.sc.sweep.temperatures_c or DEFAULTS["temperatures_c"]
    run.resolved["temperatures_c"] = temps
    filt = run.filter or FilterSpec()
    irf = run.irf(DEFAULTS["irf_fwhm_s"])
    jobs = [(run.model, run.source, celsius_to_kelvin(T), run.grid, run.cell.length, filt, irf, run.nodes)
            for T in temps]
    results = _map(workers, temperature_point, jobs)
    rows, failures = [], []
    stride = run.sc.output.waveform_stride
    t = run.grid.times
    for T, (ok, p) in zip(temps, results):
        if not ok:
            failures.append(f"{T} C: {p}")
            rows.append((T, math.nan, math.nan, math.nan, math.nan))
            continue
        rows.append((T, p.ensemble.mean_delay, p.ensemble.transmitted_fraction, p.filtered.mean_delay,
                     p.filtered.transmitted_fraction))
        _write_csv(out / f"waveform_{T:g}c.csv", ("time_s", "intensity", "reference_intensity"),
                   zip(t[::stride], p.ensemble.waveform.intensity[::stride],
                       p.ensemble.reference.intensity[::stride]))
    _write_csv(out / "delays.csv", ("temperature_c", "ensemble_mean_delay_s", "ensemble_transmitted_fraction",
                                    "filtered_mean_delay_s", "filtered_transmitted_fraction"), rows)
    return failures


def _run_spectral_delay(run, out):
    sw = run.sc.sweep
    temp_c = run.sc.cell.temperature_c
    offsets = sw.nu_f_offsets_hz or DEFAULTS["spectral_scan_hz"]
    presets = sw.photon_presets_hz if sw.photon_presets_hz is not None else DEFAULTS["photon_presets_hz"]
    run.resolved.update(nu_f_offsets_hz=offsets, photon_presets_hz=presets, temperature_c=temp_c)
    grid = run.grid.frequency_grid(run.model.nu_line)
    transfer = transfer_function(optical_response(run.model, run.cell, grid))
    fwhm = run.filter.fwhm if run.filter else DEFAULTS["filter_fwhm_hz"]
    rows = spectral_delay_scan(run.source, transfer, run.grid, offsets, presets, fwhm, sw.include_ensemble,
                               run.nodes, run.irf(0.0))
    write_delay_table_csv(out / "delays.csv", rows)
    return [f"{r.curve} at {r.nu_f:g} Hz: {r.error}" for r in rows if r.error]


def _run_pump_sweep(run, out, workers):
    pump = run.sc.pump
    ratios = pump.ratios if pump else DEFAULTS["pump_ratios"]
    mode = pump.mode if pump else DEFAULTS["pump_mode"]
    run.resolved.update(pump_ratios=ratios, pump_mode=mode)
    irf = run.irf(DEFAULTS["irf_fwhm_s"])
    jobs = [(run.model, run.source, run.cell, run.filter, r, mode, run.grid, irf, run.nodes, run.filter_mode)
            for r in ratios]
    results = _map(workers, pump_point, jobs)
    rows, failures = [], []
    stride = run.sc.output.waveform_stride
    t = run.grid.times
    (out / "waveforms").mkdir(exist_ok=True)
    for r, (ok, p) in zip(ratios, results):
        rho = steady_state(PumpModel(pump_ratio=r)).rho44
        if not ok:
            failures.append(f"P/gamma={r}: {p}")
            rows.append((r, rho, math.nan, math.nan, math.nan, math.nan))
            continue
        rows.append((r, rho, p.transmitted_fraction, p.mean_delay, p.peak_delay, p.peak_time))
        _write_csv(out / "waveforms" / f"pump_{r:g}.csv", ("time_s", "intensity", "reference_intensity"),
                   zip(t[::stride], p.result.waveform.intensity[::stride],
                       p.result.reference.intensity[::stride]))
    _write_csv(out / "pump.csv", ("pump_ratio", "rho44_bar", "transmitted_fraction", "mean_delay_s",
                                  "peak_delay_s", "peak_time_s"), rows)
    return failures


def _run_fit(run, out):
    fc = run.sc.fit
    path = Path(fc.data_csv)
    if not path.is_absolute():
        path = run.config_path.parent / path
    data = fitting.Histogram1D.from_csv(path)
    context = {}
    if fc.model == "lifetime":
        res = fitting.fit_lifetime(data, fc.irf_fwhm_s, fc.weighting)
    elif fc.model == "voigt":
        res = fitting.fit_voigt_scan(data, fc.lorentz_fwhm_hz, fc.weighting)
    elif fc.model == "g2":
        res = fitting.fit_g2(data, fc.irf_fwhm_s, fc.weighting)
    else:
        res = fitting.fit_transmission_scan(data, run.model, run.cell, fc.lorentz_fwhm_hz, fc.weighting)
        context["kernel"] = fitting.TransmissionKernel(run.model, run.cell, data.x)
    (out / "fit.json").write_text(res.to_json())
    fitting.write_model_csv(out / "model.csv", data, fitting.model_curve(res, data.x, **context))
    return [] if res.converged else [f"fit did not converge: {res.message}"]


def run_scenario(config_path, kind=None, out_dir=None, workers=1, fit_model=None, stream=sys.stderr):
    """Run one scenario; returns the process exit status."""
    try:
        sc = load_scenario(config_path, kind, fit_model)
    except (ScenarioError, OSError) as exc:
        print(str(exc), file=stream)
        return EXIT_CONFIG
    if sc.kind is None:
        print(f"{config_path}: no kind given", file=stream)
        return EXIT_CONFIG
    if sc.kind == "fit" and sc.fit.model is None:
        print(f"{config_path}: fit.model missing", file=stream)
        return EXIT_CONFIG
    out = Path(out_dir or sc.output.directory or "out")
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    try:
        run = Run(sc, config_path)
        handlers = {
            "spectrum": lambda: _run_spectrum(run, out),
            "propagate": lambda: _run_propagate(run, out),
            "temp-sweep": lambda: _run_temp_sweep(run, out, workers),
            "spectral-delay": lambda: _run_spectral_delay(run, out),
            "pump-sweep": lambda: _run_pump_sweep(run, out, workers),
            "fit": lambda: _run_fit(run, out),
        }
        failures = handlers[sc.kind]()
        resolved = run.resolved
        status = EXIT_PARTIAL if failures else EXIT_OK
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest
        failures = [f"{type(exc).__name__}: {exc}"]
        resolved = {}
        status = EXIT_PARTIAL
        traceback.print_exc(file=stream)
    manifest = {
        "scenario": sc.model_dump(),
        "config_path": str(config_path),
        "resolved": resolved,
        "defaults": DEFAULTS,
        "versions": _versions(),
        "workers": workers,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "status": status,
        "failures": failures,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    for f in failures:
        print(f"failed: {f}", file=stream)
    return status


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario YAML file")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    common.add_argument("--seed", type=int, default=None, help="reserved; all paths are deterministic")

    p = argparse.ArgumentParser(prog="csdelay", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("spectrum", "susceptibility, OD, transmission and group delay versus detuning"),
        ("propagate", "one photon through the cell (optionally filtered)"),
        ("temp-sweep", "delay versus cell temperature"),
        ("spectral-delay", "delay versus filter position"),
        ("pump-sweep", "transmission and delay versus pump strength"),
    ):
        sub.add_parser(name, parents=[common], help=helptext)
    fit = sub.add_parser("fit", help="fit a measured histogram or scan")
    fit_sub = fit.add_subparsers(dest="fit_model", required=True)
    for m in ("lifetime", "voigt", "g2", "transmission"):
        fit_sub.add_parser(m, parents=[common])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run_scenario(args.config, args.command, args.out, args.workers, getattr(args, "fit_model", None))


if __name__ == "__main__":
    sys.exit(main())
