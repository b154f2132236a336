"""Configuration-driven experiment runner.

Configs are flat ``key = value`` text files (``#`` comments allowed).
Every key has a default matching the reference emitter conditions
(t1 = 1.85 ns, t2 = 1.62 ns, p_sat = 20 nW), so a config may be as short
as the experiment name.  Unknown keys are rejected and all physical keys
are validated against module preconditions before any computation starts.

Outputs: a CSV document per experiment (metadata lines carrying the
artifact version and a config hash), an SVG plot with ``--plot`` and a fit
report when the experiment includes a fit.  Exit codes: 0 success, 2
configuration error (message names the offending key), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import (
    __version__,
    csvio,
    fitkit,
    lambda_system,
    photostats,
    qdyn,
    ramsey,
    svgplot,
    synth,
    tls,
)
from .errors import ConfigError, ModelError, NumericFailure
from .qdyn import Curve, TimeGrid, TimeTrace

OUT_ENV_VAR = "EMITTERLAB_OUT"

_SAT_RABI_GHZ = 1.0 / (2.0 * math.pi * math.sqrt(1.85 * 1.62))


def _tls_keys():
    return {"t1_ns": (float, 1.85), "t2_ns": (float, 1.62)}


def _lambda_keys():
    # -1 means "derive": equal branching gamma_c = gamma_d = 1/(2 t1_ns).
    return {
        "gamma_c_per_ns": (float, -1.0),
        "gamma_d_per_ns": (float, -1.0),
        "gamma_ground_per_ns": (float, 0.025),
        "gamma_phi_e_per_ns": (float, 0.0),
        "gamma_phi_g_per_ns": (float, 0.0),
    }


EXPERIMENTS: dict = {
    "rabi_analytic": {
        **_tls_keys(),
        "rabi_ghz": (float, 0.906),
        "detuning_ghz": (float, 0.0),
        "mu_mode": (str, "auto"),
        "tau_max_ns": (float, 10.0),
        "n_points": (int, 501),
    },
    "rabi_trace": {
        **_tls_keys(),
        "rabi_ghz": (float, 0.906),
        "detuning_ghz": (float, 0.0),
        "pulse_shape": (str, "square"),
        "pulse_ns": (float, 5.0),
        "period_ns": (float, 15.0),
        "rise_ns": (float, 0.0),
        "t_max_ns": (float, 15.0),
        "n_points": (int, 1501),
    },
    "detuning_map": {
        **_tls_keys(),
        "rabi_ghz": (float, 1.304),
        "detuning_min_ghz": (float, -2.0),
        "detuning_max_ghz": (float, 2.0),
        "n_detunings": (int, 21),
        "pulse_ns": (float, 20.0),
        "period_ns": (float, 20.5),
        "t_max_ns": (float, 20.5),
        "n_points": (int, 2049),
    },
    "g2": {
        **_tls_keys(),
        "rabi_ghz": (float, 0.906),
        "detuning_ghz": (float, 0.0),
        "tau_max_ns": (float, 10.0),
        "n_points": (int, 501),
        "irf_sigma_ns": (float, 0.0),
    },
    "mollow_spectrum": {
        **_tls_keys(),
        "rabi_ghz": (float, 2.0),
        "detuning_ghz": (float, 0.0),
        "f_min_ghz": (float, -4.0),
        "f_max_ghz": (float, 4.0),
        "n_freqs": (int, 1201),
    },
    "lineshape": {
        **_tls_keys(),
        "rabi_ghz": (float, _SAT_RABI_GHZ),
        "span_ghz": (float, 1.2),
        "n_points": (int, 161),
    },
    "autler_scan": {
        **_tls_keys(),
        **_lambda_keys(),
        "p_sat_nw": (float, 20.0),
        "pump_power_nw": (float, 400.0),
        "probe_power_nw": (float, 50.0),
        "omega_c_ghz": (float, -1.0),
        "omega_d_ghz": (float, -1.0),
        "delta_c_ghz": (float, 0.0),
        "delta_min_ghz": (float, -0.7),
        "delta_max_ghz": (float, 0.7),
        "n_points": (int, 281),
    },
    "autler_map": {
        **_tls_keys(),
        **_lambda_keys(),
        "p_sat_nw": (float, 20.0),
        "pump_power_nw": (float, 400.0),
        "probe_power_nw": (float, 50.0),
        "delta_c_min_ghz": (float, -1.5),
        "delta_c_max_ghz": (float, 1.5),
        "n_c": (int, 61),
        "delta_d_min_ghz": (float, -1.5),
        "delta_d_max_ghz": (float, 1.5),
        "n_d": (int, 61),
    },
    "pulsed_rabi": {
        **_tls_keys(),
        "p_sat_nw": (float, 20.0),
        "pulse_shape": (str, "square"),
        "pulse_ns": (float, 0.2),
        "period_ns": (float, 12.5),
        "p_max_nw": (float, -1.0),  # -1: span two full sin^2 oscillations
        "n_powers": (int, 70),
    },
    "ramsey": {
        "t1_ns": (float, 1.85),
        "t2_ns": (float, 0.78),
        "pulse_ns": (float, 0.01),
        "period_ns": (float, 1.0),
        "scan": (str, "visibility"),
        "fringe_tau_ns": (float, 0.5),
        "tau_max_ns": (float, 2.4),
        "n_taus": (int, 13),
        "n_phases": (int, 16),
        "detuning_ghz": (float, 0.0),
    },
    "lifetime": {
        **_tls_keys(),
        "t_max_ns": (float, 10.0),
        "n_points": (int, 201),
    },
    "fit": {
        "input": (str, ""),
        "fit_model": (str, "exp_decay"),
        "t1_ns": (float, 1.85),
        "mu_mode": (str, "auto"),
    },
    "synth": {
        "input": (str, ""),
        "seed": (int, 12345),
        "scale": (float, 10000.0),
        "background_rate": (float, 0.0),
        "irf_sigma_ns": (float, 0.0),
    },
}


# -- config handling ----------------------------------------------------------


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(body.split()[0], f"line {lineno} is not 'key = value'")
        key, _, value = body.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def validate_config(experiment: str, raw: dict) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment '{experiment}'")
    schema = EXPERIMENTS[experiment]
    cfg = {name: default for name, (_, default) in schema.items()}
    for key, value in raw.items():
        if key == "experiment":
            continue
        if key not in schema:
            raise ConfigError(key, f"unknown key for experiment '{experiment}'")
        typ = schema[key][0]
        try:
            cfg[key] = typ(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"cannot parse '{value}' as {typ.__name__}")
    _precheck(experiment, cfg)
    return cfg


def config_hash(experiment: str, cfg: dict) -> str:
    canonical = [f"experiment={experiment}"]
    for key in sorted(cfg):
        value = cfg[key]
        canonical.append(
            f"{key}={csvio.format_number(value) if isinstance(value, (int, float)) else value}"
        )
    return hashlib.sha256("\n".join(canonical).encode()).hexdigest()[:16]


def _params(cfg) -> tls.TlsParams:
    return tls.TlsParams(t1=cfg["t1_ns"], t2=cfg["t2_ns"])


def _lambda_params(cfg) -> lambda_system.LambdaParams:
    gc = cfg["gamma_c_per_ns"]
    gd = cfg["gamma_d_per_ns"]
    if gc < 0:
        gc = 0.5 / cfg["t1_ns"]
    if gd < 0:
        gd = 0.5 / cfg["t1_ns"]
    return lambda_system.LambdaParams(
        gamma_c=gc,
        gamma_d=gd,
        gamma_ground=cfg["gamma_ground_per_ns"],
        gamma_phi_e=cfg["gamma_phi_e_per_ns"],
        gamma_phi_g=cfg["gamma_phi_g_per_ns"],
    )


def _lambda_rabis(cfg) -> tuple:
    calib = tls.PowerCalib(cfg["p_sat_nw"])
    params = _params(cfg)
    omega_c = cfg.get("omega_c_ghz", -1.0)
    omega_d = cfg.get("omega_d_ghz", -1.0)
    if omega_c < 0:
        omega_c = tls.power_to_rabi(calib, params, cfg["pump_power_nw"])
    if omega_d < 0:
        omega_d = tls.power_to_rabi(calib, params, cfg["probe_power_nw"])
    return omega_c, omega_d


def _checked(key: str, build, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except ModelError as exc:
        raise ConfigError(key, str(exc)) from exc


def _precheck(experiment: str, cfg: dict):
    """Build the cheap domain objects so bad values fail before computing."""
    if "t1_ns" in cfg and "t2_ns" in cfg:
        _checked("t2_ns", _params, cfg)
    if "pulse_ns" in cfg:
        _checked(
            "pulse_ns",
            tls.PulseEnvelope,
            shape=cfg.get("pulse_shape", "square"),
            duration=cfg["pulse_ns"],
            period=cfg["period_ns"],
            rise_time=cfg.get("rise_ns", 0.0),
        )
    if "n_points" in cfg and "tau_max_ns" in cfg:
        _checked("n_points", TimeGrid, 0.0, cfg["tau_max_ns"], cfg["n_points"])
    if "n_points" in cfg and "t_max_ns" in cfg:
        _checked("n_points", TimeGrid, 0.0, cfg["t_max_ns"], cfg["n_points"])
    if "gamma_c_per_ns" in cfg:
        _checked("gamma_c_per_ns", _lambda_params, cfg)
    if "p_sat_nw" in cfg:
        _checked("p_sat_nw", tls.PowerCalib, cfg["p_sat_nw"])
    if "rabi_ghz" in cfg and cfg["rabi_ghz"] < 0:
        raise ConfigError("rabi_ghz", "must be >= 0")
    if experiment == "ramsey" and cfg["scan"] not in ("visibility", "fringe"):
        raise ConfigError("scan", "must be 'visibility' or 'fringe'")
    if experiment == "fit" and cfg["fit_model"] not in (
        "rabi", "exp_decay", "lorentzian", "linear_sqrtp", "sine_sqrtp"
    ):
        raise ConfigError("fit_model", f"unknown fit model '{cfg['fit_model']}'")
    if experiment in ("fit", "synth") and not cfg["input"]:
        raise ConfigError("input", "an input CSV path is required")
    if "mu_mode" in cfg and cfg["mu_mode"] not in ("auto", "minus", "plus"):
        raise ConfigError("mu_mode", "must be 'auto', 'minus' or 'plus'")
    if "irf_sigma_ns" in cfg and cfg["irf_sigma_ns"] < 0:
        raise ConfigError("irf_sigma_ns", "must be >= 0")


# -- runners -------------------------------------------------------------------


class RunOutput:
    def __init__(self, summary: str, files=None, data=None):
        self.summary = summary
        self.files = files or []
        self.data = data or {}


def _meta(experiment: str, cfg: dict, **extra) -> dict:
    meta = {"artifact_version": __version__, "experiment": experiment,
            "config_hash": config_hash(experiment, cfg)}
    for key in sorted(cfg):
        meta[key] = cfg[key]
    meta.update(extra)
    return meta


def _write_curve(path, xname, yname, x, y, meta) -> None:
    csvio.write_csv(path, [xname, yname], zip(x, y), meta)


def _write_fit_report(path, result: fitkit.FitResult, meta: dict) -> None:
    meta = dict(meta)
    meta.update(
        converged=result.converged,
        n_iter=result.n_iter,
        chi2_reduced=csvio.format_number(result.chi2_reduced),
        fit_message=result.message,
    )
    for key, value in result.extra.items():
        meta[f"fit_{key}"] = value
    rows = [
        (name, result.params[name], result.stderr.get(name, math.nan))
        for name in result.params
    ]
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append("parameter,value,stderr")
    for name, value, err in rows:
        lines.append(f"{name},{csvio.format_number(value)},{csvio.format_number(err)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_rabi_analytic(cfg, outdir, plot, threads):
    params = _params(cfg)
    drive = tls.Drive(cfg["rabi_ghz"], cfg["detuning_ghz"])
    grid = TimeGrid(0.0, cfg["tau_max_ns"], cfg["n_points"])
    mode = tls.resolve_mu_mode(cfg["mu_mode"])
    pop = tls.rabi_population_analytic(params, drive, grid.times(), mode)
    meta = _meta("rabi_analytic", cfg, mu_mode_resolved=mode)
    out = outdir / "rabi_analytic.csv"
    _write_curve(out, "tau_ns", "population", grid.times(), pop, meta)
    files = [out]
    if plot:
        fp = outdir / "rabi_analytic.svg"
        svgplot.line_plot(fp, grid.times(), [pop], title="damped Rabi population",
                          xlabel="tau (ns)", ylabel="population",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"rabi_analytic: Omega/2pi={cfg['rabi_ghz']} GHz, mu_mode={mode}, "
        f"P(0)={pop[0]:.3g}",
        files,
        {"tau": grid.times(), "population": pop},
    )


def _run_rabi_trace(cfg, outdir, plot, threads):
    params = _params(cfg)
    drive = tls.Drive(cfg["rabi_ghz"], cfg["detuning_ghz"])
    pulse = tls.PulseEnvelope(cfg["pulse_shape"], cfg["pulse_ns"], cfg["period_ns"],
                              cfg["rise_ns"])
    grid = TimeGrid(0.0, cfg["t_max_ns"], cfg["n_points"])
    trace = tls.rabi_trace_numeric(params, drive, pulse, grid)
    meta = _meta("rabi_trace", cfg)
    out = outdir / "rabi_trace.csv"
    _write_curve(out, "t_ns", "population", grid.times(), trace.values, meta)
    files = [out]
    if plot:
        fp = outdir / "rabi_trace.svg"
        svgplot.line_plot(fp, grid.times(), [trace.values], title="pulsed Rabi trace",
                          xlabel="t (ns)", ylabel="population",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"rabi_trace: Omega/2pi={cfg['rabi_ghz']} GHz, peak={trace.values.max():.4f}",
        files,
        {"trace": trace},
    )


def _run_detuning_map(cfg, outdir, plot, threads):
    params = _params(cfg)
    pulse = tls.PulseEnvelope("square", cfg["pulse_ns"], cfg["period_ns"])
    grid = TimeGrid(0.0, cfg["t_max_ns"], cfg["n_points"])
    detunings = np.linspace(cfg["detuning_min_ghz"], cfg["detuning_max_ghz"],
                            cfg["n_detunings"])
    rows = []
    peak_rows = []
    n_on = int(cfg["pulse_ns"] / grid.dt)
    for det in detunings:
        trace = tls.rabi_trace_numeric(
            params, tls.Drive(cfg["rabi_ghz"], float(det)), pulse, grid
        )
        on = trace.values[:n_on]
        sub = TimeTrace(TimeGrid(0.0, (n_on - 1) * grid.dt, n_on), on)
        spectrum, found = photostats.fft_peaks(sub, n_peaks=1)
        rows.append((det, trace))
        peak_rows.append(
            (det, found[0][0] if found else math.nan, spectrum.meta["bin_ghz"])
        )
    meta = _meta("detuning_map", cfg)
    out = outdir / "detuning_map.csv"
    csvio.write_csv(
        out,
        ["detuning_ghz", "t_ns", "population"],
        (
            (det, t, v)
            for det, trace in rows
            for t, v in zip(trace.grid.times(), trace.values)
        ),
        meta,
    )
    peaks_out = outdir / "detuning_fft_peaks.csv"
    csvio.write_csv(peaks_out, ["detuning_ghz", "peak_ghz", "bin_ghz"], peak_rows, meta)
    files = [out, peaks_out]
    if plot:
        fp = outdir / "detuning_map.svg"
        z = np.vstack([trace.values for _, trace in rows])
        svgplot.heatmap(fp, grid.times(), detunings, z, title="detuning map",
                        xlabel="t (ns)", ylabel="detuning (GHz)",
                        comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"detuning_map: {len(detunings)} detunings, Omega/2pi={cfg['rabi_ghz']} GHz",
        files,
        {"detunings": detunings, "peaks": peak_rows},
    )


def _run_g2(cfg, outdir, plot, threads):
    params = _params(cfg)
    drive = tls.Drive(cfg["rabi_ghz"], cfg["detuning_ghz"])
    grid = TimeGrid(0.0, cfg["tau_max_ns"], cfg["n_points"])
    trace = photostats.g2_curve(params, drive, grid)
    if cfg["irf_sigma_ns"] > 0:
        trace = photostats.apply_irf(trace, cfg["irf_sigma_ns"])
    meta = _meta("g2", cfg)
    out = outdir / "g2.csv"
    _write_curve(out, "tau_ns", "g2", trace.grid.times(), trace.values, meta)
    files = [out]
    if plot:
        fp = outdir / "g2.svg"
        svgplot.line_plot(fp, trace.grid.times(), [trace.values],
                          title="photon correlation", xlabel="tau (ns)", ylabel="g2",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    mid = np.argmin(np.abs(trace.grid.times()))
    return RunOutput(
        f"g2: Omega/2pi={cfg['rabi_ghz']} GHz, g2(0)={trace.values[mid]:.4f}",
        files,
        {"trace": trace},
    )


def _run_mollow_spectrum(cfg, outdir, plot, threads):
    params = _params(cfg)
    drive = tls.Drive(cfg["rabi_ghz"], cfg["detuning_ghz"])
    freqs = np.linspace(cfg["f_min_ghz"], cfg["f_max_ghz"], cfg["n_freqs"])
    spectrum = photostats.emission_spectrum(params, drive, freqs)
    meta = _meta("mollow_spectrum", cfg)
    out = outdir / "mollow_spectrum.csv"
    _write_curve(out, "freq_ghz", "intensity", spectrum.freq_ghz, spectrum.magnitude,
                 meta)
    files = [out]
    if plot:
        fp = outdir / "mollow_spectrum.svg"
        svgplot.line_plot(fp, spectrum.freq_ghz, [spectrum.magnitude],
                          title="emission spectrum", xlabel="freq - nu0 (GHz)",
                          ylabel="intensity",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"mollow_spectrum: Omega/2pi={cfg['rabi_ghz']} GHz, "
        f"{cfg['n_freqs']} frequencies",
        files,
        {"spectrum": spectrum},
    )


def _run_lineshape(cfg, outdir, plot, threads):
    params = _params(cfg)
    detunings = np.linspace(-cfg["span_ghz"] / 2, cfg["span_ghz"] / 2, cfg["n_points"])
    curve = tls.excitation_lineshape(params, cfg["rabi_ghz"], detunings)
    fit = fitkit.fit_lorentzian_fwhm(curve)
    meta = _meta("lineshape", cfg)
    out = outdir / "lineshape.csv"
    _write_curve(out, "detuning_ghz", "population", curve.x, curve.y, meta)
    report = outdir / "lineshape_fit.csv"
    _write_fit_report(report, fit, meta)
    files = [out, report]
    if plot:
        fp = outdir / "lineshape.svg"
        svgplot.line_plot(fp, curve.x, [curve.y], title="excitation lineshape",
                          xlabel="detuning (GHz)", ylabel="population",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"lineshape: FWHM={fit['fwhm'] * 1e3:.1f} MHz "
        f"(Omega/2pi={cfg['rabi_ghz']:.4g} GHz)",
        files,
        {"curve": curve, "fit": fit},
    )


def _run_autler_scan(cfg, outdir, plot, threads):
    lparams = _lambda_params(cfg)
    omega_c, omega_d = _lambda_rabis(cfg)
    deltas = np.linspace(cfg["delta_min_ghz"], cfg["delta_max_ghz"], cfg["n_points"])
    curve = lambda_system.probe_scan(lparams, omega_c, cfg["delta_c_ghz"], omega_d,
                                     deltas)
    try:
        splitting = lambda_system.dip_splitting(curve)
        split_text = f"splitting={splitting:.4f} GHz"
    except ModelError:
        splitting = math.nan
        split_text = "no Autler-Townes doublet"
    meta = _meta("autler_scan", cfg, omega_c_ghz_used=csvio.format_number(omega_c),
                 omega_d_ghz_used=csvio.format_number(omega_d))
    out = outdir / "autler_scan.csv"
    _write_curve(out, "delta_d_ghz", "fluorescence", curve.x, curve.y, meta)
    files = [out]
    if plot:
        fp = outdir / "autler_scan.svg"
        svgplot.line_plot(fp, curve.x, [curve.y], title="probe scan",
                          xlabel="delta_D (GHz)", ylabel="fluorescence",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"autler_scan: Omega_C/2pi={omega_c:.4f} GHz, {split_text}",
        files,
        {"curve": curve, "splitting": splitting, "omega_c": omega_c},
    )


def _run_autler_map(cfg, outdir, plot, threads):
    lparams = _lambda_params(cfg)
    omega_c, omega_d = _lambda_rabis(cfg)
    dcs = np.linspace(cfg["delta_c_min_ghz"], cfg["delta_c_max_ghz"], cfg["n_c"])
    dds = np.linspace(cfg["delta_d_min_ghz"], cfg["delta_d_max_ghz"], cfg["n_d"])
    fluor = lambda_system.at_map2d(lparams, omega_c, omega_d, dcs, dds,
                                   workers=threads)
    meta = _meta("autler_map", cfg, omega_c_ghz_used=csvio.format_number(omega_c),
                 omega_d_ghz_used=csvio.format_number(omega_d))
    out = outdir / "autler_map.csv"
    csvio.write_csv(out, ["delta_c_ghz", "delta_d_ghz", "fluorescence"],
                    csvio.matrix_rows(dcs, dds, fluor), meta)
    files = [out]
    if plot:
        fp = outdir / "autler_map.svg"
        svgplot.heatmap(fp, dds, dcs, fluor, title="Autler-Townes map",
                        xlabel="delta_D (GHz)", ylabel="delta_C (GHz)",
                        comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"autler_map: {cfg['n_c']}x{cfg['n_d']} points, "
        f"Omega_C/2pi={omega_c:.4f} GHz",
        files,
        {"dcs": dcs, "dds": dds, "fluor": fluor},
    )


def _run_pulsed_rabi(cfg, outdir, plot, threads):
    params = _params(cfg)
    calib = tls.PowerCalib(cfg["p_sat_nw"])
    pulse = tls.PulseEnvelope(cfg["pulse_shape"], cfg["pulse_ns"], cfg["period_ns"])
    p_max = cfg["p_max_nw"]
    if p_max <= 0:
        # two full sin^2 oscillations: pulse area up to ~4.2 pi
        omega_top = 4.2 * math.pi / pulse.area_factor()
        p_max = omega_top**2 * params.t1 * params.t2 * calib.p_sat_nw
    powers = np.linspace(0.0, p_max, cfg["n_powers"])
    curve = tls.pulsed_rabi_scan(params, pulse, powers, calib)
    fit = fitkit.fit_sine_sqrtp(np.column_stack([curve.x, curve.y]))
    meta = _meta("pulsed_rabi", cfg, p_max_nw_used=csvio.format_number(p_max))
    out = outdir / "pulsed_rabi.csv"
    _write_curve(out, "sqrt_power_nw", "population", curve.x, curve.y, meta)
    report = outdir / "pulsed_rabi_fit.csv"
    _write_fit_report(report, fit, meta)
    files = [out, report]
    if plot:
        fp = outdir / "pulsed_rabi.svg"
        svgplot.line_plot(fp, curve.x, [curve.y], title="pulsed Rabi scan",
                          xlabel="sqrt(P/nW)", ylabel="population",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"pulsed_rabi: first max {curve.y.max():.3f}, "
        f"sine period {fit['period']:.3f} sqrt(nW)",
        files,
        {"curve": curve, "fit": fit},
    )


def _run_ramsey(cfg, outdir, plot, threads):
    params = _params(cfg)
    pulse = tls.PulseEnvelope("square", cfg["pulse_ns"], cfg["period_ns"])
    meta = _meta("ramsey", cfg)
    files = []
    if cfg["scan"] == "fringe":
        phases = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
        pops = [
            ramsey.ramsey_population(
                params,
                ramsey.RamseySequence(pulse, cfg["fringe_tau_ns"], float(ph)),
                cfg["detuning_ghz"],
            )
            for ph in phases
        ]
        out = outdir / "ramsey_fringe.csv"
        _write_curve(out, "phase_rad", "population", phases, pops, meta)
        files.append(out)
        if plot:
            fp = outdir / "ramsey_fringe.svg"
            svgplot.line_plot(fp, phases, [pops], title="Ramsey fringe",
                              xlabel="relative phase (rad)", ylabel="population",
                              comment=f"config_hash={meta['config_hash']}")
            files.append(fp)
        return RunOutput(
            f"ramsey fringe at tau={cfg['fringe_tau_ns']} ns: "
            f"amplitude {(max(pops) - min(pops)) / 2:.3f}",
            files,
            {"phases": phases, "pops": np.array(pops)},
        )
    taus = np.linspace(0.0, cfg["tau_max_ns"], cfg["n_taus"])
    curve = ramsey.visibility_curve(params, pulse, taus, n_phases=cfg["n_phases"],
                                    detuning=cfg["detuning_ghz"])
    fit = fitkit.fit_exp_decay(curve)
    out = outdir / "ramsey_visibility.csv"
    _write_curve(out, "tau_ns", "visibility", curve.x, curve.y, meta)
    report = outdir / "ramsey_visibility_fit.csv"
    _write_fit_report(report, fit, meta)
    files.extend([out, report])
    if plot:
        fp = outdir / "ramsey_visibility.svg"
        svgplot.line_plot(fp, curve.x, [curve.y], title="Ramsey visibility",
                          xlabel="tau (ns)", ylabel="visibility",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"ramsey visibility: fitted decay {fit['tau_ns']:.3f} ns, "
        f"V(0)={curve.y[0]:.3f}",
        files,
        {"curve": curve, "fit": fit},
    )


def _run_lifetime(cfg, outdir, plot, threads):
    params = _params(cfg)
    grid = TimeGrid(0.0, cfg["t_max_ns"], cfg["n_points"])
    l = qdyn.build_liouvillian(np.zeros((2, 2)), tls.decay_jumps(params))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    rhos = qdyn.evolve(l, rho0, grid)
    pops = rhos[:, tls.EXCITED, tls.EXCITED].real
    fit = fitkit.fit_exp_decay(Curve(grid.times(), pops, xlabel="t_ns"))
    meta = _meta("lifetime", cfg)
    out = outdir / "lifetime.csv"
    _write_curve(out, "t_ns", "population", grid.times(), pops, meta)
    report = outdir / "lifetime_fit.csv"
    _write_fit_report(report, fit, meta)
    files = [out, report]
    if plot:
        fp = outdir / "lifetime.svg"
        svgplot.line_plot(fp, grid.times(), [pops], title="lifetime decay",
                          xlabel="t (ns)", ylabel="population",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"lifetime: fitted tau={fit['tau_ns']:.4f} ns",
        files,
        {"fit": fit},
    )


def _run_fit(cfg, outdir, plot, threads):
    _, header, data = csvio.read_csv(cfg["input"])
    if data.shape[0] < 2 or data.shape[1] < 2:
        raise ModelError(f"input {cfg['input']} has too few rows/columns to fit")
    x, y = data[:, 0], data[:, 1]
    model = cfg["fit_model"]
    if model == "rabi":
        dx = np.diff(x)
        if np.max(np.abs(dx - dx[0])) > 1e-9 * abs(dx[0]):
            raise ModelError("rabi fit needs a uniform x grid")
        trace = TimeTrace(TimeGrid(float(x[0]), float(x[-1]), x.size), y)
        result = fitkit.fit_rabi(trace, t1_fixed=cfg["t1_ns"], mu_mode=cfg["mu_mode"])
    elif model == "exp_decay":
        result = fitkit.fit_exp_decay(Curve(x, y))
    elif model == "lorentzian":
        result = fitkit.fit_lorentzian_fwhm(Curve(x, y))
    elif model == "linear_sqrtp":
        result = fitkit.fit_linear_sqrtp(np.column_stack([x, y]))
    else:
        result = fitkit.fit_sine_sqrtp(np.column_stack([x, y]))
    meta = _meta("fit", cfg)
    report = outdir / "fit_report.csv"
    _write_fit_report(report, result, meta)
    pretty = ", ".join(f"{k}={v:.6g}" for k, v in result.params.items())
    return RunOutput(
        f"fit {model}: {pretty} (converged={result.converged})",
        [report],
        {"fit": result},
    )


def _run_synth(cfg, outdir, plot, threads):
    _, header, data = csvio.read_csv(cfg["input"])
    x, y = data[:, 0], data[:, 1]
    dx = np.diff(x)
    if dx.size == 0 or np.max(np.abs(dx - dx[0])) > 1e-9 * abs(dx[0]):
        raise ModelError("synth input needs a uniform x grid")
    trace = TimeTrace(TimeGrid(float(x[0]), float(x[-1]), x.size), y)
    noise = synth.NoiseSpec(
        seed=cfg["seed"],
        scale=cfg["scale"],
        background_rate=cfg["background_rate"],
        irf_sigma=cfg["irf_sigma_ns"],
    )
    hist = synth.synth_counts(trace, noise)
    meta = _meta("synth", cfg)
    out = outdir / "synth_counts.csv"
    csvio.write_csv(out, [header[0], "counts"],
                    zip(hist.grid.times(), hist.counts), meta)
    files = [out]
    if plot:
        fp = outdir / "synth_counts.svg"
        svgplot.line_plot(fp, hist.grid.times(), [hist.counts],
                          title="synthetic counts", xlabel=header[0], ylabel="counts",
                          comment=f"config_hash={meta['config_hash']}")
        files.append(fp)
    return RunOutput(
        f"synth: {hist.counts.size} bins, peak {hist.counts.max()} counts "
        f"(seed {cfg['seed']})",
        files,
        {"hist": hist},
    )


RUNNERS = {
    "rabi_analytic": _run_rabi_analytic,
    "rabi_trace": _run_rabi_trace,
    "detuning_map": _run_detuning_map,
    "g2": _run_g2,
    "mollow_spectrum": _run_mollow_spectrum,
    "lineshape": _run_lineshape,
    "autler_scan": _run_autler_scan,
    "autler_map": _run_autler_map,
    "pulsed_rabi": _run_pulsed_rabi,
    "ramsey": _run_ramsey,
    "lifetime": _run_lifetime,
    "fit": _run_fit,
    "synth": _run_synth,
}


def default_outdir() -> Path:
    return Path(os.environ.get(OUT_ENV_VAR, "emitterlab_out"))


def run(
    config_path=None,
    experiment: str | None = None,
    outdir=None,
    plot: bool = False,
    seed: int | None = None,
    threads: int = 1,
    overrides: dict | None = None,
) -> int:
    """Run one experiment; returns the process exit code."""
    raw: dict = {}
    if config_path is not None:
        try:
            raw = load_config(config_path)
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items()})
    name = experiment or raw.get("experiment")
    if not name:
        print("error: config key 'experiment': missing", file=sys.stderr)
        return 2
    if experiment and "experiment" in raw and raw["experiment"] != experiment:
        print(
            f"error: config key 'experiment': '{raw['experiment']}' does not match "
            f"subcommand '{experiment}'",
            file=sys.stderr,
        )
        return 2
    if seed is not None and "seed" in EXPERIMENTS.get(name, {}):
        raw["seed"] = str(seed)
    try:
        cfg = validate_config(name, raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(outdir) if outdir is not None else default_outdir()
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = RUNNERS[name](cfg, out, plot, threads)
    except (NumericFailure, ModelError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: filesystem: {exc}", file=sys.stderr)
        return 1
    print(result.summary)
    return 0


# -- figure cookbook -----------------------------------------------------------


def _anchor(label, value, expected, tol):
    ok = abs(value - expected) <= tol
    return {
        "check": label,
        "value": value,
        "expected": expected,
        "tolerance": tol,
        "status": "PASS" if ok else "FAIL",
    }


def _flag(label, ok, value=math.nan):
    return {
        "check": label,
        "value": value,
        "expected": math.nan,
        "tolerance": math.nan,
        "status": "PASS" if ok else "FAIL",
    }


def reproduce_all(outdir=None, plot: bool = False, threads: int = 1) -> int:
    """Re-run every figure-style computation and check the headline anchors.

    Each sub-experiment writes its usual outputs into a per-figure folder;
    a summary table (stdout and summary.csv) compares extracted quantities
    against the expected values.  Returns 0 only if every run succeeds and
    every anchor passes.
    """
    out = Path(outdir) if outdir is not None else default_outdir()
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = 0

    oracle = tls.mu_mode_oracle()
    rows.append(_flag(f"mu_mode oracle selects '{oracle.mode}' "
                      f"(rms {oracle.rms_minus:.2e} vs {oracle.rms_plus:.2e})",
                      oracle.rms_minus < 1e-6))

    def step(label, experiment, overrides, checks):
        nonlocal failures
        subdir = out / label
        subdir.mkdir(parents=True, exist_ok=True)
        raw = {k: str(v) for k, v in overrides.items()}
        try:
            cfg = validate_config(experiment, raw)
            result = RUNNERS[experiment](cfg, subdir, plot, threads)
        except Exception as exc:  # keep going; report the failure
            failures += 1
            rows.append(_flag(f"{label}: run failed ({exc})", False))
            return None
        for check in checks(result):
            rows.append(check)
        return result

    # transform-limited linewidth at s = 0.01 in the radiative limit
    s_rabi = math.sqrt(0.01 / (1.85 * 3.7)) / (2 * math.pi)
    step(
        "linewidth_transform_limit", "lineshape",
        {"t2_ns": 3.7, "rabi_ghz": s_rabi, "span_ghz": 0.8, "n_points": 161},
        lambda r: [_anchor("transform-limited linewidth 86 MHz",
                           r.data["fit"]["fwhm"] * 1e3, 86.0, 0.03 * 86.0)],
    )

    step(
        "lifetime", "lifetime", {},
        lambda r: [_anchor("lifetime 1.85 ns", r.data["fit"]["tau_ns"], 1.85,
                           0.01 * 1.85)],
    )

    # saturated lineshape: the model's own power-broadening prediction
    step(
        "linewidth_saturation", "lineshape", {},
        lambda r: [_anchor(
            "saturated linewidth sqrt(2)/(pi T2)",
            r.data["fit"]["fwhm"],
            math.sqrt(2.0) / (math.pi * 1.62),
            0.03 * math.sqrt(2.0) / (math.pi * 1.62),
        )],
    )

    fitted = {}
    fitted_t2 = {}

    def rabi_checks(omega):
        def _checks(r):
            trace = r.data["trace"]
            n_on = int(5.0 / trace.grid.dt)
            sub = TimeTrace(TimeGrid(0.0, (n_on - 1) * trace.grid.dt, n_on),
                            trace.values[:n_on])
            fit = fitkit.fit_rabi(sub, t1_fixed=1.85)
            fitted[omega] = fit["omega_ghz"]
            fitted_t2[omega] = fit["t2_ns"]
            return [_anchor(f"time-resolved Rabi frequency {omega} GHz",
                            fit["omega_ghz"], omega, 0.02 * omega)]
        return _checks

    for omega in (0.906, 1.304, 1.854):
        step(f"rabi_trace_{omega}", "rabi_trace",
             {"rabi_ghz": omega, "n_points": 3001}, rabi_checks(omega))

    if len(fitted) == 3:
        pairs = [
            (om**2 * 1.85 * 1.62 * 20.0, fom) for om, fom in sorted(fitted.items())
        ]
        lin = fitkit.fit_linear_sqrtp(pairs)
        rows.append(_flag(
            f"Rabi frequency linear in sqrt(P) (R^2={lin.extra['r_squared']:.6f})",
            lin.extra["r_squared"] > 0.99))
        worst_t2 = max(abs(t - 1.62) for t in fitted_t2.values())
        rows.append(_flag(
            f"fitted T2 flat across drive powers (max deviation "
            f"{worst_t2 * 1e3:.1f} ps)",
            worst_t2 <= 0.05 * 1.62))

    def fft_checks(r):
        out_rows = []
        for det, peak, binw in r.data["peaks"]:
            expected = math.hypot(1.304, det)
            out_rows.append(_anchor(
                f"FFT component at sqrt(Omega^2+Delta^2), Delta={det:+.0f} GHz",
                peak, expected, binw))
        return out_rows

    step("detuning_fft", "detuning_map", {"n_detunings": 5}, fft_checks)

    g2_fitted = {}

    def g2_checks(psat_factor, omega):
        def _checks(r):
            trace = r.data["trace"]
            mid = np.argmin(np.abs(trace.grid.times()))
            fit = fitkit.fit_rabi(trace, t1_fixed=1.85)
            g2_fitted[psat_factor] = fit["omega_ghz"]
            return [
                _anchor("g2(0) = 0", trace.values[mid], 0.0, 1e-6),
                _anchor(f"g2 Rabi frequency at {psat_factor} Psat",
                        fit["omega_ghz"], omega, 0.02 * omega),
            ]
        return _checks

    calib = tls.PowerCalib(20.0)
    params_default = tls.TlsParams(1.85, 1.62)
    for psat_factor in (15.0, 30.0, 60.0):
        omega = tls.power_to_rabi(calib, params_default, psat_factor * 20.0)
        step(f"g2_{psat_factor:g}psat", "g2",
             {"rabi_ghz": omega, "tau_max_ns": 10.0, "n_points": 1001},
             g2_checks(psat_factor, omega))

    if len(g2_fitted) == 3:
        pairs = [(f * 20.0, om) for f, om in sorted(g2_fitted.items())]
        lin = fitkit.fit_linear_sqrtp(pairs)
        rows.append(_flag(
            f"g2 Rabi frequency linear in sqrt(P) (R^2={lin.extra['r_squared']:.6f})",
            lin.extra["r_squared"] > 0.99))

    splittings = {}

    def at_checks(omega_c):
        def _checks(r):
            splittings[omega_c] = r.data["splitting"]
            return [_anchor(f"Autler-Townes splitting ~ Omega_C = {omega_c} GHz",
                            r.data["splitting"], omega_c, 0.05 * omega_c)]
        return _checks

    for omega_c in (0.3, 0.5, 0.8):
        step(f"autler_scan_{omega_c}", "autler_scan",
             {"omega_c_ghz": omega_c, "omega_d_ghz": 0.02,
              "delta_min_ghz": -0.9, "delta_max_ghz": 0.9, "n_points": 361},
             at_checks(omega_c))

    if len(splittings) == 3:
        pairs = [
            (om**2 * 1.85 * 1.62 * 20.0, s) for om, s in sorted(splittings.items())
        ]
        lin = fitkit.fit_linear_sqrtp(pairs)
        rows.append(_flag(
            f"splitting linear in sqrt(pump power) "
            f"(R^2={lin.extra['r_squared']:.6f}, "
            f"intercept={lin['intercept']:.4f} GHz)",
            lin.extra["r_squared"] > 0.99 and abs(lin["intercept"]) < 0.02))

    def map_checks(r):
        dcs, dds, fluor = r.data["dcs"], r.data["dds"], r.data["fluor"]
        width = dds[1] - dds[0]
        worst = 0.0
        for i, dc in enumerate(dcs):
            window = np.where(np.abs(dds - dc) <= 0.35)[0]
            j = window[np.argmin(fluor[i, window])]
            worst = max(worst, abs(dds[j] - dc))
        return [_flag(
            f"dark-state valley on the diagonal (max offset {worst:.3f} GHz)",
            worst <= width * 1.001)]

    step("autler_map", "autler_map", {}, map_checks)

    def pulsed_checks(r):
        curve, fit = r.data["curve"], r.data["fit"]
        n_max = len([
            i for i in range(1, curve.y.size - 1)
            if curve.y[i] > curve.y[i - 1] and curve.y[i] > curve.y[i + 1]
            and curve.y[i] > 0.3
        ])
        pulse = tls.PulseEnvelope("square", 0.2, 12.5)
        omega_pi = math.pi / pulse.area_factor()
        # sin^2 completes one period when the pulse area grows by 2 pi, so
        # the period in sqrt(P) is twice the pi-pulse abscissa.
        expected_period = 2.0 * math.sqrt(omega_pi**2 * 1.85 * 1.62 * 20.0)
        return [
            _flag(f"pulsed Rabi shows >= 2 oscillations ({n_max} maxima)", n_max >= 2),
            _flag(f"first pulsed maximum >= 0.93 ({curve.y.max():.3f})",
                  curve.y.max() >= 0.93),
            _anchor("sine period matches pi-pulse calibration",
                    fit["period"], expected_period, 0.05 * expected_period),
        ]

    step("pulsed_rabi", "pulsed_rabi", {}, pulsed_checks)

    step("ramsey_fringe", "ramsey", {"scan": "fringe"},
         lambda r: [_flag("Ramsey fringe oscillates with optical phase",
                          (r.data["pops"].max() - r.data["pops"].min()) > 0.5)])

    def visibility_checks(r):
        return [
            _anchor("Ramsey visibility decay 0.78 ns", r.data["fit"]["tau_ns"],
                    0.78, 0.05 * 0.78),
            _flag(f"V(0) > 0.95 ({r.data['curve'].y[0]:.3f})",
                  r.data["curve"].y[0] > 0.95),
        ]

    step("ramsey_visibility", "ramsey", {}, visibility_checks)

    def mollow_checks(r):
        spectrum = r.data["spectrum"]
        from . import peaks as pk

        idx = pk.local_maxima(spectrum.magnitude, min_fraction=0.05)
        refined = sorted(
            pk.parabolic_refine(spectrum.freq_ghz, spectrum.magnitude, i)
            for i in idx
        )
        out_rows = [_flag(f"Mollow spectrum has 3 peaks ({len(refined)})",
                          len(refined) == 3)]
        if len(refined) == 3:
            out_rows.append(_anchor("Mollow sidebands at +/- Omega",
                                    refined[2][0], 2.0, 0.04))
            ratio = refined[1][1] / (0.5 * (refined[0][1] + refined[2][1]))
            out_rows.append(_anchor("Mollow center:sideband height 3:1",
                                    ratio, 3.0, 0.3))
        return out_rows

    step("mollow_spectrum", "mollow_spectrum", {"t2_ns": 3.7}, mollow_checks)

    n_fail = sum(1 for row in rows if row["status"] == "FAIL") + failures
    width = max(len(row["check"]) for row in rows)
    print(f"\nreproduction summary ({len(rows)} checks):")
    for row in rows:
        if math.isnan(row["expected"]):
            detail = ""
        else:
            detail = (f"  value={row['value']:.6g} expected={row['expected']:.6g} "
                      f"tol={row['tolerance']:.3g}")
        print(f"  {row['status']}  {row['check']:<{width}}{detail}")
    csvio.write_csv(
        out / "summary.csv",
        ["check", "value", "expected", "tolerance", "status"],
        ((r["check"], r["value"], r["expected"], r["tolerance"], r["status"])
         for r in rows),
        {"artifact_version": __version__, "mu_mode": oracle.mode,
         "n_checks": len(rows), "n_failed": n_fail},
    )
    print(f"summary written to {out / 'summary.csv'}"
          f" ({'all passed' if n_fail == 0 else f'{n_fail} FAILED'})")
    return 0 if n_fail == 0 else 1


# -- argument parsing ----------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="config file path")
    p.add_argument("--out", type=Path, default=None,
                   help=f"output directory (default ${OUT_ENV_VAR} or ./emitterlab_out)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for sweep experiments")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="emitterlab",
        description="Coherently driven emitter simulations: Rabi dynamics, photon "
                    "correlations, Mollow spectra, Autler-Townes scans and the "
                    "fits that extract their parameters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name.replace("_", "-"), help=f"run the {name} experiment")
        _add_common(p)
    p = sub.add_parser("run", help="run the experiment named in the config")
    _add_common(p)
    p = sub.add_parser("validate", help="check a config file without running")
    p.add_argument("--config", type=Path, required=True)
    p = sub.add_parser("reproduce-all", help="run the bundled figure cookbook")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            raw = load_config(args.config)
            name = raw.get("experiment")
            if not name:
                raise ConfigError("experiment", "missing")
            validate_config(name, raw)
        except (OSError, ConfigError) as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 2
        print(f"ok: valid '{name}' config")
        return 0
    if args.command == "reproduce-all":
        return reproduce_all(args.out, plot=args.plot, threads=args.threads)
    experiment = None if args.command == "run" else args.command.replace("-", "_")
    return run(
        config_path=args.config,
        experiment=experiment,
        outdir=args.out,
        plot=args.plot,
        seed=args.seed,
        threads=args.threads,
    )


if __name__ == "__main__":
    sys.exit(main())
