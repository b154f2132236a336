"""Photon-statistics observables of the driven emitter.

g2 correlation curves via the quantum regression theorem, Gaussian
detector-response convolution, windowed FFT peak extraction for Rabi
traces, and the incoherent resonance-fluorescence (Mollow) spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import peaks, qdyn, tls
from .errors import ModelError, NumericFailure
from .qdyn import TimeGrid, TimeTrace
from .tls import (
    EXCITED,
    PROJ_EXCITED,
    SIGMA_MINUS,
    SIGMA_PLUS,
    TWO_PI,
    Drive,
    TlsParams,
)

# Gaussian IRF kernels are truncated at this many standard deviations; the
# excluded mass (~6e-7) stays within the integral-preservation tolerance.
_KERNEL_CUTOFF_SIGMAS = 5.0
# Emission-spectrum correlator span in units of the slower coherence time.
_SPECTRUM_SPAN_T2 = 40.0


@dataclass
class Spectrum:
    """Magnitude spectrum on a strictly increasing frequency axis (GHz)."""

    freq_ghz: np.ndarray
    magnitude: np.ndarray
    kind: str = "fft_of_trace"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freq_ghz = np.asarray(self.freq_ghz, dtype=float)
        self.magnitude = np.asarray(self.magnitude, dtype=float)
        if self.freq_ghz.shape != self.magnitude.shape:
            raise ModelError("spectrum axis and magnitude lengths differ")
        if np.any(np.diff(self.freq_ghz) <= 0):
            raise ModelError("spectrum frequency axis must be strictly increasing")
        if np.any(self.magnitude < 0):
            raise ModelError("spectrum magnitude must be nonnegative")


def g2_curve(params: TlsParams, drive: Drive, grid: TimeGrid) -> TimeTrace:
    """Second-order correlation g2(tau), two-sided by even reflection.

    g2(tau) = Tr[P_e exp(L tau)(sigma- rho_ss sigma+)] / rho_ee_ss^2 for
    tau >= 0 on ``grid`` (which must start at 0), mirrored to negative
    delays.  g2(0) = 0 for this single emitter and g2 -> 1 at large delay.
    """
    if abs(grid.t_start) > 1e-12:
        raise ModelError("g2 grid must start at tau = 0")
    l = tls.tls_liouvillian(params, drive)
    rho_ss = qdyn.steady_state(l)
    p_ee = rho_ss[EXCITED, EXCITED].real
    if p_ee < 1e-12:
        raise ModelError("undriven emitter has no correlation function")
    corr = qdyn.regression_correlator(
        l,
        rho_ss,
        PROJ_EXCITED,
        SIGMA_MINUS,
        SIGMA_PLUS,
        grid,
        dt_int=tls.internal_step(params, TWO_PI * tls.generalized_rabi(drive)),
    )
    if np.max(np.abs(corr.imag)) > 1e-8:
        raise NumericFailure("g2 correlator acquired an imaginary part")
    g2 = corr.real / p_ee**2
    if np.min(g2) < -1e-9:
        raise NumericFailure(f"g2 went negative: min {np.min(g2):.3e}")
    g2 = np.maximum(g2, 0.0)
    values = np.concatenate([g2[:0:-1], g2])
    full_grid = TimeGrid(-grid.t_end, grid.t_end, 2 * grid.n_points - 1)
    meta = {
        "t1_ns": params.t1,
        "t2_ns": params.t2,
        "rabi_ghz": drive.rabi_ghz,
        "detuning_ghz": drive.detuning_ghz,
        "rho_ee_ss": p_ee,
        "ylabel": "g2",
    }
    return TimeTrace(grid=full_grid, values=values, meta=meta)


def apply_irf(trace: TimeTrace, sigma: float) -> TimeTrace:
    """Convolve a trace with a unit-area Gaussian detector response.

    The data is zero-extended, so the output grid grows by the kernel
    half-width on each side and the total integral is preserved.
    ``sigma = 0`` returns an identical copy.
    """
    if sigma < 0:
        raise ModelError(f"irf sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return TimeTrace(grid=trace.grid, values=trace.values.copy(), meta=dict(trace.meta))
    span = trace.grid.t_end - trace.grid.t_start
    if sigma > span / 4.0:
        raise ModelError(
            f"irf sigma {sigma} exceeds a quarter of the trace span {span}"
        )
    dt = trace.grid.dt
    half_width = int(math.ceil(_KERNEL_CUTOFF_SIGMAS * sigma / dt))
    offsets = np.arange(-half_width, half_width + 1) * dt
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    values = np.convolve(trace.values, kernel, mode="full")
    grid = TimeGrid(
        trace.grid.t_start - half_width * dt,
        trace.grid.t_end + half_width * dt,
        trace.grid.n_points + 2 * half_width,
    )
    meta = dict(trace.meta)
    meta["irf_sigma_ns"] = sigma
    return TimeTrace(grid=grid, values=values, meta=meta)


def fft_peaks(trace: TimeTrace, window: str = "hann", n_peaks: int = 3):
    """Windowed magnitude spectrum of a trace plus its strongest peaks.

    The trace mean is removed, a Hann window applied and the FFT zero-padded
    4x.  Peaks are interior local maxima above 5% of the global maximum,
    refined by 3-point parabolic interpolation and returned as
    (freq_ghz, magnitude) tuples sorted by magnitude (ties toward lower
    frequency).

    Returns
    -------
    (Spectrum, list of (float, float))
    """
    if window != "hann":
        raise ModelError(f"only the 'hann' window is supported, got '{window}'")
    y = trace.values - np.mean(trace.values)
    n = y.size
    n_fft = 4 * n
    mag = np.abs(np.fft.rfft(y * np.hanning(n), n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=trace.grid.dt)
    spectrum = Spectrum(
        freq_ghz=freqs,
        magnitude=mag,
        kind="fft_of_trace",
        meta={"bin_ghz": freqs[1] if freqs.size > 1 else 0.0, "window": "hann"},
    )
    if np.max(mag) <= 0.0:
        return spectrum, []
    found = []
    for i in peaks.local_maxima(mag, min_fraction=0.05):
        f, m = peaks.parabolic_refine(freqs, mag, i)
        found.append((f, m))
    found.sort(key=lambda fm: (-fm[1], fm[0]))
    return spectrum, found[:n_peaks]


def emission_spectrum(params: TlsParams, drive: Drive, freq_range) -> Spectrum:
    """Incoherent resonance-fluorescence spectrum relative to the bare line.

    Fourier transform of the stationary dipole correlator
    <sigma+(tau) sigma-(0)> with the coherent (mean-field) contribution
    subtracted, evaluated at the requested frequencies (GHz, relative to
    the transition frequency).  Under strong drive this produces the
    three-peaked Mollow structure at Delta and Delta +/- Omega_g.
    """
    freq = np.asarray(freq_range, dtype=float)
    if freq.size < 3 or np.any(np.diff(freq) <= 0):
        raise ModelError("freq_range must be increasing with at least 3 points")
    l = tls.tls_liouvillian(params, drive)
    rho_ss = qdyn.steady_state(l)
    span = _SPECTRUM_SPAN_T2 * max(params.t2, params.t1)
    f_rot_max = max(np.max(np.abs(freq - drive.detuning_ghz)), 1.0)
    d_tau = min(0.01, 1.0 / (25.0 * f_rot_max))
    n_tau = int(math.ceil(span / d_tau)) + 1
    grid = TimeGrid(0.0, span, n_tau)
    corr = qdyn.regression_correlator(
        l,
        rho_ss,
        SIGMA_PLUS,
        SIGMA_MINUS,
        np.eye(2),
        grid,
        dt_int=tls.internal_step(params, TWO_PI * tls.generalized_rabi(drive)),
    )
    coherent = np.trace(SIGMA_PLUS @ rho_ss) * np.trace(SIGMA_MINUS @ rho_ss)
    c_inc = corr - coherent
    tau = grid.times()
    weights = np.full(n_tau, grid.dt)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    omega_rot = TWO_PI * (freq - drive.detuning_ghz)
    s = 2.0 * np.real(np.exp(-1j * np.outer(omega_rot, tau)) @ (c_inc * weights))
    floor = -1e-6 * max(np.max(s), 1e-300)
    if np.min(s) < floor:
        raise NumericFailure(
            f"emission spectrum went negative beyond tolerance: {np.min(s):.3e}"
        )
    s = np.maximum(s, 0.0)
    meta = {
        "t1_ns": params.t1,
        "t2_ns": params.t2,
        "rabi_ghz": drive.rabi_ghz,
        "detuning_ghz": drive.detuning_ghz,
        "coherent_part_subtracted": True,
        "correlator_span_ns": span,
    }
    return Spectrum(freq_ghz=freq, magnitude=s, kind="emission", meta=meta)
