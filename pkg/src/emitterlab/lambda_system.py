"""Three-level lambda system: strongly pumped transition C probed on D.

Basis: |g_C> = 0, |g_D> = 1, |e> = 2.  The two ground states couple to the
shared excited state; a doubly rotating frame with the rotating-wave
approximation leaves only detunings and Rabi couplings.  Steady-state
fluorescence scans show the coherent-population-trapping dip at two-photon
resonance and, under strong pumping, the Autler-Townes doublet.

All rates are configuration values.  The defaults are modeling choices:
equal branching gamma_c = gamma_d = 1/(2 t1), ground-state relaxation
1/40 ns^-1 (the slow cryogenic ground-state scale), no excited-state or
ground-coherence pure dephasing.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import peaks, qdyn
from .errors import ModelError
from .qdyn import Curve

TWO_PI = 2.0 * math.pi

G_C, G_D, E = 0, 1, 2

_DEFAULT_T1 = 1.85

# Informational level splittings (GHz); large enough that C and D are
# addressed independently, so no cross-driving terms appear in the RWA.
DELTA_E_GHZ = 410.0
DELTA_G_GHZ = 228.0


def _proj(i: int) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    m[i, i] = 1.0
    return m


def _lower(to: int, frm: int) -> np.ndarray:
    m = np.zeros((3, 3), dtype=complex)
    m[to, frm] = 1.0
    return m


@dataclass(frozen=True)
class LambdaParams:
    """Decay, relaxation and dephasing rates of the lambda system.

    gamma_c, gamma_d: radiative decay e -> g_C, e -> g_D (ns^-1).
    gamma_ground: relaxation g_D -> g_C (ns^-1).
    gamma_phi_e: excited-state pure dephasing (rad/ns).
    gamma_phi_g: ground-coherence pure dephasing (rad/ns); nonzero values
    fill in the dark-state dip.
    """

    gamma_c: float = 0.5 / _DEFAULT_T1
    gamma_d: float = 0.5 / _DEFAULT_T1
    gamma_ground: float = 1.0 / 40.0
    gamma_phi_e: float = 0.0
    gamma_phi_g: float = 0.0
    level_splittings: tuple = (DELTA_E_GHZ, DELTA_G_GHZ)

    def __post_init__(self):
        for name in ("gamma_c", "gamma_d", "gamma_ground", "gamma_phi_e", "gamma_phi_g"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0")
        if self.gamma_c + self.gamma_d <= 0:
            raise ModelError("total radiative decay gamma_c + gamma_d must be > 0")

    @classmethod
    def from_lifetime(cls, t1: float, **overrides) -> "LambdaParams":
        """Equal-branching parameters with gamma_c + gamma_d = 1/t1."""
        kwargs = {"gamma_c": 0.5 / t1, "gamma_d": 0.5 / t1}
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def t1(self) -> float:
        return 1.0 / (self.gamma_c + self.gamma_d)


@dataclass(frozen=True)
class LambdaDrive:
    """Pump (C) and probe (D) Rabi frequencies and detunings, GHz."""

    omega_c_ghz: float
    delta_c_ghz: float = 0.0
    omega_d_ghz: float = 0.0
    delta_d_ghz: float = 0.0

    def __post_init__(self):
        if self.omega_c_ghz < 0 or self.omega_d_ghz < 0:
            raise ModelError("Rabi frequencies must be >= 0")


def lambda_liouvillian(params: LambdaParams, drive: LambdaDrive) -> qdyn.Liouvillian:
    """Doubly-rotating-frame RWA generator of the driven lambda system."""
    d_c = TWO_PI * drive.delta_c_ghz
    d_d = TWO_PI * drive.delta_d_ghz
    o_c = TWO_PI * drive.omega_c_ghz
    o_d = TWO_PI * drive.omega_d_ghz
    h = (
        -d_c * _proj(E)
        + (d_d - d_c) * _proj(G_D)
        + 0.5 * o_c * (_lower(E, G_C) + _lower(G_C, E))
        + 0.5 * o_d * (_lower(E, G_D) + _lower(G_D, E))
    )
    jumps = []
    if params.gamma_c > 0:
        jumps.append(math.sqrt(params.gamma_c) * _lower(G_C, E))
    if params.gamma_d > 0:
        jumps.append(math.sqrt(params.gamma_d) * _lower(G_D, E))
    if params.gamma_ground > 0:
        jumps.append(math.sqrt(params.gamma_ground) * _lower(G_C, G_D))
    if params.gamma_phi_e > 0:
        jumps.append(math.sqrt(2.0 * params.gamma_phi_e) * _proj(E))
    if params.gamma_phi_g > 0:
        jumps.append(math.sqrt(2.0 * params.gamma_phi_g) * _proj(G_D))
    return qdyn.build_liouvillian(h, jumps)


def _steady_fluorescence(params: LambdaParams, drive: LambdaDrive) -> float:
    rho = qdyn.steady_state(lambda_liouvillian(params, drive))
    return (params.gamma_c + params.gamma_d) * rho[E, E].real


def probe_scan(
    params: LambdaParams,
    omega_c: float,
    delta_c: float,
    omega_d: float,
    delta_d_range: Sequence[float],
) -> Curve:
    """Normalized steady-state fluorescence versus probe detuning (GHz)."""
    deltas = np.asarray(delta_d_range, dtype=float)
    signal = np.array(
        [
            _steady_fluorescence(
                params,
                LambdaDrive(
                    omega_c_ghz=omega_c,
                    delta_c_ghz=delta_c,
                    omega_d_ghz=omega_d,
                    delta_d_ghz=dd,
                ),
            )
            for dd in deltas
        ]
    )
    peak = np.max(signal)
    if peak <= 0:
        raise ModelError("no fluorescence in scan; check drive amplitudes")
    meta = {
        "omega_c_ghz": omega_c,
        "delta_c_ghz": delta_c,
        "omega_d_ghz": omega_d,
        "ylabel": "fluorescence",
    }
    return Curve(x=deltas, y=signal / peak, xlabel="delta_d_ghz", meta=meta)


def at_map2d(
    params: LambdaParams,
    omega_c: float,
    omega_d: float,
    delta_c_range: Sequence[float],
    delta_d_range: Sequence[float],
    workers: int = 1,
) -> np.ndarray:
    """Steady-state fluorescence on a (delta_C, delta_D) grid.

    Rows follow ``delta_c_range`` ascending, columns ``delta_d_range``
    ascending.  Rows are independent; ``workers > 1`` computes them in a
    thread pool.
    """
    dcs = np.asarray(delta_c_range, dtype=float)
    dds = np.asarray(delta_d_range, dtype=float)

    def row(dc: float) -> np.ndarray:
        return np.array(
            [
                _steady_fluorescence(
                    params,
                    LambdaDrive(
                        omega_c_ghz=omega_c,
                        delta_c_ghz=dc,
                        omega_d_ghz=omega_d,
                        delta_d_ghz=dd,
                    ),
                )
                for dd in dds
            ]
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, dcs))
    else:
        rows = [row(dc) for dc in dcs]
    return np.vstack(rows)


def dip_splitting(curve: Curve) -> float:
    """Separation (GHz) of the two fluorescence maxima of a probe scan.

    Each maximum is refined by parabolic interpolation.  Raises
    :class:`ModelError` when the curve is not in the two-maxima
    Autler-Townes regime.
    """
    maxima = peaks.local_maxima(curve.y, min_fraction=0.05)
    if len(maxima) < 2:
        raise ModelError(
            "not in Autler-Townes regime: fewer than two fluorescence maxima"
        )
    maxima.sort(key=lambda i: -curve.y[i])
    left, right = sorted(maxima[:2])
    if not np.any(curve.y[left : right + 1] < min(curve.y[left], curve.y[right])):
        raise ModelError("no dip between the two fluorescence maxima")
    x1, _ = peaks.parabolic_refine(curve.x, curve.y, left)
    x2, _ = peaks.parabolic_refine(curve.x, curve.y, right)
    return abs(x2 - x1)
