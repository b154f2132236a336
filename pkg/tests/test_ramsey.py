import numpy as np
import pytest

from emitterlab import fitkit, ramsey, tls
from emitterlab.errors import ModelError

PULSE = tls.PulseEnvelope("square", 0.01, 1.0)


class TestRamseyPopulation:
    def test_back_to_back_pulses_invert(self):
        params = tls.TlsParams(1.85, 1.62)
        seq = ramsey.RamseySequence(PULSE, 0.0, 0.0)
        assert ramsey.ramsey_population(params, seq) > 0.97

    def test_opposed_pulses_cancel(self):
        params = tls.TlsParams(1.85, 1.62)
        seq = ramsey.RamseySequence(PULSE, 0.0, np.pi)
        assert ramsey.ramsey_population(params, seq) < 0.03

    def test_phase_scan_is_sinusoidal(self):
        params = tls.TlsParams(1.85, 1.62)
        phases = np.linspace(0.0, 2 * np.pi, 24, endpoint=False)
        pops = np.array([
            ramsey.ramsey_population(params, ramsey.RamseySequence(PULSE, 0.4, p))
            for p in phases
        ])
        # project onto the fundamental: residual of mean + cos + sin is tiny
        design = np.column_stack([np.ones_like(phases), np.cos(phases),
                                  np.sin(phases)])
        coef, *_ = np.linalg.lstsq(design, pops, rcond=None)
        residual = pops - design @ coef
        assert np.max(np.abs(residual)) < 1e-4
        assert np.hypot(coef[1], coef[2]) > 0.1

    def test_two_pi_periodic(self):
        params = tls.TlsParams(1.85, 1.62)
        a = ramsey.ramsey_population(params, ramsey.RamseySequence(PULSE, 0.5, 1.234))
        b = ramsey.ramsey_population(
            params, ramsey.RamseySequence(PULSE, 0.5, 1.234 + 2 * np.pi)
        )
        assert abs(a - b) < 1e-10

    def test_negative_delay_rejected(self):
        with pytest.raises(ModelError):
            ramsey.RamseySequence(PULSE, -0.1)


class TestVisibilityCurve:
    def test_values_in_unit_interval_and_nonincreasing(self):
        params = tls.TlsParams(1.85, 0.78)
        curve = ramsey.visibility_curve(params, PULSE, np.linspace(0.0, 2.0, 9))
        assert np.all(curve.y >= 0.0) and np.all(curve.y <= 1.0)
        assert np.all(np.diff(curve.y) <= 1e-10)

    def test_full_visibility_at_zero_delay(self):
        params = tls.TlsParams(1.85, 0.78)
        curve = ramsey.visibility_curve(params, PULSE, [0.0])
        assert curve.y[0] > 0.95

    def test_decay_constant_recovered(self):
        # coherence decay 1/0.78 ns^-1 during free evolution
        params = tls.TlsParams(1.85, 0.78)
        curve = ramsey.visibility_curve(params, PULSE, np.linspace(0.0, 2.4, 13))
        fit = fitkit.fit_exp_decay(curve)
        assert fit.converged
        assert fit["tau_ns"] == pytest.approx(0.78, rel=0.05)

    def test_more_dephasing_less_visibility(self):
        taus = np.linspace(0.3, 1.5, 4)
        # doubling the pure dephasing rate at fixed t1
        base = tls.TlsParams(1.85, 1.0)
        gamma2 = 2 * base.gamma_phi + 0.5 / 1.85
        stronger = tls.TlsParams(1.85, 1.0 / gamma2)
        v1 = ramsey.visibility_curve(base, PULSE, taus)
        v2 = ramsey.visibility_curve(stronger, PULSE, taus)
        assert np.all(v2.y < v1.y)

    def test_too_few_phases_rejected(self):
        with pytest.raises(ModelError, match="16"):
            ramsey.visibility_curve(tls.TlsParams(1.85, 0.78), PULSE, [0.5],
                                    n_phases=8)
