import numpy as np
import pytest

from emitterlab import lambda_system as lam
from emitterlab import qdyn
from emitterlab.errors import ModelError
from emitterlab.qdyn import Curve

OMEGA_SAT = 1.0 / (2 * np.pi * np.sqrt(1.85 * 1.62))


class TestLambdaLiouvillian:
    def test_undriven_relaxes_to_lower_ground(self):
        l = lam.lambda_liouvillian(lam.LambdaParams(), lam.LambdaDrive(0.0))
        rho = qdyn.steady_state(l)
        assert np.max(np.abs(rho - np.diag([1.0, 0.0, 0.0]))) < 1e-10

    def test_hamiltonian_is_hermitian(self):
        l = lam.lambda_liouvillian(
            lam.LambdaParams(), lam.LambdaDrive(0.4, 0.2, 0.1, -0.3)
        )
        assert np.max(np.abs(l.hamiltonian - l.hamiltonian.conj().T)) < 1e-12

    def test_dark_state_dip_at_two_photon_resonance(self):
        # with gamma_phi_g = 0 the fluorescence has a local minimum where
        # delta_D = delta_C
        params = lam.LambdaParams(gamma_phi_g=0.0)

        def fluor(dd):
            drive = lam.LambdaDrive(0.1, 0.05, 0.08, dd)
            rho = qdyn.steady_state(lam.lambda_liouvillian(params, drive))
            return rho[lam.E, lam.E].real

        at_resonance = fluor(0.05)
        assert fluor(0.05 - 0.04) > at_resonance
        assert fluor(0.05 + 0.04) > at_resonance
        # five linewidths away the dark state no longer suppresses emission
        assert fluor(0.05 + 0.5) > at_resonance

    def test_population_conserved_in_steady_states(self):
        rng = np.random.default_rng(4)
        params = lam.LambdaParams()
        for _ in range(20):
            drive = lam.LambdaDrive(
                rng.uniform(0.05, 1.0), rng.uniform(-1, 1),
                rng.uniform(0.01, 0.5), rng.uniform(-1, 1),
            )
            rho = qdyn.steady_state(lam.lambda_liouvillian(params, drive))
            assert abs(np.trace(rho).real - 1.0) < 1e-9

    def test_invalid_rates_rejected(self):
        with pytest.raises(ModelError):
            lam.LambdaParams(gamma_c=-0.1)
        with pytest.raises(ModelError):
            lam.LambdaDrive(-0.5)


class TestProbeScan:
    def test_weak_pump_single_dip_at_pump_detuning(self):
        curve = lam.probe_scan(
            lam.LambdaParams(), omega_c=0.03, delta_c=0.1, omega_d=0.01,
            delta_d_range=np.linspace(-0.5, 0.7, 241),
        )
        interior = slice(40, 200)
        i_min = np.argmin(curve.y[interior]) + 40
        assert curve.x[i_min] == pytest.approx(0.1, abs=0.01)

    def test_strong_pump_doublet_at_half_rabi(self):
        curve = lam.probe_scan(
            lam.LambdaParams(), omega_c=0.5, delta_c=0.0, omega_d=0.02,
            delta_d_range=np.linspace(-0.7, 0.7, 281),
        )
        maxima = sorted(
            np.argsort(curve.y)[-2:], key=lambda i: curve.x[i]
        )
        assert curve.x[maxima[0]] == pytest.approx(-0.25, abs=0.02)
        assert curve.x[maxima[1]] == pytest.approx(0.25, abs=0.02)
        assert lam.dip_splitting(curve) == pytest.approx(0.5, rel=0.05)

    def test_symmetric_when_pump_resonant(self):
        curve = lam.probe_scan(
            lam.LambdaParams(), omega_c=0.5, delta_c=0.0, omega_d=0.02,
            delta_d_range=np.linspace(-0.7, 0.7, 141),
        )
        assert np.max(np.abs(curve.y - curve.y[::-1])) < 1e-8

    def test_normalized_to_unit_maximum(self):
        curve = lam.probe_scan(
            lam.LambdaParams(), 0.5, 0.0, 0.02, np.linspace(-0.7, 0.7, 81)
        )
        assert np.max(curve.y) == pytest.approx(1.0)


class TestDipSplitting:
    @pytest.mark.parametrize("omega_c", [0.3, 0.5, 0.8])
    def test_splitting_tracks_pump_rabi(self, omega_c):
        curve = lam.probe_scan(
            lam.LambdaParams(), omega_c, 0.0, 0.02, np.linspace(-0.9, 0.9, 361)
        )
        assert lam.dip_splitting(curve) == pytest.approx(omega_c, rel=0.05)

    def test_linear_in_sqrt_pump_power(self):
        from emitterlab import fitkit

        pairs = []
        for omega_c in (0.3, 0.5, 0.8):
            curve = lam.probe_scan(
                lam.LambdaParams(), omega_c, 0.0, 0.02, np.linspace(-0.9, 0.9, 361)
            )
            power = omega_c**2 * 1.85 * 1.62 * 20.0  # s = Omega^2 T1 T2 convention
            pairs.append((power, lam.dip_splitting(curve)))
        fit = fitkit.fit_linear_sqrtp(pairs)
        assert fit.extra["r_squared"] > 0.99
        assert abs(fit["intercept"]) < 0.02

    def test_symmetric_curve_maxima_equidistant(self):
        x = np.linspace(-0.9, 0.9, 361)
        curve = lam.probe_scan(lam.LambdaParams(), 0.5, 0.0, 0.02, x)
        maxima = sorted(np.argsort(curve.y)[-2:])
        mid = np.argmin(curve.y[maxima[0] : maxima[1] + 1]) + maxima[0]
        left = curve.x[mid] - curve.x[maxima[0]]
        right = curve.x[maxima[1]] - curve.x[mid]
        assert abs(left - right) <= x[1] - x[0] + 1e-12

    def test_not_in_regime_rejected(self):
        x = np.linspace(-0.5, 0.5, 101)
        curve = Curve(x, np.exp(-((x / 0.1) ** 2)))
        with pytest.raises(ModelError, match="Autler-Townes"):
            lam.dip_splitting(curve)


class TestAtMap2d:
    def test_dark_valley_follows_diagonal(self):
        params = lam.LambdaParams()
        dcs = np.linspace(-1.0, 1.0, 41)
        dds = np.linspace(-1.0, 1.0, 41)
        fluor = lam.at_map2d(params, np.sqrt(20) * OMEGA_SAT,
                             np.sqrt(2.5) * OMEGA_SAT, dcs, dds)
        step = dds[1] - dds[0]
        for i, dc in enumerate(dcs):
            window = np.where(np.abs(dds - dc) <= 0.3)[0]
            j = window[np.argmin(fluor[i, window])]
            assert abs(dds[j] - dc) <= step * 1.001

    def test_map_conjugation_symmetry(self):
        params = lam.LambdaParams()
        dcs = np.linspace(-0.8, 0.8, 17)
        dds = np.linspace(-0.8, 0.8, 17)
        fluor = lam.at_map2d(params, 0.4, 0.15, dcs, dds)
        assert np.max(np.abs(fluor - fluor[::-1, ::-1])) < 1e-8

    def test_central_row_splitting_grows_with_pump(self):
        params = lam.LambdaParams()
        dds = np.linspace(-0.9, 0.9, 181)
        splittings = []
        for omega_c in (0.4, 0.8):
            row = lam.at_map2d(params, omega_c, 0.02, [0.0], dds)[0]
            curve = Curve(dds, row / row.max())
            splittings.append(lam.dip_splitting(curve))
        assert splittings[1] > splittings[0]

    def test_workers_give_identical_map(self):
        params = lam.LambdaParams()
        dcs = np.linspace(-0.5, 0.5, 7)
        dds = np.linspace(-0.5, 0.5, 9)
        serial = lam.at_map2d(params, 0.4, 0.1, dcs, dds, workers=1)
        threaded = lam.at_map2d(params, 0.4, 0.1, dcs, dds, workers=4)
        assert np.array_equal(serial, threaded)

    def test_relabeling_symmetry(self):
        # swapping pump/probe roles and branching rates mirrors the map
        # (needs gamma_ground = 0, which has no preferred ground state)
        params = lam.LambdaParams(gamma_c=0.2, gamma_d=0.34, gamma_ground=0.0)
        swapped = lam.LambdaParams(gamma_c=0.34, gamma_d=0.2, gamma_ground=0.0)
        dcs = np.linspace(-0.6, 0.6, 9)
        dds = np.linspace(-0.6, 0.6, 11)
        m1 = lam.at_map2d(params, 0.5, 0.21, dcs, dds)
        m2 = lam.at_map2d(swapped, 0.21, 0.5, dds, dcs)
        assert np.max(np.abs(m1 - m2.T)) < 1e-8
