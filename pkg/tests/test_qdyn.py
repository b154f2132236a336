import numpy as np
import pytest

from emitterlab import qdyn, tls
from emitterlab.errors import ModelError
from emitterlab.qdyn import TimeGrid

T1 = 1.85
RHO_E = np.diag([0.0, 1.0]).astype(complex)
RHO_G = np.diag([1.0, 0.0]).astype(complex)


def drive_liouvillian(t1, t2, rabi_ghz):
    return tls.tls_liouvillian(tls.TlsParams(t1, t2), tls.Drive(rabi_ghz))


class TestBuildLiouvillian:
    def test_zero_generator_maps_to_zero(self):
        l = qdyn.build_liouvillian(np.zeros((2, 2)), [])
        rho = np.array([[0.3, 0.1j], [-0.1j, 0.7]])
        assert np.max(np.abs(l.apply(rho))) == 0.0

    def test_coherence_decay_rate_is_half_gamma(self, decay_liouvillian):
        # d(rho_ge)/dt = -rho_ge / (2 T1) for pure radiative decay
        rho = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
        rhos = qdyn.evolve(decay_liouvillian, rho, TimeGrid(0.0, 2.0, 3))
        ratio = abs(rhos[-1][0, 1]) / 0.5
        assert ratio == pytest.approx(np.exp(-2.0 / (2.0 * T1)), abs=1e-9)
        assert 1.0 / (2.0 * T1) == pytest.approx(0.2703, abs=1e-4)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ModelError, match="shape"):
            qdyn.build_liouvillian(np.zeros((2, 2)), [np.zeros((3, 3))])

    def test_non_hermitian_hamiltonian_rejected(self):
        h = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ModelError, match="Hermitian"):
            qdyn.build_liouvillian(h, [])


class TestEvolve:
    def test_zero_generator_constant_trajectory(self):
        l = qdyn.build_liouvillian(np.zeros((2, 2)), [])
        rho0 = np.array([[0.25, 0.2], [0.2, 0.75]], dtype=complex)
        rhos = qdyn.evolve(l, rho0, TimeGrid(0.0, 5.0, 11))
        assert np.max(np.abs(rhos - rho0)) < 1e-14

    def test_undriven_decay_is_exponential(self, decay_liouvillian):
        rhos = qdyn.evolve(decay_liouvillian, RHO_E, TimeGrid(0.0, T1, 2))
        # rho_ee(T1) = 1/e = 0.3679
        assert rhos[-1][1, 1].real == pytest.approx(np.exp(-1.0), abs=1e-6)
        grid = TimeGrid(0.0, 10.0, 101)
        rhos = qdyn.evolve(decay_liouvillian, RHO_E, grid)
        expected = np.exp(-grid.times() / T1)
        assert np.max(np.abs(rhos[:, 1, 1].real - expected)) < 1e-8

    def test_long_time_matches_steady_state(self):
        l = drive_liouvillian(1.85, 1.62, 0.906)
        rho_ss = qdyn.steady_state(l)
        rhos = qdyn.evolve(l, RHO_G, TimeGrid(0.0, 60.0, 61))
        assert np.max(np.abs(rhos[-1] - rho_ss)) < 1e-6

    def test_invalid_initial_state_rejected(self, decay_liouvillian):
        with pytest.raises(ModelError, match="trace"):
            qdyn.evolve(decay_liouvillian, 2.0 * RHO_E, TimeGrid(0.0, 1.0, 2))

    def test_trajectory_invariants(self):
        # trace, Hermiticity and positivity at every sample
        l = drive_liouvillian(1.85, 1.62, 1.854)
        rhos = qdyn.evolve(l, RHO_G, TimeGrid(0.0, 12.0, 241))
        traces = np.trace(rhos, axis1=1, axis2=2)
        assert np.max(np.abs(traces - 1.0)) < 1e-9
        assert np.max(np.abs(rhos - np.conj(np.swapaxes(rhos, 1, 2)))) < 1e-10
        assert np.min(np.linalg.eigvalsh(rhos)) > -1e-9

    def test_rk4_convergence_order(self):
        # global error scales as dt^4 on the undriven analytic case
        jump = np.sqrt(1.0 / 0.5) * tls.SIGMA_MINUS
        l = qdyn.build_liouvillian(np.zeros((2, 2)), [jump])
        grid = TimeGrid(0.0, 1.0, 2)
        dts = np.array([0.1, 0.05, 0.025, 0.0125, 0.00625])
        errs = []
        for dt in dts:
            rhos = qdyn.evolve(l, RHO_E, grid, dt_int=dt, verify=False)
            errs.append(abs(rhos[-1][1, 1].real - np.exp(-1.0 / 0.5)))
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert 3.5 < slope < 4.5


class TestSteadyState:
    def test_undriven_decays_to_ground(self, decay_liouvillian):
        rho = qdyn.steady_state(decay_liouvillian)
        assert np.max(np.abs(rho - RHO_G)) < 1e-12

    def test_saturation_population(self):
        # s = Omega^2 T1 T2 = 1 gives rho_ee = s / (2 (1 + s)) = 0.25
        omega = 1.0 / np.sqrt(1.85 * 1.62) / (2 * np.pi)
        l = drive_liouvillian(1.85, 1.62, omega)
        rho = qdyn.steady_state(l)
        assert rho[1, 1].real == pytest.approx(0.25, abs=1e-12)
        # cross-check against long-time integration
        rhos = qdyn.evolve(l, RHO_G, TimeGrid(0.0, 80.0, 41))
        assert abs(rhos[-1][1, 1].real - 0.25) < 1e-6

    def test_strong_drive_saturates_to_half(self):
        l = drive_liouvillian(1.85, 1.62, 50.0)
        assert qdyn.steady_state(l)[1, 1].real == pytest.approx(0.5, abs=1e-3)

    def test_residual_below_tolerance(self):
        l = drive_liouvillian(1.85, 1.62, 0.5)
        rho = qdyn.steady_state(l)
        assert np.linalg.norm(l.matrix @ rho.reshape(-1)) < 1e-10

    def test_degenerate_subspace_rejected(self):
        # no jumps: every diagonal state is stationary
        l = qdyn.build_liouvillian(np.diag([0.0, 1.0]), [])
        with pytest.raises(ModelError, match="stationary"):
            qdyn.steady_state(l)

    def test_fixed_point_stays_fixed(self):
        l = drive_liouvillian(1.85, 1.62, 0.906)
        rho_ss = qdyn.steady_state(l)
        rhos = qdyn.evolve(l, rho_ss, TimeGrid(0.0, 10.0 * T1, 38))
        assert np.max(np.abs(rhos - rho_ss)) < 1e-8


class TestRegressionCorrelator:
    def test_identity_operators_give_unity(self):
        l = drive_liouvillian(1.85, 1.62, 0.906)
        rho_ss = qdyn.steady_state(l)
        eye = np.eye(2, dtype=complex)
        corr = qdyn.regression_correlator(l, rho_ss, eye, eye, eye,
                                          TimeGrid(0.0, 10.0, 51))
        assert np.max(np.abs(corr - 1.0)) < 1e-9

    def test_projected_ground_cannot_emit_at_zero_delay(self):
        l = drive_liouvillian(1.85, 1.62, 0.906)
        rho_ss = qdyn.steady_state(l)
        corr = qdyn.regression_correlator(
            l, rho_ss, tls.PROJ_EXCITED, tls.SIGMA_MINUS, tls.SIGMA_PLUS,
            TimeGrid(0.0, 1.0, 3),
        )
        assert abs(corr[0]) < 1e-14

    def test_matches_g2_curve(self):
        from emitterlab import photostats

        params = tls.TlsParams(1.85, 1.62)
        drive = tls.Drive(0.906)
        grid = TimeGrid(0.0, 8.0, 201)
        l = tls.tls_liouvillian(params, drive)
        rho_ss = qdyn.steady_state(l)
        corr = qdyn.regression_correlator(
            l, rho_ss, tls.PROJ_EXCITED, tls.SIGMA_MINUS, tls.SIGMA_PLUS, grid,
            dt_int=tls.internal_step(params, 2 * np.pi * 0.906),
        )
        normalized = corr.real / rho_ss[1, 1].real ** 2
        g2 = photostats.g2_curve(params, drive, grid)
        positive_half = g2.values[g2.grid.n_points // 2 :]
        assert np.max(np.abs(normalized - positive_half)) < 1e-9

    def test_non_stationary_state_rejected(self):
        l = drive_liouvillian(1.85, 1.62, 0.906)
        eye = np.eye(2, dtype=complex)
        with pytest.raises(ModelError, match="stationary"):
            qdyn.regression_correlator(l, RHO_G, eye, eye, eye,
                                       TimeGrid(0.0, 1.0, 3))


class TestNumericGuards:
    def test_step_underflow_rejected(self, decay_liouvillian):
        from emitterlab.errors import NumericFailure

        with pytest.raises(NumericFailure, match="underflow"):
            qdyn.evolve(decay_liouvillian, RHO_E, TimeGrid(0.0, 1.0, 2), dt_int=0.0)


class TestTimeGrid:
    def test_dt_and_times(self):
        grid = TimeGrid(0.0, 1.0, 11)
        assert grid.dt == pytest.approx(0.1)
        assert np.allclose(grid.times(), np.linspace(0, 1, 11))

    def test_invalid_grids_rejected(self):
        with pytest.raises(ModelError):
            TimeGrid(0.0, 1.0, 1)
        with pytest.raises(ModelError):
            TimeGrid(1.0, 0.0, 5)
