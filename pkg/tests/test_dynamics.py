"""Tests for the calibration-experiment simulators.

The flopping model is checked against a brute-force oracle that builds
the displacement operator by matrix exponentiation in a large Fock
basis, with no Laguerre polynomials involved; the remaining simulators
are checked against closed forms evaluated independently here.
"""

import math

import numpy as np
import pytest
import scipy.constants as const
import scipy.linalg
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from surftrap.dynamics import (
    CARRIER,
    DetectionModel,
    FlopDataset,
    FlopGuess,
    FrequencyDrift,
    RamanGeometry,
    SpinMotionState,
    ThermalMode,
    bsb,
    exchange_rate,
    fit_flopping,
    flop_signal,
    heating_evolution,
    lamb_dicke,
    micromotion_analysis,
    ramp_check,
    rsb,
    sideband_thermometry,
    simulate_detection,
    tickle_response,
)
from surftrap.trap import MG25, ModeInstabilityError, ModeStructure, RFDrive

OMEGA_26 = 2 * np.pi * 2.6e6
DK_X = RamanGeometry.crossed_beams([1.0, 0.0, 0.0])


def displacement_matrix(eta, dim):
    """exp(i eta (a + a^dag)) by dense matrix exponentiation."""
    ladder = np.sqrt(np.arange(1, dim))
    x_op = np.diag(ladder, 1) + np.diag(ladder, -1)
    return scipy.linalg.expm(1j * eta * x_op)


def thermal_populations(nbar, n_top):
    n = np.arange(n_top + 1)
    p = (nbar / (1.0 + nbar)) ** n / (1.0 + nbar)
    return p / p.sum()


class TestRamanGeometry:
    def test_default_crossing_magnitude(self):
        expected = np.sqrt(2.0) * 2 * np.pi / 280e-9
        assert np.linalg.norm(DK_X.delta_k) == pytest.approx(expected,
                                                             rel=1e-12)

    def test_counterpropagating_magnitude(self):
        geom = RamanGeometry.crossed_beams([0, 1, 0], crossing_angle=np.pi)
        assert np.linalg.norm(geom.delta_k) == pytest.approx(
            2.0 * 2 * np.pi / 280e-9, rel=1e-12)

    def test_rejects_zero_delta_k(self):
        with pytest.raises(ValueError):
            RamanGeometry(delta_k=np.zeros(3))


class TestThermalMode:
    def test_auto_cutoff_floor(self):
        mode = ThermalMode.thermal(OMEGA_26, nbar=0.0)
        assert mode.fock_cutoff == 20
        assert mode.populations[0] == 1.0

    def test_auto_cutoff_tail(self):
        for nbar in (0.05, 0.6, 3.0, 10.0):
            mode = ThermalMode.thermal(OMEGA_26, nbar=nbar)
            assert mode.fock_cutoff >= 20
            assert mode.tail_mass < 1e-6
            assert mode.populations.sum() == pytest.approx(1.0, abs=1e-12)

    def test_thermal_shape(self):
        mode = ThermalMode.thermal(OMEGA_26, nbar=0.6)
        expected = thermal_populations(0.6, mode.fock_cutoff)
        assert np.allclose(mode.populations, expected, rtol=1e-12)

    def test_explicit_small_cutoff_records_tail(self):
        mode = ThermalMode.thermal(OMEGA_26, nbar=2.0, fock_cutoff=5)
        assert mode.tail_mass > 1e-2
        assert mode.populations.sum() == pytest.approx(1.0, abs=1e-12)

    def test_from_populations_mean(self):
        mode = ThermalMode.from_populations(OMEGA_26, [0.5, 0.0, 0.5])
        assert mode.nbar == pytest.approx(1.0)
        assert mode.tail_mass == 0.0

    def test_rejects_negative_population(self):
        with pytest.raises(ValueError):
            ThermalMode.from_populations(OMEGA_26, [1.2, -0.2])

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            ThermalMode(omega=OMEGA_26, vector=(1, 0, 0), nbar=0.0,
                        populations=np.array([0.5, 0.2]))

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValueError):
            ThermalMode.thermal(0.0, nbar=0.1)


class TestSpinMotionState:
    def test_prepared_up(self):
        state = SpinMotionState.prepared_up([ThermalMode.thermal(OMEGA_26, 0.1)])
        assert state.spin == (0.0, 1.0)

    def test_rejects_unnormalized_spin(self):
        with pytest.raises(ValueError):
            SpinMotionState(spin=(0.6, 0.6), modes=())

    def test_rejects_non_mode(self):
        with pytest.raises(TypeError):
            SpinMotionState(spin=(0.0, 1.0), modes=(object(),))


class TestLambDicke:
    def test_against_scalar_recomputation(self):
        # 5.3 MHz mode along x, 280 nm beams at 90 degrees
        mode = ThermalMode.thermal(2 * np.pi * 5.3e6, 0.0, vector=(1, 0, 0))
        ld = lamb_dicke(DK_X, mode, MG25)
        dk = np.sqrt(2.0) * 2 * np.pi / 280e-9
        x0 = math.sqrt(const.hbar / (2.0 * MG25.mass * 2 * np.pi * 5.3e6))
        assert ld.eta == pytest.approx(dk * x0, rel=1e-12)
        assert ld.eta == pytest.approx(0.20, abs=0.01)
        assert ld.angle_deg == pytest.approx(0.0, abs=1e-9)

    def test_perpendicular_mode_decouples(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.0, vector=(0, 0, 1))
        ld = lamb_dicke(DK_X, mode, MG25)
        assert ld.eta == 0.0
        assert ld.angle_deg == pytest.approx(90.0)

    def test_angle_folds_to_first_quadrant(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.0, vector=(-1, 0, 0))
        ld = lamb_dicke(DK_X, mode, MG25)
        assert ld.angle_deg == pytest.approx(0.0, abs=1e-6)
        assert ld.eta > 0

    def test_frequency_scaling(self):
        m1 = ThermalMode.thermal(OMEGA_26, 0.0, vector=(1, 0, 0))
        m2 = ThermalMode.thermal(2 * OMEGA_26, 0.0, vector=(1, 0, 0))
        r = lamb_dicke(DK_X, m2, MG25).eta / lamb_dicke(DK_X, m1, MG25).eta
        assert r == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-12)

    def test_rejects_zero_vector(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.0, vector=(0.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            lamb_dicke(DK_X, mode, MG25)


class TestFlopSignal:
    RABI = 2 * np.pi * 100e3

    def test_bsb_matches_fock_brute_force(self):
        # thermal nbar = 0.6 summed explicitly to n = 200
        eta = 0.2
        mode = ThermalMode.thermal(OMEGA_26, 0.6, fock_cutoff=200)
        state = SpinMotionState.prepared_up([mode])
        t = np.linspace(0.0, 120e-6, 160)
        signal = flop_signal(state, bsb(0), self.RABI, [eta], t)
        disp = displacement_matrix(eta, 261)
        pops = thermal_populations(0.6, 200)
        oracle = np.zeros_like(t)
        for n in range(201):
            omega_n = self.RABI * abs(disp[n + 1, n])
            oracle += pops[n] * np.sin(0.5 * omega_n * t) ** 2
        assert np.abs(signal - oracle).max() < 1e-8

    def test_rsb_matches_fock_brute_force(self):
        eta = 0.25
        mode = ThermalMode.thermal(OMEGA_26, 0.3, fock_cutoff=150)
        state = SpinMotionState.prepared_up([mode])
        t = np.linspace(0.0, 150e-6, 120)
        signal = flop_signal(state, rsb(0), self.RABI, [eta], t)
        disp = displacement_matrix(eta, 211)
        pops = thermal_populations(0.3, 150)
        oracle = np.zeros_like(t)
        for n in range(1, 151):
            omega_n = self.RABI * abs(disp[n - 1, n])
            oracle += pops[n] * np.sin(0.5 * omega_n * t) ** 2
        assert np.abs(signal - oracle).max() < 1e-8

    def test_carrier_matches_fock_brute_force(self):
        eta = 0.3
        mode = ThermalMode.thermal(OMEGA_26, 0.6, fock_cutoff=200)
        state = SpinMotionState.prepared_up([mode])
        t = np.linspace(0.0, 40e-6, 90)
        signal = flop_signal(state, CARRIER, self.RABI, [eta], t)
        disp = displacement_matrix(eta, 261)
        pops = thermal_populations(0.6, 200)
        oracle = np.zeros_like(t)
        for n in range(201):
            omega_n = self.RABI * abs(disp[n, n])
            oracle += pops[n] * np.sin(0.5 * omega_n * t) ** 2
        assert np.abs(signal - oracle).max() < 1e-8

    def test_two_mode_debye_waller_brute_force(self):
        # BSB on mode 0 with mode 1 as spectator
        etas = (0.22, 0.15)
        modes = [ThermalMode.thermal(OMEGA_26, 0.3, fock_cutoff=60),
                 ThermalMode.thermal(1.7 * OMEGA_26, 0.1, fock_cutoff=40)]
        state = SpinMotionState.prepared_up(modes)
        t = np.linspace(0.0, 100e-6, 60)
        signal = flop_signal(state, bsb(0), self.RABI, etas, t)
        d0 = displacement_matrix(etas[0], 101)
        d1 = displacement_matrix(etas[1], 81)
        p0 = thermal_populations(0.3, 60)
        p1 = thermal_populations(0.1, 40)
        oracle = np.zeros_like(t)
        for n0 in range(61):
            for n1 in range(41):
                omega_n = self.RABI * abs(d0[n0 + 1, n0]) * abs(d1[n1, n1])
                oracle += p0[n0] * p1[n1] * np.sin(0.5 * omega_n * t) ** 2
        assert np.abs(signal - oracle).max() < 1e-8

    def test_ground_state_rsb_is_flat(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.0)
        t = np.linspace(0.0, 50e-6, 40)
        up = flop_signal(SpinMotionState.prepared_up([mode]), rsb(0),
                         self.RABI, [0.2], t)
        down = flop_signal(SpinMotionState.prepared_down([mode]), rsb(0),
                           self.RABI, [0.2], t)
        assert np.all(up == 0.0)
        assert np.all(down == 1.0)

    def test_carrier_pi_pulse_flips_completely(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.0)
        state = SpinMotionState.prepared_up([mode])
        eta = 0.15
        rabi_eff = self.RABI * np.exp(-0.5 * eta**2)
        p = flop_signal(state, CARRIER, self.RABI, [eta], np.pi / rabi_eff)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_zero_eta_reduces_to_two_level(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.6)
        state = SpinMotionState.prepared_up([mode])
        t = np.linspace(0.0, 30e-6, 50)
        p = flop_signal(state, CARRIER, self.RABI, [0.0], t)
        assert np.allclose(p, np.sin(0.5 * self.RABI * t) ** 2, atol=1e-12)

    def test_small_eta_sideband_rate(self):
        # Lamb-Dicke regime: BSB Rabi ~ rabi_0 eta sqrt(n+1)
        eta = 1e-4
        n_start = 3
        pops = np.zeros(10)
        pops[n_start] = 1.0
        mode = ThermalMode.from_populations(OMEGA_26, pops)
        state = SpinMotionState.prepared_up([mode])
        expected = self.RABI * eta * np.sqrt(n_start + 1.0)
        t_probe = 0.1 / expected
        p = flop_signal(state, bsb(0), self.RABI, [eta], t_probe)
        measured = 2.0 * np.arcsin(np.sqrt(p)) / t_probe
        assert measured == pytest.approx(expected, rel=1e-6)

    def test_mixture_preparation_interpolates(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.2)
        t = np.linspace(0.0, 20e-6, 30)
        up = flop_signal(SpinMotionState.prepared_up([mode]), CARRIER,
                         self.RABI, [0.1], t)
        mixed = flop_signal(SpinMotionState(spin=(0.25, 0.75), modes=(mode,)),
                            CARRIER, self.RABI, [0.1], t)
        assert np.allclose(mixed, 0.25 + 0.5 * up, atol=1e-12)

    def test_rejects_undersized_cutoff(self):
        mode = ThermalMode.thermal(OMEGA_26, 2.0, fock_cutoff=10)
        state = SpinMotionState.prepared_up([mode])
        with pytest.raises(ValueError, match="tail"):
            flop_signal(state, CARRIER, self.RABI, [0.1], 1e-6)

    def test_rejects_unknown_transition(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.1)
        state = SpinMotionState.prepared_up([mode])
        with pytest.raises(TypeError):
            flop_signal(state, "carrier", self.RABI, [0.1], 1e-6)

    def test_rejects_bad_mode_index(self):
        mode = ThermalMode.thermal(OMEGA_26, 0.1)
        state = SpinMotionState.prepared_up([mode])
        with pytest.raises(ValueError):
            flop_signal(state, bsb(1), self.RABI, [0.1], 1e-6)

    @settings(max_examples=25, deadline=None)
    @given(nbar=st.floats(0.0, 2.0), eta=st.floats(0.0, 0.5),
           seed=st.integers(0, 2**16))
    def test_probabilities_stay_physical(self, nbar, eta, seed):
        mode = ThermalMode.thermal(OMEGA_26, nbar)
        state = SpinMotionState.prepared_up([mode])
        t = np.random.default_rng(seed).uniform(0.0, 200e-6, 16)
        for trans in (CARRIER, bsb(0), rsb(0)):
            p = flop_signal(state, trans, self.RABI, [eta], t)
            assert np.all(p >= -1e-12)
            assert np.all(p <= 1.0 + 1e-12)


def simulate_flop_data(rng, angle_deg, nbar, rabi, omega, shots):
    """Carrier and both first sidebands with binomial shot noise."""
    eta = (np.linalg.norm(DK_X.delta_k)
           * math.sqrt(const.hbar / (2.0 * MG25.mass * omega))
           * math.cos(math.radians(angle_deg)))
    mode = ThermalMode.thermal(omega, nbar)
    state = SpinMotionState.prepared_up([mode])
    datasets = []
    for trans, t_max, n_pts in ((CARRIER, 40e-6, 41), (bsb(0), 150e-6, 51),
                                (rsb(0), 150e-6, 41)):
        t = np.linspace(0.0, t_max, n_pts)
        p = flop_signal(state, trans, rabi, [eta], t)
        if shots:
            p = rng.binomial(shots, p) / shots
        datasets.append(FlopDataset(transition=trans, times=t, p_down=p,
                                    shots=shots))
    return datasets


class TestFitFlopping:
    TRUE_ANGLE = 24.7
    TRUE_NBAR = 0.3
    TRUE_RABI = 2 * np.pi * 100e3

    def fit(self, datasets):
        guess = FlopGuess(rabi_0=1.15 * self.TRUE_RABI, angles_deg=(30.0,),
                          nbars=(0.2,))
        return fit_flopping(datasets, DK_X, MG25, [OMEGA_26], guess)

    def test_noiseless_exact_recovery(self):
        rng = np.random.default_rng(0)
        data = simulate_flop_data(rng, self.TRUE_ANGLE, self.TRUE_NBAR,
                                  self.TRUE_RABI, OMEGA_26, shots=0)
        fit = self.fit(data)
        assert fit.rabi_0 == pytest.approx(self.TRUE_RABI, rel=1e-6)
        assert fit.angles_deg[0] == pytest.approx(self.TRUE_ANGLE, abs=1e-4)
        assert fit.nbars[0] == pytest.approx(self.TRUE_NBAR, rel=1e-5)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        data = simulate_flop_data(rng, self.TRUE_ANGLE, self.TRUE_NBAR,
                                  self.TRUE_RABI, OMEGA_26, shots=250)
        first = self.fit(data)
        second = self.fit(data)
        assert first.rabi_0 == second.rabi_0
        assert np.array_equal(first.angles_deg, second.angles_deg)
        assert np.array_equal(first.nbars, second.nbars)

    def test_noisy_round_trip(self):
        hits = 0
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            data = simulate_flop_data(rng, self.TRUE_ANGLE, self.TRUE_NBAR,
                                      self.TRUE_RABI, OMEGA_26, shots=250)
            fit = self.fit(data)
            ok = (abs(fit.angles_deg[0] - self.TRUE_ANGLE) < 0.5
                  and abs(fit.nbars[0] - self.TRUE_NBAR) < 0.1 * self.TRUE_NBAR)
            hits += ok
        assert hits >= 4

    def test_second_angle_round_trip(self):
        rng = np.random.default_rng(7)
        data = simulate_flop_data(rng, 36.1, self.TRUE_NBAR, self.TRUE_RABI,
                                  OMEGA_26, shots=250)
        guess = FlopGuess(rabi_0=1.1 * self.TRUE_RABI, angles_deg=(30.0,),
                          nbars=(0.2,))
        fit = fit_flopping(data, DK_X, MG25, [OMEGA_26], guess)
        assert abs(fit.angles_deg[0] - 36.1) < 0.5

    def test_errors_reported_positive(self):
        rng = np.random.default_rng(11)
        data = simulate_flop_data(rng, self.TRUE_ANGLE, self.TRUE_NBAR,
                                  self.TRUE_RABI, OMEGA_26, shots=250)
        fit = self.fit(data)
        assert fit.rabi_0_err > 0
        assert fit.angles_deg_err[0] > 0
        assert fit.nbars_err[0] > 0
        # shot noise at 250 shots constrains the angle to a fraction of a degree
        assert fit.angles_deg_err[0] < 0.5

    def test_rejects_single_dataset(self):
        rng = np.random.default_rng(0)
        data = simulate_flop_data(rng, self.TRUE_ANGLE, self.TRUE_NBAR,
                                  self.TRUE_RABI, OMEGA_26, shots=0)
        with pytest.raises(ValueError):
            self.fit(data[:1])

    def test_rejects_flat_signal(self):
        t = np.linspace(0.0, 20e-6, 25)
        flat = [FlopDataset(transition=CARRIER, times=t,
                            p_down=np.full_like(t, 0.3)),
                FlopDataset(transition=bsb(0), times=t,
                            p_down=np.full_like(t, 0.3))]
        with pytest.raises(ValueError, match="flat"):
            self.fit(flat)


class TestThermometry:
    def test_known_values(self):
        assert sideband_thermometry(0.0) == 0.0
        assert sideband_thermometry(1.0 / 11.0) == pytest.approx(0.1,
                                                                 rel=1e-12)
        assert sideband_thermometry(0.5) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_unphysical_ratio(self):
        with pytest.raises(ValueError):
            sideband_thermometry(1.0)
        with pytest.raises(ValueError):
            sideband_thermometry(-0.1)

    def test_round_trip_through_thermal_state(self):
        # asymptotic sideband ratio of a thermal state: sum n p_n over
        # sum (n+1) p_n
        for nbar in (0.05, 0.1, 0.3, 0.6, 1.0):
            p = thermal_populations(nbar, 400)
            n = np.arange(p.size)
            r = float((n @ p) / ((n + 1.0) @ p))
            assert sideband_thermometry(r) == pytest.approx(nbar, abs=1e-9)


class TestHeating:
    def test_reference_rate_reaches_unity(self):
        assert heating_evolution(0.1, 0.9e3, 1e-3) == pytest.approx(1.0)

    def test_zero_rate_constant(self):
        assert heating_evolution(0.37, 0.0, 5.0) == 0.37

    def test_rate_ordering(self):
        slow = heating_evolution(0.0, 2.2e3, 2e-3)
        fast = heating_evolution(0.0, 4.0e3, 2e-3)
        assert fast > slow

    def test_vectorized_in_time(self):
        t = np.array([0.0, 1e-3, 2e-3])
        out = heating_evolution(0.1, 0.9e3, t)
        assert np.allclose(out, [0.1, 1.0, 1.9])

    def test_rejects_negative_rate(self):
        with pytest.raises(ValueError):
            heating_evolution(0.1, -1.0, 1.0)


class TestTickle:
    MODE = ThermalMode.thermal(OMEGA_26, 0.0)

    def test_zero_field_zero_amplitude(self):
        res = tickle_response(0.0, OMEGA_26, 100e-6, self.MODE, MG25)
        assert res.amplitude == 0.0
        assert not res.detectable

    def test_resonant_amplitude_formula(self):
        e_field = 0.02
        res = tickle_response(e_field, OMEGA_26, 100e-6, self.MODE, MG25)
        expected = (MG25.charge * e_field * 100e-6
                    / (2.0 * MG25.mass * OMEGA_26))
        assert res.amplitude == pytest.approx(expected, rel=2e-3)

    def test_threshold_field_near_8_mV_per_m(self):
        # field that rings up 100 nm in 100 us on a 2.6 MHz mode
        e_star = (2.0 * MG25.mass * OMEGA_26 * 100e-9
                  / (MG25.charge * 100e-6))
        assert e_star == pytest.approx(8e-3, rel=0.1)
        res = tickle_response(e_star, OMEGA_26, 100e-6, self.MODE, MG25)
        assert res.amplitude == pytest.approx(100e-9, rel=2e-3)

    def test_ten_linewidths_detuned_undetectable(self):
        # drive strong enough for 500 nm on resonance
        e_field = (2.0 * MG25.mass * OMEGA_26 * 500e-9
                   / (MG25.charge * 100e-6))
        on = tickle_response(e_field, OMEGA_26, 100e-6, self.MODE, MG25)
        assert on.detectable
        detuning = 10.0 * 2.0 * np.pi / 100e-6
        off = tickle_response(e_field, OMEGA_26 + detuning, 100e-6,
                              self.MODE, MG25)
        assert off.amplitude < 100e-9
        assert not off.detectable

    def test_far_detuned_bounded_by_steady_amplitude(self):
        e_field = 1.0
        w_exc = 1.7 * OMEGA_26
        res = tickle_response(e_field, w_exc, 100e-6, self.MODE, MG25)
        steady = (MG25.charge * e_field / MG25.mass
                  / abs(OMEGA_26**2 - w_exc**2))
        assert res.amplitude <= 2.0 * steady * (1.0 + 1e-9)


class TestExchange:
    def test_forty_micron_array_band(self):
        rate = exchange_rate(40e-6, 2 * np.pi * 2e6, MG25)
        assert 2 * np.pi * 0.85e3 < rate < 2 * np.pi * 1.25e3

    def test_direct_formula(self):
        d, w = 40e-6, 2 * np.pi * 2e6
        expected = MG25.charge**2 / (4 * np.pi * const.epsilon_0
                                     * MG25.mass * w * d**3)
        assert exchange_rate(d, w, MG25) == pytest.approx(expected, rel=1e-12)

    def test_distance_scaling(self):
        near = exchange_rate(40e-6, 2 * np.pi * 2e6, MG25)
        far = exchange_rate(80e-6, 2 * np.pi * 2e6, MG25)
        assert near / far == pytest.approx(8.0, rel=1e-12)

    def test_frequency_scaling(self):
        slow = exchange_rate(40e-6, 2 * np.pi * 2e6, MG25)
        fast = exchange_rate(40e-6, 4 * np.pi * 2e6, MG25)
        assert slow / fast == pytest.approx(2.0, rel=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            exchange_rate(0.0, OMEGA_26, MG25)
        with pytest.raises(ValueError):
            exchange_rate(40e-6, 0.0, MG25)


def axis_modes(fx, fy, fz):
    """Mode structure with world-axis vectors, frequencies in Hz."""
    return ModeStructure(frequencies=2 * np.pi * np.array([fx, fy, fz]),
                         vectors=np.eye(3))


class TestMicromotion:
    DRIVE = RFDrive()

    def test_small_stray_displacement(self):
        modes = axis_modes(2.6e6, 2.6e6, 4.1e6)
        rep = micromotion_analysis([3.0, 0.0, 0.0], modes, self.DRIVE,
                                   DK_X, MG25)
        expected = MG25.charge * 3.0 / (MG25.mass * (2 * np.pi * 2.6e6) ** 2)
        assert rep.displacement[0] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(43e-9, rel=0.02)
        assert rep.displacement[1] == 0.0
        assert rep.displacement[2] == 0.0

    def test_height_shift_matches_detection_resolution(self):
        modes = axis_modes(2.6e6, 2.6e6, 4.1e6)
        rep = micromotion_analysis([0.0, 0.0, 900.0], modes, self.DRIVE,
                                   DK_X, MG25)
        assert abs(rep.displacement[2] - 5e-6) < 0.2 * 5e-6
        assert rep.z_sensitivity == pytest.approx(-2.0 * rep.displacement[2],
                                                  rel=1e-12)

    def test_modulation_index(self):
        modes = axis_modes(2.6e6, 2.6e6, 4.1e6)
        rep = micromotion_analysis([3.0, 0.0, 0.0], modes, self.DRIVE,
                                   DK_X, MG25)
        q_x = 2.0 * np.sqrt(2.0) * 2 * np.pi * 2.6e6 / self.DRIVE.omega_rf
        expected = (np.linalg.norm(DK_X.delta_k) * 0.5 * q_x
                    * rep.displacement[0])
        assert rep.modulation_index == pytest.approx(expected, rel=1e-12)
        assert np.allclose(rep.mathieu_q[:2], q_x)

    def test_zero_field(self):
        modes = axis_modes(2.6e6, 2.6e6, 4.1e6)
        rep = micromotion_analysis(np.zeros(3), modes, self.DRIVE, DK_X, MG25)
        assert np.all(rep.displacement == 0.0)
        assert rep.modulation_index == 0.0

    def test_rotated_basis_solves_full_tensor(self):
        c, s = np.cos(0.5), np.sin(0.5)
        vecs = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        freqs = 2 * np.pi * np.array([2.0e6, 3.0e6, 4.0e6])
        modes = ModeStructure(frequencies=freqs, vectors=vecs)
        e_field = np.array([1.5, -0.7, 0.4])
        rep = micromotion_analysis(e_field, modes, self.DRIVE, DK_X, MG25)
        stiffness = vecs.T @ np.diag(freqs**2) @ vecs
        oracle = np.linalg.solve(stiffness, MG25.charge_to_mass * e_field)
        assert np.allclose(rep.displacement, oracle, rtol=1e-10)

    def test_rejects_singular_tensor(self):
        modes = ModeStructure(frequencies=np.array([0.0, 1e6, 2e6]),
                              vectors=np.eye(3))
        with pytest.raises(ValueError):
            micromotion_analysis([1.0, 0.0, 0.0], modes, self.DRIVE,
                                 DK_X, MG25)


class TestDetection:
    def test_default_threshold_maximizes_fidelity(self):
        model = DetectionModel()
        scores = []
        for t in range(1, 40):
            down_ok = scipy.stats.poisson.sf(t - 1, 12.0)
            up_ok = scipy.stats.poisson.cdf(t - 1, 0.8)
            scores.append(down_ok + up_ok)
        assert model.threshold == 1 + int(np.argmax(scores))

    def test_deterministic_for_seed(self):
        model = DetectionModel()
        a = simulate_detection(0.4, model, 5000, seed=42)
        b = simulate_detection(0.4, model, 5000, seed=42)
        assert np.array_equal(a.histogram, b.histogram)
        assert a.inferred_p_down == b.inferred_p_down

    def test_dark_ion_mean_counts(self):
        model = DetectionModel()
        res = simulate_detection(0.0, model, 100_000, seed=1)
        k = np.arange(res.histogram.size)
        mean = (k @ res.histogram) / res.shots
        assert mean == pytest.approx(0.8, abs=3 * np.sqrt(0.8 / 100_000))

    def test_bright_ion_matches_poisson_tail(self):
        model = DetectionModel()
        down_ok, _ = model.fidelity()
        res = simulate_detection(1.0, model, 100_000, seed=2)
        sigma = np.sqrt(down_ok * (1.0 - down_ok) / 100_000)
        assert abs(res.inferred_p_down - down_ok) <= 3 * sigma

    def test_mixed_state_converges_to_analytic(self):
        model = DetectionModel()
        down_ok, up_ok = model.fidelity()
        p = 0.35
        expected = p * down_ok + (1.0 - p) * (1.0 - up_ok)
        res = simulate_detection(p, model, 100_000, seed=3)
        sigma = np.sqrt(expected * (1.0 - expected) / 100_000)
        assert abs(res.inferred_p_down - expected) <= 3 * sigma

    def test_accepts_spin_motion_state(self):
        state = SpinMotionState(spin=(1.0, 0.0), modes=())
        model = DetectionModel()
        res = simulate_detection(state, model, 200, seed=0)
        assert res.inferred_p_down > 0.9

    def test_rejects_bad_model(self):
        with pytest.raises(ValueError):
            DetectionModel(bright_mean=0.5, dark_mean=0.8)
        with pytest.raises(ValueError):
            DetectionModel(threshold=0)


class TestRampCheck:
    C_TUNE = 1.164e7
    OMEGA_0 = OMEGA_26

    def linear_ramp(self, duration, n=375):
        t = np.linspace(0.0, duration, n)
        return t, 2.3 * t / duration

    def test_constant_voltage_is_static(self):
        t = np.linspace(0.0, 10e-6, 50)
        rep = ramp_check(t, np.full_like(t, 1.7), self.C_TUNE, self.OMEGA_0,
                         MG25)
        # finite-difference coefficients round at the 1e-17 level
        assert rep.max_epsilon < 1e-12
        assert not rep.non_adiabatic

    def test_fastest_ramp_is_still_adiabatic(self):
        t, u = self.linear_ramp(7.5e-6)
        rep = ramp_check(t, u, self.C_TUNE, self.OMEGA_0, MG25)
        # steepest point is at the soft end of the ramp
        analytic = (MG25.charge_to_mass * self.C_TUNE * (2.3 / 7.5e-6)
                    / (2.0 * self.OMEGA_0**3))
        assert rep.max_epsilon == pytest.approx(analytic, rel=0.05)
        assert rep.max_epsilon < 0.01
        assert not rep.non_adiabatic

    def test_slow_ramp_scales_inversely_with_duration(self):
        _, u = self.linear_ramp(7.5e-6)
        t_fast = np.linspace(0.0, 7.5e-6, 375)
        t_slow = np.linspace(0.0, 120e-6, 375)
        fast = ramp_check(t_fast, u, self.C_TUNE, self.OMEGA_0, MG25)
        slow = ramp_check(t_slow, u, self.C_TUNE, self.OMEGA_0, MG25)
        assert fast.max_epsilon / slow.max_epsilon == pytest.approx(16.0,
                                                                    rel=1e-12)

    def test_violent_ramp_flagged(self):
        t, u = self.linear_ramp(50e-9)
        rep = ramp_check(t, u, self.C_TUNE, self.OMEGA_0, MG25)
        assert rep.non_adiabatic

    def test_frequency_endpoint(self):
        t, u = self.linear_ramp(7.5e-6)
        rep = ramp_check(t, u, self.C_TUNE, self.OMEGA_0, MG25)
        end = np.sqrt(self.OMEGA_0**2
                      + MG25.charge_to_mass * self.C_TUNE * 2.3)
        assert rep.omega[0] == pytest.approx(self.OMEGA_0, rel=1e-12)
        assert rep.omega[-1] == pytest.approx(end, rel=1e-12)

    def test_instability_raises(self):
        # -8 V of anti-confinement overwhelms the 2.6 MHz static curvature
        t = np.linspace(0.0, 10e-6, 40)
        u = np.linspace(0.0, -8.0, 40)
        with pytest.raises(ModeInstabilityError):
            ramp_check(t, u, self.C_TUNE, self.OMEGA_0, MG25)


class TestFrequencyDrift:
    def test_hour_long_shift(self):
        drift = FrequencyDrift(slope_hz_per_s=-1.5)
        assert drift.shift_hz(3600.0) == -5400.0

    def test_apply_is_exact_bookkeeping(self):
        drift = FrequencyDrift(slope_hz_per_s=-1.5)
        w = drift.apply(OMEGA_26, 100.0)
        assert w == OMEGA_26 + 2 * np.pi * (-150.0)
