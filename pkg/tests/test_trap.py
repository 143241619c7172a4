"""Tests of the pseudopotential, trap-site search and mode analysis.

Derivative formulas are checked against finite differences of the order
below; the site census is pinned to frozen values recorded in conftest.py
and to symmetry, scaling and refinement invariants that do not depend on
the implementation.
"""

import numpy as np
import pytest

import surftrap.fields as fields
from surftrap.trap import (
    MG25,
    IonSpecies,
    ModeInstabilityError,
    ModeStructure,
    RFDrive,
    SearchRegion,
    SiteKind,
    find_sites,
    mode_analysis,
    pseudopotential,
    total_sample,
)

from conftest import (
    ANCILLA,
    ANCILLA_FREQS_HZ,
    SINGLE_MINIMUM,
    SITE_FREQS_HZ,
    SITE_T0,
    SITE_T1,
    SITE_T2,
    TRIANGLE_SIDE,
)

SINGLE_REGION = SearchRegion(lo=(-4e-5, -4e-5, 1e-5), hi=(4e-5, 4e-5, 6e-5))


def rotz(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def single_minimum(layout, drive, species, **kwargs):
    sites = find_sites(layout, drive, species, SINGLE_REGION, **kwargs)
    minima = [s for s in sites if s.kind is SiteKind.MINIMUM]
    assert minima
    return min(minima,
               key=lambda s: np.linalg.norm(s.position - SINGLE_MINIMUM))


class TestPseudopotential:

    # Off-null probe with appreciable gradient and curvature.
    PROBE = np.array([6e-6, -4e-6, 2.1e-5])

    def test_value_is_scaled_field_square(self, single_layout, drive,
                                          species):
        rf = fields.FieldEvaluator(single_layout).rf_basis
        g = rf.gradient(self.PROBE)
        pref = species.charge * drive.u_rf**2 / (
            4.0 * species.mass * drive.omega_rf**2)
        sample = pseudopotential(single_layout, drive, species, self.PROBE,
                                 order=0)
        assert sample.value == pytest.approx(pref * g @ g, rel=1e-12)
        assert sample.value >= 0.0

    def test_gradient_matches_value_differences(self, single_layout, drive,
                                                species):
        h = 1e-10
        sample = pseudopotential(single_layout, drive, species, self.PROBE)
        fd = np.zeros(3)
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            up = pseudopotential(single_layout, drive, species,
                                 self.PROBE + step, order=0).value
            dn = pseudopotential(single_layout, drive, species,
                                 self.PROBE - step, order=0).value
            fd[k] = (up - dn) / (2 * h)
        np.testing.assert_allclose(sample.gradient, fd, rtol=1e-5)

    def test_hessian_matches_gradient_differences(self, single_layout,
                                                  drive, species):
        h = 1e-10
        sample = pseudopotential(single_layout, drive, species, self.PROBE)
        fd = np.zeros((3, 3))
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            up = pseudopotential(single_layout, drive, species,
                                 self.PROBE + step, order=1).gradient
            dn = pseudopotential(single_layout, drive, species,
                                 self.PROBE - step, order=1).gradient
            fd[k] = (up - dn) / (2 * h)
        np.testing.assert_allclose(sample.hessian, 0.5 * (fd + fd.T),
                                   rtol=1e-4)

    def test_drive_and_species_scalings(self, single_layout, drive, species):
        base = pseudopotential(single_layout, drive, species, self.PROBE,
                               order=0).value
        double_u = RFDrive(omega_rf=drive.omega_rf, u_rf=2 * drive.u_rf)
        assert pseudopotential(single_layout, double_u, species, self.PROBE,
                               order=0).value == pytest.approx(4 * base,
                                                               rel=1e-12)
        double_f = RFDrive(omega_rf=2 * drive.omega_rf, u_rf=drive.u_rf)
        assert pseudopotential(single_layout, double_f, species, self.PROBE,
                               order=0).value == pytest.approx(base / 4,
                                                               rel=1e-12)
        heavy = IonSpecies(charge=species.charge, mass=2 * species.mass)
        assert pseudopotential(single_layout, drive, heavy, self.PROBE,
                               order=0).value == pytest.approx(base / 2,
                                                               rel=1e-12)

    def test_total_sample_superposes_controls(self, single_layout, drive,
                                              species):
        voltages = np.zeros(single_layout.control_count)
        voltages[2] = 0.35
        voltages[7] = -0.1
        ps = pseudopotential(single_layout, drive, species, self.PROBE)
        st = fields.superpose(single_layout, voltages, 1.0, self.PROBE,
                              normalized=False)
        combined = total_sample(single_layout, drive, species, self.PROBE,
                                voltages=voltages)
        assert combined.value == pytest.approx(ps.value + st.value,
                                               rel=1e-12)
        np.testing.assert_allclose(combined.hessian,
                                   ps.hessian + st.hessian, rtol=1e-12)

    def test_total_without_voltages_is_pseudopotential(self, single_layout,
                                                       drive, species):
        ps = pseudopotential(single_layout, drive, species, self.PROBE)
        total = total_sample(single_layout, drive, species, self.PROBE)
        assert total.value == ps.value


class TestSpeciesAndDrive:

    def test_mg25_charge_to_mass(self):
        assert MG25.charge_to_mass == pytest.approx(3.8594e6, rel=1e-4)
        assert MG25.label == "Mg-25+"

    def test_from_units(self):
        doubly = IonSpecies.from_units(40.0, charge_e=2)
        assert doubly.charge == pytest.approx(2 * MG25.charge, rel=1e-12)
        assert doubly.mass == pytest.approx(1.6 * MG25.mass, rel=1e-12)

    def test_drive_validation(self):
        with pytest.raises(ValueError):
            RFDrive(omega_rf=0.0)

    def test_region_validation(self):
        with pytest.raises(ValueError):
            SearchRegion(lo=(0, 0, 1), hi=(1, 1, 1))
        with pytest.raises(ValueError):
            SearchRegion(lo=(0, 0, -1), hi=(1, 1, 1))
        region = SearchRegion(lo=(0, 0, 1), hi=(1, 1, 2))
        assert region.contains([0.5, 0.5, 1.5])
        assert not region.contains([1.5, 0.5, 1.5])
        assert region.contains([1.2, 0.5, 1.5], pad=0.25)


class TestSingleSiteCensus:

    def test_frozen_minimum(self, single_layout, drive, species):
        site = single_minimum(single_layout, drive, species)
        np.testing.assert_allclose(site.position, SINGLE_MINIMUM,
                                   atol=1e-11)
        assert np.linalg.norm(site.gradient) < 1e-3
        assert site.kind is SiteKind.MINIMUM

    def test_grid_density_does_not_move_the_site(self, single_layout,
                                                 drive, species):
        coarse = single_minimum(single_layout, drive, species,
                                starts_per_axis=(7, 7, 7))
        fine = single_minimum(single_layout, drive, species,
                              starts_per_axis=(9, 9, 9))
        assert np.linalg.norm(coarse.position - fine.position) < 1e-10

    def test_frozen_mode_frequencies(self, single_layout, drive, species):
        site = single_minimum(single_layout, drive, species)
        modes = mode_analysis(site.curvature, species)
        np.testing.assert_allclose(
            modes.frequencies / (2 * np.pi),
            [6926086.58, 6926086.58, 13852173.16], atol=0.02)
        # RF-only planar trap: vertical curvature is twice the transverse.
        assert modes.frequencies[2] == pytest.approx(
            2 * modes.frequencies[0], rel=1e-6)

    def test_mass_scaling_of_census(self, single_layout, drive, species):
        heavy = IonSpecies(charge=species.charge, mass=4 * species.mass)
        base = single_minimum(single_layout, drive, species)
        scaled = single_minimum(single_layout, drive, heavy)
        assert np.linalg.norm(scaled.position - base.position) < 1e-10
        base_f = mode_analysis(base.curvature, species).frequencies
        scaled_f = mode_analysis(scaled.curvature, heavy).frequencies
        np.testing.assert_allclose(scaled_f, base_f / 4.0, rtol=1e-8)

    def test_rf_amplitude_scaling_of_census(self, single_layout, drive,
                                            species):
        strong = RFDrive(omega_rf=drive.omega_rf, u_rf=2 * drive.u_rf)
        base = single_minimum(single_layout, drive, species)
        scaled = single_minimum(single_layout, strong, species)
        assert np.linalg.norm(scaled.position - base.position) < 1e-10
        base_f = mode_analysis(base.curvature, species).frequencies
        scaled_f = mode_analysis(scaled.curvature, species).frequencies
        np.testing.assert_allclose(scaled_f, 2.0 * base_f, rtol=1e-8)

    def test_control_voltages_shift_the_site(self, single_layout, drive,
                                             species):
        voltages = np.zeros(single_layout.control_count)
        voltages[0] = 0.2
        shifted_site = single_minimum(single_layout, drive, species,
                                      voltages=voltages)
        assert np.linalg.norm(shifted_site.position - SINGLE_MINIMUM) > 1e-8
        sample = total_sample(single_layout, drive, species,
                              shifted_site.position, order=1,
                              voltages=voltages)
        assert np.linalg.norm(sample.gradient) < 1e-3

    def test_region_excluding_site_reports_no_minimum(self, single_layout,
                                                      drive, species):
        region = SearchRegion(lo=(-4e-5, -4e-5, 4e-5), hi=(4e-5, 4e-5, 9e-5))
        sites = find_sites(single_layout, drive, species, region,
                           starts_per_axis=(7, 7, 5))
        assert not any(s.kind is SiteKind.MINIMUM for s in sites)

    def test_merge_leaves_no_duplicates(self, single_layout, drive,
                                        species):
        sites = find_sites(single_layout, drive, species, SINGLE_REGION)
        for i, a in enumerate(sites):
            for b in sites[i + 1:]:
                assert np.linalg.norm(a.position - b.position) >= 5e-8


class TestTriangleCensus:

    def minima(self, census):
        return [s for s in census if s.kind is SiteKind.MINIMUM]

    def test_four_frozen_minima(self, triangle_census):
        minima = self.minima(triangle_census)
        assert len(minima) == 4
        positions = np.array([s.position for s in minima])
        for expected in (SITE_T0, SITE_T1, SITE_T2, ANCILLA):
            assert np.linalg.norm(positions - expected, axis=1).min() < 1e-11

    def test_all_reported_gradients_verified(self, triangle_census):
        for site in triangle_census:
            assert np.linalg.norm(site.gradient) < 1e-3

    def test_triangle_side_length(self, triangle_sites):
        t0, t1, t2 = (s.position for s in triangle_sites)
        for a, b in ((t0, t1), (t1, t2), (t2, t0)):
            assert np.linalg.norm(a - b) == pytest.approx(TRIANGLE_SIDE,
                                                          abs=1e-10)

    def test_three_fold_symmetry_of_sites(self, triangle_sites):
        t0, t1, t2 = (s.position for s in triangle_sites)
        np.testing.assert_allclose(rotz(2 * np.pi / 3) @ t0, t1, atol=1e-9)
        np.testing.assert_allclose(rotz(-2 * np.pi / 3) @ t0, t2, atol=1e-9)

    def test_frozen_site_frequencies(self, triangle_sites, species):
        for site in triangle_sites:
            freqs = mode_analysis(site.curvature, species).frequencies
            np.testing.assert_allclose(np.sort(freqs) / (2 * np.pi),
                                       SITE_FREQS_HZ, atol=0.02)

    def test_frozen_ancilla_frequencies(self, triangle_census, species):
        minima = self.minima(triangle_census)
        ancilla = min(minima,
                      key=lambda s: np.linalg.norm(s.position - ANCILLA))
        freqs = mode_analysis(ancilla.curvature, species).frequencies
        np.testing.assert_allclose(freqs / (2 * np.pi), ANCILLA_FREQS_HZ,
                                   atol=0.02)
        # On-axis site of a three-fold array: degenerate transverse pair
        # and a vertical mode at twice their frequency.
        assert freqs[0] == pytest.approx(freqs[1], rel=1e-9)
        assert freqs[2] == pytest.approx(2 * freqs[0], rel=1e-9)

    def test_ancilla_sits_below_the_sites(self, triangle_census):
        minima = self.minima(triangle_census)
        ancilla = min(minima,
                      key=lambda s: np.linalg.norm(s.position - ANCILLA))
        assert ancilla.position[2] < SITE_T0[2]


class TestModeAnalysis:

    KAPPA = np.diag([1.0e8, 2.0e8, 4.0e8])

    def test_diagonal_curvature_closed_form(self, species):
        modes = mode_analysis(self.KAPPA, species)
        expected = np.sqrt(species.charge_to_mass * np.diag(self.KAPPA))
        np.testing.assert_allclose(modes.frequencies, expected, rtol=1e-12)
        np.testing.assert_allclose(modes.vectors, np.eye(3), atol=1e-12)

    def test_rotated_curvature_keeps_spectrum(self, species):
        R = rotz(0.3) @ np.array([[1, 0, 0], [0, 0.8, -0.6], [0, 0.6, 0.8]])
        rotated = R @ self.KAPPA @ R.T
        modes = mode_analysis(rotated, species)
        base = mode_analysis(self.KAPPA, species)
        np.testing.assert_allclose(np.sort(modes.frequencies),
                                   np.sort(base.frequencies), rtol=1e-9)
        # Rows are genuine eigenvectors of the rotated curvature.
        for f, v in zip(modes.frequencies, modes.vectors):
            kappa_eig = f**2 / species.charge_to_mass
            np.testing.assert_allclose(rotated @ v, kappa_eig * v,
                                       atol=1e-6 * np.abs(rotated).max())

    def test_vectors_orthonormal_right_handed(self, species):
        R = rotz(1.1)
        modes = mode_analysis(R @ self.KAPPA @ R.T, species)
        np.testing.assert_allclose(modes.vectors @ modes.vectors.T,
                                   np.eye(3), atol=1e-12)
        assert np.linalg.det(modes.vectors) == pytest.approx(1.0, rel=1e-12)

    def test_unstable_curvature_raises(self, species):
        with pytest.raises(ModeInstabilityError):
            mode_analysis(np.diag([-1.0e8, 2.0e8, 4.0e8]), species)

    def test_asymmetric_curvature_rejected(self, species):
        bad = self.KAPPA + np.array([[0, 1e7, 0], [0, 0, 0], [0, 0, 0]])
        with pytest.raises(ValueError):
            mode_analysis(bad, species)

    def test_reference_tracks_modes_through_rotation(self, species):
        # Rotate the principal axes past 45 degrees in small steps; with a
        # reference the first mode follows its axis instead of snapping to
        # whichever lab axis is closest.
        modes = mode_analysis(self.KAPPA, species)
        f0 = modes.frequencies[0]
        for angle in np.linspace(0.0, np.radians(70.0), 8)[1:]:
            R = rotz(angle)
            modes = mode_analysis(R @ self.KAPPA @ R.T, species,
                                  reference=modes)
        final = rotz(np.radians(70.0)) @ np.array([1.0, 0.0, 0.0])
        assert abs(modes.vectors[0] @ final) > 0.99
        assert modes.frequencies[0] == pytest.approx(f0, rel=1e-9)
        # Without the reference the same curvature labels by axis overlap.
        snapped = mode_analysis(rotz(np.radians(70.0)) @ self.KAPPA
                                @ rotz(np.radians(70.0)).T, species)
        assert abs(snapped.vectors[0] @ final) < 0.5

    def test_structure_validation(self):
        with pytest.raises(ValueError):
            ModeStructure(frequencies=[1.0, 2.0], vectors=np.eye(3))
