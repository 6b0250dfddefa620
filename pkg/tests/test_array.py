import numpy as np
import pytest

import oracles
from squintlab.array import (SPEED_OF_LIGHT, ArrayConfig, ImperfectionModel, apply_imperfections,
                             far_field_steering, mutual_coupling_matrix, near_field_steering, subarray_mask)


class TestArrayConfig:

    def test_default_spacing_is_half_carrier_wavelength(self):
        cfg = ArrayConfig(16, 300e9)
        assert cfg.spacing_m == pytest.approx(SPEED_OF_LIGHT / 600e9)
        assert cfg.aperture_m == pytest.approx(15 * cfg.spacing_m)

    @pytest.mark.parametrize("kwargs", [
        dict(n_antennas=1, carrier_hz=1e9),
        dict(n_antennas=4.5, carrier_hz=1e9),
        dict(n_antennas=8, carrier_hz=0.0),
        dict(n_antennas=8, carrier_hz=1e9, spacing_m=-1.0),
        dict(n_antennas=8, carrier_hz=1e9, geometry="planar"),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ArrayConfig(**kwargs)


class TestSteering:

    def test_matches_loop_oracle(self):
        cfg = ArrayConfig(32, 300e9)
        for f, th in [(300e9, 0.3), (285e9, -1.1), (315e9, 1.2)]:
            np.testing.assert_allclose(far_field_steering(cfg, f, th),
                                       oracles.steering(32, 300e9, f, th), atol=1e-9)

    def test_broadside_is_all_ones(self):
        cfg = ArrayConfig(8, 60e9)
        np.testing.assert_allclose(far_field_steering(cfg, 61e9, 0.0), np.ones(8))

    def test_carrier_half_wavelength_phase_step(self):
        """At the carrier the inter-element phase is pi*sin(theta)."""
        cfg = ArrayConfig(8, 60e9)
        a = far_field_steering(cfg, 60e9, 0.4)
        np.testing.assert_allclose(np.angle(a[1] / a[0]), -np.pi * np.sin(0.4))

    def test_broadcast_shape(self):
        cfg = ArrayConfig(8, 60e9)
        f = np.linspace(59e9, 61e9, 5)[:, None]
        assert far_field_steering(cfg, f, np.zeros(3)).shape == (5, 3, 8)

    @pytest.mark.parametrize("theta", [np.pi / 2, -2.0, np.nan])
    def test_rejects_bad_angles(self, theta):
        with pytest.raises(ValueError):
            far_field_steering(ArrayConfig(4, 1e9), 1e9, theta)

    def test_near_field_matches_geometry_oracle(self):
        cfg = ArrayConfig(64, 100e9)
        got = near_field_steering(cfg, 105e9, 0.5, 0.7)
        np.testing.assert_allclose(got, oracles.near_field_steering(64, 100e9, 105e9, 0.5, 0.7), atol=1e-8)

    def test_near_field_tends_to_far_field(self):
        cfg = ArrayConfig(16, 30e9)
        a = near_field_steering(cfg, 30e9, 0.3, 1e7)
        np.testing.assert_allclose(a, far_field_steering(cfg, 30e9, 0.3), atol=1e-5)

    def test_near_field_rejects_nonpositive_range(self):
        with pytest.raises(ValueError):
            near_field_steering(ArrayConfig(4, 1e9), 1e9, 0.0, 0.0)


class TestImperfections:

    def test_coupling_matches_oracle(self):
        cfg = ArrayConfig(10, 1e9)
        C = mutual_coupling_matrix(cfg, ImperfectionModel(mc_band=2, mc_coeff=0.3 + 0.2j))
        np.testing.assert_allclose(C, oracles.mc_matrix(10, 2, 0.3 + 0.2j))

    def test_zero_band_is_identity(self):
        cfg = ArrayConfig(6, 1e9)
        np.testing.assert_array_equal(mutual_coupling_matrix(cfg, ImperfectionModel(0, 0.4)), np.eye(6))

    def test_band_too_wide(self):
        with pytest.raises(ValueError):
            mutual_coupling_matrix(ArrayConfig(4, 1e9), ImperfectionModel(mc_band=4, mc_coeff=0.1))

    def test_coefficient_must_be_below_one(self):
        with pytest.raises(ValueError):
            ImperfectionModel(mc_band=1, mc_coeff=1.0)

    def test_apply_order_is_gpm_after_coupling(self, rng):
        cfg = ArrayConfig(5, 1e9)
        C = mutual_coupling_matrix(cfg, ImperfectionModel(1, 0.2j))
        g = ImperfectionModel(gpm_gain_std=0.1, gpm_phase_std_rad=0.1).draw_gpm(5, rng)
        v = far_field_steering(cfg, 1e9, 0.2)
        np.testing.assert_allclose(apply_imperfections(v, C, g), np.diag(g) @ C @ v)

    def test_apply_batched(self, rng):
        cfg = ArrayConfig(5, 1e9)
        C = mutual_coupling_matrix(cfg, ImperfectionModel(1, 0.2j))
        V = far_field_steering(cfg, 1e9, np.array([0.1, 0.2, 0.3]))
        np.testing.assert_allclose(apply_imperfections(V, C)[1], C @ V[1])

    def test_no_imperfection_is_identity(self):
        v = far_field_steering(ArrayConfig(5, 1e9), 1e9, 0.2)
        np.testing.assert_array_equal(apply_imperfections(v), v)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            apply_imperfections(np.ones(4), np.eye(3))


class TestSubarrayMask:

    def test_selects_rows(self):
        cfg = ArrayConfig(6, 1e9)
        S = subarray_mask(cfg, [0, 3, 5])
        np.testing.assert_array_equal(S @ np.arange(6), [0, 3, 5])

    @pytest.mark.parametrize("idx", [[], [0, 0], [6], [-1]])
    def test_invalid(self, idx):
        with pytest.raises(ValueError):
            subarray_mask(ArrayConfig(6, 1e9), idx)
