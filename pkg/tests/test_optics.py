"""CASSI forward model vs scalar loop oracles, plus linearity and gradients."""

import numpy as np
import pytest

from cassilab import autodiff as ad
from cassilab import gradcheck, oracles, optics
from cassilab.autodiff import Tensor
from cassilab.optics import DispersionConfig, NoiseModel


def random_instance(rng, max_dim=8, max_channels=4):
    h = int(rng.integers(1, max_dim + 1))
    w = int(rng.integers(1, max_dim + 1))
    c = int(rng.integers(1, max_channels + 1))
    d = int(rng.integers(0, 3))
    cube = rng.standard_normal((c, h, w))
    mask = (rng.random((h, w)) < 0.5).astype(np.float64)
    return cube, mask, DispersionConfig(step=d)


class TestModulate:
    def test_all_ones_mask_identity(self):
        rng = np.random.default_rng(0)
        cube = rng.standard_normal((3, 4, 4))
        np.testing.assert_array_equal(optics.modulate(cube, np.ones((4, 4))), cube)

    def test_all_zeros_mask_annihilates(self):
        cube = np.ones((3, 4, 4))
        np.testing.assert_array_equal(optics.modulate(cube, np.zeros((4, 4))), 0.0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        cube = rng.standard_normal((3, 4, 4))
        mask = rng.random((4, 4))
        np.testing.assert_array_equal(optics.modulate(cube, mask),
                                      oracles.modulate_loops(cube, mask))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mask"):
            optics.modulate(np.zeros((2, 4, 4)), np.zeros((5, 5)))


class TestDisperse:
    def test_zero_step_no_shear(self):
        rng = np.random.default_rng(2)
        cube = rng.standard_normal((3, 2, 4))
        out = optics.disperse(cube, DispersionConfig(step=0))
        np.testing.assert_array_equal(out, cube)

    def test_single_channel_identity(self):
        rng = np.random.default_rng(3)
        cube = rng.standard_normal((1, 3, 5))
        out = optics.disperse(cube, DispersionConfig(step=4))
        np.testing.assert_array_equal(out, cube)

    def test_channel_offsets_against_oracle(self):
        rng = np.random.default_rng(4)
        cube = rng.standard_normal((2, 2, 3))
        out = optics.disperse(cube, DispersionConfig(step=1))
        assert out.shape == (2, 2, 4)
        np.testing.assert_array_equal(out, oracles.disperse_loops(cube, 1))
        # channel 2 sits one column right of channel 1
        np.testing.assert_array_equal(out[1, :, 1:4], cube[1])
        np.testing.assert_array_equal(out[1, :, 0], 0.0)

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            DispersionConfig(step=-1)


class TestIntegrate:
    def test_single_channel_passthrough(self):
        rng = np.random.default_rng(5)
        d = rng.standard_normal((1, 3, 4))
        np.testing.assert_array_equal(optics.integrate(d), d[0])

    def test_all_ones_sums_to_channel_count(self):
        np.testing.assert_array_equal(optics.integrate(np.ones((3, 2, 2))), 3.0)

    def test_seeded_noise_matches_oracle(self):
        rng = np.random.default_rng(6)
        d = rng.standard_normal((3, 4, 6))
        noise = NoiseModel(kind="additive-gaussian", sigma=0.3, seed=11)
        sample = noise.sample((4, 6), d.dtype)
        np.testing.assert_array_equal(optics.integrate(d, noise),
                                      oracles.integrate_loops(d, sample))


class TestForwardProject:
    def test_zero_cube_gives_zero_measurement(self):
        out = optics.forward_project(np.zeros((3, 4, 4)), np.ones((4, 4)),
                                     DispersionConfig(step=2))
        np.testing.assert_array_equal(out, 0.0)

    def test_linearity_in_scale(self):
        rng = np.random.default_rng(7)
        cube = rng.standard_normal((4, 6, 6)).astype(np.float32)
        mask = (rng.random((6, 6)) < 0.5).astype(np.float32)
        disp = DispersionConfig(step=1)
        lhs = optics.forward_project(2.5 * cube, mask, disp)
        rhs = 2.5 * optics.forward_project(cube, mask, disp)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-5)

    def test_linearity_in_superposition(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((3, 5, 5)).astype(np.float32)
        b = rng.standard_normal((3, 5, 5)).astype(np.float32)
        mask = rng.random((5, 5)).astype(np.float32)
        disp = DispersionConfig(step=2)
        lhs = optics.forward_project(1.5 * a + 0.5 * b, mask, disp)
        rhs = 1.5 * optics.forward_project(a, mask, disp) + 0.5 * optics.forward_project(b, mask, disp)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-6)

    def test_equals_composition_of_oracle_stages(self):
        rng = np.random.default_rng(9)
        cube, mask, disp = random_instance(rng)
        via_oracles = oracles.integrate_loops(
            oracles.disperse_loops(oracles.modulate_loops(cube, mask), disp.step))
        np.testing.assert_array_equal(optics.forward_project(cube, mask, disp), via_oracles)


class TestResidualInput:
    def test_stage_zero_returns_measurement(self):
        y = np.ones((3, 5))
        assert optics.residual_input(y) is y

    def test_perfect_reprojection_gives_zero(self):
        y = np.random.default_rng(10).standard_normal((3, 5))
        np.testing.assert_array_equal(optics.residual_input(y, y), 0.0)

    def test_matches_elementwise_subtraction(self):
        rng = np.random.default_rng(11)
        y, z = rng.standard_normal((4, 7)), rng.standard_normal((4, 7))
        expected = np.array([[y[i, j] - z[i, j] for j in range(7)] for i in range(4)])
        np.testing.assert_array_equal(optics.residual_input(y, z), expected)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="residual_input"):
            optics.residual_input(np.zeros((2, 3)), np.zeros((2, 4)))


class TestShiftBack:
    def test_zero_step_copies_measurement(self):
        rng = np.random.default_rng(12)
        y = rng.standard_normal((3, 5))
        out = optics.shift_back(y, DispersionConfig(step=0), channels=4)
        for m in range(4):
            np.testing.assert_array_equal(out[m], y)

    def test_single_channel_roundtrip(self):
        rng = np.random.default_rng(13)
        cube = np.zeros((3, 4, 4))
        cube[1] = rng.standard_normal((4, 4))
        disp = DispersionConfig(step=2)
        y = optics.integrate(optics.disperse(cube, disp))
        back = optics.shift_back(y, disp, channels=3)
        np.testing.assert_array_equal(back[1], cube[1])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(14)
        y = rng.standard_normal((4, 9))
        out = optics.shift_back(y, DispersionConfig(step=2), channels=3)
        np.testing.assert_array_equal(out, oracles.shift_back_loops(y, 2, 3))

    def test_width_mismatch_rejected(self):
        with pytest.raises(ValueError, match="width"):
            optics.shift_back(np.zeros((3, 4)), DispersionConfig(step=2), channels=4)


class TestOracleEquivalence:
    """Every stage matches the scalar loops exactly on 20 random instances."""

    @pytest.mark.parametrize("seed", range(20))
    def test_all_stages_exact(self, seed):
        rng = np.random.default_rng(100 + seed)
        cube, mask, disp = random_instance(rng)
        modulated = optics.modulate(cube, mask)
        np.testing.assert_array_equal(modulated, oracles.modulate_loops(cube, mask))
        dispersed = optics.disperse(modulated, disp)
        np.testing.assert_array_equal(dispersed, oracles.disperse_loops(modulated, disp.step))
        y = optics.integrate(dispersed)
        np.testing.assert_array_equal(y, oracles.integrate_loops(dispersed))
        back = optics.shift_back(y, disp, cube.shape[0])
        np.testing.assert_array_equal(back, oracles.shift_back_loops(y, disp.step, cube.shape[0]))


class TestTensorPath:
    def test_tensor_path_agrees_with_numpy_path(self):
        rng = np.random.default_rng(15)
        cube, mask, disp = random_instance(rng)
        y_np = optics.forward_project(cube, mask, disp)
        y_t = optics.forward_project(Tensor(cube), mask, disp)
        np.testing.assert_array_equal(y_t.data, y_np)
        back_np = optics.shift_back(y_np, disp, cube.shape[0])
        back_t = optics.shift_back(Tensor(y_np), disp, cube.shape[0])
        np.testing.assert_array_equal(back_t.data, back_np)

    def test_projection_loss_gradient_matches_fd(self):
        rng = np.random.default_rng(16)
        cube = rng.standard_normal((3, 4, 4))
        mask = (rng.random((4, 4)) < 0.5).astype(np.float64)
        disp = DispersionConfig(step=1)
        y = optics.forward_project(cube + rng.standard_normal(cube.shape), mask, disp)

        def build(x):
            d = ad.sub(optics.forward_project(x, mask, disp), Tensor(y))
            return ad.sum_(ad.mul(d, d))

        err = gradcheck.check_vjp(build, [cube])
        assert err <= 1e-6


class TestNoiseModel:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="noise kind"):
            NoiseModel(kind="poisson")

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigma"):
            NoiseModel(kind="additive-gaussian", sigma=-1.0)

    def test_seeded_noise_reproducible(self):
        rng = np.random.default_rng(17)
        d = rng.standard_normal((2, 3, 4))
        noise = NoiseModel(kind="additive-gaussian", sigma=0.5, seed=3)
        np.testing.assert_array_equal(optics.integrate(d, noise), optics.integrate(d, noise))
