import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icfdet import channels as ch
from oracles import rect_sum, sad_oracle

# Golden values for sRGB white through the CIE pipeline: L* = 100 exactly,
# u* = v* = 0, so normalized U/V sit at the neutral offsets 134/354, 140/262.
WHITE_L, WHITE_U, WHITE_V = 1.0, 134.0 / 354.0, 140.0 / 262.0


def const_frame(r, g, b, h=6, w=5):
    return np.tile(np.array([r, g, b])[None, None, :], (h, w, 1))


def rand_frame(rng, h=8, w=9):
    return rng.random((h, w, 3))


class TestLuv:
    def test_black_l_zero(self):
        luv = ch.rgb_to_luv(const_frame(0, 0, 0))
        assert np.all(luv[0] == 0.0)

    def test_white_golden(self):
        luv = ch.rgb_to_luv(const_frame(1, 1, 1))
        assert luv[0] == pytest.approx(WHITE_L, abs=1e-12)
        assert luv[1] == pytest.approx(WHITE_U, abs=1e-12)
        assert luv[2] == pytest.approx(WHITE_V, abs=1e-12)

    def test_constant_color_is_spatially_constant(self):
        luv = ch.rgb_to_luv(const_frame(0.7, 0.2, 0.4))
        for c in range(3):
            assert np.ptp(luv[c]) == 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_range(self, seed):
        frame = rand_frame(np.random.default_rng(seed))
        luv = ch.rgb_to_luv(frame)
        assert luv.min() >= 0.0 and luv.max() <= 1.0

    def test_rejects_bad_frames(self):
        with pytest.raises(ch.ChannelError):
            ch.rgb_to_luv(np.ones((4, 4)))
        with pytest.raises(ch.ChannelError):
            ch.rgb_to_luv(np.full((4, 4, 3), 1.5))


class TestGradient:
    def test_constant_frame_zero_magnitude(self):
        mag, _ = ch.gradient(const_frame(0.3, 0.3, 0.3))
        assert np.all(mag == 0.0)

    def test_horizontal_ramp(self):
        w = 16
        frame = np.tile((np.arange(w) / w)[None, :, None], (6, 1, 3))
        mag, ori = ch.gradient(frame)
        assert mag[:, 1:-1] == pytest.approx(1.0 / w)
        assert np.all(ori[:, 1:-1] == 0.0)
        # replicated border halves the difference
        assert mag[:, 0] == pytest.approx(0.5 / w)

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(11)
        frame = rng.random((7, 7, 3))
        mag, ori = ch.gradient(frame)
        mag_r, ori_r = ch.gradient(np.rot90(frame, axes=(0, 1)).copy())
        assert np.allclose(mag_r, np.rot90(mag), atol=1e-12)
        active = np.rot90(mag) > 1e-9
        expect = np.mod(np.rot90(ori) + np.pi / 2.0, np.pi)
        assert np.allclose(
            np.mod(ori_r[active] - expect[active] + np.pi / 2, np.pi) - np.pi / 2,
            0.0,
            atol=1e-9,
        )


class TestOrientationBins:
    def test_zero_magnitude(self):
        bins = ch.orientation_bins(np.zeros((3, 3)), np.zeros((3, 3)))
        assert bins.shape == (6, 3, 3) and np.all(bins == 0.0)

    def test_single_bin_deposit(self):
        mag = np.full((4, 4), 2.5)
        ori = np.full((4, 4), 0.1)
        bins = ch.orientation_bins(mag, ori)
        assert np.array_equal(bins[0], mag)
        assert np.all(bins[1:] == 0.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_mass_conservation_exact(self, seed):
        rng = np.random.default_rng(seed)
        mag = rng.random((5, 6))
        ori = rng.random((5, 6)) * np.pi * 0.9999
        bins = ch.orientation_bins(mag, ori)
        assert np.array_equal(bins.sum(axis=0), mag)
        # each pixel lands in exactly one bin
        assert np.array_equal((bins > 0).sum(axis=0), (mag > 0).astype(int))


class TestBuildChannels:
    @pytest.mark.parametrize("mode,k", [("luminance", 1), ("hoglike", 7), ("hogluv", 10)])
    def test_channel_counts(self, mode, k):
        stack = ch.build_channels(rand_frame(np.random.default_rng(0)), mode)
        assert stack.n_channels == k

    def test_hogluv_order(self):
        frame = rand_frame(np.random.default_rng(1))
        stack = ch.build_channels(frame, "hogluv")
        assert np.array_equal(stack.data[:3], ch.rgb_to_luv(frame))
        mag, ori = ch.gradient(frame)
        assert np.array_equal(stack.data[3], mag)
        assert np.array_equal(stack.data[4:], ch.orientation_bins(mag, ori))


class TestDct:
    def test_bank_orthonormal(self):
        bank = ch.dct_bank()
        flat = bank.reshape(3, -1)
        gram = flat @ flat.T
        assert np.allclose(gram, np.eye(3), atol=1e-12)
        dc = np.full((7, 7), 1.0 / 7.0)
        for f in bank:
            assert not np.allclose(f, dc)

    def test_expand_counts_and_passthrough(self):
        rng = np.random.default_rng(2)
        stack = ch.build_channels(rand_frame(rng, 12, 11), "hogluv")
        out = ch.dct_expand(stack)
        assert out.n_channels == 40
        assert np.array_equal(out.data[:10], stack.data)
        assert out.data[10:].min() >= 0.0

    def test_zero_stack(self):
        stack = ch.ChannelStack(np.zeros((10, 8, 8)), 1, "hogluv")
        assert np.all(ch.dct_expand(stack).data == 0.0)

    def test_impulse_response_is_abs_filter(self):
        # direct dense convolution with replicated borders as the oracle
        stack = ch.ChannelStack(np.zeros((10, 9, 9)), 1, "hogluv")
        stack.data[2, 4, 4] = 1.0
        out = ch.dct_expand(stack)
        bank = ch.dct_bank()
        for j in range(3):
            expected = np.zeros((9, 9))
            for y in range(9):
                for x in range(9):
                    acc = 0.0
                    for a in range(7):
                        for b in range(7):
                            yy = min(max(y - (a - 3), 0), 8)
                            xx = min(max(x - (b - 3), 0), 8)
                            acc += bank[j, a, b] * stack.data[2, yy, xx]
                    expected[y, x] = abs(acc)
            assert np.allclose(out.data[10 + 2 * 3 + j], expected, atol=1e-12)

    def test_rejects_wrong_channel_count(self):
        stack = ch.build_channels(rand_frame(np.random.default_rng(0)), "hoglike")
        with pytest.raises(ch.ChannelError):
            ch.dct_expand(stack)


class TestSdt:
    def test_identical_frames_zero(self):
        frame = rand_frame(np.random.default_rng(3), 20, 24)
        out = ch.sdt_channels(ch.FrameTriplet(frame, frame.copy(), frame.copy()))
        assert np.all(out == 0.0)

    def test_recovers_known_shift(self):
        rng = np.random.default_rng(4)
        big = rng.random((40, 44, 3))
        cur = big[8:28, 8:28]
        past = big[8:28, 5:25]  # past content shifted 3 columns
        trip = ch.FrameTriplet(cur.copy(), past.copy(), cur.copy())
        out = ch.sdt_channels(trip)
        dy, dx = ch.align_shift(ch.lightness(cur), ch.lightness(past))
        (ody, odx), costs = sad_oracle(
            ch.lightness(cur).tolist(), ch.lightness(past).tolist(), 8
        )
        assert (dy, dx) == (ody, odx)
        assert abs(dx) == 3 and dy == 0
        # aligned difference vanishes over the overlap
        assert out[0].max() < 1e-12

    def test_matches_exhaustive_sad_oracle(self):
        rng = np.random.default_rng(5)
        cur = rng.random((19, 23, 3))
        past = rng.random((19, 23, 3))
        cl, pl = ch.lightness(cur), ch.lightness(past)
        from icfdet._kernels import sad_costs

        costs = sad_costs(np.ascontiguousarray(cl), np.ascontiguousarray(pl), 8)
        (ody, odx), oracle_costs = sad_oracle(cl.tolist(), pl.tolist(), 8)
        for (dy, dx), c in oracle_costs.items():
            assert costs[dy + 8, dx + 8] == pytest.approx(c, abs=1e-9)
        assert ch.align_shift(cl, pl) == (ody, odx)


class TestShrink:
    def test_factor_one_identity(self):
        stack = ch.build_channels(rand_frame(np.random.default_rng(6)), "hogluv")
        out = ch.shrink(stack, 1)
        assert np.array_equal(out.data, stack.data)

    def test_block_sum(self):
        stack = ch.ChannelStack(np.ones((1, 4, 4)), 1, "luminance")
        out = ch.shrink(stack, 2)
        assert out.data.shape == (1, 2, 2)
        assert np.all(out.data == 4.0)

    def test_truncation(self):
        stack = ch.ChannelStack(np.ones((1, 5, 5)), 1, "luminance")
        assert ch.shrink(stack, 2).data.shape == (1, 2, 2)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    @settings(max_examples=25, deadline=None)
    def test_matches_block_oracle(self, seed, factor):
        rng = np.random.default_rng(seed)
        data = rng.random((2, 7, 9))
        out = ch.shrink(ch.ChannelStack(data[:1], 1, "luminance"), factor)
        oh, ow = 7 // factor, 9 // factor
        for y in range(oh):
            for x in range(ow):
                block = data[0, y * factor : (y + 1) * factor, x * factor : (x + 1) * factor]
                assert out.data[0, y, x] == pytest.approx(block.sum(), rel=1e-12)

    def test_rejects_bad_factor(self):
        stack = ch.ChannelStack(np.ones((1, 4, 4)), 1, "luminance")
        with pytest.raises(ch.ChannelError):
            ch.shrink(stack, 0)


class TestIntegrate:
    def test_zero(self):
        out = ch.integrate(ch.ChannelStack(np.zeros((1, 3, 3)), 1, "luminance"))
        assert np.all(out.data == 0.0)

    def test_two_by_two_ones(self):
        out = ch.integrate(ch.ChannelStack(np.ones((1, 2, 2)), 1, "luminance"))
        assert np.array_equal(out.data[0], [[0, 0, 0], [0, 1, 2], [0, 2, 4]])

    def test_every_rectangle_on_random_grid(self):
        rng = np.random.default_rng(7)
        data = rng.random((1, 8, 8))
        integ = ch.integrate(ch.ChannelStack(data, 1, "luminance"))
        g = integ.data[0]
        for y0 in range(8):
            for y1 in range(y0 + 1, 9):
                for x0 in range(8):
                    for x1 in range(x0 + 1, 9):
                        four = g[y1, x1] - g[y0, x1] - g[y1, x0] + g[y0, x0]
                        direct = rect_sum(data[0], x0, y0, x1 - x0, y1 - y0)
                        assert four == pytest.approx(direct, rel=1e-9, abs=1e-12)

    def test_monotone_for_nonnegative(self):
        rng = np.random.default_rng(8)
        integ = ch.integrate(ch.ChannelStack(rng.random((1, 6, 6)), 1, "luminance"))
        g = integ.data[0]
        assert np.all(np.diff(g, axis=0) >= 0) and np.all(np.diff(g, axis=1) >= 0)


class TestPipeline:
    def test_compute_integral_shapes(self):
        rng = np.random.default_rng(9)
        frame = rng.random((128, 64, 3))
        integ = ch.compute_integral(frame, "hogluv", False, 2)
        assert integ.data.shape == (10, 65, 33)
        trip = ch.FrameTriplet(frame, frame.copy(), frame.copy())
        integ2 = ch.compute_integral(trip, "hogluvdct", True, 2)
        assert integ2.data.shape == (42, 65, 33)

    def test_mode_mismatch_rejected(self):
        frame = np.zeros((16, 16, 3))
        trip = ch.FrameTriplet(frame, frame, frame)
        with pytest.raises(ch.ChannelError):
            ch.compute_integral(frame, "hogluv", True, 1)
        with pytest.raises(ch.ChannelError):
            ch.compute_integral(trip, "hogluv", False, 1)
