"""PPM I/O, attack transforms, the JPEG quantization round trip, PSNR."""

import io

import numpy as np
import pytest

from facemark import imageops as iops
from _synth import texture_images


class TestPpmIO:
    def test_round_trip_within_quantization(self, tmp_path):
        img = texture_images(1, 16, seed=3)[0]
        path = tmp_path / "t.ppm"
        iops.save_ppm(img, path)
        back = iops.load_ppm(path)
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 1.0 / 255.0

    def test_black_round_trips_exactly(self, tmp_path):
        img = np.zeros((3, 5, 7))
        path = tmp_path / "black.ppm"
        iops.save_ppm(img, path)
        np.testing.assert_array_equal(iops.load_ppm(path), img)

    def test_p5_rejected_by_ppm_loader(self, tmp_path):
        path = tmp_path / "gray.pgm"
        iops.save_pgm(np.full((1, 4, 4), 0.5), path)
        with pytest.raises(ValueError, match="P6"):
            iops.load_ppm(path)
        assert iops.load_pgm(path).shape == (1, 4, 4)

    def test_truncated_payload_names_offset(self, tmp_path):
        path = tmp_path / "trunc.ppm"
        data = b"P6\n4 4\n255\n" + b"\x00" * 10
        path.write_bytes(data)
        with pytest.raises(ValueError, match="byte"):
            iops.load_ppm(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n4 x\n255\n")
        with pytest.raises(ValueError, match="header"):
            iops.load_ppm(path)

    def test_comments_in_header(self, tmp_path):
        payload = bytes(range(12))
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 2\n255\n" + payload)
        img = iops.load_ppm(path)
        assert img.shape == (3, 2, 2)

    def test_ties_round_up(self, tmp_path):
        # 127.5/255 must become 128, not banker's 127
        img = np.full((3, 1, 1), 127.5 / 255.0)
        path = tmp_path / "tie.ppm"
        iops.save_ppm(img, path)
        assert path.read_bytes()[-3:] == bytes([128, 128, 128])


class TestCrop:
    def test_ratio_one_is_identity(self):
        img = texture_images(1, 12, seed=4)[0]
        np.testing.assert_array_equal(iops.crop_random(img, 1.0, seed=5), img)

    def test_output_size_floors(self):
        img = np.zeros((3, 112, 112))
        out = iops.crop_random(img, 0.8, seed=0)
        assert out.shape == (3, 89, 89)

    def test_same_seed_same_offset(self):
        img = texture_images(1, 20, seed=6)[0]
        np.testing.assert_array_equal(iops.crop_random(img, 0.5, seed=9), iops.crop_random(img, 0.5, seed=9))

    def test_offsets_cover_more_than_half(self):
        img = texture_images(1, 16, seed=7)[0]
        # ratio 0.5 on 16x16 -> 8x8 output, 9x9 = 81 valid offsets
        seen = set()
        for seed in range(1000):
            out = iops.crop_random(img, 0.5, seed=seed)
            # recover offset by matching the top-left pixel row/col
            for top in range(9):
                for left in range(9):
                    if np.array_equal(out, img[:, top : top + 8, left : left + 8]):
                        seen.add((top, left))
                        break
                else:
                    continue
                break
        assert len(seen) > 0.5 * 81

    def test_too_small_output_rejected(self):
        with pytest.raises(ValueError):
            iops.crop_random(np.zeros((3, 4, 4)), 0.1, seed=0)


class TestResize:
    def test_ratio_one_is_identity(self):
        img = texture_images(1, 10, seed=8)[0]
        np.testing.assert_array_equal(iops.resize_bilinear(img, 1.0), img)

    def test_constant_image_stays_constant(self):
        img = np.full((3, 12, 12), 0.42)
        out = iops.resize_bilinear(img, 0.6)
        np.testing.assert_allclose(out, 0.42, atol=1e-12)

    def test_checkerboard_to_single_pixel(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])[None]
        out = iops.resize_bilinear(img, 0.5)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == pytest.approx(0.5, abs=1e-12)


class TestPhotometric:
    def test_brightness_examples(self):
        img = np.full((3, 2, 2), 0.2)
        np.testing.assert_array_equal(iops.adjust_brightness(img, 1.0), img)
        np.testing.assert_allclose(iops.adjust_brightness(img, 3.0), 0.6, atol=1e-15)
        np.testing.assert_array_equal(iops.adjust_brightness(np.full((3, 2, 2), 0.5), 3.0), np.ones((3, 2, 2)))

    def test_contrast_examples(self):
        img = texture_images(1, 8, seed=9)[0]
        np.testing.assert_array_equal(iops.adjust_contrast(img, 1.0), img)
        constant = np.full((3, 4, 4), 0.3)
        np.testing.assert_allclose(iops.adjust_contrast(constant, 2.5), constant, atol=1e-12)

    def test_contrast_formula(self):
        # gray image with known luma mean 0.5, one probe pixel at 0.6
        img = np.full((3, 4, 4), 0.5)
        img[:, 0, 0] = 0.6
        mu = float(np.einsum("chw,c->", img, iops.LUMA_WEIGHTS) / 16)
        out = iops.adjust_contrast(img, 2.0)
        expected = np.clip(mu + 2.0 * (0.6 - mu), 0.0, 1.0)
        assert out[0, 0, 0] == pytest.approx(expected, abs=1e-12)

    def test_contrast_preserves_luma_mean_without_clamping(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(0.35, 0.65, size=(3, 16, 16))
        out = iops.adjust_contrast(img, 1.4)
        mu_in = float(np.einsum("chw,c->", img, iops.LUMA_WEIGHTS) / 256)
        mu_out = float(np.einsum("chw,c->", out, iops.LUMA_WEIGHTS) / 256)
        assert abs(mu_in - mu_out) < 1e-9


class TestJpeg:
    def test_mid_gray_exact_at_every_quality(self):
        img = np.full((3, 16, 16), 128.0 / 255.0)
        for quality in (1, 10, 35, 50, 75, 90, 100):
            out = iops.jpeg_roundtrip(img, quality)
            np.testing.assert_array_equal(out, img)

    def test_quality_50_tables_are_the_base_tables(self):
        luma, chroma = iops.quant_tables(50)
        np.testing.assert_array_equal(luma, iops._JPEG_LUMA_Q)
        np.testing.assert_array_equal(chroma, iops._JPEG_CHROMA_Q)

    def test_table_scaling_rule(self):
        # scale = 5000/q below 50, 200-2q at or above; entries clamp to [1,255]
        luma10, _ = iops.quant_tables(10)
        expected = np.clip(np.floor((iops._JPEG_LUMA_Q * 500.0 + 50.0) / 100.0), 1, 255)
        np.testing.assert_array_equal(luma10, expected)
        luma100, chroma100 = iops.quant_tables(100)
        np.testing.assert_array_equal(luma100, np.ones((8, 8)))
        np.testing.assert_array_equal(chroma100, np.ones((8, 8)))

    def test_dct_orthonormality(self):
        rng = np.random.default_rng(11)
        blocks = rng.standard_normal((4, 8, 8))
        back = iops.idct2_blocks(iops.dct2_blocks(blocks))
        assert np.max(np.abs(back - blocks)) < 1e-9

    def test_quality_100_high_fidelity(self):
        img = texture_images(1, 32, seed=12)[0]
        out = iops.jpeg_roundtrip(img, 100)
        assert iops.psnr(img, out) >= 40.0

    def test_mse_non_increasing_with_quality(self):
        img = texture_images(1, 32, seed=13)[0]
        mses = []
        for q in (75, 80, 85, 90, 95, 100):
            out = iops.jpeg_roundtrip(img, q)
            mses.append(float(np.mean((out - img) ** 2)))
        for worse, better in zip(mses, mses[1:]):
            assert better <= worse + 1e-6

    def test_matches_reference_codec_quality(self, tmp_path):
        PIL = pytest.importorskip("PIL.Image")
        img = texture_images(1, 32, seed=14)[0]
        raw = np.floor(img * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
        buf = io.BytesIO()
        PIL.fromarray(raw).save(buf, format="JPEG", quality=100, subsampling=0)
        buf.seek(0)
        ref = np.asarray(PIL.open(buf), dtype=np.float64).transpose(2, 0, 1) / 255.0
        # both the reference codec and ours stay above 40 dB at quality 100
        assert iops.psnr(img, ref) >= 40.0
        assert iops.psnr(img, iops.jpeg_roundtrip(img, 100)) >= 40.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            iops.jpeg_roundtrip(np.full((3, 16, 16), 0.5), 0)
        with pytest.raises(ValueError):
            iops.jpeg_roundtrip(np.full((3, 16, 16), 0.5), 101)
        with pytest.raises(ValueError):
            iops.jpeg_roundtrip(np.full((3, 4, 4), 0.5), 90)

    def test_grayscale_path(self):
        img = texture_images(1, 16, seed=15, channels=1)[0]
        out = iops.jpeg_roundtrip(img, 85)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_non_multiple_of_eight_sizes(self):
        img = texture_images(1, 20, seed=16)[0][:, :19, :13]
        out = iops.jpeg_roundtrip(np.ascontiguousarray(img), 80)
        assert out.shape == img.shape


class TestApplyTransform:
    def test_identity(self):
        img = texture_images(1, 9, seed=17)[0]
        np.testing.assert_array_equal(iops.apply_transform(img, iops.Transform("identity")), img)

    def test_crop_dispatch_size(self):
        img = np.zeros((3, 40, 40))
        out = iops.apply_transform(img, iops.Transform("crop", 0.95, seed=1))
        assert out.shape == (3, 38, 38)

    def test_jpeg_quality_gate(self):
        iops.Transform("jpeg", 75)
        with pytest.raises(ValueError):
            iops.Transform("jpeg", 0)
        with pytest.raises(ValueError):
            iops.Transform("jpeg", 90.5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            iops.Transform("rotate", 0.5)

    def test_identity_factors_for_all_kinds(self):
        img = texture_images(1, 10, seed=18)[0]
        for kind in ("crop", "resize", "brightness", "contrast"):
            out = iops.apply_transform(img, iops.Transform(kind, 1.0, seed=3))
            np.testing.assert_array_equal(out, img)

    def test_outputs_stay_in_range(self):
        img = texture_images(1, 16, seed=19)[0]
        transforms = [
            iops.Transform("crop", 0.75, seed=4),
            iops.Transform("resize", 0.75),
            iops.Transform("brightness", 3.5),
            iops.Transform("contrast", 3.5),
            iops.Transform("jpeg", 75),
        ]
        for t in transforms:
            out = iops.apply_transform(img, t)
            assert np.all(np.isfinite(out))
            assert out.min() >= 0.0 and out.max() <= 1.0


class TestPsnr:
    def test_equal_images_infinite(self):
        img = texture_images(1, 8, seed=20)[0]
        assert iops.psnr(img, img.copy()) == float("inf")

    def test_uniform_difference(self):
        a = np.zeros((3, 4, 4))
        b = np.full((3, 4, 4), 0.1)
        assert iops.psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_black_vs_white(self):
        assert iops.psnr(np.zeros((3, 2, 2)), np.ones((3, 2, 2))) == pytest.approx(0.0, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iops.psnr(np.zeros((3, 2, 2)), np.zeros((3, 2, 3)))
