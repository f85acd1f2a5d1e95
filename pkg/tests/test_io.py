import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import log_response
from maphdr import io
from maphdr.imaging import IrradianceFrame, gamma_response


class TestPfm:
    def test_header_example(self):
        buf = io.write_pfm(np.full((1, 1, 3), 0.5))
        assert buf.startswith(b"PF\n1 1\n-1.0\n")
        assert len(buf) == len(b"PF\n1 1\n-1.0\n") + 12

    def test_gray_header(self):
        assert io.write_pfm(np.zeros((2, 3))).startswith(b"Pf\n3 2\n-1.0\n")

    def test_bottom_to_top(self):
        img = np.array([[[1.0]], [[2.0]]], dtype=np.float32)  # two rows
        payload = io.write_pfm(img)[len(b"Pf\n1 2\n-1.0\n"):]
        assert np.frombuffer(payload, "<f4").tolist() == [2.0, 1.0]

    @given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1, 3]))
    def test_round_trip_bit_exact(self, seed, c):
        rng = np.random.default_rng(seed)
        img = (rng.random((5, 7, c)) * 10.0 ** rng.integers(-5, 5)).astype(np.float32)
        assert io.read_pfm(io.write_pfm(img)).tobytes() == img.tobytes()

    def test_big_endian(self):
        img = np.arange(6, dtype=np.float32).reshape(2, 1, 3)
        buf = b"PF\n1 2\n1.0\n" + img[::-1].astype(">f4").tobytes()
        assert np.array_equal(io.read_pfm(buf), img)

    def test_nan_rejected(self):
        with pytest.raises(io.FormatError, match="NaN"):
            io.read_pfm(io.write_pfm(np.full((1, 1, 1), np.nan)))

    @pytest.mark.parametrize("buf", [b"P6\n1 1\n255\n", b"PF\n1 1\nabc\n", b"PF\n1 1\n0.0\n"])
    def test_bad_header(self, buf):
        with pytest.raises(io.FormatError):
            io.read_pfm(buf + bytes(12))

    def test_truncation_names_offset(self):
        buf = io.write_pfm(np.ones((2, 2, 3)))[:-5]
        with pytest.raises(io.FormatError, match=f"offset {len(buf)}"):
            io.read_pfm(buf)

    def test_flow_round_trip(self, tmp_path, rng):
        flow = rng.normal(size=(4, 5, 2)).astype(np.float32)
        io.write_flow_pfm(tmp_path / "f.pfm", flow)
        assert np.array_equal(io.read_flow_pfm(tmp_path / "f.pfm"), flow)


class TestRgbe:
    def test_unit_example(self):
        assert io.rgbe_encode(np.array([1.0, 1.0, 1.0])).tolist() == [128, 128, 128, 129]

    def test_zero(self):
        assert io.rgbe_encode(np.zeros(3)).tolist() == [0, 0, 0, 0]
        assert io.rgbe_decode(np.zeros(4, np.uint8)).tolist() == [0, 0, 0]

    def test_carry_into_next_octave(self):
        x = np.array([0.9999, 0.5, 0.25])
        enc = io.rgbe_encode(x)
        assert enc.tolist() == [128, 64, 32, 129]

    @given(st.integers(0, 2 ** 31 - 1))
    def test_error_within_pixel_max(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.random((200, 3)) * 10.0 ** rng.uniform(-6, 6, (200, 1))
        err = np.abs(io.rgbe_decode(io.rgbe_encode(x)) - x)
        assert np.all(err <= x.max(axis=1, keepdims=True) / 256)

    def test_comparable_components_within_one_percent(self, rng):
        peak = 10.0 ** rng.uniform(-6, 6, (1000, 1))
        x = peak * rng.uniform(0.5, 1.0, (1000, 3))
        rel = np.abs(io.rgbe_decode(io.rgbe_encode(x)) - x) / x
        assert rel.max() < 0.01

    @pytest.mark.parametrize("width", [5, 64])  # flat and run-length scanlines
    def test_file_round_trip(self, rng, width):
        img = rng.random((6, width, 3)) * 100
        img[2, 10:40] = 7.0  # a run for the encoder
        enc = io.rgbe_decode(io.rgbe_encode(img))
        back = io.read_rgbe(io.write_rgbe(img))
        assert np.array_equal(back, enc)

    def test_rle_is_smaller_for_flat_rows(self):
        img = np.ones((4, 100, 3))
        assert len(io.write_rgbe(img)) < 4 * 100 * 4

    def test_truncation_names_offset(self, rng):
        buf = io.write_rgbe(rng.random((4, 32, 3)))[:-7]
        with pytest.raises(io.FormatError, match=f"offset {len(buf)}"):
            io.read_rgbe(buf)

    def test_bad_signature(self):
        with pytest.raises(io.FormatError, match="signature"):
            io.read_rgbe(b"P6\n")


class TestCrf:
    @pytest.mark.parametrize("crf", [log_response(), gamma_response(channels=3), log_response(z_max=65535)])
    def test_round_trip_identity(self, crf):
        back = io.parse_crf(io.format_crf(crf))
        assert (back.z_max, back.z_th, back.channels) == (crf.z_max, crf.z_th, crf.channels)
        assert np.array_equal(back.table, crf.table)

    def test_header(self):
        assert io.format_crf(log_response()).startswith("channels=1 z_max=255 z_th=13\n")

    def test_truncated(self):
        text = io.format_crf(log_response())
        cut = "".join(text.splitlines(keepends=True)[:100])
        with pytest.raises(io.FormatError, match=f"offset {len(cut.encode())}"):
            io.parse_crf(cut)

    @pytest.mark.parametrize("text", ["", "channels=1 z_max=x z_th=1\n", "z_max=3 z_th=1\n"])
    def test_bad_header(self, text):
        with pytest.raises(io.FormatError):
            io.parse_crf(text)

    def test_wrong_row_width(self):
        with pytest.raises(io.FormatError, match="has 2 values"):
            io.parse_crf("channels=1 z_max=1 z_th=0\n0.0 1.0\n1.0\n")


class TestManifest:
    def test_parse(self, tmp_path):
        entries = io.parse_manifest("# frames\na.png 0.005\nsub/b.png 5e-4  # short\n\n", tmp_path)
        assert entries == [(tmp_path / "a.png", 0.005), (tmp_path / "sub/b.png", 0.0005)]

    @pytest.mark.parametrize("text", ["", "a.png\n", "a.png fast\n", "a.png -1\n"])
    def test_rejects(self, text):
        with pytest.raises(io.FormatError):
            io.parse_manifest(text)

    def test_round_trip(self, tmp_path):
        io.write_manifest(tmp_path / "m.txt", [("x.png", 0.005), ("y.png", 0.0005)])
        assert io.read_manifest(tmp_path / "m.txt") == [(tmp_path / "x.png", 0.005), (tmp_path / "y.png", 0.0005)]


class TestLdr:
    @pytest.mark.parametrize("bits,suffix", [(8, ".png"), (16, ".png"), (8, ".ppm")])
    def test_round_trip(self, tmp_path, rng, bits, suffix):
        codes = rng.integers(0, 2 ** bits, (6, 5, 3))
        io.write_ldr(tmp_path / f"f{suffix}", codes, bits)
        frame = io.read_ldr(tmp_path / f"f{suffix}", 0.01)
        assert np.array_equal(frame.data, codes) and frame.exposure_s == 0.01

    def test_gray(self, tmp_path, rng):
        codes = rng.integers(0, 256, (4, 4))
        io.write_ldr(tmp_path / "g.png", codes)
        assert np.array_equal(io.read_ldr(tmp_path / "g.png", 1.0).data[..., 0], codes)

    def test_undecodable(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not an image")
        with pytest.raises(io.FormatError):
            io.read_ldr(tmp_path / "bad.png", 1.0)

    def test_mask_round_trip(self, tmp_path, rng):
        mask = rng.random((7, 9)) < 0.3
        io.write_mask_png(tmp_path / "m.png", mask)
        assert np.array_equal(io.read_mask_png(tmp_path / "m.png"), mask)


def test_radiance_by_extension(tmp_path, rng):
    frame = IrradianceFrame(rng.random((4, 9, 3)).astype(np.float32))
    io.write_radiance(tmp_path / "a.pfm", frame)
    io.write_radiance(tmp_path / "a.hdr", frame)
    assert np.array_equal(io.read_radiance(tmp_path / "a.pfm").data, frame.data)
    assert np.allclose(io.read_radiance(tmp_path / "a.hdr").data, frame.data, atol=1 / 256)
    with pytest.raises(io.FormatError, match="unknown radiance format"):
        io.read_radiance(tmp_path / "a.exr")
