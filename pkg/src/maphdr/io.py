"""File formats: PFM and Radiance RGBE radiance maps, response tables, manifests and LDR frames.

Readers raise :class:`FormatError` for malformed input; truncation errors name the
byte offset at which the data ran out.
"""
from __future__ import annotations

import re
from pathlib import Path

import cv2
import numpy as np

from .imaging import IrradianceFrame, LdrFrame, ResponseCurve

_PFM_HEADER = re.compile(rb"(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")
_RGBE_RES = re.compile(rb"-Y (\d+) \+X (\d+)\n")
_RLE_MIN_WIDTH, _RLE_MAX_WIDTH = 8, 0x7FFF
_MIN_RUN = 4


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _pixels(frame) -> np.ndarray:
    data = np.asarray(getattr(frame, "data", frame))
    if data.ndim == 2:
        data = data[..., None]
    if data.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {data.shape}")
    return data


# ---------------------------------------------------------------- PFM

def write_pfm(frame) -> bytes:
    """Little-endian float32 PFM, rows stored bottom to top."""
    data = _pixels(frame).astype("<f4")
    h, w, c = data.shape
    if c not in (1, 3):
        raise ValueError(f"PFM stores 1 or 3 channels, got {c}")
    header = f"{'PF' if c == 3 else 'Pf'}\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(data[::-1]).tobytes()


def read_pfm(buf: bytes) -> np.ndarray:
    """Decode PFM bytes into a float32 ``(H, W, C)`` array in top-to-bottom order."""
    m = _PFM_HEADER.match(buf)
    if m is None:
        raise FormatError("not a PFM file: bad header")
    magic, w, h = m.group(1), int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError:
        raise FormatError(f"PFM scale {m.group(4)!r} is not a number") from None
    if scale == 0 or not np.isfinite(scale):
        raise FormatError("PFM scale must be finite and nonzero")
    c = 3 if magic == b"PF" else 1
    start = m.end()
    need = w * h * c * 4
    if len(buf) - start < need:
        raise FormatError(f"PFM truncated at byte offset {len(buf)}: payload needs {need} bytes from offset {start}")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype, count=w * h * c, offset=start).astype(np.float32)
    if np.isnan(data).any():
        raise FormatError("PFM payload contains NaN")
    return data.reshape(h, w, c)[::-1].copy()


def write_pfm_file(path, frame) -> None:
    Path(path).write_bytes(write_pfm(frame))


def read_pfm_file(path) -> np.ndarray:
    return read_pfm(Path(path).read_bytes())


def write_flow_pfm(path, flow: np.ndarray) -> None:
    """Two-channel flow ``(H, W, 2)`` stored as a 3-channel PFM with a zero third channel."""
    flow = np.asarray(flow, dtype=float)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    write_pfm_file(path, np.concatenate([flow, np.zeros(flow.shape[:2] + (1,))], axis=2))


def read_flow_pfm(path) -> np.ndarray:
    data = read_pfm_file(path)
    if data.shape[2] != 3:
        raise FormatError("flow PFM must have three channels")
    return data[..., :2].astype(float)


# ---------------------------------------------------------------- RGBE

def rgbe_encode(rgb: np.ndarray) -> np.ndarray:
    """Shared-exponent encoding of ``(..., 3)`` floats to ``(..., 4)`` bytes.

    The mantissas are rounded to nearest, so the decoded value of every
    component is within 1/256 of the largest component of its pixel.
    """
    rgb = np.maximum(np.asarray(rgb, dtype=float), 0.0)
    peak = rgb.max(axis=-1)
    _, exp = np.frexp(peak)
    mant = np.rint(rgb * np.ldexp(1.0, 8 - exp)[..., None])
    carry = mant.max(axis=-1) >= 256  # the peak rounded up into the next octave
    exp = exp + carry
    mant = np.rint(rgb * np.ldexp(1.0, 8 - exp)[..., None])
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    ok = peak > 1e-32
    out[..., :3] = np.where(ok[..., None], np.minimum(mant, 255), 0).astype(np.uint8)
    out[..., 3] = np.where(ok, np.clip(exp + 128, 0, 255), 0).astype(np.uint8)
    return out


def rgbe_decode(rgbe: np.ndarray) -> np.ndarray:
    rgbe = np.asarray(rgbe)
    e = rgbe[..., 3].astype(int)
    scale = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return rgbe[..., :3].astype(float) * scale[..., None]


def _rle_channel(values: np.ndarray) -> bytes:
    """Radiance run-length encoding of one component of one scanline."""
    out = bytearray()
    n, i = len(values), 0
    while i < n:
        # find the next run of at least _MIN_RUN equal bytes
        j = i
        run_start, run_len = n, 0
        while j < n:
            k = j + 1
            while k < n and k - j < 127 and values[k] == values[j]:
                k += 1
            if k - j >= _MIN_RUN:
                run_start, run_len = j, k - j
                break
            j = k
        while i < run_start:  # literal dump before the run
            cnt = min(128, run_start - i)
            out.append(cnt)
            out += bytes(values[i:i + cnt])
            i += cnt
        if run_len:
            out += bytes((128 + run_len, int(values[run_start])))
            i = run_start + run_len
    return bytes(out)


def write_rgbe(frame) -> bytes:
    """Radiance ``.hdr`` bytes with run-length encoded scanlines."""
    data = _pixels(frame)
    if data.shape[2] != 3:
        raise ValueError("RGBE needs a 3-channel frame")
    h, w, _ = data.shape
    enc = rgbe_encode(data)
    parts = [b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n", f"-Y {h} +X {w}\n".encode("ascii")]
    rle = _RLE_MIN_WIDTH <= w <= _RLE_MAX_WIDTH
    for row in enc:
        if not rle:
            parts.append(row.tobytes())
            continue
        parts.append(bytes((2, 2, w >> 8, w & 0xFF)))
        for ch in range(4):
            parts.append(_rle_channel(row[:, ch]))
    return b"".join(parts)


def read_rgbe(buf: bytes) -> np.ndarray:
    """Decode Radiance ``.hdr`` bytes (flat or run-length scanlines) to float ``(H, W, 3)``."""
    if not (buf.startswith(b"#?RADIANCE") or buf.startswith(b"#?RGBE")):
        raise FormatError("not a Radiance file: missing #? signature")
    end = buf.find(b"\n\n")
    if end < 0:
        raise FormatError(f"RGBE header truncated at byte offset {len(buf)}")
    for line in buf[:end].split(b"\n")[1:]:
        if line.startswith(b"FORMAT=") and line != b"FORMAT=32-bit_rle_rgbe":
            raise FormatError(f"unsupported RGBE format {line[7:].decode(errors='replace')}")
    m = _RGBE_RES.match(buf, end + 2)
    if m is None:
        raise FormatError(f"unsupported or missing resolution line at byte offset {end + 2}")
    h, w = int(m.group(1)), int(m.group(2))
    pos = m.end()
    out = np.zeros((h, w, 4), dtype=np.uint8)

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"RGBE data truncated at byte offset {len(buf)} (needed {n} bytes at {pos})")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    for y in range(h):
        if not _RLE_MIN_WIDTH <= w <= _RLE_MAX_WIDTH or pos + 4 > len(buf) or buf[pos:pos + 2] != b"\x02\x02" \
                or buf[pos + 2] & 0x80:
            out[y] = np.frombuffer(take(4 * w), dtype=np.uint8).reshape(w, 4)
            continue
        head = take(4)
        if (head[2] << 8 | head[3]) != w:
            raise FormatError(f"scanline width mismatch at byte offset {pos - 4}")
        for ch in range(4):
            x = 0
            while x < w:
                count = take(1)[0]
                if count > 128:
                    count -= 128
                    if x + count > w:
                        raise FormatError(f"run overflows scanline at byte offset {pos - 1}")
                    out[y, x:x + count, ch] = take(1)[0]
                else:
                    if count == 0 or x + count > w:
                        raise FormatError(f"bad literal count at byte offset {pos - 1}")
                    out[y, x:x + count, ch] = np.frombuffer(take(count), dtype=np.uint8)
                x += count
    return rgbe_decode(out)


def write_rgbe_file(path, frame) -> None:
    Path(path).write_bytes(write_rgbe(frame))


def read_rgbe_file(path) -> np.ndarray:
    return read_rgbe(Path(path).read_bytes())


# ---------------------------------------------------------------- radiance files by extension

HDR_SUFFIXES = (".pfm", ".hdr")


def read_radiance(path) -> IrradianceFrame:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        data = read_pfm_file(path)
    elif suffix == ".hdr":
        data = read_rgbe_file(path)
    else:
        raise FormatError(f"{path}: unknown radiance format (use .pfm or .hdr)")
    try:
        return IrradianceFrame(data.astype(float))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_radiance(path, frame) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        write_pfm_file(path, frame)
    elif suffix == ".hdr":
        write_rgbe_file(path, frame)
    else:
        raise ValueError(f"{path}: unknown radiance format (use .pfm or .hdr)")


# ---------------------------------------------------------------- response curves

def format_crf(crf: ResponseCurve) -> str:
    lines = [f"channels={crf.channels} z_max={crf.z_max} z_th={crf.z_th}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in crf.table]
    return "\n".join(lines) + "\n"


def parse_crf(text: str) -> ResponseCurve:
    """Parse ``channels=C z_max=Z z_th=T`` followed by Z+1 rows of C log exposures."""
    lines = text.splitlines(keepends=True)
    if not lines:
        raise FormatError("CRF file is empty")
    try:
        fields = dict(tok.split("=", 1) for tok in lines[0].split())
        c, z_max, z_th = int(fields["channels"]), int(fields["z_max"]), int(fields["z_th"])
    except (KeyError, ValueError):
        raise FormatError(f"bad CRF header {lines[0].strip()!r}") from None
    if c < 1 or z_max < 1:
        raise FormatError("CRF header needs channels >= 1 and z_max >= 1")
    rows, offset = [], len(lines[0].encode())
    for line in lines[1:]:
        if line.strip():
            if len(rows) == z_max + 1:
                raise FormatError(f"extra CRF data at byte offset {offset}")
            try:
                row = [float(v) for v in line.split()]
            except ValueError:
                raise FormatError(f"non-numeric CRF entry at byte offset {offset}") from None
            if len(row) != c:
                raise FormatError(f"CRF row at byte offset {offset} has {len(row)} values, expected {c}")
            rows.append(row)
        offset += len(line.encode())
    if len(rows) != z_max + 1:
        raise FormatError(f"CRF truncated at byte offset {offset}: {len(rows)} of {z_max + 1} rows")
    try:
        return ResponseCurve(np.array(rows), z_th, z_max)
    except ValueError as exc:
        raise FormatError(f"invalid CRF: {exc}") from exc


def read_crf(path) -> ResponseCurve:
    return parse_crf(Path(path).read_text())


def write_crf(path, crf: ResponseCurve) -> None:
    Path(path).write_text(format_crf(crf))


# ---------------------------------------------------------------- manifests and LDR frames

def parse_manifest(text: str, root: Path | None = None) -> list[tuple[Path, float]]:
    """``filename exposure_seconds`` pairs in temporal order; names resolve against ``root``."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.rsplit(None, 1)
        if len(parts) != 2:
            raise FormatError(f"manifest line {lineno}: expected 'filename exposure_seconds'")
        try:
            dt = float(parts[1])
        except ValueError:
            raise FormatError(f"manifest line {lineno}: bad exposure {parts[1]!r}") from None
        if not dt > 0:
            raise FormatError(f"manifest line {lineno}: exposure must be positive")
        name = Path(parts[0])
        out.append((root / name if root is not None and not name.is_absolute() else name, dt))
    if not out:
        raise FormatError("manifest lists no frames")
    return out


def read_manifest(path) -> list[tuple[Path, float]]:
    path = Path(path)
    return parse_manifest(path.read_text(), path.parent)


def write_manifest(path, entries) -> None:
    Path(path).write_text("".join(f"{Path(n).as_posix()} {dt!r}\n" for n, dt in entries))


def read_ldr(path, exposure_s: float) -> LdrFrame:
    """8- or 16-bit PNG/PPM frame as RGB (or gray) codes."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"{path}: cannot decode image")
    if img.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"{path}: expected 8- or 16-bit samples, got {img.dtype}")
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., :3]
        img = img[..., ::-1]
    return LdrFrame(np.ascontiguousarray(img), exposure_s)


def write_ldr(path, codes: np.ndarray, bits: int = 8) -> None:
    """Write RGB or gray codes as PNG/PPM with the given sample depth."""
    codes = _pixels(codes)
    dtype = {8: np.uint8, 16: np.uint16}[bits]
    if codes.min() < 0 or codes.max() > np.iinfo(dtype).max:
        raise ValueError(f"codes do not fit in {bits} bits")
    img = codes.astype(dtype)
    img = img[..., ::-1] if img.shape[2] == 3 else img[..., 0]
    if not cv2.imwrite(str(path), np.ascontiguousarray(img)):
        raise OSError(f"{path}: cannot write image")


def load_sequence(manifest_path) -> list[LdrFrame]:
    return [read_ldr(p, dt) for p, dt in read_manifest(manifest_path)]


def write_mask_png(path, mask: np.ndarray) -> None:
    if not cv2.imwrite(str(path), np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)):
        raise OSError(f"{path}: cannot write mask")


def read_mask_png(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FormatError(f"{path}: cannot decode mask")
    return img > 127
