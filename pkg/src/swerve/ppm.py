"""Binary PPM (P6, maxval 255) codec, plus an optional PNG path behind the
same interface when Pillow is installed.

Float images in [0,1] quantize to 8-bit on write by rounding, so a written
pixel is off by at most 0.5/255 from its float source; over d values the
worst-case L2 error is sqrt(d)/510.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

QUANT_STEP = 1.0 / 255.0


def quantization_l2_bound(shape) -> float:
    """Worst-case L2 distance between a float image and its 8-bit round trip."""
    d = int(np.prod(shape))
    return float(np.sqrt(d) / 510.0)


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments, then take one token
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("ppm: truncated header")
    return buf[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM into a uint8 (H, W, 3) array."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic != b"P6":
        raise ValueError(f"ppm: bad magic {magic!r}, expected b'P6'")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        if not tok.isdigit():
            raise ValueError(f"ppm: non-numeric header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"ppm: bad dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"ppm: maxval must be 255, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    data = buf[pos : pos + width * height * 3]
    if len(data) != width * height * 3:
        raise ValueError(f"ppm: expected {width * height * 3} pixel bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(image: np.ndarray, path) -> None:
    """Write a (H, W, 3) image as binary P6. Float input must lie in [0,1]
    and is rounded to 8 bits; uint8 input is written verbatim."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"ppm: image must be (H, W, 3), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("ppm: float image values must lie in [0, 1]")
        arr = np.round(arr * 255.0).astype(np.uint8)
    h, w, _ = arr.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


def read_image(path) -> np.ndarray:
    """Decode a PPM or (optionally, via Pillow) PNG file to uint8 (H, W, 3)."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".ppm":
        return read_ppm(p)
    if suffix == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise ImportError("PNG support needs Pillow (install the 'png' extra)") from exc
        with Image.open(p) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    raise ValueError(f"unsupported image format {suffix!r} (expected .ppm or .png)")


def write_image(image: np.ndarray, path) -> None:
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".ppm":
        write_ppm(image, p)
        return
    if suffix == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise ImportError("PNG support needs Pillow (install the 'png' extra)") from exc
        arr = np.asarray(image)
        if arr.dtype != np.uint8:
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("png: float image values must lie in [0, 1]")
            arr = np.round(arr * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(p)
        return
    raise ValueError(f"unsupported image format {suffix!r} (expected .ppm or .png)")
