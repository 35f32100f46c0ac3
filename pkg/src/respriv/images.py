"""Portable image files: binary PGM/PPM readers/writers plus PNG via Pillow.

All functions exchange float64 arrays of shape (rows, cols, channels) with
values in [0, 1]; writers clip to that range and quantize to 8 bits.
"""

import numpy as np

__all__ = ["read_image", "write_image", "read_pnm", "write_pnm"]


def _quantize(img):
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError("expected (rows, cols[, channels]) image")
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_pnm(path, img):
    """Write binary PGM (P5, 1 channel) or PPM (P6, 3 channels)."""
    data = _quantize(img)
    rows, cols, channels = data.shape
    if channels == 1:
        magic = b"P5"
        payload = data[:, :, 0]
    elif channels == 3:
        magic = b"P6"
        payload = data
    else:
        raise ValueError(f"PNM supports 1 or 3 channels, got {channels}")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (cols, rows))
        fh.write(payload.tobytes())


def _pnm_tokens(blob, count):
    """First `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(blob):
            raise ValueError("truncated PNM header")
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    return tokens, pos + 1  # skip the single whitespace after maxval


def read_pnm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    channels = 1 if blob[:2] == b"P5" else 3
    (_, w, h, maxval), offset = _pnm_tokens(blob, 4)
    cols, rows, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    expected = rows * cols * channels
    raw = blob[offset:offset + expected]
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated pixel data")
    img = np.frombuffer(raw, dtype=np.uint8).astype(float) / 255.0
    return img.reshape(rows, cols, channels)


def write_image(path, img):
    path = str(path)
    if path.endswith((".pgm", ".ppm")):
        write_pnm(path, img)
        return
    if path.endswith(".png"):
        from PIL import Image

        data = _quantize(img)
        if data.shape[2] == 1:
            Image.fromarray(data[:, :, 0], mode="L").save(path)
        else:
            Image.fromarray(data, mode="RGB").save(path)
        return
    raise ValueError(f"unsupported image extension: {path}")


def read_image(path):
    path = str(path)
    if path.endswith((".pgm", ".ppm")):
        return read_pnm(path)
    if path.endswith(".png"):
        from PIL import Image

        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB" if im.mode not in ("L", "I;16") else "L"))
        arr = arr.astype(float) / 255.0
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr
    raise ValueError(f"unsupported image extension: {path}")
