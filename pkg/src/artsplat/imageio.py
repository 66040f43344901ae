"""Image file formats: raw float GSIM, 8-bit PPM for RGB, 16-bit PGM for depth."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .scene import Image

GSIM_MAGIC = b"GSIM"
_HEADER = struct.Struct("<4sIII")


def write_gsim(path, array):
    """Write an ``(H, W)`` or ``(H, W, C)`` float array as little-endian float32."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    h, w, c = a.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GSIM_MAGIC, w, h, c))
        fh.write(a.astype("<f4").tobytes())


def read_gsim(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated GSIM header")
    magic, w, h, c = _HEADER.unpack_from(raw)
    if magic != GSIM_MAGIC:
        raise InvalidInputError(f"{path}: not a GSIM file")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != w * h * c:
        raise InvalidInputError(f"{path}: payload size does not match header")
    return body.reshape(h, w, c).astype(np.float64)


def save_image_gsim(path, img: Image):
    """RGB, depth and alpha packed as a 5-channel GSIM file."""
    write_gsim(path, np.concatenate([img.rgb, img.depth[..., None], img.alpha[..., None]], -1))


def load_image_gsim(path) -> Image:
    a = read_gsim(path)
    if a.shape[2] == 5:
        return Image(a[..., :3], a[..., 3], a[..., 4])
    if a.shape[2] == 1:  # a bare depth map
        d = a[..., 0]
        return Image(np.zeros(d.shape + (3,)), d, (d > 0).astype(np.float64))
    raise InvalidInputError(f"{path}: expected 1 or 5 channels, found {a.shape[2]}")


def write_ppm(path, rgb):
    rgb8 = np.clip(np.round(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = rgb8.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb8.tobytes())


def write_pgm_depth(path, depth):
    """Depth in millimeters as big-endian 16-bit PGM."""
    mm = np.clip(np.round(np.asarray(depth) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(mm.tobytes())


def _read_pnm(path, magic):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != magic:
        raise InvalidInputError(f"{path}: expected {magic.decode()} header")
    return int(tokens[1]), int(tokens[2]), int(tokens[3]), data[pos + 1:]


def read_ppm(path):
    w, h, maxval, body = _read_pnm(path, b"P6")
    return np.frombuffer(body, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3) / maxval


def read_pgm_depth(path):
    w, h, _, body = _read_pnm(path, b"P5")
    return np.frombuffer(body, dtype=">u2", count=w * h).reshape(h, w) / 1000.0
