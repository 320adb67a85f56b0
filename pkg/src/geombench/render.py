"""Deterministic rasterization of stimulus scenes to 8-bit grayscale PNGs.

Scenes arrive as polyline strokes (anything exposing ``render_strokes()`` or
a plain list of (N,2) arrays).  Strokes are drawn as capsules (segments with
round caps) by binary coverage testing at a supersampled grid, then
box-filtered down with integer arithmetic, so identical inputs produce
identical bytes on any platform: the inner loop uses only IEEE add/mul/div
and exact integer sums, never transcendentals.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import GeombenchError


class EmptySceneError(GeombenchError):
    pass


class PngFormatError(GeombenchError):
    pass


@dataclass(frozen=True)
class RasterParams:
    width: int = 224
    height: int = 224
    stroke_width: float = 3.0
    supersample: int = 4
    background: int = 255
    ink: int = 0

    def __post_init__(self):
        if not (32 <= self.width <= 1024 and 32 <= self.height <= 1024):
            raise ValueError("width/height must be in [32, 1024]")
        if self.supersample not in (1, 2, 4):
            raise ValueError("supersample must be 1, 2 or 4")
        if self.stroke_width <= 0:
            raise ValueError("stroke_width must be positive")

    def as_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "stroke_width": self.stroke_width,
            "supersample": self.supersample,
        }


@dataclass
class Image:
    width: int
    height: int
    data: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.data.shape != (self.height, self.width):
            raise ValueError("buffer shape does not match width x height")

    def tobytes(self) -> bytes:
        return self.data.tobytes()


def _gather_strokes(scene) -> list:
    if hasattr(scene, "render_strokes"):
        strokes = scene.render_strokes()
    else:
        strokes = scene
    out = []
    for s in strokes:
        arr = np.asarray(s, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            continue
        out.append(arr)
    return out


def _draw_capsule(buf: np.ndarray, a, b, radius: float):
    h, w = buf.shape
    x0 = max(0, int(math.floor(min(a[0], b[0]) - radius)))
    x1 = min(w - 1, int(math.ceil(max(a[0], b[0]) + radius)))
    y0 = max(0, int(math.floor(min(a[1], b[1]) - radius)))
    y1 = min(h - 1, int(math.ceil(max(a[1], b[1]) + radius)))
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
    ys = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
    px, py = np.meshgrid(xs, ys)
    dx, dy = b[0] - a[0], b[1] - a[1]
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        ddx, ddy = px - a[0], py - a[1]
    else:
        t = ((px - a[0]) * dx + (py - a[1]) * dy) / seg2
        t = np.clip(t, 0.0, 1.0)
        ddx = px - (a[0] + t * dx)
        ddy = py - (a[1] + t * dy)
    mask = ddx * ddx + ddy * ddy <= radius * radius
    buf[y0 : y1 + 1, x0 : x1 + 1] |= mask


def rasterize(scene, params: RasterParams = RasterParams(), fit: bool = True) -> Image:
    """Render a scene to a grayscale image.

    With ``fit`` (the default) the scene is scaled to fill 80% of the canvas
    preserving aspect ratio and centered; with ``fit=False`` scene
    coordinates are taken as pixel coordinates directly (y up).
    """
    strokes = _gather_strokes(scene)
    if not strokes:
        raise EmptySceneError("scene has no drawable strokes")

    ss = params.supersample
    w_ss, h_ss = params.width * ss, params.height * ss
    radius = params.stroke_width * ss / 2.0

    if fit:
        allpts = np.vstack(strokes)
        lo = allpts.min(axis=0)
        hi = allpts.max(axis=0)
        span = hi - lo
        cx, cy = (lo + hi) / 2.0
        scales = []
        if span[0] > 0:
            scales.append(0.8 * params.width / span[0])
        if span[1] > 0:
            scales.append(0.8 * params.height / span[1])
        if not scales:
            raise EmptySceneError("scene has zero extent")
        s = min(scales) * ss

        def to_px(pts):
            out = np.empty_like(pts)
            out[:, 0] = (pts[:, 0] - cx) * s + w_ss / 2.0
            out[:, 1] = h_ss / 2.0 - (pts[:, 1] - cy) * s
            return out

    else:

        def to_px(pts):
            out = np.empty_like(pts)
            out[:, 0] = pts[:, 0] * ss
            out[:, 1] = (params.height - pts[:, 1]) * ss
            return out

    buf = np.zeros((h_ss, w_ss), dtype=bool)
    for stroke in strokes:
        pts = to_px(stroke)
        for i in range(len(pts) - 1):
            _draw_capsule(buf, pts[i], pts[i + 1], radius)

    counts = buf.reshape(params.height, ss, params.width, ss).sum(
        axis=(1, 3), dtype=np.uint32
    )
    span_val = params.background - params.ink
    area = ss * ss
    shade = (span_val * counts + area // 2) // area  # round-half-up, integer only
    pixels = (params.background - shade).astype(np.uint8)
    return Image(width=params.width, height=params.height, data=pixels)


def total_ink(img: Image, background: int = 255) -> float:
    """Sum of (background - pixel); a scale for how much was drawn."""
    return float(np.sum(background - img.data.astype(np.int64)))


# ---------------------------------------------------------------------------
# PNG codec (8-bit grayscale, non-interlaced, fixed filter and compression)

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_COMPRESS_LEVEL = 6


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(img: Image) -> bytes:
    """Deterministic PNG bytes: filter 0 on every row, fixed zlib level."""
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, 0, 0, 0, 0)
    raw = b"".join(b"\x00" + row.tobytes() for row in img.data)
    idat = zlib.compress(raw, _COMPRESS_LEVEL)
    return _PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")


def _unfilter(raw: bytes, width: int, height: int) -> np.ndarray:
    stride = width + 1
    if len(raw) != stride * height:
        raise PngFormatError("decompressed size does not match dimensions")
    out = np.zeros((height, width), dtype=np.uint8)
    prev = np.zeros(width, dtype=np.int64)
    for y in range(height):
        row = raw[y * stride : (y + 1) * stride]
        ftype = row[0]
        cur = np.frombuffer(row[1:], dtype=np.uint8).astype(np.int64)
        if ftype == 0:
            rec = cur
        elif ftype == 1:  # Sub
            rec = cur.copy()
            for x in range(1, width):
                rec[x] = (rec[x] + rec[x - 1]) & 0xFF
        elif ftype == 2:  # Up
            rec = (cur + prev) & 0xFF
        elif ftype == 3:  # Average
            rec = cur.copy()
            rec[0] = (rec[0] + prev[0] // 2) & 0xFF
            for x in range(1, width):
                rec[x] = (rec[x] + (rec[x - 1] + prev[x]) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            rec = cur.copy()
            for x in range(width):
                a = rec[x - 1] if x > 0 else 0
                b = prev[x]
                c = prev[x - 1] if x > 0 else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                rec[x] = (rec[x] + pred) & 0xFF
        else:
            raise PngFormatError(f"unsupported filter type {ftype}")
        out[y] = rec.astype(np.uint8)
        prev = rec
    return out


def decode_png(data: bytes) -> Image:
    """Decode 8-bit grayscale non-interlaced PNGs (the profile we emit)."""
    if data[:8] != _PNG_SIG:
        raise PngFormatError("not a PNG file")
    pos = 8
    width = height = None
    idat = b""
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        if len(payload) != length:
            raise PngFormatError("truncated chunk")
        crc = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])[0]
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise PngFormatError(f"bad CRC in {tag!r}")
        if tag == b"IHDR":
            width, height, depth, ctype, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", payload
            )
            if (depth, ctype, comp, filt, interlace) != (8, 0, 0, 0, 0):
                raise PngFormatError(
                    "only 8-bit grayscale non-interlaced PNGs are supported"
                )
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
        pos += 12 + length
    if width is None or not idat:
        raise PngFormatError("missing IHDR or IDAT")
    raw = zlib.decompress(idat)
    return Image(width=width, height=height, data=_unfilter(raw, width, height))


def save_png(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def load_png(path) -> Image:
    with open(path, "rb") as fh:
        return decode_png(fh.read())
