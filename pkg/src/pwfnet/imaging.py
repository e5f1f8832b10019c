"""Image IO (8-bit RGB PNG, binary PPM) and full-reference metrics.

Images are float arrays ``(3, H, W)`` with values in ``[0, 1]``.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

__all__ = [
    "PSNR_CAP", "ImageFormatError", "psnr", "ssim", "gaussian_window",
    "load_image", "save_image", "to_uint8", "from_uint8", "save_pairs", "load_pairs",
]

PSNR_CAP = 100.0
_PNG_SIG = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    pass


def psnr(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    # separable correlation, 'valid' extent
    k = len(g)
    v = np.lib.stride_tricks.sliding_window_view(img, k, axis=-2) @ g
    return np.lib.stride_tricks.sliding_window_view(v, k, axis=-1) @ g


def ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean SSIM, Gaussian window, computed per channel and averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < size:
        raise ValueError(f"ssim: image {a.shape[-2:]} smaller than the {size}x{size} window")
    g = gaussian_window(size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    per_channel = (num / den).reshape(a.shape[0], -1).mean(axis=1)
    return float(per_channel.mean())


# IO

def from_uint8(a):
    return np.asarray(a, dtype=np.float64) / 255.0


def to_uint8(img):
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def _read_ppm(data):
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1   # single whitespace byte after maxval
    if tokens[0] != b"P6":
        raise ImageFormatError(f"unsupported PPM magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM supported (maxval {maxval})")
    raw = data[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise ImageFormatError("truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


def _write_ppm(path, hwc):
    h, w, _ = hwc.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(hwc, dtype=np.uint8).tobytes())


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw, h, stride, bpp):
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int32)
    pos = 0
    for r in range(h):
        if pos + 1 + stride > len(raw):
            raise ImageFormatError("truncated PNG image data")
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int32)
        pos += 1 + stride
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = line.copy()
            for i in range(bpp, stride):
                cur[i] = (cur[i] + cur[i - bpp]) & 0xFF
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype == 3:
            cur = line.copy()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:
            cur = line.copy()
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                upleft = prev[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + _paeth(left, prev[i], upleft)) & 0xFF
        else:
            raise ImageFormatError(f"bad PNG filter type {ftype}")
        out[r] = cur
        prev = cur
    return out


def _read_png(data):
    if not data.startswith(_PNG_SIG):
        raise ImageFormatError("not a PNG file")
    pos = len(_PNG_SIG)
    idat = []
    hdr = None
    while True:
        if pos + 8 > len(data):
            raise ImageFormatError("truncated PNG chunk")
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + length]
        if len(body) != length:
            raise ImageFormatError("truncated PNG chunk")
        pos += 12 + length
        if ctype == b"IHDR":
            hdr = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.append(body)
        elif ctype == b"IEND":
            break
    if hdr is None:
        raise ImageFormatError("PNG without IHDR")
    w, h, depth, ctype, _, _, interlace = hdr
    channels = {0: 1, 2: 3, 6: 4}.get(ctype)
    if depth != 8 or channels is None or interlace:
        raise ImageFormatError(f"unsupported PNG (depth={depth}, color type={ctype}, interlace={interlace})")
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as e:
        raise ImageFormatError(f"corrupt PNG data: {e}") from None
    px = _unfilter(raw, h, w * channels, channels).reshape(h, w, channels)
    if channels == 1:
        px = np.repeat(px, 3, axis=2)
    return px[:, :, :3]


def _chunk(tag, body):
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)


def _write_png(path, hwc):
    h, w, _ = hwc.shape
    rows = np.concatenate([np.zeros((h, 1), np.uint8), hwc.reshape(h, w * 3)], axis=1)
    with open(path, "wb") as f:
        f.write(_PNG_SIG)
        f.write(_chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)))
        f.write(_chunk(b"IDAT", zlib.compress(rows.tobytes(), 9)))
        f.write(_chunk(b"IEND", b""))


def load_image(path):
    """Read an 8-bit RGB PNG or binary PPM as a ``(3, H, W)`` float image."""
    data = Path(path).read_bytes()
    if data.startswith(_PNG_SIG):
        hwc = _read_png(data)
    elif data[:2] == b"P6":
        hwc = _read_ppm(data)
    else:
        raise ImageFormatError(f"{path}: unsupported image format")
    return from_uint8(hwc).transpose(2, 0, 1)


def save_image(img, path):
    """Write a ``(3, H, W)`` image; format chosen from the suffix (.png / .ppm)."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {img.shape}")
    hwc = to_uint8(img).transpose(1, 2, 0)
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        _write_png(path, hwc)
    elif suffix in (".ppm", ".pnm"):
        _write_ppm(path, hwc)
    else:
        raise ImageFormatError(f"unsupported output format {suffix!r}")


# paired datasets: <dir>/pairs/<name>.clean.png + <name>.degraded.png

def _pairs_dir(root):
    root = Path(root)
    return root / "pairs" if (root / "pairs").is_dir() or root.name != "pairs" else root


def save_pairs(pairs, root, names=None):
    d = _pairs_dir(root)
    d.mkdir(parents=True, exist_ok=True)
    names = names or [f"{i:04d}" for i in range(len(pairs))]
    for name, (deg, clean) in zip(names, pairs):
        save_image(clean, d / f"{name}.clean.png")
        save_image(deg, d / f"{name}.degraded.png")
    return d


def load_pairs(root):
    """Return ``[(name, degraded, clean), ...]`` sorted by name."""
    d = _pairs_dir(root)
    if not d.is_dir():
        raise FileNotFoundError(f"no dataset directory at {d}")
    out = []
    for cp in sorted(d.glob("*.clean.png")):
        name = cp.name[:-len(".clean.png")]
        dp = d / f"{name}.degraded.png"
        if not dp.exists():
            raise FileNotFoundError(f"{dp} missing for {cp.name}")
        clean, deg = load_image(cp), load_image(dp)
        if clean.shape != deg.shape:
            raise ImageFormatError(f"{name}: clean {clean.shape} and degraded {deg.shape} differ")
        out.append((name, deg, clean))
    if not out:
        raise FileNotFoundError(f"no *.clean.png files in {d}")
    return out
