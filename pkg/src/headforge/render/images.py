"""Image encoding and file formats: PNG (sRGB), PFM, Radiance HDR."""
from __future__ import annotations

import numpy as np
from PIL import Image


class ImageIOError(ValueError):
    pass


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def write_png(path, image: np.ndarray) -> None:
    """Linear [0,1] float (H, W, 3) -> sRGB-encoded 8-bit PNG."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageIOError(f"expected (H, W, 3), got {img.shape}")
    u8 = np.round(linear_to_srgb(img) * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """8-bit PNG -> linear float32 (H, W, 3)."""
    with Image.open(path) as im:
        u8 = np.asarray(im.convert("RGB"), dtype=np.float64)
    return srgb_to_linear(u8 / 255.0).astype(np.float32)


def write_pfm(path, image: np.ndarray) -> None:
    """Linear float32, little-endian, bottom-up rows (scale -1.0)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        header, data = b"Pf", img
    elif img.ndim == 3 and img.shape[2] == 3:
        header, data = b"PF", img
    else:
        raise ImageIOError(f"PFM supports (H, W) or (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(data[::-1]).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic not in (b"PF", b"Pf"):
            raise ImageIOError(f"not a PFM file: magic {magic!r}")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        count = w * h * (3 if magic == b"PF" else 1)
        dt = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(count * 4), dtype=dt).astype(np.float32)
    shape = (h, w, 3) if magic == b"PF" else (h, w)
    return data.reshape(shape)[::-1].copy()


def _to_rgbe(rgb: np.ndarray) -> np.ndarray:
    m = rgb.max(axis=-1)
    out = np.zeros(rgb.shape[:-1] + (4,), np.uint8)
    live = m >= 1e-32
    exp = np.zeros_like(m, dtype=np.int32)
    mant = np.zeros_like(m)
    mant[live], exp[live] = np.frexp(m[live])
    scale = np.zeros_like(m)
    scale[live] = mant[live] * 256.0 / m[live]
    out[..., :3] = np.clip(rgb * scale[..., None], 0, 255).astype(np.uint8)
    out[..., 3] = np.where(live, exp + 128, 0).astype(np.uint8)
    return out


def _from_rgbe(rgbe: np.ndarray) -> np.ndarray:
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return (rgbe[..., :3].astype(np.float32) * scale[..., None].astype(np.float32))


def write_hdr(path, image: np.ndarray) -> None:
    """Radiance RGBE, flat (uncompressed) scanlines."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageIOError(f"expected (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
        f.write(f"-Y {h} +X {w}\n".encode())
        f.write(_to_rgbe(img).tobytes())


def _decode_rle_scanline(f, width: int) -> np.ndarray:
    row = np.empty((width, 4), np.uint8)
    for ch in range(4):
        pos = 0
        while pos < width:
            head = f.read(1)
            if not head:
                raise ImageIOError("truncated HDR scanline")
            n = head[0]
            if n > 128:  # run
                row[pos: pos + n - 128, ch] = f.read(1)[0]
                pos += n - 128
            else:  # literal
                lit = f.read(n)
                row[pos: pos + n, ch] = np.frombuffer(lit, np.uint8)
                pos += n
    return row


def read_hdr(path) -> np.ndarray:
    """Radiance RGBE reader: flat and adjacent-pixel RLE scanlines."""
    with open(path, "rb") as f:
        if f.readline().strip() not in (b"#?RADIANCE", b"#?RGBE"):
            raise ImageIOError("not a Radiance HDR file")
        while True:
            line = f.readline()
            if not line:
                raise ImageIOError("missing HDR resolution line")
            if line.strip() == b"":
                break
        res = f.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise ImageIOError(f"unsupported HDR orientation: {res}")
        h, w = int(res[1]), int(res[3])
        rows = []
        for _ in range(h):
            lead = f.read(4)
            if len(lead) < 4:
                raise ImageIOError("truncated HDR data")
            if lead[0] == 2 and lead[1] == 2 and (lead[2] << 8 | lead[3]) == w:
                rows.append(_decode_rle_scanline(f, w))
            else:
                rest = f.read((w - 1) * 4)
                flat = np.frombuffer(lead + rest, np.uint8).reshape(w, 4)
                rows.append(flat.copy())
    return _from_rgbe(np.stack(rows))
