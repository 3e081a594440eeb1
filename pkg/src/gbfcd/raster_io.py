"""Single-band raster and binary mask I/O.

Supported input formats: PGM (P2/P5, 8/16-bit), PNG (8/16-bit grayscale),
single-band (Geo)TIFF with uint8/uint16/float32 samples, and a raw float64
format with a 16-byte header: magic ``GBFR`` + u32 width + u32 height +
u32 reserved, all little-endian, followed by row-major float64 data.

Pixel index convention used by the whole pipeline: p = row * width + col
(row-major flattening).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import RasterIOError

GBFR_MAGIC = b"GBFR"

# Error-map colors (Fig-3 style): missed alarm, false alarm, correct change,
# correct no-change.
COLOR_MISSED = (0, 0, 255)
COLOR_FALSE = (255, 0, 0)
COLOR_CORRECT = (0, 255, 0)
COLOR_BACKGROUND = (255, 255, 255)


@dataclass(frozen=True)
class RasterImage:
    """One spectral band at one epoch, intensities as float64."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)  # flat, row-major, length width*height

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise RasterIOError(f"invalid raster size {self.width}x{self.height}")
        data = np.ascontiguousarray(self.data, dtype=np.float64).ravel()
        if data.size != self.width * self.height:
            raise RasterIOError(
                f"data length {data.size} != {self.width}x{self.height}"
            )
        if not np.all(np.isfinite(data)):
            raise RasterIOError("raster contains NaN or Inf values")
        object.__setattr__(self, "data", data)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def as_grid(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)


@dataclass(frozen=True)
class ChangeMask:
    """Binary change map; True = changed."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)  # flat bool, row-major

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=bool).ravel()
        if data.size != self.width * self.height:
            raise RasterIOError(
                f"mask length {data.size} != {self.width}x{self.height}"
            )
        object.__setattr__(self, "data", data)

    def as_grid(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)


def _read_pgm(raw: bytes, path) -> np.ndarray:
    # P2 is ASCII, P5 is binary; comments (#) allowed in the header.
    def tokens():
        i = 0
        while i < len(raw):
            c = raw[i : i + 1]
            if c == b"#":
                i = raw.find(b"\n", i)
                if i < 0:
                    return
                i += 1
            elif c.isspace():
                i += 1
            else:
                j = i
                while j < len(raw) and not raw[j : j + 1].isspace():
                    j += 1
                yield raw[i:j], j
                i = j

    it = tokens()
    try:
        magic, _ = next(it)
        (w, _), (h, _), (maxval, pos) = (next(it) for _ in range(3))
        w, h, maxval = int(w), int(h), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise RasterIOError(f"{path}: malformed PGM header") from exc
    if maxval <= 0 or maxval > 65535:
        raise RasterIOError(f"{path}: unsupported PGM maxval {maxval}")
    n = w * h
    if magic == b"P2":
        vals = []
        for tok, _ in it:
            vals.append(int(tok))
            if len(vals) == n:
                break
        arr = np.array(vals, dtype=np.float64)
    elif magic == b"P5":
        body = raw[pos + 1 :]
        dtype = ">u2" if maxval > 255 else "u1"
        arr = np.frombuffer(body, dtype=dtype, count=n).astype(np.float64)
    else:
        raise RasterIOError(f"{path}: not a PGM file (magic {magic!r})")
    if arr.size != n:
        raise RasterIOError(f"{path}: truncated PGM data")
    return arr.reshape(h, w)


def _read_gbfr(raw: bytes, path) -> np.ndarray:
    if len(raw) < 16:
        raise RasterIOError(f"{path}: truncated GBFR header")
    magic, w, h, _reserved = struct.unpack("<4sIII", raw[:16])
    if magic != GBFR_MAGIC:
        raise RasterIOError(f"{path}: bad GBFR magic")
    n = w * h
    arr = np.frombuffer(raw[16:], dtype="<f8", count=-1)
    if arr.size != n:
        raise RasterIOError(f"{path}: GBFR payload has {arr.size} values, expected {n}")
    return arr.reshape(h, w).astype(np.float64)


def _read_pil(path, band: int | None) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except Exception as exc:
        raise RasterIOError(f"{path}: unreadable image ({exc})") from exc
    if arr.ndim == 3:
        if band is None:
            raise RasterIOError(
                f"{path}: multi-band image with {arr.shape[2]} bands; pass a band index"
            )
        if not 0 <= band < arr.shape[2]:
            raise RasterIOError(f"{path}: band {band} out of range")
        arr = arr[:, :, band]
    elif arr.ndim != 2:
        raise RasterIOError(f"{path}: unsupported image layout {arr.shape}")
    return arr.astype(np.float64)


def load_raster(path, band: int | None = None, normalize: bool = False) -> RasterImage:
    """Load a single-band raster; integer samples map verbatim to float64.

    With normalize=True the intensities are rescaled to [0, 1] by the global
    min-max (a constant image maps to all zeros).
    """
    path = Path(path)
    if not path.is_file():
        raise RasterIOError(f"{path}: no such file")
    raw = path.read_bytes()
    if raw[:2] in (b"P2", b"P5"):
        grid = _read_pgm(raw, path)
    elif raw[:4] == GBFR_MAGIC:
        grid = _read_gbfr(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n" or raw[:4] in (b"II*\x00", b"MM\x00*"):
        grid = _read_pil(path, band)
    else:
        raise RasterIOError(f"{path}: unsupported format")
    if not np.all(np.isfinite(grid)):
        raise RasterIOError(f"{path}: NaN or Inf in input samples")
    if normalize:
        lo, hi = grid.min(), grid.max()
        grid = (grid - lo) / (hi - lo) if hi > lo else np.zeros_like(grid)
    h, w = grid.shape
    return RasterImage(width=w, height=h, data=grid)


def load_mask(path, changed_value: float = 255.0) -> ChangeMask:
    """Load a two-valued raster as a binary mask.

    Pixels equal to changed_value are labeled changed. More than two distinct
    values, or two values neither of which is changed_value, is an error.
    """
    img = load_raster(path)
    values = np.unique(img.data)
    if values.size > 2:
        shown = ", ".join(repr(v) for v in values[:8])
        raise RasterIOError(
            f"{path}: mask has {values.size} distinct values ({shown}); expected 2"
        )
    if values.size == 2 and changed_value not in values:
        raise RasterIOError(
            f"{path}: changed value {changed_value!r} not among mask values {values.tolist()}"
        )
    return ChangeMask(width=img.width, height=img.height, data=img.data == changed_value)


def write_gbfr(grid: np.ndarray, path) -> None:
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise RasterIOError("GBFR writer expects a 2-D array")
    h, w = grid.shape
    header = struct.pack("<4sIII", GBFR_MAGIC, w, h, 0)
    Path(path).write_bytes(header + grid.astype("<f8").tobytes())


def write_raster(img: RasterImage, path, dtype: str | None = None) -> None:
    """Write a raster; format chosen by extension (.pgm, .png, .gbfr).

    For PGM/PNG the sample type is uint8 or uint16 (auto-selected from the
    value range when dtype is None); GBFR stores float64 verbatim.
    """
    path = Path(path)
    ext = path.suffix.lower()
    grid = img.as_grid()
    if ext == ".gbfr":
        write_gbfr(grid, path)
        return
    if dtype is None:
        if np.all(grid == np.round(grid)) and grid.min() >= 0 and grid.max() <= 65535:
            dtype = "uint8" if grid.max() <= 255 else "uint16"
        else:
            raise RasterIOError(
                f"{path}: non-integer intensities need the .gbfr format or explicit dtype"
            )
    if dtype not in ("uint8", "uint16"):
        raise RasterIOError(f"unsupported output dtype {dtype!r}")
    quant = grid.astype(np.uint8 if dtype == "uint8" else np.uint16)
    if ext == ".pgm":
        maxval = 255 if dtype == "uint8" else 65535
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode()
        body = quant.astype("u1" if dtype == "uint8" else ">u2").tobytes()
        path.write_bytes(header + body)
    elif ext == ".png":
        if dtype == "uint8":
            Image.fromarray(quant).save(path)
        else:
            Image.fromarray(quant.astype(np.int32)).convert("I;16").save(path)
    else:
        raise RasterIOError(f"{path}: unsupported output format {ext!r}")


def write_mask(mask: ChangeMask, path) -> None:
    """Write a binary mask as 8-bit PNG, changed=255."""
    grid = np.where(mask.as_grid(), 255, 0).astype(np.uint8)
    Image.fromarray(grid, mode="L").save(Path(path))


def render_error_map(pred: ChangeMask, ref: ChangeMask) -> np.ndarray:
    """Color-coded agreement map, shape (height, width, 3) uint8.

    Blue = missed alarm (ref changed, pred not), red = false alarm,
    green = correctly detected change, white = correct no-change.
    """
    if (pred.width, pred.height) != (ref.width, ref.height):
        raise RasterIOError(
            f"error map size mismatch: pred {pred.width}x{pred.height}, "
            f"ref {ref.width}x{ref.height}"
        )
    p = pred.as_grid()
    r = ref.as_grid()
    out = np.empty((pred.height, pred.width, 3), dtype=np.uint8)
    out[:] = COLOR_BACKGROUND
    out[r & ~p] = COLOR_MISSED
    out[~r & p] = COLOR_FALSE
    out[r & p] = COLOR_CORRECT
    return out


def write_rgb(rgb: np.ndarray, path) -> None:
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), mode="RGB").save(Path(path))
