"""Shared types, file formats and seeded randomness.

Images are plain 2-D float arrays with values in ``[0, 1]``; pattern stacks,
ROIs and measurement records get small immutable containers.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DecodeError",
    "FormatError",
    "Roi",
    "PatternStack",
    "MeasurementRecord",
    "RngSpec",
    "load_image",
    "image_shape",
    "read_pnm",
    "write_pgm",
    "resize_bilinear",
    "save_pattern_stack",
    "load_pattern_stack",
]

STACK_MAGIC = b"RGIP"
STACK_VERSION = 1
_STACK_HEADER = struct.Struct("<4sBIII")


class DecodeError(ValueError):
    """Raised when an image file cannot be decoded."""


class FormatError(ValueError):
    """Raised when a binary container is malformed."""


@dataclass(frozen=True)
class Roi:
    """Axis-aligned rectangle in pixel units."""

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"ROI must be at least 1x1, got {self.height}x{self.width}")
        if self.top < 0 or self.left < 0:
            raise ValueError("ROI offsets must be non-negative")

    @classmethod
    def centered(cls, frame_shape, roi_shape) -> "Roi":
        fh, fw = frame_shape
        rh, rw = roi_shape
        return cls((fh - rh) // 2, (fw - rw) // 2, rh, rw)

    @classmethod
    def full(cls, frame_shape) -> "Roi":
        return cls(0, 0, *frame_shape)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def area(self) -> int:
        return self.height * self.width

    @property
    def slices(self) -> tuple[slice, slice]:
        return (slice(self.top, self.top + self.height), slice(self.left, self.left + self.width))

    def fits(self, frame_shape) -> bool:
        fh, fw = frame_shape
        return self.top + self.height <= fh and self.left + self.width <= fw

    def covers(self, frame_shape) -> bool:
        return self.top == 0 and self.left == 0 and self.shape == tuple(frame_shape)

    def mask(self, frame_shape) -> np.ndarray:
        m = np.zeros(frame_shape, dtype=bool)
        m[self.slices] = True
        return m

    def to_dict(self) -> dict:
        return {"top": self.top, "left": self.left, "height": self.height, "width": self.width}

    @classmethod
    def from_dict(cls, d) -> "Roi":
        return cls(int(d["top"]), int(d["left"]), int(d["height"]), int(d["width"]))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PatternStack:
    """Ordered binary illumination patterns, stored as a ``(T, H, W)`` uint8 array."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 3:
            raise ValueError(f"pattern stack must be 3-D (T, H, W), got shape {bits.shape}")
        if bits.shape[1] < 1 or bits.shape[2] < 1:
            raise ValueError("pattern height and width must be >= 1")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("pattern entries must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(bits.astype(np.uint8, copy=True)))

    @classmethod
    def empty(cls, height: int, width: int) -> "PatternStack":
        return cls(np.zeros((0, height, width), dtype=np.uint8))

    @property
    def count(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape[1:]

    @property
    def height(self) -> int:
        return self.bits.shape[1]

    @property
    def width(self) -> int:
        return self.bits.shape[2]

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, PatternStack):
            return NotImplemented
        return self.bits.shape == other.bits.shape and np.array_equal(self.bits, other.bits)

    def as_matrix(self) -> np.ndarray:
        """Return the ``(T, H*W)`` float design matrix, rows in row-major pixel order."""
        return self.bits.reshape(self.count, -1).astype(np.float64)

    def __getitem__(self, idx) -> "PatternStack":
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return PatternStack(self.bits[idx])


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Bucket-detector intensities, one per pattern, with optional noise metadata."""

    intensities: np.ndarray
    noise_power_dbw: float | None = None
    rng_seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.intensities, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("intensities must be 1-D")
        object.__setattr__(self, "intensities", _frozen(v.copy()))

    @property
    def count(self) -> int:
        return self.intensities.shape[0]

    @property
    def noisy(self) -> bool:
        return self.noise_power_dbw is not None

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, MeasurementRecord):
            return NotImplemented
        return (
            np.array_equal(self.intensities, other.intensities)
            and self.noise_power_dbw == other.noise_power_dbw
            and self.rng_seed == other.rng_seed
        )

    def metadata(self) -> dict:
        return {"count": self.count, "noise_power_dbw": self.noise_power_dbw, "rng_seed": self.rng_seed}


_BIT_GENERATORS = {"pcg64": np.random.PCG64, "philox": np.random.Philox}


def _key_word(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("substream keys must be non-negative")
    return k


@dataclass(frozen=True)
class RngSpec:
    """Seed plus generator tag; every random draw in the package starts here.

    ``substream(*key)`` derives an independent child stream, so callers can
    mix a purpose label and an index (e.g. a pattern number) into the seed and
    get the same bits whether the work runs serially or in parallel.
    """

    seed: int
    algorithm: str = "pcg64"
    key: tuple = field(default=())

    def __post_init__(self):
        if self.algorithm not in _BIT_GENERATORS:
            raise ValueError(f"unknown rng algorithm {self.algorithm!r}; choose from {sorted(_BIT_GENERATORS)}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def substream(self, *key) -> "RngSpec":
        return RngSpec(self.seed, self.algorithm, self.key + tuple(_key_word(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(_BIT_GENERATORS[self.algorithm](ss))


# ---------------------------------------------------------------------------
# images

def _pnm_tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header fields; return them and the payload offset."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DecodeError("truncated PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header and raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise DecodeError("truncated PNM header")
    return tokens, pos + 1


def read_pnm(path) -> np.ndarray:
    """Decode a binary PGM (P5) or PPM (P6) file with maxval 255.

    Returns ``(H, W)`` or ``(H, W, 3)`` uint8.
    """
    data = Path(path).read_bytes()
    if data[:2] not in (b"P5", b"P6"):
        raise DecodeError(f"{path}: not a binary PGM/PPM file")
    channels = 1 if data[:2] == b"P5" else 3
    tokens, offset = _pnm_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise DecodeError(f"{path}: malformed PNM header") from exc
    if maxval != 255:
        raise DecodeError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise DecodeError(f"{path}: empty image")
    need = width * height * channels
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise DecodeError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
    a = np.frombuffer(raster, dtype=np.uint8)
    return a.reshape((height, width) if channels == 1 else (height, width, 3)).copy()


def _read_other(path) -> np.ndarray:
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover - Pillow is optional
        raise DecodeError(f"{path}: not PGM/PPM and Pillow is not installed") from exc
    try:
        with PILImage.open(path) as im:
            im = im.convert("L") if im.mode in ("L", "1", "P", "LA") else im.convert("RGB")
            return np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def write_pgm(path, image) -> None:
    """Write a ``[0, 1]`` float image (or a uint8 array) as 8-bit binary PGM."""
    a = np.asarray(image)
    if a.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if a.dtype != np.uint8:
        a = np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + a.tobytes())


def resize_bilinear(a: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centred sampling and clamped edges."""
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape
    if (h, w) == (height, width):
        return a.copy()

    def axis(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    r0, r1, fr = axis(h, height)
    c0, c1, fc = axis(w, width)
    top = a[r0][:, c0] * (1 - fc) + a[r0][:, c1] * fc
    bot = a[r1][:, c0] * (1 - fc) + a[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def _decode(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"{path}: no such file")
    with path.open("rb") as fh:
        magic = fh.read(2)
    return read_pnm(path) if magic in (b"P5", b"P6") else _read_other(path)


def image_shape(path) -> tuple[int, int]:
    """Native ``(height, width)`` of an image file."""
    return _decode(path).shape[:2]


def load_image(path, target_h: int, target_w: int) -> np.ndarray:
    """Load a grayscale image resized to ``(target_h, target_w)`` with values in ``[0, 1]``.

    PGM/PPM are decoded natively; other formats go through Pillow when it is
    installed. RGB is collapsed by the unweighted channel mean.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target size must be positive, got {target_h}x{target_w}")
    gray = _decode(path).astype(np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    out = resize_bilinear(gray, target_h, target_w) / 255.0
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# pattern-stack container

def save_pattern_stack(stack: PatternStack, path) -> None:
    t, h, w = stack.bits.shape
    flat = stack.bits.reshape(t, h * w)
    payload = np.packbits(flat, axis=1, bitorder="big") if t else b""
    with open(path, "wb") as fh:
        fh.write(_STACK_HEADER.pack(STACK_MAGIC, STACK_VERSION, t, h, w))
        fh.write(bytes(payload) if t else b"")


def load_pattern_stack(path) -> PatternStack:
    data = Path(path).read_bytes()
    if len(data) < _STACK_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, t, h, w = _STACK_HEADER.unpack_from(data)
    if magic != STACK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != STACK_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if h < 1 or w < 1:
        raise FormatError(f"{path}: invalid pattern size {h}x{w}")
    row_bytes = (h * w + 7) // 8
    payload = data[_STACK_HEADER.size :]
    if len(payload) != t * row_bytes:
        raise FormatError(f"{path}: expected {t * row_bytes} payload bytes, found {len(payload)}")
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(t, row_bytes)
    bits = np.unpackbits(packed, axis=1, count=h * w, bitorder="big")
    return PatternStack(bits.reshape(t, h, w))
