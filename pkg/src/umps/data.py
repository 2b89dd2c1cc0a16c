"""Datasets and on-disk formats.

Covers bars-and-stripes generation, IDX image ingestion, grayscale
binarization, column-major flattening, plain-text bit-string datasets,
PGM export, and the binary model file format.

Flattening convention: an image is stored row-major as a (height, width)
grid, but chains read pixels column by column -- output position
``c * height + r`` (0-based) holds pixel (row r, column c).  For a 28x28
image the right half (columns 14..27) therefore occupies 1-based sites
393..784.  IDX files are row-major, so images are transposed at this
boundary exactly once.

Model file format (version 1, all integers little-endian):

    magic   4 bytes  b"UMPS"
    version u16
    d       u32      number of cores
    gauge   u8       0 = none, 1 = center, 2 = two-site
    site    u32      0-based gauge site (0 when gauge is none)
    cores   d times: r_left u32, r_right u32,
                     r_left*2*r_right float64, C order (right index fastest)
    digest  8 bytes  BLAKE2b-64 of every preceding byte

Round trips are bit-exact; readers refuse unknown magic, future
versions, truncated payloads, and checksum mismatches.
"""

import hashlib
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import IdxFormatError, ModelFormatError
from .mps import Gauge, Mps

MODEL_MAGIC = b"UMPS"
MODEL_VERSION = 1
_GAUGE_CODES = {"none": 0, "center": 1, "two_site": 2}
_GAUGE_KINDS = {v: k for k, v in _GAUGE_CODES.items()}

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass(frozen=True)
class BinaryImage:
    """Row-major binary pixel grid."""

    width: int
    height: int
    bits: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits), dtype=np.uint8)
        if bits.shape != (self.height, self.width):
            raise ValueError(f"bit grid shape {bits.shape} != ({self.height}, {self.width})")
        if bits.max(initial=0) > 1:
            raise ValueError("image bits must be 0/1")
        object.__setattr__(self, "bits", bits)


@dataclass(frozen=True)
class BinaryDataset:
    """Multiset of equal-length bit strings, stored as a (n, d) uint8 matrix."""

    bits: np.ndarray
    source: str = ""

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits), dtype=np.uint8)
        if bits.ndim != 2 or bits.shape[0] == 0 or bits.shape[1] == 0:
            raise ValueError(f"expected a nonempty (n, d) bit matrix, got shape {bits.shape}")
        if bits.max(initial=0) > 1:
            raise ValueError("dataset entries must be binary")
        object.__setattr__(self, "bits", bits)

    @property
    def d(self):
        return self.bits.shape[1]

    def __len__(self):
        return self.bits.shape[0]

    def strings(self):
        return ["".join(map(str, row)) for row in self.bits]

    def empirical(self):
        """Empirical distribution as exact fractions, summing to 1."""
        n = len(self)
        counts = {}
        for s in self.strings():
            counts[s] = counts.get(s, 0) + 1
        return {s: Fraction(c, n) for s, c in counts.items()}

    def subset(self, count, seed=None):
        """Uniform random subset (without replacement) of ``count`` entries."""
        if not 1 <= count <= len(self):
            raise ValueError(f"subset size {count} out of range 1..{len(self)}")
        idx = np.random.default_rng(seed).choice(len(self), size=count, replace=False)
        return BinaryDataset(self.bits[np.sort(idx)], source=f"{self.source}[{count}]")

    @classmethod
    def from_strings(cls, strings, source=""):
        rows = [[int(c) for c in s] for s in strings]
        return cls(np.asarray(rows, dtype=np.uint8), source=source)

    @classmethod
    def from_images(cls, images, source=""):
        return cls(np.stack([flatten(img) for img in images]), source=source)


def flatten(img):
    """Column-major flattening of a :class:`BinaryImage` to a length-w*h vector."""
    return np.ascontiguousarray(img.bits.T).reshape(-1)


def unflatten(bits, width, height):
    """Inverse of :func:`flatten`."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size != width * height:
        raise ValueError(f"{bits.size} bits cannot fill a {width}x{height} image")
    return BinaryImage(width=width, height=height, bits=bits.reshape(width, height).T)


def _mask_bits(masks, n):
    return ((np.asarray(masks).reshape(-1, 1) >> np.arange(n)) & 1).astype(np.uint8)


def bas_pattern_count(n):
    """Number of distinct n x n bars-and-stripes images: 2*2^n - 2."""
    return 2 * 2**n - 2


def bas_generate(n, count=None, seed=None):
    """Bars-and-stripes dataset of n x n images, flattened column-major.

    Bars set each row uniformly on or off, stripes each column; the two
    all-constant images belong to both families and appear once.  With
    ``count=None`` every distinct pattern appears exactly once
    (2*2^n - 2 entries); otherwise ``count`` patterns are drawn uniformly
    with replacement using ``seed``.
    """
    if n < 1:
        raise ValueError(f"image side {n} must be >= 1")
    if count is None:
        bar_masks = np.arange(2**n)
        stripe_masks = np.arange(1, 2**n - 1)  # all-constant masks counted as bars
    else:
        if count < 1:
            raise ValueError(f"sample count {count} must be >= 1")
        idx = np.random.default_rng(seed).integers(0, bas_pattern_count(n), size=count)
        bar_masks = idx[idx < 2**n]
        stripe_masks = idx[idx >= 2**n] - 2**n + 1
    # A bar image repeats its row mask along every column; column-major
    # flattening therefore tiles the mask, while a stripe image repeats
    # each column bit over a whole column.
    bars = np.tile(_mask_bits(bar_masks, n), (1, n))
    stripes = np.repeat(_mask_bits(stripe_masks, n), n, axis=1)
    bits = np.vstack([bars, stripes])
    if count is not None:
        # restore the drawn order blended across the two families
        order = np.argsort(np.concatenate([np.flatnonzero(idx < 2**n), np.flatnonzero(idx >= 2**n)]), kind="stable")
        bits = bits[order]
    return BinaryDataset(bits, source=f"bas:{n}")


def is_bas_pattern(bits, n):
    """True if a flattened length-n^2 string is a valid bars-and-stripes image."""
    img = unflatten(np.asarray(bits, dtype=np.uint8), n, n)
    rows_constant = bool(np.all(img.bits == img.bits[:, :1]))
    cols_constant = bool(np.all(img.bits == img.bits[:1, :]))
    return rows_constant or cols_constant


def load_idx(path):
    """Parse a big-endian IDX file of u8 images (magic 0x803) or labels (0x801).

    Returns a (n, rows, cols) uint8 array for images or a (n,) uint8
    array for labels.  Malformed files raise :class:`IdxFormatError`
    with the byte offset of the failure.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(offset, size, what):
        if offset + size > len(blob):
            raise IdxFormatError(f"truncated file while reading {what}", offset=len(blob))
        return blob[offset : offset + size]

    magic = struct.unpack(">I", take(0, 4, "magic"))[0]
    if magic == IDX_MAGIC_IMAGES:
        n, rows, cols = struct.unpack(">III", take(4, 12, "image dimensions"))
        if rows == 0 or cols == 0 or n > 2**31 or rows * cols > 2**24:
            raise IdxFormatError(f"implausible image dimensions {n}x{rows}x{cols}", offset=4)
        payload = take(16, n * rows * cols, f"{n} images of {rows}x{cols} pixels")
        return np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols).copy()
    if magic == IDX_MAGIC_LABELS:
        (n,) = struct.unpack(">I", take(4, 4, "label count"))
        payload = take(8, n, f"{n} labels")
        return np.frombuffer(payload, dtype=np.uint8).copy()
    raise IdxFormatError(
        f"bad magic 0x{magic:08x}; expected 0x{IDX_MAGIC_IMAGES:08x} (u8 images) "
        f"or 0x{IDX_MAGIC_LABELS:08x} (u8 labels)",
        offset=0,
    )


def binarize(pixels, threshold=0.5):
    """Threshold a grayscale (height, width) array into a :class:`BinaryImage`.

    A pixel maps to 1 iff ``pixel/255 > threshold``; the default 0.5 is a
    documented choice, not a property of any dataset.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale array, got shape {pixels.shape}")
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > 255:
        raise ValueError("pixel values must lie in [0, 255]")
    bits = (pixels / 255.0 > threshold).astype(np.uint8)
    h, w = pixels.shape
    return BinaryImage(width=w, height=h, bits=bits)


def save_model(mps, path):
    """Write a chain to the versioned binary format (bit-exact round trip)."""
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<HI", MODEL_VERSION, mps.d)
    g = mps.gauge
    out += struct.pack("<BI", _GAUGE_CODES[g.kind], g.site or 0)
    for core in mps.cores:
        r_l, _, r_r = core.shape
        out += struct.pack("<II", r_l, r_r)
        out += np.ascontiguousarray(core, dtype="<f8").tobytes()
    out += hashlib.blake2b(bytes(out), digest_size=8).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_model(path):
    """Read a model file written by :func:`save_model`."""
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(offset, size, what):
        if offset + size > len(blob):
            raise ModelFormatError(f"truncated file while reading {what}", offset=len(blob))
        return blob[offset : offset + size]

    if take(0, 4, "magic") != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {blob[:4]!r}; expected {MODEL_MAGIC!r}", offset=0)
    version, d = struct.unpack("<HI", take(4, 6, "header"))
    if version > MODEL_VERSION:
        raise ModelFormatError(
            f"file version {version} is newer than supported version {MODEL_VERSION}", offset=4
        )
    if len(blob) < 8:
        raise ModelFormatError("file too short to carry a checksum", offset=len(blob))
    digest = hashlib.blake2b(blob[:-8], digest_size=8).digest()
    if digest != blob[-8:]:
        raise ModelFormatError("checksum mismatch (payload corrupted)", offset=len(blob) - 8)
    code, site = struct.unpack("<BI", take(10, 5, "gauge"))
    if code not in _GAUGE_KINDS:
        raise ModelFormatError(f"unknown gauge code {code}", offset=10)
    kind = _GAUGE_KINDS[code]
    gauge = Gauge(kind, None if kind == "none" else site)
    offset = 15
    cores = []
    for i in range(d):
        r_l, r_r = struct.unpack("<II", take(offset, 8, f"core {i} bonds"))
        offset += 8
        size = r_l * 2 * r_r * 8
        payload = take(offset, size, f"core {i} data ({r_l}x2x{r_r})")
        offset += size
        core = np.frombuffer(payload, dtype="<f8").reshape(r_l, 2, r_r)
        if not np.all(np.isfinite(core)):
            raise ModelFormatError(f"core {i} contains non-finite values", offset=offset - size)
        cores.append(core.copy())
    if offset != len(blob) - 8:
        raise ModelFormatError(f"{len(blob) - 8 - offset} unexpected trailing bytes", offset=offset)
    return Mps(tuple(cores), gauge)


def load_dataset_text(path, source=None):
    """Read a text dataset: one bit string per line, '#' comments, blanks ignored."""
    strings = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if set(line) - {"0", "1"}:
                raise ValueError(f"{path}:{lineno}: invalid bit string {line!r}")
            strings.append(line)
    if not strings:
        raise ValueError(f"{path}: no bit strings found")
    lengths = {len(s) for s in strings}
    if len(lengths) != 1:
        raise ValueError(f"{path}: inconsistent string lengths {sorted(lengths)}")
    return BinaryDataset.from_strings(strings, source=source or f"file:{path}")


def save_dataset_text(dataset, path, comments=()):
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        for s in dataset.strings():
            fh.write(s + "\n")


def write_pgm(path, pixels, comments=()):
    """Write a grayscale (height, width) uint8 array as a binary PGM (P5)."""
    pixels = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
    if pixels.ndim != 2:
        raise ValueError(f"PGM export needs a 2-d array, got shape {pixels.shape}")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        for line in comments:
            fh.write(f"# {line}\n".encode())
        fh.write(f"{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def samples_to_grid(bits, width, height, pad=1):
    """Arrange flattened samples into one grayscale grid image (1 -> black)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim == 1:
        bits = bits[None, :]
    n = bits.shape[0]
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    grid = np.full(
        (rows * height + (rows + 1) * pad, cols * width + (cols + 1) * pad), 128, dtype=np.uint8
    )
    for i in range(n):
        img = unflatten(bits[i], width, height)
        r, c = divmod(i, cols)
        top = pad + r * (height + pad)
        left = pad + c * (width + pad)
        grid[top : top + height, left : left + width] = np.where(img.bits == 1, 0, 255)
    return grid
