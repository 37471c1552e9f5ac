"""Target masks, the built-in demo glyphs, and PGM image IO."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

GLYPH_BASE = 16


class PGMError(ValueError):
    """Malformed or unsupported PGM file."""


@dataclass(frozen=True)
class TargetMask:
    """Transmission image with values in [0, 1]; 1 means target fully present."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("mask must be two-dimensional")
        if v.size and (np.nanmin(v) < 0.0 or np.nanmax(v) > 1.0 or np.isnan(v).any()):
            raise ValueError("mask entries must lie in [0, 1]")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, resolution) -> "TargetMask":
        return cls(np.zeros(resolution))

    @classmethod
    def ones(cls, resolution) -> "TargetMask":
        return cls(np.ones(resolution))

    def is_empty(self) -> bool:
        return not np.any(self.values)

    def support(self) -> np.ndarray:
        return self.values > 0

    def digest(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class Scene:
    true_target: TargetMask
    fake_target: TargetMask

    def __post_init__(self):
        if self.true_target.resolution != self.fake_target.resolution:
            raise ValueError(
                f"true/fake resolutions differ: {self.true_target.resolution} vs {self.fake_target.resolution}"
            )

    @property
    def resolution(self) -> tuple[int, int]:
        return self.true_target.resolution

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.true_target.values.tobytes())
        h.update(self.fake_target.values.tobytes())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------- PGM IO


def _read_tokens(data: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    tokens = []
    n = len(data)
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
            raise PGMError("truncated header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Decode a P5 or P2 PGM with maxval <= 255 into a uint8 array (rows, cols)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 2 or data[:2] not in (b"P5", b"P2"):
        raise PGMError(f"{path}: not a P5/P2 PGM")
    magic = data[:2]
    try:
        (w, h, maxval), pos = _read_tokens(data, 3, 2)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PGMError(f"{path}: bad header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise PGMError(f"{path}: unsupported dimensions or maxval {maxval}")
    if magic == b"P5":
        # exactly one whitespace byte separates maxval from raster
        pos += 1
        raster = data[pos : pos + width * height]
        if len(raster) != width * height:
            raise PGMError(f"{path}: raster truncated")
        pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    else:
        try:
            tokens, _ = _read_tokens(data, width * height, pos)
            pixels = np.array([int(t) for t in tokens], dtype=np.int64).reshape(height, width)
        except (ValueError, PGMError) as exc:
            raise PGMError(f"{path}: bad ASCII raster") from exc
    if pixels.max(initial=0) > maxval:
        raise PGMError(f"{path}: pixel exceeds maxval")
    if maxval != 255:
        pixels = np.rint(pixels * (255.0 / maxval))
    return pixels.astype(np.uint8)


def write_pgm(path, image: np.ndarray, tag: str = "") -> None:
    """Write an image already scaled to [0, 255] as binary P5 with one comment line."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be two-dimensional")
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    comment = tag.replace("\n", " ").replace("\r", " ")
    header = f"P5\n# {comment}\n{width} {height}\n255\n".encode("ascii")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())
    os.replace(tmp, path)


def load_mask(path, resolution=None, threshold: float = 0.5, binarize: bool = False) -> TargetMask:
    pixels = read_pgm(path)
    if resolution is not None and pixels.shape != tuple(resolution):
        raise PGMError(f"{path}: resolution {pixels.shape} != expected {tuple(resolution)}")
    values = pixels / 255.0
    if binarize:
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        values = (values >= threshold).astype(np.float64)
    return TargetMask(values)


def save_mask(path, mask: TargetMask, tag: str = "mask") -> None:
    write_pgm(path, mask.values * 255.0, tag=tag)


# ---------------------------------------------------------------- glyphs
# Rectangles on a 16x16 base grid as (row0, row1, col0, col1), half-open.

_SEVEN_SEGMENTS = {
    "a": (1, 3, 4, 12),
    "b": (1, 9, 10, 12),
    "c": (7, 15, 10, 12),
    "d": (13, 15, 4, 12),
    "e": (7, 15, 4, 6),
    "f": (1, 9, 4, 6),
    "g": (7, 9, 4, 12),
}

_GLYPHS = {
    "8": [_SEVEN_SEGMENTS[s] for s in "abcdefg"],
    "F": [_SEVEN_SEGMENTS[s] for s in "aefg"],
    "A": [(1, 3, 3, 9), (2, 15, 2, 4), (2, 15, 8, 10), (8, 10, 2, 10)],
    "D": [(1, 15, 6, 8), (1, 3, 6, 12), (13, 15, 6, 12), (3, 13, 12, 14), (2, 4, 11, 13), (12, 14, 11, 13)],
}


def _render(rects, n: int) -> np.ndarray:
    if n < 4:
        raise ValueError("glyphs need a resolution of at least 16x16 (n >= 4)")
    base = np.zeros((GLYPH_BASE, GLYPH_BASE))
    for r0, r1, c0, c1 in rects:
        base[r0:r1, c0:c1] = 1.0
    scale = 2 ** (n - 4)
    return np.kron(base, np.ones((scale, scale)))


def builtin_glyph(name: str, n: int) -> TargetMask:
    """Block rendering of one of the demo glyphs ``A``, ``D``, ``F``, ``8`` at ``2**n``."""
    try:
        rects = _GLYPHS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown glyph {name!r}; choose from {sorted(_GLYPHS)}") from None
    return TargetMask(_render(rects, n))


def glyph_difference(name: str, minus: str, n: int) -> TargetMask:
    """Pixels of glyph ``name`` not covered by glyph ``minus`` (e.g. "8" minus "F")."""
    a = builtin_glyph(name, n).values
    b = builtin_glyph(minus, n).values
    return TargetMask(np.where(b > 0, 0.0, a))


def parse_glyph_spec(spec: str, n: int) -> TargetMask:
    """Resolve ``"A"``, ``"8-F"``, ``"none"`` or ``"full"`` into a mask."""
    spec = spec.strip()
    side = 2**n
    if spec.lower() in ("none", "empty", "zero"):
        return TargetMask.zeros((side, side))
    if spec.lower() in ("full", "ones"):
        return TargetMask.ones((side, side))
    if "-" in spec:
        a, b = (s.strip() for s in spec.split("-", 1))
        return glyph_difference(a, b, n)
    return builtin_glyph(spec, n)
