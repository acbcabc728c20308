"""Binary segment masks: compact RLE codec, bounding boxes, overlap measures.

Masks are stored run-length encoded in column-major order and all set
operations work directly on the runs; dense arrays are only materialised
for rendering/export.

Compact RLE string layout (byte-exact with the format used by the common
MOTS/COCO tooling): the run counts of the column-major pixel stream
(first count is background, counts alternate) are delta-coded against the
count two positions back from the fourth count onward, then each value is
written little-endian in 5-bit groups; bit 5 of a character is the
continuation flag and every character is offset by 48, so the alphabet is
the 64 ASCII characters '0'..'o'.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import accumulate

import numpy as np


class MaskError(ValueError):
    """Mask data violates an invariant (run sums, dimensions, emptiness)."""


class RleDecodeError(MaskError):
    """Compact RLE string is malformed; carries the offending byte offset."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box: top-left corner (x, y) and size (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box size must be non-negative, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class BinaryMask:
    """Column-major run-length encoded width x height binary mask.

    ``runs`` alternate background/foreground pixel counts along the
    column-major pixel stream, starting with background. Only the first
    run may be zero (mask starting with foreground) and the counts sum to
    ``width * height``.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise MaskError(f"negative mask dimensions {self.width}x{self.height}")
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if not self.runs:
            raise MaskError("runs may not be empty")
        if any(r < 0 for r in self.runs):
            raise MaskError("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise MaskError("zero-length run after the first")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise MaskError(
                f"run sum {total} does not cover {self.width}x{self.height} mask"
            )

    @cached_property
    def area(self) -> int:
        return sum(self.runs[1::2])

    @cached_property
    def intervals(self) -> tuple[tuple[int, int], ...]:
        """Foreground [start, stop) intervals in column-major pixel indices."""
        edges = list(accumulate(self.runs))
        return tuple((edges[i - 1], edges[i]) for i in range(1, len(edges), 2))

    def is_empty(self) -> bool:
        return self.area == 0

    def to_array(self) -> np.ndarray:
        """Dense (height, width) bool array. Rendering/debug path only."""
        flat = np.zeros(self.width * self.height, dtype=bool)
        for start, stop in self.intervals:
            flat[start:stop] = True
        return flat.reshape((self.height, self.width), order="F")

    @classmethod
    def from_array(cls, array: np.ndarray) -> "BinaryMask":
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise MaskError(f"expected 2-d array, got shape {arr.shape}")
        h, w = arr.shape
        flat = arr.ravel(order="F").astype(np.int8)
        if flat.size == 0:
            return cls(width=w, height=h, runs=(0,))
        bounded = np.concatenate(([-1], flat, [-1]))
        borders = np.nonzero(np.diff(bounded))[0]
        runs = np.diff(borders)
        if flat[0]:
            runs = np.concatenate(([0], runs))
        return cls(width=w, height=h, runs=tuple(int(r) for r in runs))


def rle_encode(mask: BinaryMask) -> str:
    """Encode a mask's runs as the compact 6-bit character string.

    The encoding is canonical: each mask has exactly one string form.
    """
    chars = []
    runs = mask.runs
    for i, value in enumerate(runs):
        x = value - runs[i - 2] if i > 2 else value
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def rle_decode(encoded: str, height: int, width: int) -> BinaryMask:
    """Decode a compact RLE string into a ``height`` x ``width`` mask."""
    counts: list[int] = []
    pos = 0
    n = len(encoded)
    while pos < n:
        x = 0
        k = 0
        more = True
        while more:
            if pos >= n:
                raise RleDecodeError("truncated run value", pos)
            c = ord(encoded[pos]) - 48
            if c < 0 or c > 63:
                raise RleDecodeError(
                    f"character {encoded[pos]!r} outside the 6-bit alphabet", pos
                )
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            pos += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    if not counts:
        counts = [height * width]
    if sum(counts) != height * width:
        raise MaskError(
            f"decoded run sum {sum(counts)} does not match {height}x{width} mask"
        )
    return BinaryMask(width=width, height=height, runs=tuple(counts))


def _intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    ia, ib = a.intervals, b.intervals
    i = j = 0
    total = 0
    while i < len(ia) and j < len(ib):
        start = max(ia[i][0], ib[j][0])
        stop = min(ia[i][1], ib[j][1])
        if start < stop:
            total += stop - start
        if ia[i][1] <= ib[j][1]:
            i += 1
        else:
            j += 1
    return total


def _require_same_shape(a: BinaryMask, b: BinaryMask):
    if a.width != b.width or a.height != b.height:
        raise MaskError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Pixel-wise intersection over union. Two empty masks give 0.0."""
    _require_same_shape(a, b)
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def box_iou(a: BBox, b: BBox) -> float:
    """Rectangle intersection over union. Two empty boxes give 0.0."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(0, ix) * max(0, iy)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def mask_bbox(mask: BinaryMask) -> BBox:
    """Tight bounding box of the foreground. Raises on an empty mask."""
    if mask.is_empty():
        raise MaskError("cannot take the bounding box of an empty mask")
    h = mask.height
    min_col = min_row = None
    max_col = max_row = -1
    for start, stop in mask.intervals:
        first_col, last_col = start // h, (stop - 1) // h
        if min_col is None:
            min_col = first_col  # intervals are sorted, first one has the min column
        max_col = max(max_col, last_col)
        if first_col == last_col:
            row_lo, row_hi = start % h, (stop - 1) % h
        else:
            # crossing a column boundary touches both row 0 and row h-1
            row_lo, row_hi = 0, h - 1
        min_row = row_lo if min_row is None else min(min_row, row_lo)
        max_row = max(max_row, row_hi)
    return BBox(x=min_col, y=min_row, w=max_col - min_col + 1, h=max_row - min_row + 1)


def mask_union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixel-wise union of two same-size masks, returned run-encoded."""
    _require_same_shape(a, b)
    merged: list[list[int]] = []
    for start, stop in sorted(list(a.intervals) + list(b.intervals)):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], stop)
        else:
            merged.append([start, stop])
    runs = []
    cursor = 0
    for start, stop in merged:
        runs.append(start - cursor)
        runs.append(stop - start)
        cursor = stop
    tail = a.width * a.height - cursor
    if tail or not runs:
        runs.append(tail)
    return BinaryMask(width=a.width, height=a.height, runs=tuple(runs))


def write_pgm(mask: BinaryMask, path) -> None:
    """Dump the mask as a binary PGM image for eyeball debugging."""
    arr = mask.to_array().astype(np.uint8) * 255
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
