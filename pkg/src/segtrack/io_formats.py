"""File formats: detection/result records, frame images, config files.

Detections: whitespace-separated text, one record per line
    frame class confidence img_h img_w rle
Results/ground truth: one emitted mask per line
    frame object_id class img_h img_w rle
where object_id = class * 1000 + instance index (instance < 1000) and
class 10 marks ignore regions in ground-truth files.

Config files are plain ``key = value`` lines with ``#`` comments.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .masks import BinaryMask, MaskError, mask_bbox, rle_decode, rle_encode

CLASS_CAR = 1
CLASS_PEDESTRIAN = 2
CLASS_IGNORE = 10
DEFAULT_CONF_THRESHOLDS = {CLASS_CAR: 0.6, CLASS_PEDESTRIAN: 0.7}


class DataFormatError(ValueError):
    """A file does not follow the expected record layout."""


@dataclass(frozen=True)
class DetectionRecord:
    frame: int
    cls: int
    confidence: float
    img_h: int
    img_w: int
    rle: str


@dataclass(frozen=True)
class ResultRecord:
    frame: int
    object_id: int
    cls: int
    img_h: int
    img_w: int
    rle: str


def _parse_line(line: str, lineno: int, path) -> list[str]:
    fields = line.split()
    if len(fields) != 6:
        raise DataFormatError(
            f"{path}:{lineno}: expected 6 whitespace-separated fields, got {len(fields)}"
        )
    return fields


def read_detections(path, thresholds=None):
    """Parse a detection file into per-frame segment lists.

    Segments below their class confidence threshold (strictly below: the
    boundary value is kept) and segments with empty masks are dropped.
    Returns a dict mapping frame index to the surviving segments in file
    order.
    """
    from .tracker import Segment  # local import; tracker depends on this module

    thresholds = DEFAULT_CONF_THRESHOLDS if thresholds is None else thresholds
    per_frame: dict[int, list] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = _parse_line(line, lineno, path)
            try:
                frame = int(fields[0])
                cls = int(fields[1])
                confidence = float(fields[2])
                img_h = int(fields[3])
                img_w = int(fields[4])
            except ValueError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}") from None
            if cls not in (CLASS_CAR, CLASS_PEDESTRIAN):
                raise DataFormatError(f"{path}:{lineno}: unknown detection class {cls}")
            if confidence < thresholds.get(cls, 0.0):
                continue
            try:
                mask = rle_decode(fields[5], img_h, img_w)
            except MaskError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}") from None
            if mask.is_empty():
                continue
            segment = Segment.from_mask(frame=frame, cls=cls, confidence=confidence, mask=mask)
            per_frame.setdefault(frame, []).append(segment)
    return dict(sorted(per_frame.items()))


def write_results(path, frame_results) -> None:
    """Serialise emitted masks, one line per mask, in frame order.

    Output is byte-stable: identical inputs give identical files.
    """
    lines = []
    for result in frame_results:
        for track_id, cls, mask in result.entries:
            if track_id >= 1000:
                raise DataFormatError(
                    f"instance index {track_id} overflows the object id convention"
                )
            object_id = cls * 1000 + track_id
            lines.append(
                f"{result.frame} {object_id} {cls} {mask.height} {mask.width} {rle_encode(mask)}\n"
            )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(lines)


def read_results(path):
    """Parse a result or ground-truth file into per-frame record lists.

    Returns a dict mapping frame index to lists of
    (object_id, class, BinaryMask); callers split off class 10 entries as
    ignore regions.
    """
    per_frame: dict[int, list] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = _parse_line(line, lineno, path)
            try:
                frame = int(fields[0])
                object_id = int(fields[1])
                cls = int(fields[2])
                img_h = int(fields[3])
                img_w = int(fields[4])
            except ValueError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}") from None
            try:
                mask = rle_decode(fields[5], img_h, img_w)
            except MaskError as err:
                raise DataFormatError(f"{path}:{lineno}: {err}") from None
            per_frame.setdefault(frame, []).append((object_id, cls, mask))
    return dict(sorted(per_frame.items()))


def load_frame(path_pattern, frame: int, expect_shape=None) -> np.ndarray:
    """Load one frame as an 8-bit grayscale plane.

    ``path_pattern`` is a str.format pattern with a ``frame`` field, e.g.
    ``frames/{frame:06d}.png``. RGB input is reduced with BT.601 luma
    weights (0.299, 0.587, 0.114) in-process so results do not depend on
    the image library version.
    """
    path = Path(str(path_pattern).format(frame=frame))
    if not path.exists():
        raise FileNotFoundError(f"frame {frame}: no image at {path}")
    with Image.open(path) as img:
        if img.mode == "L":
            gray = np.asarray(img, dtype=np.uint8)
        else:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
            luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
            gray = np.floor(luma + 0.5).astype(np.uint8)
    if expect_shape is not None and gray.shape != tuple(expect_shape):
        raise DataFormatError(
            f"frame {frame}: image is {gray.shape[1]}x{gray.shape[0]}, "
            f"expected {expect_shape[1]}x{expect_shape[0]}"
        )
    return gray


def load_config(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values
