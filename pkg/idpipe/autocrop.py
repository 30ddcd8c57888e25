"""Card localisation within a captured frame, plus the 90/180 degree orientation fixes.

Two croppers are provided:

- ``crop_by_contours``: the real-time path. The frame is binarized, the
  contour forest is built and the largest region whose holes look like text
  lines (several glyph-sized holes sharing a horizontal band) is the card.
- ``crop_by_detail``: the offline path. Every window of a detail map is
  scored, the high-scoring windows are kept and every side of their
  bounding box is moved to the sub-image with the lowest RMSE against a
  background-outside, flat-inside model of the frame. It is much slower.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import NoCardError, ParameterError, SizeError
from .raster import (
    Box,
    ContourNode,
    GrayImage,
    adaptive_binarize,
    border_median,
    canny,
    find_contours,
    gaussian_blur,
    integral_image,
    rotate,
    sobel_magnitude,
)

DetailMeasure = Literal["sobel", "stddev", "canny"]
DETAIL_MEASURES = ("sobel", "stddev", "canny")
REFINE_ROUNDS = 4


@dataclass(frozen=True)
class LayoutConfig:
    target_aspect: float = 1.58
    aspect_low: float = 0.1
    aspect_high: float = 10.0
    ratio_tolerance: float = 0.12
    crop_margin: float = 0.02
    min_line_siblings: int = 4
    band_factor: float = 0.6
    max_glyph_fraction: float = 0.2
    min_glyph_area: int = 8

    def __post_init__(self) -> None:
        if not 0 < self.aspect_low < self.aspect_high:
            raise ParameterError(
                f"Layout aspect bounds must satisfy 0 < low < high, got {self.aspect_low}, {self.aspect_high}."
            )
        if self.target_aspect <= 1:
            raise ParameterError(f"Target aspect must exceed 1, got {self.target_aspect}.")
        if not 0 <= self.ratio_tolerance < 1:
            raise ParameterError(f"Ratio tolerance must lie in [0, 1), got {self.ratio_tolerance}.")

    @property
    def min_landscape_ratio(self) -> float:
        return self.target_aspect * (1 - self.ratio_tolerance)


@dataclass(frozen=True)
class CropResult:
    box: Box
    method: str
    elapsed_ms: float
    kept_contours: int = 0
    tight_box: Box | None = None
    low_confidence: bool = False
    detail_scores: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "box": self.box.to_dict(),
            "ms": round(self.elapsed_ms, 3),
            "kept_contours": self.kept_contours,
            "low_confidence": self.low_confidence,
        }


def _ms_since(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def text_line_children(holes: list[ContourNode], cfg: LayoutConfig) -> list[ContourNode]:
    """Holes that sit in a horizontal band shared with enough glyph-sized siblings."""
    glyphs = [
        n
        for n in holes
        if n.area >= cfg.min_glyph_area
        and n.box.h > 0
        and cfg.aspect_low < n.box.w / n.box.h < cfg.aspect_high
    ]
    if len(glyphs) <= cfg.min_line_siblings:
        return []
    median_h = float(np.median([n.box.h for n in glyphs]))
    band = cfg.band_factor * median_h
    centers = np.array([n.box.y0 + n.box.h / 2 for n in glyphs])
    kept = []
    for i, n in enumerate(glyphs):
        siblings = int(np.count_nonzero(np.abs(centers - centers[i]) <= band)) - 1
        if siblings >= cfg.min_line_siblings:
            kept.append(n)
    return kept


def crop_by_contours(img: GrayImage, cfg: LayoutConfig = LayoutConfig()) -> CropResult:
    """
    Real-time card crop from contour properties.

    Raises:
        NoCardError: If no region of the frame carries text-line holes.
    """
    start = time.perf_counter()
    binary = adaptive_binarize(gaussian_blur(img, 1.0), 35, 12)
    nodes = find_contours(binary)
    regions = sorted(
        (i for i, n in enumerate(nodes) if not n.is_hole),
        key=lambda i: (-nodes[i].area, i),
    )
    if not regions:
        raise NoCardError("No card contour found in the frame.")

    for i in regions:
        node = nodes[i]
        holes = [nodes[c] for c in node.children if nodes[c].is_hole]
        kept = text_line_children(holes, cfg)
        if kept:
            break
    else:
        raise NoCardError("No contour in the frame encloses text-line evidence.")

    tight = node.box
    mx = int(np.floor(cfg.crop_margin * tight.w + 0.5))
    my = int(np.floor(cfg.crop_margin * tight.h + 0.5))
    box = tight.expand(mx, my).clamp(img.width, img.height)
    return CropResult(
        box=box,
        method="contour",
        elapsed_ms=_ms_since(start),
        kept_contours=len(kept),
        tight_box=tight,
    )


def detail_map(img: GrayImage, measure: DetailMeasure) -> np.ndarray:
    if measure == "sobel":
        return sobel_magnitude(img).data.astype(np.float64)
    if measure == "canny":
        return canny(img, 50, 150).data.astype(np.float64)
    if measure == "stddev":
        return img.data.astype(np.float64)
    raise ParameterError(f"Unknown detail measure '{measure}', expected one of {DETAIL_MEASURES}.")


def _window_starts(length: int, win: int, stride: int) -> list[int]:
    starts = list(range(0, length - win + 1, stride))
    if starts[-1] != length - win:
        starts.append(length - win)
    return starts


def _fit_error(data: np.ndarray, sq: np.ndarray, bg: float, bg_total: float, sides: list[int]) -> float:
    """Squared error of the two-level model: background outside the box, the box mean inside."""
    x0, y0, x1, y1 = sides
    s = float(data[y0:y1, x0:x1].sum())
    s2 = float(sq[y0:y1, x0:x1].sum())
    n = (x1 - x0) * (y1 - y0)
    inside_as_bg = s2 - 2.0 * bg * s + n * bg * bg
    return bg_total - inside_as_bg + (s2 - s * s / n)


def _refine_edges(img: GrayImage, box: Box, reach: int) -> Box:
    """
    Moves the sides of ``box`` to the sub-image with the lowest RMSE against
    a background-outside, flat-inside model of the whole frame.

    Each side in turn tries every position within ``reach`` of where it
    stands, with the other three held; rounds repeat until no side moves.
    """
    data = img.data.astype(np.float64)
    sq = data * data
    bg = float(border_median(img))
    bg_total = float(((data - bg) ** 2).sum())
    h, w = data.shape
    sides = [box.x0, box.y0, box.x1, box.y1]
    for _ in range(REFINE_ROUNDS):
        moved = False
        for side in range(4):
            limit = w if side % 2 == 0 else h
            current = sides[side]
            best_pos, best_err = current, _fit_error(data, sq, bg, bg_total, sides)
            for pos in range(max(0, current - reach), min(limit, current + reach) + 1):
                candidate = sides.copy()
                candidate[side] = pos
                if candidate[2] <= candidate[0] or candidate[3] <= candidate[1]:
                    continue
                err = _fit_error(data, sq, bg, bg_total, candidate)
                if err < best_err:
                    best_pos, best_err = pos, err
            if best_pos != current:
                sides[side] = best_pos
                moved = True
        if not moved:
            break
    return Box.from_corners(*sides)


def crop_by_detail(
    img: GrayImage,
    win: int = 64,
    stride: int = 32,
    measure: DetailMeasure = "sobel",
    keep_ratio: float = 0.5,
) -> CropResult:
    """
    Offline card crop from the distribution of image detail.

    Every ``win`` x ``win`` window on a ``stride`` grid is scored by its mean
    detail (its standard deviation for the ``stddev`` measure). Windows
    scoring at least ``keep_ratio`` of the best one are kept; their bounding
    box is then refined side by side to the sub-image with the lowest
    full-frame RMSE against a background-outside, flat-inside model. Kept windows that form more than
    one separate group mark the result as low confidence. A uniform image
    yields the full-image box.

    Raises:
        SizeError: If the image is smaller than one window.
    """
    start = time.perf_counter()
    if img.width < win or img.height < win:
        raise SizeError(f"Image {img.width}x{img.height} is smaller than the {win}px window.")
    if stride < 1:
        raise ParameterError(f"Stride must be positive, got {stride}.")

    detail = detail_map(img, measure)
    ii = integral_image(detail)
    ii_sq = integral_image(detail**2) if measure == "stddev" else None
    xs = _window_starts(img.width, win, stride)
    ys = _window_starts(img.height, win, stride)
    n = float(win * win)
    scores = np.zeros((len(ys), len(xs)))
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            s = ii[y + win, x + win] - ii[y, x + win] - ii[y + win, x] + ii[y, x]
            if ii_sq is None:
                scores[r, c] = s / n
            else:
                sq = ii_sq[y + win, x + win] - ii_sq[y, x + win] - ii_sq[y + win, x] + ii_sq[y, x]
                scores[r, c] = np.sqrt(max(0.0, sq / n - (s / n) ** 2))

    best = float(scores.max())
    if best == 0.0:
        return CropResult(
            box=Box(0, 0, img.width, img.height),
            method="detail",
            elapsed_ms=_ms_since(start),
            detail_scores=scores,
        )

    kept = scores >= keep_ratio * best
    rows, cols = np.nonzero(kept)
    coarse = Box.from_corners(
        xs[cols.min()], ys[rows.min()], xs[cols.max()] + win, ys[rows.max()] + win
    )
    _, groups = ndimage.label(kept, structure=np.ones((3, 3), dtype=bool))
    box = _refine_edges(img, coarse, win).clamp(img.width, img.height)
    return CropResult(
        box=box,
        method="detail",
        elapsed_ms=_ms_since(start),
        kept_contours=int(kept.sum()),
        tight_box=coarse,
        low_confidence=groups > 1,
        detail_scores=scores,
    )


def fix_orientation(
    img: GrayImage, cfg: LayoutConfig = LayoutConfig(), face_found: bool | None = None
) -> tuple[GrayImage, bool, bool]:
    """
    Quarter-turn a portrait card to landscape.

    ``face_found=False`` (a face detector ran and returned nothing) rotates
    clockwise once without looking at the shape. Otherwise a card whose
    width/height falls below the landscape threshold is rotated clockwise
    once; when the turned card is still below the threshold (a square) it is
    flagged uncertain.

    Returns:
        (image, rotated90, uncertain)
    """
    if face_found is False:
        return rotate(img, -90), True, False
    threshold = cfg.min_landscape_ratio
    if img.width / img.height >= threshold:
        return img, False, False
    turned = rotate(img, -90)
    return turned, True, turned.width / turned.height < threshold


def fix_180(img: GrayImage, mrz_band_center_y: float | None, top_fraction: float = 0.4) -> tuple[GrayImage, bool]:
    """Turn the card upside down when its MRZ band sits in the top part."""
    if mrz_band_center_y is None or mrz_band_center_y >= top_fraction:
        return img, False
    return rotate(img, 180), True
