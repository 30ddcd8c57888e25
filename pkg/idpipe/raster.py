"""Deterministic 8-bit raster primitives.

Every stage of the pipeline is built on the operations below. Images are
immutable ``GrayImage``/``BinaryImage`` values wrapping a read-only
``(height, width)`` uint8 array; each operation allocates its output.

Conventions
-----------
- Pixel coordinates are ``(x, y)`` with ``y`` growing downwards.
- Angles are in degrees and counter-clockwise as the image is displayed.
- Convolutions and rank filters replicate the border pixels; only
  ``rotate`` uses a fill value.
- Rounding is half-up everywhere (``floor(v + 0.5)``), then clamped to
  0..255.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionError, GeometryError, KernelError, ParameterError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)

MORPHOLOGY_OPS = ("erode", "dilate", "open", "close", "blackhat", "tophat")


def round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Round half-up and clamp a float array into 0..255."""
    return np.clip(round_half_up(values), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major 8-bit luminance raster."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionError(f"Expected a 2-D raster, got shape {arr.shape}.")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"Raster must be at least 1x1, got {arr.shape}.")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise DimensionError("Raster values must lie in 0..255.")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_bytes(cls, width: int, height: int, raw: bytes | Sequence[int]) -> "GrayImage":
        buf = np.frombuffer(bytes(raw), dtype=np.uint8)
        if buf.size != width * height:
            raise DimensionError(
                f"Data length {buf.size} does not match {width}x{height}."
            )
        return cls(buf.reshape(height, width))

    @classmethod
    def filled(cls, width: int, height: int, value: int) -> "GrayImage":
        return cls(np.full((height, width), value, dtype=np.uint8))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def to_bytes(self) -> bytes:
        return self.data.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __hash__(self) -> int:
        return hash((self.data.shape, self.data.tobytes()))


class BinaryImage(GrayImage):
    """A GrayImage whose pixels are restricted to {0, 255}."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if not np.isin(self.data, (0, 255)).all():
            raise DimensionError("BinaryImage pixels must be 0 or 255.")

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "BinaryImage":
        return cls(np.where(mask, 255, 0).astype(np.uint8))

    @property
    def mask(self) -> np.ndarray:
        return self.data == 255


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle ``(x0, y0, w, h)`` in pixels."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 0 or self.h < 0:
            raise GeometryError(f"Box dimensions must be non-negative: {self}.")

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x0 + self.w / 2, self.y0 + self.h / 2

    @classmethod
    def from_corners(cls, x0: int, y0: int, x1: int, y1: int) -> "Box":
        return cls(x0, y0, max(0, x1 - x0), max(0, y1 - y0))

    @classmethod
    def bounding(cls, points: Iterable[tuple[float, float]]) -> "Box":
        pts = np.round(np.asarray(list(points), dtype=np.float64), 6)
        x0, y0 = np.floor(pts.min(axis=0))
        x1, y1 = np.ceil(pts.max(axis=0))
        return cls.from_corners(int(x0), int(y0), int(x1), int(y1))

    def intersection(self, other: "Box") -> "Box":
        return Box.from_corners(
            max(self.x0, other.x0),
            max(self.y0, other.y0),
            min(self.x1, other.x1),
            min(self.y1, other.y1),
        )

    def union(self, other: "Box") -> "Box":
        return Box.from_corners(
            min(self.x0, other.x0),
            min(self.y0, other.y0),
            max(self.x1, other.x1),
            max(self.y1, other.y1),
        )

    def iou(self, other: "Box") -> float:
        inter = self.intersection(other).area
        total = self.area + other.area - inter
        return inter / total if total else 0.0

    def contains(self, other: "Box") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def clamp(self, width: int, height: int) -> "Box":
        return self.intersection(Box(0, 0, width, height))

    def expand(self, margin_x: int, margin_y: int) -> "Box":
        return Box.from_corners(
            self.x0 - margin_x, self.y0 - margin_y, self.x1 + margin_x, self.y1 + margin_y
        )

    def translate(self, dx: int, dy: int) -> "Box":
        return Box(self.x0 + dx, self.y0 + dy, self.w, self.h)

    def to_dict(self) -> dict[str, int]:
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, raw: dict) -> "Box":
        return cls(int(raw["x0"]), int(raw["y0"]), int(raw["w"]), int(raw["h"]))


@dataclass(frozen=True)
class RotatedBox:
    center: tuple[float, float]
    w: float
    h: float
    angle: float

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True, eq=False)
class Kernel:
    """Odd-sized correlation kernel; its support doubles as a flat structuring element."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise KernelError(f"Kernel dimensions must be odd, got {w.shape}.")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def rect(cls, width: int, height: int) -> "Kernel":
        """Flat rectangular structuring element of ``width`` x ``height``."""
        if width < 1 or height < 1:
            raise KernelError(f"Kernel dimensions must be positive: {width}x{height}.")
        return cls(np.ones((height, width)))

    @classmethod
    def square(cls, side: int) -> "Kernel":
        return cls.rect(side, side)

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def footprint(self) -> np.ndarray:
        return self.weights != 0


def to_gray(rgb: bytes | Sequence[int] | np.ndarray, width: int, height: int) -> GrayImage:
    """Convert interleaved 8-bit RGB triplets to luminance."""
    arr = np.asarray(
        np.frombuffer(rgb, dtype=np.uint8) if isinstance(rgb, (bytes, bytearray)) else rgb,
        dtype=np.float64,
    ).reshape(-1)
    if arr.size != 3 * width * height:
        raise DimensionError(
            f"RGB data length {arr.size} does not match 3*{width}*{height}."
        )
    triplets = arr.reshape(height, width, 3)
    luma = 0.299 * triplets[..., 0] + 0.587 * triplets[..., 1] + 0.114 * triplets[..., 2]
    return GrayImage(to_uint8(luma))


def normalize(img: GrayImage) -> GrayImage:
    lo = int(img.data.min())
    hi = int(img.data.max())
    if lo == hi:
        return img
    stretched = (img.data.astype(np.float64) - lo) * 255.0 / (hi - lo)
    return GrayImage(to_uint8(stretched))


def _correlate(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return ndimage.correlate(arr.astype(np.float64), weights, mode="nearest")


def convolve2d(img: GrayImage, k: Kernel) -> GrayImage:
    """2-D correlation with replicate borders, rounded and clamped."""
    return GrayImage(to_uint8(_correlate(img.data, k.weights)))


def _sobel(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _correlate(arr, SOBEL_X), _correlate(arr, SOBEL_Y)


def sobel_magnitude(img: GrayImage) -> GrayImage:
    """L1 gradient magnitude ``min(255, |Gx| + |Gy|)``."""
    gx, gy = _sobel(img.data)
    return GrayImage(to_uint8(np.minimum(255.0, np.abs(gx) + np.abs(gy))))


def sobel_x_magnitude(img: GrayImage) -> GrayImage:
    gx = _correlate(img.data, SOBEL_X)
    return GrayImage(to_uint8(np.minimum(255.0, np.abs(gx))))


def gaussian_taps(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ParameterError(f"Gaussian sigma must be positive, got {sigma}.")
    radius = int(math.ceil(3 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(xs**2) / (2 * sigma**2))
    return taps / taps.sum()


def _gaussian_float(arr: np.ndarray, sigma: float) -> np.ndarray:
    taps = gaussian_taps(sigma)
    out = ndimage.correlate1d(arr.astype(np.float64), taps, axis=1, mode="nearest")
    return ndimage.correlate1d(out, taps, axis=0, mode="nearest")


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    return GrayImage(to_uint8(_gaussian_float(img.data, sigma)))


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # A pixel survives when it beats its forward neighbour strictly and its
    # backward neighbour or equals it, so plateaus two pixels wide thin to one.
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = (((angle + 22.5) // 45).astype(int)) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    padded = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dy, dx) in offsets.items():
        fwd = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        bwd = padded[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep |= (sector == s) & (mag > fwd) & (mag >= bwd)
    return np.where(keep, mag, 0.0)


def canny(img: GrayImage, low: float, high: float) -> BinaryImage:
    """Canny edges: Gaussian(1.4), Sobel, 4-sector NMS, 8-connected hysteresis."""
    if low > high:
        raise ParameterError(f"Canny low threshold {low} exceeds high threshold {high}.")
    smooth = _gaussian_float(img.data, 1.4)
    gx, gy = _sobel(smooth)
    mag = np.abs(gx) + np.abs(gy)
    thin = _non_max_suppression(mag, gx, gy)
    candidate = (thin > 0) & (thin >= low)
    strong = candidate & (thin >= high)
    labels, n = ndimage.label(candidate, structure=EIGHT_CONNECTED)
    if n == 0:
        return BinaryImage(np.zeros_like(img.data))
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return BinaryImage.from_mask(has_strong[labels])


def otsu_threshold(data: np.ndarray) -> int:
    """Otsu's threshold over the 256-bin histogram, ties broken toward the lower value.

    Between-class variance is compared exactly in integer arithmetic as
    ``(N1*S0 - N0*S1)^2 / (N0*N1)``, which is proportional to it.
    """
    counts = np.bincount(data.ravel(), minlength=256)
    distinct = np.flatnonzero(counts)
    if distinct.size == 1:
        return int(distinct[0])
    hist = [int(c) for c in counts]
    total_n = int(data.size)
    total_s = sum(t * c for t, c in enumerate(hist))
    best_t = 0
    best_num, best_den = 0, 1
    n0 = 0
    s0 = 0
    for t in range(256):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = total_n - n0
        s1 = total_s - s0
        if n0 == 0 or n1 == 0:
            continue
        num = (n1 * s0 - n0 * s1) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def otsu_binarize(img: GrayImage) -> tuple[BinaryImage, int]:
    t = otsu_threshold(img.data)
    return BinaryImage.from_mask(img.data > t), t


def integral_image(arr: np.ndarray) -> np.ndarray:
    """Summed-area table with a leading zero row and column."""
    out = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=np.int64)
    out[1:, 1:] = arr.astype(np.int64).cumsum(axis=0).cumsum(axis=1)
    return out


def window_sums(arr: np.ndarray, window: int) -> np.ndarray:
    """Sum over the centred ``window`` x ``window`` neighbourhood, replicate borders."""
    r = window // 2
    ii = integral_image(np.pad(arr, r, mode="edge"))
    h, w = arr.shape
    return (
        ii[window : window + h, window : window + w]
        - ii[0:h, window : window + w]
        - ii[window : window + h, 0:w]
        + ii[0:h, 0:w]
    )


def adaptive_binarize(img: GrayImage, window: int, offset: int) -> BinaryImage:
    """White iff pixel > (local mean - offset)."""
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"Adaptive window must be odd and >= 3, got {window}.")
    n = window * window
    sums = window_sums(img.data, window)
    # pixel > sum/n - offset  <=>  pixel*n > sum - offset*n, exact in integers
    white = img.data.astype(np.int64) * n > sums - int(offset) * n
    return BinaryImage.from_mask(white)


def morphology(img: GrayImage, op: str, k: Kernel) -> GrayImage:
    """Flat grayscale morphology; a BinaryImage input yields a BinaryImage."""
    if op not in MORPHOLOGY_OPS:
        raise ParameterError(f"Unknown morphology operation '{op}'.")
    fp = k.footprint

    def erode(a: np.ndarray) -> np.ndarray:
        return ndimage.grey_erosion(a, footprint=fp, mode="nearest")

    def dilate(a: np.ndarray) -> np.ndarray:
        return ndimage.grey_dilation(a, footprint=fp, mode="nearest")

    src = img.data
    if op == "erode":
        out = erode(src)
    elif op == "dilate":
        out = dilate(src)
    elif op == "open":
        out = dilate(erode(src))
    elif op == "close":
        out = erode(dilate(src))
    elif op == "blackhat":
        closed = erode(dilate(src)).astype(np.int16)
        out = np.clip(closed - src.astype(np.int16), 0, 255)
    else:
        opened = dilate(erode(src)).astype(np.int16)
        out = np.clip(src.astype(np.int16) - opened, 0, 255)
    out = out.astype(np.uint8)
    if isinstance(img, BinaryImage):
        return BinaryImage(out)
    return GrayImage(out)


def erode(img: GrayImage, k: Kernel, iterations: int = 1) -> GrayImage:
    for _ in range(iterations):
        img = morphology(img, "erode", k)
    return img


def dilate(img: GrayImage, k: Kernel, iterations: int = 1) -> GrayImage:
    for _ in range(iterations):
        img = morphology(img, "dilate", k)
    return img


@dataclass(eq=False)
class ContourNode:
    """One region boundary of a binary image with its place in the hierarchy.

    ``is_hole`` marks boundaries of black regions enclosed by a white
    component. ``level`` is 1 for outermost contours and grows by one per
    nesting step. ``area`` counts the enclosed pixels, holes included.
    """

    box: Box
    area: int
    is_hole: bool
    level: int
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    _trace: Callable[[], list[tuple[int, int]]] | None = field(default=None, repr=False)

    @cached_property
    def polygon(self) -> list[tuple[int, int]]:
        return self._trace() if self._trace else []


_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


def trace_boundary(mask: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbour border following from the top-left pixel of a region.

    ``mask`` is the region's boolean raster; ``start`` is its first pixel in
    raster order as ``(x, y)``. Returns the closed outer boundary.
    """
    h, w = mask.shape

    def inside(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(mask[y, x])

    sx, sy = start
    polygon = [(sx, sy)]
    # We entered the start pixel from its west neighbour, which is background.
    cx, cy = sx, sy
    back = 0
    limit = 4 * mask.size + 8
    for _ in range(limit):
        found = False
        for i in range(1, 9):
            d = (back + i) % 8
            nx, ny = cx + _MOORE[d][0], cy + _MOORE[d][1]
            if inside(nx, ny):
                prev = (back + i - 1) % 8
                bx, by = cx + _MOORE[prev][0], cy + _MOORE[prev][1]
                cx, cy = nx, ny
                back = _MOORE.index((bx - cx, by - cy)) if (bx - cx, by - cy) in _MOORE else 0
                found = True
                break
        if not found or (cx, cy) == (sx, sy):
            break
        polygon.append((cx, cy))
    return polygon


def find_contours(img: BinaryImage) -> list[ContourNode]:
    """Contour forest of the white (8-connected) and hole (4-connected) regions.

    A black region that does not touch the image border is a hole; its parent
    is the white component enclosing it, and white components inside a hole
    are children of that hole. Nodes are ordered by the ``(top, left)`` of
    their bounding box; ``parent``/``children`` index into the returned list.
    """
    white = img.mask
    h, w = white.shape
    wl, nw = ndimage.label(white, structure=EIGHT_CONNECTED)
    bl, nb = ndimage.label(~white, structure=FOUR_CONNECTED)
    if nw == 0:
        return []

    # Region r of kind k is addressed as (k, r); k=0 white, k=1 black.
    w_slices = ndimage.find_objects(wl)
    b_slices = ndimage.find_objects(bl)

    def first_pixels(labels: np.ndarray, slices: list) -> np.ndarray:
        """Flat index of each label's first pixel in raster order: the top row of its slice."""
        firsts = np.full(len(slices) + 1, -1, dtype=np.int64)
        for r, (rows, cols) in enumerate(slices, start=1):
            x = cols.start + int(np.argmax(labels[rows.start, cols] == r))
            firsts[r] = rows.start * w + x
        return firsts

    w_first = first_pixels(wl, w_slices)
    b_first = first_pixels(bl, b_slices)
    w_count = np.bincount(wl.ravel(), minlength=nw + 1)
    b_count = np.bincount(bl.ravel(), minlength=nb + 1)

    border = np.zeros(nb + 1, dtype=bool)
    for edge in (bl[0, :], bl[-1, :], bl[:, 0], bl[:, -1]):
        border[np.unique(edge)] = True
    border[0] = False

    def west_labels(firsts: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Label just west of each first pixel, 0 on the left image edge."""
        west = np.maximum(firsts - 1, 0)
        return np.where(firsts % w > 0, labels.ravel()[west], 0)

    # parent of each white component: the hole it sits in (or None)
    w_parent = np.zeros(nw + 1, dtype=np.int64)
    west = west_labels(w_first[1:], bl)
    w_parent[1:] = np.where((west > 0) & ~border[west], west, 0)
    # parent of each hole: the white component just west of its first pixel
    holes = [b for b in range(1, nb + 1) if not border[b]]
    b_parent = np.zeros(nb + 1, dtype=np.int64)
    if holes:
        b_parent[holes] = west_labels(b_first[holes], wl)

    keys: list[tuple[int, int]] = [(0, r) for r in range(1, nw + 1)] + [(1, b) for b in holes]

    def slice_box(sl: tuple[slice, slice]) -> Box:
        return Box(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)

    boxes = {
        key: slice_box((w_slices if key[0] == 0 else b_slices)[key[1] - 1]) for key in keys
    }

    def parent_key(key: tuple[int, int]) -> tuple[int, int] | None:
        if key[0] == 0:
            p = int(w_parent[key[1]])
            return (1, p) if p else None
        return (0, int(b_parent[key[1]]))

    children_of: dict[tuple[int, int], list[tuple[int, int]]] = {k: [] for k in keys}
    for key in keys:
        p = parent_key(key)
        if p is not None:
            children_of[p].append(key)

    # filled area, bottom-up: a region covers its own pixels plus its children's
    area: dict[tuple[int, int], int] = {}
    depth: dict[tuple[int, int], int] = {}
    roots = [k for k in keys if parent_key(k) is None]
    stack: list[tuple[tuple[int, int], int, bool]] = [(k, 1, False) for k in roots]
    while stack:
        key, lvl, done = stack.pop()
        if done:
            own = int((w_count if key[0] == 0 else b_count)[key[1]])
            area[key] = own + sum(area[c] for c in children_of[key])
            continue
        depth[key] = lvl
        stack.append((key, lvl, True))
        stack.extend((c, lvl + 1, False) for c in children_of[key])

    order = sorted(
        keys,
        key=lambda k: (boxes[k].y0, boxes[k].x0, k[0], int((w_first if k[0] == 0 else b_first)[k[1]])),
    )
    index = {k: i for i, k in enumerate(order)}

    def tracer(key: tuple[int, int]) -> Callable[[], list[tuple[int, int]]]:
        def run() -> list[tuple[int, int]]:
            box = boxes[key]
            labels = wl if key[0] == 0 else bl
            sub = labels[box.y0 : box.y1, box.x0 : box.x1] == key[1]
            first = int((w_first if key[0] == 0 else b_first)[key[1]])
            fy, fx = divmod(first, w)
            pts = trace_boundary(sub, (fx - box.x0, fy - box.y0))
            return [(x + box.x0, y + box.y0) for x, y in pts]

        return run

    nodes: list[ContourNode] = []
    for key in order:
        p = parent_key(key)
        nodes.append(
            ContourNode(
                box=boxes[key],
                area=area[key],
                is_hole=key[0] == 1,
                level=depth[key],
                parent=index[p] if p is not None else None,
                children=sorted(index[c] for c in children_of[key]),
                _trace=tracer(key),
            )
        )
    return nodes


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        return pts
    # Only the lowest and highest point of each column can be a hull vertex.
    firsts = np.flatnonzero(np.r_[True, pts[1:, 0] != pts[:-1, 0]])
    lasts = np.r_[firsts[1:] - 1, len(pts) - 1]
    pts = pts[np.unique(np.r_[firsts, lasts])]
    if len(pts) < 3:
        return pts

    def cross(o: list[float], a: list[float], b: list[float]) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    ordered = pts.tolist()
    lower: list[list[float]] = []
    for p in ordered:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[list[float]] = []
    for p in reversed(ordered):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _normalize_angle(angle: float) -> float:
    a = math.fmod(angle, 180.0)
    if a <= -90.0:
        a += 180.0
    elif a > 90.0:
        a -= 180.0
    return a


def min_area_rect(points: Sequence[tuple[float, float]] | np.ndarray) -> RotatedBox:
    """Minimum-area enclosing rectangle by rotating calipers over the convex hull.

    The angle is the direction ``atan2(dy, dx)`` of the long side in the
    coordinates given, normalised to (-90, 90]; for squares the side closest
    to the x axis wins.
    """
    hull = convex_hull(np.asarray(points, dtype=np.float64))
    if len(hull) < 3:
        raise GeometryError("Need at least 3 non-collinear points for a rectangle.")
    edges = np.roll(hull, -1, axis=0) - hull
    best: tuple[float, float, RotatedBox] | None = None
    for ex, ey in edges:
        length = math.hypot(ex, ey)
        if length == 0:
            continue
        ux, uy = ex / length, ey / length
        along = hull[:, 0] * ux + hull[:, 1] * uy
        across = -hull[:, 0] * uy + hull[:, 1] * ux
        a_lo, a_hi = along.min(), along.max()
        c_lo, c_hi = across.min(), across.max()
        a_len, c_len = a_hi - a_lo, c_hi - c_lo
        area = a_len * c_len
        a_mid, c_mid = (a_lo + a_hi) / 2, (c_lo + c_hi) / 2
        center = (a_mid * ux - c_mid * uy, a_mid * uy + c_mid * ux)
        edge_angle = math.degrees(math.atan2(uy, ux))
        if a_len >= c_len:
            long_w, short_h, angle = a_len, c_len, edge_angle
        else:
            long_w, short_h, angle = c_len, a_len, edge_angle + 90.0
        angle = _normalize_angle(angle)
        if math.isclose(long_w, short_h, rel_tol=1e-12, abs_tol=1e-12):
            angle = _normalize_angle(angle)
            if angle > 45.0:
                angle -= 90.0
            elif angle <= -45.0:
                angle += 90.0
        rect = RotatedBox(center=center, w=float(long_w), h=float(short_h), angle=angle)
        rank = (round(area, 9), abs(angle))
        if best is None or rank < (best[0], best[1]):
            best = (rank[0], rank[1], rect)
    if best is None or best[2].area <= 0:
        raise GeometryError("Degenerate (collinear) point set.")
    return best[2]


@dataclass(frozen=True)
class RotationFrame:
    """Geometry of rotating a ``width`` x ``height`` raster by ``angle`` degrees."""

    width: int
    height: int
    angle: float

    @cached_property
    def quarter_turns(self) -> int | None:
        a = self.angle % 360.0
        for k in range(4):
            if a == 90.0 * k:
                return k
        return None

    @cached_property
    def out_size(self) -> tuple[int, int]:
        k = self.quarter_turns
        if k is not None:
            return (self.height, self.width) if k % 2 else (self.width, self.height)
        rad = math.radians(self.angle)
        c, s = abs(math.cos(rad)), abs(math.sin(rad))
        ow = max(1, int(math.ceil(self.width * c + self.height * s - 1e-9)))
        oh = max(1, int(math.ceil(self.width * s + self.height * c - 1e-9)))
        return ow, oh

    def map_points(self, points: np.ndarray) -> np.ndarray:
        """Map source ``(x, y)`` points into the rotated canvas."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        ow, oh = self.out_size
        rad = math.radians(self.angle)
        c, s = math.cos(rad), math.sin(rad)
        dx = pts[:, 0] - (self.width - 1) / 2
        dy = pts[:, 1] - (self.height - 1) / 2
        x = (ow - 1) / 2 + c * dx + s * dy
        y = (oh - 1) / 2 - s * dx + c * dy
        return np.stack([x, y], axis=1)

    def map_edge_points(self, points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
        """Like ``map_points`` for continuous coordinates, where pixel ``i`` spans ``[i, i + 1)``."""
        pts = np.asarray(list(points), dtype=np.float64).reshape(-1, 2) - 0.5
        return [(float(x) + 0.5, float(y) + 0.5) for x, y in self.map_points(pts)]

    def map_box(self, b: Box) -> Box:
        """Bounding box of ``b`` after the rotation."""
        return Box.bounding(self.map_edge_points([(b.x0, b.y0), (b.x1, b.y0), (b.x1, b.y1), (b.x0, b.y1)]))


def rotate(img: GrayImage, angle: float, fill: int = 0) -> GrayImage:
    """Rotate about the image centre, enlarging the canvas; quarter turns are lossless."""
    frame = RotationFrame(img.width, img.height, angle)
    k = frame.quarter_turns
    if k is not None:
        return GrayImage(np.rot90(img.data, k=k))
    ow, oh = frame.out_size
    rad = math.radians(angle)
    c, s = math.cos(rad), math.sin(rad)
    ys, xs = np.mgrid[0:oh, 0:ow].astype(np.float64)
    dX = xs - (ow - 1) / 2
    dY = ys - (oh - 1) / 2
    src_x = (img.width - 1) / 2 + c * dX - s * dY
    src_y = (img.height - 1) / 2 + s * dX + c * dY
    sampled = ndimage.map_coordinates(
        img.data.astype(np.float64),
        [src_y, src_x],
        order=1,
        mode="constant",
        cval=float(fill),
    )
    return GrayImage(to_uint8(sampled))


def crop(img: GrayImage, b: Box) -> GrayImage:
    clamped = b.clamp(img.width, img.height)
    if clamped.w == 0 or clamped.h == 0:
        raise GeometryError(f"Crop box {b} does not intersect the {img.width}x{img.height} image.")
    return GrayImage(img.data[clamped.y0 : clamped.y1, clamped.x0 : clamped.x1])


def fill_box(img: GrayImage, b: Box, value: int) -> GrayImage:
    clamped = b.clamp(img.width, img.height)
    out = img.data.copy()
    out[clamped.y0 : clamped.y1, clamped.x0 : clamped.x1] = value
    return GrayImage(out)


def border_median(img: GrayImage) -> int:
    d = img.data
    ring = np.concatenate([d[0, :], d[-1, :], d[:, 0], d[:, -1]])
    return int(np.floor(np.median(ring) + 0.5))
