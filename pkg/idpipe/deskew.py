"""Skew estimation and correction.

Three estimators report the *correction* angle, the rotation to apply to
make text rows horizontal, together with a confidence in 0..1:

- ``fft``: orientation of the peaks of the log-magnitude spectrum.
- ``hough``: modal direction of the strongest Hough lines of the Canny map.
- ``block``: minimum-area rectangle around the fused text block.

``deskew_pipeline`` tries them in that order and accepts the first one whose
confidence reaches the gate; the block estimate is the last resort.

Spectrum and Hough directions are only known modulo 90 degrees (a card's
rows and columns produce the same evidence), so those two estimators fold
their answer into (-45, 45]. Quarter-turn placement is resolved later by the
orientation stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryError, NoTextError, ParameterError, SizeError
from .raster import (
    EIGHT_CONNECTED,
    BinaryImage,
    GrayImage,
    Kernel,
    adaptive_binarize,
    border_median,
    canny,
    dilate,
    gaussian_blur,
    min_area_rect,
    morphology,
    rotate,
)

DESKEW_METHODS = ("auto", "fft", "hough", "block")
CONFIDENCE_GATE = 0.6
FFT_MIN_SIZE = 64
FFT_STEP = 0.25
FFT_DC_RADIUS = 3
FFT_REFINE_REACH, FFT_REFINE_STEP = 1.25, 0.05
HOUGH_LOW, HOUGH_HIGH = 50, 150
HOUGH_PEAK_FRACTION = 0.5
HOUGH_REFINE_REACH, HOUGH_REFINE_STEP = 1.5, 0.05
BLOCK_BLUR = 1.5
BLOCK_WINDOW, BLOCK_OFFSET = 25, 10
BLOCK_KERNEL = (21, 5)
# Fused blocks smaller than this share of the largest one are speckle.
BLOCK_MIN_SHARE = 0.02
# Corrections finer than the spectrum search step are not applied.
MIN_ROTATION = FFT_STEP


@dataclass(frozen=True)
class AngleEstimate:
    angle: float
    confidence: float
    method: str

    def __post_init__(self) -> None:
        if not -90.0 < self.angle <= 90.0:
            raise ParameterError(f"Angle {self.angle} is outside (-90, 90].")
        if not 0.0 <= self.confidence <= 1.0:
            raise ParameterError(f"Confidence {self.confidence} is outside 0..1.")

    def to_dict(self) -> dict:
        return {"angle": round(self.angle, 4), "confidence": round(self.confidence, 4), "method": self.method}


def normalize_angle(angle: float) -> float:
    """Into (-90, 90]."""
    a = math.fmod(angle, 180.0)
    if a <= -90.0:
        a += 180.0
    elif a > 90.0:
        a -= 180.0
    return a


def fold_quarter(angle: float) -> float:
    """Into (-45, 45]."""
    a = math.fmod(angle, 90.0)
    if a <= -45.0:
        a += 90.0
    elif a > 45.0:
        a -= 90.0
    return a


def _hann_square(img: GrayImage) -> np.ndarray:
    side = 1 << int(math.floor(math.log2(min(img.width, img.height))))
    y0 = (img.height - side) // 2
    x0 = (img.width - side) // 2
    patch = img.data[y0 : y0 + side, x0 : x0 + side].astype(np.float64)
    window = np.hanning(side)
    return (patch - patch.mean()) * np.outer(window, window)


def _cross_energy(spectrum: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Summed log-magnitude along the two orthogonal lines through the centre at each direction."""
    centre = spectrum.shape[0] // 2
    reach = np.arange(FFT_DC_RADIUS, centre, dtype=np.float64)
    r = np.concatenate([-reach[::-1], reach])
    energy = np.zeros(len(betas))
    for turn in (0.0, 90.0):
        rad = np.radians(betas + turn)[:, None]
        rows = centre + r * np.sin(rad)
        cols = centre + r * np.cos(rad)
        values = ndimage.map_coordinates(spectrum, [rows.ravel(), cols.ravel()], order=1, mode="constant", cval=0.0)
        energy += values.reshape(len(betas), -1).sum(axis=1)
    return energy


def _parabola_peak(left: float, centre: float, right: float) -> float:
    denom = left - 2.0 * centre + right
    return 0.0 if denom == 0 else 0.5 * (left - right) / denom


def estimate_angle_fft(img: GrayImage) -> AngleEstimate:
    """
    Spectrum-based skew estimate.

    The centred power-of-two square of the image is Hann-windowed and
    transformed; spectrum points brighter than ``mean + 2 std`` of the
    log-magnitude, outside the DC lobe, are the peaks, weighted by how far
    they clear the cut. Every candidate direction in 0.25 degree steps
    defines a cross of two orthogonal lines through the spectrum centre; the
    direction with the smallest weighted mean squared peak distance wins and
    is refined to a twentieth of a degree by the spectrum energy along its
    cross. Confidence is ``1 - best / mean`` over all candidates.

    Raises:
        SizeError: If the image is smaller than 64 pixels on either side.
    """
    if min(img.width, img.height) < FFT_MIN_SIZE:
        raise SizeError(f"FFT skew estimation needs at least {FFT_MIN_SIZE}x{FFT_MIN_SIZE}, got {img.width}x{img.height}.")
    spectrum = np.log1p(np.abs(np.fft.fftshift(np.fft.fft2(_hann_square(img)))))
    if spectrum.std() == 0:
        return AngleEstimate(0.0, 0.0, "fft")
    cut = spectrum.mean() + 2.0 * spectrum.std()
    centre = spectrum.shape[0] // 2
    fy, fx = np.nonzero(spectrum > cut)
    u = (fx - centre).astype(np.float64)
    v = (fy - centre).astype(np.float64)
    outside_dc = np.hypot(u, v) >= FFT_DC_RADIUS
    u, v = u[outside_dc], v[outside_dc]
    weight = spectrum[fy[outside_dc], fx[outside_dc]] - cut
    if len(u) < 2 or weight.sum() <= 0:
        return AngleEstimate(0.0, 0.0, "fft")

    betas = np.arange(0.0, 90.0, FFT_STEP)
    rad = np.radians(betas)[:, None]
    along = np.abs(-np.sin(rad) * u + np.cos(rad) * v)
    across = np.abs(np.cos(rad) * u + np.sin(rad) * v)
    mse = (np.minimum(along, across) ** 2 * weight).sum(axis=1) / weight.sum()
    best = int(np.argmin(mse))
    mean_mse = float(mse.mean())
    confidence = 0.0 if mean_mse == 0 else float(np.clip(1.0 - mse[best] / mean_mse, 0.0, 1.0))

    fine = betas[best] + np.arange(-FFT_REFINE_REACH, FFT_REFINE_REACH + FFT_REFINE_STEP / 2, FFT_REFINE_STEP)
    energy = _cross_energy(spectrum, fine)
    peak = int(np.argmax(energy))
    beta = float(fine[peak])
    if 0 < peak < len(fine) - 1:
        beta += FFT_REFINE_STEP * _parabola_peak(energy[peak - 1], energy[peak], energy[peak + 1])
    # Spectrum line direction equals the row-normal; rows run 90 degrees off,
    # which the fold absorbs.
    return AngleEstimate(fold_quarter(beta), confidence, "fft")


def _chord_lengths(theta: float, rhos: np.ndarray, width: int, height: int) -> np.ndarray:
    """Length of ``x cos t + y sin t = rho`` inside the pixel-centre rectangle."""
    c, s = math.cos(theta), math.sin(theta)
    lo = np.full(rhos.shape, -np.inf)
    hi = np.full(rhos.shape, np.inf)
    # Points on the line: (rho c - t s, rho s + t c).
    for base, step, limit in ((rhos * c, -s, width - 1), (rhos * s, c, height - 1)):
        if abs(step) < 1e-12:
            outside = (base < 0) | (base > limit)
            lo[outside] = np.inf
            continue
        t0 = (0 - base) / step
        t1 = (limit - base) / step
        lo = np.maximum(lo, np.minimum(t0, t1))
        hi = np.minimum(hi, np.maximum(t0, t1))
    return np.clip(hi - lo, 0.0, None)


def _alignment(xs: np.ndarray, ys: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Sum of squared line populations of the edge points along each direction and its normal."""
    scores = np.empty(len(phis))
    for i, phi in enumerate(phis):
        total = 0.0
        for turn in (0.0, 90.0):
            rad = math.radians(float(phi) + turn)
            rho = np.floor(ys * math.cos(rad) - xs * math.sin(rad) + 0.5).astype(np.int64)
            counts = np.bincount(rho - rho.min()).astype(np.float64)
            total += float(np.dot(counts, counts))
        scores[i] = total
    return scores


def estimate_angle_hough(img: GrayImage) -> AngleEstimate:
    """
    Hough-transform skew estimate over the Canny edge map.

    Votes are accumulated in 1 degree by 1 pixel bins. A cell is a peak when
    its vote density (votes per pixel of chord) reaches half the densest
    cell; chords shorter than a quarter of the smaller image side are
    ignored. Peak votes are binned by folded line direction and the modal
    bin is refined by a parabola through its neighbours. The direction is
    then sharpened to a twentieth of a degree by how tightly the edge points
    stack into parallel and perpendicular lines. Confidence is the
    modal bin's share of all peak votes.
    """
    edges = canny(img, HOUGH_LOW, HOUGH_HIGH).mask
    ys, xs = np.nonzero(edges)
    if len(xs) == 0:
        return AngleEstimate(0.0, 0.0, "hough")
    rho_max = int(math.ceil(math.hypot(img.width, img.height)))
    rhos = np.arange(-rho_max, rho_max + 1, dtype=np.float64)
    min_chord = min(img.width, img.height) / 4.0
    xs_f, ys_f = xs.astype(np.float64), ys.astype(np.float64)

    folded_mass = np.zeros(90)
    votes_per_theta = []
    density_max = 0.0
    for t in range(180):
        theta = math.radians(t)
        idx = np.floor(xs_f * math.cos(theta) + ys_f * math.sin(theta) + 0.5).astype(np.int64) + rho_max
        votes = np.bincount(idx, minlength=len(rhos)).astype(np.float64)
        chords = _chord_lengths(theta, rhos, img.width, img.height)
        density = np.where(chords >= min_chord, votes / np.maximum(chords, 1.0), 0.0)
        votes_per_theta.append((votes, density))
        density_max = max(density_max, float(density.max()))
    if density_max == 0:
        return AngleEstimate(0.0, 0.0, "hough")

    for t, (votes, density) in enumerate(votes_per_theta):
        mass = votes[density >= HOUGH_PEAK_FRACTION * density_max].sum()
        # Line direction in image coordinates is the normal plus 90 degrees.
        folded_mass[int(round(fold_quarter(t + 90.0))) % 90] += mass

    total = folded_mass.sum()
    mode = int(np.argmax(folded_mass))
    left, centre, right = folded_mass[(mode - 1) % 90], folded_mass[mode], folded_mass[(mode + 1) % 90]
    coarse = mode + _parabola_peak(left, centre, right)
    phis = coarse + np.arange(-HOUGH_REFINE_REACH, HOUGH_REFINE_REACH + HOUGH_REFINE_STEP / 2, HOUGH_REFINE_STEP)
    scores = _alignment(xs_f, ys_f, phis)
    peak = int(np.argmax(scores))
    angle = float(phis[peak])
    if 0 < peak < len(phis) - 1:
        angle += HOUGH_REFINE_STEP * _parabola_peak(scores[peak - 1], scores[peak], scores[peak + 1])
    return AngleEstimate(fold_quarter(angle), float(centre / total), "hough")


def estimate_angle_block(img: GrayImage) -> AngleEstimate:
    """
    Text-block skew estimate: the minimum-area rectangle around the text
    pixels after fusing words with a wide dilation.

    The image is smoothed before binarizing and the text mask opened, so
    sensor noise does not scatter isolated pixels over the frame; fused
    blocks smaller than 2% of the largest one are dropped.

    Raises:
        NoTextError: With fewer than 3 text pixels or a degenerate block.
    """
    text = ~adaptive_binarize(gaussian_blur(img, BLOCK_BLUR), BLOCK_WINDOW, BLOCK_OFFSET).mask
    if np.count_nonzero(text) < 3:
        raise NoTextError("Fewer than 3 text pixels; cannot estimate the block angle.")
    opened = morphology(BinaryImage.from_mask(text), "open", Kernel.square(3)).data > 0
    if np.count_nonzero(opened) >= 3:
        text = opened
    fused = dilate(BinaryImage.from_mask(text), Kernel.rect(*BLOCK_KERNEL)).data > 0
    labels, n = ndimage.label(fused, structure=EIGHT_CONNECTED)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    kept = np.flatnonzero(sizes >= BLOCK_MIN_SHARE * sizes.max()) + 1
    ys, xs = np.nonzero(np.isin(labels, kept))
    try:
        rect = min_area_rect(np.stack([xs, ys], axis=1).astype(np.float64))
    except GeometryError as e:
        raise NoTextError(f"Text pixels are collinear; cannot estimate the block angle: {e}") from e
    confidence = 0.0 if rect.area <= 0 else float(min(1.0, len(xs) / rect.area))
    return AngleEstimate(normalize_angle(rect.angle), confidence, "block")


ESTIMATORS = {
    "fft": estimate_angle_fft,
    "hough": estimate_angle_hough,
    "block": estimate_angle_block,
}


def estimate_angle(img: GrayImage, method: str = "auto") -> AngleEstimate:
    """
    Runs one estimator, or the gated fft, hough, block chain for ``auto``.

    Raises:
        ParameterError: For an unknown method.
        NoTextError: When the block estimator is reached and finds no text.
    """
    if method not in DESKEW_METHODS:
        raise ParameterError(f"Unknown deskew method '{method}'; expected one of {', '.join(DESKEW_METHODS)}.")
    if method != "auto":
        return ESTIMATORS[method](img)
    for name in ("fft", "hough"):
        try:
            estimate = ESTIMATORS[name](img)
        except SizeError:
            continue
        if estimate.confidence >= CONFIDENCE_GATE:
            return estimate
    return estimate_angle_block(img)


def deskew_pipeline(img: GrayImage, method: str = "auto") -> tuple[GrayImage, AngleEstimate]:
    """Estimates the skew and rotates by the correction, filling with the border median."""
    estimate = estimate_angle(img, method)
    if abs(estimate.angle) < MIN_ROTATION:
        return img, estimate
    return rotate(img, estimate.angle, fill=border_median(img)), estimate
