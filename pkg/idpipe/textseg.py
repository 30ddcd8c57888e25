"""Text/non-text segmentation.

Three sources propose text boxes and ``vote_merge`` joins them into lines:

- ``mser_regions``: maximally stable extremal regions, computed from a
  component tree over all 256 threshold levels, in both polarities.
- ``contour_char_boxes``: one box per glyph-shaped contour of the
  inverted adaptive binarization.
- ``detect_text_external``: an optional external detector speaking the
  line protocol of ``idpipe.adapter``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .adapter import ExternalDetector
from .autocrop import LayoutConfig
from .errors import ParameterError
from .raster import EIGHT_CONNECTED, BinaryImage, Box, GrayImage, adaptive_binarize, find_contours

TEXT_SOURCES = ("mser", "contour", "external")


@dataclass(frozen=True)
class MserParams:
    delta: int = 5
    min_area: int = 30
    max_area: float = 0.01
    max_variation: float = 0.25

    def __post_init__(self) -> None:
        if self.delta < 1:
            raise ParameterError(f"MSER delta must be >= 1, got {self.delta}.")
        if self.min_area <= 0:
            raise ParameterError(f"MSER min_area must be positive, got {self.min_area}.")
        if not 0 < self.max_area <= 1:
            raise ParameterError(f"MSER max_area must lie in (0, 1], got {self.max_area}.")


@dataclass(frozen=True, eq=False)
class TextRegion:
    box: Box
    source: str
    mask: np.ndarray | None = field(default=None, repr=False)
    stability: float | None = None
    polarity: str | None = None

    @property
    def pixels(self) -> list[tuple[int, int]]:
        if self.mask is None:
            return []
        ys, xs = np.nonzero(self.mask)
        return [(int(x) + self.box.x0, int(y) + self.box.y0) for x, y in zip(xs, ys)]

    def to_dict(self) -> dict:
        return {"box": self.box.to_dict(), "source": self.source}


def _take(values: np.ndarray, idx: np.ndarray, fill: float) -> np.ndarray:
    """``values[idx]`` where ``idx >= 0``, ``fill`` elsewhere."""
    if len(values) == 0:
        return np.full(len(idx), fill, dtype=np.result_type(values, type(fill)))
    return np.where(idx >= 0, values[np.maximum(idx, 0)], fill)


def _neighbour_pairs(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of every 8-connected pixel pair, each pair once."""
    idx = np.arange(height * width, dtype=np.int64).reshape(height, width)
    pairs = (
        (idx[:, :-1], idx[:, 1:]),
        (idx[:-1, :], idx[1:, :]),
        (idx[:-1, :-1], idx[1:, 1:]),
        (idx[:-1, 1:], idx[1:, :-1]),
    )
    return np.concatenate([a.ravel() for a, _ in pairs]), np.concatenate([b.ravel() for _, b in pairs])


class ComponentTree:
    """Extremal regions of ``{p : img[p] <= level}`` for every level 0..255.

    Built bottom-up: the pixels of each new level enter as single-pixel
    nodes, and every neighbour pair whose brighter pixel has that level
    unites the nodes at its ends, so components merge as the level rises.
    Components at each level are numbered in raster order of their first
    pixel. For every level ``l`` the tree keeps the component sizes and
    first pixels, each component's parent at ``l + 1`` and its largest child
    at ``l - 1``; pixels are recovered on demand.
    """

    LEVELS = 256

    def __init__(self, data: np.ndarray) -> None:
        self.data = np.asarray(data, dtype=np.uint8)
        self.sizes: list[np.ndarray] = []
        self.firsts: list[np.ndarray] = []
        self.parents: list[np.ndarray] = []
        self.main_child: list[np.ndarray] = []
        self._build()

    def _build(self) -> None:
        h, w = self.data.shape
        flat = self.data.ravel()
        n_pixels = flat.size
        a, b = _neighbour_pairs(h, w)
        weight = np.maximum(flat[a], flat[b])
        order = np.argsort(weight, kind="stable")
        a, b = a[order], b[order]
        edge_bounds = np.searchsorted(weight[order], np.arange(self.LEVELS + 1))
        by_value = np.argsort(flat, kind="stable")
        pixel_bounds = np.searchsorted(flat[by_value], np.arange(self.LEVELS + 1))

        # component of every pixel already below the current level
        comp = np.full(n_pixels, -1, dtype=np.int64)
        sizes = np.zeros(0, dtype=np.int64)
        firsts = np.zeros(0, dtype=np.int64)
        for level in range(self.LEVELS):
            new = by_value[pixel_bounds[level] : pixel_bounds[level + 1]]
            if new.size == 0:
                if level > 0:
                    self.parents.append(np.arange(len(sizes), dtype=np.int64))
                self.sizes.append(sizes)
                self.firsts.append(firsts)
                continue
            k = len(sizes)
            nodes = k + new.size
            comp[new] = k + np.arange(new.size)
            ends_a = comp[a[edge_bounds[level] : edge_bounds[level + 1]]]
            ends_b = comp[b[edge_bounds[level] : edge_bounds[level + 1]]]
            graph = coo_matrix((np.ones(len(ends_a), dtype=np.int8), (ends_a, ends_b)), shape=(nodes, nodes))
            n, joined = connected_components(graph, directed=False)

            node_first = np.concatenate([firsts, new])
            first = np.full(n, n_pixels, dtype=np.int64)
            np.minimum.at(first, joined, node_first)
            rank = np.empty(n, dtype=np.int64)
            rank[np.argsort(first, kind="stable")] = np.arange(n)
            renamed = rank[joined]

            if level > 0:
                self.parents.append(renamed[:k])
            node_size = np.concatenate([sizes, np.ones(new.size, dtype=np.int64)])
            sizes = np.bincount(renamed, weights=node_size, minlength=n).astype(np.int64)
            firsts = np.sort(first)
            alive = by_value[: pixel_bounds[level + 1]]
            comp[alive] = renamed[comp[alive]]
            self.sizes.append(sizes)
            self.firsts.append(firsts)
        # the top level has no parent
        self.parents.append(np.full(len(self.sizes[-1]), -1, dtype=np.int64))

        self.main_child.append(np.full(len(self.sizes[0]), -1, dtype=np.int64))
        for level in range(1, self.LEVELS):
            below = self.sizes[level - 1]
            par = self.parents[level - 1]
            main = np.full(len(self.sizes[level]), -1, dtype=np.int64)
            if len(below):
                # first of each parent group after sorting by (parent, -size, index)
                order = np.lexsort((np.arange(len(below)), -below, par))
                is_first = np.ones(len(order), dtype=bool)
                is_first[1:] = par[order][1:] != par[order][:-1]
                main[par[order][is_first]] = order[is_first]
            self.main_child.append(main)

    def count(self, level: int) -> int:
        return len(self.sizes[level])

    def labels(self, level: int) -> np.ndarray:
        labels, _ = ndimage.label(self.data <= level, structure=EIGHT_CONNECTED)
        return labels

    def region_pixels(self, level: int, index: int) -> np.ndarray:
        """Boolean mask of component ``index`` at ``level``."""
        labels = self.labels(level)
        return labels == labels.flat[self.firsts[level][index]]

    def ancestor_sizes(self, level: int, steps: int) -> np.ndarray:
        idx = np.arange(self.count(level))
        top = min(self.LEVELS - 1, level + steps)
        for lv in range(level, top):
            idx = self.parents[lv][idx]
        return self.sizes[top][idx]

    def descendant_sizes(self, level: int, steps: int) -> np.ndarray:
        """Size ``steps`` levels down following the largest child, stopping at birth."""
        idx = np.arange(self.count(level))
        sizes = self.sizes[level].astype(np.int64).copy()
        alive = np.ones(len(idx), dtype=bool)
        for lv in range(level, max(0, level - steps), -1):
            if not alive.any():
                break
            nxt = _take(self.main_child[lv], np.where(alive, idx, -1), -1)
            alive &= nxt >= 0
            idx = np.where(alive, nxt, idx)
            sizes = np.where(alive, _take(self.sizes[lv - 1], np.where(alive, idx, -1), 0), sizes)
        return sizes


def _stable_regions(tree: ComponentTree, p: MserParams, max_pixels: float) -> list[tuple[int, int, float]]:
    """(level, index, stability) of every maximally stable pixel set.

    Runs of levels over which a component keeps the same pixel set are
    collapsed into one node whose stability is the best along the run; a
    node is emitted when it is no worse than both its parent node and its
    largest child node.
    """
    L = tree.LEVELS
    psi: list[np.ndarray] = []
    same_as_child: list[np.ndarray] = []
    for level in range(L):
        size = tree.sizes[level].astype(np.float64)
        up = tree.ancestor_sizes(level, p.delta)
        down = tree.descendant_sizes(level, p.delta)
        psi.append((up - down) / np.maximum(size, 1))
        mc = tree.main_child[level]
        if level == 0:
            same_as_child.append(np.zeros(len(size), dtype=bool))
        else:
            same_as_child.append(_take(tree.sizes[level - 1], mc, -1) == tree.sizes[level])

    # upward: best stability of the run so far
    run_psi: list[np.ndarray] = [psi[0].copy()]
    for level in range(1, L):
        prev_run = _take(run_psi[level - 1], tree.main_child[level], np.inf)
        run_psi.append(np.where(same_as_child[level], np.minimum(prev_run, psi[level]), psi[level]))

    # downward: final run stability, known at the top of each run
    final: list[np.ndarray] = [np.empty(0)] * L
    final[L - 1] = run_psi[L - 1]
    for level in range(L - 2, -1, -1):
        par = tree.parents[level]
        parent_same = same_as_child[level + 1][par]
        final[level] = np.where(parent_same, final[level + 1][par], run_psi[level])

    # upward again: stability of the run below each run's first level
    child_final: list[np.ndarray] = [np.full(len(psi[0]), np.inf)]
    for level in range(1, L):
        mc = tree.main_child[level]
        below = _take(final[level - 1], mc, np.inf)
        child_final.append(np.where(same_as_child[level], _take(child_final[level - 1], mc, np.inf), below))

    out: list[tuple[int, int, float]] = []
    for level in range(L):
        size = tree.sizes[level]
        if level < L - 1:
            par = tree.parents[level]
            is_top = ~same_as_child[level + 1][par]
            parent_psi = final[level + 1][par]
        else:
            is_top = np.ones(len(size), dtype=bool)
            parent_psi = np.full(len(size), np.inf)
        stable = (
            is_top
            & (final[level] <= parent_psi)
            & (final[level] <= child_final[level])
            & (final[level] <= p.max_variation)
            & (size >= p.min_area)
            & (size <= max_pixels)
        )
        for idx in np.flatnonzero(stable):
            out.append((level, int(idx), float(final[level][idx])))
    return out


def _extract(tree: ComponentTree, picks: list[tuple[int, int, float]], polarity: str) -> list[TextRegion]:
    regions = []
    by_level: dict[int, list[tuple[int, float]]] = {}
    for level, idx, psi in picks:
        by_level.setdefault(level, []).append((idx, psi))
    for level in sorted(by_level):
        labels = tree.labels(level)
        slices = ndimage.find_objects(labels)
        for idx, psi in by_level[level]:
            label = int(labels.flat[tree.firsts[level][idx]])
            sl = slices[label - 1]
            box = Box(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)
            mask = labels[sl] == label
            regions.append(TextRegion(box=box, source="mser", mask=mask, stability=psi, polarity=polarity))
    return regions


def mser_regions(img: GrayImage, p: MserParams = MserParams(), dedupe_iou: float = 0.8) -> list[TextRegion]:
    """Maximally stable extremal regions of both polarities, near-duplicates merged."""
    max_pixels = p.max_area * img.width * img.height
    found: list[TextRegion] = []
    for polarity, data in (("dark", img.data), ("light", 255 - img.data)):
        tree = ComponentTree(data)
        found.extend(_extract(tree, _stable_regions(tree, p, max_pixels), polarity))

    kept: list[TextRegion] = []
    corners = np.empty((0, 4), dtype=np.int64)
    for r in sorted(found, key=lambda r: (r.stability, r.box.y0, r.box.x0)):
        b = r.box
        if len(corners):
            iw = np.clip(np.minimum(corners[:, 2], b.x1) - np.maximum(corners[:, 0], b.x0), 0, None)
            ih = np.clip(np.minimum(corners[:, 3], b.y1) - np.maximum(corners[:, 1], b.y0), 0, None)
            inter = iw * ih
            areas = (corners[:, 2] - corners[:, 0]) * (corners[:, 3] - corners[:, 1])
            union = areas + b.area - inter
            if np.any(inter >= dedupe_iou * np.maximum(union, 1)):
                continue
        kept.append(r)
        corners = np.vstack([corners, [b.x0, b.y0, b.x1, b.y1]])
    return sorted(kept, key=lambda r: (r.box.y0, r.box.x0))


def contour_char_boxes(img: GrayImage, cfg: LayoutConfig = LayoutConfig()) -> list[TextRegion]:
    """One region per glyph-shaped contour of the text-white binarization."""
    text = BinaryImage.from_mask(~adaptive_binarize(img, 25, 10).mask)
    max_h = cfg.max_glyph_fraction * img.height
    regions = []
    for node in find_contours(text):
        b = node.box
        if node.is_hole or b.h == 0:
            continue
        if not cfg.aspect_low < b.w / b.h < cfg.aspect_high:
            continue
        if node.area < cfg.min_glyph_area or b.h > max_h:
            continue
        regions.append(TextRegion(box=b, source="contour"))
    return regions


def detect_text_external(
    image_path: str, command: str, app_logger: logging.Logger, timeout: float = 5.0
) -> list[TextRegion]:
    detector = ExternalDetector(command, app_logger, timeout)
    return [TextRegion(box=d.box, source="external") for d in detector.detect(image_path)]


def vote_mask(sources: Sequence[Sequence[TextRegion]], width: int, height: int, min_votes: int) -> np.ndarray:
    """Pixels covered by at least ``min(min_votes, len(sources))`` sources."""
    if min_votes < 1:
        raise ParameterError(f"min_votes must be >= 1, got {min_votes}.")
    votes = np.zeros((height, width), dtype=np.int32)
    if not sources:
        return votes > 0
    need = min(min_votes, len(sources))
    for regions in sources:
        covered = np.zeros((height, width), dtype=bool)
        for r in regions:
            b = r.box.clamp(width, height)
            covered[b.y0 : b.y1, b.x0 : b.x1] = True
        votes += covered
    return votes >= need


def vote_merge(
    sources: Sequence[Sequence[TextRegion]], width: int, height: int, min_votes: int = 2
) -> list[TextRegion]:
    """
    Joins the boxes of several text sources into line boxes.

    Voted pixels are grouped by a horizontal dilation of one median glyph
    width on each side; each group's line box is the tight box of its voted
    pixels. Lines come back ordered by (top, left).
    """
    mask = vote_mask(sources, width, height, min_votes)
    if not mask.any():
        return []
    widths = [r.box.w for regions in sources for r in regions if r.box.w > 0]
    glyph_w = max(1, int(np.median(widths))) if widths else 1
    grown = ndimage.binary_dilation(mask, structure=np.ones((1, 2 * glyph_w + 1), dtype=bool))
    labels, _ = ndimage.label(grown, structure=EIGHT_CONNECTED)
    labels = np.where(mask, labels, 0)
    lines = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        lines.append(
            TextRegion(
                box=Box(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start),
                source="vote",
            )
        )
    return sorted(lines, key=lambda r: (r.box.y0, r.box.x0))
