import numpy as np
import pytest

from idpipe.autocrop import (
    LayoutConfig,
    crop_by_contours,
    crop_by_detail,
    detail_map,
    fix_180,
    fix_orientation,
    text_line_children,
)
from idpipe.errors import NoCardError, ParameterError, SizeError
from idpipe.raster import Box, ContourNode, GrayImage, adaptive_binarize, find_contours, gaussian_blur


def _hole(x, y, w=10, h=14):
    return ContourNode(box=Box(x, y, w, h), area=w * h, is_hole=True, level=2)


def test_layout_config_validation():
    with pytest.raises(ParameterError):
        LayoutConfig(aspect_low=5, aspect_high=2)
    with pytest.raises(ParameterError):
        LayoutConfig(target_aspect=0.9)
    assert LayoutConfig().min_landscape_ratio == pytest.approx(1.58 * 0.88)


def test_text_line_children():
    """Tests that a row of five glyph holes qualifies and four do not."""
    row = [_hole(10 + 15 * i, 50) for i in range(5)]
    assert len(text_line_children(row, LayoutConfig())) == 5
    assert text_line_children(row[:4], LayoutConfig()) == []

    scattered = [_hole(10 + 15 * i, 50 + 40 * i) for i in range(6)]
    assert text_line_children(scattered, LayoutConfig()) == []


def test_crop_by_contours_finds_card(passport):
    """Tests that the contour crop frames the rendered card."""
    image, truth = passport
    result = crop_by_contours(image)
    assert result.method == "contour"
    assert result.tight_box.iou(truth.card_box) >= 0.95
    assert result.box.contains(truth.card_box)
    assert result.kept_contours > 0
    assert result.to_dict()["box"] == result.box.to_dict()


def test_crop_by_contours_takes_card_nested_in_canvas(passport):
    """The uniform canvas binarizes white around a dark edge ring, so the card is an inner component."""
    image, truth = passport
    nodes = find_contours(adaptive_binarize(gaussian_blur(image, 1.0), 35, 12))
    card = max((n for n in nodes if not n.is_hole and n.box.iou(truth.card_box) >= 0.95), key=lambda n: n.area)
    assert card.parent is not None and nodes[card.parent].is_hole
    assert crop_by_contours(image).tight_box == card.box


def test_crop_by_contours_without_card():
    with pytest.raises(NoCardError):
        crop_by_contours(GrayImage.filled(120, 80, 128))


def test_crop_by_detail_finds_card(passport):
    image, truth = passport
    result = crop_by_detail(image)
    assert result.method == "detail"
    assert result.box.iou(truth.card_box) >= 0.85
    assert result.detail_scores is not None


def test_crop_by_detail_edge_cases():
    """Tests the uniform image, the too-small image and the unknown measure."""
    uniform = GrayImage.filled(200, 150, 90)
    assert crop_by_detail(uniform).box == Box(0, 0, 200, 150)
    with pytest.raises(SizeError):
        crop_by_detail(GrayImage.filled(40, 200, 90))
    with pytest.raises(ParameterError):
        detail_map(uniform, "laplace")


def test_crop_by_detail_stddev_on_block():
    data = np.full((256, 320), 30, dtype=np.uint8)
    data[64:192, 64:256] = np.tile(np.array([30, 220], dtype=np.uint8), (128, 96))
    result = crop_by_detail(GrayImage(data), measure="stddev")
    assert result.box.iou(Box(64, 64, 192, 128)) >= 0.8


@pytest.mark.parametrize(
    "size, rotated, uncertain",
    [((100, 160), True, False), ((160, 100), False, False), ((100, 100), True, True), ((120, 130), True, True)],
)
def test_fix_orientation(size, rotated, uncertain):
    img = GrayImage.filled(*size, 100)
    out, was_rotated, was_uncertain = fix_orientation(img)
    assert (was_rotated, was_uncertain) == (rotated, uncertain)
    assert out.size == ((size[1], size[0]) if rotated else size)


def test_fix_orientation_without_face():
    """A face detector that found nothing forces a clockwise quarter turn."""
    data = np.arange(12, dtype=np.uint8).reshape(3, 4)
    out, rotated, _ = fix_orientation(GrayImage(data), face_found=False)
    assert rotated
    assert np.array_equal(out.data, np.rot90(data, -1))


def test_fix_180():
    data = np.arange(20, dtype=np.uint8).reshape(4, 5)
    img = GrayImage(data)
    flipped, done = fix_180(img, 0.2)
    assert done and np.array_equal(flipped.data, data[::-1, ::-1])
    assert fix_180(img, 0.8) == (img, False)
    assert fix_180(img, None) == (img, False)
