import numpy as np
import pytest

from creo.errors import ChannelMismatch, DimensionMismatch
from creo.raster import (
    Mask,
    Raster,
    dequantize,
    mask_from_png,
    mask_to_png,
    quantize,
    raster_from_png,
    raster_to_png,
)


def test_raster_validates_range():
    with pytest.raises(ValueError):
        Raster(np.array([[1.5]]))
    with pytest.raises(ValueError):
        Raster(np.array([[np.nan]]))


def test_raster_rejects_bad_channels():
    with pytest.raises(ChannelMismatch):
        Raster(np.zeros((4, 4, 2)))


def test_raster_rejects_empty():
    with pytest.raises(DimensionMismatch):
        Raster(np.zeros((0, 4)))


def test_raster_is_immutable_and_isolated():
    src = np.zeros((2, 2))
    r = Raster(src)
    src[0, 0] = 1.0
    assert r.data[0, 0] == 0.0
    with pytest.raises(ValueError):
        r.data[0, 0] = 0.5
    with pytest.raises(AttributeError):
        r.data = np.ones((2, 2))


def test_mask_requires_binary_values():
    with pytest.raises(ValueError):
        Mask(np.array([[0.5]]))
    m = Mask(np.array([[0, 1], [1, 0]]))
    assert m.data.dtype == np.bool_


def test_quantize_dequantize_roundtrip_is_stable():
    rng = np.random.default_rng(3)
    r = Raster(rng.random((5, 7, 3)))
    once = dequantize(quantize(r))
    twice = dequantize(quantize(once))
    assert once == twice


def test_png_roundtrip_matches_quantization():
    rng = np.random.default_rng(4)
    for channels in (1, 3):
        shape = (6, 5) if channels == 1 else (6, 5, 3)
        r = Raster(rng.random(shape))
        back = raster_from_png(raster_to_png(r))
        assert back == dequantize(quantize(r))
        assert np.abs(back.data - r.data).max() <= 0.5 / 255.0 + 1e-12


def test_mask_png_roundtrip_exact():
    rng = np.random.default_rng(5)
    m = Mask(rng.random((9, 4)) < 0.4)
    assert mask_from_png(mask_to_png(m)) == m


def test_mask_set_operations():
    a = Mask(np.array([[1, 0], [0, 0]]))
    b = Mask(np.array([[0, 0], [0, 1]]))
    assert a.union(b) == Mask(np.array([[1, 0], [0, 1]]))
    assert a.intersection(b).is_empty()
    assert a.invert() == Mask(np.array([[0, 1], [1, 1]]))
