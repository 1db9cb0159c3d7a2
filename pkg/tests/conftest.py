import numpy as np
import pytest

from creo.model import (
    DecisionState,
    LightSpec,
    PaletteColor,
    StyleSpec,
    blank_state,
)
from creo.raster import Mask, Raster

STYLE_POOL = ("identity", "pencil", "watercolor", "digital-paint", "photoreal-mock")


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_raster(rng, width, height, channels=1):
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Raster(rng.random(shape))


def random_mask(rng, width, height, density=0.3):
    return Mask(rng.random((height, width)) < density)


def random_sketch(rng, width, height):
    """Sparse ink blobs, closer to a drawing than uniform noise."""
    ink = np.zeros((height, width))
    for _ in range(int(rng.integers(1, 4))):
        x = int(rng.integers(0, width))
        y = int(rng.integers(0, height))
        r = int(rng.integers(1, max(2, min(width, height) // 4)))
        ys, xs = np.mgrid[0:height, 0:width]
        ring = np.abs(np.hypot(xs - x, ys - y) - r) < 1.0
        ink[ring] = 1.0
    return Raster(ink)


def random_style(rng):
    preset = STYLE_POOL[int(rng.integers(0, len(STYLE_POOL)))]
    params = {}
    if preset == "watercolor":
        params["grain"] = float(rng.uniform(0.0, 0.1))
    if preset == "digital-paint":
        params["levels"] = int(rng.integers(3, 9))
    return StyleSpec(preset=preset, params=params, seed=int(rng.integers(0, 2**32)))


def random_lights(rng):
    lights = []
    for _ in range(int(rng.integers(0, 3))):
        if rng.random() < 0.4:
            lights.append(LightSpec(kind="ambient", intensity=float(rng.uniform(0, 1))))
        else:
            lights.append(
                LightSpec(
                    kind="directional",
                    azimuth=float(rng.uniform(0, 359.9)),
                    elevation=float(rng.uniform(0, 90)),
                    intensity=float(rng.uniform(0, 1)),
                )
            )
    return tuple(lights)


def random_palette(rng, n=3):
    return tuple(
        PaletteColor(rgb=tuple(float(c) for c in rng.random(3)), label=f"c{i}")
        for i in range(n)
    )


def random_state(rng, width=16, height=16, with_color=True, with_style=True) -> DecisionState:
    """A populated decision state; chroma stays identity when with_color=False."""
    from dataclasses import replace

    from creo.model import StageId

    state = blank_state(width, height)
    visited = {StageId.COMPOSITION}
    layers = {"composition": random_sketch(rng, width, height)}
    if with_color:
        layers["chroma"] = random_raster(rng, width, height, 3)
        visited.add(StageId.COLOR)
    if rng.random() < 0.8:
        layers["shading"] = random_raster(rng, width, height, 1)
        visited.add(StageId.LIGHTING)
    style = random_style(rng) if with_style else StyleSpec()
    if with_style and not style.is_identity():
        visited.add(StageId.STYLE)
    return replace(
        state,
        **layers,
        lights=random_lights(rng),
        palette=random_palette(rng),
        style=style,
        visited=frozenset(visited),
    )
