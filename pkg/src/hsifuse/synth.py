"""Scene ingestion and procedurally generated stand-in scenes.

``ingest_arrays`` is the one-time conversion from an array dump (``.npz`` with
``cube``, ``labels`` and optionally ``wavelengths``/``class_names``) into the
scene directory format.

``jasper_like`` and ``urban_like`` generate scenes with the dimensions and
class sets of the two public aerial scenes (100x100x224 with Road/Dirt/Water/
Tree; 307x307x210 with Asphalt/Grass/Tree/Roof/Metal/Dirt). Pixels are linear
mixtures of analytic endmember reflectances, passed through a solar
illumination curve, atmospheric water-vapour absorption, a sensor response
that falls off at both spectral ends, and additive read noise.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .scene import Scene, SceneError, save_scene

JASPER_CLASSES = ("Road", "Dirt", "Water", "Tree")
URBAN_CLASSES = ("Asphalt", "Grass", "Tree", "Roof", "Metal", "Dirt")


def _gauss(wl, center, width):
    return np.exp(-0.5 * ((wl - center) / width) ** 2)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# -- endmember reflectances (unitless, roughly 0..0.6) ---------------------

def vegetation(wl, vigor=1.0):
    vis = 0.03 + 0.06 * _gauss(wl, 550, 35)
    nir = 0.47 * vigor * _sigmoid((wl - 715) / 14)
    swir_drop = 1.0 - 0.45 * _sigmoid((wl - 1300) / 60) - 0.25 * _sigmoid((wl - 1900) / 80)
    water_dips = 1.0 - 0.12 * _gauss(wl, 970, 30) - 0.2 * _gauss(wl, 1200, 40)
    return vis + nir * swir_drop * water_dips


def open_water(wl):
    return 0.015 + 0.055 * _gauss(wl, 470, 90) * (wl < 900) + 0.01 * _gauss(wl, 560, 40)


def bare_soil(wl):
    base = 0.07 + 0.28 * (1.0 - np.exp(-(wl - 350) / 550))
    return base * (1.0 - 0.18 * _gauss(wl, 2200, 40) - 0.08 * _gauss(wl, 1400, 50))


def asphalt(wl):
    return 0.07 + 0.06 * (wl - 350) / 2150 + 0.01 * _gauss(wl, 1700, 200)


def dry_grass(wl):
    return 0.5 * vegetation(wl, vigor=0.75) + 0.5 * bare_soil(wl) * 0.9


def roof_tile(wl):
    return 0.12 + 0.2 * _sigmoid((wl - 560) / 30) * (1.0 - 0.2 * (wl - 560).clip(0) / 1940)


def metal_roof(wl):
    return 0.3 + 0.05 * np.sin(wl / 400.0) - 0.04 * (wl - 350) / 2150


# -- acquisition chain ------------------------------------------------------

def solar_irradiance(wl):
    # Planck curve at 5778 K, peak normalized to 1
    h, c, k = 6.626e-34, 2.998e8, 1.381e-23
    lam = wl * 1e-9
    b = 1.0 / (lam ** 5 * (np.exp(h * c / (lam * k * 5778.0)) - 1.0))
    return b / b.max()


def atmospheric_transmission(wl):
    t = np.ones_like(wl)
    for center, width, depth in ((760, 5, 0.6), (940, 25, 0.5), (1130, 30, 0.55),
                                 (1400, 45, 0.98), (1880, 60, 0.99), (2500, 120, 0.4)):
        t = t * (1.0 - depth * _gauss(wl, center, width))
    return t


def sensor_response(wl):
    return _sigmoid((wl - 420) / 12) * _sigmoid((2440 - wl) / 15)


def _smooth_field(rng, shape, sigma):
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return f / (f.std() + 1e-12)


def _render(rng, abundances, endmembers, wl, brightness, noise=0.0015, gain=4000.0):
    """Mix ``abundances`` (K, H, W) of ``endmembers`` (K, C) into raw counts (C, H, W)."""
    reflect = np.einsum("khw,kc->chw", abundances, endmembers) * brightness[None]
    radiance = reflect * (solar_irradiance(wl) * atmospheric_transmission(wl)
                          * sensor_response(wl))[:, None, None]
    radiance = radiance + noise * rng.standard_normal(radiance.shape)
    return (gain * radiance).astype(np.float32)


def _soft(dist, width):
    return _sigmoid(-dist / width)


def jasper_like(seed: int = 0, size: int = 100, C: int = 224) -> Scene:
    """A 100x100 riparian scene: a meandering river, a road with dirt verges,
    scattered bare-soil clearings and forest canopy elsewhere."""
    rng = np.random.default_rng(seed)
    wl = np.linspace(380.0, 2500.0, C)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    s = size / 100.0

    river_x = 12 * s + 0.78 * yy + 7 * s * np.sin(yy / (9 * s))
    river_half = (6 + 1.5 * np.sin(yy / (13 * s))) * s
    d_water = np.abs(xx - river_x) - river_half
    road_y = 72 * s + 0.12 * xx + 4 * s * np.sin(xx / (14 * s))
    d_road = np.abs(yy - road_y) - 2.0 * s
    spur_x = 44 * s + 0.15 * (yy - 72 * s)
    d_spur = np.where(yy < road_y, np.abs(xx - spur_x) - 1.4 * s, np.inf)
    d_road = np.minimum(d_road, d_spur)
    clearings = _smooth_field(rng, (size, size), 6 * s)
    d_dirt = np.minimum(np.abs(yy - road_y) - 6 * s, 1.2 * (0.9 - clearings) * 6 * s)
    bank = np.abs(xx - river_x) - river_half - 4 * s
    d_dirt = np.minimum(d_dirt, np.where(xx > river_x, bank, np.inf))

    a_water = _soft(d_water, 0.6)
    a_road = _soft(d_road, 0.5) * (1 - a_water)
    a_dirt = _soft(d_dirt, 0.8) * (1 - a_water) * (1 - a_road)
    a_tree = np.clip(1.0 - a_water - a_road - a_dirt, 0, None) + 0.02
    ab = np.stack([a_road, a_dirt, a_water, a_tree])
    ab = ab / ab.sum(axis=0, keepdims=True)
    labels = np.argmax(ab, axis=0).astype(np.uint8)

    endmembers = np.stack([asphalt(wl), bare_soil(wl), open_water(wl), vegetation(wl)])
    brightness = 1.0 + 0.08 * _smooth_field(rng, (size, size), 2.0) \
        + 0.03 * rng.standard_normal((size, size))
    raw = _render(rng, ab, endmembers, wl, brightness)
    return Scene.from_raw("jasper_like", raw, labels, JASPER_CLASSES, wavelengths_nm=wl)


def urban_like(seed: int = 0, size: int = 307, C: int = 210) -> Scene:
    """A 307x307 town: a street grid, tiled and metal roofs on blocks, lawns,
    tree clusters and dirt lots."""
    rng = np.random.default_rng(seed)
    wl = np.linspace(400.0, 2500.0, C)
    yy, xx = np.mgrid[0:size, 0:size]
    street = ((xx % 60) < 6) | ((yy % 55) < 5)
    roof = np.zeros((size, size), bool)
    metal = np.zeros((size, size), bool)
    for bx in range(0, size, 60):
        for by in range(0, size, 55):
            for _ in range(rng.integers(1, 4)):
                x0, y0 = bx + 8 + rng.integers(0, 35), by + 7 + rng.integers(0, 30)
                w, h = rng.integers(6, 16), rng.integers(6, 14)
                target = metal if rng.random() < 0.2 else roof
                target[y0:y0 + h, x0:x0 + w] = True
    cover = _smooth_field(rng, (size, size), 5)
    tree = (cover > 0.7) & ~street & ~roof & ~metal
    dirt = (cover < -1.0) & ~street & ~roof & ~metal
    ab = np.zeros((6, size, size))
    ab[0] = street
    ab[3] = roof & ~metal
    ab[4] = metal
    ab[2] = tree
    ab[5] = dirt & ~tree
    ab[1] = ab.sum(axis=0) == 0
    ab = ndimage.gaussian_filter(ab, (0, 0.7, 0.7)) + 1e-3
    ab = ab / ab.sum(axis=0, keepdims=True)
    labels = np.argmax(ab, axis=0).astype(np.uint8)
    endmembers = np.stack([asphalt(wl), dry_grass(wl), vegetation(wl), roof_tile(wl),
                           metal_roof(wl), bare_soil(wl)])
    brightness = 1.0 + 0.1 * _smooth_field(rng, (size, size), 3.0) \
        + 0.05 * rng.standard_normal((size, size))
    raw = _render(rng, ab, endmembers, wl, brightness)
    return Scene.from_raw("urban_like", raw, labels, URBAN_CLASSES, wavelengths_nm=wl)


SYNTHETIC = {"jasper": jasper_like, "urban": urban_like}


def ingest_arrays(src, out, name=None, class_names=None) -> Scene:
    """Convert an ``.npz`` array dump into a scene directory.

    ``cube`` may be (C, H, W) or (H, W, C); ``labels`` is (H, W) of class
    indices, or (L, H, W)/(H, W, L) abundances which are reduced by argmax.
    """
    src = Path(src)
    with np.load(src, allow_pickle=False) as npz:
        cube = np.asarray(npz["cube"], dtype=np.float32)
        labels = np.asarray(npz["labels"])
        wl = np.asarray(npz["wavelengths"], dtype=np.float64) if "wavelengths" in npz else None
        if class_names is None and "class_names" in npz:
            class_names = [str(c) for c in npz["class_names"]]
    if cube.ndim != 3:
        raise SceneError(f"cube must be 3-D, got {cube.shape}")
    if labels.ndim == 3:
        if labels.shape[1:] == cube.shape[1:] or labels.shape[1:] == cube.shape[:2]:
            labels = np.argmax(labels, axis=0)
        else:
            labels = np.argmax(labels, axis=-1)
    if labels.shape == cube.shape[:2] and labels.shape != cube.shape[1:]:
        cube = np.moveaxis(cube, -1, 0)
    if class_names is None:
        class_names = [f"class{i}" for i in range(int(labels.max()) + 1)]
    scene = Scene.from_raw(name or src.stem, cube, labels.astype(np.uint8), class_names, wl)
    save_scene(scene, out)
    return scene
