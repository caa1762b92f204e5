"""HSI-RGB pair datasets built from a single scene.

A dataset directory contains ``manifest.json`` plus three packed payloads,
``Z.f32`` (3x16x16 per sample), ``X.f32`` (6x8x8) and ``T.u8`` (16x16), in
manifest order. Floats are little-endian float32.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .degrade import EffectChain, apply_chain, tile_seed
from .fiber import BandSelection, apply_band_selection
from .scene import (Scene, derive_rgb, extract_labels, extract_subcube,
                    spatial_downsample)

TILE = 16
HSI_FACTOR = 2
Z_SHAPE = (3, TILE, TILE)
X_SHAPE = (6, TILE // HSI_FACTOR, TILE // HSI_FACTOR)
T_SHAPE = (TILE, TILE)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class TileSpec:
    x: int
    y: int
    size: int = TILE
    stride: int = 8


@dataclass(eq=False)
class SamplePair:
    Z: np.ndarray
    X: np.ndarray
    T: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class PairDataset:
    samples: list
    split: str
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def arrays(self):
        """Stacked ``(Z, X, T)`` arrays, shapes (N,3,16,16), (N,6,8,8), (N,16,16)."""
        Z = np.stack([s.Z for s in self.samples]).astype(np.float32)
        X = np.stack([s.X for s in self.samples]).astype(np.float32)
        T = np.stack([s.T for s in self.samples]).astype(np.int64)
        return Z, X, T


def enumerate_tiles(scene: Scene, stride: int, size: int = TILE, x_range=None) -> list:
    """Row-major tile origins on a ``stride`` grid with the footprint inside the scene.

    ``x_range=(x0, x1)`` restricts footprints to columns ``[x0, x1)``, with the
    grid anchored at ``x0``.
    """
    if stride <= 0:
        raise DatasetError("stride must be positive")
    if scene.Hs < size or scene.Ws < size:
        raise DatasetError(f"scene {scene.Ws}x{scene.Hs} smaller than a {size}x{size} tile")
    x0, x1 = x_range if x_range is not None else (0, scene.Ws)
    xs = range(x0, x1 - size + 1, stride)
    ys = range(0, scene.Hs - size + 1, stride)
    return [TileSpec(x, y, size, stride) for y in ys for x in xs]


def split_tiles(tiles: list, scene: Scene, test_fraction: float = 0.2, seed: int = 0,
                test_stride: Optional[int] = TILE, side: str = "right"):
    """Spatial block split into ``(train, test, boundary)``.

    Columns are cut into ``TILE``-wide blocks from the held-out edge; blocks
    go to test until at least ``test_fraction`` of ``tiles`` lie inside the
    test columns. Tiles straddling the cut are dropped. Test tiles are then
    re-gridded at ``test_stride`` inside the test block so they do not
    overlap. ``side="random"`` picks the held-out edge from ``seed``.
    """
    if not 0 < test_fraction < 1:
        raise DatasetError("test_fraction must lie in (0, 1)")
    if side == "random":
        side = ("left", "right")[int(np.random.default_rng(seed).integers(2))]
    if side not in ("left", "right"):
        raise DatasetError(f"unknown side {side!r}")
    size = tiles[0].size if tiles else TILE
    stride = tiles[0].stride if tiles else TILE
    n = len(tiles)
    for k in range(1, scene.Ws // size + 1):
        width = k * size
        if side == "right":
            # align the cut to the tile grid so whole tiles fit on the test side
            cut = scene.Ws - width
            cut -= cut % stride
            in_test = [t for t in tiles if t.x >= cut]
            train = [t for t in tiles if t.x + t.size <= cut]
        else:
            cut = width + (-width) % stride
            in_test = [t for t in tiles if t.x + t.size <= cut]
            train = [t for t in tiles if t.x >= cut]
        if len(in_test) >= test_fraction * n:
            break
    else:
        raise DatasetError("test_fraction leaves no training tiles")
    if test_stride is None:
        test = in_test
    else:
        x_range = (cut, scene.Ws) if side == "right" else (0, cut)
        test = enumerate_tiles(scene, test_stride, size, x_range=x_range)
    if not train or not test:
        raise DatasetError("split leaves an empty side")
    return train, test, cut


def footprints_overlap(a: TileSpec, b: TileSpec) -> bool:
    return (a.x < b.x + b.size and b.x < a.x + a.size
            and a.y < b.y + b.size and b.y < a.y + a.size)


def build_pair(scene: Scene, tile: TileSpec, sel: BandSelection, chain: EffectChain) -> SamplePair:
    """One sample: extract, derive RGB, downsample, select bands, degrade."""
    sub = extract_subcube(scene, tile.x, tile.y, tile.size)
    rgb = derive_rgb(sub, scene)
    low = spatial_downsample(sub, HSI_FACTOR)
    hsi = apply_band_selection(low, sel, C=scene.C)
    Z, X = apply_chain(rgb.data, hsi.data, chain)
    T = extract_labels(scene, tile.x, tile.y, tile.size)
    return SamplePair(
        Z=Z.astype(np.float32), X=X.astype(np.float32), T=T,
        meta={"x": tile.x, "y": tile.y, "seed": chain.seed},
    )


def build_pairs(scene: Scene, tiles: list, sel: BandSelection, chain: EffectChain,
                seed: int = 0, split: str = "train") -> PairDataset:
    if sel.scene_name and sel.scene_name != scene.name:
        raise DatasetError(f"band selection fit on {sel.scene_name!r}, scene is {scene.name!r}")
    if max(sel.selected) >= scene.C:
        raise DatasetError(f"selected band {max(sel.selected)} >= scene C={scene.C}")
    samples = []
    for i, tile in enumerate(tiles):
        pair = build_pair(scene, tile, sel, chain.with_seed(tile_seed(seed, i)))
        pair.meta["index"] = i
        samples.append(pair)
    manifest = {
        "scene_name": scene.name,
        "class_names": list(scene.class_names),
        "split": split,
        "seed": seed,
        "chain": chain.to_json(),
        "degrade_hsi": chain.degrade_hsi,
        "band_selection": sel.to_json(),
    }
    return PairDataset(samples=samples, split=split, manifest=manifest)


def replay_pair(scene: Scene, ds: PairDataset, i: int) -> SamplePair:
    """Rebuild sample ``i`` from the scene and the dataset's recorded provenance."""
    m = ds.manifest
    meta = ds.samples[i].meta
    chain = EffectChain.from_json(m["chain"], seed=meta["seed"], degrade_hsi=m["degrade_hsi"])
    sel = BandSelection.from_json(m["band_selection"])
    return build_pair(scene, TileSpec(meta["x"], meta["y"]), sel, chain)


def save_dataset(ds: PairDataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = []
    zb, xb, tb = [], [], []
    for k, s in enumerate(ds.samples):
        if s.Z.shape != Z_SHAPE or s.X.shape != X_SHAPE or s.T.shape != T_SHAPE:
            raise DatasetError(f"sample {k} has shapes {s.Z.shape}, {s.X.shape}, {s.T.shape}")
        entry = dict(s.meta)
        entry.update(
            z_offset=k * 4 * int(np.prod(Z_SHAPE)),
            x_offset=k * 4 * int(np.prod(X_SHAPE)),
            t_offset=k * int(np.prod(T_SHAPE)),
        )
        index.append(entry)
        zb.append(s.Z.astype("<f4").tobytes())
        xb.append(s.X.astype("<f4").tobytes())
        tb.append(s.T.astype(np.uint8).tobytes())
    manifest = {k: v for k, v in ds.manifest.items() if k not in ("split", "count", "samples")}
    manifest.update(split=ds.split, count=len(ds.samples), samples=index)
    (path / "Z.f32").write_bytes(b"".join(zb))
    (path / "X.f32").write_bytes(b"".join(xb))
    (path / "T.u8").write_bytes(b"".join(tb))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_dataset(path) -> PairDataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        index = manifest.pop("samples")
        n = int(manifest["count"])
    except (OSError, json.JSONDecodeError, KeyError) as err:
        raise DatasetError(f"corrupt or missing manifest in {path}: {err}") from err
    if len(index) != n:
        raise DatasetError("manifest count disagrees with sample index")
    payloads = {}
    for fname, shape, dtype, width in (("Z.f32", Z_SHAPE, "<f4", 4), ("X.f32", X_SHAPE, "<f4", 4),
                                       ("T.u8", T_SHAPE, np.uint8, 1)):
        raw = (path / fname).read_bytes()
        expected = n * width * int(np.prod(shape))
        if len(raw) != expected:
            raise DatasetError(f"{fname}: {len(raw)} bytes, expected {expected}")
        payloads[fname] = np.frombuffer(raw, dtype=dtype).reshape(n, *shape)
    samples = []
    for k, entry in enumerate(index):
        meta = {key: v for key, v in entry.items() if not key.endswith("_offset")}
        samples.append(SamplePair(
            Z=payloads["Z.f32"][k].astype(np.float32),
            X=payloads["X.f32"][k].astype(np.float32),
            T=payloads["T.u8"][k].copy(),
            meta=meta,
        ))
    split = manifest.pop("split")
    manifest.pop("count")
    return PairDataset(samples=samples, split=split, manifest=manifest)
