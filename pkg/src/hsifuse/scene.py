"""Hyperspectral scene storage, tile extraction and resolution reduction.

A scene directory holds three files:

``meta.json``
    ``{name, C, Hs, Ws, L, class_names, band_min, band_max, wavelengths_nm}``
``cube.f32``
    raw sensor values, ``C*Hs*Ws`` little-endian float32, band-major, row-major
``labels.u8``
    ``Hs*Ws`` unsigned bytes

The raw payload is kept on disk untouched; :func:`load_scene` normalizes each
band to ``[0, 1]`` with the stored ``band_min``/``band_max``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

RGB_WAVELENGTHS_NM = (650.0, 550.0, 450.0)


class SceneError(ValueError):
    """Raised for malformed scene directories or invalid tile requests."""


def normalize_bands(raw: np.ndarray, band_min: np.ndarray, band_max: np.ndarray) -> np.ndarray:
    lo = band_min.astype(np.float64)[:, None, None]
    span = (band_max.astype(np.float64) - band_min.astype(np.float64))[:, None, None]
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (raw.astype(np.float64) - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


@dataclass(frozen=True, eq=False)
class Scene:
    """A full hyperspectral cube with per-pixel material labels.

    ``raw`` is the sensor payload exactly as stored; ``cube`` is its per-band
    ``[0, 1]`` normalization and is what every downstream operation reads.
    """

    name: str
    raw: np.ndarray
    labels: np.ndarray
    class_names: tuple
    band_min: np.ndarray
    band_max: np.ndarray
    wavelengths_nm: Optional[np.ndarray] = None
    cube: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        raw = np.ascontiguousarray(self.raw, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if raw.ndim != 3:
            raise SceneError(f"raw cube must be 3-D (C, Hs, Ws), got shape {raw.shape}")
        C, Hs, Ws = raw.shape
        if labels.shape != (Hs, Ws):
            raise SceneError(f"labels shape {labels.shape} does not match scene {(Hs, Ws)}")
        L = len(self.class_names)
        if labels.size and int(labels.max()) >= L:
            raise SceneError(f"label {int(labels.max())} >= class count {L}")
        bmin = np.asarray(self.band_min, dtype=np.float64)
        bmax = np.asarray(self.band_max, dtype=np.float64)
        if bmin.shape != (C,) or bmax.shape != (C,):
            raise SceneError("band_min/band_max must have one entry per band")
        if np.any(bmax < bmin):
            raise SceneError("band_max < band_min")
        wl = self.wavelengths_nm
        if wl is not None:
            wl = np.asarray(wl, dtype=np.float64)
            if wl.shape != (C,):
                raise SceneError(f"{wl.size} wavelengths for {C} bands")
            if np.any(np.diff(wl) <= 0):
                raise SceneError("wavelengths must be strictly increasing")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "band_min", bmin)
        object.__setattr__(self, "band_max", bmax)
        object.__setattr__(self, "wavelengths_nm", wl)
        cube = normalize_bands(raw, bmin, bmax)
        cube.setflags(write=False)
        raw.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "cube", cube)

    @property
    def C(self) -> int:
        return self.raw.shape[0]

    @property
    def Hs(self) -> int:
        return self.raw.shape[1]

    @property
    def Ws(self) -> int:
        return self.raw.shape[2]

    @property
    def L(self) -> int:
        return len(self.class_names)

    @classmethod
    def from_raw(cls, name, raw, labels, class_names, wavelengths_nm=None) -> "Scene":
        """Build a scene whose normalization range is the payload's own min/max."""
        raw = np.asarray(raw, dtype=np.float32)
        flat = raw.reshape(raw.shape[0], -1)
        return cls(
            name=name,
            raw=raw,
            labels=labels,
            class_names=tuple(class_names),
            band_min=flat.min(axis=1).astype(np.float64),
            band_max=flat.max(axis=1).astype(np.float64),
            wavelengths_nm=wavelengths_nm,
        )


@dataclass(frozen=True, eq=False)
class SubCube:
    data: np.ndarray  # (bands, h, w)
    origin: tuple  # (x, y) in scene coordinates

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class RgbTile:
    data: np.ndarray  # (3, 16, 16)
    origin: tuple


def save_scene(scene: Scene, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": scene.name,
        "C": scene.C,
        "Hs": scene.Hs,
        "Ws": scene.Ws,
        "L": scene.L,
        "class_names": list(scene.class_names),
        "band_min": [float(v) for v in scene.band_min],
        "band_max": [float(v) for v in scene.band_max],
    }
    if scene.wavelengths_nm is not None:
        meta["wavelengths_nm"] = [float(v) for v in scene.wavelengths_nm]
    (path / "meta.json").write_text(json.dumps(meta, indent=1))
    (path / "cube.f32").write_bytes(scene.raw.astype("<f4").tobytes())
    (path / "labels.u8").write_bytes(scene.labels.astype(np.uint8).tobytes())


def load_scene(path) -> Scene:
    path = Path(path)
    for fname in ("meta.json", "cube.f32", "labels.u8"):
        if not (path / fname).is_file():
            raise SceneError(f"missing {fname} in {path}")
    meta = json.loads((path / "meta.json").read_text())
    C, Hs, Ws = int(meta["C"]), int(meta["Hs"]), int(meta["Ws"])
    class_names = meta["class_names"]
    if int(meta.get("L", len(class_names))) != len(class_names):
        raise SceneError("L disagrees with class_names")
    cube_bytes = (path / "cube.f32").read_bytes()
    if len(cube_bytes) != 4 * C * Hs * Ws:
        raise SceneError(
            f"cube.f32 has {len(cube_bytes)} bytes, expected 4*{C}*{Hs}*{Ws}={4 * C * Hs * Ws}"
        )
    label_bytes = (path / "labels.u8").read_bytes()
    if len(label_bytes) != Hs * Ws:
        raise SceneError(f"labels.u8 has {len(label_bytes)} bytes, expected {Hs * Ws}")
    raw = np.frombuffer(cube_bytes, dtype="<f4").reshape(C, Hs, Ws).astype(np.float32)
    labels = np.frombuffer(label_bytes, dtype=np.uint8).reshape(Hs, Ws).copy()
    return Scene(
        name=meta["name"],
        raw=raw,
        labels=labels,
        class_names=tuple(class_names),
        band_min=np.asarray(meta["band_min"], dtype=np.float64),
        band_max=np.asarray(meta["band_max"], dtype=np.float64),
        wavelengths_nm=meta.get("wavelengths_nm"),
    )


def extract_subcube(scene: Scene, x: int, y: int, size: int = 16) -> SubCube:
    if x < 0 or y < 0 or x + size > scene.Ws or y + size > scene.Hs:
        raise SceneError(
            f"window ({x}, {y}, size {size}) outside scene {scene.Ws}x{scene.Hs}"
        )
    data = scene.cube[:, y:y + size, x:x + size].copy()
    return SubCube(data=data, origin=(x, y))


def extract_labels(scene: Scene, x: int, y: int, size: int = 16) -> np.ndarray:
    if x < 0 or y < 0 or x + size > scene.Ws or y + size > scene.Hs:
        raise SceneError(f"window ({x}, {y}, size {size}) outside scene")
    return scene.labels[y:y + size, x:x + size].copy()


def rgb_band_indices(scene: Scene, fallback: Sequence[int] = (30, 20, 10)) -> tuple:
    """Band indices used as R, G, B.

    With known wavelengths these are the bands nearest 650/550/450 nm (first
    one wins on an exact tie); otherwise ``fallback`` is used verbatim.
    """
    if scene.wavelengths_nm is None:
        return tuple(int(i) for i in fallback)
    wl = scene.wavelengths_nm
    return tuple(int(np.argmin(np.abs(wl - target))) for target in RGB_WAVELENGTHS_NM)


def derive_rgb(sub: SubCube, scene: Scene, fallback: Sequence[int] = (30, 20, 10)) -> RgbTile:
    if sub.h != 16 or sub.w != 16:
        raise SceneError(f"RGB tiles are 16x16, got {sub.h}x{sub.w}")
    if sub.bands < 3 or sub.bands != scene.C:
        raise SceneError(f"derive_rgb needs the full {scene.C}-band sub-cube, got {sub.bands}")
    idx = rgb_band_indices(scene, fallback)
    if max(idx) >= sub.bands or min(idx) < 0:
        raise SceneError(f"RGB band indices {idx} out of range for {sub.bands} bands")
    return RgbTile(data=sub.data[list(idx)].copy(), origin=sub.origin)


def box_downsample(grid: np.ndarray, factor: int) -> np.ndarray:
    """Mean over non-overlapping ``factor x factor`` blocks of the last two axes."""
    h, w = grid.shape[-2:]
    if factor < 1 or h % factor or w % factor:
        raise SceneError(f"factor {factor} does not divide {h}x{w}")
    lead = grid.shape[:-2]
    blocks = grid.reshape(*lead, h // factor, factor, w // factor, factor)
    return blocks.astype(np.float64).mean(axis=(-3, -1))


def spatial_downsample(sub: SubCube, factor: int = 2) -> SubCube:
    out = box_downsample(sub.data, factor).astype(np.float32)
    return SubCube(data=out, origin=sub.origin)
