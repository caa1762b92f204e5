"""Band selection by treating pixel spectra as labeled time series.

Each pixel's spectrum becomes a series of length C whose "timestamps" are
band indices. A labeled sample of series is scored per timestamp with a
Fisher ratio (spread of class means over pooled within-class variance); the
best-separated timestamps become the selected bands, and the per-class means
at those bands serve as nearest-mean signatures for a reconstruction check.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .scene import Scene, SubCube

SCORE_EPS = 1e-8


class SelectionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SeriesCollection:
    """``values`` is (N, C); ``labels`` is (N,); ``origins`` is (N, 2) of (x, y)."""

    values: np.ndarray
    labels: np.ndarray
    L: int
    origins: Optional[np.ndarray] = None
    scene_name: str = ""

    @property
    def C(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def present_classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, idx) -> "SeriesCollection":
        idx = np.asarray(idx)
        return SeriesCollection(
            values=self.values[idx],
            labels=self.labels[idx],
            L=self.L,
            origins=None if self.origins is None else self.origins[idx],
            scene_name=self.scene_name,
        )


@dataclass(frozen=True)
class BandSelection:
    candidates: tuple
    selected: tuple
    class_means: tuple  # L rows of 6 values
    seed: int
    scene_name: str = ""

    def __post_init__(self):
        sel = list(self.selected)
        if len(set(self.candidates)) != len(self.candidates):
            raise SelectionError("candidate indices must be distinct")
        if any(b <= a for a, b in zip(sel, sel[1:])):
            raise SelectionError(f"selected indices must be strictly increasing: {sel}")
        means = np.asarray(self.class_means, dtype=np.float64)
        if means.ndim != 2 or means.shape[1] != len(sel):
            raise SelectionError("class_means must be [L][len(selected)]")

    @property
    def means(self) -> np.ndarray:
        return np.asarray(self.class_means, dtype=np.float64)

    def to_json(self) -> dict:
        d = asdict(self)
        d["candidates"] = list(self.candidates)
        d["selected"] = list(self.selected)
        d["class_means"] = [list(r) for r in self.class_means]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BandSelection":
        return cls(
            candidates=tuple(int(i) for i in d["candidates"]),
            selected=tuple(int(i) for i in d["selected"]),
            class_means=tuple(tuple(float(v) for v in row) for row in d["class_means"]),
            seed=int(d["seed"]),
            scene_name=d.get("scene_name", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "BandSelection":
        return cls.from_json(json.loads(Path(path).read_text()))


def pixels_to_series(scene: Scene, region: np.ndarray) -> SeriesCollection:
    """One labeled series per ``True`` pixel of ``region`` (row-major order)."""
    region = np.asarray(region, dtype=bool)
    if region.shape != (scene.Hs, scene.Ws):
        raise SelectionError(f"region shape {region.shape} != scene {(scene.Hs, scene.Ws)}")
    ys, xs = np.nonzero(region)
    if ys.size == 0:
        raise SelectionError("empty region")
    values = scene.cube[:, ys, xs].T.astype(np.float64)
    return SeriesCollection(
        values=values,
        labels=scene.labels[ys, xs].astype(np.int64),
        L=scene.L,
        origins=np.stack([xs, ys], axis=1),
        scene_name=scene.name,
    )


def sample_series(coll: SeriesCollection, n: int, seed: int) -> SeriesCollection:
    """Seeded subset of ``n`` series in which every present class appears.

    One member per present class is drawn first, the rest uniformly from the
    remainder. Members keep their original relative order.
    """
    N = len(coll)
    if n > N:
        raise SelectionError(f"cannot sample {n} series from {N}")
    classes = coll.present_classes()
    if n < classes.size:
        raise SelectionError(f"n={n} cannot represent {classes.size} classes")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.choice(np.flatnonzero(coll.labels == c))) for c in classes]
    rest = np.setdiff1d(np.arange(N), chosen)
    chosen += rng.choice(rest, size=n - len(chosen), replace=False).tolist()
    return coll.subset(np.sort(np.asarray(chosen, dtype=np.int64)))


def _canonical_sum(x: np.ndarray) -> np.ndarray:
    # summing sorted columns makes the result independent of row order
    return np.sort(x, axis=0).sum(axis=0)


def score_timestamps(coll: SeriesCollection) -> np.ndarray:
    """Fisher ratio per channel: variance of the class means over pooled
    within-class variance plus ``SCORE_EPS``."""
    classes = coll.present_classes()
    if classes.size < 2:
        raise SelectionError("scoring needs at least two classes")
    means, ss, dof = [], np.zeros(coll.C), 0
    for c in classes:
        x = coll.values[coll.labels == c]
        if x.shape[0] < 2:
            raise SelectionError(f"class {int(c)} has fewer than 2 series")
        mu = _canonical_sum(x) / x.shape[0]
        means.append(mu)
        ss += _canonical_sum((x - mu) ** 2)
        dof += x.shape[0] - 1
    means = np.stack(means)
    grand = _canonical_sum(means) / means.shape[0]
    between = _canonical_sum((means - grand) ** 2) / means.shape[0]
    pooled = ss / dof
    return between / (pooled + SCORE_EPS)


def select_informative(scores: np.ndarray, k: int, spacing: int = 2) -> list:
    """Greedy top-``k`` channels keeping picks at least ``spacing`` apart.

    Ties go to the lower index. When ``k`` picks cannot be made, spacing is
    relaxed to 1, then 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    C = scores.size
    if k > C:
        raise SelectionError(f"k={k} exceeds {C} channels")
    order = np.argsort(-scores, kind="stable")
    for gap in [spacing] + [g for g in (1, 0) if g < spacing]:
        picked = []
        for c in order:
            if all(abs(int(c) - p) >= gap for p in picked):
                picked.append(int(c))
                if len(picked) == k:
                    return sorted(picked)
    raise SelectionError(f"could not select {k} channels")


def channel_intensity(coll: SeriesCollection) -> np.ndarray:
    """Mean over present classes of the per-class mean value, per channel."""
    rows = [coll.values[coll.labels == c].mean(axis=0) for c in coll.present_classes()]
    return np.mean(rows, axis=0)


def refine_channels(candidates, coll: SeriesCollection, scores: np.ndarray, final: int = 6,
                    end_fraction: float = 0.1, floor: float = 0.05) -> list:
    """Drop dim candidates at either end of the spectrum, keep the ``final`` best.

    A candidate is dropped when it lies in the outer ``end_fraction`` of the
    band range and its class-averaged intensity is below ``floor``. Dropped
    candidates backfill by score if too few survive.
    """
    candidates = [int(c) for c in candidates]
    if len(candidates) < final:
        raise SelectionError(f"need at least {final} candidates, got {len(candidates)}")
    C = coll.C
    edge = end_fraction * C
    intensity = channel_intensity(coll)
    by_score = sorted(candidates, key=lambda c: (-scores[c], c))
    dim = [c for c in by_score if (c < edge or c >= C - edge) and intensity[c] < floor]
    keep = [c for c in by_score if c not in dim][:final]
    keep += dim[:final - len(keep)]
    return sorted(keep)


def class_mean_signatures(coll: SeriesCollection, selected) -> np.ndarray:
    selected = list(selected)
    out = np.empty((coll.L, len(selected)))
    for c in range(coll.L):
        rows = coll.values[coll.labels == c]
        if rows.shape[0] == 0:
            raise SelectionError(f"class {c} absent from the collection")
        out[c] = rows[:, selected].mean(axis=0)
    return out


def apply_band_selection(sub: SubCube, sel: BandSelection, C: Optional[int] = None) -> SubCube:
    """Keep the selected bands of a full-spectrum sub-cube.

    ``C`` is the scene band count when known; otherwise the sub-cube is
    accepted as full-spectrum if it has more bands than the selection.
    """
    bands = sub.bands
    if C is not None and bands != C:
        raise SelectionError(f"sub-cube has {bands} bands, expected the full {C}")
    if bands <= len(sel.selected):
        raise SelectionError(f"sub-cube with {bands} bands is not full-spectrum")
    if max(sel.selected) >= bands:
        raise SelectionError(f"selected index {max(sel.selected)} >= {bands} bands")
    return SubCube(data=sub.data[list(sel.selected)].copy(), origin=sub.origin)


def nearest_mean_labels(pixels: np.ndarray, means: np.ndarray) -> np.ndarray:
    """``pixels`` (..., B) -> index of the closest row of ``means`` (L, B); ties to lower."""
    d = ((pixels[..., None, :] - means) ** 2).sum(axis=-1)
    return np.argmin(d, axis=-1)


def reconstruct_segmentation(scene: Scene, sel: BandSelection):
    """Nearest-class-mean label map over the selected bands, and its pixel accuracy."""
    pix = np.moveaxis(scene.cube[list(sel.selected)], 0, -1).astype(np.float64)
    pred = nearest_mean_labels(pix, sel.means).astype(np.uint8)
    acc = float(np.mean(pred == scene.labels))
    return pred, acc


def fit_band_selection(scene: Scene, region: np.ndarray, n: int = 200, k: int = 12,
                       final: int = 6, seed: int = 0, spacing: int = 2) -> BandSelection:
    """Series -> sample -> score -> top-k -> refine -> signatures."""
    coll = pixels_to_series(scene, region)
    sample = sample_series(coll, n, seed)
    scores = score_timestamps(sample)
    candidates = select_informative(scores, k, spacing=spacing)
    selected = refine_channels(candidates, sample, scores, final=final)
    means = class_mean_signatures(sample, selected)
    return BandSelection(
        candidates=tuple(candidates),
        selected=tuple(selected),
        class_means=tuple(tuple(float(v) for v in row) for row in means),
        seed=seed,
        scene_name=scene.name,
    )
