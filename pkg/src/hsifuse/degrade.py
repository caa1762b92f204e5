"""Night-time and haze adversity for image tiles.

All functions take ``(bands, H, W)`` arrays with values in ``[0, 1]`` and
return new arrays of the same shape; nothing is modified in place.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .scene import box_downsample

ORDER = {"low_light": 0, "contrast": 1, "scattering": 2}


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class LowLightConfig:
    gamma: float = 3.0

    def __post_init__(self):
        if self.gamma < 1:
            raise ChainError(f"gamma must be >= 1 for darkening, got {self.gamma}")


@dataclass(frozen=True)
class ScatteringConfig:
    A: float = 0.8
    beta: float = 0.1
    d_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.A <= 1.0:
            raise ChainError(f"A must be in [0, 1], got {self.A}")
        if self.beta <= 0 or self.d_max <= 0:
            raise ChainError("beta and d_max must be positive")


@dataclass(frozen=True)
class ContrastConfig:
    sigma: float = 1.0
    window: int = 7

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ChainError(f"window must be an odd integer >= 3, got {self.window}")
        if self.sigma <= 0:
            raise ChainError("sigma must be positive")


def low_light(img: np.ndarray, cfg: LowLightConfig) -> np.ndarray:
    """Per-band gamma darkening that keeps each band's min and max in place."""
    if cfg.gamma < 1:
        raise ChainError(f"gamma must be >= 1, got {cfg.gamma}")
    if cfg.gamma == 1:
        return img.copy()
    x = img.astype(np.float64)
    lo = x.min(axis=(-2, -1), keepdims=True)
    hi = x.max(axis=(-2, -1), keepdims=True)
    span = hi - lo
    flat = span <= 0
    g = (x - lo) / np.where(flat, 1.0, span)
    out = np.where(flat, x, lo + span * g ** cfg.gamma)
    return out.astype(img.dtype)


def make_depth_field(shape, cfg: ScatteringConfig) -> np.ndarray:
    """I.i.d. uniform depth on ``[0, d_max]``, reproducible from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(0.0, cfg.d_max, size=tuple(shape))


def transmittance(depth: np.ndarray, beta: float) -> np.ndarray:
    return np.exp(-beta * np.asarray(depth, dtype=np.float64))


def atmospheric_scattering(img: np.ndarray, depth: np.ndarray, cfg: ScatteringConfig) -> np.ndarray:
    """Haze blend ``J*t + A*(1-t)`` with ``t = exp(-beta*depth)`` shared by all bands."""
    if img.shape[-2:] != depth.shape:
        raise ChainError(f"depth {depth.shape} does not match image {img.shape[-2:]}")
    t = transmittance(depth, cfg.beta)
    out = img.astype(np.float64) * t + cfg.A * (1.0 - t)
    return out.astype(img.dtype)


def parabola_alpha(g_a: np.ndarray) -> np.ndarray:
    """Curvature of the parabola through (0,0), (g_a, 0.5) and (1,1).

    The curve is ``alpha*g**2 + (1-alpha)*g``; ``alpha`` is 0 where ``g_a`` is
    0 or 1.
    """
    g_a = np.asarray(g_a, dtype=np.float64)
    denom = g_a * g_a - g_a
    ok = denom != 0
    return np.where(ok, (0.5 - g_a) / np.where(ok, denom, 1.0), 0.0)


def contrast_enhance(img: np.ndarray, cfg: ContrastConfig) -> np.ndarray:
    """Local parabolic contrast stretch.

    Each band is Gaussian-smoothed to a guidance image; local min, max and
    mean of the guidance over a ``window`` square set a parabola mapping the
    local minimum to 0, the local mean to 0.5 and the local maximum to 1.
    """
    if cfg.window % 2 == 0 or cfg.window < 3:
        raise ChainError(f"window must be odd and >= 3, got {cfg.window}")
    out = np.empty(img.shape, dtype=np.float64)
    for b in range(img.shape[0]):
        v = img[b].astype(np.float64)
        guide = ndimage.gaussian_filter(v, cfg.sigma, mode="nearest")
        m = ndimage.minimum_filter(guide, size=cfg.window, mode="nearest")
        M = ndimage.maximum_filter(guide, size=cfg.window, mode="nearest")
        a = ndimage.uniform_filter(guide, size=cfg.window, mode="nearest")
        span = M - m
        flat = span < 1e-6
        safe = np.where(flat, 1.0, span)
        g = np.clip((v - m) / safe, 0.0, 1.0)
        alpha = parabola_alpha((a - m) / safe)
        y = np.clip(alpha * g * g + (1.0 - alpha) * g, 0.0, 1.0)
        out[b] = np.where(flat, v, y)
    return out.astype(img.dtype)


@dataclass(frozen=True)
class Effect:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ORDER:
            raise ChainError(f"unknown effect {self.kind!r}")


@dataclass(frozen=True)
class EffectChain:
    """Ordered effects plus the seed that drives any randomness (depth)."""

    effects: tuple = ()
    seed: int = 0
    degrade_hsi: bool = True

    def __post_init__(self):
        ranks = [ORDER[e.kind] for e in self.effects]
        if ranks != sorted(ranks) or len(set(ranks)) != len(ranks):
            kinds = [e.kind for e in self.effects]
            raise ChainError(f"effects must follow low_light -> contrast -> scattering: {kinds}")

    def with_seed(self, seed: int) -> "EffectChain":
        return EffectChain(self.effects, seed, self.degrade_hsi)

    def to_json(self) -> list:
        return [{"kind": e.kind, "params": dict(e.params), "seed": self.seed} for e in self.effects]

    @classmethod
    def from_json(cls, entries: list, seed: Optional[int] = None, degrade_hsi: bool = True):
        effects = tuple(Effect(e["kind"], dict(e.get("params", {}))) for e in entries)
        if seed is None:
            seeds = {e.get("seed", 0) for e in entries}
            seed = seeds.pop() if len(seeds) == 1 else 0
        return cls(effects, int(seed), degrade_hsi)


def night_chain(gamma: float = 3.0, A: float = 0.8, beta: float = 0.1, contrast: bool = False,
                sigma: float = 1.0, window: int = 7, d_max: float = 10.0, seed: int = 0) -> EffectChain:
    effects = []
    if gamma != 1.0:
        effects.append(Effect("low_light", {"gamma": gamma}))
    if contrast:
        effects.append(Effect("contrast", {"sigma": sigma, "window": window}))
    effects.append(Effect("scattering", {"A": A, "beta": beta, "d_max": d_max}))
    return EffectChain(tuple(effects), seed)


def tile_seed(global_seed: int, tile_index: int) -> int:
    return int(global_seed) ^ int(tile_index)


def _apply(kind, params, img, depth, seed):
    if kind == "low_light":
        return low_light(img, LowLightConfig(**params))
    if kind == "contrast":
        return contrast_enhance(img, ContrastConfig(**params))
    return atmospheric_scattering(img, depth, ScatteringConfig(**params, seed=seed))


def apply_chain(rgb: np.ndarray, hsi: np.ndarray, chain: EffectChain):
    """Degrade an RGB tile and its HSI tile with one chain.

    The depth field is drawn once at the RGB resolution and box-averaged down
    to the HSI resolution so both modalities see the same haze.
    """
    rgb_out, hsi_out = rgb, hsi
    for e in chain.effects:
        depth_rgb = depth_hsi = None
        if e.kind == "scattering":
            cfg = ScatteringConfig(**e.params, seed=chain.seed)
            depth_rgb = make_depth_field(rgb.shape[-2:], cfg)
            factor = rgb.shape[-1] // hsi.shape[-1]
            depth_hsi = box_downsample(depth_rgb, factor) if factor > 1 else depth_rgb
        rgb_out = _apply(e.kind, e.params, rgb_out, depth_rgb, chain.seed)
        if chain.degrade_hsi:
            hsi_out = _apply(e.kind, e.params, hsi_out, depth_hsi, chain.seed)
    return rgb_out.copy() if rgb_out is rgb else rgb_out, hsi_out.copy() if hsi_out is hsi else hsi_out
