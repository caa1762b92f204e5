"""End-to-end steps shared by the command line, scripts and acceptance suite."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ChainParams, RunConfig
from .dataset import build_pairs, enumerate_tiles, split_tiles
from .degrade import EffectChain, night_chain
from .fiber import BandSelection, fit_band_selection, reconstruct_segmentation
from .scene import Scene
from .train import TrainConfig

TEST_SEED_OFFSET = 1  # test tiles draw their depth fields from seed + 1


def chain_tag(chain: ChainParams) -> str:
    return "contrast" if chain.contrast else "plain"


def make_chain(p: ChainParams, seed: int = 0) -> EffectChain:
    chain = night_chain(gamma=p.gamma, A=p.A, beta=p.beta, contrast=p.contrast,
                        sigma=p.sigma, window=p.window, d_max=p.d_max, seed=seed)
    return replace(chain, degrade_hsi=p.degrade_hsi)


def plan_split(scene: Scene, cfg: RunConfig):
    """``(train_tiles, test_tiles, cut)`` from the dataset section."""
    d = cfg.dataset
    tiles = enumerate_tiles(scene, d.train_stride)
    return split_tiles(tiles, scene, d.test_fraction, seed=d.seed, test_stride=d.test_stride, side=d.side)


def training_region(scene: Scene, train_tiles: list) -> np.ndarray:
    """Pixels covered by at least one training tile."""
    mask = np.zeros((scene.Hs, scene.Ws), bool)
    for t in train_tiles:
        mask[t.y:t.y + t.size, t.x:t.x + t.size] = True
    return mask


def select_bands(scene: Scene, cfg: RunConfig):
    """Fit the band selection on training pixels; returns ``(selection, report)``."""
    train_tiles, _, _ = plan_split(scene, cfg)
    f = cfg.fiber
    sel = fit_band_selection(scene, training_region(scene, train_tiles), n=f.n, k=f.k,
                             final=f.final, seed=f.seed, spacing=f.spacing)
    _, acc = reconstruct_segmentation(scene, sel)
    report = {
        "scene_name": scene.name,
        "candidates": list(sel.candidates),
        "selected": list(sel.selected),
        "reconstruction_accuracy": acc,
        "n": f.n,
        "seed": f.seed,
    }
    return sel, report


def build_datasets(scene: Scene, sel: BandSelection, cfg: RunConfig, chain: ChainParams = None):
    chain = chain or cfg.chain
    train_tiles, test_tiles, _ = plan_split(scene, cfg)
    seed = cfg.dataset.seed
    ds_train = build_pairs(scene, train_tiles, sel, make_chain(chain), seed=seed, split="train")
    ds_test = build_pairs(scene, test_tiles, sel, make_chain(chain), seed=seed + TEST_SEED_OFFSET,
                          split="test")
    return ds_train, ds_test


def train_config(cfg: RunConfig, kind: str) -> TrainConfig:
    t = cfg.train
    return TrainConfig(kind=kind, lr=t.lr, batch_size=t.batch_size, epochs=t.epochs,
                       seed=t.seed, focal_gamma=t.focal_gamma)


class Layout:
    """Where each artifact of a run lives under ``cfg.out``."""

    def __init__(self, cfg: RunConfig):
        self.root = Path(cfg.out)

    def bands(self) -> Path:
        return self.root / "bands.json"

    def bands_report(self) -> Path:
        return self.root / "bands_report.json"

    def data(self, tag: str, split: str) -> Path:
        return self.root / "data" / tag / split

    def model(self, tag: str, kind: str) -> Path:
        return self.root / "models" / tag / kind

    def eval_dir(self, tag: str) -> Path:
        return self.root / "eval" / tag

    def sweep_dir(self) -> Path:
        return self.root / "sweep"

    def render_dir(self) -> Path:
        return self.root / "render"
