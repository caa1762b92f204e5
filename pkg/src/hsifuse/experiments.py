"""The table and sweep experiments on one scene, shared by scripts and acceptance tests."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

from .config import ChainParams, RunConfig
from .metrics import EvalReport, SweepGrid, evaluate_model, run_sweep
from .model import KINDS
from .pipeline import TEST_SEED_OFFSET, build_datasets, plan_split, select_bands, train_config
from .scene import Scene
from .train import Checkpoint, train

log = logging.getLogger(__name__)


def settings(cfg: RunConfig) -> dict:
    """Haze only (daytime), night, and night with contrast enhancement."""
    night = replace(cfg.chain, gamma=SweepGrid(gammas=cfg.sweep.gammas).mid_gamma, contrast=False)
    return {
        "haze": replace(night, gamma=1.0),
        "night": night,
        "night_contrast": replace(night, contrast=True),
    }


@dataclass
class SettingResult:
    chain: ChainParams
    checkpoints: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    seconds: float = 0.0

    def gdice(self, kind: str) -> float:
        return self.reports[kind].gdice


def run_setting(scene: Scene, sel, cfg: RunConfig, chain: ChainParams, kinds=KINDS) -> SettingResult:
    start = time.perf_counter()
    ds_train, ds_test = build_datasets(scene, sel, cfg, chain)
    res = SettingResult(chain)
    for kind in kinds:
        ckpt = train(ds_train, train_config(cfg, kind))
        res.checkpoints[kind] = ckpt
        res.reports[kind] = evaluate_model(ckpt, ds_test)
        log.info("%s gamma=%s contrast=%s gdice=%.4f", kind, chain.gamma, chain.contrast,
                 res.reports[kind].gdice)
    res.seconds = time.perf_counter() - start
    return res


def run_tables(scene: Scene, cfg: RunConfig, names=("haze", "night", "night_contrast"), kinds=KINDS):
    """Band selection plus every requested setting; returns ``(sel, band_report, results)``."""
    sel, band_report = select_bands(scene, cfg)
    table = settings(cfg)
    return sel, band_report, {n: run_setting(scene, sel, cfg, table[n], kinds) for n in names}


def sweep(scene: Scene, sel, cfg: RunConfig, checkpoints: dict, contrast_checkpoints: dict = None):
    _, test_tiles, _ = plan_split(scene, cfg)
    grid = SweepGrid(gammas=cfg.sweep.gammas, As=cfg.sweep.As,
                     contrast=cfg.sweep.contrast if contrast_checkpoints else (False,))
    return run_sweep(scene, sel, checkpoints, grid, test_tiles, seed=cfg.dataset.seed + TEST_SEED_OFFSET,
                     beta=cfg.chain.beta, contrast_models=contrast_checkpoints)


def format_table(results: dict) -> str:
    """Rows = setting/model, columns = per-class IOU and gDice."""
    lines = []
    for name, res in results.items():
        for kind, rep in res.reports.items():
            if not lines:
                lines.append(f"{'setting':16s}{'model':10s}" + "".join(f"{c:>9s}" for c in rep.class_names)
                             + f"{'gDice':>9s}")
            lines.append(f"{name:16s}{kind:10s}" + "".join(f"{v:9.4f}" for v in rep.iou) + f"{rep.gdice:9.4f}")
    return "\n".join(lines)
