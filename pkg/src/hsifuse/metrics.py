"""Per-class IOU, generalized Dice, and the darkness/haze sweep."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PROB_TOL = 1e-4


class MetricError(ValueError):
    pass


@dataclass
class ConfusionTable:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionTable":
        z = np.zeros(n_classes, dtype=np.int64)
        return cls(z.copy(), z.copy(), z.copy())

    def __add__(self, other: "ConfusionTable") -> "ConfusionTable":
        return ConfusionTable(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def confusion_accumulate(pred, truth, acc: ConfusionTable) -> ConfusionTable:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise MetricError(f"prediction {pred.shape} vs truth {truth.shape}")
    L = acc.tp.size
    p = pred.ravel().astype(np.int64)
    t = truth.ravel().astype(np.int64)
    hit = p == t
    tp = np.bincount(t[hit], minlength=L)[:L]
    fp = np.bincount(p[~hit], minlength=L)[:L]
    fn = np.bincount(t[~hit], minlength=L)[:L]
    return ConfusionTable(acc.tp + tp, acc.fp + fp, acc.fn + fn)


def class_iou(acc: ConfusionTable) -> np.ndarray:
    """IOU per class; NaN marks a class absent from both prediction and truth."""
    denom = acc.tp + acc.fp + acc.fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, acc.tp / np.where(denom > 0, denom, 1), np.nan)


def gdice(prob: np.ndarray, truth: np.ndarray) -> float:
    """Generalized Dice with inverse squared class-volume weights.

    ``prob`` is (..., L, H, W) softmax output and ``truth`` (..., H, W) class
    indices over the whole evaluated set. Classes with no truth pixels get
    zero weight.
    """
    prob = np.asarray(prob, dtype=np.float64)
    truth = np.asarray(truth)
    if prob.ndim == truth.ndim + 1 and prob.ndim >= 3:
        prob = np.moveaxis(prob, -3, -1)
    L = prob.shape[-1]
    prob = prob.reshape(-1, L)
    t = truth.reshape(-1).astype(np.int64)
    if prob.shape[0] != t.size:
        raise MetricError(f"{prob.shape[0]} probability pixels vs {t.size} labels")
    if np.any(np.abs(prob.sum(axis=1) - 1.0) > PROB_TOL):
        raise MetricError("probabilities are not normalized per pixel")
    onehot = np.zeros_like(prob)
    onehot[np.arange(t.size), t] = 1.0
    volume = onehot.sum(axis=0)
    w = np.where(volume > 0, 1.0 / np.where(volume > 0, volume, 1.0) ** 2, 0.0)
    inter = (onehot * prob).sum(axis=0)
    total = (onehot + prob).sum(axis=0)
    den = float(np.sum(w * total))
    return 2.0 * float(np.sum(w * inter)) / den if den > 0 else 0.0


def softmax(logits: np.ndarray, axis: int = -3) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    x = x - x.max(axis=axis, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class EvalReport:
    class_names: tuple
    iou: np.ndarray
    gdice: float
    n_samples: int
    config: dict = field(default_factory=dict)

    @property
    def miou(self) -> float:
        return float(np.nanmean(self.iou))

    def to_json(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "iou": {n: (None if np.isnan(v) else float(v)) for n, v in zip(self.class_names, self.iou)},
            "gdice": float(self.gdice),
            "n_samples": int(self.n_samples),
            "config": self.config,
        }


def report_from_logits(logits: np.ndarray, truth: np.ndarray, class_names, config=None) -> EvalReport:
    pred = np.argmax(logits, axis=1)
    acc = confusion_accumulate(pred, truth, ConfusionTable.empty(len(class_names)))
    return EvalReport(
        class_names=tuple(class_names),
        iou=class_iou(acc),
        gdice=gdice(softmax(logits, axis=1), truth),
        n_samples=int(logits.shape[0]),
        config=dict(config or {}),
    )


def evaluate_model(ckpt, ds_test, net=None) -> EvalReport:
    from .train import predict_logits

    if ds_test.split != "test":
        raise MetricError(f"evaluating on a {ds_test.split!r} split")
    logits = predict_logits(ckpt, ds_test, net=net)
    _, _, T = ds_test.arrays()
    config = {"kind": ckpt.kind, "chain": ds_test.manifest.get("chain")}
    return report_from_logits(logits, T, ckpt.class_names, config)


@dataclass(frozen=True)
class SweepGrid:
    gammas: tuple = (1.0, 2.0, 3.0, 4.0)
    As: tuple = (0.6, 0.8, 0.95)
    contrast: tuple = (False,)

    def cells(self):
        return [(g, a, c) for c in self.contrast for g in self.gammas for a in self.As]

    @property
    def mid_gamma(self) -> float:
        # upper median for even-length grids
        return sorted(self.gammas)[len(self.gammas) // 2]


@dataclass
class SweepRow:
    model: str
    gamma: float
    A: float
    contrast: bool
    gdice: float
    iou: np.ndarray


def run_sweep(scene, sel, models: dict, grid: SweepGrid, test_tiles, seed: int = 0,
              beta: float = 0.1, contrast_models: Optional[dict] = None) -> list:
    """Evaluate every model on a freshly degraded test set per grid cell.

    ``models`` maps a model name to its checkpoint; ``contrast_models``, when
    given, supplies the checkpoints for contrast-enhanced cells.
    """
    from .dataset import build_pairs
    from .degrade import night_chain

    if not grid.cells():
        raise MetricError("empty sweep grid")
    rows = []
    nets = {}
    for gamma, A, contrast in grid.cells():
        pool = contrast_models if (contrast and contrast_models) else models
        try:
            chain = night_chain(gamma=gamma, A=A, beta=beta, contrast=contrast)
            ds = build_pairs(scene, test_tiles, sel, chain, seed=seed, split="test")
            for name, ckpt in pool.items():
                net = nets.setdefault((name, contrast), ckpt.model())
                rep = evaluate_model(ckpt, ds, net=net)
                rows.append(SweepRow(name, gamma, A, contrast, rep.gdice, rep.iou))
        except Exception as err:
            raise MetricError(f"sweep cell gamma={gamma} A={A} contrast={contrast} failed: {err}") from err
    return rows


def write_sweep_csv(rows: list, class_names, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "gamma", "A", "contrast", "gdice"] + [f"iou_{c}" for c in class_names])
        for r in rows:
            w.writerow([r.model, r.gamma, r.A, int(r.contrast), f"{r.gdice:.6f}"]
                       + ["" if np.isnan(v) else f"{v:.6f}" for v in r.iou])


def read_sweep_csv(path) -> list:
    rows = []
    with open(Path(path), newline="") as fh:
        for rec in csv.DictReader(fh):
            iou = np.array([float(v) if v else np.nan for k, v in rec.items() if k.startswith("iou_")])
            rows.append(SweepRow(rec["model"], float(rec["gamma"]), float(rec["A"]),
                                 bool(int(rec["contrast"])), float(rec["gdice"]), iou))
    return rows
