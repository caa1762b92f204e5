"""Focal-loss training, checkpoints and prediction."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import PairDataset, SamplePair
from .model import KINDS, build_model, init_params

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "siamese"
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 200
    seed: int = 0
    focal_gamma: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("lr, batch_size and epochs must be positive")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")


def focal_loss(logits: torch.Tensor, target: torch.Tensor, gamma: float = 3.0) -> torch.Tensor:
    """Mean over pixels (and samples) of ``-(1 - p_t)**gamma * log(p_t)``.

    ``logits`` is (N, L, H, W) or (L, H, W); ``target`` holds class indices.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if logits.dim() == 3:
        logits, target = logits[None], target[None]
    target = target.long()
    n_classes = logits.shape[1]
    if target.numel() and (int(target.max()) >= n_classes or int(target.min()) < 0):
        raise ValueError(f"label outside [0, {n_classes})")
    logp = F.log_softmax(logits, dim=1)
    logp_t = logp.gather(1, target[:, None]).squeeze(1)
    p_t = logp_t.exp()
    weight = (1.0 - p_t) ** gamma if gamma != 0 else torch.ones_like(p_t)
    return -(weight * logp_t).mean()


@dataclass
class Checkpoint:
    kind: str
    class_names: tuple
    config: TrainConfig
    state: dict  # name -> float32 ndarray
    band_selection: Optional[dict] = None
    loss_trace: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def model(self, dtype=torch.float32) -> torch.nn.Module:
        net = build_model(self.kind, self.n_classes)
        net.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in self.state.items()})
        return net.to(dtype).eval()

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        entries, chunks, offset = [], [], 0
        for name, arr in self.state.items():
            buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(buf)
            offset += len(buf)
        doc = {
            "kind": self.kind,
            "class_names": list(self.class_names),
            "config": asdict(self.config),
            "band_selection": self.band_selection,
            "loss_trace": [float(v) for v in self.loss_trace],
            "params": entries,
            "payload_bytes": offset,
        }
        (path / "params.f32").write_bytes(b"".join(chunks))
        (path / "checkpoint.json").write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        doc = json.loads((path / "checkpoint.json").read_text())
        payload = (path / "params.f32").read_bytes()
        if len(payload) != doc["payload_bytes"]:
            raise TrainingError(f"params.f32 has {len(payload)} bytes, expected {doc['payload_bytes']}")
        state = {}
        for e in doc["params"]:
            n = int(np.prod(e["shape"])) if e["shape"] else 1
            state[e["name"]] = np.frombuffer(payload, "<f4", count=n, offset=e["offset"]) \
                .reshape(e["shape"]).astype(np.float32)
        return cls(
            kind=doc["kind"],
            class_names=tuple(doc["class_names"]),
            config=TrainConfig(**doc["config"]),
            state=state,
            band_selection=doc.get("band_selection"),
            loss_trace=list(doc["loss_trace"]),
        )


def set_sequential(flag: bool = True) -> None:
    """Single-threaded deterministic kernels, for bit-reproducible runs."""
    if flag:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _tensors(ds: PairDataset):
    Z, X, T = ds.arrays()
    return torch.from_numpy(X), torch.from_numpy(Z), torch.from_numpy(T)


def train(ds_train: PairDataset, cfg: TrainConfig, progress: bool = False) -> Checkpoint:
    if len(ds_train) == 0:
        raise TrainingError("empty training set")
    if ds_train.split != "train":
        raise TrainingError(f"training on a {ds_train.split!r} split")
    class_names = tuple(ds_train.manifest.get("class_names", ()))
    X, Z, T = _tensors(ds_train)
    if not class_names:
        class_names = tuple(f"class{i}" for i in range(int(T.max()) + 1))
    net = init_params(build_model(cfg.kind, len(class_names)), cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    trace = []
    net.train()
    for epoch in range(cfg.epochs):
        order = torch.from_numpy(rng.permutation(n))
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = focal_loss(net(X[idx], Z[idx]), T[idx], cfg.focal_gamma)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * idx.numel()
        trace.append(total / n)
        if progress and (epoch % 20 == 0 or epoch == cfg.epochs - 1):
            log.info("%s epoch %d loss %.5f", cfg.kind, epoch, trace[-1])
    state = {k: v.detach().numpy().astype(np.float32).copy() for k, v in net.state_dict().items()}
    return Checkpoint(
        kind=cfg.kind,
        class_names=class_names,
        config=cfg,
        state=state,
        band_selection=ds_train.manifest.get("band_selection"),
        loss_trace=trace,
    )


def check_compatible(ckpt: Checkpoint, manifest: dict) -> None:
    if ckpt.kind != "siamese" or ckpt.band_selection is None:
        return
    ds_sel = manifest.get("band_selection")
    if ds_sel is not None and list(ds_sel["selected"]) != list(ckpt.band_selection["selected"]):
        raise TrainingError(
            f"checkpoint bands {ckpt.band_selection['selected']} != dataset bands {ds_sel['selected']}"
        )


@torch.no_grad()
def predict_logits(ckpt: Checkpoint, ds: PairDataset, batch_size: int = 256, net=None) -> np.ndarray:
    """Logits (N, L, 16, 16) for every sample of ``ds``."""
    check_compatible(ckpt, ds.manifest)
    net = net or ckpt.model()
    X, Z, _ = _tensors(ds)
    out = [net(X[i:i + batch_size], Z[i:i + batch_size]) for i in range(0, X.shape[0], batch_size)]
    return torch.cat(out).numpy()


@torch.no_grad()
def predict(ckpt: Checkpoint, pair: SamplePair, manifest: Optional[dict] = None):
    """Logits (L, 16, 16) and the argmax label tile (ties -> lower class)."""
    if manifest is not None:
        check_compatible(ckpt, manifest)
    net = ckpt.model()
    x = torch.from_numpy(np.asarray(pair.X, dtype=np.float32))[None]
    z = torch.from_numpy(np.asarray(pair.Z, dtype=np.float32))[None]
    logits = net(x, z)[0].numpy()
    return logits, np.argmax(logits, axis=0).astype(np.uint8)
