"""Label-map rasters and sweep line charts."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from PIL import Image

NAMED_COLORS = {
    "Road": (128, 0, 128),
    "Dirt": (139, 69, 19),
    "Water": (0, 0, 255),
    "Tree": (0, 128, 0),
    "Asphalt": (64, 64, 64),
    "Grass": (124, 252, 0),
    "Roof": (220, 20, 60),
    "Metal": (192, 192, 192),
}
_SPARE = [(255, 165, 0), (0, 206, 209), (255, 215, 0), (255, 105, 180), (70, 130, 180),
          (154, 205, 50), (210, 105, 30), (106, 90, 205)]


class RenderError(ValueError):
    pass


def default_palette(class_names: Sequence[str]) -> dict:
    """Class index -> RGB; named classes get their usual colors, the rest distinct spares."""
    used = {NAMED_COLORS[n] for n in class_names if n in NAMED_COLORS}
    spares = iter(c for c in _SPARE if c not in used)
    palette = {}
    for i, name in enumerate(class_names):
        if name in NAMED_COLORS:
            palette[i] = NAMED_COLORS[name]
        else:
            try:
                palette[i] = next(spares)
            except StopIteration:
                raise RenderError(f"no spare color left for class {name!r}") from None
    if len(set(palette.values())) != len(palette):
        raise RenderError("palette colors are not distinct")
    return palette


def colorize(labels: np.ndarray, palette: Mapping[int, tuple]) -> np.ndarray:
    labels = np.asarray(labels)
    missing = sorted(set(np.unique(labels).tolist()) - set(palette))
    if missing:
        raise RenderError(f"no palette entry for labels {missing}")
    lut = np.zeros((max(palette) + 1, 3), np.uint8)
    for k, rgb in palette.items():
        lut[k] = rgb
    return lut[labels]


def render_map(labels: np.ndarray, palette: Mapping[int, tuple], path,
               zoom: Optional[tuple] = None, scale: int = 1) -> Path:
    """Write a PNG where each pixel takes its class color.

    ``zoom`` is an ``(x0, y0, x1, y1)`` crop applied before coloring;
    ``scale`` enlarges pixels by nearest-neighbour replication.
    """
    labels = np.asarray(labels)
    if zoom is not None:
        x0, y0, x1, y1 = zoom
        if not (0 <= x0 < x1 <= labels.shape[1] and 0 <= y0 < y1 <= labels.shape[0]):
            raise RenderError(f"zoom box {zoom} outside a {labels.shape} map")
        labels = labels[y0:y1, x0:x1]
    rgb = colorize(labels, palette)
    if scale > 1:
        rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    path = Path(path)
    Image.fromarray(rgb).save(path, format="PNG")
    return path


def plot_sweep(rows: list, class_names, out_dir) -> list:
    """One SVG per metric: gDice and mean IOU against gamma, one line per (model, A)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "hsifuse"  # stable element ids across runs
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = {
        "gdice": ("gDice", lambda r: r.gdice),
        "miou": ("mIOU", lambda r: float(np.nanmean(r.iou))),
    }
    written = []
    for key, (label, value) in metrics.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        series = {}
        for r in rows:
            series.setdefault((r.model, r.A, r.contrast), []).append((r.gamma, value(r)))
        for (model, A, contrast), pts in sorted(series.items()):
            pts.sort()
            name = f"{model} A={A:g}" + (" +contrast" if contrast else "")
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
        ax.set_xlabel("darkness (gamma)")
        ax.set_ylabel(label)
        ax.set_ylim(0, 1)
        ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        path = out_dir / f"sweep_{key}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
