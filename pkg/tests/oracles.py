"""Slow, literal reference implementations used as test oracles."""
import numpy as np


def brute_iou(pred, truth, L):
    """Pixel-set intersection over union per class."""
    out = []
    for c in range(L):
        P = {i for i, v in enumerate(pred.ravel()) if v == c}
        T = {i for i, v in enumerate(truth.ravel()) if v == c}
        union = P | T
        out.append(len(P & T) / len(union) if union else float("nan"))
    return np.array(out)


def brute_gdice(prob, truth, L):
    """Double loop over classes and pixels."""
    t = truth.ravel()
    p = np.moveaxis(prob, -3, -1).reshape(-1, L)
    num = den = 0.0
    for c in range(L):
        vol = sum(1 for v in t if v == c)
        if vol == 0:
            continue
        w = 1.0 / vol ** 2
        num += w * sum(p[n, c] for n in range(t.size) if t[n] == c)
        den += w * sum((1.0 if t[n] == c else 0.0) + p[n, c] for n in range(t.size))
    return 2 * num / den
