"""Central finite-difference checks of autograd gradients (float64)."""
from __future__ import annotations

from typing import Callable, Sequence

import torch
import torch.nn.functional as F
from torch.overrides import TorchFunctionMode


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    """``|a - b| / max(|a|, |b|)`` in the Euclidean norm; 0 when both vanish."""
    a = a.reshape(-1).double()
    b = b.reshape(-1).double()
    scale = max(float(a.norm()), float(b.norm()))
    return 0.0 if scale == 0 else float((a - b).norm()) / scale


def autograd_grads(f: Callable[[], torch.Tensor], tensors: Sequence[torch.Tensor]) -> list:
    out = f()
    return list(torch.autograd.grad(out, list(tensors)))


@torch.no_grad()
def directional_derivative(f: Callable[[], torch.Tensor], tensors: Sequence[torch.Tensor],
                           directions: Sequence[torch.Tensor], step: float = 1e-5) -> float:
    """Central difference of ``f`` along ``directions`` (one per tensor)."""
    for t, d in zip(tensors, directions):
        t.add_(step * d)
    up = f().item()
    for t, d in zip(tensors, directions):
        t.sub_(2 * step * d)
    down = f().item()
    for t, d in zip(tensors, directions):
        t.add_(step * d)
    return (up - down) / (2 * step)


class _KinkPattern(TorchFunctionMode):
    """Records ReLU sign patterns and max-pool argmax indices of one forward pass."""

    def __init__(self):
        super().__init__()
        self.pattern = []

    def __torch_function__(self, func, types, args=(), kwargs=None):
        kwargs = kwargs or {}
        name = getattr(func, "__name__", "")
        if name == "relu":
            self.pattern.append(args[0].detach() > 0)
        elif name == "max_pool2d":
            opts = {k: v for k, v in kwargs.items() if k != "return_indices"}
            self.pattern.append(F.max_pool2d(*args, **opts, return_indices=True)[1])
        return func(*args, **kwargs)


@torch.no_grad()
def kink_pattern(f) -> list:
    with _KinkPattern() as rec:
        f()
    return rec.pattern


class KinkCrossing(ArithmeticError):
    """A finite-difference stencil straddles a ReLU or max-pool kink."""


@torch.no_grad()
def numeric_grads(f: Callable[[], torch.Tensor], tensors: Sequence[torch.Tensor],
                  step: float = 1e-5, guard_kinks: bool = False) -> list:
    """Coordinate-wise central differences of the scalar ``f()``.

    With ``guard_kinks`` every stencil is checked for a change in ReLU signs
    or max-pool winners, raising :class:`KinkCrossing` if one is found.
    """
    base = kink_pattern(f) if guard_kinks else None
    grads = []
    for t in tensors:
        g = torch.zeros_like(t)
        flat, gflat = t.view(-1), g.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            try:
                flat[i] = orig + step
                up = _eval(f, base)
                flat[i] = orig - step
                down = _eval(f, base)
            finally:
                flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def _eval(f, base) -> float:
    if base is None:
        return f().item()
    with _KinkPattern() as rec:
        value = f().item()
    if not _same_pattern(base, rec.pattern):
        raise KinkCrossing("stencil crosses a non-differentiable point")
    return value


def _same_pattern(a, b) -> bool:
    return len(a) == len(b) and all(torch.equal(x, y) for x, y in zip(a, b))


def check_full(f, tensors, step: float = 1e-5, guard_kinks: bool = True) -> float:
    """Relative error between autograd and coordinate-wise finite differences.

    Raises :class:`KinkCrossing` when the instance sits within ``step`` of a
    kink (with ``guard_kinks``); callers draw a fresh instance.
    """
    analytic = torch.cat([g.reshape(-1) for g in autograd_grads(f, tensors)])
    numeric = torch.cat([g.reshape(-1) for g in numeric_grads(f, tensors, step, guard_kinks)])
    return relative_error(analytic, numeric)


def check_instances(make_case: Callable[[int], tuple], n: int = 20, step: float = 1e-5,
                    max_draws: int = 200) -> tuple:
    """Worst error over ``n`` kink-free instances from ``make_case(seed) -> (f, tensors)``.

    Returns ``(worst, skipped)`` where ``skipped`` counts redrawn instances.
    """
    worst, used, skipped = 0.0, 0, 0
    for seed in range(max_draws):
        if used == n:
            break
        f, tensors = make_case(seed)
        try:
            err = check_full(f, tensors, step)
        except KinkCrossing:
            skipped += 1
            continue
        worst = max(worst, err)
        used += 1
    if used < n:
        raise RuntimeError(f"only {used} of {n} instances were kink-free")
    return worst, skipped


@torch.no_grad()
def crosses_kink(f, tensors, directions, step: float) -> bool:
    """True when the +-step stencil changes any ReLU sign or max-pool winner."""
    base = kink_pattern(f)
    for sign in (1.0, -1.0):
        for t, d in zip(tensors, directions):
            t.add_(sign * step * d)
        moved = kink_pattern(f)
        for t, d in zip(tensors, directions):
            t.sub_(sign * step * d)
        if not _same_pattern(base, moved):
            return True
    return False


def check_directional(f, tensors, n_directions: int = 4, step: float = 1e-5,
                      generator: torch.Generator | None = None, max_draws: int = 50) -> float:
    """Worst relative error of autograd vs finite differences along random unit directions.

    Directions whose stencil straddles a ReLU or max-pool kink are redrawn:
    the derivative is not defined there, so a mismatch would say nothing
    about the backward pass.
    """
    grads = autograd_grads(f, tensors)
    worst, used = 0.0, 0
    for _ in range(max_draws):
        if used == n_directions:
            break
        dirs = [torch.randn(t.shape, generator=generator, dtype=t.dtype) for t in tensors]
        norm = torch.sqrt(sum((d * d).sum() for d in dirs))
        dirs = [d / norm for d in dirs]
        if crosses_kink(f, tensors, dirs, step):
            continue
        analytic = float(sum((g * d).sum() for g, d in zip(grads, dirs)))
        numeric = directional_derivative(f, tensors, dirs, step)
        worst = max(worst, relative_error(torch.tensor([analytic]), torch.tensor([numeric])))
        used += 1
    if used < n_directions:
        raise RuntimeError(f"only {used} of {n_directions} directions avoided kinks")
    return worst
