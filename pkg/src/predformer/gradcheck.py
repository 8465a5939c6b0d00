"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, Tensor


class NondeterministicFunctionError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<24} max_rel_err={self.max_rel_error:.3e}  tol={self.tol:.0e}  n={self.n_checked}"


def _scalar(f, xs) -> float:
    return float(np.asarray(f(*xs).data, dtype=np.float64).reshape(()))


def relative_error(analytic: np.ndarray, numeric: np.ndarray, scale: float | None = None) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``.

    ``floor`` is 1e-4 of ``scale`` (default: the largest numeric magnitude),
    so entries that are zero up to finite-difference noise do not dominate.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    if scale is None:
        scale = float(np.max(np.abs(n)))
    floor = max(1e-4 * scale, 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def grad_check(
    f: Callable[..., Tensor],
    x: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    name: str = "f",
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(*xs)`` against central differences.

    ``x`` may be a single tensor or a list; every tensor is perturbed
    in place, one entry at a time. ``max_entries`` subsamples entries per
    tensor for large inputs.
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    for t in xs:
        t.requires_grad = True
        t.data = np.ascontiguousarray(t.data)

    f0 = _scalar(f, xs)
    if _scalar(f, xs) != f0:
        raise NondeterministicFunctionError(f"{name}: two evaluations at the same point differ")

    with GradTape() as tape:
        out = f(*xs)
    analytic = tape.backward(out, xs)

    pairs = []
    for t, ga in zip(xs, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = _scalar(f, xs)
            flat[i] = orig - h
            fm = _scalar(f, xs)
            flat[i] = orig
            numeric[k] = (fp - fm) / (2 * h)
        pairs.append((ga.reshape(-1)[idx], numeric))

    # one floor for all inputs: a tensor whose true gradient is identically
    # zero (e.g. attention key bias) must not be judged on its own noise
    scale = max(float(np.max(np.abs(n))) for _, n in pairs)
    worst = max(relative_error(a, n, scale) for a, n in pairs)
    total = sum(n.size for _, n in pairs)
    return GradCheckReport(name, worst, tol, total)
