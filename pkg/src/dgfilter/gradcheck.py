"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .autograd import Tensor


class NonDeterministicError(RuntimeError):
    """The checked function returned different values for identical inputs."""


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)  # name -> relative error
    tol: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def __str__(self):
        worst = max(self.errors, key=self.errors.get) if self.errors else "-"
        status = "PASS" if self.passed else "FAIL"
        return f"grad_check {status}: max rel err {self.max_error:.3e} (worst {worst}, tol {self.tol:g})"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` over the sampled entries.

    The floor keeps structurally zero gradients (e.g. a bias feeding a
    normalization) from turning rounding noise into a unit relative error.
    """
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5, tol: float = 1e-4,
               max_entries: Optional[int] = None, seed: int = 0,
               names: Optional[Sequence[str]] = None, floor: float = 1e-7,
               numeric_dtype=None) -> GradCheckReport:
    """Compare backprop gradients of the scalar ``f()`` against central differences.

    Args:
        f: zero-argument closure building the loss from the current values of
            ``params`` (dropout must be seeded or disabled).
        params: tensors with ``requires_grad`` whose data is perturbed in place.
        h: finite-difference step.
        tol: pass threshold on each parameter's relative error.
        max_entries: if set, check only this many randomly chosen entries per
            parameter (large layers).
        seed: selects the sampled entries.
        floor: lower bound on the error denominator, as a fraction of the
            largest analytic gradient entry over all ``params``. Gradients
            that are structurally zero are then judged against the rounding
            level of the whole problem (see :func:`relative_error`).
        numeric_dtype: if set, parameters are widened to this dtype for the
            finite differences only. Lets a float32 backward pass be checked
            against differences that float32 rounding would swamp.

    Raises:
        NonDeterministicError: if two evaluations at the same point disagree.
    """
    base = f()
    again = f()
    if not np.array_equal(base.data, again.data):
        raise NonDeterministicError("f() is not deterministic; seed or disable dropout")

    for p in params:
        p.grad = np.zeros_like(p.data)
    base.backward()

    analytic_all = [p.grad.astype(np.float64) for p in params]
    abs_floor = floor * max((float(np.abs(g).max()) for g in analytic_all if g.size), default=1.0)
    if numeric_dtype is not None:
        saved = [p.data for p in params]
        for p in params:
            p.data = np.array(p.data, dtype=numeric_dtype)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)
    for i, p in enumerate(params):
        name = names[i] if names else getattr(p, "name", f"param{i}")
        if not p.data.flags.c_contiguous:  # reshape(-1) must be a view
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        else:
            idx = np.arange(flat.size)
        analytic = analytic_all[i].reshape(-1)[idx]
        numeric = np.empty(len(idx))
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + h
            fp = float(f().data)
            flat[k] = orig - h
            fm = float(f().data)
            flat[k] = orig
            numeric[j] = (fp - fm) / (2.0 * h)
        report.errors[name] = relative_error(analytic, numeric, abs_floor)
    if numeric_dtype is not None:
        for p, d in zip(params, saved):
            p.data = d
    return report
