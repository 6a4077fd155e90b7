"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


class GradCheckError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str | None
    worst_index: tuple[int, ...] | None
    per_param: dict[str, float] = field(default_factory=dict)
    n_elements: int = 0


def _rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare backprop gradients to central differences, element by element.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call. The relative error of an element is ``|a - n| / max(|a|, |n|,
    floor)``; ``floor`` keeps elements whose true gradient is ~0 from turning
    round-off into a huge ratio. Parameters should be float64.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise GradCheckError(f"grad_check needs float64 parameters, {p.name or p} is {p.data.dtype}")
        p.grad = None
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise GradCheckError(f"non-finite loss {loss.data!r}; check aborted")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    report = GradCheckReport(0.0, None, None)
    with no_grad():
        for i, (p, a) in enumerate(zip(params, analytic)):
            name = p.name or f"param{i}"
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                fp = float(loss_fn().data)
                flat[k] = orig - eps
                fm = float(loss_fn().data)
                flat[k] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise GradCheckError(f"non-finite loss while perturbing {name}[{k}]")
                nflat[k] = (fp - fm) / (2 * eps)
            err = _rel_err(a, numeric, floor)
            worst = float(err.max()) if err.size else 0.0
            report.per_param[name] = worst
            report.n_elements += flat.size
            if worst > report.max_rel_error or report.worst_param is None:
                report.max_rel_error = worst
                report.worst_param = name
                report.worst_index = tuple(int(j) for j in np.unravel_index(int(err.argmax()), err.shape))
    for p in params:
        p.grad = None
    return report
