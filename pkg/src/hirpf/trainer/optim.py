"""AdamW with per-row update masks.

Rows outside the mask keep their parameter values *and* their moment
estimates; bias correction uses a per-row step count so a row that sat out
some steps is corrected for the steps it actually took.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Tensor


@dataclass
class _Slot:
    m: np.ndarray
    v: np.ndarray
    t: np.ndarray  # step count per leading row (shape (rows,) or ())


@dataclass
class AdamW:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    state: dict[str, _Slot] = field(default_factory=dict)

    def _slot(self, name: str, p: Tensor, rowwise: bool) -> _Slot:
        s = self.state.get(name)
        if s is None:
            t = np.zeros(p.shape[0] if rowwise else (), dtype=np.int64)
            s = _Slot(np.zeros_like(p.data), np.zeros_like(p.data), t)
            self.state[name] = s
        return s

    def step(self, params: dict[str, Tensor], rows: dict[str, np.ndarray | None]) -> None:
        """Update ``params[name]`` for every name in ``rows`` (``None`` = all rows)."""
        for name, row_mask in rows.items():
            p = params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            s = self._slot(name, p, row_mask is not None)
            if row_mask is None:
                s.t += 1
                self._apply(p.data, g, s.m, s.v, int(s.t))
            else:
                for r in np.flatnonzero(row_mask):
                    s.t[r] += 1
                    self._apply(p.data[r], g[r], s.m[r], s.v[r], int(s.t[r]))

    def _apply(self, p, g, m, v, t):
        dt = p.dtype.type
        b1, b2 = dt(self.beta1), dt(self.beta2)
        m *= b1
        m += (dt(1) - b1) * g
        v *= b2
        v += (dt(1) - b2) * g * g
        mhat = m / dt(1.0 - self.beta1 ** t)
        vhat = v / dt(1.0 - self.beta2 ** t)
        p -= dt(self.lr) * (mhat / (np.sqrt(vhat) + dt(self.eps)) + dt(self.weight_decay) * p)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, s in self.state.items():
            out[f"{name}.m"] = s.m
            out[f"{name}.v"] = s.v
            out[f"{name}.t"] = s.t
        return out
