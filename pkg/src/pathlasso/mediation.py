"""Cell-by-cell check of the latent mediation argument on a discrete joint.

Given P(x, m, y), the premises are

1. P(y | x) = P(y | x, m)
2. P(m, y | x) = P(m | x) P(y | x)

and the derivation runs

4. P(m, y, x) = P(m, y | x) P(x)
5. P(x) P(m | x) = P(m, y, x) / P(y | x)
6. P(x) P(m | x) = P(y, x, m) / P(y | x, m) = P(x, m)

Each step is evaluated numerically on every cell where its quantities are
defined; undefined cells are skipped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


@dataclass
class DiscreteJoint:
    """Probability tensor indexed ``[x, m, y]``."""

    table: np.ndarray
    x_support: tuple = ()
    m_support: tuple = ()
    y_support: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 3:
            raise ValueError("joint must be a 3-d tensor indexed [x, m, y]")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(t.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {t.sum()!r}, not 1")
        self.table = t
        self.x_support = tuple(self.x_support) or tuple(range(t.shape[0]))
        self.m_support = tuple(self.m_support) or tuple(range(t.shape[1]))
        self.y_support = tuple(self.y_support) or tuple(range(t.shape[2]))
        if (len(self.x_support), len(self.m_support), len(self.y_support)) != t.shape:
            raise ValueError("supports do not match the tensor shape")

    @classmethod
    def from_factors(cls, px: Sequence[float], pm_x: np.ndarray, py_xm: np.ndarray) -> "DiscreteJoint":
        """Build P(x) P(m|x) P(y|x,m); ``pm_x[x, m]`` and ``py_xm[x, m, y]``."""
        t = np.asarray(px)[:, None, None] * np.asarray(pm_x)[:, :, None] * np.asarray(py_xm)
        return cls(t / t.sum())


@dataclass
class MediationVerdict:
    premise_1: bool
    premise_2: bool
    premise_1_error: float
    premise_2_error: float
    step_errors: dict[str, float]
    conclusion_verified: bool
    violating_cell: tuple[int, int, int] | None
    skipped_cells: int
    tolerance: float
    details: dict[str, Any] = field(default_factory=dict)


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.full(np.broadcast(a, b).shape, np.nan)
    np.divide(a, b, out=out, where=np.broadcast_to(b > 0, out.shape))
    return out


def _max_err(a: np.ndarray, b: np.ndarray) -> tuple[float, tuple[int, int, int] | None, np.ndarray]:
    err = np.abs(a - b)
    ok = np.isfinite(err)
    if not ok.any():
        return 0.0, None, ok
    masked = np.where(ok, err, -1.0)
    cell = np.unravel_index(int(np.argmax(masked)), err.shape)
    return float(masked[cell]), tuple(int(i) for i in cell), ok


def mediation_identity_check(joint: DiscreteJoint, tolerance: float = 1e-10) -> MediationVerdict:
    P = joint.table
    px = P.sum(axis=(1, 2))[:, None, None]
    pxm = P.sum(axis=2, keepdims=True)
    pxy = P.sum(axis=1, keepdims=True)
    shape = P.shape

    py_x = _safe_div(pxy, px) * np.ones(shape)
    pm_x = _safe_div(pxm, px) * np.ones(shape)
    py_xm = _safe_div(P, pxm)
    pmy_x = _safe_div(P, px * np.ones(shape))

    e1, cell1, ok1 = _max_err(py_x, py_xm)
    e2, cell2, ok2 = _max_err(pmy_x, pm_x * py_x)

    lhs = px * pm_x
    e4, _, ok4 = _max_err(P, pmy_x * px)
    e5, _, ok5 = _max_err(lhs, _safe_div(P, py_x))
    via = _safe_div(P, py_xm)
    e6a, _, ok6a = _max_err(lhs, via)
    e6b, _, ok6b = _max_err(via, pxm * np.ones(shape))
    e6c, _, ok6c = _max_err(pxm * np.ones(shape), lhs)

    defined = ok1 & ok2 & ok4 & ok5 & ok6a & ok6b & ok6c
    p1, p2 = e1 <= tolerance, e2 <= tolerance
    steps = {"4": e4, "5": e5, "6": max(e6a, e6b, e6c)}
    conclusion = p1 and p2 and all(v <= tolerance for v in steps.values())
    violating = None
    if not p1:
        violating = cell1
    elif not p2:
        violating = cell2
    return MediationVerdict(
        premise_1=p1,
        premise_2=p2,
        premise_1_error=e1,
        premise_2_error=e2,
        step_errors=steps,
        conclusion_verified=conclusion,
        violating_cell=violating,
        skipped_cells=int((~defined).sum()),
        tolerance=tolerance,
        details={"step_6_substitution": e6a, "step_6_definition": e6b, "step_6_conclusion": e6c},
    )
