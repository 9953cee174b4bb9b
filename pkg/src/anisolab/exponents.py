"""Exponent bookkeeping for anisotropic elliptic problems.

An admissible exponent family carries a handful of aggregates (harmonic
mean, extremes, anisotropic Sobolev exponent) that every other module keys
off, plus the weighted anisotropic distance used to state moduli of
continuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExponentVector",
    "IntrinsicMetricContext",
    "aggregates",
    "sobolev_exponent",
    "boundedness_condition",
    "smallness_condition",
    "p_distance",
]


@dataclass(frozen=True)
class ExponentVector:
    """Per-axis growth exponents, each strictly above 1."""

    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if len(p) == 0:
            raise ValueError("at least one exponent is required")
        if any(not math.isfinite(v) for v in p):
            raise ValueError("exponents must be finite")
        if any(v <= 1.0 for v in p):
            raise ValueError(f"every exponent must exceed 1, got {p}")
        object.__setattr__(self, "p", p)

    @property
    def N(self) -> int:
        return len(self.p)

    @property
    def pbar(self) -> float:
        # harmonic mean: 1/pbar is the average of the 1/p_i
        return len(self.p) / sum(1.0 / v for v in self.p)

    @property
    def pmin(self) -> float:
        return min(self.p)

    @property
    def pmax(self) -> float:
        return max(self.p)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    def summary(self) -> dict:
        """Aggregate block embedded in report files."""
        out = {"pbar": self.pbar, "pmin": self.pmin, "pmax": self.pmax}
        out["pstar"] = sobolev_exponent(self) if self.pbar < self.N else None
        return out


def aggregates(p: ExponentVector) -> tuple[float, float, float]:
    """Return (pbar, pmin, pmax)."""
    return (p.pbar, p.pmin, p.pmax)


def sobolev_exponent(p: ExponentVector) -> float:
    """Anisotropic Sobolev exponent N*pbar/(N - pbar); needs pbar < N."""
    pbar = p.pbar
    if pbar >= p.N:
        raise ValueError(
            f"Sobolev exponent requires pbar < N; got pbar={pbar:.6g}, N={p.N}"
        )
    return p.N * pbar / (p.N - pbar)


def boundedness_condition(p: ExponentVector) -> bool:
    """True iff pbar < N and pmax does not exceed the Sobolev exponent."""
    if p.pbar >= p.N:
        return False
    return p.pmax <= sobolev_exponent(p)


def smallness_condition(p: ExponentVector, q: float) -> bool:
    """True iff the exponent spread pmax - pmin is at most 1/q (q > 1)."""
    if q <= 1.0:
        raise ValueError(f"spread threshold q must exceed 1, got {q}")
    return (p.pmax - p.pmin) <= 1.0 / q


@dataclass(frozen=True)
class IntrinsicMetricContext:
    """Sup-norm weight and exponents entering the anisotropic distance."""

    sup_norm: float
    exponents: ExponentVector

    def __post_init__(self):
        s = float(self.sup_norm)
        if not math.isfinite(s) or s < 0.0:
            raise ValueError(f"sup_norm must be finite and >= 0, got {s}")
        object.__setattr__(self, "sup_norm", s)

    def weights(self) -> np.ndarray:
        """Per-axis weights sup^((pmax - p_j)/pmax); exponent 0 gives 1."""
        parr = self.exponents.as_array()
        exps = (self.exponents.pmax - parr) / self.exponents.pmax
        # 0**0 == 1 covers the sup_norm == 0, p_j == pmax corner
        return self.sup_norm ** exps


def p_distance(x, y, ctx: IntrinsicMetricContext) -> float:
    """Weighted anisotropic distance sum_j w_j |x_j - y_j|^(p_j/pmax)."""
    dx = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    parr = ctx.exponents.as_array()
    if dx.shape != parr.shape:
        raise ValueError(f"points must have {parr.size} coordinates")
    return float(np.sum(ctx.weights() * dx ** (parr / ctx.exponents.pmax)))
