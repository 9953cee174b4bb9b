"""Uniform tensor-product grids and the grid-function calculus.

Conventions the inequality checks rely on:

* integrals are node sums weighted by per-axis cell overlaps, which puts
  trapezoidal weights at region faces and makes integration exact for
  affine data on node-aligned regions;
* level sets are counted node by node with the same cell weights, so
  measure additivity across {f > k}, {f < k}, {f = k} and monotonicity in
  the level are exact in cell-counting arithmetic;
* differences are centered in the interior and one-sided at faces, exact
  on affine data;
* essential sup/inf are node max/min (fields are piecewise multilinear in
  spirit, so node extrema are exact for the represented class).
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass

import numpy as np

from .exponents import ExponentVector, sobolev_exponent
from .reports import InequalityReport, grid_metadata

__all__ = [
    "Box",
    "Grid",
    "GridFunction",
    "CutoffProfile",
    "integrate",
    "region_measure",
    "partial_difference",
    "truncate",
    "level_set_measure",
    "oscillation",
    "cutoff",
    "lp_seminorm",
    "troisi_check",
    "set_reduction_mode",
    "save_field",
    "load_field",
    "export_csv",
]

# Relative snap used for box-membership comparisons.  Keeps node selection
# stable under per-axis dilations that multiply coordinates and bounds by
# the same factor with independent round-off.
_MEMBERSHIP_RTOL = 1e-9

_REDUCTION_MODE = "fixed"


def set_reduction_mode(mode: str) -> None:
    """'fixed' sums in array order; 'blocked' sums per-chunk partials.

    The blocked mode mimics a parallel reduction; results agree with the
    fixed mode to 1e-12 relative.
    """
    global _REDUCTION_MODE
    if mode not in ("fixed", "blocked"):
        raise ValueError(f"unknown reduction mode {mode!r}")
    _REDUCTION_MODE = mode


def _reduce_sum(arr: np.ndarray) -> float:
    flat = np.ravel(arr)
    if _REDUCTION_MODE == "blocked" and flat.size >= 16:
        return float(sum(float(np.sum(c)) for c in np.array_split(flat, 8)))
    return float(np.sum(flat))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by center and positive half-widths."""

    center: tuple[float, ...]
    half_widths: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        hw = tuple(float(v) for v in self.half_widths)
        if len(c) != len(hw) or len(c) == 0:
            raise ValueError("center and half_widths must have equal positive length")
        if any(not math.isfinite(v) for v in c + hw):
            raise ValueError("box data must be finite")
        if any(v <= 0.0 for v in hw):
            raise ValueError(f"half-widths must be positive, got {hw}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_widths", hw)

    @property
    def ndim(self) -> int:
        return len(self.center)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.half_widths)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.half_widths)

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * np.asarray(self.half_widths)))

    def contains(self, other: "Box") -> bool:
        tol = _MEMBERSHIP_RTOL * (1.0 + np.abs(self.lo) + np.abs(self.hi))
        return bool(
            np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol)
        )

    def shrunk(self, fraction: float) -> "Box":
        if not 0.0 < fraction < 1.0:
            raise ValueError(f"shrink fraction must lie in (0,1), got {fraction}")
        return Box(self.center, tuple(fraction * w for w in self.half_widths))

    @staticmethod
    def cube(center, radius: float) -> "Box":
        center = tuple(float(v) for v in center)
        return Box(center, (float(radius),) * len(center))

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_widths": list(self.half_widths)}

    @staticmethod
    def from_dict(d: dict) -> "Box":
        return Box(tuple(d["center"]), tuple(d["half_widths"]))


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice over a box; nodes include the box faces."""

    box: Box
    nodes_per_axis: tuple[int, ...]

    def __post_init__(self):
        n = tuple(int(v) for v in self.nodes_per_axis)
        if len(n) != self.box.ndim:
            raise ValueError("nodes_per_axis must match box dimension")
        if any(v < 2 for v in n):
            raise ValueError(f"need at least 2 nodes per axis, got {n}")
        object.__setattr__(self, "nodes_per_axis", n)

    @property
    def ndim(self) -> int:
        return self.box.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            2.0 * hw / (n - 1)
            for hw, n in zip(self.box.half_widths, self.nodes_per_axis)
        )

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        lo, hi = self.box.lo, self.box.hi
        return tuple(
            np.linspace(lo[j], hi[j], self.nodes_per_axis[j])
            for j in range(self.ndim)
        )

    def _region_interval(self, region: "Box | None", axis: int) -> tuple[float, float]:
        if region is None:
            return float(self.box.lo[axis]), float(self.box.hi[axis])
        return float(region.lo[axis]), float(region.hi[axis])

    def axis_inside(self, axis: int, region: "Box | None" = None) -> np.ndarray:
        """Boolean mask of nodes whose coordinate lies in the region."""
        lo, hi = self._region_interval(region, axis)
        x = self.axes[axis]
        tol = _MEMBERSHIP_RTOL * max(abs(lo), abs(hi), self.spacing[axis])
        return (x >= lo - tol) & (x <= hi + tol)

    def axis_weights(self, axis: int, region: "Box | None" = None) -> np.ndarray:
        """Cell-overlap weights: length of node cell clipped to the region.

        For node-aligned regions this is the trapezoidal rule (half cells
        at the faces); nodes outside the region get weight zero.
        """
        lo, hi = self._region_interval(region, axis)
        x = self.axes[axis]
        h = self.spacing[axis]
        cell_lo = np.maximum(x - 0.5 * h, self.box.lo[axis])
        cell_hi = np.minimum(x + 0.5 * h, self.box.hi[axis])
        w = np.minimum(cell_hi, hi) - np.maximum(cell_lo, lo)
        w = np.where(self.axis_inside(axis, region), np.maximum(w, 0.0), 0.0)
        return w

    def weight_tensor(self, region: "Box | None" = None) -> np.ndarray:
        ws = [self.axis_weights(j, region) for j in range(self.ndim)]
        return functools.reduce(np.multiply.outer, ws)

    def region_mask(self, region: "Box | None" = None) -> np.ndarray:
        ms = [self.axis_inside(j, region) for j in range(self.ndim)]
        return functools.reduce(np.logical_and.outer, ms)

    def cell_volumes(self) -> np.ndarray:
        """Per-node cell volume over the whole box (clipped at faces)."""
        return self.weight_tensor(None)

    def interior_mask(self) -> np.ndarray:
        full = np.ones(self.shape, dtype=bool)
        for j in range(self.ndim):
            sl = [slice(None)] * self.ndim
            sl[j] = slice(1, -1)
            keep = np.zeros(self.shape[j], dtype=bool)
            keep[1:-1] = True
            full &= keep.reshape([-1 if a == j else 1 for a in range(self.ndim)])
        return full

    def coordinate_arrays(self) -> tuple[np.ndarray, ...]:
        """Sparse broadcastable coordinate arrays."""
        return tuple(
            ax.reshape([-1 if a == j else 1 for a in range(self.ndim)])
            for j, ax in enumerate(self.axes)
        )

    def refined(self) -> "Grid":
        """One uniform refinement: every cell is split in two per axis."""
        return Grid(self.box, tuple(2 * (n - 1) + 1 for n in self.nodes_per_axis))


class GridFunction:
    """Nodal values over a grid; one finite value per node."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        self.grid = grid
        self.values = values

    @staticmethod
    def from_callable(grid: Grid, fn) -> "GridFunction":
        coords = grid.coordinate_arrays()
        values = np.broadcast_to(np.asarray(fn(*coords), dtype=float), grid.shape)
        return GridFunction(grid, values.copy())

    @staticmethod
    def constant(grid: Grid, value: float) -> "GridFunction":
        return GridFunction(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at points of shape (M, ndim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.grid.ndim:
            raise ValueError(f"points must have {self.grid.ndim} columns")
        lo = self.grid.box.lo
        h = np.asarray(self.grid.spacing)
        n = np.asarray(self.grid.shape)
        t = (pts - lo) / h
        base = np.clip(np.floor(t).astype(int), 0, n - 2)
        frac = np.clip(t - base, 0.0, 1.0)
        out = np.zeros(pts.shape[0])
        ndim = self.grid.ndim
        for corner in range(1 << ndim):
            idx = []
            w = np.ones(pts.shape[0])
            for j in range(ndim):
                bit = (corner >> j) & 1
                idx.append(base[:, j] + bit)
                w = w * (frac[:, j] if bit else 1.0 - frac[:, j])
            out += w * self.values[tuple(idx)]
        return out


def integrate(f: GridFunction, region: Box | None = None) -> float:
    """Cell-weighted node sum; exact for affine f on node-aligned regions."""
    if region is not None and not f.grid.box.contains(region):
        raise ValueError("integration region escapes the grid box")
    v = f.values
    if _REDUCTION_MODE == "blocked":
        return _reduce_sum(f.grid.weight_tensor(region) * v)
    for j in range(f.grid.ndim):
        # axis 0 shrinks away at each contraction
        v = np.tensordot(f.grid.axis_weights(j, region), v, axes=(0, 0))
    return float(v)


def region_measure(grid: Grid, region: Box | None = None) -> float:
    """Cell-counting volume of the region (sum of clipped node cells)."""
    if region is not None and not grid.box.contains(region):
        raise ValueError("region escapes the grid box")
    return _reduce_sum(grid.weight_tensor(region))


def partial_difference(f: GridFunction, axis: int) -> GridFunction:
    """Centered difference inside, one-sided at faces; exact on affine."""
    if not 0 <= axis < f.grid.ndim:
        raise ValueError(f"axis {axis} out of range for {f.grid.ndim}-d grid")
    n = f.grid.shape[axis]
    order = 2 if n >= 3 else 1
    d = np.gradient(f.values, f.grid.spacing[axis], axis=axis, edge_order=order)
    return GridFunction(f.grid, d)


def truncate(f: GridFunction, k: float, sign: str) -> GridFunction:
    """(f - k)_+ for sign 'plus', (k - f)_+ for sign 'minus'."""
    if sign == "plus":
        return GridFunction(f.grid, np.maximum(f.values - k, 0.0))
    if sign == "minus":
        return GridFunction(f.grid, np.maximum(k - f.values, 0.0))
    raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")


def level_set_measure(
    f: GridFunction, k: float, direction: str = "above", region: Box | None = None
) -> float:
    """Cell-counting measure of {f > k} / {f < k} inside the region."""
    if direction == "above":
        mask = f.values > k
    elif direction == "below":
        mask = f.values < k
    elif direction == "equal":
        mask = f.values == k
    else:
        raise ValueError(f"direction must be above/below/equal, got {direction!r}")
    if region is not None and not f.grid.box.contains(region):
        raise ValueError("region escapes the grid box")
    w = f.grid.weight_tensor(region)
    return _reduce_sum(np.where(mask, w, 0.0))


def oscillation(f: GridFunction, region: Box | None = None) -> tuple[float, float, float]:
    """Node sup, node inf, and their gap over the region: (mu+, mu-, omega)."""
    sel = f.values
    if region is not None:
        if not f.grid.box.contains(region):
            raise ValueError("region escapes the grid box")
        masks = [f.grid.axis_inside(j, region) for j in range(f.grid.ndim)]
        if any(not m.any() for m in masks):
            raise ValueError("region contains no grid nodes")
        sel = sel[np.ix_(*masks)]
    mu_plus = float(np.max(sel))
    mu_minus = float(np.min(sel))
    return mu_plus, mu_minus, mu_plus - mu_minus


@dataclass(frozen=True)
class CutoffProfile:
    """Tensor cutoff: per-axis linear ramps raised to the axis exponents.

    zeta = prod_j zeta_j^{p_j} with zeta_j == 1 on the inner box, 0 at the
    outer faces, linear in between; per-axis slope is exactly the
    reciprocal ramp width.
    """

    outer: Box
    inner: Box
    powers: ExponentVector

    def __post_init__(self):
        if self.outer.ndim != self.inner.ndim or self.outer.ndim != self.powers.N:
            raise ValueError("outer, inner, and powers must share the dimension")
        gap_lo = self.inner.lo - self.outer.lo
        gap_hi = self.outer.hi - self.inner.hi
        if np.any(gap_lo <= 0.0) or np.any(gap_hi <= 0.0):
            raise ValueError("inner box must sit strictly inside the outer box")

    def axis_profile(self, axis: int, x: np.ndarray) -> np.ndarray:
        olo, ohi = self.outer.lo[axis], self.outer.hi[axis]
        ilo, ihi = self.inner.lo[axis], self.inner.hi[axis]
        up = (np.asarray(x, dtype=float) - olo) / (ilo - olo)
        down = (ohi - np.asarray(x, dtype=float)) / (ohi - ihi)
        return np.clip(np.minimum(up, down), 0.0, 1.0)

    def slope_bound(self, axis: int) -> float:
        ramp_lo = self.inner.lo[axis] - self.outer.lo[axis]
        ramp_hi = self.outer.hi[axis] - self.inner.hi[axis]
        return 1.0 / min(ramp_lo, ramp_hi)

    def _power_field(self, grid: Grid, scale: float) -> GridFunction:
        out = np.ones(grid.shape)
        for j in range(grid.ndim):
            prof = self.axis_profile(j, grid.axes[j])
            term = prof ** (self.powers.p[j] * scale)
            out = out * term.reshape(
                [-1 if a == j else 1 for a in range(grid.ndim)]
            )
        return GridFunction(grid, out)

    def evaluate(self, grid: Grid) -> GridFunction:
        return self._power_field(grid, 1.0)

    def evaluate_root(self, grid: Grid, root_exponent: float) -> GridFunction:
        """zeta^{1/root_exponent}, computed per axis for accuracy."""
        if root_exponent <= 0.0:
            raise ValueError("root exponent must be positive")
        return self._power_field(grid, 1.0 / root_exponent)


def cutoff(grid: Grid, outer: Box, inner: Box, powers: ExponentVector) -> GridFunction:
    """Sample the tensor cutoff on the grid; zero outside the outer box."""
    if not grid.box.contains(outer):
        raise ValueError("outer box escapes the grid box")
    return CutoffProfile(outer, inner, powers).evaluate(grid)


def lp_seminorm(
    f: GridFunction, axis: int, exponent: float, region: Box | None = None
) -> float:
    """(integral over region of |d_axis f|^exponent)^(1/exponent)."""
    if exponent < 1.0:
        raise ValueError(f"seminorm exponent must be >= 1, got {exponent}")
    d = partial_difference(f, axis)
    val = integrate(GridFunction(f.grid, np.abs(d.values) ** exponent), region)
    return float(val ** (1.0 / exponent))


def troisi_check(f: GridFunction, p: ExponentVector, seed: int | None = None) -> InequalityReport:
    """Anisotropic embedding check: ||f||_{p*}^N against prod_i ||d_i f||_{p_i}.

    Requires zero boundary trace and pbar < N; the ratio lhs/rhs is the
    empirical embedding constant.
    """
    if p.N != f.grid.ndim:
        raise ValueError("exponent count must match grid dimension")
    pstar = sobolev_exponent(p)  # raises when pbar >= N
    boundary = ~f.grid.interior_mask()
    scale = max(f.sup_norm(), 1.0)
    if f.grid.ndim >= 1 and np.any(np.abs(f.values[boundary]) > 1e-12 * scale):
        raise ValueError("embedding check needs zero boundary trace")
    norm = integrate(GridFunction(f.grid, np.abs(f.values) ** pstar)) ** (1.0 / pstar)
    lhs = norm ** p.N
    rhs = 1.0
    for j in range(p.N):
        rhs *= lp_seminorm(f, j, p.p[j])
    meta = grid_metadata(f.grid)
    if rhs == 0.0:
        return InequalityReport(
            check_name="troisi",
            anchor="sobolev-troisi",
            lhs=lhs,
            rhs=rhs,
            empirical_gamma=None,
            state="degenerate",
            details={"pstar": pstar, "note": "zero gradient product"},
            seed=seed,
            grid_meta=meta,
        )
    return InequalityReport(
        check_name="troisi",
        anchor="sobolev-troisi",
        lhs=lhs,
        rhs=rhs,
        empirical_gamma=lhs / rhs,
        state="pass",
        details={"pstar": pstar},
        seed=seed,
        grid_meta=meta,
    )


# -- serialization ----------------------------------------------------------


def save_field(f: GridFunction, path) -> None:
    """Text field file: one JSON header line, then row-major node values."""
    header = {
        "dims": f.grid.ndim,
        "nodes_per_axis": list(f.grid.nodes_per_axis),
        "box": f.grid.box.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in f.values.ravel(order="C"):
            fh.write(repr(float(v)) + "\n")


def load_field(path) -> GridFunction:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        values = np.array([float(line) for line in fh if line.strip()])
    grid = Grid(Box.from_dict(header["box"]), tuple(header["nodes_per_axis"]))
    return GridFunction(grid, values.reshape(grid.shape, order="C"))


def export_csv(f: GridFunction, path, slice_indices: dict | None = None) -> None:
    """CSV of a 1-d or 2-d slice: coordinates then the value column.

    slice_indices maps axis -> node index for the axes being held fixed;
    at most two axes may remain free.
    """
    import csv

    slice_indices = dict(slice_indices or {})
    free = [j for j in range(f.grid.ndim) if j not in slice_indices]
    if len(free) not in (1, 2):
        raise ValueError("csv export needs exactly 1 or 2 free axes")
    sel: list = [slice(None)] * f.grid.ndim
    for j, idx in slice_indices.items():
        sel[j] = int(idx)
    vals = f.values[tuple(sel)]
    axes = [f.grid.axes[j] for j in free]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in free] + ["value"])
        if len(free) == 1:
            for x, v in zip(axes[0], vals):
                writer.writerow([repr(float(x)), repr(float(v))])
        else:
            for i, xi in enumerate(axes[0]):
                for j, xj in enumerate(axes[1]):
                    writer.writerow(
                        [repr(float(xi)), repr(float(xj)), repr(float(vals[i, j]))]
                    )
