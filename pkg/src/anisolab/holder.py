"""Oscillation decay over nested intrinsic cylinders and the empirical
Holder modulus extracted from it.

The decay experiment is the canonical descent: measure the oscillation
on the current intrinsic cylinder, rebuild the cylinder from that
oscillation, halve the radius scale, repeat until the cylinder
under-resolves on the grid.  The trace also keeps the seed row (the
reference cube on which the field is normalized to unit oscillation) so
short traces on coarse grids still carry three fit points; every row
uses the same (region scale, oscillation on region) semantics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .degiorgi import Normalization
from .exponents import ExponentVector, IntrinsicMetricContext, p_distance
from .lattice import Box, GridFunction, oscillation
from .reports import InequalityReport, grid_metadata

__all__ = [
    "IntrinsicCylinder",
    "DecayRow",
    "DecayTrace",
    "HolderFit",
    "intrinsic_cylinder",
    "oscillation_decay",
    "holder_fit",
    "modulus_check",
    "boundary_p_distance",
]


@dataclass(frozen=True)
class IntrinsicCylinder:
    """Box with half-widths (omega/2^q) rho^{alpha/p_j}; degenerate when
    the oscillation vanishes."""

    center: tuple[float, ...]
    omega: float
    q: int
    rho: float
    exponents: ExponentVector
    alpha: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.omega) or self.omega < 0.0:
            raise ValueError(f"oscillation must be a finite nonnegative real, got {self.omega}")
        if int(self.q) != self.q or self.q < 0:
            raise ValueError(f"dyadic depth q must be a nonnegative integer, got {self.q}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"radius scale must lie in (0,1], got {self.rho}")
        alpha = self.exponents.pmax if self.alpha is None else float(self.alpha)
        if alpha < self.exponents.pmax:
            raise ValueError(
                f"alpha must be at least pmax={self.exponents.pmax}, got {alpha}"
            )
        if len(self.center) != self.exponents.N:
            raise ValueError("center must match the exponent dimension")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "alpha", alpha)

    @property
    def degenerate(self) -> bool:
        return self.omega == 0.0

    def radii(self) -> tuple[float, ...]:
        pref = self.omega / 2.0 ** self.q
        return tuple(pref * self.rho ** (self.alpha / pj) for pj in self.exponents.p)

    def box(self) -> Box:
        if self.degenerate:
            raise ValueError("degenerate cylinder has no realized box")
        return Box(self.center, self.radii())

    def distance_scale(self, ctx: IntrinsicMetricContext) -> float:
        """Intrinsic p-distance from the center to the cylinder corner."""
        corner = tuple(c + r for c, r in zip(self.center, self.radii()))
        return p_distance(self.center, corner, ctx)


def intrinsic_cylinder(
    omega: float,
    q: int,
    alpha: float | None,
    rho: float,
    p: ExponentVector,
    center,
) -> IntrinsicCylinder:
    return IntrinsicCylinder(
        center=tuple(center), omega=omega, q=q, rho=rho, exponents=p, alpha=alpha
    )


@dataclass(frozen=True)
class DecayRow:
    index: int
    rho_scale: float
    distance_scale: float
    oscillation: float
    min_nodes: int


@dataclass
class DecayTrace:
    """Rows of (region scale, measured oscillation) over nested regions,
    plus the normalizers needed to turn the trace into a modulus."""

    rows: list[DecayRow]
    sup_scale: float
    boundary_distance: float
    under_resolved: bool
    degenerate: bool
    normalization: Normalization
    field: GridFunction | None = None
    grid_meta: dict | None = None

    def __post_init__(self):
        if not self.rows:
            raise ValueError("trace must contain at least the seed row")
        scales = [r.distance_scale for r in self.rows]
        if any(b >= a for a, b in zip(scales, scales[1:])):
            raise ValueError("trace region scales must be strictly decreasing")

    @staticmethod
    def synthetic(
        distance_scales,
        oscillations,
        sup_scale: float = 1.0,
        boundary_distance: float = 1.0,
    ) -> "DecayTrace":
        rows = [
            DecayRow(index=i, rho_scale=d, distance_scale=float(d),
                     oscillation=float(w), min_nodes=0)
            for i, (d, w) in enumerate(zip(distance_scales, oscillations))
        ]
        return DecayTrace(
            rows=rows,
            sup_scale=sup_scale,
            boundary_distance=boundary_distance,
            under_resolved=False,
            degenerate=all(r.oscillation == 0.0 for r in rows),
            normalization=Normalization(),
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "rho_m", "omega_m"])
            for r in self.rows:
                writer.writerow([r.index, repr(r.rho_scale), repr(r.oscillation)])

    def report(self, fit: "HolderFit | None" = None, seed: int | None = None) -> InequalityReport:
        oscs = [r.oscillation for r in self.rows]
        details = {
            "rows": [
                {
                    "m": r.index,
                    "rho": r.rho_scale,
                    "distance": r.distance_scale,
                    "oscillation": r.oscillation,
                    "min_nodes": r.min_nodes,
                }
                for r in self.rows
            ],
            "under_resolved": self.under_resolved,
            "boundary_distance": self.boundary_distance,
            "sup_scale": self.sup_scale,
            "normalization": self.normalization.to_dict(),
        }
        if fit is not None:
            details["fit"] = {
                "alpha": fit.alpha,
                "gamma": fit.gamma,
                "residual": fit.residual,
            }
        if self.degenerate:
            state = "degenerate"
        elif all(b <= a for a, b in zip(oscs, oscs[1:])):
            state = "pass"
        else:
            state = "fail"
        return InequalityReport(
            check_name="oscillation_decay",
            anchor="decay-trace",
            lhs=oscs[-1],
            rhs=oscs[0],
            empirical_gamma=fit.alpha if fit is not None else None,
            state=state,
            details=details,
            seed=seed,
            grid_meta=self.grid_meta,
        )


def _axis_node_counts(u: GridFunction, region: Box) -> list[int]:
    return [
        int(np.count_nonzero(u.grid.axis_inside(j, region)))
        for j in range(u.grid.ndim)
    ]


def boundary_p_distance(region: Box, domain: Box, ctx: IntrinsicMetricContext) -> float:
    """Intrinsic p-distance from a sub-box to the domain boundary.

    The per-axis terms are independent and nonnegative, so the minimum
    over straight axis-aligned paths to the nearest face is exact.
    """
    w = ctx.weights()
    p = ctx.exponents.p
    pmax = ctx.exponents.pmax
    best = math.inf
    for j in range(region.ndim):
        for gap in (
            float(region.lo[j] - domain.lo[j]),
            float(domain.hi[j] - region.hi[j]),
        ):
            best = min(best, w[j] * max(gap, 0.0) ** (p[j] / pmax))
    return best


def oscillation_decay(
    u: GridFunction,
    p: ExponentVector,
    center,
    rho0: float,
    q: int = 1,
    alpha: float | None = None,
    m_max: int = 16,
) -> DecayTrace:
    """Nested-cylinder oscillation trace around an interior center.

    The field is first rescaled affinely to unit oscillation on the
    reference cube of radius 2 rho0 (the transform is recorded); that
    cube is the seed row.  Each subsequent row measures the oscillation
    on the intrinsic cylinder built from the previous oscillation, then
    halves rho.  Stops, flagged, when a cylinder covers fewer than 4
    nodes on some axis.
    """
    center = tuple(float(v) for v in center)
    if not 0.0 < rho0 <= 0.5:
        raise ValueError(f"seed radius scale must lie in (0, 0.5], got {rho0}")
    if m_max < 1:
        raise ValueError(f"need at least one decay step, got m_max={m_max}")
    ref = Box.cube(center, 2.0 * rho0)
    if not u.grid.box.contains(ref):
        raise ValueError("initial region escapes the grid box (needs 2x margin)")
    mu_plus, mu_minus, omega_ref = oscillation(u, ref)
    meta = grid_metadata(u.grid)
    if omega_ref == 0.0:
        seed = DecayRow(
            index=0,
            rho_scale=2.0 * rho0,
            distance_scale=2.0 * rho0,
            oscillation=0.0,
            min_nodes=min(_axis_node_counts(u, ref)),
        )
        return DecayTrace(
            rows=[seed],
            sup_scale=0.0,
            boundary_distance=0.0,
            under_resolved=False,
            degenerate=True,
            normalization=Normalization(),
            field=u.copy(),
            grid_meta=meta,
        )
    hat = GridFunction(u.grid, (u.values - mu_minus) / omega_ref)
    transform = Normalization(shift=mu_minus, scale=omega_ref)
    sup_scale = hat.sup_norm()
    ctx = IntrinsicMetricContext(sup_norm=sup_scale, exponents=p)
    dist = boundary_p_distance(ref, u.grid.box, ctx)
    if dist <= 0.0:
        raise ValueError("reference cube touches the domain boundary")

    corner = tuple(c + h for c, h in zip(center, ref.half_widths))
    rows = [
        DecayRow(
            index=0,
            rho_scale=2.0 * rho0,
            distance_scale=p_distance(center, corner, ctx),
            oscillation=1.0,
            min_nodes=min(_axis_node_counts(u, ref)),
        )
    ]
    omega = 1.0
    rho = rho0
    under = False
    for m in range(1, m_max + 1):
        cyl = IntrinsicCylinder(
            center=center, omega=omega, q=q, rho=rho, exponents=p, alpha=alpha
        )
        region = cyl.box()
        counts = _axis_node_counts(hat, region)
        if min(counts) < 4:
            under = True
            break
        measured = oscillation(hat, region)[2]
        rows.append(
            DecayRow(
                index=m,
                rho_scale=rho,
                distance_scale=cyl.distance_scale(ctx),
                oscillation=measured,
                min_nodes=min(counts),
            )
        )
        if measured <= 0.0:
            break
        omega = min(measured, omega)
        rho = 0.5 * rho
    return DecayTrace(
        rows=rows,
        sup_scale=sup_scale,
        boundary_distance=dist,
        under_resolved=under,
        degenerate=False,
        normalization=transform,
        field=hat,
        grid_meta=meta,
    )


class HolderFit(NamedTuple):
    alpha: float
    gamma: float
    residual: float


def holder_fit(trace: DecayTrace) -> HolderFit:
    """Least-squares power-law fit of the trace in log-log coordinates.

    Model: oscillation ~= gamma * sup_scale * (d/D)^alpha with d the row
    scale and D the boundary distance; residual is root mean square in
    log space.
    """
    if trace.degenerate:
        raise ValueError("degenerate trace: the oscillation vanished")
    if any(r.oscillation <= 0.0 for r in trace.rows):
        raise ValueError("trace contains vanishing oscillation rows")
    if len(trace.rows) < 3:
        raise ValueError(f"need at least 3 rows to fit, got {len(trace.rows)}")
    if trace.boundary_distance <= 0.0 or trace.sup_scale <= 0.0:
        raise ValueError("trace normalizers must be positive")
    x = np.array(
        [math.log(r.distance_scale / trace.boundary_distance) for r in trace.rows]
    )
    y = np.array([math.log(r.oscillation) for r in trace.rows])
    design = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return HolderFit(
        alpha=float(slope),
        gamma=float(math.exp(intercept) / trace.sup_scale),
        residual=resid,
    )


def modulus_check(
    u: GridFunction,
    p: ExponentVector,
    region: Box,
    alpha: float,
    gamma: float,
    pairs: int = 10000,
    seed: int = 0,
    threshold: float = 0.99,
    points=None,
) -> InequalityReport:
    """Sampled two-point modulus verification on a compact sub-box:

    |u(x) - u(y)| <= gamma * sup|u| * (p_distance(x,y) / D)^alpha

    with D the intrinsic distance from the sub-box to the domain
    boundary.  Values between nodes come from multilinear interpolation.
    The report passes when at least the threshold fraction of sampled
    pairs satisfies the inequality.
    """
    if not u.grid.box.contains(region):
        raise ValueError("compact region escapes the domain")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"pass threshold must lie in (0,1], got {threshold}")
    meta = grid_metadata(u.grid)
    sup = u.sup_norm()
    if sup == 0.0:
        return InequalityReport(
            check_name="modulus",
            anchor="holder-modulus",
            lhs=0.0,
            rhs=1.0 - threshold,
            empirical_gamma=None,
            state="degenerate",
            details={"note": "identically zero field", "alpha": alpha, "gamma": gamma},
            seed=seed,
            grid_meta=meta,
        )
    ctx = IntrinsicMetricContext(sup_norm=sup, exponents=p)
    dist_bdry = boundary_p_distance(region, u.grid.box, ctx)
    if dist_bdry <= 0.0:
        raise ValueError("compact region touches the domain boundary")
    if points is None:
        rng = np.random.default_rng(seed)
        lo, hi = region.lo, region.hi
        a = rng.uniform(lo, hi, size=(pairs, u.grid.ndim))
        b = rng.uniform(lo, hi, size=(pairs, u.grid.ndim))
    else:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 3 or pts.shape[1] != 2 or pts.shape[2] != u.grid.ndim:
            raise ValueError("points must have shape (M, 2, ndim)")
        tol = 1e-12 * (1.0 + np.abs(region.lo) + np.abs(region.hi))
        inside = np.all(pts >= region.lo - tol, axis=2) & np.all(
            pts <= region.hi + tol, axis=2
        )
        if not np.all(inside):
            raise ValueError("sample point outside the compact region")
        a, b = pts[:, 0, :], pts[:, 1, :]
    w = ctx.weights()
    pw = p.as_array() / p.pmax
    dist = np.sum(w * np.abs(a - b) ** pw, axis=1)
    lhs = np.abs(u.sample(a) - u.sample(b))
    rhs = gamma * sup * (dist / dist_bdry) ** alpha
    ok = lhs <= rhs * (1.0 + 1e-12) + 1e-15
    fraction = float(np.mean(ok))
    positive = dist > 0.0
    implied = (
        float(np.max(lhs[positive] / (sup * (dist[positive] / dist_bdry) ** alpha)))
        if np.any(positive)
        else 0.0
    )
    violation = 1.0 - fraction
    budget = 1.0 - threshold
    worst_gap = float(np.max(lhs - rhs)) if lhs.size else 0.0
    return InequalityReport(
        check_name="modulus",
        anchor="holder-modulus",
        lhs=violation,
        rhs=budget,
        empirical_gamma=implied,
        state="pass" if fraction >= threshold else "fail",
        details={
            "pass_fraction": fraction,
            "threshold": threshold,
            "implied_gamma": implied,
            "boundary_distance": dist_bdry,
            "alpha": alpha,
            "gamma": gamma,
            "pairs": int(lhs.size),
            "worst_gap": worst_gap,
        },
        seed=seed,
        grid_meta=meta,
    )
