"""Truncation-energy estimates and the De Giorgi iteration machinery.

The reports here are empirical: each one measures both sides of an
inequality on a concrete grid function and records the ratio as the
empirical constant.  Downstream consumers (the sup-estimate module, the
reduction-of-oscillation experiment) feed these constants, inflated by a
fixed safety factor, back into the analytic recursions.

Intrinsic-geometry operations first renormalize the field affinely so the
reference oscillation does not exceed 1; the transform is recorded in the
report details and the level-set geometry is unchanged by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import ExponentVector
from .lattice import (
    Box,
    CutoffProfile,
    Grid,
    GridFunction,
    integrate,
    level_set_measure,
    oscillation,
    partial_difference,
    region_measure,
    truncate,
)
from .reports import InequalityReport, grid_metadata

__all__ = [
    "CaccioppoliConfig",
    "IntrinsicGeometry",
    "IterationSchedule",
    "RecursionParams",
    "IterationTrace",
    "ShrinkState",
    "Normalization",
    "caccioppoli_report",
    "specialized_energy_report",
    "fast_convergence_threshold",
    "iterate_recursion",
    "degiorgi_lemma_check",
    "build_vs",
    "poincare_measure_check",
    "shrink_chain",
    "choose_q",
]

# Safety factor applied to measured energy constants before they enter
# analytic recursions.
GAMMA_INFLATION = 2.0


@dataclass(frozen=True)
class Normalization:
    """Affine renormalization u -> (u - shift)/scale applied to a field."""

    shift: float = 0.0
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {"shift": self.shift, "scale": self.scale}


def normalize_for_intrinsic(
    u: GridFunction, reference: Box
) -> tuple[GridFunction, float, float, float, Normalization]:
    """Rescale so the oscillation over the reference box is at most 1.

    Returns (u_hat, mu_plus, mu_minus, omega) of the normalized field plus
    the recorded transform.  Fields already oscillating by at most 1 are
    returned untouched.
    """
    mu_plus, mu_minus, omega = oscillation(u, reference)
    if omega <= 1.0:
        return u, mu_plus, mu_minus, omega, Normalization()
    hat = GridFunction(u.grid, (u.values - mu_minus) / omega)
    return hat, 1.0, 0.0, 1.0, Normalization(shift=mu_minus, scale=omega)


@dataclass(frozen=True)
class CaccioppoliConfig:
    """Level, truncation sign, concentric boxes, and exponents for the
    plain energy inequality."""

    level: float
    sign: str
    outer: Box
    inner_fraction: float
    exponents: ExponentVector

    def __post_init__(self):
        if self.sign not in ("plus", "minus"):
            raise ValueError(f"sign must be 'plus' or 'minus', got {self.sign!r}")
        if not 0.0 < self.inner_fraction < 1.0:
            raise ValueError(
                f"inner fraction must lie strictly in (0,1), got {self.inner_fraction}"
            )
        if self.exponents.N != self.outer.ndim:
            raise ValueError("exponents must match the box dimension")


def _truncation_energy(
    u: GridFunction,
    level: float,
    sign: str,
    profile: CutoffProfile,
    region: Box,
    p: ExponentVector,
) -> float:
    """sum_j int_region |d_j[(u-k)_pm zeta^{1/p_j}]|^{p_j}."""
    t = truncate(u, level, sign)
    total = 0.0
    for j in range(p.N):
        zeta_root = profile.evaluate_root(u.grid, p.p[j])
        w = GridFunction(u.grid, t.values * zeta_root.values)
        d = partial_difference(w, j)
        total += integrate(
            GridFunction(u.grid, np.abs(d.values) ** p.p[j]), region
        )
    return total


def caccioppoli_report(
    u: GridFunction,
    cfg: CaccioppoliConfig,
    seed: int | None = None,
) -> InequalityReport:
    """Energy of the cut truncation against the scaled truncation mass.

    lhs = sum_j int |d_j[(u-k)_pm zeta^{1/p_j}]|^{p_j},
    rhs = sum_j ((1-sigma) rho_j)^{-p_j} int (u-k)_pm^{p_j},
    both over the outer box; the ratio is the empirical constant.
    """
    if not u.grid.box.contains(cfg.outer):
        raise ValueError("outer box escapes the grid box")
    p = cfg.exponents
    sigma = cfg.inner_fraction
    inner = cfg.outer.shrunk(sigma)
    profile = CutoffProfile(cfg.outer, inner, p)
    t = truncate(u, cfg.level, cfg.sign)
    rhs = 0.0
    for j in range(p.N):
        ramp = (1.0 - sigma) * cfg.outer.half_widths[j]
        rhs += ramp ** (-p.p[j]) * integrate(
            GridFunction(u.grid, t.values ** p.p[j]), cfg.outer
        )
    meta = grid_metadata(u.grid)
    if rhs == 0.0:
        return InequalityReport(
            check_name="caccioppoli",
            anchor="energy-inequality",
            lhs=0.0,
            rhs=0.0,
            empirical_gamma=None,
            state="degenerate",
            details={"note": "truncation vanishes on the outer box",
                     "level": cfg.level, "sign": cfg.sign, "sigma": sigma},
            seed=seed,
            grid_meta=meta,
        )
    lhs = _truncation_energy(u, cfg.level, cfg.sign, profile, cfg.outer, p)
    return InequalityReport(
        check_name="caccioppoli",
        anchor="energy-inequality",
        lhs=lhs,
        rhs=rhs,
        empirical_gamma=lhs / rhs,
        state="pass",
        details={"level": cfg.level, "sign": cfg.sign, "sigma": sigma},
        seed=seed,
        grid_meta=meta,
    )


@dataclass(frozen=True)
class IntrinsicGeometry:
    """Center, radius scale, dyadic depth, and scaling power for the
    intrinsic cylinders; alpha defaults to pmax."""

    center: tuple[float, ...]
    rho: float
    q: int
    alpha: float | None = None
    sigma: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(
                f"intrinsic radius scale must lie in (0,1], got {self.rho}"
            )
        if int(self.q) != self.q or self.q < 0:
            raise ValueError(f"dyadic depth q must be a nonnegative integer, got {self.q}")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie in (0,1), got {self.sigma}")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "q", int(self.q))

    def scaling_power(self, p: ExponentVector) -> float:
        alpha = self.alpha if self.alpha is not None else p.pmax
        if alpha < p.pmax:
            raise ValueError(f"alpha must be at least pmax={p.pmax}, got {alpha}")
        return float(alpha)

    def reference_box(self, grid: Grid) -> Box:
        ref = Box.cube(self.center, 2.0 * self.rho)
        if not grid.box.contains(ref):
            raise ValueError("reference cube (radius 2*rho) escapes the grid box")
        return ref

    def radii(self, p: ExponentVector, omega: float) -> tuple[float, ...]:
        """Intrinsic per-axis radii (omega/2^q) rho^{alpha/p_j}."""
        if omega <= 0.0:
            raise ValueError("intrinsic radii need a positive oscillation")
        alpha = self.scaling_power(p)
        pref = omega / 2.0 ** self.q
        return tuple(pref * self.rho ** (alpha / pj) for pj in p.p)

    def cylinder(self, p: ExponentVector, omega: float) -> Box:
        return Box(self.center, self.radii(p, omega))


def specialized_energy_report(
    u: GridFunction,
    p: ExponentVector,
    geometry: IntrinsicGeometry,
    s: int,
    side: str = "plus",
    seed: int | None = None,
) -> InequalityReport:
    """Energy inequality at the dyadic level k = mu+ - omega/2^s on the
    intrinsic cylinder, normalized so the level-set measure carries the
    right-hand side:

    rhs = (1-sigma)^{-pmax} sum_j rho_j^{-p_j} (omega/2^s)^{p_j} |A_s|.
    """
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    if s < 0 or int(s) != s:
        raise ValueError(f"dyadic level s must be a nonnegative integer, got {s}")
    ref = geometry.reference_box(u.grid)
    work = u if side == "plus" else GridFunction(u.grid, -u.values)
    hat, mu_plus, mu_minus, omega, transform = normalize_for_intrinsic(work, ref)
    meta = grid_metadata(u.grid)
    details: dict = {
        "side": side,
        "s": int(s),
        "normalization": transform.to_dict(),
        "omega": omega,
    }
    if omega == 0.0:
        return InequalityReport(
            check_name="specialized_energy",
            anchor="level-energy",
            lhs=0.0,
            rhs=0.0,
            empirical_gamma=None,
            state="degenerate",
            details={**details, "note": "constant field"},
            seed=seed,
            grid_meta=meta,
        )
    radii = geometry.radii(p, omega)
    cyl = Box(geometry.center, radii)
    level = mu_plus - omega / 2.0 ** s
    measure = level_set_measure(hat, level, "above", cyl)
    sigma = geometry.sigma
    rhs = (1.0 - sigma) ** (-p.pmax) * sum(
        r ** (-pj) * (omega / 2.0 ** s) ** pj * measure
        for r, pj in zip(radii, p.p)
    )
    details.update(
        {
            "level": level,
            "level_set_measure": measure,
            "cylinder_measure": region_measure(u.grid, cyl),
            "radii": list(radii),
        }
    )
    if rhs == 0.0:
        return InequalityReport(
            check_name="specialized_energy",
            anchor="level-energy",
            lhs=0.0,
            rhs=0.0,
            empirical_gamma=None,
            state="degenerate",
            details={**details, "note": "empty level set"},
            seed=seed,
            grid_meta=meta,
        )
    inner = cyl.shrunk(sigma)
    profile = CutoffProfile(cyl, inner, p)
    lhs = _truncation_energy(hat, level, "plus", profile, cyl, p)
    return InequalityReport(
        check_name="specialized_energy",
        anchor="level-energy",
        lhs=lhs,
        rhs=rhs,
        empirical_gamma=lhs / rhs,
        state="pass",
        details=details,
        seed=seed,
        grid_meta=meta,
    )


@dataclass(frozen=True)
class RecursionParams:
    """Constants of the one-step recursion Y_{n+1} = C B^n Y_n^{1+delta}."""

    C: float
    B: float
    delta: float

    def __post_init__(self):
        if self.C <= 0.0 or self.B < 1.0 or self.delta <= 0.0:
            raise ValueError(
                f"need C > 0, B >= 1, delta > 0; got C={self.C}, B={self.B}, delta={self.delta}"
            )


def fast_convergence_threshold(params: RecursionParams) -> float:
    """Seed threshold C^{-1/delta} B^{-1/delta^2} for geometric collapse."""
    d = params.delta
    return params.C ** (-1.0 / d) * params.B ** (-1.0 / (d * d))


@dataclass
class IterationTrace:
    values: list[float]
    diverged: bool


def iterate_recursion(params: RecursionParams, y0: float, steps: int) -> IterationTrace:
    """Equality-case orbit of the recursion; overflow flips the flag."""
    if y0 < 0.0:
        raise ValueError("orbit seed must be nonnegative")
    vals = [float(y0)]
    y = float(y0)
    for n in range(steps):
        try:
            y = params.C * params.B ** n * y ** (1.0 + params.delta)
        except OverflowError:
            return IterationTrace(vals, True)
        if not math.isfinite(y) or y > 1e150:
            return IterationTrace(vals, True)
        vals.append(y)
    return IterationTrace(vals, False)


@dataclass(frozen=True)
class IterationSchedule:
    """Shrinking radii rho_{j,n} = (rho_j/2)(1+2^{-n}) with matching levels.

    Level modes:
      'drop'          k_n = top - (gap/2)(1 + 2^{-n})   (descent from a sup)
      'grow'          k_n = (1 - 2^{-n}) k
      'grow_critical' k_n = (1 - 2^{-(n+1)}) k
    """

    base_radii: tuple[float, ...]
    mode: str
    level_scale: float
    level_top: float = 0.0

    def __post_init__(self):
        if self.mode not in ("drop", "grow", "grow_critical"):
            raise ValueError(f"unknown level mode {self.mode!r}")
        if any(r <= 0.0 for r in self.base_radii):
            raise ValueError("schedule radii must be positive")

    def radii(self, n: int) -> tuple[float, ...]:
        f = 0.5 * (1.0 + 2.0 ** (-n))
        return tuple(r * f for r in self.base_radii)

    def box(self, center, n: int) -> Box:
        return Box(tuple(center), self.radii(n))

    def level(self, n: int) -> float:
        if self.mode == "drop":
            return self.level_top - 0.5 * self.level_scale * (1.0 + 2.0 ** (-n))
        if self.mode == "grow":
            return (1.0 - 2.0 ** (-n)) * self.level_scale
        return (1.0 - 2.0 ** (-(n + 1))) * self.level_scale

    def midpoint_level(self, n: int) -> float:
        return 0.5 * (self.level(n) + self.level(n + 1))


def _gradient_slack(u: GridFunction, region: Box) -> float:
    """Nodewise tolerance h * max|Du| for almost-everywhere conclusions."""
    gmax = 0.0
    masks = [u.grid.axis_inside(a, region) for a in range(u.grid.ndim)]
    for j in range(u.grid.ndim):
        d = partial_difference(u, j)
        sel = np.abs(d.values[np.ix_(*masks)])
        gmax = max(gmax, float(np.max(sel)) if sel.size else 0.0)
    return max(u.grid.spacing) * gmax


def degiorgi_lemma_check(
    u: GridFunction,
    p: ExponentVector,
    geometry: IntrinsicGeometry,
    side: str = "plus",
    seed: int | None = None,
) -> InequalityReport:
    """Critical-mass lemma: if the top dyadic slice occupies less than the
    nu-fraction of the intrinsic cylinder, the next dyadic level is clean
    on the half cylinder.

    nu comes from fast_convergence_threshold with C the inflated empirical
    constant of the specialized energy report at s = q, B = 2 * 2^{pmax/pbar},
    delta = 1/N.  Conclusion is checked nodewise with slack h*max|Du|.
    """
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    q = geometry.q
    if q < 1:
        raise ValueError("lemma check needs dyadic depth q >= 1")
    ref = geometry.reference_box(u.grid)
    work = u if side == "plus" else GridFunction(u.grid, -u.values)
    hat, mu_plus, mu_minus, omega, transform = normalize_for_intrinsic(work, ref)
    meta = grid_metadata(u.grid)
    details: dict = {"side": side, "q": q, "normalization": transform.to_dict(),
                     "omega": omega}
    if omega == 0.0:
        return InequalityReport(
            check_name="degiorgi_lemma",
            anchor="measure-to-sup",
            lhs=0.0,
            rhs=0.0,
            empirical_gamma=None,
            state="degenerate",
            details={**details, "note": "constant field, vacuous"},
            seed=seed,
            grid_meta=meta,
        )
    energy_rep = specialized_energy_report(u, p, geometry, s=q, side=side)
    if energy_rep.state == "pass":
        gamma = energy_rep.empirical_gamma
        gamma_source = "measured"
    else:
        gamma = 1.0
        gamma_source = "default"
    c_eff = max(GAMMA_INFLATION * gamma, 1e-12)
    b = 2.0 ** (p.pmax / p.pbar)
    params = RecursionParams(C=c_eff, B=2.0 * b, delta=1.0 / p.N)
    nu = min(fast_convergence_threshold(params), 1.0)

    radii = geometry.radii(p, omega)
    cyl = Box(geometry.center, radii)
    level_q = mu_plus - omega / 2.0 ** q
    hypothesis_measure = level_set_measure(hat, level_q, "above", cyl)
    cyl_measure = region_measure(u.grid, cyl)
    details.update(
        {
            "nu": nu,
            "recursion_C": c_eff,
            "recursion_B": 2.0 * b,
            "gamma_source": gamma_source,
            "empirical_gamma_energy": gamma,
            "hypothesis_measure": hypothesis_measure,
            "cylinder_measure": cyl_measure,
            "level": level_q,
        }
    )
    if not hypothesis_measure < nu * cyl_measure:
        return InequalityReport(
            check_name="degiorgi_lemma",
            anchor="measure-to-sup",
            lhs=hypothesis_measure,
            rhs=nu * cyl_measure,
            empirical_gamma=gamma,
            state="hypothesis-not-met",
            details=details,
            seed=seed,
            grid_meta=meta,
        )
    half = Box(geometry.center, tuple(0.5 * r for r in radii))
    target = mu_plus - omega / 2.0 ** (q + 1)
    slack = _gradient_slack(hat, cyl)
    sup_half = oscillation(hat, half)[0]
    conclusion_ok = sup_half <= target + slack
    details.update({"conclusion_sup": sup_half, "conclusion_level": target,
                    "slack": slack})
    return InequalityReport(
        check_name="degiorgi_lemma",
        anchor="measure-to-sup",
        lhs=sup_half,
        rhs=target + slack,
        empirical_gamma=gamma,
        state="pass" if conclusion_ok else "fail",
        details=details,
        seed=seed,
        grid_meta=meta,
    )


def build_vs(u: GridFunction, mu_plus: float, omega: float, s: int) -> GridFunction:
    """Doubly truncated comparison field: 0 below the s-level, linear in
    between, capped at omega/2^{s+1}."""
    if omega <= 0.0:
        raise ValueError("truncation needs a positive oscillation")
    if s < 1 or int(s) != s:
        raise ValueError(f"dyadic index s must be an integer >= 1, got {s}")
    lower = mu_plus - omega / 2.0 ** s
    cap = omega / 2.0 ** (s + 1)
    return GridFunction(u.grid, np.clip(u.values - lower, 0.0, cap))


def poincare_measure_check(
    u: GridFunction,
    p: ExponentVector,
    geometry: IntrinsicGeometry,
    s: int,
    seed: int | None = None,
) -> InequalityReport:
    """Discrete polygonal/Poincare inequality between consecutive dyadic
    slices:

    (omega/2^{s+1}) |A_{s+1}| <= 4 sum_j rho_j int_{A_s - A_{s+1}} |d_j u|,

    under the hypothesis that the low half of the oscillation fills at
    least half of the cylinder.
    """
    if s < 1 or int(s) != s:
        raise ValueError(f"dyadic index s must be an integer >= 1, got {s}")
    ref = geometry.reference_box(u.grid)
    hat, mu_plus, mu_minus, omega, transform = normalize_for_intrinsic(u, ref)
    meta = grid_metadata(u.grid)
    details: dict = {"s": int(s), "normalization": transform.to_dict(), "omega": omega}
    if omega == 0.0:
        return InequalityReport(
            check_name="poincare",
            anchor="measure-poincare",
            lhs=0.0,
            rhs=0.0,
            empirical_gamma=None,
            state="degenerate",
            details={**details, "note": "constant field, 0 <= 0"},
            seed=seed,
            grid_meta=meta,
        )
    radii = geometry.radii(p, omega)
    cyl = Box(geometry.center, radii)
    cyl_measure = region_measure(u.grid, cyl)
    low_measure = level_set_measure(hat, mu_minus + 0.5 * omega, "below", cyl)
    details.update({"low_half_measure": low_measure, "cylinder_measure": cyl_measure})
    if not low_measure >= 0.5 * cyl_measure:
        return InequalityReport(
            check_name="poincare",
            anchor="measure-poincare",
            lhs=low_measure,
            rhs=0.5 * cyl_measure,
            empirical_gamma=None,
            state="hypothesis-not-met",
            details=details,
            seed=seed,
            grid_meta=meta,
        )
    level_s = mu_plus - omega / 2.0 ** s
    level_s1 = mu_plus - omega / 2.0 ** (s + 1)
    a_s1 = level_set_measure(hat, level_s1, "above", cyl)
    lhs = (omega / 2.0 ** (s + 1)) * a_s1
    ring = (hat.values > level_s) & ~(hat.values > level_s1)
    w = hat.grid.weight_tensor(cyl)
    rhs = 0.0
    for j in range(p.N):
        d = np.abs(partial_difference(hat, j).values)
        rhs += 4.0 * radii[j] * float(np.sum(np.where(ring, w * d, 0.0)))
    margin = (rhs - lhs) / rhs if rhs > 0.0 else (0.0 if lhs == 0.0 else -np.inf)
    details.update({"slice_measure": a_s1, "margin": margin})
    state = "pass" if lhs <= rhs or margin >= -0.05 else "fail"
    if lhs == 0.0 and rhs == 0.0:
        state = "pass"  # empty upper slice, inequality holds as 0 <= 0
    return InequalityReport(
        check_name="poincare",
        anchor="measure-poincare",
        lhs=lhs,
        rhs=rhs,
        empirical_gamma=(lhs / rhs) if rhs > 0.0 else None,
        state=state,
        details=details,
        seed=seed,
        grid_meta=meta,
    )


@dataclass
class ShrinkState:
    """Measured dyadic slice data for the measure-shrinking chain."""

    q: int
    measures: list[float]
    truncations: list[GridFunction]
    gamma_chain: float
    fraction: float
    bound: float
    state: str
    details: dict = field(default_factory=dict)

    def report(self, seed: int | None = None, grid_meta: dict | None = None) -> InequalityReport:
        return InequalityReport(
            check_name="shrink_chain",
            anchor="measure-shrink",
            lhs=self.fraction,
            rhs=self.bound,
            empirical_gamma=self.gamma_chain if math.isfinite(self.gamma_chain) else None,
            state=self.state,
            details=dict(self.details),
            seed=seed,
            grid_meta=grid_meta,
        )


def shrink_chain(
    u: GridFunction,
    p: ExponentVector,
    geometry: IntrinsicGeometry,
    q: int,
) -> ShrinkState:
    """Chain the per-slice inequalities s = 1..q-1 into the final measure
    bound |A_q|/|Q| <= gamma (q-1)^{-(pmin-1)/pmin}.

    Requires q >= 2 and the exponent-spread stipulation q(pmax - pmin) <= 1.
    The per-step empirical constants gamma_s make the summed inequality an
    arithmetic identity; the state records degeneracies honestly.
    """
    if q < 2 or int(q) != q:
        raise ValueError(f"chain depth q must be an integer >= 2, got {q}")
    q = int(q)
    spread = p.pmax - p.pmin
    if q * spread > 1.0:
        raise ValueError(
            "exponent-spread stipulation violated: "
            f"q(pmax - pmin) = {q * spread:.6g} > 1"
        )
    ref = geometry.reference_box(u.grid)
    hat, mu_plus, mu_minus, omega, transform = normalize_for_intrinsic(u, ref)
    details: dict = {"normalization": transform.to_dict(), "omega": omega, "q": q}
    if omega == 0.0:
        return ShrinkState(
            q=q, measures=[0.0] * (q + 1), truncations=[],
            gamma_chain=0.0, fraction=0.0, bound=0.0,
            state="degenerate", details={**details, "note": "constant field"},
        )
    radii = geometry.radii(p, omega)
    cyl = Box(geometry.center, radii)
    cyl_measure = region_measure(u.grid, cyl)
    measures = [
        level_set_measure(hat, mu_plus - omega / 2.0 ** s, "above", cyl)
        for s in range(q + 1)
    ]
    truncs = [build_vs(hat, mu_plus, omega, s) for s in range(1, q)]
    low_measure = level_set_measure(hat, mu_minus + 0.5 * omega, "below", cyl)
    details["low_half_measure"] = low_measure
    details["hypothesis_low_half"] = bool(low_measure >= 0.5 * cyl_measure)

    pmin = p.pmin
    exponent = 1.0 - 1.0 / pmin
    gammas: list[float] = []
    for s in range(1, q):
        drop = measures[s] - measures[s + 1]
        if measures[s + 1] == 0.0:
            gammas.append(0.0)
        elif drop <= 0.0:
            gammas.append(math.inf)
        else:
            gammas.append(
                measures[s + 1]
                / (cyl_measure ** (1.0 / pmin) * drop ** exponent)
            )
    gamma_chain = max(gammas) if gammas else 0.0
    m = pmin / (pmin - 1.0)
    summed_lhs = (q - 1) * measures[q] ** m
    summed_rhs = (
        (gamma_chain ** m if math.isfinite(gamma_chain) else math.inf)
        * cyl_measure ** (1.0 / (pmin - 1.0))
        * measures[0]
    )
    fraction = measures[q] / cyl_measure if cyl_measure > 0.0 else 0.0
    bound = (
        gamma_chain * (q - 1) ** (-exponent)
        if math.isfinite(gamma_chain)
        else math.inf
    )
    details.update(
        {
            "measures": measures,
            "step_gammas": gammas,
            "summed_lhs": summed_lhs,
            "summed_rhs": summed_rhs,
            "cylinder_measure": cyl_measure,
        }
    )
    if measures[1] == 0.0:
        state = "degenerate"
    elif fraction <= bound * (1.0 + 1e-12) or (fraction == 0.0 and bound == 0.0):
        state = "pass"
    else:
        state = "fail"
    return ShrinkState(
        q=q,
        measures=measures,
        truncations=truncs,
        gamma_chain=gamma_chain,
        fraction=fraction,
        bound=bound,
        state=state,
        details=details,
    )


def choose_q(gamma: float, nu: float, pmin: float) -> int:
    """Smallest integer q >= 2 with gamma (q-1)^{-(pmin-1)/pmin} <= nu.

    The minimal q grows like (gamma/nu)^{pmin/(pmin-1)} and blows up as
    pmin -> 1, so the search must not walk linearly: bracket by doubling,
    then bisect the monotone predicate.
    """
    if gamma <= 0.0 or nu <= 0.0:
        raise ValueError("gamma and nu must be positive")
    if pmin <= 1.0:
        raise ValueError(f"pmin must exceed 1, got {pmin}")
    expo = (pmin - 1.0) / pmin

    def satisfied(qq: int) -> bool:
        try:
            return gamma * float(qq - 1) ** (-expo) <= nu
        except OverflowError:
            # q - 1 exceeds float range, so (q-1)^{-expo} underflows to 0
            return True

    if satisfied(2):
        return 2
    lo, hi = 2, 4
    while not satisfied(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if satisfied(mid):
            hi = mid
        else:
            lo = mid
    return hi
