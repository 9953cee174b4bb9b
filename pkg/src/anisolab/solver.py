"""Variational solver for anisotropic p-Laplacian-type Dirichlet problems.

Discretization: the energy sums per-axis edge differences with trapezoidal
transverse weights (equivalently, per-cell one-sided differences averaged
over the cell corners).  The objective is convex, strictly convex in the
interior values when every exponent exceeds 1 and either the
regularization is positive or no exponent dips below 2, and it is exact on
affine data: affine fields have identically zero interior gradient.

The nodal energy gradient is the exact adjoint of the edge-quadrature weak
form used by weak_residual, so a tight gradient stop translates directly
into a small weak residual.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import ExponentVector
from .lattice import Box, Grid, GridFunction, partial_difference
from .reports import InequalityReport, grid_metadata

__all__ = [
    "FluxField",
    "DirichletProblem",
    "SolveReport",
    "energy",
    "energy_gradient",
    "solve_dirichlet",
    "weak_residual",
    "structure_check",
    "boundary_expression",
    "problem_from_dict",
]


def _axis_shaped(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    return vec.reshape([-1 if a == axis else 1 for a in range(ndim)])


def _edge_weight_factors(grid: Grid, axis: int) -> list[np.ndarray]:
    """Per-axis factors of the edge weight tensor for edges along `axis`.

    Own axis: the edge length h.  Transverse axes: trapezoidal node
    weights (half cells at the faces).
    """
    factors = []
    for j in range(grid.ndim):
        if j == axis:
            factors.append(np.full(grid.shape[j] - 1, grid.spacing[axis]))
        else:
            factors.append(grid.axis_weights(j, None))
    return factors


def _energy_and_gradient(
    values: np.ndarray,
    grid: Grid,
    p: ExponentVector,
    eps: float,
    want_gradient: bool,
) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """Returns (energy, gradient, scale); scale is the same scatter with
    absolute flux values, the natural unit for gradient rounding noise."""
    ndim = grid.ndim
    total = 0.0
    grad = np.zeros_like(values) if want_gradient else None
    scale = np.zeros_like(values) if want_gradient else None
    for i in range(ndim):
        h = grid.spacing[i]
        s = np.diff(values, axis=i) / h
        m = eps * eps + s * s
        pi = p.p[i]
        w = np.ones((1,) * ndim)
        for j, fac in enumerate(_edge_weight_factors(grid, i)):
            w = w * _axis_shaped(fac, j, ndim)
        total += (1.0 / pi) * float(np.sum(w * m ** (pi / 2.0)))
        if want_gradient:
            dphi = m ** ((pi - 2.0) / 2.0) * s
            flux = w * dphi / h
            head = [slice(None)] * ndim
            tail = [slice(None)] * ndim
            head[i] = slice(1, None)
            tail[i] = slice(None, -1)
            grad[tuple(head)] += flux
            grad[tuple(tail)] -= flux
            aflux = np.abs(flux)
            scale[tuple(head)] += aflux
            scale[tuple(tail)] += aflux
    if want_gradient:
        mask = ~grid.interior_mask()
        grad[mask] = 0.0
        scale[mask] = 0.0
    return total, grad, scale


def _check_gradient_preconditions(p: ExponentVector, eps: float) -> None:
    if eps < 0.0:
        raise ValueError(f"regularization must be >= 0, got {eps}")
    if eps == 0.0 and p.pmin < 2.0:
        raise ValueError(
            "zero regularization needs every exponent >= 2; "
            f"got pmin={p.pmin:.6g}"
        )


def energy(u: GridFunction, p: ExponentVector, eps: float = 0.0) -> float:
    """Regularized anisotropic energy sum_i (1/p_i) int (eps^2+|d_i u|^2)^(p_i/2)."""
    if p.N != u.grid.ndim:
        raise ValueError("exponent count must match grid dimension")
    if eps < 0.0:
        raise ValueError(f"regularization must be >= 0, got {eps}")
    val, _, _ = _energy_and_gradient(u.values, u.grid, p, eps, want_gradient=False)
    return val


def energy_gradient(u: GridFunction, p: ExponentVector, eps: float = 0.0) -> GridFunction:
    """Nodal gradient of the discrete energy; zero at Dirichlet (face) nodes."""
    if p.N != u.grid.ndim:
        raise ValueError("exponent count must match grid dimension")
    _check_gradient_preconditions(p, eps)
    _, g, _ = _energy_and_gradient(u.values, u.grid, p, eps, want_gradient=True)
    return GridFunction(u.grid, g)


@dataclass(frozen=True)
class FluxField:
    """Componentwise flux A(x, u, g) with declared structure constants.

    evaluator(x, u, g): x and g are tuples of N broadcast-compatible
    arrays, u an array; returns a sequence of N component arrays.
    Structure conditions checked by structure_check:
        A_i * g_i >= C0_i |g_i|^{p_i}     and     |A_i| <= C1_i |g_i|^{p_i - 1}.
    """

    evaluator: object
    coercivity: tuple[float, ...]
    growth: tuple[float, ...]
    exponents: ExponentVector

    def __post_init__(self):
        c0 = tuple(float(v) for v in self.coercivity)
        c1 = tuple(float(v) for v in self.growth)
        if len(c0) != self.exponents.N or len(c1) != self.exponents.N:
            raise ValueError("constant tuples must match the exponent count")
        if any(v <= 0.0 for v in c0) or any(v <= 0.0 for v in c1):
            raise ValueError("structure constants must be positive")
        object.__setattr__(self, "coercivity", c0)
        object.__setattr__(self, "growth", c1)

    @staticmethod
    def prototype(p: ExponentVector) -> "FluxField":
        """A_i = |g_i|^{p_i-2} g_i, written as sign(g_i)|g_i|^{p_i-1}."""

        def evaluate(x, u, g):
            return tuple(
                np.sign(gi) * np.abs(gi) ** (pi - 1.0) for gi, pi in zip(g, p.p)
            )

        return FluxField(evaluate, (1.0,) * p.N, (1.0,) * p.N, p)

    @staticmethod
    def prototype_regularized(p: ExponentVector, eps: float) -> "FluxField":
        """A_i = (eps^2 + g_i^2)^{(p_i-2)/2} g_i, the solver's actual flux."""
        if eps <= 0.0:
            return FluxField.prototype(p)

        def evaluate(x, u, g):
            return tuple(
                (eps * eps + gi * gi) ** ((pi - 2.0) / 2.0) * gi
                for gi, pi in zip(g, p.p)
            )

        # growth constant 1 still valid for p_i >= 2 only; keep declared 1
        # and let structure_check measure the eps-induced margins.
        return FluxField(evaluate, (1.0,) * p.N, (1.0,) * p.N, p)


@dataclass
class SolveReport:
    solution: GridFunction
    gradient_sup: float
    iterations: int
    energy_history: list[float]
    converged: bool
    epsilon: float
    tolerance: float

    def summary(self) -> dict:
        return {
            "gradient_sup": self.gradient_sup,
            "iterations": self.iterations,
            "converged": self.converged,
            "epsilon": self.epsilon,
            "tolerance": self.tolerance,
            "energy_first": self.energy_history[0],
            "energy_last": self.energy_history[-1],
        }


@dataclass
class DirichletProblem:
    """Boundary data on a grid plus exponents and solver knobs.

    epsilon None picks 1e-8 times the boundary oscillation (floored away
    from zero when any exponent is below 2).  tol is a relative factor on
    the initial density-normalized gradient sup-norm.
    """

    grid: Grid
    boundary: GridFunction
    exponents: ExponentVector
    epsilon: float | None = None
    tol: float = 1e-9
    max_iter: int = 100_000

    def __post_init__(self):
        if self.boundary.grid.shape != self.grid.shape:
            raise ValueError("boundary data must live on the problem grid")
        if self.exponents.N != self.grid.ndim:
            raise ValueError("exponent count must match grid dimension")
        if self.tol <= 0.0:
            raise ValueError("tolerance factor must be positive")

    def resolved_epsilon(self) -> float:
        if self.epsilon is not None:
            eps = float(self.epsilon)
            _check_gradient_preconditions(self.exponents, eps)
            return eps
        boundary_mask = ~self.grid.interior_mask()
        bvals = self.boundary.values[boundary_mask]
        osc = float(np.max(bvals) - np.min(bvals)) if bvals.size else 0.0
        scale = osc if osc > 0.0 else 1.0 + float(np.max(np.abs(bvals), initial=0.0))
        if self.exponents.pmin >= 2.0:
            return 1e-8 * osc
        return 1e-8 * scale


def _multilinear_corner_init(grid: Grid, boundary: np.ndarray) -> np.ndarray:
    """Multilinear blend of the 2^N corner values; reproduces affine data."""
    ndim = grid.ndim
    corners = np.empty((2,) * ndim)
    for corner in np.ndindex(*(2,) * ndim):
        idx = tuple(-1 if b else 0 for b in corner)
        corners[corner] = boundary[idx]
    out = corners
    for j in range(ndim):
        t = np.linspace(0.0, 1.0, grid.shape[j])
        # leading corner axis consumed; grid axis j appended at the tail,
        # so after the loop the axes sit in grid order
        out = out[0][..., None] * (1.0 - t) + out[1][..., None] * t
    return out


def _phi_second(s: np.ndarray, pi: float, eps: float) -> np.ndarray:
    """Second derivative of (1/p)(eps^2+s^2)^(p/2) with respect to s."""
    if eps > 0.0:
        m = eps * eps + s * s
        return m ** ((pi - 4.0) / 2.0) * (eps * eps + (pi - 1.0) * s * s)
    out = np.zeros_like(s)
    nz = s != 0.0
    out[nz] = (pi - 1.0) * np.abs(s[nz]) ** (pi - 2.0)
    if pi == 2.0:
        out[~nz] = 1.0
    return out


def _interior_hessian(values: np.ndarray, grid: Grid, p: ExponentVector, eps: float):
    """Sparse energy Hessian over all nodes (per-edge rank-one sums)."""
    from scipy import sparse

    ndim = grid.ndim
    flat = np.arange(values.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for i in range(ndim):
        h = grid.spacing[i]
        s = np.diff(values, axis=i) / h
        w = np.ones((1,) * ndim)
        for j, fac in enumerate(_edge_weight_factors(grid, i)):
            w = w * _axis_shaped(fac, j, ndim)
        c = (np.broadcast_to(w, s.shape) * _phi_second(s, p.p[i], eps) / (h * h)).ravel()
        head = [slice(None)] * ndim
        tail = [slice(None)] * ndim
        head[i] = slice(1, None)
        tail[i] = slice(None, -1)
        a = flat[tuple(head)].ravel()
        b = flat[tuple(tail)].ravel()
        rows.extend((a, b, a, b))
        cols.extend((a, b, b, a))
        vals.extend((c, c, -c, -c))
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(values.size, values.size),
    )
    return mat.tocsr()


def _solve_spd(hess, rhs: np.ndarray) -> np.ndarray:
    """Solve the (regularized) Newton system; direct under 8e4 unknowns, else CG."""
    from scipy import sparse
    from scipy.sparse import linalg as spla

    n = rhs.size
    diag = hess.diagonal()
    tau = 1e-12 * max(float(diag.max(initial=0.0)), 1.0)
    system = hess + tau * sparse.identity(n, format="csc")
    if n <= 80_000:
        return spla.spsolve(system, rhs)
    precond = spla.LinearOperator(
        (n, n), matvec=lambda v: v / (diag + tau)
    )
    sol, _ = spla.cg(system, rhs, rtol=1e-8, maxiter=2000, M=precond)
    return sol


def solve_dirichlet(problem: DirichletProblem, initial: GridFunction | None = None) -> SolveReport:
    """Minimize the discrete energy over interior nodes, boundary fixed.

    Damped Newton descent: each step solves the sparse energy Hessian
    restricted to interior nodes (curvature-adaptive by construction) under
    a monotone Armijo line search; terminates when the density-normalized
    gradient sup-norm falls under tol times its initial value.
    """
    grid = problem.grid
    p = problem.exponents
    eps = problem.resolved_epsilon()
    _check_gradient_preconditions(p, eps)

    boundary_mask = ~grid.interior_mask()
    x = (
        initial.values.copy()
        if initial is not None
        else _multilinear_corner_init(grid, problem.boundary.values)
    )
    x[boundary_mask] = problem.boundary.values[boundary_mask]

    vol = grid.cell_volumes()

    def eval_all(vals: np.ndarray) -> tuple[float, np.ndarray]:
        e, grad, _ = _energy_and_gradient(vals, grid, p, eps, want_gradient=True)
        return e, grad

    def gsup(g: np.ndarray) -> float:
        return float(np.max(np.abs(g) / vol))

    e_val, g, gscale = _energy_and_gradient(x, grid, p, eps, want_gradient=True)
    history = [e_val]
    g0 = gsup(g)
    # rounding noise in the assembled gradient grows with flux magnitude and
    # the summation length along an axis; below this floor the gradient
    # carries no signal and the iterate is numerically stationary
    noise_floor = (
        64.0 * np.finfo(float).eps * max(grid.shape) * gsup(gscale)
    )
    tol_eff = max(problem.tol * g0, noise_floor, 1e-13 * (1.0 + g0))

    interior = grid.interior_mask().ravel()
    int_idx = np.flatnonzero(interior)

    iterations = 0
    converged = g0 <= tol_eff
    stalled = False
    while not converged and not stalled and iterations < problem.max_iter:
        hess = _interior_hessian(x, grid, p, eps)[np.ix_(int_idx, int_idx)].tocsc()
        rhs = -g.ravel()[int_idx]
        d_int = _solve_spd(hess, rhs)
        d = np.zeros(x.size)
        d[int_idx] = d_int
        d = d.reshape(x.shape)
        slope = float(np.sum(g * d))
        if not np.isfinite(slope) or slope >= 0.0:
            d = -g
            slope = -float(np.sum(g * g))
            if slope == 0.0:
                break
        t = 1.0
        accepted = False
        for _ in range(60):
            e_new, g_new = eval_all(x + t * d)
            if np.isfinite(e_new) and e_new <= e_val + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stalled = True
            break
        x = x + t * d
        e_val, g = e_new, g_new
        history.append(e_val)
        iterations += 1
        converged = gsup(g) <= tol_eff
        if not converged:
            # step below float resolution of the iterate: the gradient is
            # rounding noise that no further Newton step can reduce
            step_sup = t * float(np.max(np.abs(d)))
            converged = step_sup <= 1e-14 * (1.0 + float(np.max(np.abs(x))))

    return SolveReport(
        solution=GridFunction(grid, x),
        gradient_sup=gsup(g),
        iterations=iterations,
        energy_history=history,
        converged=converged,
        epsilon=eps,
        tolerance=tol_eff,
    )


def _hat_test_function(grid: Grid, node: tuple[int, ...]) -> np.ndarray:
    phi = np.ones(grid.shape)
    for j, idx in enumerate(node):
        prof = np.zeros(grid.shape[j])
        prof[idx] = 1.0
        if idx - 1 >= 0:
            prof[idx - 1] = 0.0
        x = np.arange(grid.shape[j], dtype=float)
        prof = np.clip(1.0 - np.abs(x - idx), 0.0, 1.0)
        phi = phi * _axis_shaped(prof, j, grid.ndim)
    return phi


def _bump_test_function(grid: Grid, center: np.ndarray, radii: np.ndarray) -> np.ndarray:
    phi = np.ones(grid.shape)
    for j in range(grid.ndim):
        t = (grid.axes[j] - center[j]) / radii[j]
        prof = np.where(np.abs(t) < 1.0, np.cos(0.5 * np.pi * t) ** 2, 0.0)
        phi = phi * _axis_shaped(prof, j, grid.ndim)
    return phi


def weak_residual(
    u: GridFunction,
    flux: FluxField,
    trials: int = 20,
    seed: int = 0,
) -> float:
    """Max over test functions of |sum_i int A_i dphi_i| / ||Dphi||_1.

    Quadrature lives on edges: the i-th flux component is evaluated at the
    edge midpoint with the exact edge difference in slot i and averaged
    nodal differences elsewhere, which makes the pairing the exact adjoint
    of the discrete energy for the prototype flux.
    """
    grid = u.grid
    ndim = grid.ndim
    if flux.exponents.N != ndim:
        raise ValueError("flux dimension must match the grid")
    rng = np.random.default_rng(seed)
    nodal = [partial_difference(u, j).values for j in range(ndim)]

    def pairing(phi: np.ndarray) -> tuple[float, float]:
        total = 0.0
        dnorm = 0.0
        for i in range(ndim):
            h = grid.spacing[i]
            head = [slice(None)] * ndim
            tail = [slice(None)] * ndim
            head[i] = slice(1, None)
            tail[i] = slice(None, -1)
            s_u = np.diff(u.values, axis=i) / h
            s_phi = np.diff(phi, axis=i) / h
            u_mid = 0.5 * (u.values[tuple(head)] + u.values[tuple(tail)])
            g_mid = []
            for j in range(ndim):
                if j == i:
                    g_mid.append(s_u)
                else:
                    g_mid.append(
                        0.5 * (nodal[j][tuple(head)] + nodal[j][tuple(tail)])
                    )
            x_mid = []
            for j in range(ndim):
                ax = grid.axes[j]
                if j == i:
                    ax = 0.5 * (ax[1:] + ax[:-1])
                x_mid.append(_axis_shaped(ax, j, ndim))
            w = np.ones((1,) * ndim)
            for j, fac in enumerate(_edge_weight_factors(grid, i)):
                w = w * _axis_shaped(fac, j, ndim)
            a_i = flux.evaluator(tuple(x_mid), u_mid, tuple(g_mid))[i]
            total += float(np.sum(w * a_i * s_phi))
            dnorm += float(np.sum(w * np.abs(s_phi)))
        return total, dnorm

    interior = np.argwhere(grid.interior_mask())
    worst = 0.0
    for trial in range(trials):
        if trial % 2 == 0 and interior.size:
            node = tuple(interior[rng.integers(len(interior))])
            phi = _hat_test_function(grid, node)
        else:
            hw = np.asarray(grid.box.half_widths)
            center = np.asarray(grid.box.center) + (rng.uniform(-0.4, 0.4, ndim)) * hw
            radii = hw * rng.uniform(0.2, 0.55, ndim)
            lo_gap = center - radii - grid.box.lo
            hi_gap = grid.box.hi - center - radii
            shift = np.maximum(0.0, -lo_gap) - np.maximum(0.0, -hi_gap)
            center = center + shift
            phi = _bump_test_function(grid, center, radii)
        phi = phi.copy()
        phi[~grid.interior_mask()] = 0.0
        total, dnorm = pairing(phi)
        if dnorm > 0.0:
            worst = max(worst, abs(total) / dnorm)
    return worst


def structure_check(
    flux: FluxField,
    samples: int = 1000,
    seed: int = 0,
) -> InequalityReport:
    """Sampled verification of the coercivity and growth conditions.

    Margins are relative: zero means equality, negative means violation.
    Gradient components sweep signed magnitudes across several decades.
    """
    rng = np.random.default_rng(seed)
    p = flux.exponents
    n = p.N
    x = tuple(rng.uniform(-1.0, 1.0, samples) for _ in range(n))
    u = rng.normal(0.0, 2.0, samples)
    g = tuple(
        rng.choice([-1.0, 1.0], samples) * 10.0 ** rng.uniform(-3.0, 2.0, samples)
        for _ in range(n)
    )
    a = flux.evaluator(x, u, g)
    worst_coercivity = np.inf
    worst_growth = np.inf
    for i in range(n):
        gi = g[i]
        ai = np.broadcast_to(np.asarray(a[i], dtype=float), gi.shape)
        power = np.abs(gi) ** p.p[i]
        ref_c = flux.coercivity[i] * power
        margin_c = (ai * gi - ref_c) / np.maximum(ref_c, 1e-300)
        ref_g = flux.growth[i] * np.abs(gi) ** (p.p[i] - 1.0)
        margin_g = (ref_g - np.abs(ai)) / np.maximum(ref_g, 1e-300)
        worst_coercivity = min(worst_coercivity, float(np.min(margin_c)))
        worst_growth = min(worst_growth, float(np.min(margin_g)))
    ok = worst_coercivity >= -1e-12 and worst_growth >= -1e-12
    return InequalityReport(
        check_name="structure",
        anchor="structure-conditions",
        lhs=worst_coercivity,
        rhs=worst_growth,
        empirical_gamma=None,
        state="pass" if ok else "fail",
        details={
            "worst_coercivity_margin": worst_coercivity,
            "worst_growth_margin": worst_growth,
            "samples": samples,
        },
        seed=seed,
        grid_meta=None,
    )


# -- problem files -----------------------------------------------------------

_ALLOWED_CALLS = {"abs": np.abs, "sin": np.sin, "cos": np.cos}


def boundary_expression(text: str, ndim: int):
    """Compile a boundary expression over x1..xN.

    Grammar: +, -, *, ^ (or **), unary minus, abs, sin, cos, numeric
    literals, and the coordinates.  Anything else is rejected.
    """
    source = text.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"unparseable boundary expression: {text!r}") from exc

    names = {f"x{j + 1}" for j in range(ndim)}

    def check(node: ast.AST) -> None:
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and isinstance(
            node.op, (ast.Add, ast.Sub, ast.Mult, ast.Pow)
        ):
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(
            node.op, (ast.UAdd, ast.USub)
        ):
            check(node.operand)
        elif isinstance(node, ast.Call):
            if (
                not isinstance(node.func, ast.Name)
                or node.func.id not in _ALLOWED_CALLS
                or len(node.args) != 1
                or node.keywords
            ):
                raise ValueError(f"disallowed call in boundary expression: {text!r}")
            check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in names:
                raise ValueError(
                    f"unknown name {node.id!r} in boundary expression (use x1..x{ndim})"
                )
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ValueError(f"non-numeric literal in boundary expression: {text!r}")
        else:
            raise ValueError(f"disallowed syntax in boundary expression: {text!r}")

    check(tree)
    code = compile(tree, "<boundary>", "eval")

    def fn(*coords):
        env = {f"x{j + 1}": coords[j] for j in range(ndim)}
        env.update(_ALLOWED_CALLS)
        return eval(code, {"__builtins__": {}}, env)

    return fn


def problem_from_dict(cfg: dict) -> DirichletProblem:
    """Build a DirichletProblem from a parsed problem-definition mapping."""
    try:
        box = Box.from_dict(cfg["box"])
        grid = Grid(box, tuple(int(v) for v in cfg["nodes"]))
        p = ExponentVector(tuple(cfg["exponents"]))
        bdry = cfg["boundary"]
    except KeyError as exc:
        raise ValueError(f"problem definition missing field {exc}") from exc
    if isinstance(bdry, str):
        fn = boundary_expression(bdry, grid.ndim)
        boundary = GridFunction.from_callable(grid, fn)
    elif isinstance(bdry, dict) and "field_file" in bdry:
        from .lattice import load_field

        boundary = load_field(bdry["field_file"])
        if boundary.grid.shape != grid.shape:
            raise ValueError("boundary field file does not match the grid")
    else:
        raise ValueError("boundary must be an expression string or a field_file block")
    eps = cfg.get("epsilon")
    return DirichletProblem(
        grid=grid,
        boundary=boundary,
        exponents=p,
        epsilon=None if eps is None else float(eps),
        tol=float(cfg.get("tol", 1e-9)),
        max_iter=int(cfg.get("max_iter", 100_000)),
    )
