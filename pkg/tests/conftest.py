"""Shared solved-instance corpus.

Session scope: each problem is solved once and reused by the module tests
and the acceptance gate.  Everything is seeded and deterministic.
"""

from __future__ import annotations

import numpy as np
import pytest

from anisolab import (
    Box,
    DirichletProblem,
    ExponentVector,
    Grid,
    GridFunction,
    solve_dirichlet,
)


def solve_instance(nodes, p, fn, half_width=1.0, center=None, epsilon=None):
    ndim = len(nodes)
    if center is None:
        center = (0.0,) * ndim
    grid = Grid(Box.cube(center, half_width), tuple(nodes))
    boundary = GridFunction.from_callable(grid, fn)
    problem = DirichletProblem(
        grid, boundary, ExponentVector(p), epsilon=epsilon
    )
    report = solve_dirichlet(problem)
    assert report.converged, f"corpus solve failed for p={p}"
    return problem, report


# label, exponents, boundary callable; pmin kept >= 1.5 so every instance
# solves in a handful of Newton steps
_CORPUS_2D = [
    ("iso-harmonic", (2.0, 2.0), lambda x, y: x * x - y * y),
    ("iso-affine", (2.0, 2.0), lambda x, y: 0.4 * x + 0.6 * y + 1.0),
    ("mild-aniso", (1.9, 2.0), lambda x, y: 0.5 * x + 0.3 * np.sin(2 * y) + 0.1 * x * y + 1.5),
    ("wide-aniso", (1.5, 2.0), lambda x, y: x + 0.5 * np.sin(2 * y) + 0.2 * x * y),
    ("degenerate-kink", (2.5, 2.0), lambda x, y: np.abs(x) + 0.3 * np.cos(y)),
    ("degenerate-smooth", (3.0, 2.0), lambda x, y: np.sin(x) * np.cos(y)),
    ("both-sides", (1.8, 2.2), lambda x, y: x * y + 0.2 * np.sin(3 * x)),
    ("steep-axis", (2.0, 3.0), lambda x, y: x * x - y * y + 0.5 * y),
    ("iso-low", (1.7, 1.7), lambda x, y: 0.3 * x - 0.7 * y + 0.2 * np.sin(x * y) + 0.1),
    ("mixed-order", (2.2, 1.6), lambda x, y: np.cos(2 * x) + 0.5 * y),
]


@pytest.fixture(scope="session")
def corpus_2d():
    """Ten solved 33x33 instances plus one-refinement companions."""
    out = []
    for label, p, fn in _CORPUS_2D:
        problem, report = solve_instance((33, 33), p, fn)
        fine_problem, fine_report = solve_instance((65, 65), p, fn)
        out.append(
            {
                "label": label,
                "p": ExponentVector(p),
                "problem": problem,
                "report": report,
                "fine_problem": fine_problem,
                "fine_report": fine_report,
            }
        )
    return out


@pytest.fixture(scope="session")
def corpus_3d():
    """Two solved 17^3 instances with pbar < 3."""
    specs = [
        ("iso-3d", (2.0, 2.0, 2.0), lambda x, y, z: x * y + 0.3 * z * z - 0.2 * y),
        ("aniso-3d", (1.8, 2.0, 2.2), lambda x, y, z: 0.4 * x + 0.3 * np.sin(2 * y) + 0.2 * z),
    ]
    out = []
    for label, p, fn in specs:
        problem, report = solve_instance((17, 17, 17), p, fn)
        out.append(
            {"label": label, "p": ExponentVector(p), "problem": problem, "report": report}
        )
    return out


@pytest.fixture(scope="session")
def holder_iso():
    """Smooth p=(2,2) instance on 129^2 for the decay experiment."""
    problem, report = solve_instance(
        (129, 129), (2.0, 2.0), lambda x, y: x * y + 0.2 * np.sin(3 * x)
    )
    return {"problem": problem, "report": report, "p": problem.exponents}


@pytest.fixture(scope="session")
def holder_aniso():
    """p=(1.95,2) instance on 129^2; spread 0.05 keeps q=17 admissible."""
    problem, report = solve_instance(
        (129, 129), (1.95, 2.0), lambda x, y: x * y + 0.2 * np.sin(3 * x)
    )
    return {"problem": problem, "report": report, "p": problem.exponents}


@pytest.fixture(scope="session")
def spread_instance():
    """p=(2,2.01) on 65^2 for the measure-shrink q sweep."""
    problem, report = solve_instance(
        (65, 65), (2.0, 2.01), lambda x, y: 0.6 * x + 0.3 * np.sin(2 * y) + 0.1 * x * y
    )
    return {"problem": problem, "report": report, "p": problem.exponents}


@pytest.fixture(scope="session")
def critical_instance():
    """p=(4/3,4/3,4) on 21^3: pbar=12/7, p_*=4=pmax (critical branch)."""
    problem, report = solve_instance(
        (21, 21, 21),
        (4.0 / 3.0, 4.0 / 3.0, 4.0),
        lambda x, y, z: 0.3 * x + 0.2 * np.sin(2 * y) + 0.1 * z * z + 0.6,
    )
    return {"problem": problem, "report": report, "p": problem.exponents}


@pytest.fixture(scope="session")
def subcritical_corpus(corpus_2d, corpus_3d):
    """Solved instances with pbar < N (so p_* exists) and pmax < p_*."""
    picked = [e for e in corpus_2d if e["p"].pbar < e["p"].N]
    return picked + list(corpus_3d)
