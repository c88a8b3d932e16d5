"""Shared fixtures.

The expensive objects (the equilateral eps ladder at n=256 and the default
pipeline run that produces it) are session-scoped and built once.
"""
from __future__ import annotations

import numpy as np
import pytest

from oracles import SCOREBOARD

from tripoint.ansatz import build_boundary_map
from tripoint.geodesics import distance_table
from tripoint.heteroclinic import solve_connection
from tripoint.junction import solve_angles
from tripoint.pipeline import Pipeline, RunConfig
from tripoint.potential import build_product_potential, build_two_well_section, equilateral_wells
from tripoint.solver import make_grid, solve_steady

LADDER = (0.2, 0.1, 0.05)
FINE_EPS = 0.025            # extra rung for the two-scale core comparison
RESOLVED_N = 512            # keeps h/eps <= 0.08 at eps = 0.05
ASYM_WELLS = ((0.0, 1.0), (-1.0, -0.4), (0.8, -0.6))


@pytest.fixture(scope="session")
def product():
    return build_product_potential(*equilateral_wells())


@pytest.fixture(scope="session")
def section():
    return build_two_well_section()


@pytest.fixture(scope="session")
def table(product):
    return distance_table(product)


@pytest.fixture(scope="session")
def angles(table):
    return solve_angles(table)


@pytest.fixture(scope="session")
def tanh_profile(section):
    return solve_connection(section, 1, 2, L=10.0, n=2001)


@pytest.fixture(scope="session")
def bmap(product, angles, table):
    return build_boundary_map(product, angles)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The default-config pipeline run; its solutions double as the eps ladder."""
    out = tmp_path_factory.mktemp("default-run")
    cfg = RunConfig(out=str(out))
    p = Pipeline(cfg, out)
    p.report()
    p.write_manifest()
    return p


@pytest.fixture(scope="session")
def ladder(default_run):
    """``{eps: Field2D}`` for the default ladder plus ``FINE_EPS``, with solve reports."""
    p = default_run
    fields = dict(p.state["solutions"])
    bm, pot = p.state["bmap"], p.state["potential"]
    _, f0 = make_grid(p.cfg.n, FINE_EPS, bm)
    rep, u, _ = solve_steady(f0, pot, tol=p.cfg.tol)
    fields[FINE_EPS] = u
    return {"root": p.root, "fields": fields, "fine_report": rep, "bmap": bm, "potential": pot,
            "angles": p.state["angles"], "table": p.state["table"]}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def resolved_last(ladder):
    """The smallest default rung re-solved at ``RESOLVED_N`` (about half an hour on one core)."""
    eps = min(LADDER)
    _, f0 = make_grid(RESOLVED_N, eps, ladder["bmap"])
    rep, u, _ = solve_steady(f0, ladder["potential"])
    return u


def pytest_terminal_summary(terminalreporter):
    if not SCOREBOARD:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(SCOREBOARD):
        ok, detail = SCOREBOARD[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
