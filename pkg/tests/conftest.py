"""Shared fixtures.  Heavy pipelines are session-scoped so the eigensolves at
201 and 401 nodes run once for the whole suite."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from efgeo import ef_geometry, factorization, models, residuals, solver


@dataclass
class Pipeline:
    model: object
    op: object
    state: object
    fact: object
    geom: object
    report: object
    h_bo: object


def run_pipeline(name: str, n_nodes: int | None = None, fd_order: int = 4) -> Pipeline:
    overrides = {"n_nodes": n_nodes} if n_nodes else None
    model = models.builtin(name, overrides, fd_order=fd_order)
    op = solver.assemble(model, fd_order=fd_order)
    state = solver.solve_eigenstates(op, 1)[0]
    fact = factorization.factorize(model.grid, state.psi)
    h_bo = model.h_bo_on_grid()
    geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, fact.phi,
                                           h_bo, fd_order=fd_order)
    report = residuals.evaluate(model.grid, model.metric, fact, geom, h_bo,
                                state.energy, fd_order=fd_order)
    return Pipeline(model=model, op=op, state=state, fact=fact, geom=geom,
                    report=report, h_bo=h_bo)


@pytest.fixture(scope="session")
def ac201() -> Pipeline:
    """Two-level crossing model, 201 nodes, 4th order: the workhorse case."""
    return run_pipeline("avoided-crossing")


@pytest.fixture(scope="session")
def ac101() -> Pipeline:
    return run_pipeline("avoided-crossing", n_nodes=101)


@pytest.fixture(scope="session")
def ac401() -> Pipeline:
    return run_pipeline("avoided-crossing", n_nodes=401)


@pytest.fixture(scope="session")
def remap201() -> Pipeline:
    return run_pipeline("curvilinear-remap")
