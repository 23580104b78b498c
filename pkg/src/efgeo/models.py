"""Built-in model systems and the model JSON loader.

A model bundles a grid, a mass metric (optionally defined through a chart),
and a clamped-nuclei electronic Hamiltonian h_bo(Q) given as an n x n matrix
of expressions.  Built-ins are defined as plain JSON-able dictionaries and go
through the same loader as user files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expressions, geometry, grids
from .errors import SpecError

# inverse of Qbar = Q^3 + 2Q by Cardano (the cubic is strictly monotonic,
# so the discriminant shift q1^2/4 + 8/27 is always positive)
_CUBIC_INV = (
    "((q1/2 + sqrt(q1^2/4 + 8/27))^(1/3)"
    " - (2/3)*(q1/2 + sqrt(q1^2/4 + 8/27))^(-1/3))"
)

# avoided-crossing parameters: shifted parabolas, constant diabatic coupling c
# opening a gap 2c at the crossing so the ground-state density traverses it
_AC = {"k": 1.0, "a": 1.0, "delta": 0.0, "c": 0.3, "m": 20.0, "lo": -2.5, "hi": 2.5}


def _builtin_specs() -> dict[str, dict]:
    ac = _AC
    ac_h = [
        [f"0.5*{ac['k']}*(q1 - {ac['a']})^2", f"{ac['c']}"],
        [f"{ac['c']}", f"0.5*{ac['k']}*(q1 + {ac['a']})^2 + {ac['delta']}"],
    ]
    qb = _CUBIC_INV
    ac_h_barred = [
        [f"0.5*{ac['k']}*({qb} - {ac['a']})^2", f"{ac['c']}"],
        [f"{ac['c']}", f"0.5*{ac['k']}*({qb} + {ac['a']})^2 + {ac['delta']}"],
    ]
    lo_b = _AC["lo"] ** 3 + 2 * _AC["lo"]
    hi_b = _AC["hi"] ** 3 + 2 * _AC["hi"]
    return {
        "free-ring": {
            "name": "free-ring",
            "n_levels": 1,
            "grid": {"axes": [{"n": 128, "lo": 0.0, "hi": 2 * np.pi, "boundary": "periodic"}]},
            "geometry": {"dim": 1, "metric_inverse": [["1.0"]], "j0": 1.0},
            "h_bo": [["0"]],
            "params": {"mass": 1.0},
        },
        "avoided-crossing": {
            "name": "avoided-crossing",
            "n_levels": 2,
            "grid": {"axes": [{"n": 201, "lo": ac["lo"], "hi": ac["hi"], "boundary": "clamped"}]},
            "geometry": {"dim": 1, "metric_inverse": [[f"1/{ac['m']}"]], "j0": 1.0},
            "h_bo": ac_h,
            "params": dict(ac),
        },
        "jahn-teller-ring": {
            "name": "jahn-teller-ring",
            "n_levels": 2,
            "grid": {"axes": [{"n": 128, "lo": 0.0, "hi": 2 * np.pi, "boundary": "periodic"}]},
            # angle theta at frozen radius rho0: M_11 = m*rho0^2
            "geometry": {"dim": 1, "metric_inverse": [["1/10.0"]], "j0": 1.0},
            # kappa*rho0*(cos(theta)*sigma_x + sin(theta)*sigma_z)
            "h_bo": [["sin(q1)", "cos(q1)"], ["cos(q1)", "-sin(q1)"]],
            "params": {"kappa_rho0": 1.0, "mass_rho0_sq": 10.0},
        },
        "curvilinear-remap": {
            "name": "curvilinear-remap",
            "n_levels": 2,
            "grid": {"axes": [{"n": 201, "lo": lo_b, "hi": hi_b, "boundary": "clamped"}]},
            "geometry": {
                "dim": 1,
                "metric_inverse": [[f"(3*{qb}^2 + 2)^2 / {ac['m']}"]],
                "j0": 1.0,
                "forward": ["q1^3 + 2*q1"],
                "inverse": [qb],
                "jacobian": [["3*q1^2 + 2"]],
                "hessian": [[["6*q1"]]],
            },
            "h_bo": ac_h_barred,
            "params": dict(ac, chart="Qbar = Q^3 + 2Q", base="avoided-crossing"),
        },
        "coupled-harmonic": {
            "name": "coupled-harmonic",
            "n_levels": 2,
            "grid": {"axes": [{"n": 201, "lo": -6.0, "hi": 6.0, "boundary": "clamped"}]},
            "geometry": {"dim": 1, "metric_inverse": [["1.0"]], "j0": 1.0},
            # 2-level truncation of a bilinearly coupled oscillator:
            # nuclear freq 1, electronic freq 2, bilinear strength lambda=0.1
            "h_bo": [
                ["0.5*q1^2 + 1.0", "0.05*q1"],
                ["0.05*q1", "0.5*q1^2 + 3.0"],
            ],
            "params": {"omega_n": 1.0, "omega_e": 2.0, "lambda": 0.1},
        },
    }


BUILTIN_NAMES = tuple(sorted(_builtin_specs().keys()))


@dataclass(frozen=True)
class ModelSpec:
    name: str
    n_levels: int
    grid: grids.Grid
    metric: geometry.MassMetricField
    chart: geometry.CoordinateChart | None
    h_bo: Callable[[np.ndarray], np.ndarray]
    raw: dict = field(repr=False, default_factory=dict)

    def h_bo_on_grid(self) -> np.ndarray:
        """h_bo sampled at the grid nodes, shape grid.shape + (n, n)."""
        vals = self.h_bo(self.grid.points())
        return 0.5 * (vals + np.swapaxes(vals, -1, -2))

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2)


def _parse_grid(data: dict) -> grids.Grid:
    try:
        axes = tuple(
            grids.Axis(
                n=int(ax["n"]),
                lo=float(ax["lo"]),
                hi=float(ax["hi"]),
                boundary=str(ax.get("boundary", "clamped")),
            )
            for ax in data["axes"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid grid spec: {exc}") from exc
    return grids.Grid(axes)


def _check_hermitian_exprs(h_bo: list[list], func, dim: int, name: str) -> None:
    n = len(h_bo)
    if any(len(row) != n for row in h_bo):
        raise SpecError(f"h_bo of model {name!r} is not square")
    textual = all(
        str(h_bo[i][j]).replace(" ", "") == str(h_bo[j][i]).replace(" ", "")
        for i in range(n)
        for j in range(n)
    )
    if textual:
        return
    # expressions differ textually; verify symmetry numerically at seeded points
    rng = np.random.default_rng(0)
    Q = rng.uniform(-1.0, 1.0, size=(16, dim))
    vals = func(Q)
    asym = np.max(np.abs(vals - np.swapaxes(vals, -1, -2)))
    if asym > 1e-12 * max(1.0, np.max(np.abs(vals))):
        raise SpecError(f"h_bo of model {name!r} is not Hermitian (asymmetry {asym:.3e})")


def load_model(source, fd_order: int = 4) -> ModelSpec:
    """Instantiate a model from a dict, a JSON string, or a file path."""
    if isinstance(source, dict):
        data = source
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        data = json.loads(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    for key in ("name", "n_levels", "grid", "geometry", "h_bo"):
        if key not in data:
            raise SpecError(f"model spec missing required field {key!r}")
    grid = _parse_grid(data["grid"])
    geo_spec = geometry.parse_geometry_spec(json.dumps(data["geometry"]), fd_order=fd_order)
    if geo_spec.dim != grid.dim:
        raise SpecError("geometry dim does not match grid dim")
    n = int(data["n_levels"])
    h_exprs = data["h_bo"]
    if len(h_exprs) != n:
        raise SpecError(f"h_bo must be {n}x{n}")
    h_func = expressions.compile_matrix(h_exprs, grid.dim)
    _check_hermitian_exprs(h_exprs, h_func, grid.dim, data["name"])
    return ModelSpec(
        name=str(data["name"]),
        n_levels=n,
        grid=grid,
        metric=geo_spec.metric,
        chart=geo_spec.chart,
        h_bo=h_func,
        raw=data,
    )


def builtin(name: str, overrides: dict | None = None, fd_order: int = 4) -> ModelSpec:
    """Fully parameterized built-in model spec.

    ``overrides`` may replace the grid axes (e.g. for refinement studies).
    """
    specs = _builtin_specs()
    if name not in specs:
        raise SpecError(f"unknown builtin {name!r}; choose from {BUILTIN_NAMES}")
    data = json.loads(json.dumps(specs[name]))  # deep copy, JSON-clean
    if overrides:
        for key, val in overrides.items():
            if key == "n_nodes":
                for ax in data["grid"]["axes"]:
                    ax["n"] = int(val)
            else:
                data[key] = val
    return load_model(data, fd_order=fd_order)


def builtin_with_nodes(name: str, n_nodes: int, fd_order: int = 4) -> ModelSpec:
    return builtin(name, overrides={"n_nodes": n_nodes}, fd_order=fd_order)
