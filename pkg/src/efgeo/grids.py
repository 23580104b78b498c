"""Discretization substrate: tensor-product grids and finite-difference calculus.

Fields are plain numpy arrays whose leading axes are the grid axes; tensor or
electronic component axes trail.  All derivative operators are dense matrices
acting along one grid axis.

Two stencil modes exist on clamped axes:

* ``"field"``  - one-sided stencils of the same accuracy at the boundary;
  used for geometric fields (metrics, potentials, conditional amplitudes),
  which do not vanish at the box walls.
* ``"wave"``   - centered stencils with zero extension beyond the boundary
  (Dirichlet); used for wavefunctions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np
import scipy.linalg

PERIODIC = "periodic"
CLAMPED = "clamped"

MIN_POINTS = 5


@dataclass(frozen=True)
class Axis:
    n: int
    lo: float
    hi: float
    boundary: str = CLAMPED

    def __post_init__(self) -> None:
        if self.n < MIN_POINTS:
            raise ValueError(f"axis needs at least {MIN_POINTS} points, got {self.n}")
        if not self.hi > self.lo:
            raise ValueError("axis requires hi > lo")
        if self.boundary not in (PERIODIC, CLAMPED):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def spacing(self) -> float:
        if self.boundary == PERIODIC:
            return (self.hi - self.lo) / self.n
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def coords(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.n)

    @property
    def quad_weights(self) -> np.ndarray:
        # rectangle rule on periodic axes, trapezoid on clamped ones
        w = np.full(self.n, self.spacing)
        if self.boundary == CLAMPED:
            w[0] *= 0.5
            w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (dim,)``."""
        mesh = np.meshgrid(*[ax.coords for ax in self.axes], indexing="ij")
        return np.stack(mesh, axis=-1)

    def quad_weights(self) -> np.ndarray:
        """Bare quadrature weights (no metric factor), shape ``grid.shape``."""
        out = np.ones(())
        for ax in self.axes:
            out = np.multiply.outer(out, ax.quad_weights)
        return out.reshape(self.shape)


def fd_weights(x: np.ndarray, x0: float, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at ``x0`` on nodes ``x``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _central_offsets(deriv: int, order: int) -> np.ndarray:
    # centered stencil: 2*floor((deriv+1)/2) - 1 + order points
    npts = 2 * ((deriv + 1) // 2) - 1 + order
    half = (npts - 1) // 2
    return np.arange(-half, half + 1)


@lru_cache(maxsize=None)
def _derivative_matrix_cached(
    n: int, spacing: float, boundary: str, deriv: int, order: int, mode: str
) -> np.ndarray:
    offsets = _central_offsets(deriv, order)
    w = fd_weights(offsets * spacing, 0.0, deriv)
    D = np.zeros((n, n))
    if boundary == PERIODIC:
        for i in range(n):
            D[i, (i + offsets) % n] += w
        return D
    if mode == "wave":
        # zero extension: drop out-of-range entries of the centered stencil
        for i in range(n):
            for off, wk in zip(offsets, w):
                j = i + off
                if 0 <= j < n:
                    D[i, j] += wk
        return D
    if mode != "field":
        raise ValueError(f"unknown stencil mode {mode!r}")
    npts = len(offsets)
    if n < npts:
        raise ValueError(f"axis too short ({n}) for stencil width {npts}")
    half = (npts - 1) // 2
    x = spacing * np.arange(n)
    for i in range(n):
        lo = min(max(i - half, 0), n - npts)
        nodes = np.arange(lo, lo + npts)
        D[i, nodes] = fd_weights(x[nodes], x[i], deriv)
    return D


def derivative_matrix(axis: Axis, deriv: int = 1, order: int = 4, mode: str = "field") -> np.ndarray:
    """Dense differentiation matrix along one axis."""
    if order not in (2, 4, 6):
        raise ValueError("finite-difference order must be one of {2, 4, 6}")
    if deriv not in (1, 2):
        raise ValueError("only first and second derivatives are provided")
    return _derivative_matrix_cached(axis.n, axis.spacing, axis.boundary, deriv, order, mode)


def apply_along_axis(mat: np.ndarray, values: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    out = np.tensordot(mat, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def partial_derivative(
    grid: Grid,
    values: np.ndarray,
    axis: int,
    deriv: int = 1,
    order: int = 4,
    mode: str = "field",
) -> np.ndarray:
    """Finite-difference derivative of a field along a grid axis."""
    if not 0 <= axis < grid.dim:
        raise IndexError(f"axis {axis} out of range for dim {grid.dim}")
    D = derivative_matrix(grid.axes[axis], deriv=deriv, order=order, mode=mode)
    return apply_along_axis(D, values, axis)


def gradient(grid: Grid, values: np.ndarray, order: int = 4, mode: str = "field") -> np.ndarray:
    """All first derivatives; the new covector axis is inserted after the grid axes.

    For input of shape ``grid.shape + comps`` the output has shape
    ``grid.shape + (dim,) + comps``.
    """
    parts = [partial_derivative(grid, values, mu, 1, order, mode) for mu in range(grid.dim)]
    return np.stack(parts, axis=grid.dim)


def hessian(grid: Grid, values: np.ndarray, order: int = 4, mode: str = "field") -> np.ndarray:
    """All second derivatives; two new axes (mu, nu) inserted after the grid axes.

    Diagonal entries use the dedicated second-derivative stencil (not the first
    derivative applied twice), so they match operators assembled the same way;
    mixed entries chain the two first derivatives.
    """
    d = grid.dim
    rows = []
    for mu in range(d):
        row = []
        for nu in range(d):
            if mu == nu:
                row.append(partial_derivative(grid, values, mu, 2, order, mode))
            else:
                tmp = partial_derivative(grid, values, nu, 1, order, mode)
                row.append(partial_derivative(grid, tmp, mu, 1, order, mode))
        rows.append(np.stack(row, axis=d))
    return np.stack(rows, axis=d)


def integrate(grid: Grid, values: np.ndarray, weight: np.ndarray | None = None) -> complex:
    """Quadrature of a scalar field (optionally against a node-wise weight)."""
    if values.shape[: grid.dim] != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    w = grid.quad_weights()
    if weight is not None:
        if weight.shape != grid.shape:
            raise ValueError("weight shape does not match grid")
        w = w * weight
    total = np.sum(values * w)
    return complex(total) if np.iscomplexobj(values) else float(total.real)


def kron_operator(grid: Grid, axis_ops: dict[int, np.ndarray]) -> np.ndarray:
    """Kronecker product over grid axes, identity on axes absent from ``axis_ops``."""
    factors = []
    for i, ax in enumerate(grid.axes):
        factors.append(axis_ops.get(i, np.eye(ax.n)))
    return reduce(np.kron, factors)


def fix_phase(vec: np.ndarray) -> np.ndarray:
    """Deterministic phase convention: largest-magnitude entry real positive."""
    idx = int(np.argmax(np.abs(vec)))
    pivot = vec[idx]
    if np.abs(pivot) == 0:
        return vec
    return vec * (np.abs(pivot) / pivot)


def hermitian_eigensolve(matrix: np.ndarray, k: int, rtol: float = 1e-10):
    """k lowest eigenpairs of a dense Hermitian matrix.

    Eigenvalues ascend; eigenvectors are orthonormal and phase-fixed by
    :func:`fix_phase`.  Raises if the input is not Hermitian within ``rtol``
    relative asymmetry.
    """
    matrix = np.asarray(matrix)
    scale = np.linalg.norm(matrix)
    asym = np.linalg.norm(matrix - matrix.conj().T)
    if scale > 0 and asym > rtol * scale:
        raise ValueError(f"matrix is not Hermitian: relative asymmetry {asym / scale:.3e}")
    herm = 0.5 * (matrix + matrix.conj().T)
    vals, vecs = scipy.linalg.eigh(herm, subset_by_index=(0, k - 1))
    vecs = np.stack([fix_phase(vecs[:, j]) for j in range(k)], axis=1)
    return vals, vecs


def unitary_step(H: np.ndarray, psi: np.ndarray, dt: float) -> np.ndarray:
    """One Cayley (implicit midpoint) step: (1 + iH dt/2) psi' = (1 - iH dt/2) psi."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = H.shape[0]
    eye = np.eye(n)
    rhs = (eye - 0.5j * dt * H) @ psi
    return np.linalg.solve(eye + 0.5j * dt * H, rhs)


class CayleyPropagator:
    """Pre-factorized Cayley stepper for repeated steps with a fixed H."""

    def __init__(self, H: np.ndarray, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        n = H.shape[0]
        eye = np.eye(n)
        self._minus = eye - 0.5j * dt * H
        self._lu = scipy.linalg.lu_factor(eye + 0.5j * dt * H)
        self.dt = dt

    def step(self, psi: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, self._minus @ psi)
