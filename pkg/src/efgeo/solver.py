"""Full two-component solver: the exactness oracle.

Assembles H = T_n (x) 1 + h_bo(Q) on the product of the nuclear grid and the
n-level electronic space, with the Podolsky kinetic operator

    T_n = 1/2 M^{-1/2} P_mu M^{1/2} M^{mu nu} P_nu
        = -1/2 (M^{mu nu} d_mu d_nu + b^nu d_nu),

where the divergence coefficient b comes from the same metric-derivative
bundle as the Pi symbols (see geometry.divergence_coefficient).  The operator
is symmetrized in the volume-weighted inner product before any eigensolve or
propagation; the raw asymmetry is reported, never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import geometry, grids
from .grids import Grid
from .models import ModelSpec


@dataclass
class FullState:
    """Psi over (grid nodes x electronic levels), shape grid.shape + (n,)."""

    psi: np.ndarray
    energy: float | None = None


def build_kinetic_operator(grid: Grid, metric: geometry.MassMetricField, fd_order: int = 4,
                           mode: str = "wave") -> np.ndarray:
    """Dense Podolsky kinetic matrix acting on raveled nuclear scalar fields."""
    Q = grid.points()
    minv = metric.inverse_mass_checked(Q).reshape(grid.size, grid.dim, grid.dim)
    b = geometry.divergence_coefficient(metric, Q).reshape(grid.size, grid.dim)

    T = np.zeros((grid.size, grid.size))
    for mu in range(grid.dim):
        for nu in range(grid.dim):
            if mu == nu:
                D2 = grids.kron_operator(
                    grid, {mu: grids.derivative_matrix(grid.axes[mu], 2, fd_order, mode)}
                )
            elif mu < nu:
                D2 = grids.kron_operator(
                    grid,
                    {
                        mu: grids.derivative_matrix(grid.axes[mu], 1, fd_order, mode),
                        nu: grids.derivative_matrix(grid.axes[nu], 1, fd_order, mode),
                    },
                )
            else:
                continue
            coeff = minv[:, mu, nu] if mu == nu else 2.0 * minv[:, mu, nu]
            T += -0.5 * coeff[:, None] * D2
    for nu in range(grid.dim):
        D1 = grids.kron_operator(
            grid, {nu: grids.derivative_matrix(grid.axes[nu], 1, fd_order, mode)}
        )
        T += -0.5 * b[:, nu][:, None] * D1
    return T


def wall_nodes(grid: Grid) -> np.ndarray:
    """Boolean grid mask of endpoint nodes on clamped axes (Dirichlet walls)."""
    wall = np.zeros(grid.shape, dtype=bool)
    for ax_i, ax in enumerate(grid.axes):
        if ax.boundary == grids.CLAMPED:
            sl = [slice(None)] * grid.dim
            sl[ax_i] = 0
            wall[tuple(sl)] = True
            sl[ax_i] = -1
            wall[tuple(sl)] = True
    return wall


@dataclass
class AssembledOperator:
    """Full Hamiltonian with its volume-weighted symmetrization.

    Endpoint nodes of clamped axes are pinned to zero (hard Dirichlet wall):
    the spectral problem and the propagation act on the interior subspace and
    states are re-embedded with exact zeros at the walls.  Without the pinning
    the wall position is only resolved to first order in the spacing.
    """

    grid: Grid
    n_levels: int
    metric: geometry.MassMetricField
    matrix: np.ndarray  # raw H on raveled (node, level) vectors
    weights: np.ndarray  # node weights of the physical inner product (grid shape)
    asymmetry: float  # relative asymmetry of the weighted operator

    _sym: np.ndarray | None = None
    _sqrt_w: np.ndarray | None = None
    _keep: np.ndarray | None = None

    def __post_init__(self) -> None:
        keep = np.repeat(~wall_nodes(self.grid).ravel(), self.n_levels)
        s = np.sqrt(np.repeat(self.weights.ravel(), self.n_levels))[keep]
        H = self.matrix[np.ix_(keep, keep)]
        B = (s[:, None] * H) / s[None, :]
        scale = np.linalg.norm(B)
        self.asymmetry = float(np.linalg.norm(B - B.conj().T) / scale) if scale else 0.0
        self._sym = 0.5 * (B + B.conj().T)
        self._sqrt_w = s
        self._keep = keep

    @property
    def weighted_symmetric(self) -> np.ndarray:
        return self._sym

    def to_weighted(self, psi: np.ndarray) -> np.ndarray:
        return self._sqrt_w * psi.reshape(-1)[self._keep]

    def from_weighted(self, u: np.ndarray) -> np.ndarray:
        full = np.zeros(self.grid.size * self.n_levels, dtype=u.dtype)
        full[self._keep] = u / self._sqrt_w
        return full.reshape(self.grid.shape + (self.n_levels,))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Action of the symmetrized Hamiltonian on a state array."""
        return self.from_weighted(self._sym @ self.to_weighted(psi))

    def expectation(self, psi: np.ndarray) -> float:
        u = self.to_weighted(psi)
        return float(np.real(np.vdot(u, self._sym @ u) / np.vdot(u, u)))

    def norm(self, psi: np.ndarray) -> float:
        return float(np.linalg.norm(self.to_weighted(psi)))


def full_weights(grid: Grid, metric: geometry.MassMetricField) -> np.ndarray:
    """Uniform node weights x volume weight sqrt(det M) J0 per node.

    Uniform (rectangle) node weights, not trapezoid ones: the zero-extension
    difference operators are self-adjoint under the uniform weight, so the
    weighted symmetrization stays free of artificial edge rows.  For states
    that vanish at clamped edges the two quadratures agree to boundary-value
    precision.
    """
    cell = float(np.prod([ax.spacing for ax in grid.axes]))
    return np.full(grid.shape, cell) * metric.volume_weight(grid.points())


def build_full_hamiltonian(grid: Grid, metric: geometry.MassMetricField, h_bo: np.ndarray,
                           fd_order: int = 4) -> AssembledOperator:
    """(T_n x 1_n) + block-diagonal h_bo(Q), with weighted symmetrization data."""
    n = h_bo.shape[-1]
    h_flat = h_bo.reshape(grid.size, n, n)
    herm_err = np.max(np.abs(h_flat - np.swapaxes(h_flat, -1, -2).conj()))
    if herm_err > 1e-12 * max(1.0, np.max(np.abs(h_flat))):
        raise ValueError(f"h_bo is not Hermitian node-wise (max asymmetry {herm_err:.3e})")
    T = build_kinetic_operator(grid, metric, fd_order=fd_order)
    H = np.kron(T, np.eye(n)).astype(h_flat.dtype, copy=False)
    idx = np.arange(grid.size) * n
    for i in range(n):
        for j in range(n):
            H[idx + i, idx + j] += h_flat[:, i, j]
    return AssembledOperator(
        grid=grid,
        n_levels=n,
        metric=metric,
        matrix=H,
        weights=full_weights(grid, metric),
        asymmetry=0.0,
    )


def assemble(model: ModelSpec, fd_order: int = 4) -> AssembledOperator:
    return build_full_hamiltonian(model.grid, model.metric, model.h_bo_on_grid(), fd_order)


def solve_eigenstates(op: AssembledOperator, k: int) -> list[FullState]:
    """k lowest eigenstates, normalized in the weighted inner product."""
    vals, vecs = scipy.linalg.eigh(op.weighted_symmetric, subset_by_index=(0, k - 1))
    states = []
    for j in range(k):
        u = grids.fix_phase(vecs[:, j])
        states.append(FullState(psi=op.from_weighted(u), energy=float(vals[j])))
    return states


def propagate(op: AssembledOperator, psi0: np.ndarray, dt: float, steps: int,
              stride: int = 1) -> list[tuple[float, FullState]]:
    """Cayley time stepping in the weighted space; snapshots every ``stride`` steps."""
    u = op.to_weighted(np.asarray(psi0, dtype=complex))
    stepper = grids.CayleyPropagator(op.weighted_symmetric, dt)
    out = [(0.0, FullState(psi=op.from_weighted(u.copy())))]
    for s in range(1, steps + 1):
        u = stepper.step(u)
        if s % stride == 0 or s == steps:
            out.append((s * dt, FullState(psi=op.from_weighted(u.copy()))))
    return out


def kinetic_energy_expectation(grid: Grid, metric: geometry.MassMetricField, psi: np.ndarray,
                               fd_order: int = 4) -> float:
    """Gradient-form kinetic energy 1/2 int w d_mu(Psi*) M^{mu nu} d_nu(Psi)."""
    minv = metric.inverse_mass_checked(grid.points())
    grad = grids.gradient(grid, psi, order=fd_order, mode="wave")  # grid + (d, n)
    dens = np.einsum("...mi,...mn,...ni->...", grad.conj(), minv, grad)
    val = grids.integrate(grid, dens, weight=metric.volume_weight(grid.points()))
    return 0.5 * float(np.real(val))


def normalize(grid: Grid, metric: geometry.MassMetricField, psi: np.ndarray) -> np.ndarray:
    w = full_weights(grid, metric)
    norm2 = np.sum(w * np.sum(np.abs(psi) ** 2, axis=-1))
    return psi / np.sqrt(norm2)
