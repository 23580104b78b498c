"""Configuration-space geometry: charts, mass metric fields and Pi symbols.

Everything here is pointwise: charts and metrics are smooth callables and all
metric derivatives are taken by small-step central finite differences on the
lower-index mass tensor.  Quantities algebraically derived from those
derivatives (inverse-metric derivatives, log-det derivatives, divergence
coefficients) use exact matrix identities so that paired evaluations of the
same operator agree to roundoff rather than truncation.

Units: hbar = 1 throughout the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expressions
from .errors import ChartDegeneracyError, MetricDegeneracyError, SpecError

# relative positive-definiteness floor: smallest eigenvalue must exceed
# EIG_FLOOR * largest, otherwise the metric is treated as degenerate
EIG_FLOOR = 1e-12

FD_STEP = 1e-3


@dataclass(frozen=True)
class CoordinateChart:
    """Smooth invertible map Q -> Qbar with analytically supplied derivatives."""

    dim: int
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]  # d Qbar^mu / d Q^nu
    hessian: Callable[[np.ndarray], np.ndarray]  # d^2 Qbar^mu / dQ^nu dQ^lam

    def jacobian_checked(self, Q: np.ndarray) -> np.ndarray:
        J = np.asarray(self.jacobian(Q), dtype=float)
        det = np.linalg.det(J)
        if not np.all(np.abs(det) > EIG_FLOOR):
            raise ChartDegeneracyError(f"singular chart jacobian at Q={Q!r}")
        return J

    @staticmethod
    def identity(dim: int) -> "CoordinateChart":
        return CoordinateChart(
            dim=dim,
            forward=lambda Q: np.asarray(Q, dtype=float),
            inverse=lambda Q: np.asarray(Q, dtype=float),
            jacobian=lambda Q: _bcast_matrix(np.eye(dim), Q),
            hessian=lambda Q: _bcast_matrix(np.zeros((dim, dim, dim)), Q),
        )

    @staticmethod
    def linear(T: np.ndarray) -> "CoordinateChart":
        T = np.asarray(T, dtype=float)
        dim = T.shape[0]
        Tinv = np.linalg.inv(T)
        return CoordinateChart(
            dim=dim,
            forward=lambda Q: np.asarray(Q, dtype=float) @ T.T,
            inverse=lambda Q: np.asarray(Q, dtype=float) @ Tinv.T,
            jacobian=lambda Q: _bcast_matrix(T, Q),
            hessian=lambda Q: _bcast_matrix(np.zeros((dim, dim, dim)), Q),
        )


def _bcast_matrix(mat: np.ndarray, Q: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    lead = Q.shape[:-1]
    return np.broadcast_to(mat, lead + mat.shape).copy()


@dataclass(frozen=True)
class MassMetricField:
    """Inverse mass tensor M^{mu nu}(Q) with its derived volume data."""

    dim: int
    inverse_mass: Callable[[np.ndarray], np.ndarray]
    j0: float = 1.0
    fd_step: float = FD_STEP
    fd_order: int = 4

    def inverse_mass_checked(self, Q: np.ndarray) -> np.ndarray:
        Minv = np.asarray(self.inverse_mass(Q), dtype=float)
        Minv = 0.5 * (Minv + np.swapaxes(Minv, -1, -2))
        eigs = np.linalg.eigvalsh(Minv)
        if not np.all(eigs[..., 0] > EIG_FLOOR * np.abs(eigs[..., -1])):
            raise MetricDegeneracyError(f"inverse mass tensor not positive definite at Q={Q!r}")
        return Minv

    def mass(self, Q: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.inverse_mass_checked(Q))

    def det_mass(self, Q: np.ndarray) -> np.ndarray:
        det = np.linalg.det(self.mass(Q))
        if not np.all(det > 0):
            raise MetricDegeneracyError(f"det M_munu <= 0 at Q={Q!r}")
        return det

    def volume_weight(self, Q: np.ndarray) -> np.ndarray:
        """sqrt(det M_munu) * J0."""
        return np.sqrt(self.det_mass(Q)) * self.j0


def constant_metric(mass_diag, j0: float = 1.0) -> MassMetricField:
    """Flat metric with constant diagonal masses (M_munu = diag(masses))."""
    masses = np.atleast_1d(np.asarray(mass_diag, dtype=float))
    Minv = np.diag(1.0 / masses)
    dim = len(masses)
    return MassMetricField(dim=dim, inverse_mass=lambda Q: _bcast_matrix(Minv, Q))


def _pointwise_derivative(func, Q, fd_step, fd_order):
    """Central FD derivative of func along every coordinate; appends one axis.

    Output index order: ``(..., deriv_axis) + component_shape``.
    """
    Q = np.asarray(Q, dtype=float)
    dim = Q.shape[-1]
    offsets = {
        2: (np.array([-1, 1]), np.array([-0.5, 0.5])),
        4: (np.array([-2, -1, 1, 2]), np.array([1 / 12, -2 / 3, 2 / 3, -1 / 12])),
        6: (
            np.array([-3, -2, -1, 1, 2, 3]),
            np.array([-1 / 60, 3 / 20, -3 / 4, 3 / 4, -3 / 20, 1 / 60]),
        ),
    }[fd_order]
    shifts, weights = offsets
    outs = []
    for mu in range(dim):
        acc = None
        for s, w in zip(shifts, weights):
            Qs = Q.copy()
            Qs[..., mu] = Qs[..., mu] + s * fd_step
            val = w * np.asarray(func(Qs), dtype=float)
            acc = val if acc is None else acc + val
        outs.append(acc / fd_step)
    return np.stack(outs, axis=Q.ndim - 1)


@dataclass(frozen=True)
class MetricDerivatives:
    """FD derivatives of the lower metric plus exact algebraic companions."""

    m_lower: np.ndarray  # (..., d, d)
    m_inv: np.ndarray  # (..., d, d)
    dm_lower: np.ndarray  # (..., kappa, d, d) = d_kappa M_{mu nu}
    dm_inv: np.ndarray  # (..., kappa, d, d) = d_kappa M^{mu nu}
    dlog_sqrt_det: np.ndarray  # (..., kappa)  = d_kappa log sqrt(det M_lower)


def metric_derivatives(metric: MassMetricField, Q: np.ndarray) -> MetricDerivatives:
    Q = np.asarray(Q, dtype=float)
    m_inv = metric.inverse_mass_checked(Q)
    m_lower = np.linalg.inv(m_inv)
    dm_lower = _pointwise_derivative(metric.mass, Q, metric.fd_step, metric.fd_order)
    # exact identities in terms of d M_lower:
    #   d M^ = -M^ (d M_) M^           (inverse rule)
    #   d log sqrt(det M_) = 1/2 tr(M^ d M_)   (Jacobi's formula)
    dm_inv = -np.einsum("...ma,...kab,...bn->...kmn", m_inv, dm_lower, m_inv)
    dlog = 0.5 * np.einsum("...ab,...kba->...k", m_inv, dm_lower)
    return MetricDerivatives(m_lower, m_inv, dm_lower, dm_inv, dlog)


def compute_pi(metric: MassMetricField, Q: np.ndarray) -> np.ndarray:
    """Pi^lam_{mu nu} = 1/2 M^{lam kap}(d_nu M_{mu kap} + d_mu M_{kap nu} - d_kap M_{mu nu}).

    Output shape ``(..., lam, mu, nu)``; symmetric in the last two indices.
    """
    der = metric_derivatives(metric, Q)
    # term_{kap mu nu} = d_nu M_{mu kap} + d_mu M_{kap nu} - d_kap M_{mu nu}
    term = (
        np.einsum("...nmk->...kmn", der.dm_lower)
        + np.einsum("...mkn->...kmn", der.dm_lower)
        - der.dm_lower
    )
    return 0.5 * np.einsum("...lk,...kmn->...lmn", der.m_inv, term)


def divergence_coefficient(metric: MassMetricField, Q: np.ndarray) -> np.ndarray:
    """b^nu = d_mu M^{mu nu} + (d_mu log sqrt(det M)) M^{mu nu}.

    The Podolsky operator expands as
    ``T chi = -1/2 (M^{mu nu} d_mu d_nu + b^nu d_nu) chi``; by construction
    ``b^nu = -M^{mu nu'} Pi^nu_{mu nu'}``-contracted identity holds to roundoff.
    """
    der = metric_derivatives(metric, Q)
    return np.einsum("...mmn->...n", der.dm_inv) + np.einsum(
        "...m,...mn->...n", der.dlog_sqrt_det, der.m_inv
    )


@dataclass(frozen=True)
class PiSymbolField:
    """Pi symbols as a field over configuration space."""

    metric: MassMetricField

    def pi(self, Q: np.ndarray) -> np.ndarray:
        return compute_pi(self.metric, Q)


def pullback_metric(chart: CoordinateChart, metric: MassMetricField) -> MassMetricField:
    """Metric in barred coordinates: Mbar^{mu nu}(Qbar) = J M^ J^T at Q = inverse(Qbar)."""

    def inverse_mass(Qbar: np.ndarray) -> np.ndarray:
        Q = np.asarray(chart.inverse(Qbar), dtype=float)
        J = chart.jacobian_checked(Q)
        M = metric.inverse_mass_checked(Q)
        return np.einsum("...ms,...st,...nt->...mn", J, M, J)

    return MassMetricField(
        dim=metric.dim,
        inverse_mass=inverse_mass,
        j0=metric.j0,
        fd_step=metric.fd_step,
        fd_order=metric.fd_order,
    )


def transform_pi(chart: CoordinateChart, pi_field: PiSymbolField, Q: np.ndarray) -> np.ndarray:
    """Pi symbols in barred coordinates, evaluated at Qbar = forward(Q).

    Pibar^lam_{mu nu} = J^lam_rho Pi^rho_{sig tau} K^sig_mu K^tau_nu
                        + J^lam_rho (d^2 Q^rho / dQbar^mu dQbar^nu)
    with K = J^{-1}; the inverse-map hessian is expressed through the forward
    hessian as  d^2 Q^rho/dQbar^mu dQbar^nu = -K^rho_a H^a_{bc} K^b_mu K^c_nu.
    """
    Q = np.asarray(Q, dtype=float)
    J = chart.jacobian_checked(Q)
    K = np.linalg.inv(J)
    H = np.asarray(chart.hessian(Q), dtype=float)
    pi = pi_field.pi(Q)
    homogeneous = np.einsum("...lr,...rst,...sm,...tn->...lmn", J, pi, K, K)
    inv_hess = -np.einsum("...ra,...abc,...bm,...cn->...rmn", K, H, K, K)
    inhomogeneous = np.einsum("...lr,...rmn->...lmn", J, inv_hess)
    return homogeneous + inhomogeneous


def volume_weight(metric: MassMetricField, Q: np.ndarray) -> np.ndarray:
    """sqrt(det M_munu(Q)) * J0 (positive scalar)."""
    return metric.volume_weight(Q)


# ---------------------------------------------------------------------------
# chart/metric specification files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometrySpec:
    """Parsed chart/metric specification with byte-exact round-trip."""

    dim: int
    chart: CoordinateChart | None
    metric: MassMetricField
    raw: str = field(repr=False, default="")

    def dumps(self) -> str:
        return self.raw


def parse_geometry_spec(text: str, fd_order: int = 4) -> GeometrySpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON in geometry spec: {exc}") from exc
    if "dim" not in data or "metric_inverse" not in data:
        raise SpecError("geometry spec requires 'dim' and 'metric_inverse'")
    dim = int(data["dim"])
    minv = expressions.compile_matrix(data["metric_inverse"], dim)
    metric = MassMetricField(
        dim=dim,
        inverse_mass=minv,
        j0=float(data.get("j0", 1.0)),
        fd_order=fd_order,
    )
    chart = None
    if "forward" in data:
        for key in ("inverse", "jacobian", "hessian"):
            if key not in data:
                raise SpecError(f"chart spec missing {key!r}")
        chart = CoordinateChart(
            dim=dim,
            forward=expressions.compile_vector(data["forward"], dim),
            inverse=expressions.compile_vector(data["inverse"], dim),
            jacobian=expressions.compile_matrix(data["jacobian"], dim),
            hessian=expressions.compile_rank3(data["hessian"], dim),
        )
    return GeometrySpec(dim=dim, chart=chart, metric=metric, raw=text)


def load_geometry_spec(path, fd_order: int = 4) -> GeometrySpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_geometry_spec(fh.read(), fd_order=fd_order)
