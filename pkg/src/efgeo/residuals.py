"""Residual evaluators for the coupled marginal/conditional equations.

Stationary convention: the oscillatory e^{-iEt} factor of an eigenstate is
removed before factorization, so time-derivative terms drop and the equations
read

    nuclear     [-1/2 M^{mu nu} nabla_mu nabla_nu chi + (eps_BO + eps_geo) chi] = E chi
    electronic  -1/2 M^{mu nu} nabla_mu nabla_nu Phi
                - M^{mu nu} (D_mu chi / chi) D_nu Phi
                + (h_bo - eps_BO - eps_geo) Phi = 0

with chi-signed (+iA) derivatives on chi and Phi-signed (-iA) ones on Phi.

Norm weights: plain volume weight sqrt(det M) J0 for the nuclear residual,
density weight sqrt(det M) J0 |chi|^2 for the electronic one (the conditional
equation is physically meaningless where the marginal density vanishes).
Masked nodes are excluded from every norm.

When the factorization carries an accumulated gauge phase, residuals are
computed in the base gauge and re-phased, so all norms are gauge invariant to
roundoff (the residual fields themselves transform by a pure phase).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ef_geometry, geometry, grids
from .ef_geometry import EfGeometry
from .factorization import Factorization
from .grids import Grid


def _masked_norm(grid: Grid, values: np.ndarray, weight: np.ndarray,
                 mask: np.ndarray) -> float:
    """Weighted L2 norm of a field, masked nodes excluded.

    ``values`` may have trailing component axes; they are summed in quadrature.
    """
    dens = np.abs(values) ** 2
    while dens.ndim > grid.dim:
        dens = np.sum(dens, axis=-1)
    w = grid.quad_weights() * weight
    w = np.where(mask, 0.0, w)
    return float(np.sqrt(np.sum(w * dens)))


def nuclear_residual(grid: Grid, metric: geometry.MassMetricField, fact: Factorization,
                     eps_bo: np.ndarray, eps_geo: np.ndarray, energy: float,
                     a_mu: np.ndarray, pi: np.ndarray,
                     fd_order: int = 4) -> np.ndarray:
    """[-1/2 M nabla nabla chi + (eps_BO + eps_geo) chi] - E chi, node-wise."""
    if fact.gauge_phase is not None:
        base, lam = _to_base_gauge(fact)
        r = nuclear_residual(grid, metric, base, eps_bo, eps_geo, energy,
                             a_mu - grids.gradient(grid, lam, order=fd_order, mode="field"),
                             pi, fd_order)
        return r * np.exp(-1j * lam)
    minv = metric.inverse_mass_checked(grid.points())
    # chi vanishes at clamped edges, so its stencils use the zero extension
    nn_chi = ef_geometry.second_covariant_derivative(grid, fact.chi, a_mu, pi, +1,
                                                    fd_order, mode="wave")
    kinetic = -0.5 * np.einsum("...mn,...mn->...", minv, nn_chi)
    return kinetic + (eps_bo + eps_geo - energy) * fact.chi


def electronic_residual(grid: Grid, metric: geometry.MassMetricField, fact: Factorization,
                        h_bo: np.ndarray, eps_bo: np.ndarray, eps_geo: np.ndarray,
                        a_mu: np.ndarray, pi: np.ndarray, fd_order: int = 4,
                        form: str = "covariant") -> np.ndarray:
    """Stationary conditional-equation residual, node-wise off-mask.

    ``form`` selects the kinetic route: "covariant" evaluates
    -1/2 M (DD - Pi D) Phi, "divergence" evaluates the flux form
    -1/2 (M DD + b D) Phi with the divergence coefficient b; the two agree
    identically when b and Pi come from the same metric-derivative bundle.
    """
    if fact.gauge_phase is not None:
        base, lam = _to_base_gauge(fact)
        r = electronic_residual(grid, metric, base, h_bo, eps_bo, eps_geo,
                                a_mu - grids.gradient(grid, lam, order=fd_order, mode="field"),
                                pi, fd_order, form)
        return r * np.exp(1j * lam)[..., None]
    Q = grid.points()
    minv = metric.inverse_mass_checked(Q)
    dphi = ef_geometry.conditional_derivative(grid, fact.phi, fd_order)
    ddphi = ef_geometry.covariant_hessian(grid, fact.phi, a_mu, -1, fd_order)
    if form == "covariant":
        kin = -0.5 * np.einsum("...mn,...mni->...i", minv, ddphi) \
            + 0.5 * np.einsum("...mn,...lmn,...li->...i", minv, pi, dphi)
    elif form == "divergence":
        b = geometry.divergence_coefficient(metric, Q)
        kin = -0.5 * np.einsum("...mn,...mni->...i", minv, ddphi) \
            - 0.5 * np.einsum("...n,...ni->...i", b, dphi)
    else:
        raise ValueError(f"unknown kinetic form {form!r}")
    dchi = ef_geometry.covariant_derivative(grid, fact.chi, a_mu, +1, fd_order, mode="wave")
    ratio = np.zeros_like(dchi)
    off = ~fact.mask
    ratio[off] = dchi[off] / fact.chi[off][..., None]
    coupling = -np.einsum("...mn,...m,...ni->...i", minv, ratio, dphi)
    potential = np.einsum("...ij,...j->...i", h_bo, fact.phi) \
        - (eps_bo + eps_geo)[..., None] * fact.phi
    return kin + coupling + potential


def projection_identity_check(grid: Grid, metric: geometry.MassMetricField,
                              fact: Factorization, resid: np.ndarray) -> float:
    """Density-weighted norm of <Phi|residual>; zero when the marginal equation holds."""
    proj = np.einsum("...i,...i->...", fact.phi.conj(), resid)
    w = metric.volume_weight(grid.points()) * np.abs(fact.chi) ** 2
    return _masked_norm(grid, proj, w, fact.mask)


def projected_electronic_equations(grid: Grid, metric: geometry.MassMetricField,
                                   fact: Factorization, geom: EfGeometry,
                                   h_bo: np.ndarray, fd_order: int = 4):
    """Stationary tangent-space projections of the conditional equation.

    Returns (per-direction residual, per-frame-vector residual):

        r_kap = <D_kap Phi|h_bo|Phi> + 1/2 M^{mu nu}(Pi^lam - Ups^lam) h_{kap lam}
                - M^{mu nu} (D_mu chi / chi) h_{kap nu}
        r_b   = <e_b|h_bo|Phi> - 1/2 M^{mu nu} Omega^a_{mu nu} <e_b|e_a>

    with the frame Gram matrix computed explicitly.
    """
    if fact.gauge_phase is not None:
        base, _lam = _to_base_gauge(fact)
        base_geom = _strip_gauge(grid, geom, _lam, fd_order)
        return projected_electronic_equations(grid, metric, base, base_geom, h_bo, fd_order)
    Q = grid.points()
    minv = metric.inverse_mass_checked(Q)
    pi = geometry.compute_pi(metric, Q)
    dphi = ef_geometry.conditional_derivative(grid, fact.phi, fd_order)
    dchi = ef_geometry.covariant_derivative(grid, fact.chi, geom.a_mu, +1, fd_order,
                                            mode="wave")
    ratio = np.zeros_like(dchi)
    off = ~fact.mask
    ratio[off] = dchi[off] / fact.chi[off][..., None]

    hv = np.einsum("...ij,...j->...i", h_bo, fact.phi)
    r_kap = (
        np.einsum("...ki,...i->...k", dphi.conj(), hv)
        + 0.5 * np.einsum("...mn,...lmn,...kl->...k", minv, pi - geom.upsilon_second, geom.h)
        - np.einsum("...mn,...m,...kn->...k", minv, ratio, geom.h)
    )
    gram = np.einsum("...bi,...ai->...ba", geom.frame.conj(), geom.frame)
    r_b = (
        np.einsum("...bi,...i->...b", geom.frame.conj(), hv)
        - 0.5 * np.einsum("...mn,...amn,...ba->...b", minv, geom.omega, gram)
    )
    return r_kap, r_b


@dataclass
class ResidualReport:
    """Residual fields and their weighted norms for one factorized state."""

    nuclear_residual: np.ndarray
    electronic_residual: np.ndarray
    projected_direction: np.ndarray
    projected_frame: np.ndarray
    norms: dict = field(default_factory=dict)
    masked_fraction: float = 0.0


def evaluate(grid: Grid, metric: geometry.MassMetricField, fact: Factorization,
             geom: EfGeometry, h_bo: np.ndarray, energy: float,
             fd_order: int = 4) -> ResidualReport:
    """Full stationary residual suite with gauge-invariant norms.

    Norms exclude the node mask dilated by the stencil reach: stencils centered
    near a masked node read filled conditional values, which carry no
    information about the equations.
    """
    from .factorization import grow_mask, stencil_reach

    Q = grid.points()
    pi = geometry.compute_pi(metric, Q)
    r_nuc = nuclear_residual(grid, metric, fact, geom.eps_bo, geom.eps_geo,
                             energy, geom.a_mu, pi, fd_order)
    r_el = electronic_residual(grid, metric, fact, h_bo, geom.eps_bo, geom.eps_geo,
                               geom.a_mu, pi, fd_order)
    r_el_div = electronic_residual(grid, metric, fact, h_bo, geom.eps_bo, geom.eps_geo,
                                   geom.a_mu, pi, fd_order, form="divergence")
    r_kap, r_b = projected_electronic_equations(grid, metric, fact, geom, h_bo, fd_order)

    vol = metric.volume_weight(Q)
    dens = vol * np.abs(fact.chi) ** 2
    excl = grow_mask(grid, fact.mask, stencil_reach(fd_order))
    norms = {
        "nuclear_norm": _masked_norm(grid, r_nuc, vol, excl),
        "electronic_norm": _masked_norm(grid, r_el, dens, excl),
        "form_disagreement": _masked_norm(grid, r_el - r_el_div, dens, excl),
        "phi_projection": projection_identity_check(grid, metric, fact, r_el),
        "projected_direction_norm": _masked_norm(grid, r_kap, dens, excl),
        "projected_frame_norm": _masked_norm(grid, r_b, dens, excl),
    }
    return ResidualReport(
        nuclear_residual=r_nuc,
        electronic_residual=r_el,
        projected_direction=r_kap,
        projected_frame=r_b,
        norms=norms,
        masked_fraction=fact.masked_fraction,
    )


def _to_base_gauge(fact: Factorization):
    lam = np.asarray(fact.gauge_phase, dtype=float)
    phase = np.exp(1j * lam)
    base = Factorization(
        grid=fact.grid,
        chi=fact.chi * phase,
        phi=fact.phi / phase[..., None],
        mask=fact.mask,
        convention=fact.convention,
        gauge_phase=None,
    )
    return base, lam


def _strip_gauge(grid: Grid, geom: EfGeometry, lam: np.ndarray, fd_order: int) -> EfGeometry:
    """Undo the law-based re-phasing applied by compute_ef_geometry."""
    import copy

    out = copy.copy(geom)
    out.a_mu = geom.a_mu - grids.gradient(grid, lam, order=fd_order, mode="field")
    out.frame = geom.frame * np.exp(-1j * lam)[..., None, None]
    return out
