"""Geometric objects of the exact factorization on the discretized grid.

Conventions (hbar = 1):

* charge_sign +1 for chi-like objects (D = d + iA), -1 for Phi-like (D = d - iA)
* h_{lam kap} = <D_lam Phi | D_kap Phi>          quantum geometric tensor
* g_{mu nu}   = Re h                             quantum metric
* Ups_{lam mu nu} = <D_lam Phi | D_mu D_nu Phi>  quantum Christoffel, 1st kind
* Ups^lam_{mu nu} = h^{lam kap} Ups_{kap mu nu}  quantum Christoffel, 2nd kind
* Gamma = Re Ups, C = Im Ups
* eps_geo = 1/2 M^{mu nu} g_{mu nu}

The vector potential handed to these functions must come from the same
discrete stencil as the derivatives (factorization.compute_vector_potential);
then <Phi|D_mu Phi> = 0 holds to roundoff and the frame decomposition is
complete by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, grids
from .grids import Grid

COND_CAP = 1e8
ORTHO_TOL = 1e-10


def covariant_derivative(grid: Grid, field: np.ndarray, a_mu: np.ndarray,
                         charge_sign: int, fd_order: int = 4,
                         mode: str = "field") -> np.ndarray:
    """D_mu f = d_mu f + charge_sign * i * A_mu * f.

    Input shape ``grid.shape + comps``; output ``grid.shape + (d,) + comps``.
    ``mode`` picks the boundary stencil: "field" (one-sided) for fields that
    stay finite at clamped edges, "wave" (zero extension) for amplitudes that
    vanish there.
    """
    if charge_sign not in (+1, -1):
        raise ValueError("charge_sign must be +1 (chi-like) or -1 (Phi-like)")
    grad = grids.gradient(grid, np.asarray(field, dtype=complex), order=fd_order, mode=mode)
    comp_axes = field.ndim - grid.dim
    a = a_mu.reshape(a_mu.shape + (1,) * comp_axes)
    return grad + charge_sign * 1j * a * np.expand_dims(field, grid.dim)


def conditional_derivative(grid: Grid, phi: np.ndarray, fd_order: int = 4) -> np.ndarray:
    """D_mu Phi for the conditional field itself, in projector form,

        D_mu Phi = d_mu Phi - |Phi><Phi|d_mu Phi>.

    Equals (d_mu - iA_mu)Phi up to the imaginary residue of the discrete
    connection, and enforces <Phi|D_mu Phi> = 0 exactly on the grid, which the
    tangent-frame decomposition and the projected equations rely on.
    Output shape ``grid.shape + (d, n)``.
    """
    _require_normalized(phi)
    grad = grids.gradient(grid, np.asarray(phi, dtype=complex), order=fd_order, mode="field")
    overlap = np.einsum("...i,...mi->...m", phi.conj(), grad)
    return grad - overlap[..., None] * np.expand_dims(phi, grid.dim)


def covariant_hessian(grid: Grid, field: np.ndarray, a_mu: np.ndarray,
                      charge_sign: int, fd_order: int = 4,
                      mode: str = "field") -> np.ndarray:
    """D_mu D_nu f in expanded form,

        d_mu d_nu f + s i [(d_mu A_nu) f + A_nu d_mu f + A_mu d_nu f] - A_mu A_nu f,

    with s = charge_sign.  The plain second derivatives come from grids.hessian,
    so the diagonal shares its stencil with kinetic operators assembled the
    same way.  Output shape ``grid.shape + (d, d) + comps``.
    """
    if charge_sign not in (+1, -1):
        raise ValueError("charge_sign must be +1 (chi-like) or -1 (Phi-like)")
    f = np.asarray(field, dtype=complex)
    comp_axes = f.ndim - grid.dim
    pad = (1,) * comp_axes
    hess = grids.hessian(grid, f, order=fd_order, mode=mode)
    grad = grids.gradient(grid, f, order=fd_order, mode=mode)
    da = grids.gradient(grid, a_mu, order=fd_order, mode="field")  # (..., mu, nu)
    s = charge_sign
    a_m = a_mu.reshape(a_mu.shape[: grid.dim] + (grid.dim, 1) + pad)
    a_n = a_mu.reshape(a_mu.shape[: grid.dim] + (1, grid.dim) + pad)
    da_r = da.reshape(da.shape + pad)
    f_r = f.reshape(f.shape[: grid.dim] + (1, 1) + f.shape[grid.dim:])
    grad_m = np.expand_dims(grad, grid.dim + 1)  # (..., mu, 1, comps)
    grad_n = np.expand_dims(grad, grid.dim)  # (..., 1, nu, comps)
    return (
        hess
        + s * 1j * (da_r * f_r + a_n * grad_m + a_m * grad_n)
        - a_m * a_n * f_r
    )


def second_covariant_derivative(grid: Grid, field: np.ndarray, a_mu: np.ndarray,
                                pi: np.ndarray, charge_sign: int,
                                fd_order: int = 4, mode: str = "field") -> np.ndarray:
    """nabla_mu nabla_nu f = D_mu D_nu f - Pi^lam_{mu nu} D_lam f.

    Output shape ``grid.shape + (d, d) + comps``.
    """
    d_field = covariant_derivative(grid, field, a_mu, charge_sign, fd_order, mode)
    dd_field = covariant_hessian(grid, field, a_mu, charge_sign, fd_order, mode)
    comp_axes = field.ndim - grid.dim
    lead = "xyzw"[: comp_axes]
    correction = np.einsum(f"...lmn,...l{lead}->...mn{lead}", pi, d_field)
    return dd_field - correction


def quantum_geometric_tensor(grid: Grid, phi: np.ndarray, a_mu: np.ndarray,
                             fd_order: int = 4) -> np.ndarray:
    """h_{lam kap} = <D_lam Phi | D_kap Phi>, Hermitian with Re part >= 0."""
    _require_normalized(phi)
    dphi = conditional_derivative(grid, phi, fd_order)
    return np.einsum("...li,...ki->...lk", dphi.conj(), dphi)


def quantum_metric(grid: Grid, phi: np.ndarray, a_mu: np.ndarray,
                   fd_order: int = 4) -> np.ndarray:
    """g = Re <(P-A)Phi | (P-A)Phi>, computed through the momentum form.

    (P_mu - A_mu)Phi = -i D_mu Phi, so this is an independent route to Re h.
    """
    _require_normalized(phi)
    grad = grids.gradient(grid, np.asarray(phi, dtype=complex), order=fd_order, mode="field")
    p_phi = -1j * grad - a_mu[..., None] * np.expand_dims(phi, grid.dim)
    return np.real(np.einsum("...li,...ki->...lk", p_phi.conj(), p_phi))


def epsilon_geo(minv: np.ndarray, g: np.ndarray) -> np.ndarray:
    """eps_geo = 1/2 M^{mu nu} g_{mu nu} (node-wise contraction)."""
    if minv.shape != g.shape:
        raise ValueError("inverse mass and quantum metric shapes differ")
    return 0.5 * np.einsum("...mn,...mn->...", minv, g)


def epsilon_bo(phi: np.ndarray, h_bo: np.ndarray) -> np.ndarray:
    """eps_BO = <Phi | h_bo(Q) | Phi> node-wise (real within 1e-10)."""
    _require_normalized(phi)
    herm_err = np.max(np.abs(h_bo - np.swapaxes(h_bo, -1, -2).conj()))
    if herm_err > 1e-10 * max(1.0, float(np.max(np.abs(h_bo)))):
        raise ValueError("h_bo is not Hermitian node-wise")
    val = np.einsum("...i,...ij,...j->...", phi.conj(), h_bo, phi)
    return val.real


def quantum_christoffel_first(grid: Grid, phi: np.ndarray, a_mu: np.ndarray,
                              fd_order: int = 4):
    """Ups_{lam mu nu} = <D_lam Phi | D_mu D_nu Phi>, symmetrized in (mu, nu).

    Returns (Ups, raw asymmetry max-norm); the asymmetry is a discretization
    health metric, not physics.
    """
    _require_normalized(phi)
    dphi = conditional_derivative(grid, phi, fd_order)
    ddphi = covariant_hessian(grid, phi, a_mu, -1, fd_order)  # grid+(mu, nu, i)
    ups = np.einsum("...li,...mni->...lmn", dphi.conj(), ddphi)
    asym = float(np.max(np.abs(ups - np.swapaxes(ups, -1, -2))))
    ups_sym = 0.5 * (ups + np.swapaxes(ups, -1, -2))
    return ups_sym, asym


def christoffel_from_metric(grid: Grid, g: np.ndarray, fd_order: int = 4) -> np.ndarray:
    """Gamma_{lam mu nu} = 1/2 (d_nu g_{lam mu} + d_mu g_{lam nu} - d_lam g_{mu nu}).

    Independent reconstruction of Re Ups from grid derivatives of g.
    """
    dg = grids.gradient(grid, g, order=fd_order, mode="field")  # grid+(kap, mu, nu)
    return 0.5 * (
        np.einsum("...nlm->...lmn", dg) + np.einsum("...mln->...lmn", dg) - dg
    )


def quantum_christoffel_second(h: np.ndarray, ups_first: np.ndarray,
                               cond_cap: float = COND_CAP):
    """Ups^lam_{mu nu} = h^{lam kap} Ups_{kap mu nu} via node-wise solves.

    Nodes where cond(h) exceeds ``cond_cap`` are flagged and zero-filled;
    no pseudo-inverse is substituted silently.
    """
    d = h.shape[-1]
    lead = h.shape[:-2]
    h_flat = h.reshape(-1, d, d)
    u_flat = ups_first.reshape(-1, d, d * d)
    out = np.zeros_like(u_flat)
    flagged = np.zeros(h_flat.shape[0], dtype=bool)
    cond = np.linalg.cond(h_flat)
    bad = ~np.isfinite(cond) | (cond > cond_cap)
    flagged[bad] = True
    good = ~bad
    if np.any(good):
        out[good] = np.linalg.solve(h_flat[good], u_flat[good])
    return out.reshape(lead + (d, d, d)), flagged.reshape(lead)


def tangent_frame(grid: Grid, phi: np.ndarray, dphi: np.ndarray,
                  rank_tol: float = 1e-8):
    """Orthonormal basis of the complement of span{Phi, D_mu Phi} per node.

    Seeds are the standard basis vectors in order (first-nonzero pivoting);
    returns (frame, rank) where ``frame`` has shape grid.shape + (n-1-max_rank?, n)
    padded with zeros beyond each node's actual frame size, and ``rank`` is the
    per-node dimension of span{Phi, D_mu Phi}.
    """
    _require_normalized(phi)
    n = phi.shape[-1]
    d = grid.dim
    lead = phi.shape[:-1]
    phi_flat = phi.reshape(-1, n)
    dphi_flat = dphi.reshape(-1, d, n)
    npts = phi_flat.shape[0]
    frames = np.zeros((npts, n, n), dtype=complex)
    ranks = np.zeros(npts, dtype=int)
    sizes = np.zeros(npts, dtype=int)
    for p in range(npts):
        span = [phi_flat[p]]
        scale = max(1.0, float(np.max(np.abs(dphi_flat[p]))) if d else 1.0)
        for mu in range(d):
            v = dphi_flat[p, mu].copy()
            for u in span:
                v -= u * np.vdot(u, v)
            nv = np.linalg.norm(v)
            if nv > rank_tol * scale:
                span.append(v / nv)
        ranks[p] = len(span)
        k = 0
        for seed in range(n):
            v = np.zeros(n, dtype=complex)
            v[seed] = 1.0
            for u in span:
                v -= u * np.vdot(u, v)
            nv = np.linalg.norm(v)
            if nv > 0.5 / np.sqrt(n):  # robust pivot: seed must not sit in the span
                v = v / nv
                # second orthogonalization pass for numerical hygiene
                for u in span:
                    v -= u * np.vdot(u, v)
                v = v / np.linalg.norm(v)
                v = grids.fix_phase(v)
                span.append(v)
                frames[p, k] = v
                k += 1
        sizes[p] = k
    n_frame = int(np.max(sizes)) if npts else 0
    return frames[:, :n_frame, :].reshape(lead + (n_frame, n)), ranks.reshape(lead)


@dataclass
class SecondDerivativeDecomposition:
    """Coefficients of D_mu|D_nu Phi> over the basis {Phi, D_lam Phi, e_a}."""

    phi_projection: np.ndarray  # <Phi|D_mu D_nu Phi>, grid + (d, d)
    upsilon_second: np.ndarray  # grid + (d, d, d)
    omega: np.ndarray  # grid + (n_frame, d, d)
    residual: np.ndarray  # node-wise reconstruction residual norm, grid shape
    flagged: np.ndarray  # nodes where h was too ill-conditioned


def decompose_second_derivative(grid: Grid, phi: np.ndarray, a_mu: np.ndarray,
                                frame: np.ndarray, fd_order: int = 4,
                                cond_cap: float = COND_CAP) -> SecondDerivativeDecomposition:
    """Expand D_mu|D_nu Phi> = |Phi><Phi|DD> + |D_lam Phi> Ups^lam + |e_a> Omega^a."""
    dphi = conditional_derivative(grid, phi, fd_order)
    ddphi = covariant_hessian(grid, phi, a_mu, -1, fd_order)  # grid+(mu,nu,i)
    h = np.einsum("...li,...ki->...lk", dphi.conj(), dphi)
    ups_first = np.einsum("...li,...mni->...lmn", dphi.conj(), ddphi)
    ups_second, flagged = quantum_christoffel_second(h, ups_first, cond_cap)
    c0 = np.einsum("...i,...mni->...mn", phi.conj(), ddphi)
    omega = np.einsum("...ai,...mni->...amn", frame.conj(), ddphi)
    recon = (
        np.expand_dims(phi, (grid.dim, grid.dim + 1)) * c0[..., None]
        + np.einsum("...lmn,...li->...mni", ups_second, dphi)
        + np.einsum("...amn,...ai->...mni", omega, frame)
    )
    residual = np.sqrt(np.sum(np.abs(ddphi - recon) ** 2, axis=(-3, -2, -1)))
    return SecondDerivativeDecomposition(
        phi_projection=c0,
        upsilon_second=ups_second,
        omega=omega,
        residual=residual,
        flagged=flagged,
    )


@dataclass
class EfGeometry:
    """All EF geometric fields for one factorized state."""

    grid: Grid
    h: np.ndarray
    g: np.ndarray
    upsilon_first: np.ndarray
    upsilon_second: np.ndarray
    gamma: np.ndarray
    c_tensor: np.ndarray
    eps_bo: np.ndarray
    eps_geo: np.ndarray
    frame: np.ndarray
    omega: np.ndarray
    a_mu: np.ndarray
    flagged: np.ndarray
    upsilon_asymmetry: float
    a_imag_residue: float
    reconstruction_residual: np.ndarray


def compute_ef_geometry(grid: Grid, metric: geometry.MassMetricField, phi: np.ndarray,
                        h_bo: np.ndarray, fd_order: int = 4,
                        cond_cap: float = COND_CAP,
                        gauge_phase: np.ndarray | None = None) -> EfGeometry:
    """One-shot evaluation of every EF geometric field from a conditional Phi.

    When ``gauge_phase`` is the accumulated phase lam of a gauge-transformed
    factorization, the computation runs in the base gauge and the outputs are
    re-phased through the transformation law (A picks up the gradient of lam,
    Phi-like fields the factor e^{i lam}); every gauge-invariant field then
    matches the base computation to roundoff.
    """
    from .factorization import compute_vector_potential

    if gauge_phase is not None:
        lam = np.asarray(gauge_phase, dtype=float)
        phi_base = phi * np.exp(-1j * lam)[..., None]
        out = compute_ef_geometry(grid, metric, phi_base, h_bo, fd_order, cond_cap)
        out.a_mu = out.a_mu + grids.gradient(grid, lam, order=fd_order, mode="field")
        out.frame = out.frame * np.exp(1j * lam)[..., None, None]
        return out

    a_mu, residue = compute_vector_potential(grid, phi, fd_order)
    h = quantum_geometric_tensor(grid, phi, a_mu, fd_order)
    g = h.real.copy()
    ups_first, ups_asym = quantum_christoffel_first(grid, phi, a_mu, fd_order)
    ups_second, flagged = quantum_christoffel_second(h, ups_first, cond_cap)
    dphi = conditional_derivative(grid, phi, fd_order)
    frame, _rank = tangent_frame(grid, phi, dphi)
    decomp = decompose_second_derivative(grid, phi, a_mu, frame, fd_order, cond_cap)
    minv = metric.inverse_mass_checked(grid.points())
    return EfGeometry(
        grid=grid,
        h=h,
        g=g,
        upsilon_first=ups_first,
        upsilon_second=ups_second,
        gamma=ups_first.real,
        c_tensor=ups_first.imag,
        eps_bo=epsilon_bo(phi, h_bo),
        eps_geo=epsilon_geo(minv, g),
        frame=frame,
        omega=decomp.omega,
        a_mu=a_mu,
        flagged=flagged | decomp.flagged,
        upsilon_asymmetry=ups_asym,
        a_imag_residue=residue,
        reconstruction_residual=decomp.residual,
    )


def _require_normalized(phi: np.ndarray, tol: float = 1e-8) -> None:
    norms = np.sum(np.abs(phi) ** 2, axis=-1)
    if np.max(np.abs(norms - 1.0)) > tol:
        raise ValueError("conditional field is not normalized per node")
