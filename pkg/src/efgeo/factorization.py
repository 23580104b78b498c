"""Exact factorization Psi = chi * Phi, gauge transformations and potentials.

The marginal amplitude chi carries the node density, the conditional field Phi
is normalized per node (partial normalization condition).  Nodes where the
density underflows eps_node are masked: Phi there is filled from the nearest
off-mask neighbor along the first axis and excluded from all residual norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids
from .errors import GaugeFixingError
from .grids import Grid

EPS_NODE_REL = 1e-12
REF_OVERLAP_FLOOR = 1e-6


@dataclass
class Factorization:
    grid: Grid
    chi: np.ndarray  # complex, grid shape
    phi: np.ndarray  # complex, grid shape + (n,)
    mask: np.ndarray  # bool, grid shape; True = node masked (|chi|^2 below floor)
    convention: str = "chi-real-positive"
    # accumulated gauge phase relative to the section produced by factorize();
    # carried so downstream derivatives can run in the base gauge and re-phase,
    # which keeps gauge-invariant observables invariant to roundoff
    gauge_phase: np.ndarray | None = None

    @property
    def masked_fraction(self) -> float:
        return float(np.mean(self.mask))

    def product(self) -> np.ndarray:
        return self.chi[..., None] * self.phi


def _fill_masked_along_first_axis(phi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace masked nodes by the nearest off-mask node along axis 0."""
    out = phi.copy()
    n0 = phi.shape[0]
    flat_mask = mask.reshape(n0, -1)
    flat_phi = out.reshape(n0, -1, phi.shape[-1])
    for col in range(flat_mask.shape[1]):
        good = np.nonzero(~flat_mask[:, col])[0]
        if good.size == 0:
            continue
        bad = np.nonzero(flat_mask[:, col])[0]
        nearest = good[np.argmin(np.abs(bad[:, None] - good[None, :]), axis=1)]
        flat_phi[bad, col, :] = flat_phi[nearest, col, :]
    return out


def factorize(grid: Grid, psi: np.ndarray, convention: str = "chi-real-positive",
              ref: np.ndarray | int | None = None,
              eps_node_rel: float = EPS_NODE_REL) -> Factorization:
    """Extract (chi, Phi) from Psi under the partial normalization condition."""
    psi = np.asarray(psi, dtype=complex)
    dens = np.sum(np.abs(psi) ** 2, axis=-1)
    peak = float(np.max(dens))
    if peak == 0.0:
        raise ValueError("cannot factorize an identically zero state")
    mask = dens < eps_node_rel * peak
    if np.all(mask):
        raise ValueError("every node is masked; nothing to factorize")
    chi_abs = np.sqrt(dens)
    if convention == "chi-real-positive":
        chi = chi_abs.astype(complex)
    elif convention == "reference-overlap":
        n = psi.shape[-1]
        if ref is None:
            ref = 0
        if isinstance(ref, (int, np.integer)):
            v_ref = np.zeros(n, dtype=complex)
            v_ref[int(ref)] = 1.0
        else:
            v_ref = np.asarray(ref, dtype=complex)
            v_ref = v_ref / np.linalg.norm(v_ref)
        overlap = np.einsum("i,...i->...", v_ref.conj(), psi)
        mag = np.abs(overlap)
        safe = ~mask
        if np.any(mag[safe] < REF_OVERLAP_FLOOR * chi_abs[safe]):
            raise GaugeFixingError(
                "reference overlap magnitude below floor; refusing silent re-reference"
            )
        phase = np.ones_like(overlap)
        nz = mag > 0
        phase[nz] = overlap[nz] / mag[nz]
        chi = chi_abs * phase
    else:
        raise ValueError(f"unknown phase convention {convention!r}")
    phi = np.zeros_like(psi)
    off = ~mask
    phi[off] = psi[off] / chi[off][..., None]
    phi = _fill_masked_along_first_axis(phi, mask)
    # per-node re-normalization guards the filled nodes; off-mask it is a no-op
    norms = np.sqrt(np.sum(np.abs(phi) ** 2, axis=-1))
    norms[norms == 0] = 1.0
    phi = phi / norms[..., None]
    return Factorization(grid=grid, chi=chi, phi=phi, mask=mask, convention=convention)


def grow_mask(grid: Grid, mask: np.ndarray, reach: int) -> np.ndarray:
    """Dilate a node mask by ``reach`` nodes along every axis.

    Derivative stencils centered within ``reach`` of a masked node read filled
    values, so identity checks and residual norms exclude the dilated mask.
    Periodic axes wrap.
    """
    out = mask.copy()
    for ax_i, ax in enumerate(grid.axes):
        acc = out.copy()
        for s in range(1, reach + 1):
            if ax.boundary == grids.PERIODIC:
                acc |= np.roll(out, s, axis=ax_i) | np.roll(out, -s, axis=ax_i)
            else:
                fwd = np.zeros_like(out)
                bwd = np.zeros_like(out)
                sl_to = [slice(None)] * out.ndim
                sl_from = [slice(None)] * out.ndim
                sl_to[ax_i] = slice(s, None)
                sl_from[ax_i] = slice(None, -s)
                fwd[tuple(sl_to)] = out[tuple(sl_from)]
                bwd[tuple(sl_from)] = out[tuple(sl_to)]
                acc |= fwd | bwd
        out = acc
    return out


def stencil_reach(fd_order: int) -> int:
    """Half-width of the widest centered stencil used at a given order."""
    return fd_order // 2 + 1


def gauge_transform(fact: Factorization, lam: np.ndarray) -> Factorization:
    """chi -> e^{-i lam} chi, Phi -> e^{+i lam} Phi; the product is unchanged."""
    lam = np.asarray(lam, dtype=float)
    phase = np.exp(1j * lam)
    total = lam if fact.gauge_phase is None else fact.gauge_phase + lam
    return Factorization(
        grid=fact.grid,
        chi=fact.chi / phase,
        phi=fact.phi * phase[..., None],
        mask=fact.mask.copy(),
        convention="custom",
        gauge_phase=total,
    )


def compute_vector_potential(grid: Grid, phi: np.ndarray, fd_order: int = 4):
    """A_mu = -i <Phi | d_mu Phi>; returns (real A, max imaginary residue)."""
    norms = np.sum(np.abs(phi) ** 2, axis=-1)
    if np.max(np.abs(norms - 1.0)) > 1e-8:
        raise ValueError("conditional field is not normalized per node")
    dphi = grids.gradient(grid, phi, order=fd_order, mode="field")  # grid + (d, n)
    a = -1j * np.einsum("...i,...mi->...m", phi.conj(), dphi)
    residue = float(np.max(np.abs(a.imag)))
    return a.real, residue


def compute_scalar_potential(phi_minus: np.ndarray, phi_center: np.ndarray,
                             phi_plus: np.ndarray, dt: float):
    """A_0 = -i <Phi(t) | (Phi(t+dt) - Phi(t-dt)) / (2 dt)> (central in time)."""
    if phi_minus.shape != phi_plus.shape or phi_minus.shape != phi_center.shape:
        raise ValueError("snapshot shapes do not match")
    dphi_dt = (phi_plus - phi_minus) / (2.0 * dt)
    a0 = -1j * np.einsum("...i,...i->...", phi_center.conj(), dphi_dt)
    return a0.real, float(np.max(np.abs(a0.imag)))


def geometric_phase(grid: Grid, a_mu: np.ndarray, loop) -> float:
    """Trapezoidal line integral of A along a closed node loop, phase in (-pi, pi]."""
    nodes = [(idx,) if np.isscalar(idx) else tuple(idx) for idx in loop]
    if len(nodes) < 2 or nodes[0] != nodes[-1]:
        raise ValueError("loop must be closed (first node repeated at the end)")
    pts = grid.points()
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        qa, qb = pts[a], pts[b]
        dq = qb - qa
        for ax_i, ax in enumerate(grid.axes):
            if ax.boundary == grids.PERIODIC:
                period = ax.hi - ax.lo
                dq[ax_i] -= period * np.round(dq[ax_i] / period)
        total += 0.5 * float(np.dot(a_mu[a] + a_mu[b], dq))
    return float(np.angle(np.exp(1j * total)))


def adiabatic_states(grid: Grid, h_bo: np.ndarray, level: int = 0) -> np.ndarray:
    """Smooth single-valued adiabatic electronic field for 1-d models.

    Node-wise eigenvectors are phase-continued along the axis; on a periodic
    axis the loop holonomy is spread uniformly so the field is single valued.
    The discrete Berry phase of the raw continuation is thereby encoded in the
    vector potential of the returned field.
    """
    if grid.dim != 1:
        raise NotImplementedError("adiabatic continuation implemented for 1-d grids")
    n0 = grid.shape[0]
    vecs = np.zeros((n0, h_bo.shape[-1]), dtype=complex)
    for j in range(n0):
        _, v = np.linalg.eigh(h_bo[j])
        vecs[j] = v[:, level]
    # continuation: make each neighbor overlap real positive
    for j in range(1, n0):
        ov = np.vdot(vecs[j - 1], vecs[j])
        if np.abs(ov) > 0:
            vecs[j] *= np.abs(ov) / ov
    if grid.axes[0].boundary == grids.PERIODIC:
        wrap = np.vdot(vecs[-1], vecs[0])
        gamma = float(np.angle(wrap / np.abs(wrap))) if np.abs(wrap) > 0 else 0.0
        # raw overlaps are real positive, so the full discrete holonomy is
        # exp(i*gamma); allow the half-integer branch (gamma = +-pi -> pi)
        js = np.arange(n0)
        vecs = vecs * np.exp(1j * gamma * js / n0)[:, None]
    return vecs


def random_smooth_lambda(grid: Grid, rng: np.random.Generator, n_modes: int = 5,
                         amplitude: float = 1.0) -> np.ndarray:
    """Band-limited random gauge function: low Fourier modes on periodic axes,
    low Chebyshev modes on clamped axes, coefficients uniform in [-1, 1]."""
    pts = grid.points()
    lam = np.zeros(grid.shape)
    for ax_i, ax in enumerate(grid.axes):
        q = pts[..., ax_i]
        if ax.boundary == grids.PERIODIC:
            length = ax.hi - ax.lo
            for k in range(1, n_modes + 1):
                a, b = rng.uniform(-1.0, 1.0, size=2)
                lam += amplitude * (
                    a * np.cos(2 * np.pi * k * (q - ax.lo) / length)
                    + b * np.sin(2 * np.pi * k * (q - ax.lo) / length)
                )
        else:
            x = 2.0 * (q - ax.lo) / (ax.hi - ax.lo) - 1.0
            for k in range(1, n_modes + 1):
                c = rng.uniform(-1.0, 1.0)
                lam += amplitude * c * np.cos(k * np.arccos(np.clip(x, -1.0, 1.0)))
    return lam
