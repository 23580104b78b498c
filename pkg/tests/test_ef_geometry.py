import numpy as np
import pytest

from efgeo import ef_geometry, factorization, geometry, grids


def ring_grid(n=128):
    return grids.Grid((grids.Axis(n=n, lo=0.0, hi=2 * np.pi, boundary="periodic"),))


def rotor_field(grid, winding=1):
    """Real two-level conditional field Phi = (cos theta, sin theta)."""
    theta = winding * grid.points()[..., 0] / 2.0
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1).astype(complex)


class TestAnalyticRotor:
    """For real Phi = (cos th, sin th): A = 0 and h_11 = (th')^2."""

    def test_connection_vanishes(self):
        g = ring_grid()
        phi = rotor_field(g, winding=2)
        a, residue = factorization.compute_vector_potential(g, phi, fd_order=6)
        assert np.max(np.abs(a)) < 1e-12
        assert residue < 1e-12

    def test_qgt_matches_theta_prime_squared(self):
        g = ring_grid()
        phi = rotor_field(g, winding=2)  # theta = q, theta' = 1
        a = np.zeros(g.shape + (1,))
        h = ef_geometry.quantum_geometric_tensor(g, phi, a, fd_order=6)
        assert np.max(np.abs(h - 1.0)) < 1e-8
        assert np.max(np.abs(h.imag)) < 1e-12

    def test_metric_route_agrees(self):
        g = ring_grid()
        phi = rotor_field(g, winding=2)
        a = np.zeros(g.shape + (1,))
        gmet = ef_geometry.quantum_metric(g, phi, a, fd_order=6)
        h = ef_geometry.quantum_geometric_tensor(g, phi, a, fd_order=6)
        assert np.max(np.abs(gmet - h.real)) < 1e-10


class TestConditionalDerivative:
    def test_orthogonal_to_phi_exactly(self, ac201):
        grid = ac201.model.grid
        dphi = ef_geometry.conditional_derivative(grid, ac201.fact.phi)
        overlap = np.einsum("...i,...mi->...m", ac201.fact.phi.conj(), dphi)
        assert np.max(np.abs(overlap)) < 1e-14

    def test_matches_connection_form_up_to_residue(self, ac201):
        grid = ac201.model.grid
        dphi_proj = ef_geometry.conditional_derivative(grid, ac201.fact.phi)
        dphi_conn = ef_geometry.covariant_derivative(
            grid, ac201.fact.phi, ac201.geom.a_mu, -1
        )
        # the two differ by i * Im<Phi|dPhi> * Phi, bounded by the residue
        assert np.max(np.abs(dphi_proj - dphi_conn)) <= ac201.geom.a_imag_residue * 1.01 + 1e-15

    def test_unnormalized_rejected(self, ac201):
        with pytest.raises(ValueError):
            ef_geometry.conditional_derivative(ac201.model.grid, 2.0 * ac201.fact.phi)


class TestChargeSignChecks:
    def test_bad_charge_sign_rejected(self, ac201):
        grid = ac201.model.grid
        with pytest.raises(ValueError):
            ef_geometry.covariant_derivative(grid, ac201.fact.chi, ac201.geom.a_mu, 0)
        with pytest.raises(ValueError):
            ef_geometry.covariant_hessian(grid, ac201.fact.chi, ac201.geom.a_mu, 2)


class TestIdentities:
    def test_metric_is_re_qgt(self, ac201):
        assert np.max(np.abs(ac201.geom.g - ac201.geom.h.real)) < 1e-10

    def test_contraction_identity(self, ac201):
        minv = ac201.model.metric.inverse_mass_checked(ac201.model.grid.points())
        contr = 0.5 * np.einsum("...mn,...mn->...", minv, ac201.geom.g)
        assert np.max(np.abs(ac201.geom.eps_geo - contr)) < 1e-10

    def test_christoffel_lowering_identity(self, ac201):
        """h Ups(second kind) reconstructs Ups(first kind) off flagged nodes."""
        geom = ac201.geom
        recon = np.einsum("...lk,...kmn->...lmn", geom.h, geom.upsilon_second)
        off = ~geom.flagged
        assert np.max(np.abs(recon - geom.upsilon_first)[off]) < 1e-10

    def test_frame_decomposition_reconstructs_second_derivative(self, ac201):
        excl = factorization.grow_mask(
            ac201.model.grid, ac201.fact.mask, factorization.stencil_reach(4)
        ) | ac201.geom.flagged
        assert np.max(ac201.geom.reconstruction_residual[~excl]) < 1e-8

    def test_gamma_matches_metric_derivative_route(self, ac201):
        gamma_g = ef_geometry.christoffel_from_metric(ac201.model.grid, ac201.geom.g)
        excl = factorization.grow_mask(
            ac201.model.grid, ac201.fact.mask, factorization.stencil_reach(4)
        )
        scale = np.max(np.abs(ac201.geom.gamma))
        diff = np.max(np.abs(gamma_g - ac201.geom.gamma)[~excl])
        assert diff < 1e-2 * scale

    def test_real_part_symmetric_tensor_structure(self, ac201):
        geom = ac201.geom
        assert np.array_equal(geom.gamma, geom.upsilon_first.real)
        assert np.array_equal(geom.c_tensor, geom.upsilon_first.imag)
        # symmetrized in the derivative pair by construction
        assert np.max(np.abs(
            geom.upsilon_first - np.swapaxes(geom.upsilon_first, -1, -2)
        )) == 0.0

    def test_qgt_hermitian_positive(self, ac201):
        h = ac201.geom.h
        assert np.max(np.abs(h - np.swapaxes(h, -1, -2).conj())) < 1e-14
        assert np.all(h[..., 0, 0].real >= -1e-14)


class TestTangentFrame:
    def test_two_level_frame_is_empty(self, ac201):
        # with two levels, span{Phi, D Phi} generically exhausts the space
        assert ac201.geom.frame.shape[-2] in (0, 1)

    def test_three_level_frame_complements_span(self):
        g = ring_grid(64)
        theta = g.points()[..., 0]
        phi = np.stack(
            [np.cos(theta) / np.sqrt(2), np.sin(theta) / np.sqrt(2),
             np.full(g.shape, 1 / np.sqrt(2))],
            axis=-1,
        ).astype(complex)
        dphi = ef_geometry.conditional_derivative(g, phi, fd_order=6)
        frame, rank = ef_geometry.tangent_frame(g, phi, dphi)
        assert frame.shape[-2] == 1  # 3 levels - Phi - one derivative direction
        assert np.all(rank == 2)
        overlap_phi = np.einsum("...ai,...i->...a", frame.conj(), phi)
        assert np.max(np.abs(overlap_phi)) < 1e-10
        overlap_d = np.einsum("...ai,...mi->...am", frame.conj(), dphi)
        assert np.max(np.abs(overlap_d)) < 1e-8
        norms = np.sum(np.abs(frame) ** 2, axis=-1)
        assert np.max(np.abs(norms - 1.0)) < 1e-10


class TestEpsilonBo:
    def test_two_level_diagonal_expectation(self):
        g = ring_grid(16)
        phi = rotor_field(g, winding=0)  # (1, 0) everywhere
        h_bo = np.zeros(g.shape + (2, 2))
        h_bo[..., 0, 0] = 3.0
        h_bo[..., 1, 1] = 7.0
        assert np.allclose(ef_geometry.epsilon_bo(phi, h_bo), 3.0)

    def test_non_hermitian_h_rejected(self):
        g = ring_grid(16)
        phi = rotor_field(g, winding=0)
        h_bo = np.zeros(g.shape + (2, 2))
        h_bo[..., 0, 1] = 1.0
        with pytest.raises(ValueError):
            ef_geometry.epsilon_bo(phi, h_bo)


class TestGaugeLaw:
    def test_law_based_geometry_matches_base_to_roundoff(self, ac201):
        grid = ac201.model.grid
        lam = 1.3 * np.sin(2 * np.pi * grid.points()[..., 0] / 5.0)
        f2 = factorization.gauge_transform(ac201.fact, lam)
        g2 = ef_geometry.compute_ef_geometry(
            grid, ac201.model.metric, f2.phi, ac201.h_bo,
            gauge_phase=f2.gauge_phase,
        )
        for name in ("h", "g", "eps_bo", "eps_geo", "upsilon_first"):
            a = getattr(ac201.geom, name)
            b = getattr(g2, name)
            assert np.max(np.abs(a - b)) < 1e-12, name
        grad = grids.gradient(grid, lam, order=4, mode="field")
        assert np.max(np.abs(g2.a_mu - ac201.geom.a_mu - grad)) < 1e-12
