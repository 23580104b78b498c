import numpy as np
import pytest

from efgeo import factorization, models, solver


class TestFreeRing:
    """One level, flat metric on a ring: spectrum k^2 / (2 m rho^2)."""

    def test_spectrum_matches_analytic(self):
        model = models.builtin("free-ring")
        op = solver.assemble(model)
        states = solver.solve_eigenstates(op, 5)
        # levels: 0, 1/2, 1/2, 2, 2 (k = 0, +-1, +-2, mass 1)
        expect = [0.0, 0.5, 0.5, 2.0, 2.0]
        for st, e in zip(states, expect):
            assert st.energy == pytest.approx(e, abs=2e-5)

    def test_operator_symmetric_in_weighted_space(self):
        model = models.builtin("free-ring")
        op = solver.assemble(model)
        assert op.asymmetry < 1e-13


class TestClampedBox:
    def test_dirichlet_walls_are_exact_zeros(self):
        model = models.builtin("avoided-crossing", {"n_nodes": 61})
        op = solver.assemble(model)
        st = solver.solve_eigenstates(op, 1)[0]
        assert np.all(st.psi[0] == 0.0)
        assert np.all(st.psi[-1] == 0.0)

    def test_eigenvalue_converges_at_high_order(self):
        # stiff-wall box with flat metric: compare 101 vs 401 node energies
        es = []
        for n in (101, 401):
            model = models.builtin("coupled-harmonic", {"n_nodes": n})
            op = solver.assemble(model, fd_order=6)
            es.append(solver.solve_eigenstates(op, 1)[0].energy)
        assert abs(es[1] - es[0]) < 1e-6

    def test_curvilinear_energy_matches_plain(self):
        e = {}
        for name in ("avoided-crossing", "curvilinear-remap"):
            model = models.builtin(name)
            op = solver.assemble(model, fd_order=6)
            e[name] = solver.solve_eigenstates(op, 1)[0].energy
        rel = abs(e["curvilinear-remap"] - e["avoided-crossing"]) / abs(
            e["avoided-crossing"]
        )
        assert rel < 1e-5


class TestExpectation:
    def test_eigenstate_expectation_equals_eigenvalue(self, ac201):
        val = ac201.op.expectation(ac201.state.psi)
        assert val == pytest.approx(ac201.state.energy, abs=1e-12)

    def test_kinetic_energy_positive(self, ac201):
        t = solver.kinetic_energy_expectation(
            ac201.model.grid, ac201.model.metric, ac201.state.psi
        )
        assert t > 0

    def test_normalize(self, ac201):
        psi = 3.7 * ac201.state.psi
        out = solver.normalize(ac201.model.grid, ac201.model.metric, psi)
        assert ac201.op.norm(out) == pytest.approx(1.0, abs=1e-12)


class TestPropagation:
    def test_norm_conserved(self, ac201):
        snaps = solver.propagate(ac201.op, ac201.state.psi, dt=0.01, steps=50,
                                 stride=50)
        n0 = ac201.op.norm(snaps[0][1].psi)
        n1 = ac201.op.norm(snaps[-1][1].psi)
        assert abs(n1 - n0) < 1e-12

    def test_eigenstate_rotates_with_cayley_phase(self, ac201):
        e = ac201.state.energy
        dt = 0.01
        snaps = solver.propagate(ac201.op, ac201.state.psi, dt=dt, steps=10,
                                 stride=10)
        psi_t = snaps[-1][1].psi
        # Cayley advances an eigenstate by exactly 2*atan(E dt / 2) per step
        phase = np.exp(-1j * 10 * 2 * np.arctan(e * dt / 2))
        ref = phase * ac201.state.psi
        mask = np.abs(ac201.state.psi) > 1e-8
        assert np.max(np.abs(psi_t[mask] - ref[mask])) < 1e-10

    def test_stationary_scalar_potential_matches_energy(self, ac201):
        """A_0 of a phase-rotating stationary state is -E + O(dt^2)."""
        e = ac201.state.energy
        grid = ac201.model.grid
        errs = []
        for dt in (0.04, 0.02):
            snaps = solver.propagate(ac201.op, ac201.state.psi, dt=dt, steps=2)
            phis = [factorization.factorize(grid, s.psi).phi for _, s in snaps]
            a0, _residue = factorization.compute_scalar_potential(
                phis[0], phis[1], phis[2], dt
            )
            off = ~factorization.factorize(grid, ac201.state.psi).mask
            errs.append(float(np.max(np.abs(a0[off] + e))))
        assert errs[1] < 1e-6           # absolute accuracy at dt = 0.02
        assert errs[1] < errs[0] / 3.0  # second-order convergence in dt
