import json

import numpy as np
import pytest

from efgeo import geometry, grids
from efgeo.errors import ChartDegeneracyError, MetricDegeneracyError


def exp_metric():
    """d=1 metric M_11 = e^{2Q} (so M^{11} = e^{-2Q}); volume weight e^Q."""
    return geometry.MassMetricField(
        dim=1,
        inverse_mass=lambda Q: np.exp(-2.0 * Q[..., :1])[..., None],
        j0=1.0,
    )


def cubic_chart():
    """Qbar = Q^3 + 2Q, strictly monotonic."""
    return geometry.CoordinateChart(
        dim=1,
        forward=lambda Q: np.asarray(Q) ** 3 + 2.0 * np.asarray(Q),
        inverse=lambda Qb: np.cbrt(
            np.asarray(Qb) / 2.0 + np.sqrt(np.asarray(Qb) ** 2 / 4.0 + 8.0 / 27.0)
        )
        - (2.0 / 3.0)
        / np.cbrt(np.asarray(Qb) / 2.0 + np.sqrt(np.asarray(Qb) ** 2 / 4.0 + 8.0 / 27.0)),
        jacobian=lambda Q: (3.0 * np.asarray(Q)[..., :1] ** 2 + 2.0)[..., None],
        hessian=lambda Q: (6.0 * np.asarray(Q)[..., :1])[..., None, None],
    )


class TestMassMetric:
    def test_constant_metric_pi_vanishes(self):
        m = geometry.constant_metric([2.0, 3.0])
        Q = np.zeros((5, 2))
        assert np.allclose(geometry.compute_pi(m, Q), 0.0)
        assert np.allclose(geometry.divergence_coefficient(m, Q), 0.0)

    def test_degenerate_metric_rejected(self):
        m = geometry.MassMetricField(
            dim=1, inverse_mass=lambda Q: np.zeros(Q.shape[:-1] + (1, 1)), j0=1.0
        )
        with pytest.raises(MetricDegeneracyError):
            m.inverse_mass_checked(np.zeros((3, 1)))

    def test_volume_weight_integral(self):
        # integral of the volume weight of M_11 = e^{2Q} over [0,1] is e - 1
        g = grids.Grid((grids.Axis(n=401, lo=0.0, hi=1.0),))
        w = exp_metric().volume_weight(g.points())
        assert grids.integrate(g, w) == pytest.approx(np.e - 1.0, abs=1e-5)

    def test_exponential_metric_pi_analytic(self):
        # M^{11} = e^{-2Q}: Pi^1_11 = -M^{-1}_{11} dM^{11}/dQ ... for d=1 the
        # connection reduces to Pi^1_11 = -(1/2) M_11 dM^{11}/dQ = +1
        m = exp_metric()
        Q = np.linspace(0.2, 0.8, 7)[:, None]
        pi = geometry.compute_pi(m, Q)
        assert np.allclose(pi, 1.0, atol=1e-7)

    def test_divergence_coefficient_matches_pi_contraction(self):
        # b^nu = -M^{ab} Pi^nu_{ab} holds exactly (same derivative bundle)
        m = exp_metric()
        Q = np.linspace(-0.5, 0.5, 9)[:, None]
        minv = m.inverse_mass_checked(Q)
        pi = geometry.compute_pi(m, Q)
        b = geometry.divergence_coefficient(m, Q)
        contraction = -np.einsum("...ab,...nab->...n", minv, pi)
        assert np.max(np.abs(b - contraction)) < 1e-14


class TestCharts:
    def test_identity_chart_roundtrip(self):
        c = geometry.CoordinateChart.identity(2)
        Q = np.random.default_rng(0).normal(size=(10, 2))
        assert np.allclose(c.inverse(c.forward(Q)), Q)

    def test_cubic_chart_roundtrip(self):
        c = cubic_chart()
        Q = np.linspace(-2.0, 2.0, 21)[:, None]
        assert np.max(np.abs(c.inverse(c.forward(Q)) - Q)) < 1e-12

    def test_singular_jacobian_rejected(self):
        c = geometry.CoordinateChart(
            dim=1,
            forward=lambda Q: Q,
            inverse=lambda Q: Q,
            jacobian=lambda Q: np.zeros(np.asarray(Q).shape[:-1] + (1, 1)),
            hessian=lambda Q: np.zeros(np.asarray(Q).shape[:-1] + (1, 1, 1)),
        )
        with pytest.raises(ChartDegeneracyError):
            c.jacobian_checked(np.zeros((2, 1)))

    def test_pullback_roundtrip_restores_metric(self):
        # pullback by the chart, then by its inverse-composed chart, returns
        # the original inverse-mass within composition tolerance
        m = exp_metric()
        c = cubic_chart()
        pulled = geometry.pullback_metric(c, m)
        Q = np.linspace(-1.0, 1.0, 11)[:, None]
        Qb = c.forward(Q)
        J = c.jacobian_checked(Q)
        K = np.linalg.inv(J)
        back = np.einsum(
            "...ms,...st,...nt->...mn", K, pulled.inverse_mass_checked(Qb), K
        )
        assert np.max(np.abs(back - m.inverse_mass_checked(Q))) < 1e-10

    def test_transform_pi_identity_chart_is_noop(self):
        m = exp_metric()
        Q = np.linspace(-0.5, 0.5, 9)[:, None]
        field = geometry.PiSymbolField(metric=m)
        out = geometry.transform_pi(geometry.CoordinateChart.identity(1), field, Q)
        assert np.max(np.abs(out - geometry.compute_pi(m, Q))) < 1e-14

    def test_transform_pi_matches_recompute_on_cubic_chart(self):
        m = exp_metric()
        c = cubic_chart()
        Q = np.linspace(-1.0, 1.0, 11)[:, None]
        field = geometry.PiSymbolField(metric=m)
        transformed = geometry.transform_pi(c, field, Q)
        recomputed = geometry.compute_pi(geometry.pullback_metric(c, m), c.forward(Q))
        assert np.max(np.abs(transformed - recomputed)) < 1e-6


class TestGeometrySpec:
    def test_parse_minimal(self):
        spec = geometry.parse_geometry_spec(
            json.dumps({"dim": 1, "metric_inverse": [["1.0"]], "j0": 2.0})
        )
        assert spec.dim == 1
        assert spec.metric.j0 == 2.0
        assert spec.chart is None

    def test_parse_with_chart(self):
        data = {
            "dim": 1,
            "metric_inverse": [["(3*q1^2 + 2)^2"]],
            "j0": 1.0,
            "forward": ["q1^3 + 2*q1"],
            "inverse": ["q1"],
            "jacobian": [["3*q1^2 + 2"]],
            "hessian": [[["6*q1"]]],
        }
        spec = geometry.parse_geometry_spec(json.dumps(data))
        assert spec.chart is not None
        Q = np.array([[0.5]])
        assert spec.chart.forward(Q)[0, 0] == pytest.approx(0.5**3 + 1.0)
