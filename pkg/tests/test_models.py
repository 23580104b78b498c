import json

import numpy as np
import pytest

from efgeo import models
from efgeo.errors import SpecError


class TestBuiltins:
    @pytest.mark.parametrize("name", models.BUILTIN_NAMES)
    def test_loads_and_is_hermitian(self, name):
        model = models.builtin(name)
        h = model.h_bo_on_grid()
        assert h.shape == model.grid.shape + (model.n_levels, model.n_levels)
        assert np.max(np.abs(h - np.swapaxes(h, -1, -2).conj())) < 1e-12

    def test_unknown_builtin_rejected(self):
        with pytest.raises(SpecError):
            models.builtin("no-such-model")

    def test_node_override(self):
        model = models.builtin("avoided-crossing", {"n_nodes": 51})
        assert model.grid.shape == (51,)

    def test_remap_covers_same_physical_domain(self):
        base = models.builtin("avoided-crossing")
        barred = models.builtin("curvilinear-remap")
        lo, hi = base.grid.axes[0].lo, base.grid.axes[0].hi
        assert barred.grid.axes[0].lo == pytest.approx(lo**3 + 2 * lo)
        assert barred.grid.axes[0].hi == pytest.approx(hi**3 + 2 * hi)

    def test_remap_chart_inverse_consistent(self):
        barred = models.builtin("curvilinear-remap")
        Qb = barred.grid.points()
        Q = np.asarray(barred.chart.inverse(Qb))
        assert np.max(np.abs(barred.chart.forward(Q) - Qb)) < 1e-9

    def test_remap_potential_composes_to_base(self):
        base = models.builtin("avoided-crossing")
        barred = models.builtin("curvilinear-remap")
        Q = base.grid.points()
        h_base = base.h_bo(Q)
        h_barred_at_composed = barred.h_bo(np.asarray(barred.chart.forward(Q)))
        assert np.max(np.abs(h_base - h_barred_at_composed)) < 1e-9


class TestLoader:
    def minimal(self):
        return {
            "name": "toy",
            "n_levels": 1,
            "grid": {"axes": [{"n": 11, "lo": 0.0, "hi": 1.0}]},
            "geometry": {"dim": 1, "metric_inverse": [["1.0"]], "j0": 1.0},
            "h_bo": [["q1"]],
        }

    def test_load_from_dict(self):
        model = models.load_model(self.minimal())
        assert model.name == "toy"
        assert model.grid.shape == (11,)

    def test_load_from_json_string(self):
        model = models.load_model(json.dumps(self.minimal()))
        assert model.n_levels == 1

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps(self.minimal()))
        model = models.load_model(str(p))
        assert model.name == "toy"

    def test_missing_field_rejected(self):
        data = self.minimal()
        del data["h_bo"]
        with pytest.raises(SpecError):
            models.load_model(data)

    def test_non_square_h_rejected(self):
        data = self.minimal()
        data["n_levels"] = 2
        data["h_bo"] = [["q1", "0"]]
        with pytest.raises(SpecError):
            models.load_model(data)

    def test_non_hermitian_h_rejected(self):
        data = self.minimal()
        data["n_levels"] = 2
        data["h_bo"] = [["q1", "q1"], ["2*q1", "q1"]]
        with pytest.raises(SpecError):
            models.load_model(data)

    def test_grid_geometry_dim_mismatch_rejected(self):
        data = self.minimal()
        data["geometry"]["dim"] = 2
        data["geometry"]["metric_inverse"] = [["1.0", "0"], ["0", "1.0"]]
        with pytest.raises(SpecError):
            models.load_model(data)

    def test_roundtrip_through_json(self):
        model = models.builtin("avoided-crossing")
        again = models.load_model(model.to_json())
        assert again.grid.shape == model.grid.shape
        Q = model.grid.points()
        assert np.array_equal(again.h_bo(Q), model.h_bo(Q))
