import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efgeo import grids, io
from efgeo.errors import SpecError


def grid_1d(n=11):
    return grids.Grid((grids.Axis(n=n, lo=0.0, hi=1.0),))


def grid_2d():
    return grids.Grid(
        (grids.Axis(n=7, lo=0.0, hi=1.0), grids.Axis(n=5, lo=-1.0, hi=1.0))
    )


class TestRoundtrip:
    def test_real_scalar(self, tmp_path):
        g = grid_1d()
        f = np.linspace(0.0, 1.0, 11) ** 3
        p = tmp_path / "f.csv"
        io.write_field(p, g, f, "f")
        assert np.array_equal(io.read_field(p, g), f)

    def test_complex_vector(self, tmp_path):
        g = grid_1d()
        rng = np.random.default_rng(0)
        f = rng.normal(size=(11, 3)) + 1j * rng.normal(size=(11, 3))
        p = tmp_path / "f.csv"
        io.write_field(p, g, f, "psi")
        assert np.array_equal(io.read_field(p, g), f)

    def test_tensor_field_2d_grid(self, tmp_path):
        g = grid_2d()
        rng = np.random.default_rng(1)
        f = rng.normal(size=g.shape + (2, 2))
        p = tmp_path / "t.csv"
        io.write_field(p, g, f, "h")
        assert np.array_equal(io.read_field(p, g), f)

    def test_mask(self, tmp_path):
        g = grid_1d()
        m = np.zeros(11, dtype=bool)
        m[[0, 5]] = True
        p = tmp_path / "m.csv"
        io.write_mask(p, g, m)
        assert np.array_equal(io.read_mask(p, g), m)


class TestFormat:
    def test_rfc4180_crlf_and_header(self, tmp_path):
        g = grid_1d(5)
        p = tmp_path / "f.csv"
        io.write_field(p, g, np.arange(5.0), "f")
        raw = p.read_bytes()
        assert b"\r\n" in raw
        first = raw.split(b"\r\n")[0].decode()
        assert first == "q1,f"

    def test_shortest_roundtrip_floats(self, tmp_path):
        g = grid_1d(5)
        p = tmp_path / "f.csv"
        io.write_field(p, g, np.full(5, 0.1), "f")
        text = p.read_text()
        assert "0.1," in text or ",0.1" in text  # not 0.1000000000000000055...

    def test_byte_identical_rewrites(self, tmp_path):
        g = grid_1d()
        f = np.random.default_rng(2).normal(size=(11, 2))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        io.write_field(p1, g, f, "x")
        io.write_field(p2, g, f, "x")
        assert p1.read_bytes() == p2.read_bytes()


class TestErrors:
    def test_shape_mismatch_rejected(self, tmp_path):
        g = grid_1d()
        with pytest.raises(SpecError):
            io.write_field(tmp_path / "f.csv", g, np.ones(7), "f")

    def test_wrong_row_count_rejected(self, tmp_path):
        g = grid_1d()
        p = tmp_path / "f.csv"
        io.write_field(p, g, np.ones(11), "f")
        with pytest.raises(SpecError):
            io.read_field(p, grid_1d(n=7))

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("")
        with pytest.raises(SpecError):
            io.read_field(p, grid_1d())


@settings(max_examples=25, deadline=None)
@given(
    data=st.lists(
        st.floats(allow_nan=False, allow_infinity=False, width=64),
        min_size=11, max_size=11,
    )
)
def test_arbitrary_doubles_roundtrip_exactly(tmp_path_factory, data):
    g = grid_1d()
    p = tmp_path_factory.mktemp("io") / "f.csv"
    f = np.array(data)
    io.write_field(p, g, f, "f")
    assert np.array_equal(io.read_field(p, g), f)
