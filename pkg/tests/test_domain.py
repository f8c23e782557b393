import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracschrod.domain import build_box, build_interval
from fracschrod.errors import ConfigurationError


def test_interval_cells():
    g = build_interval(-1.0, 1.0, 4)
    np.testing.assert_allclose(g.x, [-0.75, -0.25, 0.25, 0.75])
    np.testing.assert_allclose(g.cell_measure, 0.5)
    np.testing.assert_allclose(g.delta, [0.25, 0.75, 0.75, 0.25])
    assert g.dim == 1 and g.size == 4 and g.volume == pytest.approx(2.0)


def test_arrays_are_read_only():
    g = build_interval(0.0, 1.0, 8)
    for a in (g.coords, g.cell_measure, g.delta, g.index):
        with pytest.raises(ValueError):
            a[0] = 0


def test_box_layout():
    g = build_box((-1.0, 0.0), (1.0, 3.0), (4, 6))
    assert g.size == 24 and g.dim == 2
    np.testing.assert_allclose(g.spacing, [0.5, 0.5])
    assert g.volume == pytest.approx(6.0)
    assert g.delta.min() == pytest.approx(0.25)
    # index maps back to coordinates
    np.testing.assert_allclose(g.coords[:, 0], -1.0 + (g.index[:, 0] + 0.5) * 0.5)
    np.testing.assert_allclose(g.coords[:, 1], (g.index[:, 1] + 0.5) * 0.5)


def test_center_index():
    g = build_interval(-1.0, 1.0, 9)
    assert g.x[g.center_index()] == pytest.approx(0.0)
    b = build_box((-1.0, -1.0), (1.0, 1.0), (5, 5))
    np.testing.assert_allclose(b.coords[b.center_index()], [0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("args", [(1.0, 1.0, 10), (1.0, 0.0, 10), (0.0, np.inf, 10), (0.0, 1.0, 3), (0.0, 1.0, 4.5)])
def test_interval_rejects(args):
    with pytest.raises(ConfigurationError):
        build_interval(*args)


def test_box_rejects():
    with pytest.raises(ConfigurationError):
        build_box((0.0,), (1.0,), (4,))
    with pytest.raises(ConfigurationError):
        build_box((0.0, 0.0), (1.0, 1.0), (1, 4))


def test_to_dict():
    d = build_interval(-1.0, 1.0, 10).to_dict()
    assert d == {"kind": "interval", "lo": [-1.0], "hi": [1.0], "n": [10]}


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-10, 10), w=st.floats(0.01, 20), n=st.integers(4, 300))
def test_measure_partitions_interval(a, w, n):
    g = build_interval(a, a + w, n)
    assert np.sum(g.cell_measure) == pytest.approx(w, rel=1e-12)
    assert np.all(g.delta > 0) and np.all(g.delta <= w / 2 + 1e-12)
    assert np.all(np.diff(g.x) > 0)
