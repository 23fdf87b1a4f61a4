import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpdphs import plots

vals = arrays(float, st.integers(1, 50), elements=st.floats(-1e6, 1e6))


@given(vals)
def test_padded_limits_cover_extrema(v):
    lo, hi = plots.padded_limits(v)
    span = v.max() - v.min()
    assert lo < hi
    if span > 0:
        assert lo == pytest.approx(v.min() - 0.05 * span)
        assert hi == pytest.approx(v.max() + 0.05 * span)
    assert lo <= v.min() and hi >= v.max()


def test_padded_limits_ignores_nonfinite():
    assert plots.padded_limits([np.nan, 1.0, 3.0, np.inf]) == pytest.approx((0.9, 3.1))
    assert plots.padded_limits([]) == (-1.0, 1.0)


def _traj_data():
    z = np.linspace(0, 10, 50)
    t = np.linspace(0, 5, 51)
    truth = np.sin(z)[None] * np.cos(t)[:, None]
    return z, t, truth, 0.9 * truth


def test_trajectory_svg_deterministic(tmp_path):
    z, t, truth, mean = _traj_data()
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plots.trajectory_figure(a, z, t, truth, mean, [mean + 0.1])
    plots.trajectory_figure(b, z, t, truth, mean, [mean + 0.1])
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()


def test_trajectory_without_samples(tmp_path):
    z, t, truth, mean = _traj_data()
    plots.trajectory_figure(tmp_path / "a.svg", z, t, truth, mean, [])
    assert (tmp_path / "a.svg").stat().st_size > 0


def test_surface_and_error_svgs(tmp_path):
    q = np.linspace(-1, 1, 30)
    plots.surface_figure(tmp_path / "s.svg", q, q, 0.9 * q, 0.1 + 0 * q)
    plots.error_figure(tmp_path / "e.svg", np.array([10, 10, 40, 40.0]), np.array([1, 0.9, 0.5, 0.6]), {10: 0.95, 40: 0.55})
    assert (tmp_path / "s.svg").read_bytes().startswith(b"<?xml")
    assert (tmp_path / "e.svg").read_bytes().startswith(b"<?xml")


def test_axis_limits_follow_margin_rule(tmp_path, monkeypatch):
    figs = []
    monkeypatch.setattr(plots, "_save", lambda fig, path: figs.append(fig))
    z, t, truth, mean = _traj_data()
    plots.trajectory_figure(tmp_path / "a.svg", z, t, truth, 2 * mean)
    ax = figs[0].axes[0]
    assert ax.get_xlim() == pytest.approx((-0.5, 10.5))
    lo, hi = plots.padded_limits(np.concatenate([truth.ravel(), 2 * mean.ravel()]))
    assert ax.get_ylim() == pytest.approx((lo, hi))
