import math

import numpy as np
import pytest

from eadsim.fockspace import FockDensityMatrix, loss_channel, prepare_input, squeezed_vacuum
from eadsim.phasespace import (
    GaussianChannelSpec,
    GridError,
    GridSpec,
    GridWarning,
    WignerGrid,
    apply_gaussian_channel,
    fock_from_wigner,
    moments,
    overlap,
    w0_location,
    w0_metric,
    wigner_from_fock,
)

GRID = GridSpec(6.0, 241)


@pytest.fixture(scope="module")
def w_photon():
    return wigner_from_fock(FockDensityMatrix.fock(1, 10), GRID)


@pytest.fixture(scope="module")
def w_vacuum():
    return wigner_from_fock(FockDensityMatrix.vacuum(10), GRID)


class TestWignerFromFock:
    def test_vacuum_origin(self, w_vacuum):
        assert w_vacuum.value_at(0, 0) == pytest.approx(1 / math.pi, abs=1e-12)

    def test_photon_origin(self, w_photon):
        assert w_photon.value_at(0, 0) == pytest.approx(-1 / math.pi, abs=1e-12)

    def test_lossy_photon_origin(self):
        w = wigner_from_fock(loss_channel(FockDensityMatrix.fock(1, 10), 0.9), GRID)
        assert w.value_at(0, 0) == pytest.approx((1 - 2 * 0.9) / math.pi, abs=1e-12)

    def test_normalized_and_bounded(self):
        rho = prepare_input("p_squeezed_photon", 0.403, 0.62)
        w = wigner_from_fock(rho, GRID)
        assert w.normalization() == pytest.approx(1, abs=1e-3)
        assert np.abs(w.values).max() <= 1 / math.pi + 1e-6

    def test_small_grid_warns(self):
        with pytest.warns(GridWarning):
            wigner_from_fock(FockDensityMatrix.fock(3, 10), GridSpec(1.5, 31))

    def test_squeezed_moments(self):
        w = wigner_from_fock(squeezed_vacuum(0.4, 30).density(), GRID)
        mean, cov = moments(w)
        assert np.allclose(mean, 0, atol=1e-10)
        assert cov[0, 0] == pytest.approx(0.5 * math.exp(0.8), abs=1e-4)
        assert cov[1, 1] == pytest.approx(0.5 * math.exp(-0.8), abs=1e-4)

    def test_overlap_is_purity(self, w_photon, w_vacuum):
        assert overlap(w_photon, w_photon) == pytest.approx(1, abs=1e-6)
        assert overlap(w_photon, w_vacuum) == pytest.approx(0, abs=1e-6)

    def test_fock_round_trip(self):
        rho = prepare_input("x_squeezed_photon", 0.403, 0.62, dim=14)
        back = fock_from_wigner(wigner_from_fock(rho, GRID), 14)
        assert np.max(np.abs(back.data - rho.data)) < 1e-6


class TestGaussianChannel:
    def test_identity(self, w_photon):
        out = apply_gaussian_channel(w_photon, GaussianChannelSpec.identity())
        assert np.max(np.abs(out.values - w_photon.values)) < 1e-6

    def test_loss_matches_fock(self, w_photon):
        out = apply_gaussian_channel(w_photon, GaussianChannelSpec.loss(0.9))
        ref = wigner_from_fock(loss_channel(FockDensityMatrix.fock(1, 10), 0.9), GRID)
        assert np.max(np.abs(out.values - ref.values)) < 1e-3

    def test_squeeze_on_vacuum(self, w_vacuum):
        r = 0.3
        out = apply_gaussian_channel(w_vacuum, GaussianChannelSpec.diagonal(
            math.exp(r), math.exp(-r), 0, 0))
        _, cov = moments(out)
        assert cov[0, 0] == pytest.approx(0.5 * math.exp(2 * r), abs=1e-3)
        assert cov[1, 1] == pytest.approx(0.5 * math.exp(-2 * r), abs=1e-3)

    def test_moment_maps(self):
        rho = prepare_input("p_squeezed_photon", 0.403, 0.62)
        w = wigner_from_fock(rho, GRID)
        chan = GaussianChannelSpec.diagonal(1.05, 0.9, 0.03, 0.08)
        out = apply_gaussian_channel(w, chan)
        m_in, c_in = moments(w)
        m_exp, c_exp = chan.map_moments(m_in, c_in)
        m_out, c_out = moments(out)
        assert out.normalization() == pytest.approx(1, abs=2e-3)
        assert np.allclose(m_out, m_exp, atol=1e-3)
        assert np.allclose(c_out, c_exp, atol=1e-3)

    def test_displacement(self, w_vacuum):
        chan = GaussianChannelSpec(np.eye(2), np.zeros((2, 2)), [0.5, -0.25])
        mean, _ = moments(apply_gaussian_channel(w_vacuum, chan))
        assert mean == pytest.approx([0.5, -0.25], abs=1e-4)

    def test_composition(self, w_photon):
        a = GaussianChannelSpec.diagonal(1.02, 0.95, 0.01, 0.04)
        b = GaussianChannelSpec.loss(0.9)
        twice = apply_gaussian_channel(apply_gaussian_channel(w_photon, a), b)
        once = apply_gaussian_channel(w_photon, a.then(b))
        assert np.max(np.abs(twice.values - once.values)) < 1e-4

    def test_singular_scaling(self, w_photon):
        with pytest.raises(GridError):
            apply_gaussian_channel(w_photon, GaussianChannelSpec.diagonal(1.0, 0.0, 0, 0))

    def test_bad_noise(self):
        with pytest.raises(GridError):
            GaussianChannelSpec(np.eye(2), np.diag([0.1, -0.1]))
        with pytest.raises(GridError):
            GaussianChannelSpec(np.eye(2), [[0.1, 0.05], [0.0, 0.1]])

    def test_degenerate_noise_is_continuous(self, w_photon):
        tiny = apply_gaussian_channel(w_photon, GaussianChannelSpec.diagonal(1, 1, 1e-12, 1e-12))
        small = apply_gaussian_channel(w_photon, GaussianChannelSpec.diagonal(1, 1, 1e-8, 1e-8))
        assert np.max(np.abs(tiny.values - small.values)) < 1e-6


class TestW0:
    def test_photon(self, w_photon):
        assert w0_metric(w_photon) == pytest.approx(-1 / math.pi, abs=1e-12)
        assert w0_location(w_photon) == (0.0, 0.0)

    def test_vacuum(self, w_vacuum):
        assert w0_metric(w_vacuum) == pytest.approx(1 / math.pi, abs=1e-12)

    def test_off_origin_minimum(self):
        x = np.linspace(-1, 1, 5)
        vals = np.full((5, 5), 0.1)
        vals[3, 1] = -0.05
        w = WignerGrid(x, x, vals)
        assert w0_metric(w) == -0.05
        assert w0_location(w) == (0.5, -0.5)

    def test_round_off_not_negative(self):
        x = np.linspace(-1, 1, 5)
        vals = np.full((5, 5), 0.2)
        vals[0, 0] = -1e-17
        assert w0_metric(WignerGrid(x, x, vals)) == pytest.approx(0.2)


class TestGridIO:
    def test_csv_round_trip(self, tmp_path):
        w = wigner_from_fock(FockDensityMatrix.fock(1, 6), GridSpec(4.0, 21))
        path = tmp_path / "w.csv"
        w.to_csv(path)
        back = WignerGrid.from_csv(path)
        assert np.allclose(back.values, w.values, atol=1e-9)
        assert back.same_axes(w)

    def test_uneven_axes_rejected(self):
        with pytest.raises(GridError):
            WignerGrid([0, 1, 3], [0, 1, 2], np.zeros((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(GridError):
            WignerGrid([0, 1, 2], [0, 1, 2], np.zeros((3, 4)))

    def test_outside_point(self, w_vacuum):
        with pytest.raises(GridError):
            w_vacuum.value_at(7.0, 0.0)
