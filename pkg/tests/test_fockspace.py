import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eadsim.eads import db_to_r
from eadsim.fockspace import (
    FockDensityMatrix,
    FockError,
    ImpossibleOutcomeError,
    PureFockVector,
    TruncationWarning,
    TwoModeState,
    annihilation,
    basis,
    beamsplitter_apply,
    displacement_unitary,
    fidelity,
    fidelity_pure,
    homodyne_pdf,
    homodyne_project,
    input_target,
    loss_channel,
    photon_number,
    prepare_input,
    quadrature_moments,
    quadrature_operators,
    squeeze_unitary,
    squeezed_vacuum,
)

XS = np.linspace(-8, 8, 1601)


def random_state(seed, dim=8, rank=3):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = m @ m.conj().T
    return FockDensityMatrix(rho / np.trace(rho).real)


def trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


class TestLadder:
    def test_lowers_one_photon(self):
        a = annihilation(2)
        assert np.allclose(a @ basis(1, 2), basis(0, 2))

    def test_entry(self):
        assert annihilation(3)[1, 2] == pytest.approx(math.sqrt(2))

    def test_vacuum_variance(self):
        x, _ = quadrature_operators(20)
        vac = basis(0, 20)
        assert (vac.conj() @ x @ x @ vac).real == pytest.approx(0.5, abs=1e-14)

    def test_small_cutoff_rejected(self):
        with pytest.raises(FockError):
            annihilation(1)


class TestSqueeze:
    def test_zero_is_identity(self):
        assert np.allclose(squeeze_unitary(0.0, 12), np.eye(12))

    def test_db_conversion(self):
        assert db_to_r(9.7) == pytest.approx(9.7 * math.log(10) / 20, abs=1e-14)
        assert db_to_r(9.7) == pytest.approx(1.1166, abs=2e-4)

    def test_p_variance(self):
        rho = squeezed_vacuum(0.5, 30).density()
        _, cov = quadrature_moments(rho)
        assert cov[1, 1] == pytest.approx(0.5 * math.exp(-1), abs=1e-8)
        assert cov[0, 0] == pytest.approx(0.5 * math.exp(1), abs=1e-6)

    def test_unitary(self):
        u = squeeze_unitary(0.8, 25)
        assert np.max(np.abs(u.conj().T @ u - np.eye(25))) < 1e-8

    def test_overflow_warns(self):
        with pytest.warns(TruncationWarning):
            squeeze_unitary(2.0, 10)

    def test_heisenberg_action(self):
        # on a displaced vacuum the means scale as (e^r x, e^-r p)
        dim, r = 40, 0.3
        coh = displacement_unitary(0.7, -0.4, dim, pad=30)[:, 0]
        u = squeeze_unitary(r, dim, pad=40)
        out = FockDensityMatrix.from_pure(PureFockVector.normalize(u @ coh))
        mean, _ = quadrature_moments(out)
        assert mean[0] == pytest.approx(0.7 * math.exp(r), abs=1e-6)
        assert mean[1] == pytest.approx(-0.4 * math.exp(-r), abs=1e-6)


class TestDisplacement:
    def test_zero(self):
        assert np.allclose(displacement_unitary(0, 0, 10), np.eye(10))

    def test_coherent_mean(self):
        v = displacement_unitary(1.0, 0.0, 30, pad=30)[:, 0]
        mean, cov = quadrature_moments(FockDensityMatrix.from_pure(PureFockVector.normalize(v)))
        assert mean == pytest.approx([1.0, 0.0], abs=1e-6)
        assert np.allclose(cov, 0.5 * np.eye(2), atol=1e-6)

    def test_displaced_fock(self):
        u = displacement_unitary(0.3, 0.0, 30, pad=30)
        rho = FockDensityMatrix.from_pure(PureFockVector.normalize(u @ basis(1, 30)))
        mean, _ = quadrature_moments(rho)
        assert mean[0] == pytest.approx(0.3, abs=1e-8)
        assert photon_number(rho) == pytest.approx(1.045, abs=1e-8)


class TestPreparation:
    def test_idealized_single_photon(self):
        rho = prepare_input("single_photon", 0.0, 1.0, 10, idealized=True)
        assert np.allclose(rho.data, FockDensityMatrix.fock(1, 10).data)

    def test_lossy_idealized_photon(self):
        rho = prepare_input("single_photon", 0.0, 0.9, 10, idealized=True)
        assert np.allclose(np.diag(rho.data).real[:2], [0.1, 0.9])

    def test_fig2_state_is_valid_and_centred(self):
        rho = prepare_input("p_squeezed_photon", db_to_r(3.5), 0.62)
        assert rho.is_valid()
        mean, cov = quadrature_moments(rho)
        assert np.allclose(mean, 0, atol=1e-8)
        # p-squeezed: smaller p variance than x variance
        assert cov[1, 1] < cov[0, 0]
        assert rho.top_population < 1e-4

    def test_orientation(self):
        xs = input_target("x_squeezed_photon", 0.4, 20).density()
        ps = input_target("p_squeezed_photon", 0.4, 20).density()
        _, cx = quadrature_moments(xs)
        _, cp = quadrature_moments(ps)
        assert cx[0, 0] == pytest.approx(cp[1, 1], abs=1e-10)

    def test_degenerate_subtraction(self):
        with pytest.raises(FockError):
            prepare_input("single_photon", 0.0, 1.0, 10)

    def test_bad_efficiency(self):
        with pytest.raises(FockError):
            prepare_input("p_squeezed_photon", 0.4, 1.2)


class TestLoss:
    def test_identity(self):
        rho = random_state(0)
        assert np.allclose(loss_channel(rho, 1.0).data, rho.data)

    def test_full_loss(self):
        out = loss_channel(random_state(1), 0.0)
        assert np.allclose(out.data, FockDensityMatrix.vacuum(8).data, atol=1e-14)

    def test_single_photon(self):
        out = loss_channel(FockDensityMatrix.fock(1, 5), 0.9)
        assert np.allclose(np.diag(out.data).real[:2], [0.1, 0.9], atol=1e-14)

    def test_photon_number_scales(self):
        rho = random_state(2)
        assert photon_number(loss_channel(rho, 0.7)) == pytest.approx(0.7 * photon_number(rho),
                                                                      abs=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 10_000))
    def test_semigroup(self, e1, e2, seed):
        rho = random_state(seed)
        a = loss_channel(loss_channel(rho, e1), e2)
        b = loss_channel(rho, e1 * e2)
        assert np.max(np.abs(a.data - b.data)) < 1e-8

    def test_trace_preserved_on_random_states(self):
        drift = [abs(loss_channel(random_state(s), 0.37).trace - 1) for s in range(100)]
        assert max(drift) < 1e-9


class TestBeamSplitter:
    def test_unit_reflectivity_keeps_even_states(self):
        a = random_state(3, dim=5)
        b = squeezed_vacuum(0.3, 6).density()
        joint = TwoModeState.product(a, b)
        out = beamsplitter_apply(joint, 1.0)
        assert np.allclose(out.data, joint.data, atol=1e-12)

    def test_photon_routing(self):
        joint = TwoModeState.product(FockDensityMatrix.fock(1, 3), FockDensityMatrix.vacuum(3))
        out = beamsplitter_apply(joint, 0.9).partial_trace("A")
        assert out.populations[1] == pytest.approx(0.9, abs=1e-12)

    def test_vacuum_ancilla_is_loss(self):
        rho = random_state(4, dim=6)
        joint = TwoModeState.product(rho, FockDensityMatrix.vacuum(6))
        out = beamsplitter_apply(joint, 0.8).partial_trace("A")
        assert np.max(np.abs(out.data - loss_channel(rho, 0.8).data)) < 1e-8

    def test_photon_number_conserved(self):
        # cutoffs of 8 hold every block populated by two 4-level states
        a, b = random_state(5, dim=4).embed(8), random_state(6, dim=4).embed(8)
        joint = TwoModeState.product(a, b)
        n = np.diag(np.add.outer(np.arange(8), np.arange(8)).ravel())
        out = beamsplitter_apply(joint, 0.6)
        before = np.trace(joint.data @ n).real
        after = np.trace(out.data @ n).real
        assert after == pytest.approx(before, abs=1e-8)
        assert out.trace == pytest.approx(1, abs=1e-12)

    def test_squeezed_environment_p_variance(self):
        r = 0.5
        joint = TwoModeState.product(FockDensityMatrix.vacuum(30),
                                     squeezed_vacuum(r, 30).density())
        out = beamsplitter_apply(joint, 0.9)
        _, cov = quadrature_moments(out.partial_trace("A"))
        expected = 0.9 * 0.5 + 0.1 * 0.5 * math.exp(-2 * r)
        assert cov[1, 1] == pytest.approx(expected, abs=1e-6)

    def test_heisenberg_means(self):
        dim = 25
        ca = displacement_unitary(0.6, 0.2, dim, pad=30)[:, 0]
        cb = displacement_unitary(-0.4, 0.5, dim, pad=30)[:, 0]
        joint = TwoModeState.product(FockDensityMatrix.from_pure(PureFockVector.normalize(ca)),
                                     FockDensityMatrix.from_pure(PureFockVector.normalize(cb)))
        eta = 0.7
        out = beamsplitter_apply(joint, eta)
        ma, _ = quadrature_moments(out.partial_trace("A"))
        mb, _ = quadrature_moments(out.partial_trace("B"))
        t, s = math.sqrt(eta), math.sqrt(1 - eta)
        assert ma == pytest.approx([t * 0.6 + s * -0.4, t * 0.2 + s * 0.5], abs=1e-6)
        assert mb == pytest.approx([s * 0.6 - t * -0.4, s * 0.2 - t * 0.5], abs=1e-6)


class TestHomodyne:
    def test_vacuum_gaussian(self):
        pdf = homodyne_pdf(FockDensityMatrix.vacuum(10), 0.0, XS)
        assert trapz(pdf, XS) == pytest.approx(1, abs=1e-4)
        assert trapz(pdf * XS**2, XS) == pytest.approx(0.5, abs=1e-6)

    def test_single_photon_node(self):
        pdf = homodyne_pdf(FockDensityMatrix.fock(1, 10), 0.0, np.array([-1.0, 0.0, 1.0]))
        assert pdf[1] == pytest.approx(0.0, abs=1e-15)

    def test_squeezed_marginal(self):
        rho = squeezed_vacuum(0.5, 30).density()
        pdf = homodyne_pdf(rho, math.pi / 2, XS)
        assert trapz(pdf * XS**2, XS) == pytest.approx(0.5 * math.exp(-1), abs=1e-6)

    def test_unnormalized_rejected(self):
        with pytest.raises(FockError):
            homodyne_pdf(FockDensityMatrix(0.5 * np.eye(4)), 0.0, XS)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0, math.pi))
    def test_pdf_valid(self, seed, theta):
        pdf = homodyne_pdf(random_state(seed), theta, XS)
        assert pdf.min() > -1e-12
        assert trapz(pdf, XS) == pytest.approx(1, abs=1e-4)

    def test_project_product(self):
        a, b = random_state(7, dim=4), random_state(8, dim=5)
        cond, _ = homodyne_project(TwoModeState.product(a, b), "B", 0.3)
        assert np.allclose(cond.data, a.data)

    def test_project_correlated(self):
        joint = TwoModeState.product(FockDensityMatrix.fock(1, 2), FockDensityMatrix.vacuum(2))
        out = beamsplitter_apply(joint, 0.5)
        cond, _ = homodyne_project(out, "B", 0.0)
        assert cond.populations[1] > 0.1

    def test_project_weights_complete(self):
        joint = beamsplitter_apply(
            TwoModeState.product(random_state(9, dim=4).embed(6), FockDensityMatrix.vacuum(6)), 0.7)
        xs = np.linspace(-8, 8, 801)
        w = [homodyne_project(joint, "B", x)[1] for x in xs]
        assert trapz(np.array(w), xs) == pytest.approx(1, abs=1e-4)

    def test_impossible_outcome(self):
        joint = TwoModeState.product(FockDensityMatrix.vacuum(3), FockDensityMatrix.vacuum(3))
        with pytest.raises(ImpossibleOutcomeError):
            homodyne_project(joint, "B", 60.0)


class TestFidelity:
    def test_pure(self):
        psi = squeezed_vacuum(0.3, 10)
        assert fidelity_pure(psi.density(), psi) == pytest.approx(1, abs=1e-12)

    def test_lossy_photon(self):
        rho = loss_channel(FockDensityMatrix.fock(1, 5), 0.9)
        assert fidelity_pure(rho, PureFockVector(basis(1, 5))) == pytest.approx(0.9, abs=1e-10)

    def test_orthogonal(self):
        assert fidelity_pure(FockDensityMatrix.vacuum(5), PureFockVector(basis(1, 5))) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(FockError):
            fidelity_pure(FockDensityMatrix.vacuum(5), PureFockVector(basis(1, 6)))

    def test_uhlmann_matches_pure(self):
        rho = random_state(10)
        psi = PureFockVector.normalize(np.arange(1, 9, dtype=complex))
        assert fidelity(rho, psi.density()) == pytest.approx(fidelity_pure(rho, psi), abs=1e-7)

    def test_uhlmann_symmetric(self):
        a, b = random_state(11), random_state(12)
        assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-8)


def test_truncated_squeeze_does_not_warn_at_table_levels():
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        prepare_input("p_squeezed_photon", db_to_r(3.5), 0.62)
