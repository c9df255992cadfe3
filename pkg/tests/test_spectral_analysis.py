import numpy as np
import pytest
import scipy.linalg as sla

from fsilab.exceptions import NumericalError
from fsilab.models.spectral import SpectralReport
from fsilab.services.spectral_analysis import SpectralService


@pytest.fixture(scope="module")
def spectral_service():
    return SpectralService()


@pytest.fixture(scope="module")
def report8(gen8, spectral_service):
    return spectral_service.sweep_and_certify(gen8)


def test_spectrum_strictly_stable_and_conjugate_paired(gen8, spectral_service):
    report = spectral_service.compute_spectrum(gen8)
    eigs = report.eigenvalues()
    assert eigs.size == gen8.dim
    assert report.abscissa < -1e-6
    assert np.all(eigs.real < 0.0)
    for lam in eigs:
        assert np.min(np.abs(eigs - np.conj(lam))) <= 1e-8 * max(abs(lam), 1.0)
    assert max(report.eigen_residuals) <= 1e-8 * spectral_service.operator_norm(gen8)
    # sorted by decreasing real part
    assert np.all(np.diff(eigs.real) <= 0.0)


def test_slowest_mode_is_unit_eigenvector(gen8, spectral_service):
    v = spectral_service.slowest_mode(gen8)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    lam = np.vdot(v, gen8.a_red @ v)
    abscissa = spectral_service.compute_spectrum(gen8).abscissa
    assert lam.real == pytest.approx(abscissa, rel=1e-8)


def test_resolvent_norm_at_zero_is_inverse_norm(gen4, spectral_service):
    expected = np.linalg.norm(np.linalg.inv(gen4.a_red), 2)
    assert spectral_service.resolvent_norm(gen4, 0.0) == pytest.approx(expected, rel=1e-8)


def test_inverse_method_matches_dense(gen8, spectral_service):
    for beta in (0.0, 1.5, 40.0):
        dense = spectral_service.resolvent_norm(gen8, beta, method="dense")
        lanczos = spectral_service.resolvent_norm(gen8, beta, method="inverse")
        assert lanczos == pytest.approx(dense, rel=1e-6)


def test_resolvent_norm_even_in_beta(gen8, spectral_service):
    for beta in (0.3, 2.0, 17.0):
        plus = spectral_service.resolvent_norm(gen8, beta)
        assert spectral_service.resolvent_norm(gen8, -beta) == pytest.approx(plus, rel=1e-10)


def test_resolvent_norm_dominates_inverse_distance(gen8, spectral_service):
    eigs = spectral_service.compute_spectrum(gen8).eigenvalues()
    for beta in np.linspace(0.0, 50.0, 11):
        dist = np.min(np.abs(1j * beta - eigs))
        assert spectral_service.resolvent_norm(gen8, beta) >= (1.0 - 1e-8) / dist


def test_resolvent_norm_tail(gen8, spectral_service):
    beta = 50.0 * spectral_service.operator_norm(gen8)
    assert beta * spectral_service.resolvent_norm(gen8, beta) == pytest.approx(1.0, rel=0.05)


def test_shift_on_the_spectrum_raises(gen4, spectral_service):
    singular = gen4.model_copy(update={"a_red": np.zeros_like(gen4.a_red)})
    with pytest.raises(NumericalError):
        spectral_service.resolvent_norm(singular, 0.0)


def test_unknown_norm_method_rejected(gen4, spectral_service):
    with pytest.raises(ValueError):
        spectral_service.resolvent_norm(gen4, 1.0, method="power")


def test_default_beta_grid(spectral_service):
    grid = spectral_service.default_beta_grid(norm=40.0)
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(4e4)
    assert 10.0 in grid
    assert np.all(np.diff(grid) > 0.0)
    short = spectral_service.default_beta_grid(norm=40.0, beta_max=5.0)
    assert short[-1] == 5.0 and short.size == 100


def test_refined_grid_keeps_range_and_samples(spectral_service):
    betas = np.linspace(0.0, 10.0, 11)
    norms = np.exp(-((betas - 3.0) ** 2))
    eigs = np.array([-0.01 + 6.0j, -0.01 - 6.0j])
    fine = spectral_service.refine_grid(betas, norms, eigs)
    assert set(betas.tolist()) <= set(fine.tolist())
    assert fine.min() >= 0.0 and fine.max() <= 10.0
    assert np.sum(np.abs(fine - 6.0) <= 0.02 + 1e-12) >= 9
    assert np.sum((fine > 2.0) & (fine < 4.0)) > 10


def test_sweep_preserves_grid_order(gen4, spectral_service):
    betas = np.array([5.0, 0.0, 1.0, 2.5])
    norms = spectral_service.sweep(gen4, betas, max_workers=2)
    expected = [spectral_service.resolvent_norm(gen4, b) for b in betas]
    assert np.allclose(norms, expected, rtol=1e-12)


def test_sweep_maximum_is_interior(report8):
    assert report8.sup_interior
    assert not report8.boundary_warning
    betas, norms = report8.sweep_arrays()
    assert report8.c_sup == norms.max()
    assert report8.beta_star == betas[np.argmax(norms)]


def test_sweep_respects_spectral_lower_bound(report8):
    assert report8.spectral_bound_gap >= -1e-8 * report8.c_sup
    # the refined grid hits the imaginary part of the slowest mode
    assert report8.c_sup >= (1.0 - 1e-8) / abs(report8.abscissa)


def test_sweep_tail_approaches_free_decay(report8):
    assert report8.tail_deviation is not None
    assert report8.tail_deviation <= 0.1


def test_decay_certificate(report8):
    cert = report8.certificate
    assert cert.omega == pytest.approx(abs(report8.abscissa))
    assert cert.overshoot >= 1.0
    assert cert.horizon == pytest.approx(5.0 / cert.omega)


def test_certificate_uses_exact_propagator(gen4, spectral_service):
    abscissa = spectral_service.compute_spectrum(gen4).abscissa
    cert = spectral_service.decay_certificate(gen4, abscissa, samples=10)
    t = cert.horizon
    exact = np.linalg.norm(sla.expm(gen4.a_red * t), 2) * np.exp(cert.omega * t)
    assert cert.overshoot >= exact * (1.0 - 1e-8)


def test_report_json_round_trip(report8):
    back = SpectralReport.model_validate_json(report8.model_dump_json())
    assert back == report8
    assert np.array_equal(back.eigenvalues(), report8.eigenvalues())


def test_spectrum_stable_with_inertia(build, spectral_service):
    for rho in (0.0, 1.0):
        report = spectral_service.compute_spectrum(build(8, rho))
        assert report.abscissa < 0.0


@pytest.mark.slow
def test_sup_norm_stays_bounded_under_refinement(build, spectral_service):
    c8 = spectral_service.sweep_and_certify(build(8, 0.0), certify=False).c_sup
    c16 = spectral_service.sweep_and_certify(build(16, 0.0), certify=False).c_sup
    assert 1.0 / 3.0 <= c16 / c8 <= 3.0


def test_abscissa_stable_under_refinement(gen8, gen16, spectral_service):
    coarse = spectral_service.compute_spectrum(gen8).abscissa
    fine = spectral_service.compute_spectrum(gen16).abscissa
    assert coarse < 0.0 and fine < 0.0
    assert 0.5 <= fine / coarse <= 2.0


def test_inertia_weakens_decay_and_raises_resolvent_bound(gen8, gen8_rho1, report8, spectral_service):
    with_inertia = spectral_service.sweep_and_certify(gen8_rho1, certify=False)
    assert report8.abscissa < with_inertia.abscissa < 0.0
    assert with_inertia.c_sup > report8.c_sup
    assert with_inertia.c_sup >= (1.0 - 1e-8) / abs(with_inertia.abscissa)
