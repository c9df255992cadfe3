import numpy as np
import pytest

from fsilab.exceptions import NumericalError
from fsilab.models.state import State
from fsilab.models.trajectory import FitMode, Formulation, StepMethod, TrajectoryRecord
from fsilab.services.semigroup_sim import STEP_PHASE, SimulationService
from fsilab.services.spectral_analysis import SpectralService


@pytest.fixture(scope="module")
def simulation_service(generator_service):
    return SimulationService(generator_service)


def synthetic_record(times, energies):
    n = len(times)
    return TrajectoryRecord(
        grid_id="synthetic",
        rho=0.0,
        dt=float(times[1] - times[0]),
        method=StepMethod.MIDPOINT,
        formulation=Formulation.REDUCED,
        times=list(times),
        energies=list(energies),
        dissipation=[0.0] * n,
        mean_w1=[0.0] * n,
    )


def test_default_dt_resolves_the_fastest_mode(gen8, simulation_service):
    dt = simulation_service.default_dt(gen8)
    assert dt <= (1.0 / 8.0) ** 2 / 4.0
    fastest = np.max(np.abs(np.linalg.eigvals(gen8.a_red)))
    assert fastest * dt <= STEP_PHASE * (1.0 + 1e-12)
    assert simulation_service.default_dt(gen8) == dt


def test_zero_state_stays_zero(gen4, simulation_service):
    record = simulation_service.simulate(gen4, np.zeros(gen4.dim), t_final=0.1)
    assert all(e == 0.0 for e in record.energies)
    assert record.energy_balance_gap == 0.0


def test_zero_step_rejected(gen4, simulation_service):
    with pytest.raises(ValueError):
        simulation_service.step_reduced(gen4, np.ones(gen4.dim), 0.0)
    with pytest.raises(ValueError):
        simulation_service.step_dae(gen4, np.zeros(gen4.n_coordinates), 0.0)
    with pytest.raises(ValueError):
        simulation_service.simulate(gen4, np.ones(gen4.dim), t_final=1.0, dt=0.0)
    with pytest.raises(ValueError):
        simulation_service.simulate(gen4, np.ones(gen4.dim), t_final=0.0)


def test_midpoint_step_is_reversible(gen8, simulation_service, rng):
    z = rng.standard_normal(gen8.dim)
    dt = simulation_service.default_dt(gen8)
    forward = simulation_service.step_reduced(gen8, z, dt)
    back = simulation_service.step_reduced(gen8, forward, -dt)
    assert np.allclose(back, z, rtol=0, atol=1e-10 * np.linalg.norm(z))


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_energy_balance_and_monotone_decay(build, simulation_service, generator_service, rho):
    gen = build(8, rho)
    y0 = generator_service.random_state(gen, np.random.default_rng(7))
    record = simulation_service.simulate(gen, y0, t_final=0.5)
    energies = np.array(record.energies)
    assert np.all(np.diff(energies) <= 1e-12 * energies[0])
    assert record.energy_balance_gap <= 1e-6
    assert record.mean_drift <= 1e-10 * np.sqrt(energies[0])


def test_backward_euler_dissipates_at_least_the_viscous_loss(gen8, simulation_service, generator_service, rng):
    y0 = generator_service.random_state(gen8, rng)
    record = simulation_service.simulate(gen8, y0, t_final=0.2, dt=0.01, method=StepMethod.BACKWARD_EULER)
    e0 = record.energies[0]
    for e, d in zip(record.energies, record.dissipation):
        assert e0 - e - d >= -1e-12 * e0
    assert np.all(np.diff(record.energies) <= 0.0)


def test_slowest_mode_decays_at_its_rate(gen8, simulation_service):
    spectral = SpectralService()
    v = spectral.slowest_mode(gen8)
    lam = np.vdot(v, gen8.a_red @ v)
    t_final = 1.0 / abs(lam.real)
    record = simulation_service.simulate(gen8, v, t_final=t_final, dt=t_final / 400)
    expected = record.energies[0] * np.exp(2.0 * lam.real * np.array(record.times))
    assert np.allclose(record.energies, expected, rtol=0.01)


def test_midpoint_is_second_order(gen8, simulation_service):
    v = SpectralService().slowest_mode(gen8)
    lam = np.vdot(v, gen8.a_red @ v)
    t_final = 1.0 / abs(lam)
    exact = np.exp(lam * t_final) * v
    errors = []
    for steps in (8, 16, 32):
        z = v.copy()
        dt = t_final / steps
        for _ in range(steps):
            z = simulation_service.step_reduced(gen8, z, dt)
        errors.append(np.linalg.norm(z - exact))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.8)


def test_saddle_point_formulation_matches_reduced(gen4, simulation_service, generator_service, rng):
    y0 = generator_service.random_state(gen4, rng)
    reduced = simulation_service.simulate(gen4, y0, t_final=0.1, dt=0.005)
    dae = simulation_service.simulate(gen4, y0, t_final=0.1, dt=0.005, formulation=Formulation.DAE)
    assert np.allclose(dae.energies, reduced.energies, rtol=1e-8, atol=1e-12 * reduced.energies[0])


def test_state_step_formulations_agree(gen8_rho1, simulation_service, generator_service, rng):
    os_ = generator_service.operator_service
    y0 = generator_service.random_state(gen8_rho1, rng)
    dt = simulation_service.default_dt(gen8_rho1)
    a = simulation_service.step(gen8_rho1, y0, dt)
    b = simulation_service.step(gen8_rho1, y0, dt, formulation=Formulation.DAE)
    gap = os_.energy_norm(a.minus(b), gen8_rho1.ops.metric)
    assert gap <= 1e-8 * os_.energy_norm(y0, gen8_rho1.ops.metric)


def test_saddle_point_multiplier_is_the_midpoint_pressure(gen8, simulation_service, generator_service, rng):
    y = generator_service.random_state(gen8, rng)
    check = simulation_service.pressure_cross_check(gen8, y, 1e-4)
    assert check["midpoint_gap"] <= 1e-8


def test_endpoint_pressure_gap_is_first_order(gen8, simulation_service):
    gs = simulation_service.generator_service
    v = SpectralService().slowest_mode(gen8).real
    y = gs.from_reduced(gen8, v)
    coarse = simulation_service.pressure_cross_check(gen8, y, 1e-4)["endpoint_gap"]
    fine = simulation_service.pressure_cross_check(gen8, y, 5e-5)["endpoint_gap"]
    assert coarse / fine >= 1.5


def test_exponential_fit_recovers_synthetic_rate(simulation_service):
    t = np.linspace(0.0, 5.0, 101)
    fit = simulation_service.fit_decay(synthetic_record(t, 3.0 * np.exp(-2.0 * t)))
    assert fit.omega_fit == pytest.approx(2.0, abs=1e-6)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-6)
    assert fit.overshoot == pytest.approx(1.0, rel=1e-6)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.samples >= 80


def test_rational_fit_takes_sup_over_whole_trajectory(simulation_service):
    t = np.linspace(0.0, 20.0, 201)
    e = 1.0 / (1.0 + t) ** 2
    fit = simulation_service.fit_decay(synthetic_record(t, e), mode=FitMode.RATIONAL)
    assert fit.bounded
    # t E(t) peaks at t = 1, before the window opens
    assert fit.window_start > 1.0
    assert fit.sup_t_energy == pytest.approx(0.25)
    assert fit.sup_t_energy == pytest.approx(np.max(t * e))


def test_rational_fit_flags_growing_t_energy(simulation_service):
    t = np.linspace(0.0, 20.0, 201)
    fit = simulation_service.fit_decay(synthetic_record(t, 1.0 / np.sqrt(1.0 + t)), mode=FitMode.RATIONAL)
    assert not fit.bounded


def test_fit_needs_enough_samples(simulation_service):
    t = np.linspace(0.0, 1.0, 30)
    with pytest.raises(NumericalError):
        simulation_service.fit_decay(synthetic_record(t, np.exp(-t)), window=(0.5, 1.0))


def test_dissipation_matrix_matches_energy_identity(gen8, simulation_service, generator_service, rng):
    z = rng.standard_normal(gen8.dim)
    d = simulation_service.dissipation_matrix(gen8)
    assert np.allclose(d, d.T)
    diss = generator_service.dissipation(gen8, generator_service.from_reduced(gen8, z))
    assert z @ d @ z == pytest.approx(diss, rel=1e-8)
    assert z @ d @ z == pytest.approx(-z @ gen8.a_red @ z, rel=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("n", [8, 16])
def test_fitted_rate_matches_spectral_abscissa(build, simulation_service, generator_service, n):
    gen = build(n, 0.0)
    abscissa = SpectralService().compute_spectrum(gen).abscissa
    y0 = generator_service.random_state(gen, np.random.default_rng(3))
    record = simulation_service.simulate(gen, y0, t_final=10.0 / abs(abscissa))
    fit = simulation_service.fit_decay(record)
    assert abscissa < 0.0
    assert fit.r_squared >= 0.99
    assert fit.omega_fit == pytest.approx(2.0 * abs(abscissa), rel=0.1)


def test_state_snapshots(gen4, simulation_service, generator_service, rng):
    y0 = generator_service.random_state(gen4, rng)
    record = simulation_service.simulate(gen4, y0, t_final=0.1, dt=0.01, snapshot_every=5)
    assert record.snapshot_times == pytest.approx([0.0, 0.05, 0.1])
    assert len(record.snapshots) == 3
    assert isinstance(generator_service.from_reduced(gen4, record.snapshots[-1]), State)


@pytest.mark.slow
def test_inertia_slows_the_measured_decay(gen8, gen8_rho1, simulation_service, generator_service):
    spectral = SpectralService()
    abscissa = spectral.compute_spectrum(gen8).abscissa
    t_final = 10.0 / abs(abscissa)
    fits = {}
    for gen in (gen8, gen8_rho1):
        y0 = generator_service.random_state(gen, np.random.default_rng(3))
        fits[gen.rho] = simulation_service.fit_decay(simulation_service.simulate(gen, y0, t_final=t_final))
    assert fits[1.0].omega_fit < fits[0.0].omega_fit


@pytest.mark.slow
def test_inertia_keeps_t_energy_bounded(gen8_rho1, simulation_service, generator_service):
    report = SpectralService().compute_spectrum(gen8_rho1)
    slowest = report.eigenvalues()[0]
    t_final = 5.0 / abs(slowest.real)
    dt = min(t_final / 20000, STEP_PHASE / abs(slowest))
    y0 = generator_service.random_state(gen8_rho1, np.random.default_rng(3))
    record = simulation_service.simulate(gen8_rho1, y0, t_final=t_final, dt=dt)
    fit = simulation_service.fit_decay(record, mode=FitMode.RATIONAL)
    assert fit.bounded
    t, e = np.array(record.times), np.array(record.energies)
    assert fit.sup_t_energy == pytest.approx(np.max(t * e))
    # t E(t) falls off after its peak
    assert (t * e)[-1] < 0.5 * fit.sup_t_energy
