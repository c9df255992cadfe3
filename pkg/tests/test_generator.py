import numpy as np
import pytest

from fsilab.exceptions import NumericalError
from fsilab.models.geometry import DimMode
from fsilab.models.state import State
from fsilab.services.generator import GeneratorService
from tests.conftest import analogue


@pytest.mark.parametrize(
    "n, dim_mode, expected",
    [
        (2, DimMode.ANALOGUE2D, 3),
        (4, DimMode.ANALOGUE2D, 15),
        (8, DimMode.ANALOGUE2D, 63),
        (2, DimMode.BOX3D, 11),
        (4, DimMode.BOX3D, 111),
    ],
)
def test_reduced_dimension(build, n, dim_mode, expected):
    gen = build(n, 0.0, dim_mode)
    assert gen.dim == expected
    assert gen.dim == GeneratorService.expected_reduced_dim(gen.ops.topology)


@pytest.mark.parametrize("n", [4, 8, 16])
@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_energy_identity(build, generator_service, n, rho):
    gen = build(n, rho)
    assert generator_service.check_dissipativity(gen, samples=100, seed=n) <= 1e-8


def test_energy_identity_through_the_state_route(gen8_rho1, generator_service, rng):
    os_ = generator_service.operator_service
    metric = gen8_rho1.ops.metric
    for _ in range(10):
        s = generator_service.random_state(gen8_rho1, rng, complex_valued=True)
        a = generator_service.apply_generator(gen8_rho1, s)
        value = os_.energy_inner_product(a, s, metric)
        diss = generator_service.dissipation(gen8_rho1, s)
        coupling = generator_service.coupling_term(gen8_rho1, s)
        scale = abs(value)
        assert abs(value.real + diss) <= 1e-8 * scale
        assert abs(value.imag - coupling) <= 1e-8 * scale


def test_energy_identity_box(build, generator_service):
    gen = build(3, 0.5, DimMode.BOX3D)
    assert generator_service.check_dissipativity(gen, samples=20, seed=3) <= 1e-8


def test_reduced_generator_is_real_and_metric_is_identity(gen8):
    assert not np.iscomplexobj(gen8.a_red)
    assert np.allclose(gen8.metric_red, np.eye(gen8.dim))
    gram = gen8.basis.T @ (gen8.coord_mass @ gen8.basis)
    assert np.allclose(gram, np.eye(gen8.dim), atol=1e-8)


def test_spectrum_in_closed_left_half_plane(build):
    for rho in (0.0, 0.1, 1.0):
        eigs = np.linalg.eigvals(build(8, rho).a_red)
        assert eigs.real.max() <= 1e-10


def test_random_states_satisfy_constraints(gen8_rho1, generator_service, rng):
    gen = gen8_rho1
    fluid, plate = gen.ops.fluid, gen.ops.plate
    s = generator_service.random_state(gen, rng)
    scale = np.max(np.abs(s.u))
    assert np.max(np.abs(fluid.divergence @ s.u)) * fluid.h <= 1e-9 * scale
    assert not np.any(fluid.s_trace @ s.u)
    assert np.allclose(fluid.omega_trace @ s.u, plate.to_faces @ s.w2, rtol=0, atol=1e-12 * scale)
    assert abs(np.sum(s.w1)) <= 1e-9 * np.sum(np.abs(s.w1))
    assert abs(np.sum(s.w2)) <= 1e-9 * np.sum(np.abs(s.w2))


def test_projection_leaves_constrained_state_unchanged(gen8, generator_service, rng):
    s = generator_service.random_state(gen8, rng)
    p = generator_service.project_to_state(gen8, s)
    assert np.allclose(p.u, s.u, rtol=0, atol=1e-9 * np.max(np.abs(s.u)))
    assert np.allclose(p.w1, s.w1, rtol=0, atol=1e-9 * np.max(np.abs(s.w1)))
    assert np.allclose(p.w2, s.w2, rtol=0, atol=1e-9 * np.max(np.abs(s.w2)))


def test_projection_enforces_constraints(gen8, generator_service):
    topology, fluid = gen8.ops.topology, gen8.ops.fluid
    raw = State(u=np.ones(topology.n_faces), w1=np.zeros(gen8.n_plate), w2=np.zeros(gen8.n_plate))
    p = generator_service.project_to_state(gen8, raw)
    assert np.max(np.abs(fluid.divergence @ p.u)) * fluid.h <= 1e-9
    assert not np.any(fluid.s_trace @ p.u)


def test_projection_is_self_adjoint(gen8_rho1, generator_service, rng):
    gen = gen8_rho1
    os_ = generator_service.operator_service
    topology = gen.ops.topology

    def raw():
        return State(
            u=rng.standard_normal(topology.n_faces),
            w1=rng.standard_normal(gen.n_plate),
            w2=rng.standard_normal(gen.n_plate),
        )

    for _ in range(5):
        a, b = raw(), raw()
        pa = generator_service.project_to_state(gen, a)
        pb = generator_service.project_to_state(gen, b)
        lhs = os_.energy_inner_product(pa, b, gen.ops.metric)
        rhs = os_.energy_inner_product(a, pb, gen.ops.metric)
        bound = os_.energy_norm(a, gen.ops.metric) * os_.energy_norm(b, gen.ops.metric)
        assert abs(lhs - rhs) <= 1e-10 * bound


def test_apply_to_zero_is_zero(gen8, generator_service):
    zero = State.zeros(gen8.ops.topology.n_faces, gen8.n_plate)
    a = generator_service.apply_generator(gen8, zero)
    assert not np.any(a.u) and not np.any(a.w1) and not np.any(a.w2)


def test_displacement_rate_is_velocity(gen8_rho1, generator_service, rng):
    s = generator_service.random_state(gen8_rho1, rng)
    a = generator_service.apply_generator(gen8_rho1, s)
    assert np.array_equal(a.w1, s.w2)


def test_apply_matches_reduced_generator(gen8_rho1, generator_service, rng):
    gen = gen8_rho1
    z = rng.standard_normal(gen.dim)
    a, residual = generator_service.apply_with_residual(gen, generator_service.from_reduced(gen, z))
    assert residual <= 1e-8
    expected = generator_service.apply_reduced(gen, z)
    assert np.allclose(generator_service.to_reduced(gen, a), expected, rtol=0, atol=1e-8 * np.linalg.norm(expected))


def test_apply_is_linear_and_real(gen8, generator_service, rng):
    a = generator_service.random_state(gen8, rng, complex_valued=True)
    b = generator_service.random_state(gen8, rng, complex_valued=True)
    lhs = generator_service.apply_generator(gen8, a.scaled(2.0 - 1.0j).plus(b))
    rhs = generator_service.apply_generator(gen8, a).scaled(2.0 - 1.0j).plus(generator_service.apply_generator(gen8, b))
    assert np.allclose(lhs.u, rhs.u, atol=1e-9 * np.max(np.abs(lhs.u)))
    assert np.allclose(lhs.w2, rhs.w2, atol=1e-9 * np.max(np.abs(lhs.w2)))

    conj = generator_service.apply_generator(gen8, a.conj())
    direct = generator_service.apply_generator(gen8, a).conj()
    assert np.allclose(conj.u, direct.u, atol=1e-12 * np.max(np.abs(direct.u)))


def test_plate_velocity_mean_stays_zero(gen8, generator_service, rng):
    s = generator_service.random_state(gen8, rng)
    a = generator_service.apply_generator(gen8, s)
    assert abs(np.sum(a.w2)) <= 1e-8 * np.sum(np.abs(a.w2))


def test_coordinates_round_trip(gen8, generator_service, rng):
    s = generator_service.random_state(gen8, rng)
    back = generator_service.from_coordinates(gen8, generator_service.to_coordinates(gen8, s))
    assert np.allclose(back.u, s.u, atol=1e-14)


def test_mismatched_rho_rejected(generator_service):
    ops = generator_service.operator_service.assemble(analogue(4), 0.0)
    maps = generator_service.pressure_service.build_pressure_maps(ops)
    with pytest.raises(ValueError):
        generator_service.assemble_generator(ops, maps, 1.0)


def test_generators_are_cached(build):
    assert build(4, 0.0) is build(4, 0.0)
    assert build(4, 0.0) is not build(4, 1.0)


def test_dissipativity_violation_raises(gen4, generator_service):
    broken = gen4.model_copy(update={"a_red": gen4.a_red + 0.5 * np.eye(gen4.dim)})
    with pytest.raises(NumericalError):
        generator_service.check_dissipativity(broken, samples=5)
