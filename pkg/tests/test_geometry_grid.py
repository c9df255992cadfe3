import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsilab.exceptions import ConfigurationError
from fsilab.models.geometry import BoundaryKind, DimMode, GeometryConfig, OMEGA_CODE, S_CODE
from fsilab.services.geometry_grid import GridService
from tests.conftest import analogue, box


@pytest.fixture(scope="module")
def grid_service():
    return GridService()


def test_analogue_counts(grid_service):
    topology = grid_service.build_grid(analogue(8))
    assert topology.n_cells == 64
    assert topology.n_omega == 8
    assert topology.n_plate == 8
    assert topology.plate_dim == 1


def test_box_omega_patch_and_normal(grid_service):
    topology = grid_service.build_grid(box(4))
    assert topology.n_omega == 16
    assert topology.n_plate == 16
    for f in topology.omega_faces:
        assert topology.omega_normal(int(f)) == (0.0, 0.0, 1.0)


def test_analogue_normal(grid_service):
    topology = grid_service.build_grid(analogue(4))
    assert topology.omega_normal(int(topology.omega_faces[0])) == (0.0, 1.0)


def test_omega_normal_rejects_s_face(grid_service):
    topology = grid_service.build_grid(analogue(4))
    with pytest.raises(ValueError):
        topology.omega_normal(int(topology.s_faces[0]))


@pytest.mark.parametrize("n", [1, 0, -3])
def test_degenerate_grid_rejected(grid_service, n):
    with pytest.raises(ConfigurationError):
        grid_service.build_grid(GeometryConfig(dim_mode=DimMode.ANALOGUE2D, n=n))


def test_classify_boundary(grid_service):
    topology = grid_service.build_grid(analogue(4))
    axis = topology.face_axis
    centers = topology.face_centers
    top = int(np.flatnonzero((axis == 1) & np.isclose(centers[:, 1], 1.0))[0])
    bottom = int(np.flatnonzero((axis == 1) & (centers[:, 1] == 0.0))[0])
    side = int(np.flatnonzero((axis == 0) & (centers[:, 0] == 0.0))[0])
    assert grid_service.classify_boundary(topology, top) == BoundaryKind.OMEGA
    assert grid_service.classify_boundary(topology, bottom) == BoundaryKind.S
    assert grid_service.classify_boundary(topology, side) == BoundaryKind.S


def test_classify_rejects_interior_and_out_of_range(grid_service):
    topology = grid_service.build_grid(analogue(4))
    with pytest.raises(ValueError):
        grid_service.classify_boundary(topology, int(topology.interior_faces[0]))
    with pytest.raises(ValueError):
        grid_service.classify_boundary(topology, topology.n_faces)


@given(n=st.integers(min_value=2, max_value=24), mode=st.sampled_from(list(DimMode)))
def test_boundary_partition(n, mode):
    if mode == DimMode.BOX3D:
        n = min(n, 8)
    topology = GridService().build_grid(GeometryConfig(dim_mode=mode, n=n))
    s, omega = set(topology.s_faces.tolist()), set(topology.omega_faces.tolist())
    assert not s & omega
    assert s | omega == set(topology.boundary_faces.tolist())
    assert np.all(topology.face_kind[topology.omega_faces] == OMEGA_CODE)
    assert np.all(topology.face_kind[topology.s_faces] == S_CODE)
    # every boundary face sits next to exactly one cell, interior faces next to none
    assert np.all(topology.face_cell[topology.boundary_faces] >= 0)
    assert np.all(topology.face_cell[topology.interior_faces] == -1)


@given(n=st.integers(min_value=2, max_value=40))
def test_omega_faces_pair_one_to_one_with_plate_dofs(n):
    topology = GridService().build_grid(analogue(n))
    assert topology.n_omega == topology.n_plate
    assert sorted(topology.omega_plate.tolist()) == list(range(topology.n_plate))
    centers = topology.face_centers[topology.omega_faces]
    assert np.array_equal(centers, topology.plate_nodes[topology.omega_plate])


def test_box_plate_dofs_at_face_centres(grid_service):
    topology = grid_service.build_grid(box(3))
    assert topology.plate_shape == (3, 3)
    assert np.allclose(topology.plate_nodes[:, 2], 1.0)
    # C-order over the tangential index, first axis slowest
    assert np.allclose(topology.plate_nodes[:3, :2], [[1 / 6, 1 / 6], [1 / 6, 0.5], [1 / 6, 5 / 6]])
    # the clamped edges sit half a cell beyond the outer DOFs
    assert topology.plate_nodes[:, :2].min() == pytest.approx(0.5 * topology.h)
