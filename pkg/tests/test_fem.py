"""Tests for core/fem.py."""

import numpy as np
import pytest

from mpmfem.core.errors import DegenerateSpec, SceneParseError
from mpmfem.core.fem import (
    FemMesh,
    RigidMotion,
    compute_lumped_mass,
    element_deformation_gradients,
    evaluate_dirichlet_script,
    fem_elastic_energy,
    fem_elastic_gradient,
    fem_elastic_hessian_stencils,
    read_triangle_mesh,
)
from mpmfem.core.linalg import project_stencil_psd
from mpmfem.core.models import Material, RigidScript
from tests.helpers import central_gradient


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestLumpedMass:
    def test_single_triangle(self):
        """rho=3 on a unit-area triangle puts mass 1 on every node."""
        mass = compute_lumped_mass(np.array([[0, 1, 2]]), np.array([1.0]), 3.0, 3)
        np.testing.assert_allclose(mass, [1.0, 1.0, 1.0])

    def test_total_mass(self, square_mesh, material):
        assert square_mesh.mass.sum() == pytest.approx(material.density * 1.0)
        assert square_mesh.rest_volume.sum() == pytest.approx(1.0)

    def test_isolated_node_has_zero_mass(self):
        mass = compute_lumped_mass(np.array([[0, 1, 2]]), np.array([0.5]), 1.0, 4)
        assert mass[3] == 0.0


class TestFemMesh:
    def test_kinematics_default_to_rest(self, square_mesh):
        assert square_mesh.velocities.shape == square_mesh.positions.shape
        assert not square_mesh.velocities.any()
        assert not square_mesh.accelerations.any()

    def test_square_mesh_layout(self, square_mesh):
        assert square_mesh.n_nodes == 9
        assert square_mesh.n_elements == 8
        assert len(square_mesh.boundary_edges) == 8
        assert np.all(square_mesh.rest_volume > 0.0)

    def test_clockwise_triangle_flipped(self, material):
        vertices = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        mesh = FemMesh.from_arrays(vertices, np.array([[0, 1, 2]]), material)
        assert mesh.rest_volume[0] == pytest.approx(0.5)
        F = element_deformation_gradients(mesh, mesh.rest)
        np.testing.assert_allclose(F[0], np.eye(2), atol=1e-14)

    def test_zero_area_rejected(self, material):
        vertices = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(DegenerateSpec, match="zero area"):
            FemMesh.from_arrays(vertices, np.array([[0, 1, 2]]), material)

    def test_bad_index_rejected(self, material):
        with pytest.raises(DegenerateSpec):
            FemMesh.from_arrays(np.zeros((3, 2)), np.array([[0, 1, 5]]), material)

    def test_concatenate_offsets(self, square_mesh, material):
        other = FemMesh.from_arrays(
            np.array([[2.0, 0.0], [3.0, 0.0], [2.0, 1.0]]), np.array([[0, 1, 2]]), material, object_index=1
        )
        joined = FemMesh.concatenate([square_mesh, other])
        assert joined.n_nodes == 12
        np.testing.assert_array_equal(joined.triangles[-1], [9, 10, 11])
        assert set(joined.boundary_edges[-3:].ravel()) == {9, 10, 11}
        assert joined.node_object[-1] == 1
        assert joined.edge_object[-1] == 1

    def test_concatenate_nothing(self):
        assert FemMesh.concatenate([]).n_nodes == 0


class TestElasticEnergy:
    def test_rest_state(self, square_mesh):
        assert fem_elastic_energy(square_mesh, square_mesh.rest) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(fem_elastic_gradient(square_mesh, square_mesh.rest), 0.0, atol=1e-9)

    def test_rigid_motion_has_no_energy(self, square_mesh):
        x = square_mesh.rest @ _rotation(0.8).T + np.array([3.0, -1.0])
        assert fem_elastic_energy(square_mesh, x) == pytest.approx(0.0, abs=1e-6)

    def test_rotation_invariant(self, square_mesh):
        rng = np.random.default_rng(5)
        x = square_mesh.rest + rng.uniform(-0.05, 0.05, square_mesh.rest.shape)
        rotated = x @ _rotation(1.3).T
        assert fem_elastic_energy(square_mesh, rotated) == pytest.approx(
            fem_elastic_energy(square_mesh, x), rel=1e-9
        )

    def test_affine_map_reproduced(self, square_mesh):
        A = np.array([[1.2, 0.1], [-0.05, 0.9]])
        F = element_deformation_gradients(square_mesh, square_mesh.rest @ A.T + np.array([0.3, 0.4]))
        np.testing.assert_allclose(F, np.broadcast_to(A, F.shape), atol=1e-12)

    def test_gradient_matches_finite_differences(self, square_mesh):
        rng = np.random.default_rng(6)
        x = square_mesh.rest + rng.uniform(-0.05, 0.05, square_mesh.rest.shape)
        grad = fem_elastic_gradient(square_mesh, x)
        fd = central_gradient(lambda y: fem_elastic_energy(square_mesh, y), x, h=1e-6)
        assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(grad)

    def test_projected_hessian_blocks_psd(self, square_mesh):
        rng = np.random.default_rng(8)
        x = square_mesh.rest + rng.uniform(-0.1, 0.1, square_mesh.rest.shape)
        nodes, blocks = fem_elastic_hessian_stencils(square_mesh, x)
        assert nodes.shape == (8, 3)
        projected = project_stencil_psd(blocks)
        scale = np.abs(blocks).max()
        assert np.linalg.eigvalsh(projected).min() >= -1e-9 * scale

    def test_per_element_stiffness(self):
        soft = Material(youngs_modulus=1.0, poisson_ratio=0.3, density=1.0)
        stiff = Material(youngs_modulus=10.0, poisson_ratio=0.3, density=1.0)
        vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        a = FemMesh.from_arrays(vertices, np.array([[0, 1, 2]]), soft)
        b = FemMesh.from_arrays(vertices, np.array([[0, 1, 2]]), stiff)
        x = vertices * np.array([1.2, 1.0])
        assert fem_elastic_energy(b, x) == pytest.approx(10.0 * fem_elastic_energy(a, x))


class TestDirichletScript:
    def test_constant_velocity(self):
        """Plate pressed down at 1 m/s has moved 0.3 m after 0.3 s."""
        motion = evaluate_dirichlet_script(RigidScript(velocity=(0.0, -1.0)), 0.3)
        np.testing.assert_allclose(motion.translation, [0.0, -0.3])
        np.testing.assert_allclose(motion.apply(np.array([[1.0, 1.0]])), [[1.0, 0.7]])

    def test_keyframes_interpolate_and_clamp(self):
        script = RigidScript(keyframes=[(0.6, 0.0, -0.6), (1.1, -0.5, -0.6), (1.7, -0.5, 0.0)])
        np.testing.assert_allclose(evaluate_dirichlet_script(script, 0.3).translation, [0.0, -0.3])
        np.testing.assert_allclose(evaluate_dirichlet_script(script, 1.1).translation, [-0.5, -0.6])
        np.testing.assert_allclose(evaluate_dirichlet_script(script, 1.4).translation, [-0.5, -0.3])
        np.testing.assert_allclose(evaluate_dirichlet_script(script, 5.0).translation, [-0.5, 0.0])

    def test_rotation_about_pivot(self):
        script = RigidScript(angular_velocity=np.pi / 2, pivot=(1.0, 0.0))
        motion = evaluate_dirichlet_script(script, 1.0)
        np.testing.assert_allclose(motion.apply(np.array([[2.0, 0.0]])), [[1.0, 1.0]], atol=1e-12)
        np.testing.assert_allclose(motion.inverse_apply(np.array([[1.0, 1.0]])), [[2.0, 0.0]], atol=1e-12)

    def test_identity(self):
        assert evaluate_dirichlet_script(RigidScript(), 2.0).is_identity
        assert not RigidMotion(np.array([0.0, 1.0]), 0.0, np.zeros(2)).is_identity


class TestReadTriangleMesh:
    def test_parses_vertices_and_faces(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text("# a triangle\nv 0 0\nv 1 0 0\nv 0 1\n\nf 1 2 3\n")
        vertices, triangles = read_triangle_mesh(path)
        assert vertices.shape == (3, 2)
        np.testing.assert_array_equal(triangles, [[0, 1, 2]])

    def test_slash_indices(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text("v 0 0\nv 1 0\nv 0 1\nf 1/1 2/2 3/3\n")
        _, triangles = read_triangle_mesh(path)
        np.testing.assert_array_equal(triangles, [[0, 1, 2]])

    def test_unsupported_record_reports_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0\nvn 0 0 1\n")
        with pytest.raises(SceneParseError) as info:
            read_triangle_mesh(path)
        assert info.value.line == 2

    def test_quad_rejected(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0\nv 1 0\nv 1 1\nv 0 1\nf 1 2 3 4\n")
        with pytest.raises(SceneParseError, match="triangles"):
            read_triangle_mesh(path)
