"""Tests for application/constraints.py."""

import numpy as np
import pytest

from mpmfem.application.constraints import (
    DirichletGroup,
    LevelSetBoundary,
    NodeConstraints,
    NodeKind,
    apply_level_set_constraints,
    build_constraints,
    select_dirichlet_nodes,
)
from mpmfem.core.models import RigidScript
from mpmfem.domain.shapes import BoxShape, HalfPlaneShape

GROUND = HalfPlaneShape(point=(0.0, 0.1), normal=(0.0, 1.0))


def _mixed():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    c = NodeConstraints.free(x)
    c.kind[1] = NodeKind.SLIP
    c.tangent[1] = [np.sqrt(0.5), np.sqrt(0.5)]
    c.kind[2] = NodeKind.FIXED
    c.target[2] = [2.0, 1.0]
    c.target[1] = [1.0, 0.5]
    return x, c


class TestNodeConstraints:
    """Reduced coordinates for free, slip and fixed nodes."""

    def test_reduced_size(self):
        _, c = _mixed()
        assert c.n_reduced == 5
        assert c.basis().shape == (8, 5)

    def test_basis_orthonormal(self):
        _, c = _mixed()
        S = c.basis().toarray()
        np.testing.assert_allclose(S.T @ S, np.eye(5), atol=1e-12)

    def test_projection_complements(self):
        _, c = _mixed()
        rng = np.random.default_rng(3)
        v = rng.normal(size=(4, 2))
        S = c.basis().toarray()
        np.testing.assert_allclose(c.project_free(v).reshape(-1), S @ (S.T @ v.reshape(-1)), atol=1e-12)
        np.testing.assert_allclose(c.project_free(v) + c.constrained_part(v), v)

    def test_snap_reaches_targets(self):
        x, c = _mixed()
        assert c.owes_motion(x)
        snapped = c.snap(x)
        np.testing.assert_array_equal(snapped[2], [2.0, 1.0])
        # the slip node moved along the normal only
        normal = np.array([-np.sqrt(0.5), np.sqrt(0.5)])
        assert np.dot(snapped[1] - [1.0, 0.5], normal) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(snapped[[0, 3]], x[[0, 3]])
        assert not c.owes_motion(snapped)

    def test_free_nodes_owe_nothing(self):
        x = np.ones((3, 2))
        assert not NodeConstraints.free(x).owes_motion(x + 5.0)


class TestDirichlet:
    def test_select_by_object_and_region(self):
        rest = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 0.0]])
        node_object = np.array([0, 0, 0, 1])
        np.testing.assert_array_equal(select_dirichlet_nodes(rest, node_object, 0), [0, 1, 2])
        region = (np.array([-0.1, -0.1]), np.array([2.0, 0.1]))
        np.testing.assert_array_equal(select_dirichlet_nodes(rest, node_object, 0, region), [0, 1])

    def test_group_targets_follow_script(self):
        rest = np.array([[0.0, 3.0], [1.0, 3.0]])
        group = DirichletGroup(nodes=np.array([0, 1]), script=RigidScript(velocity=(0.0, -0.1)))
        np.testing.assert_allclose(group.targets(rest, 2.0), [[0.0, 2.8], [1.0, 2.8]])

    def test_build_constraints_numbering(self):
        x_fem = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        group = DirichletGroup(nodes=np.array([0]), script=RigidScript())
        grid = np.array([[0.5, 0.05], [0.5, 0.5]])
        ls = LevelSetBoundary(shape=GROUND, kind="no_slip", motion=RigidScript())
        c = build_constraints(x_fem, x_fem, [group], grid, [ls], 0.0, 0.1)
        np.testing.assert_array_equal(c.kind, [NodeKind.FIXED, NodeKind.FREE, NodeKind.FREE, NodeKind.FIXED, NodeKind.FREE])


class TestLevelSets:
    """Grid-node classification against analytic solids."""

    def test_no_slip_follows_motion(self):
        ls = LevelSetBoundary(shape=GROUND, kind="no_slip", motion=RigidScript(velocity=(1.0, 0.0)))
        nodes = np.array([[0.0, 0.0], [0.0, 0.5]])
        c = apply_level_set_constraints(nodes, [ls], 0.0, 0.1)
        np.testing.assert_array_equal(c.kind, [NodeKind.FIXED, NodeKind.FREE])
        np.testing.assert_allclose(c.target[0], [0.1, 0.0])

    def test_slip_tangent(self):
        ls = LevelSetBoundary(shape=GROUND, kind="slip", motion=RigidScript())
        c = apply_level_set_constraints(np.array([[0.3, 0.05]]), [ls], 0.0, 0.1)
        assert c.kind[0] == NodeKind.SLIP
        np.testing.assert_allclose(c.tangent[0], [-1.0, 0.0])

    def test_boundary_node_is_inside(self):
        ls = LevelSetBoundary(shape=GROUND, kind="slip", motion=RigidScript())
        c = apply_level_set_constraints(np.array([[0.0, 0.1]]), [ls], 0.0, 0.1)
        assert c.kind[0] == NodeKind.SLIP

    def test_no_slip_wins_overlap(self):
        slip = LevelSetBoundary(shape=GROUND, kind="slip", motion=RigidScript())
        pinned = LevelSetBoundary(shape=BoxShape(lo=(-1.0, -1.0), hi=(0.2, 0.5)), kind="no_slip", motion=RigidScript())
        nodes = np.array([[0.0, 0.0], [1.0, 0.0]])
        for order in ([slip, pinned], [pinned, slip]):
            c = apply_level_set_constraints(nodes, order, 0.0, 0.1)
            np.testing.assert_array_equal(c.kind, [NodeKind.FIXED, NodeKind.SLIP])

    def test_moving_wall_pose(self):
        ls = LevelSetBoundary(shape=GROUND, kind="slip", motion=RigidScript(keyframes=[(1.0, 0.0, -0.5)]))
        assert ls.signed_distance(np.array([[0.0, 0.0]]), 1.0)[0] == pytest.approx(0.4)
        assert ls.contains(np.array([[0.0, -0.45]]), 1.0)[0]

    def test_no_grid_nodes(self):
        ls = LevelSetBoundary(shape=GROUND, kind="slip", motion=RigidScript())
        assert apply_level_set_constraints(np.zeros((0, 2)), [ls], 0.0, 0.1).n_nodes == 0
