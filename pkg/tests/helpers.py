"""Shared numeric helpers for the test suite."""

import numpy as np

from mpmfem.core.contact import ContactContext, ContactSurface, contact_weight


def point_context(points, x_fem, edges, dhat=0.01, kappa=1.0, volume=None, edge_object=None):
    """Contact context in which each particle is its own joint node after the FEM nodes.

    Returns the context and the joint position array [x_fem; points].
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x_fem = np.asarray(x_fem, dtype=float)
    n_fem, n = len(x_fem), len(points)
    edges = np.asarray(edges, dtype=np.int64)
    if edge_object is None:
        edge_object = np.zeros(len(edges), dtype=np.int64)
    weights = np.zeros((n, 9))
    weights[:, 0] = 1.0
    nodes = np.repeat((n_fem + np.arange(n))[:, None], 9, axis=1)
    volume = np.full(n, np.pi) if volume is None else np.asarray(volume, dtype=float)
    ctx = ContactContext(
        surface=ContactSurface.from_edges(edges, edge_object, n_fem),
        omega=contact_weight(volume),
        stencil_weights=weights,
        stencil_nodes=nodes,
        n_fem=n_fem,
        dhat=dhat,
        kappa=kappa,
        cell_size=0.1,
    )
    return ctx, np.vstack([x_fem, points])


def central_gradient(fn, x, h=1e-7):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=float)
    grad = np.zeros(x.size)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn(x)
        flat[i] = old - h
        down = fn(x)
        flat[i] = old
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(x.shape)


def block_over_slab(scene_dict):
    """An MPM block whose lowest particles sit 5 mm above a FEM slab, inside the barrier range."""
    scene_dict["contact"] = {"dhat": 0.01, "kappa": 1e5}
    scene_dict["mpm_objects"][0]["shape"] = {"kind": "box", "lo": [0.3, 0.4], "hi": [0.6, 0.6]}
    scene_dict["fem_objects"] = [{
        "id": "slab",
        "shape": {"kind": "box", "lo": [0.2, 0.2], "hi": [0.7, 0.42]},
        "material": {"youngs_modulus": 1e5, "poisson_ratio": 0.3, "density": 1000.0},
        "h": 0.1,
    }]
    scene_dict["friction"] = [{"fem": "slab", "mpm": "box", "mu": 0.3}]
    return scene_dict
