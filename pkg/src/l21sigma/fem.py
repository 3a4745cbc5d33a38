"""P1 finite elements on intervals and on uniformly triangulated rectangles.

Spatial callables take an array of points with shape ``(..., dim)`` (plus a
time argument where noted) and return values with shape ``(...)``; gradients
return shape ``(..., dim)``.  Coefficient vectors always refer to interior
nodes only: homogeneous Dirichlet data is imposed by dropping boundary nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr, direct_solver

__all__ = [
    "SpatialMesh",
    "FemSystem",
    "QuadratureRule",
    "build_mesh",
    "assemble",
    "load_vector",
    "l_functional",
    "ritz_project",
    "error_norms",
    "evaluate",
    "to_full",
    "interpolate",
    "LOAD_RULES",
    "ERROR_RULES",
    "CENTROID_RULES",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (``(q, dim+1)``) and weights summing to one."""

    points: np.ndarray
    weights: np.ndarray


def _gauss_line(n: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    s = (x + 1) / 2
    return QuadratureRule(np.column_stack([1 - s, s]), w / 2)


def _triangle_rule(points, weights) -> QuadratureRule:
    pts = []
    wts = []
    for p, w in zip(points, weights):
        for perm in sorted(set(_perms(p))):
            pts.append(perm)
            wts.append(w)
    return QuadratureRule(np.array(pts), np.array(wts))


def _perms(p):
    a, b, c = p
    return [(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)]


# degree 2: edge midpoints
_TRI_DEG2 = _triangle_rule([(0.5, 0.5, 0.0)], [1 / 3])
# degree 4: six-point symmetric rule (Dunavant)
_A1, _A2 = 0.445948490915965, 0.091576213509771
_TRI_DEG4 = _triangle_rule(
    [(_A1, _A1, 1 - 2 * _A1), (_A2, _A2, 1 - 2 * _A2)],
    [0.223381589678011, 0.109951743655322],
)

LOAD_RULES = {1: _gauss_line(2), 2: _TRI_DEG2}
ERROR_RULES = {1: _gauss_line(3), 2: _TRI_DEG4}
CENTROID_RULES = {
    1: QuadratureRule(np.array([[0.5, 0.5]]), np.array([1.0])),
    2: QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
}


@dataclass(frozen=True)
class SpatialMesh:
    dim: int
    bounds: tuple
    Ms: int
    nodes: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)
    # equation number of each node, -1 on the boundary
    interior_index: np.ndarray = field(repr=False)
    volumes: np.ndarray = field(repr=False)
    # gradients of the element's barycentric coordinates, (ne, dim+1, dim)
    grads: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        lo, hi = self.bounds[0]
        return (hi - lo) / self.Ms

    @property
    def M(self) -> int:
        return int(np.count_nonzero(~self.boundary_mask))

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def quadrature_points(self, rule: QuadratureRule) -> np.ndarray:
        """Physical quadrature points, shape ``(ne, q, dim)``."""
        verts = self.nodes[self.elements]  # (ne, dim+1, dim)
        return np.einsum("qk,ekd->eqd", rule.points, verts)


def _normalize_bounds(dim, bounds):
    b = np.asarray(bounds, dtype=float)
    if dim == 1 and b.shape == (2,):
        b = b[None, :]
    if b.shape != (dim, 2):
        raise ValueError(f"bounds for a {dim}D mesh must have shape ({dim}, 2)")
    if np.any(b[:, 1] <= b[:, 0]):
        raise ValueError("each bound must satisfy lo < hi")
    return tuple(tuple(map(float, row)) for row in b)


def build_mesh(dim: int, bounds, Ms: int) -> SpatialMesh:
    """Uniform mesh with ``Ms`` subdivisions per direction.

    In 2D every cell is split along its lower-left to upper-right diagonal and
    nodes are numbered lexicographically with ``x`` running fastest.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim!r}")
    if int(Ms) != Ms or Ms < 2:
        raise ValueError(f"Ms must be an integer >= 2, got {Ms!r}")
    Ms = int(Ms)
    bounds = _normalize_bounds(dim, bounds)
    axes = [np.linspace(lo, hi, Ms + 1) for lo, hi in bounds]

    if dim == 1:
        nodes = axes[0][:, None]
        i = np.arange(Ms)
        elements = np.column_stack([i, i + 1])
        boundary = np.zeros(Ms + 1, dtype=bool)
        boundary[[0, Ms]] = True
    else:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        idx = np.arange((Ms + 1) ** 2).reshape(Ms + 1, Ms + 1)  # [j, i]
        ll = idx[:-1, :-1].ravel()
        lr = idx[:-1, 1:].ravel()
        ul = idx[1:, :-1].ravel()
        ur = idx[1:, 1:].ravel()
        elements = np.concatenate([np.column_stack([ll, lr, ur]), np.column_stack([ll, ur, ul])])
        ii, jj = np.meshgrid(np.arange(Ms + 1), np.arange(Ms + 1), indexing="xy")
        boundary = ((ii == 0) | (ii == Ms) | (jj == 0) | (jj == Ms)).ravel()

    interior_index = np.full(nodes.shape[0], -1)
    interior_index[~boundary] = np.arange(np.count_nonzero(~boundary))

    verts = nodes[elements]
    B = np.transpose(verts[:, 1:, :] - verts[:, :1, :], (0, 2, 1))  # columns are edges
    det = np.linalg.det(B)
    volumes = np.abs(det) / factorial(dim)
    Binv = np.linalg.inv(B)  # row i is the gradient of lambda_{i+1}
    grads = np.concatenate([-Binv.sum(axis=1, keepdims=True), Binv], axis=1)

    return SpatialMesh(
        dim=dim,
        bounds=bounds,
        Ms=Ms,
        nodes=nodes,
        elements=elements,
        boundary_mask=boundary,
        interior_index=interior_index,
        volumes=volumes,
        grads=grads,
    )


@dataclass(frozen=True)
class FemSystem:
    mesh: SpatialMesh
    mass: sp.csr_matrix = field(repr=False)
    stiffness: sp.csr_matrix = field(repr=False)
    integral_weights: np.ndarray = field(repr=False)


def _restrict(mesh, local):
    """Sum element matrices ``(ne, k, k)`` into an interior-only CSR matrix."""
    eq = mesh.interior_index[mesh.elements]
    k = eq.shape[1]
    rows = np.repeat(eq, k, axis=1).ravel()
    cols = np.tile(eq, (1, k)).ravel()
    vals = local.reshape(len(eq), -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    M = mesh.M
    A = as_csr(sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(M, M)))
    # duplicate summation order may differ between (i, j) and (j, i)
    return as_csr((A + A.T) * 0.5)


def _scatter(mesh, local):
    """Sum element vectors ``(ne, k)`` into an interior-only vector."""
    eq = mesh.interior_index[mesh.elements].ravel()
    vals = local.ravel()
    keep = eq >= 0
    return np.bincount(eq[keep], weights=vals[keep], minlength=mesh.M)


def assemble(mesh: SpatialMesh) -> FemSystem:
    d = mesh.dim
    k = d + 1
    vol = mesh.volumes
    stiff_local = vol[:, None, None] * np.einsum("eid,ejd->eij", mesh.grads, mesh.grads)
    ref_mass = (np.ones((k, k)) + np.eye(k)) / ((d + 1) * (d + 2))
    mass_local = vol[:, None, None] * ref_mass[None]
    q = _scatter(mesh, np.repeat(vol[:, None] / k, k, axis=1))
    return FemSystem(
        mesh=mesh,
        mass=_restrict(mesh, mass_local),
        stiffness=_restrict(mesh, stiff_local),
        integral_weights=q,
    )


def load_vector(mesh: SpatialMesh, f: Callable, t: float, rule: QuadratureRule | None = None) -> np.ndarray:
    """``b_i = (f(., t), phi_i)`` for interior basis functions."""
    rule = rule or LOAD_RULES[mesh.dim]
    pts = mesh.quadrature_points(rule)
    fv = np.asarray(f(pts, t), dtype=float) * np.ones(pts.shape[:2])
    local = np.einsum("eq,q,qk->ek", fv, rule.weights, rule.points) * mesh.volumes[:, None]
    return _scatter(mesh, local)


def l_functional(system: FemSystem, U) -> float:
    U = np.asarray(U, dtype=float)
    q = system.integral_weights
    if U.shape[-1] != q.shape[0]:
        raise ValueError(f"coefficient vector has length {U.shape[-1]}, expected {q.shape[0]}")
    return U @ q


def ritz_project(system: FemSystem, grad_w: Callable, rule: QuadratureRule | None = None) -> np.ndarray:
    """Stiffness projection of ``w`` given only its gradient ``grad_w(points)``."""
    mesh = system.mesh
    rule = rule or LOAD_RULES[mesh.dim]
    pts = mesh.quadrature_points(rule)
    gw = np.asarray(grad_w(pts), dtype=float).reshape(pts.shape)
    mean_grad = np.einsum("eqd,q->ed", gw, rule.weights)
    local = np.einsum("ed,ekd->ek", mean_grad, mesh.grads) * mesh.volumes[:, None]
    rhs = _scatter(mesh, local)
    if not np.any(rhs):
        return np.zeros(mesh.M)
    return direct_solver(system.stiffness)(rhs)


def to_full(mesh: SpatialMesh, U) -> np.ndarray:
    """Nodal values on every node, zero on the boundary."""
    full = np.zeros(mesh.nodes.shape[0])
    full[~mesh.boundary_mask] = U
    return full


def interpolate(mesh: SpatialMesh, w: Callable) -> np.ndarray:
    """Interior nodal values of ``w``."""
    return np.asarray(w(mesh.nodes[~mesh.boundary_mask]), dtype=float)


def evaluate(mesh: SpatialMesh, U, rule: QuadratureRule):
    """Values ``(ne, q)`` and gradients ``(ne, dim)`` of the P1 function ``U``."""
    local = to_full(mesh, U)[mesh.elements]  # (ne, k)
    values = local @ rule.points.T
    grads = np.einsum("ek,ekd->ed", local, mesh.grads)
    return values, grads


def error_norms(
    mesh: SpatialMesh, u: Callable, grad_u: Callable, U, t: float, h1_rule: str = "degree4"
) -> tuple[float, float]:
    """``(||u(t) - U_h||, ||grad(u(t) - U_h)||)`` by element quadrature.

    Both norms use a degree-4 rule by default.  ``h1_rule="centroid"`` samples
    the gradient error once per element at its barycenter instead; on the
    uniform triangulations this underestimates the seminorm by roughly a
    quarter but is the measure some published 2D tables report.
    """
    rule = ERROR_RULES[mesh.dim]
    pts = mesh.quadrature_points(rule)
    vals, grads = evaluate(mesh, U, rule)
    e0 = np.asarray(u(pts, t), dtype=float) - vals
    w = rule.weights[None, :] * mesh.volumes[:, None]
    l2 = np.sqrt(np.sum(w * e0**2))

    if h1_rule == "centroid":
        pts = mesh.quadrature_points(CENTROID_RULES[mesh.dim])
        w = mesh.volumes[:, None]
    elif h1_rule != "degree4":
        raise ValueError(f"h1_rule must be 'degree4' or 'centroid', got {h1_rule!r}")
    e1 = np.asarray(grad_u(pts, t), dtype=float).reshape(pts.shape) - grads[:, None, :]
    h1 = np.sqrt(np.sum(w * np.sum(e1**2, axis=-1)))
    return float(l2), float(h1)
