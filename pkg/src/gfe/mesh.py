"""Simplicial meshes, Lagrange reference elements and quadrature.

Meshes live on intervals (d = 1) or axis-aligned boxes (d = 2).  Elements are
affine images of the reference simplex with vertices 0, e_1, ..., e_d.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import roots_jacobi

from .errors import InvalidDomain, OutsideElement, UnsupportedDegree

MAX_QUAD_DEGREE = 10


# -- quadrature -------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


def quadrature_for(dim, degree):
    """Positive-weight rule on the reference simplex, exact up to ``degree``.

    Intervals use Gauss-Legendre; triangles use the collapsed (Duffy) product
    of Gauss-Legendre and Gauss-Jacobi(1, 0) points, except for degree <= 1
    where the centroid rule is returned.
    """
    if not 0 <= degree <= MAX_QUAD_DEGREE:
        raise UnsupportedDegree(f"quadrature degree {degree} not in [0, {MAX_QUAD_DEGREE}]")
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    s, ws = 0.5 * (x + 1.0), 0.5 * w
    if dim == 1:
        return QuadratureRule(1, degree, s[:, None], ws)
    if dim != 2:
        raise UnsupportedDegree(f"no quadrature for dimension {dim}")
    if degree <= 1:
        return QuadratureRule(2, degree, np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]))
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    t, wt = 0.5 * (xj + 1.0), 0.25 * wj
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.stack([S * (1.0 - T), T], axis=-1).reshape(-1, 2)
    wts = np.outer(ws, wt).ravel()
    return QuadratureRule(2, degree, pts, wts)


# -- reference elements -----------------------------------------------------

@dataclass(frozen=True)
class ReferenceElement:
    """Lagrange element of order 1 or 2 on the reference simplex.

    Local node order: vertices first, then edge midpoints.  For triangles the
    edges are (0, 1), (1, 2), (2, 0).
    """

    dim: int
    order: int

    def __post_init__(self):
        if self.dim not in (1, 2) or self.order not in (1, 2):
            raise ValueError(f"unsupported element dim={self.dim}, order={self.order}")

    @cached_property
    def vertices(self):
        return np.vstack([np.zeros(self.dim), np.eye(self.dim)])

    @cached_property
    def edges(self):
        return [(0, 1)] if self.dim == 1 else [(0, 1), (1, 2), (2, 0)]

    @cached_property
    def nodes(self):
        v = self.vertices
        if self.order == 1:
            return v
        mids = [0.5 * (v[a] + v[b]) for a, b in self.edges]
        return np.vstack([v] + mids)

    @property
    def num_nodes(self):
        return len(self.nodes)

    def barycentric(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.concatenate([1.0 - x.sum(axis=1, keepdims=True), x], axis=1)

    @cached_property
    def _bary_grad(self):
        return np.vstack([-np.ones(self.dim), np.eye(self.dim)])

    def shape_values(self, x, check=True):
        """Values (P, l) and reference gradients (P, l, d) of the shape functions."""
        b = self.barycentric(x)
        if check and np.any(b < -1e-12):
            raise OutsideElement("evaluation point outside the reference simplex")
        G = self._bary_grad
        if self.order == 1:
            vals = b
            grads = np.broadcast_to(G, (len(b),) + G.shape).copy()
            return vals, grads
        nv = self.dim + 1
        vals = [b[:, i] * (2.0 * b[:, i] - 1.0) for i in range(nv)]
        grads = [(4.0 * b[:, i] - 1.0)[:, None] * G[i] for i in range(nv)]
        for a, c in self.edges:
            vals.append(4.0 * b[:, a] * b[:, c])
            grads.append(4.0 * (b[:, c][:, None] * G[a] + b[:, a][:, None] * G[c]))
        return np.stack(vals, axis=1), np.stack(grads, axis=1)

    def shape_hessians(self):
        """Constant reference Hessians (l, d, d) of the shape functions."""
        G = self._bary_grad
        d = self.dim
        if self.order == 1:
            return np.zeros((self.num_nodes, d, d))
        hs = [4.0 * np.outer(G[i], G[i]) for i in range(d + 1)]
        for a, c in self.edges:
            hs.append(4.0 * (np.outer(G[a], G[c]) + np.outer(G[c], G[a])))
        return np.stack(hs)

    @property
    def volume(self):
        return 1.0 if self.dim == 1 else 0.5


def shape_values(ref, x):
    """Shape function values and reference gradients at reference points ``x``."""
    return ref.shape_values(x)


# -- meshes -----------------------------------------------------------------

@dataclass(frozen=True)
class LagrangeNodes:
    """Global node table of the order-m Lagrange space on a mesh."""

    order: int
    coords: np.ndarray        # (nn, d)
    elem_nodes: np.ndarray    # (ne, l) global ids in local node order
    boundary: np.ndarray      # sorted global ids on the domain boundary

    @property
    def num_nodes(self):
        return len(self.coords)

    @cached_property
    def free(self):
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh with affine element maps.

    ``parent`` and ``parent_element`` are set for meshes produced by
    :func:`refine`; they link each element to the element it was cut from.
    """

    vertices: np.ndarray
    elements: np.ndarray
    parent: "Mesh | None" = None
    parent_element: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def num_elements(self):
        return len(self.elements)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @cached_property
    def jacobians(self):
        """Element map derivatives B with x = x0 + B xi, shape (ne, d, d)."""
        X = self.vertices[self.elements]
        return np.swapaxes(X[:, 1:] - X[:, :1], 1, 2)

    @cached_property
    def inverse_jacobians(self):
        return np.linalg.inv(self.jacobians)

    @cached_property
    def det(self):
        return np.linalg.det(self.jacobians)

    @cached_property
    def volumes(self):
        return np.abs(self.det) / (1.0 if self.dim == 1 else 2.0)

    @cached_property
    def diameters(self):
        X = self.vertices[self.elements]
        k = X.shape[1]
        d = [np.linalg.norm(X[:, i] - X[:, j], axis=1) for i in range(k) for j in range(i + 1, k)]
        return np.max(d, axis=0)

    @property
    def h(self):
        return float(self.diameters.max())

    @cached_property
    def shape_regularity(self):
        """Ratio diameter / inradius per element."""
        if self.dim == 1:
            return np.full(self.num_elements, 2.0)
        X = self.vertices[self.elements]
        sides = np.stack([np.linalg.norm(X[:, (i + 1) % 3] - X[:, i], axis=1) for i in range(3)], axis=1)
        inradius = 2.0 * self.volumes / sides.sum(axis=1)
        return self.diameters / inradius

    @cached_property
    def edges(self):
        """Unique edges (ne_edges, 2) and element-to-edge table (ne, n_local_edges)."""
        ref_edges = ReferenceElement(self.dim, 1).edges
        loc = np.array(ref_edges)
        all_e = np.sort(self.elements[:, loc], axis=2).reshape(-1, 2)
        uniq, inv = np.unique(all_e, axis=0, return_inverse=True)
        return uniq, inv.reshape(self.num_elements, len(ref_edges))

    @cached_property
    def boundary_facets(self):
        """Facets (as vertex-id tuples) that belong to exactly one element."""
        if self.dim == 1:
            ids, counts = np.unique(self.elements.ravel(), return_counts=True)
            return ids[counts == 1][:, None]
        uniq, e2e = self.edges
        counts = np.bincount(e2e.ravel(), minlength=len(uniq))
        return uniq[counts == 1]

    def lagrange_nodes(self, order):
        key = ("lagrange", order)
        if key not in self._cache:
            self._cache[key] = self._build_lagrange(order)
        return self._cache[key]

    def _build_lagrange(self, order):
        nv = self.num_vertices
        bfacets = self.boundary_facets
        bverts = np.unique(bfacets)
        if order == 1:
            return LagrangeNodes(1, self.vertices.copy(), self.elements.copy(), bverts)
        uniq, e2e = self.edges
        mids = 0.5 * (self.vertices[uniq[:, 0]] + self.vertices[uniq[:, 1]])
        coords = np.vstack([self.vertices, mids])
        elem_nodes = np.hstack([self.elements, nv + e2e])
        if self.dim == 1:
            bnodes = bverts
        else:
            counts = np.bincount(e2e.ravel(), minlength=len(uniq))
            bnodes = np.union1d(bverts, nv + np.flatnonzero(counts == 1))
        return LagrangeNodes(2, coords, elem_nodes, bnodes)

    def to_reference(self, elem, x):
        """Reference coordinates of physical points ``x`` in elements ``elem``."""
        x0 = self.vertices[self.elements[elem, 0]]
        return np.einsum("pij,pj->pi", self.inverse_jacobians[elem], x - x0)

    def to_physical(self, elem, xi):
        x0 = self.vertices[self.elements[elem, 0]]
        return x0 + np.einsum("pij,pj->pi", self.jacobians[elem], xi)

    def ancestor_map(self, ancestor):
        """Element ids in ``ancestor`` containing each element of this mesh."""
        ids = np.arange(self.num_elements)
        m = self
        while m is not ancestor:
            if m.parent is None:
                raise ValueError("mesh is not a refinement of the given ancestor")
            ids = m.parent_element[ids]
            m = m.parent
        return ids

    def is_refinement_of(self, other):
        m = self
        while m is not None:
            if m is other:
                return True
            m = m.parent
        return False

    def export_text(self):
        """Plain-text dump: ``v x [y]`` per vertex, ``e i j [k]`` per element."""
        lines = ["v " + " ".join(repr(float(c)) for c in v) for v in self.vertices]
        lines += ["e " + " ".join(str(int(i)) for i in e) for e in self.elements]
        return "\n".join(lines) + "\n"


def build_uniform_mesh(domain, subdivisions):
    """Uniform mesh of an interval ``(a, b)`` or a box ``((x0, x1), (y0, y1))``.

    Boxes are cut into ``k x k`` squares, each split along its (0,0)-(1,1)
    diagonal, giving ``2 k^2`` triangles.
    """
    k = int(subdivisions)
    if k < 1:
        raise InvalidDomain("need at least one subdivision")
    dom = np.asarray(domain, dtype=float)
    if dom.ndim == 1:
        if dom.shape != (2,) or not dom[1] > dom[0]:
            raise InvalidDomain(f"degenerate interval {domain!r}")
        verts = np.linspace(dom[0], dom[1], k + 1)[:, None]
        elems = np.stack([np.arange(k), np.arange(1, k + 1)], axis=1)
        return Mesh(verts, elems)
    if dom.shape != (2, 2) or not np.all(dom[:, 1] > dom[:, 0]):
        raise InvalidDomain(f"degenerate box {domain!r}")
    xs = np.linspace(dom[0, 0], dom[0, 1], k + 1)
    ys = np.linspace(dom[1, 0], dom[1, 1], k + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((k + 1) ** 2).reshape(k + 1, k + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[1:, :-1].ravel()
    v01 = idx[:-1, 1:].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    elems = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(verts, elems)


def refine(mesh):
    """Uniform red refinement: every simplex is cut into 2^d similar children."""
    nv = mesh.num_vertices
    uniq, e2e = mesh.edges
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    E = mesh.elements
    M = nv + e2e
    if mesh.dim == 1:
        children = np.stack([np.stack([E[:, 0], M[:, 0]], 1), np.stack([M[:, 0], E[:, 1]], 1)], axis=1)
    else:
        a, b, c = E[:, 0], E[:, 1], E[:, 2]
        ab, bc, ca = M[:, 0], M[:, 1], M[:, 2]
        children = np.stack(
            [
                np.stack([a, ab, ca], 1),
                np.stack([ab, b, bc], 1),
                np.stack([ca, bc, c], 1),
                np.stack([ab, bc, ca], 1),
            ],
            axis=1,
        )
    nchild = children.shape[1]
    parent_element = np.repeat(np.arange(mesh.num_elements), nchild)
    return Mesh(verts, children.reshape(-1, mesh.dim + 1), parent=mesh, parent_element=parent_element)


def stiffness_matrix(mesh, order):
    """Scalar Lagrange stiffness matrix K_ij = int grad phi_i . grad phi_j (CSR)."""
    from scipy.sparse import coo_matrix

    ref = ReferenceElement(mesh.dim, order)
    rule = quadrature_for(mesh.dim, max(0, 2 * (order - 1)))
    nodes = mesh.lagrange_nodes(order)
    _, dref = ref.shape_values(rule.points)                     # (q, l, d)
    grads = np.einsum("qld,tdc->tqlc", dref, mesh.inverse_jacobians)
    w = rule.weights[None, :] * np.abs(mesh.det)[:, None]       # (t, q)
    Ke = np.einsum("tq,tqia,tqja->tij", w, grads, grads)
    en = nodes.elem_nodes
    rows = np.repeat(en, en.shape[1], axis=1).ravel()
    cols = np.tile(en, (1, en.shape[1])).ravel()
    n = nodes.num_nodes
    return coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
