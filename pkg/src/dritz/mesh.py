"""Simplicial meshes in one and two dimensions with DG edge conventions.

Every interior edge is shared by a ``plus`` and a ``minus`` element. The
plus element is the one with the larger global index and the unit normal
points from the plus element into the minus element, i.e. towards the
element with the smaller index. On boundary edges only ``plus`` is set and
the normal is the outward normal of the domain.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .quadrature import gauss_interval


@dataclass(frozen=True)
class Edge:
    id: int
    kind: str
    plus: int
    minus: int | None
    normal: np.ndarray
    size: float
    penalty: float
    vertices: tuple
    coords: np.ndarray = field(repr=False)

    @property
    def is_boundary(self):
        return self.kind == "boundary"

    def quadrature(self, degree):
        """Physical quadrature points ``(n, dim)`` and weights on the edge.

        In 1D an edge is a point and carries the counting measure.
        """
        if self.coords.shape[0] == 1:
            return self.coords.copy(), np.ones(1)
        t, w = gauss_interval(degree)
        a, b = self.coords
        return a + t * (b - a), w * self.size


class Mesh:
    """Immutable simplicial mesh.

    Parameters
    ----------
    vertices : (nv, dim) array
    cells : (ncells, dim + 1) int array, counter-clockwise in 2D
    gamma : penalty parameter assigned to every edge
    """

    def __init__(self, vertices, cells, gamma=10.0):
        if gamma < 0:
            raise ValueError("penalty parameter must be >= 0")
        self.vertices = np.array(vertices, dtype=float)
        if self.vertices.ndim == 1:
            self.vertices = self.vertices[:, None]
        self.cells = np.array(cells, dtype=int)
        self.dim = self.vertices.shape[1]
        if self.cells.shape[1] != self.dim + 1:
            raise ValueError("cells must have dim + 1 vertices")
        self.vertices.flags.writeable = False
        self.cells.flags.writeable = False
        self.edges = self._build_edges(float(gamma))
        self.interior_edges = [e for e in self.edges if not e.is_boundary]
        self.boundary_edges = [e for e in self.edges if e.is_boundary]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @cached_property
    def jacobians(self):
        """Affine maps x = x0 + J xhat, shape ``(ncells, dim, dim)``."""
        v = self.vertices[self.cells]
        return np.stack([v[:, j + 1] - v[:, 0] for j in range(self.dim)], axis=-1)

    @cached_property
    def measures(self):
        det = np.abs(np.linalg.det(self.jacobians))
        return det / 2.0 if self.dim == 2 else det

    @cached_property
    def diameters(self):
        v = self.vertices[self.cells]
        n = self.dim + 1
        return np.max([np.linalg.norm(v[:, a] - v[:, b], axis=1)
                       for a in range(n) for b in range(a + 1, n)], axis=0)

    @cached_property
    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    def to_reference(self, cell, x):
        """Map physical points of ``cell`` back to reference coordinates."""
        J = self.jacobians[cell]
        x0 = self.vertices[self.cells[cell, 0]]
        return np.linalg.solve(J, (np.atleast_2d(x) - x0).T).T

    def edge_geometry(self, edge_id):
        """Return ``(normal, size, plus, minus)``; ``minus`` is None on the boundary."""
        if not 0 <= edge_id < len(self.edges):
            raise KeyError(f"no edge with id {edge_id}")
        e = self.edges[edge_id]
        return e.normal, e.size, e.plus, e.minus

    def _build_edges(self, gamma):
        # facet -> list of (cell, facet vertex ids)
        facets = {}
        for c, verts in enumerate(self.cells):
            for skip in range(self.dim + 1):
                f = tuple(sorted(np.delete(verts, skip)))
                facets.setdefault(f, []).append(c)
        h_1d = None
        if self.dim == 1:
            h_1d = float(np.mean(np.abs(np.diff(self.vertices[self.cells][:, :, 0], axis=1))))
        edges = []
        for f, owners in sorted(facets.items(), key=lambda kv: kv[0]):
            if len(owners) > 2:
                raise ValueError(f"non-manifold facet {f}")
            coords = self.vertices[list(f)]
            plus = max(owners)
            normal = self._outward_normal(plus, coords)
            size = h_1d if self.dim == 1 else float(np.linalg.norm(coords[1] - coords[0]))
            minus = min(owners) if len(owners) == 2 else None
            kind = "interior" if minus is not None else "boundary"
            edges.append(Edge(len(edges), kind, plus, minus, normal, size, gamma, f, coords))
        return edges

    def _outward_normal(self, cell, coords):
        centroid = self.vertices[self.cells[cell]].mean(axis=0)
        if self.dim == 1:
            n = np.array([1.0])
        else:
            t = coords[1] - coords[0]
            n = np.array([t[1], -t[0]]) / np.hypot(*t)
        if np.dot(n, coords.mean(axis=0) - centroid) < 0:
            n = -n
        # normalise signed zeros so that sgn(0) = +1 holds for either sign
        return n + 0.0

    def with_penalty(self, gamma):
        """Copy of the mesh with a different constant penalty parameter."""
        return Mesh(self.vertices, self.cells, gamma)

    @cached_property
    def penalties(self):
        return np.array([e.penalty for e in self.edges])

    def dump(self, fh):
        """Write vertices then cells, one per line, in plain text."""
        fh.write(f"# vertices {len(self.vertices)}\n")
        for v in self.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        fh.write(f"# cells {self.num_cells}\n")
        for c in self.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")


def build_interval_mesh(n, a=0.0, b=1.0, gamma=10.0):
    """Uniform mesh of (a, b) with n elements numbered left to right."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not a < b:
        raise ValueError("need a < b")
    x = np.linspace(a, b, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], cells, gamma)


def build_unit_square_tri_mesh(n, gamma=10.0, origin=(0.0, 0.0), pattern="diagonal"):
    """n x n squares of side 1/n split into triangles.

    ``pattern="diagonal"`` splits every square by its lower-left/upper-right
    diagonal into two triangles; ``"crisscross"`` splits it by both
    diagonals into four triangles around an added centre vertex.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if pattern not in ("diagonal", "crisscross"):
        raise ValueError(f"unknown pattern {pattern!r}")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            if pattern == "diagonal":
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
            else:
                c = (n + 1) ** 2 + j * n + i
                cells += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    if pattern == "crisscross":
        mid = (np.arange(n) + 0.5) / n
        MX, MY = np.meshgrid(mid, mid, indexing="xy")
        verts = np.vstack([verts, np.column_stack([MX.ravel(), MY.ravel()])])
    verts = verts + np.asarray(origin, dtype=float)
    return Mesh(verts, cells, gamma)
