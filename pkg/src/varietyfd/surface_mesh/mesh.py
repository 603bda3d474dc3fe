"""Point clouds on surfaces with tangent frames and k-nearest stencils."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from varietyfd.errors import ConfigError, StencilError
from varietyfd.poly import Polynomial
from varietyfd.surface_mesh.chart import SurfaceSingularChart
from varietyfd.surface_mesh.generator import RevolutionGenerator, sample_surface

SINGULAR_TOL = 1e-8
DEFAULT_K = 8


def tangent_basis(F: Polynomial, p, singular_tol: float = SINGULAR_TOL):
    """Orthonormal ``(w1, w2)`` spanning the kernel of ``grad F(p)^T``.

    ``w1`` is the normalised cross product of the coordinate axis least
    parallel to the gradient (lowest index on ties) with the gradient, and
    ``w2 = n x w1``.
    """
    g = F.grad_at(np.asarray(p, dtype=float))
    gn = np.linalg.norm(g)
    if gn <= singular_tol * max(F.max_abs_coefficient(), 1.0):
        raise StencilError(f"gradient vanishes at {tuple(np.round(p, 12))}: singular point")
    n = g / gn
    j = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[j] = 1.0
    w1 = np.cross(e, n)
    w1 /= np.linalg.norm(w1)
    w2 = np.cross(n, w1)
    w2 /= np.linalg.norm(w2)
    return w1, w2


def tangent_bases(F: Polynomial, pts: np.ndarray) -> np.ndarray:
    """Vectorised :func:`tangent_basis`; returns ``(n, 2, 3)``."""
    g = np.column_stack([gp.eval_many(pts) for gp in F.gradient])
    n = g / np.linalg.norm(g, axis=1)[:, None]
    j = np.argmin(np.abs(n), axis=1)
    e = np.zeros_like(n)
    e[np.arange(len(n)), j] = 1.0
    w1 = np.cross(e, n)
    w1 /= np.linalg.norm(w1, axis=1)[:, None]
    w2 = np.cross(n, w1)
    w2 /= np.linalg.norm(w2, axis=1)[:, None]
    return np.stack([w1, w2], axis=1)


@dataclass
class SurfaceMesh:
    F: Polynomial
    nodes: np.ndarray
    tangent_bases: np.ndarray                  # (n, 2, 3); NaN at singular nodes
    neighbor_lists: list[np.ndarray]
    singular_nodes: dict[int, SurfaceSingularChart]
    params: np.ndarray | None = None           # generator parameters
    spacing: float = 0.0                       # median nearest-neighbour distance
    stats: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.nodes)

    def is_singular(self, i: int) -> bool:
        return i in self.singular_nodes

    def neighbor_symmetry(self) -> np.ndarray:
        """For each node, in how many of its neighbours' lists it appears."""
        sets = [set(map(int, nb)) for nb in self.neighbor_lists]
        return np.array([sum(i in sets[int(j)] for j in nb)
                         for i, nb in enumerate(self.neighbor_lists)])


def build_surface_mesh(F: Polynomial, generator, N: int, singularities=(),
                       k: int = DEFAULT_K) -> SurfaceMesh:
    """Sample, frame and connect ``about N^2`` nodes.

    ``singularities`` is a sequence of ``(location, chart_config)``; exactly
    one node must sit on each location.  Neighbours are the ``k`` nearest
    nodes, never a singular one.  On product grids they are the 3 x 3 index
    block instead; there a singular axis node does close the block of the
    ring next to it (the chart rows use it).
    """
    gen = generator if isinstance(generator, RevolutionGenerator) \
        else RevolutionGenerator.from_config(generator)
    pts, params, stats = sample_surface(F, gen, N)
    singular: dict[int, SurfaceSingularChart] = {}
    for loc, cfg in singularities:
        loc = np.asarray(loc, dtype=float)
        d = np.linalg.norm(pts - loc, axis=1)
        hit = np.nonzero(d <= SINGULAR_TOL)[0]
        if len(hit) != 1:
            raise ConfigError(f"generator produced {len(hit)} nodes at singular point "
                              f"{tuple(loc)}; exactly one is required")
        if cfg is None:
            raise ConfigError(f"singular point {tuple(loc)} needs a chart")
        chart = SurfaceSingularChart.from_config(loc, cfg)
        chart.check(F)
        singular[int(hit[0])] = chart
    frames = np.full((len(pts), 2, 3), np.nan)
    smooth = np.array([i not in singular for i in range(len(pts))])
    frames[smooth] = tangent_bases(F, pts[smooth])
    tree = cKDTree(pts)
    kq = min(k + 1 + len(singular), len(pts))
    _, idx = tree.query(pts, k=kq)
    nbrs = []
    for i in range(len(pts)):
        row = [int(j) for j in idx[i] if j != i and j not in singular]
        nbrs.append(np.array(row[:k], dtype=int))
    if gen.rings == "product":
        nbrs = _product_neighbors(gen, N, pts, params, nbrs)
    return SurfaceMesh(F, pts, frames, nbrs, singular, params, stats["median"], stats)


def _product_neighbors(gen: RevolutionGenerator, N: int, pts, params, knn):
    """3 x 3 index blocks; axis nodes keep their nearest-neighbour lists."""
    a, b = gen.domain
    K, M = gen.product_shape(N)
    ring = np.rint((params[:, 0] - a) / ((b - a) / N)).astype(int)
    pos = np.rint(params[:, 1] / (2.0 * np.pi / M)).astype(int) % M
    counts = np.bincount(ring, minlength=K)
    axis = {int(j): int(np.nonzero(ring == j)[0][0]) for j in np.nonzero(counts == 1)[0]}
    lookup = {(int(j), int(q)): n for n, (j, q) in enumerate(zip(ring, pos))}
    out = []
    for n in range(len(pts)):
        j = int(ring[n])
        if j in axis:
            out.append(knn[n])
            continue
        row = []
        for dj in (-1, 0, 1):
            jj = (j + dj) % K if gen.closed else j + dj
            if not 0 <= jj < K:
                continue
            if jj in axis:
                if axis[jj] not in row:
                    row.append(axis[jj])
                continue
            for dq in (-1, 0, 1):
                if dj == 0 and dq == 0:
                    continue
                row.append(lookup[(jj, int((pos[n] + dq) % M))])
        row = np.array(row, dtype=int)
        order = np.argsort(np.linalg.norm(pts[row] - pts[n], axis=1), kind="stable")
        out.append(row[order])
    return out


def stencil_local_coords(mesh: SurfaceMesh, i: int, k: int | None = None, min_sectors: int = 3):
    """``(indices, t)`` with ``t = ((q - p).w1, (q - p).w2)``; the centre comes first.

    Raises :class:`StencilError` when the neighbours occupy fewer than
    ``min_sectors`` of the four tangent-plane quadrants.
    """
    if mesh.is_singular(i):
        raise StencilError(f"node {i} is singular; use its chart")
    nb = np.array([j for j in mesh.neighbor_lists[i] if j not in mesh.singular_nodes], dtype=int)
    nb = nb if k is None else nb[:k]
    if k is not None and len(nb) < k:
        raise StencilError(f"node {i} has only {len(nb)} neighbours")
    idx = np.concatenate([[i], nb])
    W = mesh.tangent_bases[i]
    t = (mesh.nodes[idx] - mesh.nodes[i]) @ W.T
    ang = np.arctan2(t[1:, 1], t[1:, 0])
    sectors = len(set(np.floor_divide(ang + np.pi, np.pi / 2).astype(int) % 4))
    if sectors < min_sectors:
        raise StencilError(f"degenerate stencil spread at node {i} ({sectors} quadrants); "
                           "increase k")
    return idx, t


def export_surface_mesh_csv(mesh: SurfaceMesh, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "z", "is_singular"])
        for i, p in enumerate(mesh.nodes):
            w.writerow([i, *(repr(float(v)) for v in p), int(mesh.is_singular(i))])


def export_adjacency_csv(mesh: SurfaceMesh, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "neighbor", "rank"])
        for i, nb in enumerate(mesh.neighbor_lists):
            for r, j in enumerate(nb):
                w.writerow([i, int(j), r])
