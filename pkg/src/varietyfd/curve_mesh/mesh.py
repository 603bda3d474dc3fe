"""Singular points, cycle construction and arc-length-uniform curve meshes.

A closed component through one or more singular points is represented as a
cyclic sequence of *pieces*: traced edges between singular points and, for
power-series branches, short chart pieces joining the singular point to the
traced part.  At an ordinary multiple point the traversal continues straight
through along the same branch, so a figure-eight visits its crossing twice.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from varietyfd.curve_mesh.charts import (
    BranchChart,
    branch_tangents,
    fit_power_series_chart,
    tangent_line_chart,
)
from varietyfd.curve_mesh.tracing import (
    ON_CURVE_TOL,
    SINGULAR_TOL,
    StepControl,
    Target,
    TracedEdge,
    curve_tangent,
    project_to_curve,
    trace_edge,
)
from varietyfd.errors import ChartError, ConfigError, ConvergenceError, RankDeficiencyError
from varietyfd.poly import Polynomial

TANGENCY_TOL = 1e-8
AGREE_TOL = 1e-8

_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


# ---------------------------------------------------------------------------
# singular points

def _newton_singular(F: Polynomial, x0, iters: int = 200) -> np.ndarray | None:
    """Gauss-Newton on ``(F, dF/dx, dF/dy) = 0``; ``None`` if it stalls."""
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        r = np.concatenate([[F(x)], F.grad_at(x)])
        J = np.vstack([F.grad_at(x), F.hessian_at(x)])
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        x = x + step
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e6:
            return None
        if np.linalg.norm(step) < 1e-15 * max(1.0, np.linalg.norm(x)):
            break
    return x


def _is_singular(F: Polynomial, x) -> bool:
    scale = max(F.max_abs_coefficient(), 1.0)
    return abs(F(x)) <= ON_CURVE_TOL and np.linalg.norm(F.grad_at(x)) <= SINGULAR_TOL * scale


def find_singular_points(F: Polynomial, seeds=None, declared=None, bbox=None,
                         grid: int = 16) -> list[np.ndarray]:
    """Converged, deduplicated solutions of ``F = 0, grad F = 0``.

    ``declared`` points must converge (else :class:`ConfigError`).  Extra
    ``seeds`` and a ``grid x grid`` lattice over ``bbox`` (``(lo, hi)``) are
    searched as well; failures there are dropped silently.
    """
    found: list[np.ndarray] = []

    def add(x):
        for f in found:
            if np.linalg.norm(f - x) < 1e-6:
                return
        found.append(x)

    for d in declared or []:
        x = _newton_singular(F, d)
        if x is None or not _is_singular(F, x) or np.linalg.norm(x - np.asarray(d)) > 1e-4:
            raise ConfigError(f"declared singular point {tuple(d)} is not a singular point of F")
        add(x)
    cand = [np.asarray(s, dtype=float) for s in seeds or []]
    if bbox is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in bbox)
        pad = 0.05 * (hi - lo) + 1e-3
        axes = [np.linspace(lo[k] - pad[k], hi[k] + pad[k], grid) for k in range(2)]
        cand += [np.array([a, b]) for a in axes[0] for b in axes[1]]
    for s in cand:
        x = _newton_singular(F, s, iters=60)
        if x is not None and _is_singular(F, x):
            add(x)
    return found


# ---------------------------------------------------------------------------
# singular nodes and branch declarations

@dataclass
class SingularNode:
    """A singular point with its local branches and mesh passages.

    ``passages`` lists mesh-node indices at which the cyclic traversal sits
    on ``location``; ``passage_branch[k]`` is the branch used there and
    ``incident_node_pairs[k]`` the (previous, next) mesh neighbours.
    """

    location: np.ndarray
    branches: list[BranchChart]
    passages: list[int] = field(default_factory=list)
    passage_branch: list[int] = field(default_factory=list)
    incident_node_pairs: list[tuple[int, int]] = field(default_factory=list)


def build_singular_node(F: Polynomial, location, declared_branches=None) -> SingularNode:
    """Charts for every real branch at ``location``.

    Simple tangent directions give tangent-line charts.  A repeated direction
    needs a declaration ``{"m": .., "series_var": .., "order": ..}`` in
    ``declared_branches`` (one per repeated direction, in order).
    """
    location = np.asarray(location, dtype=float)
    decl = list(declared_branches or [])
    decl_series = [d for d in decl if d.get("kind", "power-series") == "power-series"]
    charts: list[BranchChart] = []
    for direction, mult in branch_tangents(F, location):
        if mult == 1:
            charts.append(tangent_line_chart(F, location, direction))
            continue
        if not decl_series:
            raise ChartError(
                f"tangent {tuple(np.round(direction, 6))} at {tuple(location)} has multiplicity "
                f"{mult}; a power-series branch declaration is required")
        d = decl_series.pop(0)
        chart = fit_power_series_chart(F, location, int(d["m"]), int(d.get("order", 40)),
                                       series_var=d.get("series_var", 1),
                                       root=d.get("root"))
        if chart.valid_radius <= 0.0:
            raise ChartError(f"power-series chart at {tuple(location)} has empty validity range")
        charts.append(chart)
    return SingularNode(location=location, branches=charts)


# ---------------------------------------------------------------------------
# cycle pieces

class ChartPiece:
    """Arc of a power-series chart between parameters ``s_from`` and ``s_to``."""

    def __init__(self, chart: BranchChart, s_from: float, s_to: float):
        self.chart = chart
        self.s_from = float(s_from)
        self.s_to = float(s_to)
        self.length = abs(self._arc(self.s_from, self.s_to))

    def _speed(self, s):
        return np.linalg.norm(self.chart.derivative(s, 1), axis=-1)

    def _arc(self, a: float, b: float) -> float:
        xs = 0.5 * (b - a) * (_GL_X + 1.0) + a
        return 0.5 * (b - a) * float(self._speed(xs) @ _GL_W)

    def param_at(self, arclen: float) -> float:
        arclen = float(np.clip(arclen, 0.0, self.length))
        if arclen <= 0.0:
            return self.s_from
        if arclen >= self.length:
            return self.s_to
        return brentq(lambda s: abs(self._arc(self.s_from, s)) - arclen, self.s_from, self.s_to,
                      xtol=1e-15, rtol=1e-15)

    def point_at(self, arclen: float) -> np.ndarray:
        return self.chart.point(self.param_at(arclen))

    def samples(self, n: int = 64) -> np.ndarray:
        return self.chart.point(np.linspace(self.s_from, self.s_to, n))


@dataclass
class _HalfBranch:
    node: int          # index into singular node list
    branch: int        # index into that node's branches
    side: int          # +1 / -1
    start: np.ndarray  # where the traced edge begins
    outward: np.ndarray
    junction: float = 0.0  # chart parameter of ``start`` (power-series only)


@dataclass
class Passage:
    arclength: float
    node: int
    branch: int
    incoming_dir: np.ndarray
    outgoing_dir: np.ndarray
    out_side: int = 1


@dataclass
class Cycle:
    """One closed component as consecutive pieces with passages through singular points."""

    pieces: list
    singular_nodes: list[SingularNode]
    passages: list[Passage]
    F: Polynomial | None = None
    offsets: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.offsets = np.concatenate([[0.0], np.cumsum([p.length for p in self.pieces])])

    @property
    def length(self) -> float:
        return float(self.offsets[-1])

    @property
    def edges(self) -> list[TracedEdge]:
        return [p for p in self.pieces if isinstance(p, TracedEdge)]

    def locate(self, arclen: float):
        arclen = float(arclen) % self.length
        k = int(np.clip(np.searchsorted(self.offsets, arclen, side="right") - 1,
                        0, len(self.pieces) - 1))
        return k, arclen - self.offsets[k]

    def point_at(self, arclen: float) -> np.ndarray:
        k, local = self.locate(arclen)
        return self.pieces[k].point_at(local)

    def dense_samples(self) -> np.ndarray:
        pts = []
        for p in self.pieces:
            pts.append(p.samples if isinstance(p, TracedEdge) else p.samples())
        return np.vstack(pts)


def _half_branches(nodes: list[SingularNode], junction_fraction: float) -> list[_HalfBranch]:
    out: list[_HalfBranch] = []
    for a, sn in enumerate(nodes):
        for b, ch in enumerate(sn.branches):
            for side in (1, -1):
                if ch.kind == "tangent-line":
                    out.append(_HalfBranch(a, b, side, sn.location.copy(), side * ch.tangent))
                else:
                    s0 = side * junction_fraction * ch.valid_radius
                    d = side * ch.derivative(s0, 1)
                    out.append(_HalfBranch(a, b, side, ch.point(s0), d / np.linalg.norm(d), s0))
    return out


def _limit_direction(ch: BranchChart, side: int) -> np.ndarray:
    """Unit direction of the branch leaving its centre on ``side``."""
    if ch.kind == "tangent-line":
        return side * ch.tangent
    eps = 1e-4 * ch.valid_radius
    d = side * ch.derivative(side * eps, 1)
    return d / np.linalg.norm(d)


def build_cycle(F: Polynomial, seed, singular_nodes: list[SingularNode],
                ctrl: StepControl | None = None, junction_fraction: float = 0.5) -> Cycle:
    """Trace the component through ``seed`` (or through the singular points).

    With no singular nodes the component is traced as one closed edge starting
    at the projection of ``seed``.
    """
    ctrl = ctrl or StepControl()
    if not singular_nodes:
        p0 = project_to_curve(F, seed)
        t0 = curve_tangent(F, p0)
        edge, _ = trace_edge(F, p0, t0, [Target(p0, t0, "closure")], ctrl,
                             min_length=4.0 * ctrl.h_max)
        edge.endpoints = (0, 0)
        return Cycle([edge], [], [], F)

    hbs = _half_branches(singular_nodes, junction_fraction)
    targets = [Target(hb.start, -hb.outward, i) for i, hb in enumerate(hbs)]
    locs = [sn.location for sn in singular_nodes]
    radius = 4.0 * ctrl.h_max

    def partner(i: int) -> int:
        return i + 1 if hbs[i].side == 1 else i - 1

    pieces: list = []
    passages: list[Passage] = []
    visited: set[int] = set()
    cur = 0
    arc = 0.0
    for _ in range(2 * len(hbs) + 1):
        hb = hbs[cur]
        ch = singular_nodes[hb.node].branches[hb.branch]
        passages.append(Passage(arc, hb.node, hb.branch,
                                -_limit_direction(ch, -hb.side), _limit_direction(ch, hb.side),
                                hb.side))
        visited.add(cur)
        if ch.kind == "power-series":
            cp = ChartPiece(ch, 0.0, hb.junction)
            pieces.append(cp)
            arc += cp.length
        edge, tg = trace_edge(F, hb.start, hb.outward, targets, ctrl, min_length=radius,
                              singular_points=locs, singular_radius=radius)
        arrived = int(tg.tag)
        edge.endpoints = (hb.node, hbs[arrived].node)
        pieces.append(edge)
        arc += edge.length
        visited.add(arrived)
        ahb = hbs[arrived]
        ach = singular_nodes[ahb.node].branches[ahb.branch]
        if ach.kind == "power-series":
            cp = ChartPiece(ach, ahb.junction, 0.0)
            pieces.append(cp)
            arc += cp.length
        cur = partner(arrived)
        if cur == 0:
            break
    else:
        raise ConvergenceError("traversal through singular points did not close")
    if len(visited) != len(hbs):
        raise ConvergenceError(
            "branches through the singular points form more than one cycle; unsupported")
    return Cycle(pieces, singular_nodes, passages, F)


def trace_component(F: Polynomial, seed, singular_nodes=(), ctrl=None) -> list[TracedEdge]:
    """Traced edges of the component (edges split at singular points)."""
    return build_cycle(F, seed, list(singular_nodes), ctrl).edges


# ---------------------------------------------------------------------------
# meshes

@dataclass
class CurveMesh:
    """Cyclically ordered nodes with unit tangents.

    Each passage of the traversal through a singular point is its own node,
    so a crossing visited twice owns two nodes (and later two unknowns).
    ``chart_params`` maps node index to ``(singular index, branch index, s)``
    for nodes inside the validity range of a power-series chart.
    """

    F: Polynomial
    nodes: np.ndarray
    tangents: np.ndarray
    arclength: np.ndarray
    total_length: float
    arclength_gap: float
    singular_list: list[SingularNode]
    singular_nodes: dict[int, SingularNode]
    chart_params: dict[int, tuple[int, int, float]]
    cycle: Cycle | None = None

    @property
    def N(self) -> int:
        return len(self.nodes)

    def branch_id(self, i: int) -> int:
        sn = self.singular_nodes.get(i)
        if sn is None:
            return -1
        return sn.passage_branch[sn.passages.index(i)]

    def is_singular(self, i: int) -> bool:
        return i in self.singular_nodes

    def gaps(self) -> np.ndarray:
        return np.diff(np.concatenate([self.arclength, [self.total_length]]))


def _allocate(lengths: np.ndarray, N: int) -> np.ndarray:
    """Integer subdivision counts proportional to ``lengths`` summing to ``N``."""
    raw = lengths / lengths.sum() * N
    n = np.maximum(np.floor(raw).astype(int), 1)
    while n.sum() < N:
        n[np.argmax(raw - n)] += 1
    while n.sum() > N:
        cand = np.where(n > 1)[0]
        n[cand[np.argmin((raw - n)[cand])]] -= 1
    return n


def uniform_arclength_mesh(cycle: Cycle, N: int) -> CurveMesh:
    """``N`` nodes equally spaced in arc length along ``cycle``.

    Singular passages are nodes; between consecutive passages the spacing is
    uniform with a count proportional to the arc length between them.
    """
    sn_list = cycle.singular_nodes
    if N < 8 or N < 4 * max(len(cycle.passages), 1):
        raise ConfigError(f"N={N} too small (need N >= 8 and N >= 4 x passages)")
    L = cycle.length
    if cycle.passages:
        starts = np.array([p.arclength for p in cycle.passages])
        seg = np.diff(np.concatenate([starts, [L]]))
        counts = _allocate(seg, N)
        arcs = np.concatenate([starts[k] + seg[k] * np.arange(counts[k]) / counts[k]
                               for k in range(len(starts))])
        passage_idx = np.concatenate([[0], np.cumsum(counts)[:-1]])
    else:
        arcs = L * np.arange(N) / N
        passage_idx = np.array([], dtype=int)
    return _mesh_from_arcs(cycle, arcs, passage_idx)


def _mesh_from_arcs(cycle: Cycle, arcs: np.ndarray, passage_idx) -> CurveMesh:
    F = cycle.F
    N = len(arcs)
    nodes = np.empty((N, 2))
    tangents = np.empty((N, 2))
    singular_nodes: dict[int, SingularNode] = {}
    for sn in cycle.singular_nodes:
        sn.passages, sn.passage_branch, sn.incident_node_pairs = [], [], []
    pidx = {int(i): k for k, i in enumerate(passage_idx)}
    for i, a in enumerate(arcs):
        if i in pidx:
            ps = cycle.passages[pidx[i]]
            sn = cycle.singular_nodes[ps.node]
            nodes[i] = sn.location
            tangents[i] = ps.incoming_dir
            sn.passages.append(i)
            sn.passage_branch.append(ps.branch)
            sn.incident_node_pairs.append(((i - 1) % N, (i + 1) % N))
            singular_nodes[i] = sn
            continue
        k, local = cycle.locate(a)
        piece = cycle.pieces[k]
        if isinstance(piece, ChartPiece):
            s = piece.param_at(local)
            nodes[i] = piece.chart.point(s)
            d = piece.chart.derivative(s, 1) * np.sign(piece.s_to - piece.s_from)
            tangents[i] = d / np.linalg.norm(d)
            continue
        guess = piece.point_at(local)
        try:
            p = project_to_curve(F, guess)
        except RankDeficiencyError as exc:
            raise ConvergenceError(
                f"mesh node {i} falls too close to a singular point; increase or decrease N") from exc
        nodes[i] = p
        t = curve_tangent(F, p)
        # orientation from the interpolated edge direction
        j = int(np.clip(np.searchsorted(piece.cumulative_arclength, local) - 1,
                        0, len(piece.tangents) - 1))
        if t @ piece.tangents[j] < 0:
            t = -t
        tangents[i] = t

    chart_params: dict[int, tuple[int, int, float]] = {}
    for i, k in pidx.items():
        ps = cycle.passages[k]
        ch = cycle.singular_nodes[ps.node].branches[ps.branch]
        if ch.kind != "power-series":
            continue
        chart_params[i] = (ps.node, ps.branch, 0.0)
        for direction in (1, -1):
            side = direction * ps.out_side
            j, last = i, 0.0
            for _ in range(N // 2):
                j = (j + direction) % N
                if j in singular_nodes:
                    break
                s = _chart_param(ch, nodes[j], side)
                if s is None or abs(s) <= last:
                    break
                last = abs(s)
                chart_params[j] = (ps.node, ps.branch, s)
    L = cycle.length
    return CurveMesh(F=F, nodes=nodes, tangents=tangents, arclength=np.asarray(arcs),
                     total_length=L, arclength_gap=L / N, singular_list=cycle.singular_nodes,
                     singular_nodes=singular_nodes, chart_params=chart_params, cycle=cycle)


def _chart_param(ch: BranchChart, p: np.ndarray, side: int) -> float | None:
    """Chart parameter of ``p`` seen from the branch on ``side``.

    Parameters are recorded up to twice the validity radius: stencil nodes
    only need the (exact) series-coordinate relation, while rows centred at a
    node also need the chart metric and are restricted further downstream.
    """
    s = ch.param_of(p, side)
    if abs(s) > 2.0 * ch.valid_radius:
        return None
    if s != 0.0 and np.sign(s) != side:
        return None
    return s


def curve_mesh(F: Polynomial, N: int, seed=(1.0, 0.0), singular_points=(),
               branch_declarations=None, ctrl: StepControl | None = None,
               check_undeclared: bool = True) -> CurveMesh:
    """End-to-end: singular analysis, tracing and uniform resampling."""
    decl = branch_declarations or {}
    pts = find_singular_points(F, declared=list(singular_points)) if singular_points else []
    nodes = [build_singular_node(F, p, decl.get(k)) for k, p in enumerate(pts)]
    cycle = build_cycle(F, seed, nodes, ctrl)
    if check_undeclared:
        samples = cycle.dense_samples()
        auto = find_singular_points(F, bbox=(samples.min(axis=0), samples.max(axis=0)))
        near = [a for a in auto
                if np.min(np.linalg.norm(samples - a, axis=1)) < 4.0 * (ctrl or StepControl()).h_max]
        for a in near:
            if not any(np.linalg.norm(a - p) <= AGREE_TOL for p in pts):
                raise ConfigError(f"undeclared singular point on the curve at {tuple(a)}")
    return uniform_arclength_mesh(cycle, N)


def export_mesh_csv(mesh: CurveMesh, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "arclength", "is_singular", "branch_id"])
        for i in range(mesh.N):
            w.writerow([i, repr(float(mesh.nodes[i, 0])), repr(float(mesh.nodes[i, 1])),
                        repr(float(mesh.arclength[i])), int(mesh.is_singular(i)),
                        mesh.branch_id(i)])
