"""Discrete topology on the torus T^2 = R^2/Z^2.

Curves are handled as polylines in lift coordinates.  Three services are
provided:

* wrap-aware segment crossing detection (segments are split at the seams of
  the fundamental square, then matched on a spatial hash),
* conservative rasterization and labeling of complement components,
* algebraic intersection numbers of closed curves.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

MIN_RESOLUTION = 64
MAX_RESOLUTION = 4096
CURVE_CELL = -1


class NonGenericPosition(ValueError):
    pass


# --------------------------------------------------------------- seam split

def split_at_seams(p0, p1):
    """Split lift segments where they cross the integer grid lines.

    Parameters
    ----------
    p0, p1 : (N, 2) ndarray
        Segment start and end points in lift coordinates.

    Returns
    -------
    q0, q1 : (M, 2) ndarray
        Pieces translated into the closed unit square.
    seg : (M,) ndarray of int
        Index of the source segment of each piece.
    s0, s1 : (M,) ndarray
        Parameter range of the piece along its source segment.
    """
    p0 = np.asarray(p0, dtype=float).reshape(-1, 2)
    p1 = np.asarray(p1, dtype=float).reshape(-1, 2)
    n = len(p0)
    d = p1 - p0
    segs = [np.arange(n), np.arange(n)]
    params = [np.zeros(n), np.ones(n)]
    for axis in (0, 1):
        lo = np.minimum(p0[:, axis], p1[:, axis])
        hi = np.maximum(p0[:, axis], p1[:, axis])
        first = np.floor(lo) + 1.0
        count = np.maximum(np.ceil(hi) - first, 0).astype(np.int64)
        if count.sum() == 0:
            continue
        idx = np.repeat(np.arange(n), count)
        offs = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
        lines = first[idx] + offs
        s = (lines - p0[idx, axis]) / d[idx, axis]
        inside = (s > 0.0) & (s < 1.0)
        segs.append(idx[inside])
        params.append(s[inside])
    seg = np.concatenate(segs)
    par = np.concatenate(params)
    order = np.lexsort((par, seg))
    seg, par = seg[order], par[order]
    same = seg[:-1] == seg[1:]
    s0, s1, seg = par[:-1][same], par[1:][same], seg[:-1][same]
    keep = s1 > s0
    s0, s1, seg = s0[keep], s1[keep], seg[keep]
    a = p0[seg] + s0[:, None] * d[seg]
    b = p0[seg] + s1[:, None] * d[seg]
    shift = np.floor(0.5 * (a + b))
    return a - shift, b - shift, seg, s0, s1


# -------------------------------------------------------------- crossings

def _segment_params(a0, a1, b0, b1):
    da = a1 - a0
    db = b1 - b0
    w = b0 - a0
    den = da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w[:, 0] * db[:, 1] - w[:, 1] * db[:, 0]) / den
        t = (w[:, 0] * da[:, 1] - w[:, 1] * da[:, 0]) / den
    return s, t, den


def _candidate_pairs(a0, a1, b0, b1):
    # Spatial hash on the unit square: every piece is registered in all cells
    # its bounding box overlaps, then cells are joined.
    lengths = np.concatenate([np.abs(a1 - a0).max(axis=1), np.abs(b1 - b0).max(axis=1)])
    typical = max(float(np.percentile(lengths, 90)) if len(lengths) else 1.0, 1e-6)
    g = int(np.clip(np.floor(1.0 / typical), 1, 2048))

    def register(p, q):
        lo = np.clip(np.floor(np.minimum(p, q) * g).astype(np.int64), 0, g - 1)
        hi = np.clip(np.floor(np.maximum(p, q) * g).astype(np.int64), 0, g - 1)
        nx = hi[:, 0] - lo[:, 0] + 1
        ny = hi[:, 1] - lo[:, 1] + 1
        cnt = nx * ny
        idx = np.repeat(np.arange(len(p)), cnt)
        k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        cx = lo[idx, 0] + k % nx[idx]
        cy = lo[idx, 1] + k // nx[idx]
        return cx * g + cy, idx

    ca, ia = register(a0, a1)
    cb, ib = register(b0, b1)
    order = np.argsort(cb, kind="stable")
    cb, ib = cb[order], ib[order]
    left = np.searchsorted(cb, ca, side="left")
    right = np.searchsorted(cb, ca, side="right")
    cnt = right - left
    pa = np.repeat(ia, cnt)
    k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    pb = ib[np.repeat(left, cnt) + k]
    if len(pa) == 0:
        return pa, pb
    key = np.unique(pa.astype(np.int64) * len(b0) + pb)
    return key // len(b0), key % len(b0)


@dataclass(frozen=True)
class Crossings:
    """Transversal crossings between two segment families.

    ``sa``/``sb`` are parameters in [0, 1) along the source segments ``ia``/``ib``;
    ``sign`` is the orientation sign of (da, db); ``degenerate`` marks crossings
    too close to an endpoint or between nearly parallel segments.
    """

    ia: np.ndarray
    ib: np.ndarray
    sa: np.ndarray
    sb: np.ndarray
    points: np.ndarray
    sign: np.ndarray
    degenerate: np.ndarray

    def __len__(self):
        return len(self.ia)


def torus_crossings(a0, a1, b0, b1, endpoint_tol: float = 0.0, parallel_tol: float = 0.0) -> Crossings:
    """Find all crossings of segment families A and B on the torus.

    Parameters use half-open ranges [0, 1) on every piece, so a crossing
    through a shared polyline vertex is reported once.  Collinear pairs
    report no crossing.
    """
    qa0, qa1, sa_idx, sa0, sa1 = split_at_seams(a0, a1)
    qb0, qb1, sb_idx, sb0, sb1 = split_at_seams(b0, b1)
    empty = Crossings(*(np.zeros(0, dtype=int),) * 2, *(np.zeros(0),) * 2, np.zeros((0, 2)),
                      np.zeros(0, dtype=int), np.zeros(0, dtype=bool))
    if len(qa0) == 0 or len(qb0) == 0:
        return empty
    pa, pb = _candidate_pairs(qa0, qa1, qb0, qb1)
    if len(pa) == 0:
        return empty
    s, t, den = _segment_params(qa0[pa], qa1[pa], qb0[pb], qb1[pb])
    # Closed piece ranges with a little slack so crossings on a seam survive
    # rounding; the half-open rule is then applied on the source segments.
    eps = 1e-12
    hit = (den != 0.0) & (s >= -eps) & (s <= 1.0 + eps) & (t >= -eps) & (t <= 1.0 + eps)
    pa, pb, s, t, den = pa[hit], pb[hit], s[hit], t[hit], den[hit]
    ga = np.clip(sa0[pa] + s * (sa1[pa] - sa0[pa]), 0.0, 1.0)
    gb = np.clip(sb0[pb] + t * (sb1[pb] - sb0[pb]), 0.0, 1.0)
    keep = (ga < 1.0 - eps) & (gb < 1.0 - eps)
    if len(pa):
        # Seam pieces of one segment pair can report the same crossing twice.
        key = np.stack([sa_idx[pa], sb_idx[pb], np.round(ga / 1e-9), np.round(gb / 1e-9)], axis=1)
        _, first = np.unique(key, axis=0, return_index=True)
        once = np.zeros(len(pa), dtype=bool)
        once[first] = True
        keep &= once
    pa, pb, s, t, den, ga, gb = pa[keep], pb[keep], s[keep], t[keep], den[keep], ga[keep], gb[keep]
    pts = qa0[pa] + s[:, None] * (qa1[pa] - qa0[pa])
    la = np.linalg.norm(qa1[pa] - qa0[pa], axis=1)
    lb = np.linalg.norm(qb1[pb] - qb0[pb], axis=1)
    degenerate = np.zeros(len(pa), dtype=bool)
    if endpoint_tol > 0.0:
        near = lambda g: (g < endpoint_tol) | (g > 1.0 - endpoint_tol)
        degenerate |= near(ga) | near(gb)
    if parallel_tol > 0.0:
        degenerate |= np.abs(den) <= parallel_tol * la * lb
    ia, ib = sa_idx[pa], sb_idx[pb]
    order = np.lexsort((gb, ib, ga, ia))
    return Crossings(ia[order], ib[order], ga[order], gb[order], np.mod(pts[order], 1.0),
                     np.sign(den[order]).astype(int), degenerate[order])


def polyline_crossings(a, b) -> Crossings:
    """Crossings of two open polylines given as (N, 2) lift vertex arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return torus_crossings(a[:-1], a[1:], b[:-1], b[1:])


# ---------------------------------------------------------- closed curves

@dataclass(frozen=True)
class ClosedCurve:
    """A closed polyline on the torus.

    ``vertices`` are lift coordinates; the closing edge runs from the last
    vertex to ``vertices[0] + homology``, so the homology class is the
    displacement of the lift after one turn.
    """

    vertices: np.ndarray
    homology: tuple[int, int]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "homology", (int(self.homology[0]), int(self.homology[1])))
        p0, p1 = self.edges()
        if np.any(np.linalg.norm(p1 - p0, axis=1) == 0.0):
            raise ValueError("closed curve has a zero-length edge")

    @classmethod
    def straight(cls, homology, origin=(0.0, 0.0), pieces: int = 1) -> "ClosedCurve":
        """Straight-line representative of a homology class."""
        h = np.asarray(homology, dtype=float)
        s = np.arange(pieces)[:, None] / pieces
        return cls(np.asarray(origin, dtype=float) + s * h, tuple(homology))

    @classmethod
    def from_lift(cls, points) -> "ClosedCurve":
        """Close a lift polyline whose endpoints project to the same torus point."""
        pts = np.asarray(points, dtype=float)
        disp = pts[-1] - pts[0]
        h = np.round(disp)
        if np.linalg.norm(disp - h) > 1e-9:
            raise ValueError("polyline endpoints do not project to the same point")
        return cls(pts[:-1], (int(h[0]), int(h[1])))

    def edges(self):
        v = self.vertices
        closing = v[:1] + np.asarray(self.homology, dtype=float)
        return v, np.vstack([v[1:], closing])

    def polyline(self):
        v = self.vertices
        return np.vstack([v, v[:1] + np.asarray(self.homology, dtype=float)])


def _jitter(curve: ClosedCurve, attempt: int, magnitude: float) -> ClosedCurve:
    digest = hashlib.sha256(curve.vertices.tobytes() + bytes([attempt])).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    # A rigid shift of fixed length in a random direction: per-vertex noise can
    # cancel between vertices and leave an edge on the other curve's vertex.
    phi = rng.uniform(0.0, 2.0 * np.pi)
    step = magnitude * np.array([np.cos(phi), np.sin(phi)])
    return ClosedCurve(curve.vertices + step, curve.homology)


def _signed_count(a: ClosedCurve, b: ClosedCurve, offset):
    # A common translation is a homeomorphism of the torus; it moves curves
    # off the seams of the fundamental square.
    a0, a1 = a.edges()
    b0, b1 = b.edges()
    c = torus_crossings(a0 + offset, a1 + offset, b0 + offset, b1 + offset,
                        endpoint_tol=1e-11, parallel_tol=1e-12)
    return int(c.sign.sum()), bool(c.degenerate.any())


_OFFSETS = np.array([[0.0, 0.0], [0.1234567, 0.3456789], [0.7071068, 0.2718282],
                     [0.5772157, 0.6180340], [0.3183099, 0.1414214]])


def intersection_number(a: ClosedCurve, b: ClosedCurve, retries: int = 3, jitter: float = 1e-9) -> int:
    """Algebraic intersection number: signed count of crossings.

    The count is accepted once two successive evaluations agree without
    degenerate crossings.  Evaluation k >= 1 applies a deterministic jitter to
    ``a`` and a fixed common translation to both curves, which moves curves
    off the seams and off each other's vertices.
    """
    prev = _signed_count(a, b, _OFFSETS[0])
    for attempt in range(retries + 1):
        cur = _signed_count(_jitter(a, attempt, jitter), b, _OFFSETS[1 + attempt % 4])
        if not prev[1] and not cur[1] and prev[0] == cur[0]:
            return cur[0]
        prev = cur
    raise NonGenericPosition("curves remain in non-generic position after jitter")


def homological_intersection(ha, hb) -> int:
    return int(ha[0] * hb[1] - ha[1] * hb[0])


# ---------------------------------------------------------- rasterization

def rasterize(points, resolution: int, mask=None):
    """Mark every grid cell touched by an open polyline (supercover).

    Cells are those of a ``resolution`` x ``resolution`` grid on the unit
    square; lift coordinates are wrapped.  Each grid line crossing marks the
    cells on both sides, so no 4-neighbor pair straddles the curve unmarked.
    """
    pts = np.asarray(points, dtype=float) * resolution
    if mask is None:
        mask = np.zeros((resolution, resolution), dtype=bool)
    if len(pts) == 0:
        return mask
    cells = [np.floor(pts).astype(np.int64)]
    p0, p1 = pts[:-1], pts[1:]
    d = p1 - p0
    for axis in (0, 1):
        other = 1 - axis
        lo = np.minimum(p0[:, axis], p1[:, axis])
        hi = np.maximum(p0[:, axis], p1[:, axis])
        first = np.floor(lo) + 1.0
        count = np.maximum(np.ceil(hi) - first, 0).astype(np.int64)
        if count.sum() == 0:
            continue
        idx = np.repeat(np.arange(len(p0)), count)
        offs = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
        line = first[idx] + offs
        s = (line - p0[idx, axis]) / d[idx, axis]
        cross = np.floor(p0[idx, other] + s * d[idx, other]).astype(np.int64)
        li = line.astype(np.int64)
        for side in (li - 1, li):
            c = np.empty((len(idx), 2), dtype=np.int64)
            c[:, axis] = side
            c[:, other] = cross
            cells.append(c)
    c = np.mod(np.concatenate(cells), resolution)
    mask[c[:, 0], c[:, 1]] = True
    return mask


def _periodic_label(free):
    lab, n = ndimage.label(free, structure=ndimage.generate_binary_structure(2, 1))
    if n == 0:
        return np.full(free.shape, CURVE_CELL, dtype=np.int64), 0
    # Glue components across both seams with a union-find on label pairs.
    pairs = []
    for a, b in ((lab[0, :], lab[-1, :]), (lab[:, 0], lab[:, -1])):
        both = (a > 0) & (b > 0)
        pairs.append(np.stack([a[both], b[both]], axis=1))
    pairs = np.concatenate(pairs) - 1
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, root = connected_components(graph, directed=False)
    out = np.full(free.shape, CURVE_CELL, dtype=np.int64)
    comp = root[lab[free] - 1]
    # Relabel contiguously in order of first appearance (row-major).
    _, first = np.unique(comp, return_index=True)
    rank = np.empty(comp.max() + 1, dtype=np.int64)
    rank[comp[np.sort(first)]] = np.arange(len(first))
    out[free] = rank[comp]
    return out, len(first)


@dataclass
class ComponentLabeling:
    """Labeled complement of a rasterized curve family on a toroidal grid.

    ``labels`` holds a component id per free cell and ``CURVE_CELL`` (-1) on
    curve cells.  ``adjacency[c]`` lists the curve tags whose cells are
    4-adjacent to component ``c``.
    """

    resolution: int
    labels: np.ndarray = field(repr=False)
    component_count: int
    adjacency: list[list[str]]
    curve_masks: dict[str, np.ndarray] = field(repr=False)
    resolution_too_coarse: bool | None = None

    def component_of(self, point) -> int:
        """Label of the cell containing a torus point (-1 on a curve cell)."""
        i, j = (np.floor(np.mod(np.asarray(point, dtype=float), 1.0) * self.resolution).astype(int)
                % self.resolution)
        return int(self.labels[i, j])

    def nearest_component(self, point, max_radius: int = 8) -> int:
        """Component of the nearest free cell to ``point`` (square rings)."""
        i0, j0 = (np.floor(np.mod(np.asarray(point, dtype=float), 1.0) * self.resolution).astype(int)
                  % self.resolution)
        for r in range(max_radius + 1):
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    if max(abs(di), abs(dj)) != r:
                        continue
                    lab = self.labels[(i0 + di) % self.resolution, (j0 + dj) % self.resolution]
                    if lab >= 0:
                        return int(lab)
        return CURVE_CELL

    def component_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.component_count)

    def touches_all(self, tags) -> bool:
        return all(set(tags) <= set(adj) for adj in self.adjacency)

    def summary(self) -> dict:
        return {
            "resolution": self.resolution,
            "component_count": self.component_count,
            "component_sizes": [int(v) for v in self.component_sizes()],
            "adjacency": self.adjacency,
            "resolution_too_coarse": self.resolution_too_coarse,
        }


def _as_tagged(curves, tags):
    out = []
    for i, c in enumerate(curves):
        tag = tags[i] if tags is not None else str(i)
        pts = c.polyline() if isinstance(c, ClosedCurve) else np.asarray(c, dtype=float)
        out.append((tag, pts))
    return out


def _label_once(tagged, resolution):
    masks: dict[str, np.ndarray] = {}
    for tag, pts in tagged:
        masks[tag] = rasterize(pts, resolution, masks.get(tag))
    curve = np.zeros((resolution, resolution), dtype=bool)
    for m in masks.values():
        curve |= m
    labels, count = _periodic_label(~curve)
    adjacency: list[set] = [set() for _ in range(count)]
    for tag, m in masks.items():
        near = m | np.roll(m, 1, 0) | np.roll(m, -1, 0) | np.roll(m, 1, 1) | np.roll(m, -1, 1)
        for c in np.unique(labels[near & ~curve]):
            adjacency[c].add(tag)
    return labels, count, [sorted(a) for a in adjacency], masks


def label_complement(curves, resolution: int, tags=None, check_doubling: bool = True) -> ComponentLabeling:
    """Rasterize a curve family and label the components of its complement.

    Parameters
    ----------
    curves : sequence of ClosedCurve or (N, 2) arrays
        Curves in lift coordinates; open polylines are allowed.
    resolution : int
        Grid size, between 64 and 4096.
    tags : sequence of str, optional
        Tag per curve, used for the boundary-touch table.  Curves sharing a tag
        are rasterized into one mask.
    check_doubling : bool
        Relabel at twice the resolution (when at most 2048) and set
        ``resolution_too_coarse`` if the component count changes.
    """
    resolution = int(resolution)
    if not MIN_RESOLUTION <= resolution <= MAX_RESOLUTION:
        raise ValueError(f"resolution must lie in [{MIN_RESOLUTION}, {MAX_RESOLUTION}]")
    tagged = _as_tagged(curves, tags)
    labels, count, adjacency, masks = _label_once(tagged, resolution)
    coarse = None
    if check_doubling and resolution <= MAX_RESOLUTION // 2:
        _, count2, _, _ = _label_once(tagged, 2 * resolution)
        coarse = count2 != count
    return ComponentLabeling(resolution, labels, count, adjacency, masks, coarse)


def write_graymap(labeling: ComponentLabeling, path) -> None:
    """Write labels as a plain-text graymap: curve cells 0, component c as c+1."""
    grid = labeling.labels + 1
    with open(path, "w") as fh:
        fh.write("P2\n")
        fh.write(f"# components {labeling.component_count}\n")
        fh.write(f"{labeling.resolution} {labeling.resolution}\n{max(labeling.component_count, 1)}\n")
        # Row index is y (top row = largest y), column is x.
        for row in grid.T[::-1]:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def write_mask_graymap(mask: np.ndarray, path, comment: str = "") -> None:
    with open(path, "w") as fh:
        fh.write("P2\n")
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(f"{mask.shape[0]} {mask.shape[1]}\n{int(mask.max(initial=1))}\n")
        for row in np.asarray(mask, dtype=int).T[::-1]:
            fh.write(" ".join(map(str, row.tolist())) + "\n")
