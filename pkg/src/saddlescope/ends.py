"""Ends of residual domains on combinatorial closed surfaces.

A surface is a polygonal cell complex.  Cells are indexed globally:
vertices first, then edges, then faces.  Subcomplexes and open unions of
cells are boolean masks over that index.

The ends of a residual domain U of a compact subcomplex K are counted as the
components of U ∩ N_k, where N_k is the union of open cells having a vertex
within 1-skeleton distance k - 1 of K.  The complex is barycentrically
subdivided first, which makes K a full subcomplex so that N_1 is a regular
neighborhood of K.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra


class NotStabilized(RuntimeError):
    pass


class InvalidComplex(ValueError):
    pass


@dataclass(frozen=True)
class CombSurface:
    n_vertices: int
    edges: np.ndarray
    faces: tuple
    face_edges: tuple
    coords: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_faces(cls, n_vertices: int, faces, coords=None) -> "CombSurface":
        index: dict[tuple[int, int], int] = {}
        edges = []
        face_edges = []
        for f in faces:
            fe = []
            for a, b in zip(f, f[1:] + f[:1]):
                key = (a, b) if a < b else (b, a)
                if key not in index:
                    index[key] = len(edges)
                    edges.append(key)
                fe.append(index[key])
            face_edges.append(tuple(fe))
        surf = cls(n_vertices, np.array(edges, dtype=np.int64).reshape(-1, 2),
                   tuple(tuple(int(v) for v in f) for f in faces), tuple(face_edges), coords)
        surf.validate()
        return surf

    # -- counts
    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_cells(self) -> int:
        return self.n_vertices + self.n_edges + self.n_faces

    def edge_cell(self, e):
        return self.n_vertices + np.asarray(e)

    def face_cell(self, f):
        return self.n_vertices + self.n_edges + np.asarray(f)

    def dimension(self) -> np.ndarray:
        return np.repeat([0, 1, 2], [self.n_vertices, self.n_edges, self.n_faces])

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    def validate(self) -> None:
        count = np.zeros(self.n_edges, dtype=int)
        for fe in self.face_edges:
            for e in fe:
                count[e] += 1
        if np.any(count != 2):
            raise InvalidComplex("every edge must bound exactly two faces")
        if (2 - self.euler_characteristic) % 2:
            raise InvalidComplex(f"odd Euler characteristic {self.euler_characteristic}")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.edges.ravel()] = True
        if not used.all():
            raise InvalidComplex("isolated vertex")

    # -- incidence
    def _incidence_pairs(self) -> np.ndarray:
        cached = self.__dict__.get("_pairs")
        if cached is not None:
            return cached
        V, E = self.n_vertices, self.n_edges
        pairs = [np.column_stack([self.edges[:, 0], V + np.arange(E)]),
                 np.column_stack([self.edges[:, 1], V + np.arange(E)])]
        fv, fe = [], []
        for i, (f, es) in enumerate(zip(self.faces, self.face_edges)):
            c = V + E + i
            fv.extend((v, c) for v in f)
            fe.extend((V + e, c) for e in es)
        pairs.append(np.array(fv, dtype=np.int64))
        pairs.append(np.array(fe, dtype=np.int64))
        out = np.vstack(pairs)
        object.__setattr__(self, "_pairs", out)
        return out

    def cell_vertices(self) -> list[np.ndarray]:
        """Vertex set of the closure of every cell."""
        out = [np.array([v]) for v in range(self.n_vertices)]
        out.extend(np.asarray(e) for e in self.edges)
        out.extend(np.asarray(f) for f in self.faces)
        return out

    def closure(self, mask) -> np.ndarray:
        mask = np.asarray(mask, dtype=bool).copy()
        pairs = self._incidence_pairs()
        # Two passes reach vertices of faces through their edges.
        for _ in range(2):
            hit = mask[pairs[:, 1]]
            mask[pairs[hit, 0]] = True
        return mask

    def components(self, mask) -> tuple[int, np.ndarray]:
        """Connected components of a union of cells (open or closed) given by incidence."""
        mask = np.asarray(mask, dtype=bool)
        pairs = self._incidence_pairs()
        keep = mask[pairs[:, 0]] & mask[pairs[:, 1]]
        p = pairs[keep]
        n = self.n_cells
        g = coo_matrix((np.ones(len(p)), (p[:, 0], p[:, 1])), shape=(n, n))
        _, lab = connected_components(g, directed=False)
        cells = np.flatnonzero(mask)
        if len(cells) == 0:
            return 0, np.full(n, -1)
        uniq, inv = np.unique(lab[cells], return_inverse=True)
        labels = np.full(n, -1)
        labels[cells] = inv
        return len(uniq), labels

    def vertex_distance(self, sources) -> np.ndarray:
        """Graph distance in the 1-skeleton from a set of vertices."""
        V = self.n_vertices
        e = self.edges
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(V, V))
        src = np.flatnonzero(np.asarray(sources, dtype=bool))
        if len(src) == 0:
            return np.full(V, np.inf)
        d = dijkstra(g, directed=False, unweighted=True, indices=src, min_only=True)
        return d

    # -- subdivision
    def subdivide(self):
        """Barycentric subdivision.

        Returns the new surface and ``parent``, the index of the smallest
        old cell containing each new cell.
        """
        V, E, F = self.n_vertices, self.n_edges, self.n_faces
        mid = V + np.arange(E)
        cen = V + E + np.arange(F)
        faces = []
        face_parent = []
        for i, (f, es) in enumerate(zip(self.faces, self.face_edges)):
            k = len(f)
            for j in range(k):
                a, b, m = f[j], f[(j + 1) % k], int(mid[es[j]])
                faces.append([a, m, int(cen[i])])
                faces.append([m, b, int(cen[i])])
                face_parent.extend([V + E + i, V + E + i])
        new = CombSurface.from_faces(V + E + F, faces)
        parent = np.empty(new.n_cells, dtype=np.int64)
        parent[:V] = np.arange(V)
        parent[V:V + E] = V + np.arange(E)
        parent[V + E:V + E + F] = V + E + np.arange(F)
        old_of_vertex = parent[:new.n_vertices]
        for idx, (a, b) in enumerate(new.edges):
            pa, pb = old_of_vertex[a], old_of_vertex[b]
            # Half of an old edge if one endpoint is an old vertex and the other its midpoint.
            if pa >= V + E or pb >= V + E:
                parent[new.n_vertices + idx] = pa if pa >= V + E else pb
            else:
                parent[new.n_vertices + idx] = pa if pa >= V else pb
        parent[new.n_vertices + new.n_edges:] = face_parent
        return new, parent


# --------------------------------------------------------------- builders

def torus_grid(n: int) -> CombSurface:
    """n x n square grid with opposite sides identified; vertex (i, j) is i*n + j."""
    if n < 3:
        raise ValueError("grid size must be at least 3")
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * n + j
            b = ((i + 1) % n) * n + j
            c = ((i + 1) % n) * n + (j + 1) % n
            d = i * n + (j + 1) % n
            faces.append([a, b, c, d])
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)
    return CombSurface.from_faces(n * n, faces, coords)


def sphere_grid(n: int) -> CombSurface:
    """Pillow sphere: two n x n square grids glued along their boundary."""
    if n < 2:
        raise ValueError("grid size must be at least 2")
    top = {(i, j): i * (n + 1) + j for i in range(n + 1) for j in range(n + 1)}
    nxt = (n + 1) ** 2
    bottom = {}
    for (i, j), v in top.items():
        if i in (0, n) or j in (0, n):
            bottom[(i, j)] = v
        else:
            bottom[(i, j)] = nxt
            nxt += 1
    faces = []
    for i in range(n):
        for j in range(n):
            faces.append([top[i, j], top[i + 1, j], top[i + 1, j + 1], top[i, j + 1]])
            faces.append([bottom[i, j], bottom[i, j + 1], bottom[i + 1, j + 1], bottom[i + 1, j]])
    return CombSurface.from_faces(nxt, faces)


def connected_sum(a: CombSurface, fa: int, b: CombSurface, fb: int):
    """Remove face ``fa`` of a and ``fb`` of b and glue their boundaries.

    Returns the surface and the vertex maps of a and b into it.
    """
    ca, cb = list(a.faces[fa]), list(b.faces[fb])
    if len(ca) != len(cb):
        raise ValueError("glued faces must have the same number of sides")
    off = a.n_vertices
    vmap_b = off + np.arange(b.n_vertices)
    # Reverse b's cycle so that orientations are compatible.
    rev = [cb[0]] + cb[1:][::-1]
    for u, w in zip(ca, rev):
        vmap_b[w] = u
    keep_b = np.ones(b.n_vertices, dtype=bool)
    keep_b[rev] = False
    renum = np.full(b.n_vertices, -1)
    renum[keep_b] = off + np.arange(keep_b.sum())
    vmap_b = np.where(keep_b, renum, vmap_b)
    faces = [list(f) for i, f in enumerate(a.faces) if i != fa]
    faces += [[int(vmap_b[v]) for v in f] for i, f in enumerate(b.faces) if i != fb]
    surf = CombSurface.from_faces(off + int(keep_b.sum()), faces)
    return surf, np.arange(a.n_vertices), vmap_b


def find_face(surf: CombSurface, vertices) -> int:
    key = frozenset(int(v) for v in vertices)
    for i, f in enumerate(surf.faces):
        if frozenset(f) == key:
            return i
    raise KeyError(f"no face with vertices {sorted(key)}")


def _grid_face(n, i, j):
    return [i * n + j, ((i + 1) % n) * n + j, ((i + 1) % n) * n + (j + 1) % n, i * n + (j + 1) % n]


def genus_surface(g: int, n: int = 8):
    """Closed orientable surface of genus g.

    g = 0 is the pillow sphere of side n.  For g ≥ 1, torus grids T_0, ...,
    T_{g-1} of side n are chained: T_h's face (0, 0) is glued to face
    (n//2, 0) of T_{h-1}, which identifies vertex (0, 0) of T_h with vertex
    (n//2, 0) of T_{h-1}.  Returns the surface and, per handle, an array
    mapping local grid vertex i*n + j to the global vertex id.
    """
    if g == 0:
        return sphere_grid(n), []
    if n < 4:
        raise ValueError("handles need grid size at least 4")
    surf = torus_grid(n)
    maps = [np.arange(n * n)]
    for _ in range(1, g):
        fa = find_face(surf, maps[-1][_grid_face(n, n // 2, 0)])
        surf, _, bmap = connected_sum(surf, fa, torus_grid(n), 0)
        maps.append(bmap)
    return surf, maps


# ---------------------------------------------------------- marked complexes

def path_cells(surf: CombSurface, vertices) -> np.ndarray:
    """Closed subcomplex of a vertex path (consecutive vertices must share an edge)."""
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(surf.edges)}
    mask = np.zeros(surf.n_cells, dtype=bool)
    vs = [int(v) for v in vertices]
    mask[vs] = True
    for a, b in zip(vs, vs[1:]):
        key = (a, b) if a < b else (b, a)
        if key not in lookup:
            raise InvalidComplex(f"vertices {a} and {b} are not adjacent")
        mask[surf.n_vertices + lookup[key]] = True
    return mask


def grid_segment(n: int, start, stop) -> list[int]:
    """Vertex ids of an axis-parallel walk on the n x n torus grid, wrapping mod n.

    Coordinates may leave [0, n); the walk goes from ``start`` to ``stop``
    in unit steps along the single coordinate that changes.
    """
    (i0, j0), (i1, j1) = start, stop
    if i0 != i1 and j0 != j1:
        raise ValueError("segments must be axis-parallel")
    if i0 != i1:
        step = 1 if i1 > i0 else -1
        pts = [(i, j0) for i in range(i0, i1 + step, step)]
    else:
        step = 1 if j1 > j0 else -1
        pts = [(i0, j) for j in range(j0, j1 + step, step)]
    return [(i % n) * n + (j % n) for i, j in pts]


def residual_components(surf: CombSurface, K) -> tuple[int, np.ndarray]:
    return surf.components(~np.asarray(K, dtype=bool))


@dataclass(frozen=True)
class MarkedComplex:
    surface: CombSurface
    K: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=bool)
        U = np.asarray(self.U, dtype=bool)
        if not np.array_equal(self.surface.closure(K), K):
            raise InvalidComplex("K must be a closed subcomplex")
        if np.any(K & U):
            raise InvalidComplex("U must be disjoint from K")
        if not U.any():
            raise InvalidComplex("U is empty")
        n, lab = self.surface.components(U)
        if n != 1:
            raise InvalidComplex("U must be connected")
        _, comp = residual_components(self.surface, K)
        if np.unique(comp[U]).size != 1 or np.count_nonzero(comp == comp[np.flatnonzero(U)[0]]) != U.sum():
            raise InvalidComplex("U must be a full component of the complement of K")

    @classmethod
    def from_seed(cls, surface: CombSurface, K, seed_cell: int) -> "MarkedComplex":
        """U is the residual component of K containing ``seed_cell``."""
        K = surface.closure(K)
        _, comp = residual_components(surface, K)
        if comp[seed_cell] < 0:
            raise InvalidComplex("seed cell lies in K")
        return cls(surface, K, comp == comp[seed_cell])

    @property
    def m(self) -> int:
        return self.surface.components(self.K)[0]

    def subdivide(self) -> "MarkedComplex":
        new, parent = self.surface.subdivide()
        return MarkedComplex(new, self.K[parent], self.U[parent])


# ------------------------------------------------------------------ counting

def level_counts(mc: MarkedComplex, levels: int) -> list[int]:
    """Component counts of U ∩ N_k for k = 1..levels (no subdivision)."""
    surf = mc.surface
    K = mc.K
    dist = surf.vertex_distance(K[:surf.n_vertices])
    cell_dist = np.array([dist[vs].min() for vs in surf.cell_vertices()])
    counts = []
    for k in range(1, levels + 1):
        counts.append(surf.components(mc.U & (cell_dist <= k - 1))[0])
    return counts


def count_ends(mc: MarkedComplex, levels: int = 3, subdivisions: int = 1) -> int:
    """Number of ends of U, read off the neighborhoods of K.

    The complex is barycentrically subdivided ``subdivisions`` times, then
    U ∩ N_k is counted for k = levels..1.  The count is accepted when the two
    finest levels agree; otherwise NotStabilized is raised.
    """
    if levels < 3:
        raise ValueError("levels must be at least 3")
    for _ in range(subdivisions):
        mc = mc.subdivide()
    counts = level_counts(mc, levels)
    if counts[0] != counts[1]:
        raise NotStabilized(f"level counts {counts} disagree at the two finest levels")
    return counts[0]


def count_ends_refined(mc: MarkedComplex, levels: int = 3, max_subdivisions: int = 3) -> int:
    """count_ends with extra subdivision until the count stabilizes."""
    for s in range(1, max_subdivisions + 1):
        try:
            return count_ends(mc, levels, s)
        except NotStabilized:
            if s == max_subdivisions:
                raise
    raise AssertionError("unreachable")


def frontier_components(mc: MarkedComplex) -> int:
    """Components of the frontier closure(U) \\ U."""
    fr = mc.surface.closure(mc.U) & ~mc.U
    return mc.surface.components(fr)[0]


def check_bound(mc: MarkedComplex, levels: int = 3) -> dict:
    ends = count_ends_refined(mc, levels)
    m = mc.m
    g = mc.surface.genus
    return {"ends": ends, "m": m, "g": g, "bound": m * (g + 1), "holds": ends <= m * (g + 1)}


# ------------------------------------------------------------------ fixtures

def sharpness_witness(g: int, n: int = 8) -> MarkedComplex:
    """Connected K with g + 1 ends: one meridian per handle joined by an arc.

    On handle h the meridian is the row j = n//2.  The joining arc runs down
    the column i = 0 of handle h to its glued corner and up the column
    i = n//2 of handle h - 1.  For g = 0, K is a single vertex of the sphere.
    """
    surf, maps = genus_surface(g, n)
    if g == 0:
        K = np.zeros(surf.n_cells, dtype=bool)
        K[0] = True
        return MarkedComplex.from_seed(surf, K, surf.n_vertices - 1)
    K = np.zeros(surf.n_cells, dtype=bool)
    h2 = n // 2
    for h, vm in enumerate(maps):
        K |= path_cells(surf, vm[grid_segment(n, (0, h2), (n, h2))])
        if h > 0:
            K |= path_cells(surf, vm[grid_segment(n, (0, h2), (0, 0))])
            K |= path_cells(surf, maps[h - 1][grid_segment(n, (h2, 0), (h2, h2))])
    seed = next(c for c in range(surf.n_cells) if not K[c])
    return MarkedComplex.from_seed(surf, K, seed)


def load_fixture(data) -> MarkedComplex:
    """Build a marked complex from a fixture dict (or the name of a bundled fixture).

    Format: ``{"surface": "torus_grid", "grid": n, "genus": g, "K": {"vertices":
    [[i, j], ...], "edges": [[i0, j0, i1, j1], ...], "faces": [[i, j], ...]},
    "U_seed_face": [i, j], "expected_ends": e}``.  Grid coordinates are taken
    mod n.  ``genus`` is checked against the Euler characteristic.
    """
    if isinstance(data, str):
        text = resources.files("saddlescope.fixtures").joinpath(f"{data}.json").read_text()
        data = json.loads(text)
    if data.get("surface", "torus_grid") != "torus_grid":
        raise ValueError("only torus_grid fixtures are supported")
    n = int(data["grid"])
    surf = torus_grid(n)
    if "genus" in data and int(data["genus"]) != surf.genus:
        raise InvalidComplex("declared genus does not match the Euler characteristic")
    K = np.zeros(surf.n_cells, dtype=bool)
    cells = data["K"]
    for i, j in cells.get("vertices", []):
        K[(i % n) * n + j % n] = True
    for i0, j0, i1, j1 in cells.get("edges", []):
        a, b = (i0 % n) * n + j0 % n, (i1 % n) * n + j1 % n
        K |= path_cells(surf, [a, b])
    for i, j in cells.get("faces", []):
        K[surf.face_cell(find_face(surf, _grid_face(n, i % n, j % n)))] = True
    i, j = data["U_seed_face"]
    seed = int(surf.face_cell(find_face(surf, _grid_face(n, i % n, j % n))))
    return MarkedComplex.from_seed(surf, K, seed)


def fixture_from_segments(n: int, segments, seed_face, **extra) -> dict:
    """Fixture dict whose K is a union of axis-parallel grid segments."""
    edges = []
    for start, stop in segments:
        vs = grid_segment(n, start, stop)
        for a, b in zip(vs, vs[1:]):
            edges.append([a // n, a % n, b // n, b % n])
    out = {"surface": "torus_grid", "grid": n, "genus": 1, "K": {"edges": edges}, "U_seed_face": list(seed_face)}
    out.update(extra)
    return out


def random_marked_complex(rng: np.random.Generator, g: int, n: int = 8, walks: int | None = None,
                          walk_length: int = 12) -> MarkedComplex:
    """Random K made of lazy random walks on the 1-skeleton; U a random residual component."""
    surf, _ = genus_surface(g, n)
    nbrs = [[] for _ in range(surf.n_vertices)]
    for a, b in surf.edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    if walks is None:
        walks = int(rng.integers(1, 5))
    K = np.zeros(surf.n_cells, dtype=bool)
    for _ in range(walks):
        v = int(rng.integers(surf.n_vertices))
        path = [v]
        for _ in range(int(rng.integers(0, walk_length + 1))):
            v = int(rng.choice(nbrs[v]))
            path.append(v)
        K |= path_cells(surf, path)
    if rng.random() < 0.3:
        K[surf.face_cell(int(rng.integers(surf.n_faces)))] = True
    K = surf.closure(K)
    count, comp = residual_components(surf, K)
    pick = int(rng.integers(count))
    return MarkedComplex(surf, K, comp == pick)
