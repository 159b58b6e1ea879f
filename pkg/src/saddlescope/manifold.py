"""Branches of the invariant manifolds of a saddle, grown as polylines.

A branch is parameterized by the linear coordinate t of its local chart, so
that the growth map G (f, f^-1, or their squares for saddles with negative
eigenvalues) satisfies G(α(t)) = α(Λt).  Internally every vertex is stored
as a pair (level k, u in [0, 1]) meaning

    α(t) = G^k(z0 + u (z1 - z0)),   t = d0 Λ^k (1 + u (Λ - 1)),

where z0 = p + d0 v and z1 = G(z0) bound the seed segment.  Level k + 1 is
the G-image of level k, so the functional equation holds vertex by vertex,
and midpoints added by refinement are recomputed exactly from the seed.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .fixed_points import Classification, FixedPointRecord
from .maps import MapSpec, eval_inverse_lift, eval_lift, torus_distance
from .topology import rasterize


class Branch(str, enum.Enum):
    UNSTABLE_PLUS = "UnstablePlus"
    UNSTABLE_MINUS = "UnstableMinus"
    STABLE_PLUS = "StablePlus"
    STABLE_MINUS = "StableMinus"

    @property
    def is_unstable(self) -> bool:
        return self in (Branch.UNSTABLE_PLUS, Branch.UNSTABLE_MINUS)

    @property
    def sign(self) -> int:
        return 1 if self in (Branch.UNSTABLE_PLUS, Branch.STABLE_PLUS) else -1

    @property
    def short(self) -> str:
        return {"UnstablePlus": "UPlus", "UnstableMinus": "UMinus",
                "StablePlus": "SPlus", "StableMinus": "SMinus"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "Branch":
        for b in cls:
            if name in (b.value, b.short, b.name):
                return b
        raise ValueError(f"unknown branch {name!r}")

    def negated(self) -> "Branch":
        return {
            Branch.UNSTABLE_PLUS: Branch.UNSTABLE_MINUS,
            Branch.UNSTABLE_MINUS: Branch.UNSTABLE_PLUS,
            Branch.STABLE_PLUS: Branch.STABLE_MINUS,
            Branch.STABLE_MINUS: Branch.STABLE_PLUS,
        }[self]


class SeedFailure(RuntimeError):
    pass


class ArcTooShort(ValueError):
    pass


@dataclass(frozen=True)
class GrowthSettings:
    h_max: float = 1e-3
    theta_max: float = 0.2
    tube_tol: float = 1e-6
    seed_tol: float = 1e-9
    vertex_cap: int = 5_000_000
    min_spacing: float = 1e-9
    max_seed_distance: float = 1e-2

    def __post_init__(self):
        for name in ("h_max", "theta_max", "tube_tol", "seed_tol", "min_spacing", "max_seed_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.vertex_cap < 2:
            raise ValueError("vertex_cap must be at least 2")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class _Level:
    u: np.ndarray
    points: np.ndarray


@dataclass(frozen=True)
class ManifoldArc:
    """One branch of W^u(p) or W^s(p) as an exact-vertex polyline.

    Attributes
    ----------
    spec, saddle, branch
        The map, the saddle and which of the four branches this is.
    lam : float
        Expansion factor Λ of the growth map G along the branch.
    period : int
        1, or 2 when the saddle has negative eigenvalues (branches swap under f).
    direction : ndarray
        Signed unit eigenvector spanning the local branch.
    d0 : float
        Seed distance; t ranges over [d0, tmax].
    """

    spec: MapSpec
    saddle: FixedPointRecord
    branch: Branch
    lam: float
    period: int
    direction: np.ndarray
    d0: float
    settings: GrowthSettings
    levels: tuple = field(repr=False)
    tmax: float = 0.0
    truncated: bool = False

    # ------------------------------------------------------------- growth map
    @property
    def base(self) -> np.ndarray:
        # The saddle in lift coordinates; fixed by G up to a deck translation.
        return np.asarray(self.saddle.location, dtype=float)

    def _g(self, z):
        step = eval_lift if self.branch.is_unstable else eval_inverse_lift
        for _ in range(self.period):
            z = step(self.spec, z)
        return z

    def _g_inv(self, z):
        step = eval_inverse_lift if self.branch.is_unstable else eval_lift
        for _ in range(self.period):
            z = step(self.spec, z)
        return z

    @property
    def deck(self) -> np.ndarray:
        """Translation with G(p) = p + deck on the lift."""
        return np.round(self._g(self.base) - self.base)

    def growth_map(self, z):
        """G with the deck translation of p removed, so G(α(t)) = α(Λt) in the lift."""
        return self._g(z) - self.deck

    def growth_map_inverse(self, z):
        return self._g_inv(z + self.deck)

    @property
    def seed(self):
        z0 = self.base + self.d0 * self.direction
        return z0, self.growth_map(z0)

    # -------------------------------------------------------------- vertices
    def level_points(self, k: int, u) -> np.ndarray:
        """Exact points α at level k and chord coordinates u."""
        z0, z1 = self.seed
        u = np.asarray(u, dtype=float)
        z = z0 + u[..., None] * (z1 - z0)
        for _ in range(k):
            z = self.growth_map(z)
        return z

    def t_of(self, k, u):
        return self.d0 * self.lam ** np.asarray(k, dtype=float) * (1.0 + np.asarray(u) * (self.lam - 1.0))

    def ku_of(self, t):
        """Level and chord coordinate of parameter t (inverse of :meth:`t_of`)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.d0 * (1 - 1e-12)):
            raise ValueError("parameter below the seed distance")
        k = np.floor(np.log(np.maximum(t, self.d0) / self.d0) / np.log(self.lam)).astype(int)
        k = np.maximum(k, 0)
        u = (t / (self.d0 * self.lam ** k.astype(float)) - 1.0) / (self.lam - 1.0)
        # Guard rounding at level boundaries.
        over = u >= 1.0
        k = np.where(over, k + 1, k)
        u = np.where(over, (t / (self.d0 * self.lam ** k.astype(float)) - 1.0) / (self.lam - 1.0), u)
        return k, np.clip(u, 0.0, 1.0)

    def evaluate(self, t) -> np.ndarray:
        """Exact point α(t) in lift coordinates (array of t allowed)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k, u = self.ku_of(t)
        out = np.empty(t.shape + (2,))
        for kk in np.unique(k):
            sel = k == kk
            out[sel] = self.level_points(int(kk), u[sel])
        return out

    def _build_vertices(self):
        ts, ps = [], []
        for k, lev in enumerate(self.levels):
            last = k == len(self.levels) - 1
            u = lev.u if last else lev.u[:-1]
            pts = lev.points if last else lev.points[:-1]
            ts.append(self.t_of(k, u))
            ps.append(pts)
        t = np.concatenate(ts)
        p = np.concatenate(ps)
        keep = t < self.tmax
        t, p = t[keep], p[keep]
        end = self.evaluate(np.array([self.tmax]))
        return np.concatenate([t, [self.tmax]]), np.vstack([p, end])

    @property
    def vertices(self):
        cache = self.__dict__.get("_vertices")
        if cache is None:
            cache = self._build_vertices()
            object.__setattr__(self, "_vertices", cache)
        return cache

    @property
    def t(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def points(self) -> np.ndarray:
        return self.vertices[1]

    def __len__(self):
        return len(self.t)

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def sub_arc(self, t_lo: float, t_hi: float):
        """Exact vertices of α on [t_lo, t_hi], endpoints included."""
        if t_lo < self.d0 * (1 - 1e-12) or t_hi > self.tmax * (1 + 1e-12):
            raise ArcTooShort(f"sub-arc [{t_lo:.6g}, {t_hi:.6g}] exceeds [{self.d0:.6g}, {self.tmax:.6g}]")
        t = self.t
        inner = (t > t_lo) & (t < t_hi)
        tt = np.concatenate([[t_lo], t[inner], [t_hi]])
        pts = np.vstack([self.evaluate(np.array([t_lo])), self.points[inner], self.evaluate(np.array([t_hi]))])
        return tt, pts

    # ------------------------------------------------------------- checks
    def functional_defect(self) -> float:
        """Largest distance from G(α(t)) to the polyline near parameter Λt.

        Only vertices with Λt inside the grown range are tested.
        """
        t, pts = self.t, self.points
        sel = np.flatnonzero(self.lam * t <= self.tmax)
        if len(sel) == 0:
            return 0.0
        img = self.growth_map(pts[sel])
        j = np.searchsorted(t, self.lam * t[sel])
        best = np.full(len(sel), np.inf)
        for off in (-2, -1, 0, 1):
            a = np.clip(j + off, 0, len(t) - 2)
            p0, p1 = pts[a], pts[a + 1]
            d = p1 - p0
            dd = np.einsum("ij,ij->i", d, d)
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.clip(np.einsum("ij,ij->i", img - p0, d) / dd, 0.0, 1.0)
            s = np.where(dd > 0, s, 0.0)
            dist = np.linalg.norm(p0 + s[:, None] * d - img, axis=1)
            best = np.minimum(best, dist)
        return float(best.max())

    def max_spacing(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).max())

    def max_turning(self) -> float:
        d = np.diff(self.points, axis=0)
        return float(_turning(d).max(initial=0.0))

    # ---------------------------------------------------------------- export
    def metadata(self) -> dict:
        return {
            "map": self.spec.describe(),
            "saddle": self.saddle.to_dict(),
            "branch": self.branch.value,
            "lambda": self.lam,
            "period": self.period,
            "direction": [float(v) for v in self.direction],
            "d0": self.d0,
            "tmax": self.tmax,
            "levels": len(self.levels),
            "vertex_count": len(self),
            "truncated": self.truncated,
            "settings": self.settings.to_dict(),
        }

    def write_csv(self, path) -> None:
        """Write ``t,x,y`` rows (lift coordinates) plus a ``.json`` sidecar."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y"])
            for tv, (x, y) in zip(self.t, self.points):
                w.writerow([repr(float(tv)), repr(float(x)), repr(float(y))])
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


def _turning(d):
    # Angle between consecutive segment directions.
    n = np.linalg.norm(d, axis=1)
    a, b = d[:-1], d[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    ang = np.arctan2(np.abs(cross), dot)
    return np.where((n[:-1] > 0) & (n[1:] > 0), ang, 0.0)


# ------------------------------------------------------------------- seeding

def _branch_data(saddle: FixedPointRecord, branch: Branch):
    if not saddle.classification.is_saddle:
        raise ValueError(f"seed_branch needs a saddle, got {saddle.classification.value}")
    lam_u = saddle.unstable_eigenvalue
    period = 1 if saddle.classification is Classification.SADDLE_POSITIVE else 2
    v = saddle.unstable_direction if branch.is_unstable else saddle.stable_direction
    return abs(lam_u) ** period, period, branch.sign * np.asarray(v, dtype=float)


def seed_branch(spec: MapSpec, saddle: FixedPointRecord, branch: Branch | str,
                settings: GrowthSettings | None = None) -> ManifoldArc:
    """Seed a branch with its first fundamental segment.

    The seed distance d0 is the largest power-of-two fraction of
    ``max_seed_distance`` at which the nonlinearity defect
    |G(p + tv) - (p + Λtv)| stays below ``seed_tol`` for sampled t in [d0, Λd0].
    The seed segment is the chord from p + d0 v to its G-image, which keeps
    the grown curve exactly continuous across levels.
    """
    settings = settings or GrowthSettings()
    branch = Branch(branch) if not isinstance(branch, Branch) else branch
    lam, period, v = _branch_data(saddle, branch)
    proto = ManifoldArc(spec, saddle, branch, lam, period, v, 1.0, settings, levels=())
    p = proto.base
    d = settings.max_seed_distance
    samples = np.linspace(0.0, 1.0, 9)
    while True:
        t = d * (1.0 + samples * (lam - 1.0))
        z = p + t[:, None] * v
        defect = np.linalg.norm(proto.growth_map(z) - (p + lam * t[:, None] * v), axis=1).max()
        if defect <= settings.seed_tol:
            break
        d *= 0.5
        if d < 1e-12:
            raise SeedFailure("seed distance underflowed 1e-12")
    arc = replace(proto, d0=d, levels=())
    lev = _refine_level(arc, 0, np.array([0.0, 1.0]), arc.level_points(0, np.array([0.0, 1.0])))
    return replace(arc, levels=(lev,), tmax=arc.t_of(0, 1.0))


def seed_branches(spec: MapSpec, saddle: FixedPointRecord, settings: GrowthSettings | None = None):
    return {b: seed_branch(spec, saddle, b, settings) for b in Branch}


# ------------------------------------------------------------------- growth

def refine_polyline(u, pts, fn, h_max, theta_max, min_spacing=1e-9, vertex_cap=None):
    """Bisect a parameterized polyline until spacing and turning bounds hold.

    ``fn(u)`` recomputes exact curve points for new parameters.  Segments
    shorter than ``min_spacing`` are never split.  Returns (u, pts, ok) where
    ``ok`` is False when ``vertex_cap`` stopped the refinement.
    """
    while True:
        d = np.diff(pts, axis=0)
        seglen = np.linalg.norm(d, axis=1)
        split = seglen > h_max
        turn = _turning(d) > theta_max
        split[:-1] |= turn
        split[1:] |= turn
        split &= (seglen > min_spacing) & (np.diff(u) > 1e-15 * np.maximum(np.abs(u[:-1]), 1.0))
        if not split.any():
            return u, pts, True
        if vertex_cap is not None and len(u) + np.count_nonzero(split) > vertex_cap:
            return u, pts, False
        idx = np.flatnonzero(split)
        umid = 0.5 * (u[idx] + u[idx + 1])
        new = fn(umid)
        u = np.insert(u, idx + 1, umid)
        pts = np.insert(pts, idx + 1, new, axis=0)


def _refine_level(arc: ManifoldArc, k: int, u: np.ndarray, pts: np.ndarray) -> _Level:
    s = arc.settings
    u, pts, _ = refine_polyline(u, pts, lambda v: arc.level_points(k, v), s.h_max, s.theta_max, s.min_spacing)
    return _Level(u, pts)


def levels_needed(arc: ManifoldArc, target_tmax: float) -> int:
    return max(int(np.ceil(np.log(target_tmax / arc.d0) / np.log(arc.lam) - 1e-12)), 1)


def grow(arc: ManifoldArc, target_tmax: float, h_max: float | None = None,
         theta_max: float | None = None, vertex_cap: int | None = None) -> ManifoldArc:
    """Extend a branch to parameter ``target_tmax``.

    Each new level is the image of the previous one under the growth map,
    refined by bisection in u until spacing <= h_max and turning <= theta_max.
    Passing a smaller ``h_max`` or ``theta_max`` than the arc was built with
    regrows it from the seed.  When the vertex cap would be exceeded the
    partial arc is returned with ``truncated`` set.
    """
    s = arc.settings
    changes = {}
    if h_max is not None and h_max != s.h_max:
        changes["h_max"] = h_max
    if theta_max is not None and theta_max != s.theta_max:
        changes["theta_max"] = theta_max
    if vertex_cap is not None and vertex_cap != s.vertex_cap:
        changes["vertex_cap"] = vertex_cap
    if changes:
        new_settings = replace(s, **changes)
        if "h_max" in changes or "theta_max" in changes:
            arc = seed_branch(arc.spec, arc.saddle, arc.branch, new_settings)
        else:
            arc = replace(arc, settings=new_settings)
        s = arc.settings
    target_tmax = float(target_tmax)
    if target_tmax <= arc.d0:
        raise ValueError("target_tmax must exceed the seed distance")
    need = levels_needed(arc, target_tmax)
    levels = list(arc.levels)
    total = sum(len(lv.u) for lv in levels)
    truncated = False
    while len(levels) < need:
        k = len(levels)
        prev = levels[-1]
        lev = _refine_level(arc, k, prev.u, arc.growth_map(prev.points))
        if total + len(lev.u) > s.vertex_cap:
            truncated = True
            break
        levels.append(lev)
        total += len(lev.u)
    tmax = arc.t_of(len(levels) - 1, 1.0) if truncated else target_tmax
    out = replace(arc, levels=tuple(levels), tmax=tmax, truncated=truncated)
    out.__dict__.pop("_vertices", None)
    return out


def grow_to_length(arc: ManifoldArc, length: float, max_levels: int = 200) -> ManifoldArc:
    """Grow whole levels until the polyline is at least ``length`` long."""
    cur = arc
    while cur.length() < length and len(cur.levels) < max_levels and not cur.truncated:
        cur = grow(cur, cur.t_of(len(cur.levels), 1.0))
    return cur


# ----------------------------------------------------------- comparisons

def occupancy(points, grid_res: int) -> np.ndarray:
    return rasterize(points, grid_res)


def closure_similarity(a: ManifoldArc, b: ManifoldArc, grid_res: int = 256) -> float:
    """Symmetric-difference fraction of the occupied cells of two arcs.

    Returns |A xor B| / |A or B| for the cell sets of the torus projections on
    a ``grid_res`` square grid; 0 means identical occupancy.
    """
    pa = a.points if isinstance(a, ManifoldArc) else np.asarray(a)
    pb = b.points if isinstance(b, ManifoldArc) else np.asarray(b)
    ma, mb = occupancy(pa, grid_res), occupancy(pb, grid_res)
    union = np.count_nonzero(ma | mb)
    return 0.0 if union == 0 else np.count_nonzero(ma ^ mb) / union


def hausdorff_torus(a, b, chunk: int = 2048) -> float:
    """Symmetric Hausdorff distance between two vertex sets in the torus metric.

    Uses a KD-tree on the 3x3 periodic copies of ``b`` and vice versa.
    """
    from scipy.spatial import cKDTree

    def one_sided(x, y):
        y = np.mod(y, 1.0)
        shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
        tree = cKDTree((y[None, :, :] + shifts[:, None, :]).reshape(-1, 2))
        d, _ = tree.query(np.mod(x, 1.0))
        return float(d.max())

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return max(one_sided(a, b), one_sided(b, a))


def polyline_distance(points, poly) -> np.ndarray:
    """Torus distance from each point to a polyline (segment-exact near matches)."""
    from scipy.spatial import cKDTree

    pts = np.mod(np.asarray(points, dtype=float), 1.0)
    poly = np.asarray(poly, dtype=float)
    shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
    base = np.mod(poly[:-1], 1.0)
    off = base - poly[:-1]
    p0 = base
    p1 = poly[1:] + off
    tree = cKDTree((p0[None] + shifts[:, None]).reshape(-1, 2))
    n = len(p0)
    _, idx = tree.query(pts, k=min(8, 9 * n))
    idx = np.atleast_2d(idx.T).T if idx.ndim == 1 else idx
    best = np.full(len(pts), np.inf)
    for col in range(idx.shape[1]):
        flat = idx[:, col]
        seg = flat % n
        sh = shifts[flat // n]
        for nb in (seg - 1, seg):
            nb = np.clip(nb, 0, n - 1)
            a0, a1 = p0[nb] + sh, p1[nb] + sh
            d = a1 - a0
            dd = np.einsum("ij,ij->i", d, d)
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.clip(np.einsum("ij,ij->i", pts - a0, d) / dd, 0.0, 1.0)
            s = np.where(dd > 0, s, 0.0)
            best = np.minimum(best, np.linalg.norm(a0 + s[:, None] * d - pts, axis=1))
    return best


def backward_ratios(arc: ManifoldArc, t: float, steps: int = 12) -> np.ndarray:
    """Ratios |G^-1(z_{j+1}) - p| / |z_j - p| along a backward orbit of α(t)."""
    z = arc.evaluate(np.array([t]))[0]
    dist = [np.linalg.norm(z - arc.base)]
    for _ in range(steps):
        z = arc.growth_map_inverse(z[None])[0]
        dist.append(float(torus_distance(z, arc.base)))
    dist = np.asarray(dist)
    return dist[1:] / dist[:-1]
