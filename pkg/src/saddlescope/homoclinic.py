"""Homoclinic intersections of saddle branches.

Crossings of an unstable and a stable branch are located on the torus,
polished on the exact curves, and classified as topologically transverse
when the two halves of each curve leave a small disk on opposite sides of
the other curve, consistently over two consecutive disk radii.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .manifold import ArcTooShort, Branch, ManifoldArc, grow, polyline_distance
from .maps import MapSpec, torus_delta, torus_reduce
from .topology import ComponentLabeling, label_complement, polyline_crossings, torus_crossings

POLISH_PIECES = 16
MAX_HALVINGS = 12
DEFAULT_RADIUS = 1e-2


class Verdict(str, enum.Enum):
    TRANSVERSE = "TopologicallyTransverse"
    UNRESOLVED = "TangentialOrUnresolved"


class DegenerateGeometry(RuntimeError):
    pass


class ComponentCountOne(RuntimeError):
    pass


# ------------------------------------------------------------ curve access

@dataclass(frozen=True)
class PolylineArc:
    """A parameterized polyline; evaluation interpolates linearly in t.

    Stands in for a :class:`ManifoldArc` in synthetic tests.
    """

    t: np.ndarray
    points: np.ndarray
    branch: Branch | None = None

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("polyline parameters must increase strictly")

    @classmethod
    def from_points(cls, points, branch=None, t0: float = 0.0) -> "PolylineArc":
        pts = np.asarray(points, dtype=float)
        return cls(t0 + np.arange(len(pts), dtype=float), pts, branch)

    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.interp(t, self.t, self.points[:, 0]), np.interp(t, self.t, self.points[:, 1])], axis=-1)

    @property
    def tmin(self):
        return float(self.t[0])

    @property
    def tmax_(self):
        return float(self.t[-1])


def _t_range(arc):
    if isinstance(arc, ManifoldArc):
        return arc.d0, arc.tmax
    return arc.tmin, arc.tmax_


def _branch_tag(arc):
    b = getattr(arc, "branch", None)
    return b.value if isinstance(b, Branch) else (str(b) if b is not None else "curve")


# ------------------------------------------------------------------ records

@dataclass(frozen=True)
class IntersectionRecord:
    branches: tuple[str, str]
    point: np.ndarray
    params: tuple[float, float]
    verdict: Verdict | None = None
    refinement_depth: int = 0
    side_signature: tuple[int, int, int, int] | None = None
    radius: float | None = None
    distance_to_arcs: tuple[float, float] | None = None

    @property
    def is_transverse(self) -> bool:
        return self.verdict is Verdict.TRANSVERSE

    def to_dict(self) -> dict:
        return {
            "branches": list(self.branches),
            "point": [float(v) for v in self.point],
            "params": [float(v) for v in self.params],
            "verdict": None if self.verdict is None else self.verdict.value,
            "refinement_depth": self.refinement_depth,
            "side_signature": None if self.side_signature is None else list(self.side_signature),
            "radius": self.radius,
        }


# ---------------------------------------------------------------- polishing

def _polish(u, s, tu0, tu1, ts0, ts1, tube_tol, depth=0):
    # Subdivide both parameter windows into exact sub-pieces and recurse on
    # the crossing pairs until pieces are shorter than tube_tol.
    tu = np.linspace(tu0, tu1, POLISH_PIECES + 1)
    ts = np.linspace(ts0, ts1, POLISH_PIECES + 1)
    pu = u.evaluate(tu)
    ps = s.evaluate(ts)
    # Bring the stable window next to the unstable one in the lift.
    ps = ps + np.round(pu[0] - ps[0])
    c = torus_crossings(pu[:-1], pu[1:], ps[:-1], ps[1:])
    out = []
    for i, j, a, b in zip(c.ia, c.ib, c.sa, c.sb):
        lu = np.linalg.norm(pu[i + 1] - pu[i])
        ls = np.linalg.norm(ps[j + 1] - ps[j])
        if max(lu, ls) < tube_tol or depth > 40 or (tu[i + 1] - tu[i]) <= 1e-15 * abs(tu[i]):
            t_u = tu[i] + a * (tu[i + 1] - tu[i])
            t_s = ts[j] + b * (ts[j + 1] - ts[j])
            out.append((t_u, t_s, pu[i] + a * (pu[i + 1] - pu[i]), depth))
        else:
            out.extend(_polish(u, s, tu[i], tu[i + 1], ts[j], ts[j + 1], tube_tol, depth + 1))
    return out


def find_intersections(u, s, window: float | None = None, tube_tol: float = 1e-6,
                       classify: bool = True, max_classified: int | None = None,
                       **classify_kwargs) -> list[IntersectionRecord]:
    """All crossings of the torus projections of an unstable and a stable arc.

    Candidates come from wrap-aware segment tests on the polylines; each is
    polished on the exact curves until the bracketing pieces are shorter than
    ``tube_tol``.  Crossings closer than ``window`` (default 10 tube_tol) are
    merged, keeping the one with the smallest t_u + t_s.  Records are sorted
    by t_u + t_s; only the first ``max_classified`` are classified (all when
    None), the rest keep ``verdict=None``.
    """
    window = 10.0 * tube_tol if window is None else window
    c = polyline_crossings(u.points, s.points)
    found = []
    for i, j in zip(c.ia, c.ib):
        found.extend(_polish(u, s, u.t[i], u.t[i + 1], s.t[j], s.t[j + 1], tube_tol))
    found.sort(key=lambda r: r[0] + r[1])
    kept: list = []
    for t_u, t_s, pt, depth in found:
        q = torus_reduce(pt)
        if any(float(np.linalg.norm(torus_delta(q, k[2]))) < window for k in kept):
            continue
        kept.append((t_u, t_s, q, depth))
    tags = (_branch_tag(u), _branch_tag(s))
    records = [IntersectionRecord(tags, q, (float(t_u), float(t_s))) for t_u, t_s, q, _ in kept]
    if classify:
        n = len(records) if max_classified is None else min(max_classified, len(records))
        records[:n] = [classify_transversality(r, u, s, **classify_kwargs) for r in records[:n]]
    return records


# ---------------------------------------------------------- transversality

def _local_curve(arc, t_q, q_lift, radius, max_tries=12):
    """Exact samples of ``arc`` around parameter t_q that reach beyond ``radius``.

    Returns parameters, points (lift, translated next to ``q_lift``) and the
    index of t_q, or None when the curve does not leave the disk on a side.
    """
    t_lo_lim, t_hi_lim = _t_range(arc)
    # Local speed |dα/dt| from a tiny central difference.
    h = max(abs(t_q) * 1e-9, 1e-14)
    a = arc.evaluate(np.array([max(t_q - h, t_lo_lim), min(t_q + h, t_hi_lim)]))
    speed = max(np.linalg.norm(a[1] - a[0]) / (min(t_q + h, t_hi_lim) - max(t_q - h, t_lo_lim)), 1e-300)
    w = 2.0 * radius / speed
    for _ in range(max_tries):
        lo, hi = max(t_q - w, t_lo_lim), min(t_q + w, t_hi_lim)
        tl = np.linspace(lo, t_q, 1025)
        tr = np.linspace(t_q, hi, 1025)[1:]
        tt = np.concatenate([tl, tr])
        pts = arc.evaluate(tt)
        pts = pts + np.round(q_lift - pts[1024])
        r = np.linalg.norm(pts - q_lift, axis=1)
        left_out = np.any(r[:1024] > radius)
        right_out = np.any(r[1025:] > radius)
        if left_out and right_out:
            return tt, pts, 1024
        if (lo == t_lo_lim and not left_out) or (hi == t_hi_lim and not right_out):
            return None
        w *= 2.0
    return None


def _first_exit(pts, k, step, q, radius):
    """Walk from index k until the polyline leaves the disk; return the half-arc and exit point."""
    r = np.linalg.norm(pts - q, axis=1)
    idx = np.arange(k, len(pts)) if step > 0 else np.arange(k, -1, -1)
    outside = idx[r[idx] > radius]
    if len(outside) == 0:
        return None
    j = outside[0]
    prev = j - step
    a, b = pts[prev], pts[j]
    # Solve |a + s (b - a) - q| = radius for s in [0, 1].
    d = b - a
    w = a - q
    A = d @ d
    B = 2 * w @ d
    C = w @ w - radius ** 2
    disc = max(B * B - 4 * A * C, 0.0)
    s = (-B + np.sqrt(disc)) / (2 * A)
    exit_pt = a + np.clip(s, 0.0, 1.0) * d
    if step < 0:
        path = pts[prev: k + 1][::-1]
    else:
        path = pts[k: prev + 1]
    return np.vstack([path, exit_pt]), exit_pt


def _angle(v):
    return float(np.arctan2(v[1], v[0]) % (2 * np.pi))


def _side(phi, a_from, a_to):
    """+1 if angle phi lies on the ccw arc from a_from to a_to, else -1."""
    span = (a_to - a_from) % (2 * np.pi)
    return 1 if (phi - a_from) % (2 * np.pi) < span else -1


def _count_extra_crossings(half_a, half_b):
    # Crossings of two half-arcs away from their common start point q.
    c = polyline_crossings(half_a, half_b)
    if len(c) == 0:
        return 0
    keep = ~((c.ia == 0) & (c.ib == 0))
    return int(np.count_nonzero(keep))


def side_signature_at(u_pts, ku, s_pts, ks, q, radius):
    """Side signature of two local curves through q inside the disk of given radius.

    Returns (signature, valid).  The signature lists the side of γ_s on which
    each half of γ_u exits, followed by the side of γ_u for each half of γ_s.
    The radius is invalid when a half does not exit or when the half-arcs meet
    away from q.
    """
    halves = {}
    for name, pts, k in (("u", u_pts, ku), ("s", s_pts, ks)):
        back = _first_exit(pts, k, -1, q, radius)
        fwd = _first_exit(pts, k, +1, q, radius)
        if back is None or fwd is None:
            return None, False
        halves[name] = (back, fwd)
    (ub, uf), (sb, sf) = halves["u"], halves["s"]
    for ha in (ub, uf):
        for hb in (sb, sf):
            if _count_extra_crossings(ha[0], hb[0]) > 0:
                return None, False
    ang = {key: _angle(h[1] - q) for key, h in (("ub", ub), ("uf", uf), ("sb", sb), ("sf", sf))}
    sig = (
        _side(ang["ub"], ang["sb"], ang["sf"]),
        _side(ang["uf"], ang["sb"], ang["sf"]),
        _side(ang["sb"], ang["ub"], ang["uf"]),
        _side(ang["sf"], ang["ub"], ang["uf"]),
    )
    return sig, True


def _is_crossing(sig):
    return sig[0] != sig[1] and sig[2] != sig[3]


def classify_transversality(rec: IntersectionRecord, u, s, radius: float = DEFAULT_RADIUS,
                            max_halvings: int = MAX_HALVINGS, tube_tol: float = 1e-6) -> IntersectionRecord:
    """Decide topological transversality by the side test on shrinking disks.

    Starting from ``radius`` the disk is halved until two consecutive valid
    radii give the same verdict.  Opposite sides on both tests give
    TopologicallyTransverse; equal sides give TangentialOrUnresolved, as does
    running out of halvings.
    """
    t_u, t_s = rec.params
    pu = u.evaluate(np.array([t_u]))[0]
    q = pu
    prev = None
    r = radius
    for depth in range(1, max_halvings + 2):
        lu = _local_curve(u, t_u, q, r)
        ls = _local_curve(s, t_s, q, r)
        sig, valid = (None, False)
        if lu is not None and ls is not None:
            # Anchor both samples exactly at the polished crossing point.
            sig, valid = side_signature_at(lu[1], lu[2], ls[1] - ls[1][ls[2]] + q, ls[2], q, r)
        if valid:
            if prev is not None and prev == sig:
                verdict = Verdict.TRANSVERSE if _is_crossing(sig) else Verdict.UNRESOLVED
                return replace(rec, verdict=verdict, refinement_depth=depth - 1, side_signature=sig, radius=r * 2)
            prev = sig
        else:
            prev = None
        r *= 0.5
    return replace(rec, verdict=Verdict.UNRESOLVED, refinement_depth=max_halvings,
                   side_signature=prev, radius=r * 2)


# --------------------------------------------------------------- omega

@dataclass
class OmegaDecomposition:
    q: np.ndarray
    omega_u: np.ndarray = field(repr=False)
    omega_s: np.ndarray = field(repr=False)
    params_u: tuple[float, float]
    params_s: tuple[float, float]
    labeling: ComponentLabeling
    a_component: int
    interior_crossings: int
    resolution_history: list[int]

    @property
    def component_count(self) -> int:
        return self.labeling.component_count

    def boundary_touch(self) -> list[dict]:
        return [{"component": c, "touches_u": "u" in adj, "touches_s": "s" in adj}
                for c, adj in enumerate(self.labeling.adjacency)]

    def summary(self) -> dict:
        return {
            "q": [float(v) for v in self.q],
            "params_u": list(self.params_u),
            "params_s": list(self.params_s),
            "component_count": self.component_count,
            "a_component": self.a_component,
            "boundary_touch": self.boundary_touch(),
            "interior_crossings": self.interior_crossings,
            "resolution": self.labeling.resolution,
            "resolution_history": self.resolution_history,
            "resolution_too_coarse": self.labeling.resolution_too_coarse,
        }


def omega_arcs(rec: IntersectionRecord, u: ManifoldArc, s: ManifoldArc, iterates: int = 3):
    """Ω_u = U[q, f^n q] and Ω_s = S[q, f^n q] as exact sub-polylines."""
    t_q, s_q = rec.params
    per = u.period
    if iterates % per:
        raise ValueError("iterates must be a multiple of the branch period")
    lam = u.lam ** (iterates // per)
    if t_q * lam > u.tmax * (1 + 1e-12):
        raise ArcTooShort(f"unstable arc must reach t = {t_q * lam:.6g}, has {u.tmax:.6g}")
    tu, pu = u.sub_arc(t_q, t_q * lam)
    ts, ps = s.sub_arc(s_q / lam, s_q)
    return (tu, pu), (ts, ps)


def omega_loops(rec: IntersectionRecord, u: ManifoldArc, s: ManifoldArc, iterates: int = 3):
    """Closed curves α_i = U[f^i q, f^(i+1) q] ∪ S[f^i q, f^(i+1) q], i < iterates."""
    from .topology import ClosedCurve

    t_q, s_q = rec.params
    loops = []
    for i in range(iterates):
        _, pu = u.sub_arc(t_q * u.lam ** i, t_q * u.lam ** (i + 1))
        _, ps = s.sub_arc(s_q / s.lam ** (i + 1), s_q / s.lam ** i)
        # Stable piece runs from f^(i+1) q back to f^i q.
        ps = ps + np.round(pu[-1] - ps[0])
        loop = np.vstack([pu, ps[1:]])
        loops.append(ClosedCurve.from_lift(loop))
    return loops


def shift_along_orbit(rec: IntersectionRecord, u: ManifoldArc, k: int) -> IntersectionRecord:
    """The record of f^(k·period) q: parameters scale by Λ^k and Λ^-k."""
    t_q, s_q = rec.params
    t_new, s_new = t_q * u.lam ** k, s_q / u.lam ** k
    pt = torus_reduce(u.evaluate(np.array([t_new]))[0])
    return replace(rec, params=(float(t_new), float(s_new)), point=pt)


def omega_length(rec, u, s) -> float:
    (_, pu), (_, ps) = omega_arcs(rec, u, s)
    return float(np.linalg.norm(np.diff(pu, axis=0), axis=1).sum() + np.linalg.norm(np.diff(ps, axis=0), axis=1).sum())


def shortest_orbit_point(rec: IntersectionRecord, u: ManifoldArc, s: ManifoldArc, span: int = 4) -> IntersectionRecord:
    """Among f^k q, |k| <= span, the point whose Ω has the smallest total length.

    Every point of the orbit of a homoclinic point is homoclinic; short Ω arcs
    stay near the local branches and rasterize without pinched strands.
    """
    best, best_len = None, np.inf
    for k in range(-span, span + 1):
        cand = shift_along_orbit(rec, u, k)
        try:
            length = omega_length(cand, u, s)
        except ArcTooShort:
            continue
        if length < best_len:
            best, best_len = cand, length
    if best is None:
        raise ArcTooShort("no point of the orbit of q fits inside the grown arcs")
    return best


def omega_analysis(spec: MapSpec, rec: IntersectionRecord, u: ManifoldArc, s: ManifoldArc,
                   grid_res: int = 512, max_res: int = 4096, check_doubling: bool = True,
                   orbit_span: int | None = 4) -> OmegaDecomposition:
    """Label the complement of Ω = Ω_u ∪ Ω_s on a toroidal grid.

    With ``orbit_span`` set, q is first replaced by the point of its orbit
    with the shortest Ω (see :func:`shortest_orbit_point`).  The grid is
    doubled (up to ``max_res``) while only one component is seen.  The
    component containing the saddle p is reported as A; when p's cell is a
    curve cell the nearest free cell decides.
    """
    if orbit_span is not None:
        rec = shortest_orbit_point(rec, u, s, orbit_span)
    (tu, pu), (ts, ps) = omega_arcs(rec, u, s)
    inner = polyline_crossings(pu, ps)
    # Count crossings other than the shared endpoints q and f^3 q.
    ends = np.vstack([torus_reduce(pu[0]), torus_reduce(pu[-1])])
    interior = 0
    for pt in inner.points:
        if np.min(np.linalg.norm(torus_delta(pt, ends), axis=1)) > 1e-6:
            interior += 1
    history = []
    res = grid_res
    while True:
        lab = label_complement([pu, ps], res, tags=["u", "s"], check_doubling=check_doubling and res < 2048)
        history.append(res)
        if lab.component_count >= 2 or res * 2 > max_res:
            break
        res *= 2
    if lab.component_count < 2:
        raise ComponentCountOne(f"complement of Ω has one component up to resolution {res}")
    p = np.asarray(u.saddle.location)
    a = lab.component_of(p)
    if a < 0:
        a = lab.nearest_component(p)
    return OmegaDecomposition(torus_reduce(pu[0]), pu, ps, (float(tu[0]), float(tu[-1])),
                              (float(ts[0]), float(ts[-1])), lab, a, interior, history)


# ------------------------------------------------------------- connections

def containment_defect(u_points, s_points) -> float:
    """Largest torus distance from a vertex of u to the polyline s."""
    return float(polyline_distance(u_points, s_points).max())


def connection_probe(u, s, tol: float = 1e-6, stages=None) -> dict:
    """Trend of the containment defect of u in a tube around s.

    ``stages`` is a list of (u_points, s_points) pairs at increasing length;
    by default three growth stages of the given arcs are derived by cutting
    them at 1/3, 2/3 and the full parameter range of u.
    """
    if stages is None:
        up, sp = np.asarray(u.points), np.asarray(s.points)
        n = len(up)
        stages = [(up[: max(2, n * k // 3)], sp) for k in (1, 2, 3)]
    defects = [containment_defect(a, b) for a, b in stages]
    return {
        "tol": tol,
        "defects": defects,
        "connection_suspected": bool(defects[-1] <= 10 * tol),
        "vanishing_trend": bool(defects[-1] < defects[0] and defects[-1] <= 10 * tol),
    }


def negate_record(rec: IntersectionRecord) -> IntersectionRecord:
    b = tuple(Branch(x).negated().value if x in Branch._value2member_map_ else x for x in rec.branches)
    return replace(rec, branches=b, point=torus_reduce(-np.asarray(rec.point)))


# ------------------------------------------------------------ consistency

def match_records(a, b, tol: float) -> dict:
    """Pair each record of ``a`` with the nearest record of ``b`` (torus metric)."""
    pb = np.array([r.point for r in b]).reshape(-1, 2)
    unmatched = []
    worst = 0.0
    for i, r in enumerate(a):
        if len(pb) == 0:
            unmatched.append(i)
            continue
        d = np.linalg.norm(torus_delta(pb, np.asarray(r.point)), axis=-1)
        k = int(np.argmin(d))
        worst = max(worst, float(d[k]))
        if d[k] > tol:
            unmatched.append(i)
    return {"count_a": len(a), "count_b": len(b), "unmatched": unmatched, "max_distance": worst,
            "matched": not unmatched and len(a) == len(b)}


def negate_equivariance(recs, recs_negated_pair, tube_tol: float = 1e-6) -> dict:
    """Compare Negate images of ``recs`` with the independently computed list for the negated pair."""
    mapped = [negate_record(r) for r in recs]
    fwd = match_records(mapped, recs_negated_pair, 10 * tube_tol)
    back = match_records(recs_negated_pair, mapped, 10 * tube_tol)
    return {"forward": fwd, "backward": back, "equivariant": fwd["matched"] and back["matched"]}


def refinement_check(records, u: ManifoldArc, s: ManifoldArc, tube_tol: float = 1e-6, **classify_kwargs) -> list[dict]:
    """Recompute both arcs at h_max/2 and re-test every transverse record.

    A record is refinement-stable if the refined arcs have a crossing within
    10 tube_tol of it that is again TopologicallyTransverse.
    """
    u2 = grow(u, u.tmax, h_max=u.settings.h_max / 2)
    s2 = grow(s, s.tmax, h_max=s.settings.h_max / 2)
    fine = find_intersections(u2, s2, tube_tol=tube_tol, classify=False)
    out = []
    for r in records:
        if not r.is_transverse:
            continue
        near = [f for f in fine if np.linalg.norm(torus_delta(f.point, r.point)) <= 10 * tube_tol]
        if not near:
            out.append({"point": [float(v) for v in r.point], "stable": False, "moved": None})
            continue
        f = min(near, key=lambda f: np.linalg.norm(torus_delta(f.point, r.point)))
        f = classify_transversality(f, u2, s2, tube_tol=tube_tol, **classify_kwargs)
        out.append({"point": [float(v) for v in r.point], "stable": f.is_transverse,
                    "moved": float(np.linalg.norm(torus_delta(f.point, r.point)))})
    return out


def earliest_transverse(records_by_pair: dict):
    """The transverse record with the smallest t_u + t_s over all branch pairs.

    Returns ``(pair, record)``; ties go to the first pair in iteration order.
    """
    best = None
    for pair, recs in records_by_pair.items():
        for r in recs:
            if r.is_transverse and (best is None or sum(r.params) < sum(best[1].params) - 1e-12):
                best = (pair, r)
    if best is None:
        raise ValueError("no transverse record")
    return best
