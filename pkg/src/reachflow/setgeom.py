"""Convex set representations and the geometric operations on them.

Five representations: Box, HPolytope, VPolytope, Zonotope and Empty.  All
values are immutable after construction.  Operations that cannot produce an
exact result return a set with ``exact=False``; such results are always
supersets of the true set, never subsets.
"""

from __future__ import annotations

import itertools

import numpy as np

from .numkernel import (FEAS_TOL, INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem,
                        as_matrix, as_vector, lp_max)

TOL = 1e-9


class UnsupportedCheck(Exception):
    """Raised when a containment query has no sound decision procedure."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class Empty:
    """The empty set, tagged with its ambient dimension."""

    __slots__ = ("dim", "exact")

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.exact = True

    def __repr__(self):
        return f"Empty(dim={self.dim})"


class Box:
    """Axis-aligned box given by its lower and upper corner."""

    __slots__ = ("lower", "upper", "exact")

    def __init__(self, lower, upper, exact: bool = True):
        self.lower = _freeze(as_vector(lower).copy())
        self.upper = _freeze(as_vector(upper).copy())
        if self.lower.shape != self.upper.shape:
            raise ValueError("box corners have different dimensions")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower corner exceeds upper corner; "
                             "use intersect for possibly-empty results")
        self.exact = exact

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radii(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def corners(self) -> np.ndarray:
        """All 2^n corner points, one per row."""
        n = self.dim
        out = np.empty((2 ** n, n))
        for i, bits in enumerate(itertools.product((0, 1), repeat=n)):
            out[i] = np.where(np.asarray(bits, dtype=bool), self.upper, self.lower)
        return out

    def to_hpolytope(self) -> "HPolytope":
        n = self.dim
        eye = np.eye(n)
        return HPolytope(np.vstack([eye, -eye]),
                         np.concatenate([self.upper, -self.lower]),
                         exact=self.exact)

    def to_zonotope(self) -> "Zonotope":
        return Zonotope(self.center, np.diag(self.radii), exact=self.exact)

    def to_vpolytope(self) -> "VPolytope":
        return VPolytope(self.corners(), exact=self.exact)

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class HPolytope:
    """Intersection of half-spaces a_i . x <= b_i with unit normals."""

    __slots__ = ("normals", "offsets", "exact")

    def __init__(self, normals, offsets, exact: bool = True):
        a = as_matrix(normals)
        b = as_vector(offsets)
        if a.shape[0] != b.shape[0]:
            raise ValueError("normal count does not match offset count")
        norms = np.linalg.norm(a, axis=1)
        degenerate = norms <= 1e-14
        if np.any(degenerate):
            if np.any(b[degenerate] < -TOL):
                raise ValueError("zero normal with negative offset (trivially empty)")
            a, b, norms = a[~degenerate], b[~degenerate], norms[~degenerate]
        if a.shape[0]:
            a = a / norms[:, None]
            b = b / norms
        self.normals = _freeze(a)
        self.offsets = _freeze(b)
        self.exact = exact

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def nrows(self) -> int:
        return self.normals.shape[0]

    def __repr__(self):
        return f"HPolytope({self.nrows} halfspaces, dim={self.dim})"


class VPolytope:
    """Convex hull of a finite vertex list (fictitious interior points allowed)."""

    __slots__ = ("vertices", "exact")

    def __init__(self, vertices, exact: bool = True):
        v = as_matrix(vertices)
        if v.shape[0] < 1:
            raise ValueError("a V-polytope needs at least one vertex")
        self.vertices = _freeze(v.copy())
        self.exact = exact

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def __repr__(self):
        return f"VPolytope({self.vertices.shape[0]} vertices, dim={self.dim})"


class Zonotope:
    """Centrally symmetric set c + G [-1,1]^p, generators as columns of G."""

    __slots__ = ("center", "generators", "exact")

    def __init__(self, center, generators, exact: bool = True):
        c = as_vector(center)
        g = as_matrix(generators) if np.size(generators) else np.zeros((c.shape[0], 0))
        if g.shape[0] != c.shape[0]:
            raise ValueError("generator rows do not match the center dimension")
        self.center = _freeze(c.copy())
        self.generators = _freeze(g.copy())
        self.exact = exact

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def order(self) -> int:
        return self.generators.shape[1]

    def bounding_box(self) -> Box:
        r = np.abs(self.generators).sum(axis=1)
        return Box(self.center - r, self.center + r, exact=self.exact)

    def __repr__(self):
        return f"Zonotope(dim={self.dim}, order={self.order})"


SetRep = Box | HPolytope | VPolytope | Zonotope | Empty


def dim_of(s: SetRep) -> int:
    return s.dim


def _check_dim(s: SetRep, x: np.ndarray, what: str) -> None:
    if s.dim != x.shape[0]:
        raise ValueError(f"{what}: dimension {x.shape[0]} does not match set dimension {s.dim}")


def member(s: SetRep, x, tol: float = TOL) -> bool:
    """Membership test, boundary-inclusive within tol."""
    x = as_vector(x)
    if isinstance(s, Empty):
        return False
    _check_dim(s, x, "member")
    if isinstance(s, Box):
        return bool(np.all(x >= s.lower - tol) and np.all(x <= s.upper + tol))
    if isinstance(s, HPolytope):
        if s.nrows == 0:
            return True
        return bool(np.all(s.normals @ x <= s.offsets + tol))
    if isinstance(s, VPolytope):
        # feasibility of sum(l_i v_i) = x, sum(l_i) = 1, l >= 0
        v = s.vertices
        m = v.shape[0]
        rows = [v.T, -v.T, np.ones((1, m)), -np.ones((1, m)), -np.eye(m)]
        rhs = np.concatenate([x, -x, [1.0], [-1.0], np.zeros(m)])
        res = lp_max(LpProblem(np.zeros(m), np.vstack(rows), rhs), lex_tiebreak=False)
        return res.status == OPTIMAL
    if isinstance(s, Zonotope):
        g = s.generators
        p = g.shape[1]
        if p == 0:
            return bool(np.all(np.abs(x - s.center) <= tol))
        rows = [g, -g, np.eye(p), -np.eye(p)]
        rhs = np.concatenate([x - s.center, s.center - x, np.ones(p), np.ones(p)])
        res = lp_max(LpProblem(np.zeros(p), np.vstack(rows), rhs), lex_tiebreak=False)
        return res.status == OPTIMAL
    raise TypeError(f"unknown set representation {type(s).__name__}")


def support(s: SetRep, d) -> tuple[float, np.ndarray | None]:
    """Support value max{d.x : x in s} and a witness point attaining it.

    Returns (inf, None) when s is unbounded in direction d.  Boxes,
    zonotopes and vertex lists use closed forms; H-polytopes solve an LP.
    """
    d = as_vector(d)
    if np.all(d == 0.0):
        raise ValueError("support direction must be nonzero")
    if isinstance(s, Empty):
        raise ValueError("support of the empty set is undefined")
    _check_dim(s, d, "support")
    if isinstance(s, Box):
        witness = np.where(d > 0.0, s.upper, s.lower)
        return float(d @ witness), witness
    if isinstance(s, Zonotope):
        proj = d @ s.generators
        value = float(d @ s.center + np.abs(proj).sum())
        witness = s.center + s.generators @ np.where(proj >= 0.0, 1.0, -1.0)
        return value, witness
    if isinstance(s, VPolytope):
        vals = s.vertices @ d
        best = vals.max()
        ties = np.flatnonzero(vals >= best - TOL)
        # deterministic witness: lexicographically smallest maximizer
        order = np.lexsort(s.vertices[ties].T[::-1])
        return float(best), s.vertices[ties[order[0]]].copy()
    if isinstance(s, HPolytope):
        if s.nrows == 0:
            return float("inf"), None
        res = lp_max(LpProblem(d, s.normals, s.offsets))
        if res.status == UNBOUNDED:
            return float("inf"), None
        if res.status == INFEASIBLE:
            raise ValueError("support of an empty polytope is undefined")
        return res.value, res.x
    raise TypeError(f"unknown set representation {type(s).__name__}")


def support_batch(s: SetRep, dmat: np.ndarray) -> np.ndarray:
    """Support values for many directions at once (columns of dmat).

    Values only, no witnesses, no lexicographic refinement; zero columns
    yield 0 (the supremum of the zero functional over a nonempty set).
    """
    if isinstance(s, Empty):
        raise ValueError("support of the empty set is undefined")
    dmat = np.asarray(dmat, dtype=float)
    if dmat.shape[0] != s.dim:
        raise ValueError("direction matrix rows do not match the set dimension")
    if isinstance(s, Box):
        return dmat.T @ s.center + np.abs(dmat.T) @ s.radii
    if isinstance(s, Zonotope):
        return dmat.T @ s.center + np.abs(s.generators.T @ dmat).sum(axis=0)
    if isinstance(s, VPolytope):
        return (s.vertices @ dmat).max(axis=0)
    if isinstance(s, HPolytope):
        out = np.empty(dmat.shape[1])
        for j in range(dmat.shape[1]):
            d = dmat[:, j]
            if np.all(d == 0.0):
                out[j] = 0.0
                continue
            res = lp_max(LpProblem(d, s.normals, s.offsets), lex_tiebreak=False)
            if res.status == UNBOUNDED:
                out[j] = np.inf
            elif res.status == INFEASIBLE:
                raise ValueError("support of an empty polytope is undefined")
            else:
                out[j] = res.value
        return out
    raise TypeError(f"unknown set representation {type(s).__name__}")


def translate(s: SetRep, v) -> SetRep:
    """Exact translate s + {v}."""
    v = as_vector(v)
    if isinstance(s, Empty):
        return s
    _check_dim(s, v, "translate")
    if isinstance(s, Box):
        return Box(s.lower + v, s.upper + v, exact=s.exact)
    if isinstance(s, HPolytope):
        return HPolytope(s.normals, s.offsets + s.normals @ v, exact=s.exact)
    if isinstance(s, VPolytope):
        return VPolytope(s.vertices + v, exact=s.exact)
    if isinstance(s, Zonotope):
        return Zonotope(s.center + v, s.generators, exact=s.exact)
    raise TypeError(f"unknown set representation {type(s).__name__}")


def _is_diagonal(a: np.ndarray) -> bool:
    return a.shape[0] == a.shape[1] and np.all(a == np.diag(np.diag(a)))


def linear_map(a, s: SetRep) -> SetRep:
    """Image {A x : x in s}.

    Exact for boxes (as zonotopes), zonotopes, vertex lists, and
    H-polytopes under invertible square maps.  Singular or non-square maps
    of H-polytopes fall back to a template over-approximation.
    """
    a = as_matrix(a)
    if a.shape[1] != s.dim:
        raise ValueError(f"map with {a.shape[1]} columns applied to set of dimension {s.dim}")
    if isinstance(s, Empty):
        return Empty(a.shape[0])
    if isinstance(s, Box):
        if _is_diagonal(a):
            lo, hi = a @ s.lower, a @ s.upper
            return Box(np.minimum(lo, hi), np.maximum(lo, hi), exact=s.exact)
        z = s.to_zonotope()
        return Zonotope(a @ z.center, a @ z.generators, exact=s.exact)
    if isinstance(s, Zonotope):
        return Zonotope(a @ s.center, a @ s.generators, exact=s.exact)
    if isinstance(s, VPolytope):
        return VPolytope(s.vertices @ a.T, exact=s.exact)
    if isinstance(s, HPolytope):
        if a.shape[0] == a.shape[1]:
            try:
                # row a_i of the image polytope is a_i A^{-1}; offsets carry over
                mapped = np.linalg.solve(a.T, s.normals.T).T
                if np.all(np.isfinite(mapped)):
                    return HPolytope(mapped, s.offsets, exact=s.exact)
            except np.linalg.LinAlgError:
                pass
        # singular or non-square: template over-approximation of the image,
        # using rho_{AS}(d) = rho_S(A^T d); a zero pullback direction means
        # the image is flat there and contributes support 0
        dirs = default_template(a.shape[0])
        vals = []
        for d in dirs:
            dd = a.T @ d
            vals.append(0.0 if np.all(dd == 0.0) else support(s, dd)[0])
        return HPolytope(np.asarray(dirs), np.asarray(vals), exact=False)
    raise TypeError(f"unknown set representation {type(s).__name__}")


def _reduce_vertices(v: np.ndarray) -> np.ndarray:
    """Drop duplicate rows (1e-9 grid); in 2-d also drop non-extreme points."""
    if v.shape[1] == 2 and v.shape[0] >= 3:
        return convex_hull_2d(v).vertices
    _, idx = np.unique(np.round(v / TOL).astype(np.int64), axis=0, return_index=True)
    return v[np.sort(idx)]


def minkowski_sum(s1: SetRep, s2: SetRep) -> SetRep:
    """Minkowski sum s1 + s2.

    Exact on box/box, zonotope/zonotope (and box/zonotope), and vertex
    pairs; other combinations are promoted when an exact promotion exists
    and otherwise fall back to a flagged template over-approximation using
    the additivity of support functions.
    """
    if s1.dim != s2.dim:
        raise ValueError(f"minkowski sum of sets with dimensions {s1.dim} and {s2.dim}")
    if isinstance(s1, Empty) or isinstance(s2, Empty):
        return Empty(s1.dim)
    pair = (s1, s2)
    for x, y in (pair, pair[::-1]):
        if isinstance(x, Box) and isinstance(y, Box):
            return Box(x.lower + y.lower, x.upper + y.upper,
                       exact=x.exact and y.exact)
        if isinstance(x, Zonotope) and isinstance(y, (Zonotope, Box)):
            z = y.to_zonotope() if isinstance(y, Box) else y
            return Zonotope(x.center + z.center,
                            np.hstack([x.generators, z.generators]),
                            exact=x.exact and z.exact)
        if isinstance(x, VPolytope) and isinstance(y, VPolytope):
            sums = (x.vertices[:, None, :] + y.vertices[None, :, :]).reshape(-1, x.dim)
            return VPolytope(_reduce_vertices(sums), exact=x.exact and y.exact)
        if isinstance(x, VPolytope) and isinstance(y, (Box, Zonotope)):
            v = _as_vpolytope_exact(y)
            if v is not None:
                return minkowski_sum(x, v)
        if isinstance(x, HPolytope) and x.dim <= 3:
            try:
                return minkowski_sum(hrep_to_vrep(x), y)
            except ValueError:
                pass
    # general fallback: support functions add under minkowski sum
    dirs = np.asarray(default_template(s1.dim))
    vals = [support(s1, d)[0] + support(s2, d)[0] for d in dirs]
    if not np.all(np.isfinite(vals)):
        raise ValueError("minkowski sum of unbounded operands is not supported")
    return HPolytope(dirs, np.asarray(vals), exact=False)


def _as_vpolytope_exact(s: SetRep, max_vertices: int = 4096) -> VPolytope | None:
    """Exact vertex representation when affordable, else None."""
    if isinstance(s, VPolytope):
        return s
    if isinstance(s, Box):
        if 2 ** s.dim <= max_vertices:
            return s.to_vpolytope()
        return None
    if isinstance(s, Zonotope):
        if s.dim == 2:
            return VPolytope(zonotope_vertices_2d(s), exact=s.exact)
        if 2 ** s.order <= max_vertices:
            signs = np.array(list(itertools.product((-1.0, 1.0), repeat=s.order)))
            pts = s.center + signs @ s.generators.T
            return VPolytope(_reduce_vertices(pts), exact=s.exact)
        return None
    if isinstance(s, HPolytope) and s.dim <= 3:
        try:
            return hrep_to_vrep(s)
        except ValueError:
            return None
    return None


def zonotope_vertices_2d(z: Zonotope) -> np.ndarray:
    """Exact vertex cycle of a planar zonotope by angular generator walk."""
    if z.dim != 2:
        raise ValueError("zonotope vertex walk is planar only")
    g = z.generators.T.copy()
    g = g[np.linalg.norm(g, axis=1) > 1e-14]
    if len(g) == 0:
        return z.center[None, :].copy()
    g[g[:, 1] < 0] *= -1.0  # flip into the upper half-plane
    g[(np.abs(g[:, 1]) <= 1e-14) & (g[:, 0] < 0)] *= -1.0
    order = np.argsort(np.arctan2(g[:, 1], g[:, 0]), kind="stable")
    g = g[order]
    start = z.center - g.sum(axis=0)
    pts = [start]
    for gen in g:  # walk up one side...
        pts.append(pts[-1] + 2.0 * gen)
    for gen in g:  # ...and mirror down the other
        pts.append(pts[-1] - 2.0 * gen)
    pts = np.asarray(pts[:-1])
    return convex_hull_2d(pts).vertices


def intersect(s1: SetRep, s2: SetRep) -> SetRep:
    """Intersection of H-form representable operands (Box or HPolytope)."""
    if s1.dim != s2.dim:
        raise ValueError(f"intersection of sets with dimensions {s1.dim} and {s2.dim}")
    if isinstance(s1, Empty) or isinstance(s2, Empty):
        return Empty(s1.dim)
    if isinstance(s1, Box) and isinstance(s2, Box):
        lo = np.maximum(s1.lower, s2.lower)
        hi = np.minimum(s1.upper, s2.upper)
        if np.any(lo > hi):
            return Empty(s1.dim)
        return Box(lo, hi, exact=s1.exact and s2.exact)
    hs = []
    for s in (s1, s2):
        if isinstance(s, Box):
            hs.append(s.to_hpolytope())
        elif isinstance(s, HPolytope):
            hs.append(s)
        else:
            raise ValueError("intersection requires Box or HPolytope operands")
    return HPolytope(np.vstack([hs[0].normals, hs[1].normals]),
                     np.concatenate([hs[0].offsets, hs[1].offsets]),
                     exact=s1.exact and s2.exact)


def is_empty(s: SetRep, tol: float = FEAS_TOL) -> bool:
    """Emptiness check; H-polytopes are decided by LP feasibility."""
    if isinstance(s, Empty):
        return True
    if isinstance(s, (Box, VPolytope, Zonotope)):
        return False
    if isinstance(s, HPolytope):
        if s.nrows == 0:
            return False
        res = lp_max(LpProblem(np.zeros(s.dim), s.normals, s.offsets),
                     lex_tiebreak=False)
        return res.status == INFEASIBLE
    raise TypeError(f"unknown set representation {type(s).__name__}")


def convex_hull_2d(points) -> VPolytope:
    """Planar convex hull (monotone chain): minimal CCW vertex cycle.

    Collinear points are removed; degenerate inputs yield a single point
    or a two-point segment.
    """
    pts = as_matrix(points)
    if pts.shape[1] != 2:
        raise ValueError("convex_hull_2d expects planar points")
    scale = max(1.0, float(np.abs(pts).max()))
    tol = 1e-12 * scale * scale
    uniq, idx = np.unique(np.round(pts / (1e-12 * scale)).astype(np.int64),
                          axis=0, return_index=True)
    pts = pts[np.sort(idx)]
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    if pts.shape[0] == 1:
        return VPolytope(pts)
    if pts.shape[0] == 2:
        return VPolytope(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= tol:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= tol:
            upper.pop()
        upper.append(p)
    hull = np.asarray(lower[:-1] + upper[:-1])
    if hull.shape[0] == 0:  # all points collinear
        return VPolytope(np.asarray([pts[0], pts[-1]]))
    return VPolytope(hull)


def vrep_to_hrep(p: VPolytope) -> HPolytope:
    """Exact facet representation of a vertex polytope, dimensions <= 3."""
    if not isinstance(p, VPolytope):
        raise TypeError("vrep_to_hrep expects a VPolytope")
    n = p.dim
    if n > 3:
        raise ValueError("exact vertex-to-facet conversion is limited to dimension 3")
    v = p.vertices
    if n == 1:
        return HPolytope(np.array([[1.0], [-1.0]]),
                         np.array([float(v.max()), -float(v.min())]), exact=p.exact)
    if n == 2:
        return _vrep_to_hrep_2d(p)
    return _vrep_to_hrep_3d(p)


def _vrep_to_hrep_2d(p: VPolytope) -> HPolytope:
    hull = convex_hull_2d(p.vertices).vertices
    m = hull.shape[0]
    if m == 1:
        eye = np.eye(2)
        return HPolytope(np.vstack([eye, -eye]),
                         np.concatenate([hull[0], -hull[0]]), exact=p.exact)
    if m == 2:
        u = hull[1] - hull[0]
        u = u / np.linalg.norm(u)
        w = np.array([-u[1], u[0]])
        rows = np.vstack([w, -w, u, -u])
        offs = np.array([w @ hull[0], -(w @ hull[0]),
                         max(u @ hull[0], u @ hull[1]),
                         -min(u @ hull[0], u @ hull[1])])
        return HPolytope(rows, offs, exact=p.exact)
    rows, offs = [], []
    for i in range(m):
        a, b = hull[i], hull[(i + 1) % m]
        edge = b - a
        normal = np.array([edge[1], -edge[0]])  # outward for a CCW cycle
        rows.append(normal)
        offs.append(normal @ a)
    return HPolytope(np.asarray(rows), np.asarray(offs), exact=p.exact)


def _vrep_to_hrep_3d(p: VPolytope) -> HPolytope:
    v = _reduce_vertices(p.vertices)
    center = v.mean(axis=0)
    centered = v - center
    scale = max(1.0, float(np.abs(v).max()))
    _, sv, vt = np.linalg.svd(centered, full_matrices=True)
    sv = np.concatenate([sv, np.zeros(3 - sv.shape[0])])
    rank = int(np.sum(sv > 1e-9 * scale))
    if rank < 3:
        # flat polytope: convert inside the affine subspace, then lift
        basis = vt[:rank]
        sub = VPolytope(centered @ basis.T) if rank else None
        rows, offs = [], []
        if rank:
            h = vrep_to_hrep(sub)
            for a_sub, b_sub in zip(h.normals, h.offsets):
                a_full = a_sub @ basis
                rows.append(a_full)
                offs.append(b_sub + a_full @ center)
        for u in vt[rank:]:
            rows.append(u)
            offs.append(u @ center)
            rows.append(-u)
            offs.append(-(u @ center))
        return HPolytope(np.asarray(rows), np.asarray(offs), exact=p.exact)
    rows, offs = [], []
    m = v.shape[0]
    tol = 1e-9 * scale
    for i, j, k in itertools.combinations(range(m), 3):
        normal = np.cross(v[j] - v[i], v[k] - v[i])
        nn = np.linalg.norm(normal)
        if nn <= 1e-12 * scale * scale:
            continue
        normal = normal / nn
        d = centered @ normal - (v[i] - center) @ normal
        for sgn in (1.0, -1.0):
            if np.all(sgn * d <= tol):
                rows.append(sgn * normal)
                offs.append(sgn * normal @ v[i])
    if not rows:
        raise ValueError("facet enumeration failed (degenerate vertex set)")
    rows = np.asarray(rows)
    offs = np.asarray(offs)
    _, idx = np.unique(np.round(np.hstack([rows, offs[:, None]]) / 1e-9).astype(np.int64),
                       axis=0, return_index=True)
    keep = np.sort(idx)
    return HPolytope(rows[keep], offs[keep], exact=p.exact)


def hrep_to_vrep(p: HPolytope, tol: float = 1e-7) -> VPolytope:
    """Exact vertex enumeration of a bounded H-polytope, dimensions <= 3.

    Enumerates all n-subsets of facets, solves each linear system and keeps
    the feasible intersection points.
    """
    if not isinstance(p, HPolytope):
        raise TypeError("hrep_to_vrep expects an HPolytope")
    n = p.dim
    if n > 3:
        raise ValueError("exact facet-to-vertex conversion is limited to dimension 3")
    eye = np.eye(n)
    for d in np.vstack([eye, -eye]):
        if not np.isfinite(support(p, d)[0]):  # raises on empty input
            raise ValueError("cannot enumerate the vertices of an unbounded polytope")
    a, b = p.normals, p.offsets
    scale = max(1.0, float(np.abs(b).max()))
    pts = []
    for rows in itertools.combinations(range(a.shape[0]), n):
        sub = a[list(rows)]
        try:
            x = np.linalg.solve(sub, b[list(rows)])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(x)):
            continue
        if np.all(a @ x <= b + tol * scale):
            pts.append(x)
    if not pts:
        raise ValueError("vertex enumeration found no vertices (empty polytope?)")
    return VPolytope(_reduce_vertices(np.asarray(pts)), exact=p.exact)


def default_template(n: int) -> np.ndarray:
    """Default direction template: +-axes, plus all pairwise diagonals
    (e_i +- e_j)/sqrt(2) in dimensions up to 4 (octagonal in the plane)."""
    if n < 1:
        raise ValueError("template needs a positive dimension")
    eye = np.eye(n)
    dirs = [eye, -eye]
    if n <= 4:
        diag = []
        for i in range(n):
            for j in range(i + 1, n):
                for si, sj in itertools.product((1.0, -1.0), repeat=2):
                    d = np.zeros(n)
                    d[i], d[j] = si, sj
                    diag.append(d / np.sqrt(2.0))
        if diag:
            dirs.append(np.asarray(diag))
    return np.vstack(dirs)


def template_hull(s: SetRep, directions) -> HPolytope:
    """Support-based outer approximation of s over the given directions.

    Always a superset of s; the result is flagged inexact.  Directions in
    which s is unbounded contribute no constraint.
    """
    dirs = as_matrix(directions)
    if isinstance(s, Empty):
        raise ValueError("template hull of the empty set is undefined")
    if dirs.shape[1] != s.dim:
        raise ValueError("template directions do not match the set dimension")
    rows, offs = [], []
    for d in dirs:
        val = support(s, d)[0]
        if np.isfinite(val):
            rows.append(d)
            offs.append(val)
    if not rows:
        return HPolytope(np.zeros((0, s.dim)), np.zeros(0), exact=False)
    return HPolytope(np.asarray(rows), np.asarray(offs), exact=False)


def bloat(s: SetRep, eps: float) -> SetRep:
    """Minkowski sum with the eps-infinity-ball (axis box of radius eps).

    Exact for boxes, zonotopes and planar vertex sets; H-polytopes push
    each facet outward by eps * the 1-norm of its normal, which rounds the
    corners outward (flagged inexact).
    """
    if eps < 0.0:
        raise ValueError("bloat radius must be nonnegative")
    if isinstance(s, Empty) or eps == 0.0:
        return s
    n = s.dim
    if isinstance(s, Box):
        return Box(s.lower - eps, s.upper + eps, exact=s.exact)
    if isinstance(s, Zonotope):
        return Zonotope(s.center, np.hstack([s.generators, eps * np.eye(n)]),
                        exact=s.exact)
    if isinstance(s, HPolytope):
        grow = eps * np.abs(s.normals).sum(axis=1)
        return HPolytope(s.normals, s.offsets + grow, exact=False)
    if isinstance(s, VPolytope):
        ball = Box(-eps * np.ones(n), eps * np.ones(n))
        return minkowski_sum(s, ball)
    raise TypeError(f"unknown set representation {type(s).__name__}")


def _union_to_hform(q: SetRep) -> HPolytope:
    if isinstance(q, Box):
        return q.to_hpolytope()
    if isinstance(q, HPolytope):
        return q
    if isinstance(q, VPolytope) and q.dim <= 3:
        return vrep_to_hrep(q)
    if isinstance(q, Zonotope):
        if q.order == 0:
            return translate(Box(np.zeros(q.dim), np.zeros(q.dim)), q.center).to_hpolytope()
        if q.dim == 2:
            return vrep_to_hrep(VPolytope(zonotope_vertices_2d(q)))
        if q.dim == 1:
            return q.bounding_box().to_hpolytope()
    raise UnsupportedCheck(
        f"no exact facet form for containment against {type(q).__name__} in dimension {q.dim}")


def _box_difference(p: Box, b: Box) -> list[Box]:
    """p minus b as a disjoint list of boxes (empty list when b covers p)."""
    inter = intersect(p, b)
    if isinstance(inter, Empty):
        return [p]
    out = []
    lo = p.lower.copy()
    hi = p.upper.copy()
    for i in range(p.dim):
        if inter.lower[i] > lo[i] + TOL:
            nhi = hi.copy()
            nhi[i] = inter.lower[i]
            out.append(Box(lo.copy(), nhi))
            lo[i] = inter.lower[i]
        if inter.upper[i] < hi[i] - TOL:
            nlo = lo.copy()
            nlo[i] = inter.upper[i]
            out.append(Box(nlo, hi.copy()))
            hi[i] = inter.upper[i]
    return out


def contains_set(q, p: SetRep, tol: float = TOL) -> bool:
    """Decide p subseteq q.

    q may be a single set or a list of sets (a union).  Single sets are
    decided exactly through their facet form (support of p vs offsets).
    Box unions against a box p use successive set difference (sifting);
    other unions use the sound one-sided test "p inside some single
    member", which may answer False for a genuinely covered p.
    """
    if isinstance(p, Empty):
        return True
    if isinstance(q, (list, tuple)):
        members = [m for m in q if not isinstance(m, Empty)]
        if not members:
            return False
        if isinstance(p, Box) and all(isinstance(m, Box) for m in members):
            pieces = [p]
            for b in members:
                pieces = [frag for piece in pieces for frag in _box_difference(piece, b)]
                if not pieces:
                    return True
            return False
        return any(contains_set(m, p, tol) for m in members)
    if isinstance(q, Empty):
        return False
    h = _union_to_hform(q)
    for a_row, b_row in zip(h.normals, h.offsets):
        if support(p, a_row)[0] > b_row + tol:
            return False
    return True


def axis_bounds(s: SetRep) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise bounds (tight bounding box) via axis supports."""
    if isinstance(s, Empty):
        raise ValueError("the empty set has no bounding box")
    if isinstance(s, Box):
        return s.lower.copy(), s.upper.copy()
    if isinstance(s, Zonotope):
        b = s.bounding_box()
        return b.lower, b.upper
    if isinstance(s, VPolytope):
        return s.vertices.min(axis=0), s.vertices.max(axis=0)
    n = s.dim
    lo, hi = np.empty(n), np.empty(n)
    eye = np.eye(n)
    for i in range(n):
        hi[i] = support(s, eye[i])[0]
        lo[i] = -support(s, -eye[i])[0]
    return lo, hi


def bounding_box(s: SetRep) -> Box:
    lo, hi = axis_bounds(s)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("set is unbounded, no bounding box")
    return Box(lo, hi, exact=getattr(s, "exact", True))


def hull_union(s1: SetRep, s2: SetRep) -> SetRep:
    """Superset of conv(s1 union s2); exact for vertex pairs and intervals.

    Zonotope or box pairs use the symmetric enclosing zonotope; anything
    else takes the componentwise-max support template (flagged).
    """
    if isinstance(s1, Empty):
        return s2
    if isinstance(s2, Empty):
        return s1
    if s1.dim != s2.dim:
        raise ValueError("hull of sets with different dimensions")
    if s1.dim == 1:
        # interval hull is the exact convex hull of a union of intervals
        lo1, hi1 = axis_bounds(s1)
        lo2, hi2 = axis_bounds(s2)
        lo, hi = np.minimum(lo1, lo2), np.maximum(hi1, hi2)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("hull of unbounded operands is not supported")
        return Box(lo, hi, exact=s1.exact and s2.exact)
    if isinstance(s1, VPolytope) and isinstance(s2, VPolytope):
        v = np.vstack([s1.vertices, s2.vertices])
        return VPolytope(_reduce_vertices(v), exact=s1.exact and s2.exact)
    if isinstance(s1, (Box, Zonotope)) and isinstance(s2, (Box, Zonotope)):
        z1 = s1.to_zonotope() if isinstance(s1, Box) else s1
        z2 = s2.to_zonotope() if isinstance(s2, Box) else s2
        p = max(z1.order, z2.order)
        g1 = np.hstack([z1.generators, np.zeros((z1.dim, p - z1.order))])
        g2 = np.hstack([z2.generators, np.zeros((z2.dim, p - z2.order))])
        mid = 0.5 * (z1.center + z2.center)
        gens = np.hstack([0.5 * (z1.center - z2.center)[:, None],
                          0.5 * (g1 + g2), 0.5 * (g1 - g2)])
        return Zonotope(mid, gens, exact=False)
    dirs = default_template(s1.dim)
    vals = [max(support(s1, d)[0], support(s2, d)[0]) for d in dirs]
    if not np.all(np.isfinite(vals)):
        raise ValueError("hull of unbounded operands is not supported")
    return HPolytope(dirs, np.asarray(vals), exact=False)


def sample_points(s: SetRep, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random points of s, one per row (test and simulation helper)."""
    if isinstance(s, Empty):
        raise ValueError("cannot sample the empty set")
    if isinstance(s, Box):
        return rng.uniform(s.lower, s.upper, size=(count, s.dim))
    if isinstance(s, Zonotope):
        alpha = rng.uniform(-1.0, 1.0, size=(count, s.order))
        return s.center + alpha @ s.generators.T
    if isinstance(s, VPolytope):
        w = rng.dirichlet(np.ones(s.vertices.shape[0]), size=count)
        return w @ s.vertices
    if isinstance(s, HPolytope):
        box = bounding_box(s)
        out = np.empty((count, s.dim))
        have = 0
        for _ in range(2000):
            cand = rng.uniform(box.lower, box.upper, size=(max(count, 64), s.dim))
            ok = cand[np.all(s.normals @ cand.T <= s.offsets[:, None] + TOL, axis=0)]
            take = min(count - have, ok.shape[0])
            out[have:have + take] = ok[:take]
            have += take
            if have >= count:
                return out
        raise ValueError("rejection sampling failed (thin polytope)")
    raise TypeError(f"unknown set representation {type(s).__name__}")
