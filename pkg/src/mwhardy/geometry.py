"""Cubes, dyadic lattices, Whitney decomposition, ball intersection radius.

Whitney geometry runs in exact integer arithmetic: an open set is the
interior of a union of raster cells with dyadic-rational corners, every cube
coordinate is an integer multiple of the finest dyadic unit, and distances
are compared through their squares, which are integers in that unit. The
sharp-constant claims (distance bracket, neighbour ratio, touch and overlap
bounds) are therefore decided exactly, never through float comparisons.

The continuum Whitney family of a proper open set is countably infinite
(cubes shrink toward the boundary), so the decomposition is truncated at a
maximum dyadic level. The uncovered remainder is returned explicitly as a
union of finest-level cells, each of which provably lies within
2 sqrt(n) 2^{-max_level} of the complement.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import DomainError
from .grid import Cube


def ball_intersection_radius(r, delta, d):
    """Radius of a ball guaranteed to fit inside B(x,r) and B(y, delta r).

    Returns None when the balls of radii r and delta*r with center distance
    d = |x - y| need not intersect (d >= (1+delta) r).
    """
    if r <= 0 or delta <= 0 or d < 0:
        raise DomainError("need r > 0, delta > 0, d >= 0")
    if d >= (1 + delta) * r:
        return None
    return ((1 + delta) * r - max(d, abs(1 - delta) * r)) / 2


def ball_intersection_center(x, y, r, delta):
    """Constructive center z with B(z, r*) inside both balls.

    Case 1 (d <= |1-delta| r): one ball contains the other, z is the smaller
    ball's center. Case 2: z is the midpoint of the chord of the lens along
    the segment from x to y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = float(np.linalg.norm(y - x))
    if d >= (1 + delta) * r:
        return None
    if d <= abs(1 - delta) * r:
        return y.copy() if delta <= 1 else x.copy()
    u = (y - x) / d
    return x + u * ((d - delta * r + r) / 2)


def _to_unit(value, unit_pow):
    """Exact integer value / 2^{-unit_pow}; value must be dyadic."""
    f = Fraction(value) * (1 << unit_pow) if unit_pow >= 0 else Fraction(value) / (1 << -unit_pow)
    if f.denominator != 1:
        raise DomainError(f"coordinate {value} is not dyadic at level {unit_pow}")
    return int(f)


class OpenBoxUnion:
    """Interior of a finite union of axis-aligned boxes with dyadic corners.

    resolution_level r fixes the raster: corners must be multiples of 2^{-r}
    and the set is stored as the set of raster cells it contains.
    """

    def __init__(self, n, boxes, resolution_level):
        if n not in (1, 2):
            raise DomainError("only n in {1, 2}")
        self.n = n
        self.r = int(resolution_level)
        cells = set()
        for lo, hi in boxes:
            lo = tuple(np.atleast_1d(lo))
            hi = tuple(np.atleast_1d(hi))
            ilo = [_to_unit(v, self.r) for v in lo]
            ihi = [_to_unit(v, self.r) for v in hi]
            if any(a >= b for a, b in zip(ilo, ihi)):
                raise DomainError("degenerate box")
            if n == 1:
                cells.update((i,) for i in range(ilo[0], ihi[0]))
            else:
                for i in range(ilo[0], ihi[0]):
                    for j in range(ilo[1], ihi[1]):
                        cells.add((i, j))
        if not cells:
            raise DomainError("empty open set")
        self.cells = cells

    @classmethod
    def from_cells(cls, n, cells, resolution_level):
        obj = cls.__new__(cls)
        obj.n = n
        obj.r = int(resolution_level)
        obj.cells = set(tuple(c) for c in cells)
        if not obj.cells:
            raise DomainError("empty open set")
        return obj

    def volume(self):
        return len(self.cells) * Fraction(1, 1 << (self.n * self.r)) ** 1

    def bounding_cells(self):
        arr = np.array(sorted(self.cells), dtype=np.int64)
        return arr.min(axis=0), arr.max(axis=0) + 1


class WhitneyCube:
    """Closed dyadic cube 2^{-j}([0,1]^n + k), stored exactly."""

    __slots__ = ("level", "k", "n")

    def __init__(self, level, k, n):
        self.level = int(level)
        self.k = tuple(int(v) for v in k)
        self.n = n

    def corners_in_units(self, max_level):
        s = 1 << (max_level - self.level)
        lo = tuple(v * s for v in self.k)
        hi = tuple(v * s + s for v in self.k)
        return lo, hi

    def edge(self):
        return 2.0 ** (-self.level)

    def to_cube(self):
        e = self.edge()
        return Cube(tuple((v + 0.5) * e for v in self.k), e, self.n)

    def children(self):
        out = []
        if self.n == 1:
            for dx in (0, 1):
                out.append(WhitneyCube(self.level + 1, (2 * self.k[0] + dx,), 1))
        else:
            for dx in (0, 1):
                for dy in (0, 1):
                    out.append(WhitneyCube(self.level + 1,
                                           (2 * self.k[0] + dx, 2 * self.k[1] + dy), 2))
        return out

    def __repr__(self):
        return f"WhitneyCube(level={self.level}, k={self.k})"


class DyadicGrid:
    """The lattice Q_t = { t([0,1)^n + k) } restricted to an index box."""

    def __init__(self, t, index_lo, index_hi, n):
        self.t = float(t)
        self.index_lo = tuple(index_lo)
        self.index_hi = tuple(index_hi)
        self.n = n
        if self.t <= 0:
            raise DomainError("scale must be positive")

    def members(self):
        if self.n == 1:
            return [Cube(((k + 0.5) * self.t,), self.t)
                    for k in range(self.index_lo[0], self.index_hi[0])]
        out = []
        for kx in range(self.index_lo[0], self.index_hi[0]):
            for ky in range(self.index_lo[1], self.index_hi[1]):
                out.append(Cube(((kx + 0.5) * self.t, (ky + 0.5) * self.t), self.t))
        return out

    def parent_of(self, cube):
        """The cube of the twice-coarser lattice containing this member."""
        k = tuple(int(np.floor(round(c / self.t - 0.5))) for c in cube.center)
        kp = tuple(v // 2 for v in k)
        return Cube(tuple((v + 0.5) * 2 * self.t for v in kp), 2 * self.t)


class _ComplementIndex:
    """Exact squared distances from boxes to the complement of the open set.

    Works in integer units of 2^{-max_level}. The complement is the finite
    list of raster cells inside the bounding frame that are not part of the
    set, plus the unbounded region outside the frame.
    """

    def __init__(self, omega, max_level):
        self.n = omega.n
        self.scale = 1 << (max_level - omega.r)
        lo, hi = omega.bounding_cells()
        self.frame_lo = np.asarray(lo, dtype=np.int64) * self.scale
        self.frame_hi = np.asarray(hi, dtype=np.int64) * self.scale
        comp = []
        if omega.n == 1:
            for i in range(int(lo[0]), int(hi[0])):
                if (i,) not in omega.cells:
                    comp.append((i,))
        else:
            for i in range(int(lo[0]), int(hi[0])):
                for j in range(int(lo[1]), int(hi[1])):
                    if (i, j) not in omega.cells:
                        comp.append((i, j))
        if comp:
            arr = np.asarray(comp, dtype=np.int64) * self.scale
            self.comp_lo = arr
            self.comp_hi = arr + self.scale
        else:
            self.comp_lo = np.zeros((0, omega.n), dtype=np.int64)
            self.comp_hi = self.comp_lo

    def dist_sq(self, lo, hi):
        """min over the complement of the squared box distance; exact int."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        # straight-line exit through the nearest frame face
        face = np.minimum(lo - self.frame_lo, self.frame_hi - hi)
        best = int(np.min(face)) ** 2 if np.min(face) >= 0 else 0
        if self.comp_lo.shape[0]:
            gaps = np.maximum(0, np.maximum(self.comp_lo - hi, lo - self.comp_hi))
            d2 = np.min(np.sum(gaps * gaps, axis=1))
            best = min(best, int(d2))
        return best


class WhitneyCover:
    """Finite Whitney family plus the exact uncovered boundary remainder."""

    def __init__(self, omega, cubes, residual_cells, max_level,
                 a_tilde=Fraction(17, 16), a_star=Fraction(9, 8)):
        self.omega = omega
        self.cubes = cubes
        self.residual_cells = residual_cells
        self.max_level = max_level
        self.a_tilde = a_tilde
        self.a_star = a_star
        self.n = omega.n

    def float_cubes(self):
        return [q.to_cube() for q in self.cubes]

    def covered_volume(self):
        return sum(Fraction(1, 1 << (self.n * q.level)) for q in self.cubes)

    def residual_volume(self):
        return len(self.residual_cells) * Fraction(1, 1 << (self.n * self.max_level))


def whitney_decompose(omega, max_level=None, whole_space=False):
    """Whitney decomposition of an OpenBoxUnion, truncated at max_level.

    Stopping rule: a dyadic cube inside the set is accepted as soon as
    dist(Q, complement) >= sqrt(n) l(Q); rejected cubes are subdivided. The
    coarsest level is chosen so that no cube is accepted there, which forces
    dist(Q, complement) <= 4 sqrt(n) l(Q) for every accepted cube (its parent
    was rejected).
    """
    if whole_space or omega is None:
        raise DomainError("the whole space has no Whitney decomposition")
    n = omega.n
    if max_level is None:
        max_level = omega.r + (5 if n == 1 else 4)
    if max_level < omega.r:
        raise DomainError("max_level must be at least the raster level")
    index = _ComplementIndex(omega, max_level)

    # coarsest level: sqrt(n) 2^{-j0} must exceed any distance to the
    # complement, which is at most the frame half-diameter
    frame_span = int(np.max(index.frame_hi - index.frame_lo))
    j0 = max_level
    while n * (1 << (max_level - j0)) ** 2 <= n * frame_span ** 2:
        j0 -= 1

    def meets_omega(cube):
        s = 1 << (max_level - cube.level)
        scale_r = 1 << (max_level - omega.r)
        lo, hi = cube.corners_in_units(max_level)
        cl = [v // scale_r for v in lo]
        ch = [-(-v // scale_r) for v in hi]
        if n == 1:
            return any((i,) in omega.cells for i in range(cl[0], ch[0]))
        return any((i, j) in omega.cells
                   for i in range(cl[0], ch[0]) for j in range(cl[1], ch[1]))

    # seed with coarsest-level cubes meeting the set
    scale0 = 1 << (max_level - j0)
    klo = [int(v) // scale0 - 1 for v in index.frame_lo]
    khi = [-(-int(v) // scale0) + 1 for v in index.frame_hi]
    if n == 1:
        active = [WhitneyCube(j0, (k,), 1) for k in range(klo[0], khi[0])]
    else:
        active = [WhitneyCube(j0, (kx, ky), 2)
                  for kx in range(klo[0], khi[0]) for ky in range(klo[1], khi[1])]
    active = [q for q in active if meets_omega(q)]

    accepted = []
    for level in range(j0, max_level + 1):
        unit = 1 << (max_level - level)
        next_active = []
        for q in active:
            lo, hi = q.corners_in_units(max_level)
            d2 = index.dist_sq(lo, hi)
            if level > j0 and d2 >= n * unit * unit:
                accepted.append(q)
            elif level < max_level:
                next_active.extend(c for c in q.children() if meets_omega(c))
            else:
                next_active.append(q)
        if level == max_level:
            active = next_active
            break
        active = next_active

    # remainder: finest-level rejected cubes that lie inside the set
    scale_r = 1 << (max_level - omega.r)
    residual = []
    for q in active:
        lo, _ = q.corners_in_units(max_level)
        cell = tuple(v // scale_r for v in lo)
        if cell in omega.cells:
            residual.append(q.k)
    return WhitneyCover(omega, accepted, residual, max_level)


def verify_whitney(cover):
    """Exact verification of the five Whitney properties; returns a report.

    Tiling is verified in its truncation-aware form: the cubes are pairwise
    disjoint subsets of the set, cubes plus the residual cells tile it
    exactly (by measure and by cell cover), and every residual cell lies
    within 2 sqrt(n) 2^{-max_level} of the complement.
    """
    omega = cover.omega
    n = omega.n
    ml = cover.max_level
    index = _ComplementIndex(omega, ml)
    report = {}

    # distance bracket, exact: n l^2 <= d^2 <= 16 n l^2
    bracket_ok = True
    inside_ok = True
    for q in cover.cubes:
        lo, hi = q.corners_in_units(ml)
        unit = 1 << (ml - q.level)
        d2 = index.dist_sq(lo, hi)
        if not (n * unit * unit <= d2 <= 16 * n * unit * unit):
            bracket_ok = False
        if d2 <= 0:
            inside_ok = False
    report["distance_bracket"] = bracket_ok
    report["cubes_inside"] = inside_ok

    # pairwise interior disjointness and touching statistics
    corners = [q.corners_in_units(ml) for q in cover.cubes]
    K = len(cover.cubes)
    los = np.array([c[0] for c in corners], dtype=np.int64).reshape(K, n)
    his = np.array([c[1] for c in corners], dtype=np.int64).reshape(K, n)
    disjoint_ok = True
    ratio_ok = True
    touch_ok = True
    touch_counts = np.zeros(K, dtype=np.int64)
    for i in range(K):
        overlap = np.all((np.minimum(his[i], his[i + 1:])
                          - np.maximum(los[i], los[i + 1:])) > 0, axis=1)
        if np.any(overlap):
            disjoint_ok = False
        touch = np.all((np.minimum(his[i], his[i + 1:])
                        - np.maximum(los[i], los[i + 1:])) >= 0, axis=1)
        idx = np.nonzero(touch)[0] + i + 1
        touch_counts[i] += len(idx)
        touch_counts[idx] += 1
        for j in idx:
            dl = cover.cubes[i].level - cover.cubes[j].level
            if abs(dl) > 2:
                ratio_ok = False
    bound = 12 ** n - 4 ** n
    if np.any(touch_counts > bound):
        touch_ok = False
    report["interiors_disjoint"] = disjoint_ok
    report["edge_ratio"] = ratio_ok
    report["touch_bound"] = touch_ok
    report["max_touch_count"] = int(touch_counts.max()) if K else 0

    # tiling: measure identity and residual collar bound
    vol_ok = (cover.covered_volume() + cover.residual_volume()) == omega.volume()
    collar_ok = True
    for k in cover.residual_cells:
        lo = tuple(int(v) for v in k)
        hi = tuple(int(v) + 1 for v in lo)
        d2 = index.dist_sq(lo, hi)
        if d2 >= 4 * n:  # (2 sqrt(n) * 1)^2 in finest units
            collar_ok = False
    report["tiling_measure"] = bool(vol_ok)
    report["residual_collar"] = collar_ok

    # overlap bound at lambda = 9/8 via an exact sweep in 1/16 units
    lam_n, lam_d = 9, 8
    dil_lo = []
    dil_hi = []
    for q, (lo, hi) in zip(cover.cubes, corners):
        half = (hi[0] - lo[0])  # edge in units
        c2 = [l + h for l, h in zip(lo, hi)]  # 2x center
        dlo = [8 * c - lam_n * half for c in c2]  # 16x (center - 9/16 edge)
        dhi = [8 * c + lam_n * half for c in c2]
        dil_lo.append(dlo)
        dil_hi.append(dhi)
    dil_lo = np.array(dil_lo, dtype=np.int64).reshape(K, n)
    dil_hi = np.array(dil_hi, dtype=np.int64).reshape(K, n)

    # dilates stay inside the set: exact check via cell membership
    dilate_inside_ok = True
    scale_r = 1 << (ml - omega.r)
    for i in range(K):
        cl = [int(v) // (16 * scale_r) for v in dil_lo[i]]
        ch = [-(-int(v) // (16 * scale_r)) for v in dil_hi[i]]
        if n == 1:
            cells = [(a,) for a in range(cl[0], ch[0])]
        else:
            cells = [(a, b) for a in range(cl[0], ch[0]) for b in range(cl[1], ch[1])]
        if any(c not in omega.cells for c in cells):
            dilate_inside_ok = False
            break
    report["dilates_inside"] = dilate_inside_ok

    report["max_overlap"] = _max_overlap(dil_lo, dil_hi, n)
    report["overlap_bound"] = report["max_overlap"] <= bound + 1
    report["all_ok"] = all(v for v in report.values() if isinstance(v, bool))
    return report


def _max_overlap(los, his, n):
    """Max pointwise multiplicity of closed boxes; exact integer sweep."""
    K = los.shape[0]
    if K == 0:
        return 0
    if n == 1:
        events = sorted([(int(l), 0) for l in los[:, 0]]
                        + [(int(h), 1) for h in his[:, 0]])
        cur = best = 0
        for _, kind in events:
            if kind == 0:
                cur += 1
                best = max(best, cur)
            else:
                cur -= 1
        return best
    xs = sorted(set(int(v) for v in los[:, 0]) | set(int(v) for v in his[:, 0]))
    best = 0
    slabs = [(x, x) for x in xs]
    slabs += [(a, b) for a, b in zip(xs[:-1], xs[1:]) if b > a]
    for a, b in slabs:
        if a == b:
            sel = (los[:, 0] <= a) & (his[:, 0] >= a)
        else:
            sel = (los[:, 0] < b) & (his[:, 0] > a)
        if not np.any(sel):
            continue
        sub_lo = los[sel, 1]
        sub_hi = his[sel, 1]
        events = sorted([(int(l), 0) for l in sub_lo] + [(int(h), 1) for h in sub_hi])
        cur = 0
        for _, kind in events:
            if kind == 0:
                cur += 1
                best = max(best, cur)
            else:
                cur -= 1
    return best


def dyadic_nesting_ok(grid_fine, grid_coarse):
    """Every member of the finer lattice lies in exactly one coarser member."""
    if abs(grid_coarse.t - 2 * grid_fine.t) > 0:
        raise DomainError("expected consecutive dyadic scales")
    coarse = {c.key() for c in grid_coarse.members()}
    for q in grid_fine.members():
        parents = [c for c in grid_coarse.members()
                   if all(cl <= ql and qh <= ch
                          for cl, ql, qh, ch in zip(c.lo, q.lo, q.hi, c.hi))]
        if len(parents) != 1 or parents[0].key() not in coarse:
            return False
    return True
