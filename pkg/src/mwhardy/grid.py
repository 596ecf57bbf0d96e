"""Uniform midpoint grids on [-L, L]^n and grid-aligned cubes.

Sample points sit at cell midpoints -L + (i + 1/2) h, so a cube whose
corners are integer multiples of h contains exactly (edge/h)^n samples and
midpoint Riemann sums over aligned cubes are float-exact per cube.
"""

from __future__ import annotations

import numpy as np

from .errors import AlignmentError, DomainError


def _is_dyadic(x):
    """True when x equals k * 2^j exactly for integers k, j."""
    if x <= 0 or not np.isfinite(x):
        return False
    m, e = np.frexp(x)
    # frexp mantissa in [0.5, 1); dyadic iff mantissa has a short binary tail
    return float(np.ldexp(m, 60)) == int(np.ldexp(m, 60))


class Cube:
    """Axis-aligned cube given by center and edge length."""

    __slots__ = ("center", "edge", "n")

    def __init__(self, center, edge, n=None):
        center = tuple(float(c) for c in np.atleast_1d(center))
        self.center = center
        self.edge = float(edge)
        self.n = len(center) if n is None else int(n)
        if self.edge <= 0:
            raise DomainError("cube edge must be positive")

    def dilate(self, r):
        return Cube(self.center, r * self.edge, self.n)

    @property
    def lo(self):
        return tuple(c - self.edge / 2 for c in self.center)

    @property
    def hi(self):
        return tuple(c + self.edge / 2 for c in self.center)

    @property
    def volume(self):
        return self.edge ** self.n

    def contains(self, x):
        return all(lo <= xi < hi for lo, xi, hi in zip(self.lo, x, self.hi))

    def distance_to_center(self, other):
        return float(np.linalg.norm(np.subtract(self.center, other.center)))

    def key(self):
        return (round(self.edge, 12),) + tuple(round(c, 12) for c in self.center)

    def __repr__(self):
        return f"Cube(center={self.center}, edge={self.edge})"


class Grid:
    """Midpoint sampling of [-L, L]^n at spacing h (both dyadic)."""

    def __init__(self, n, L, h):
        if n not in (1, 2):
            raise DomainError("only n in {1, 2} is supported")
        if not (_is_dyadic(L) and _is_dyadic(h)):
            raise AlignmentError("L and h must be dyadic rationals")
        npts = 2 * L / h
        if abs(npts - round(npts)) > 0:
            raise AlignmentError("2L must be an integer multiple of h")
        self.n = n
        self.L = float(L)
        self.h = float(h)
        self.npts_axis = int(round(npts))
        self.axis = -L + (np.arange(self.npts_axis) + 0.5) * h
        if n == 1:
            self.points = self.axis.reshape(-1, 1)
        else:
            xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
            self.points = np.stack([xx.ravel(), yy.ravel()], axis=1)
        self.size = self.points.shape[0]
        self.cell_volume = self.h ** n

    def integrate(self, field):
        """Midpoint Riemann sum of a flat per-point field."""
        return float(np.sum(field)) * self.cell_volume

    def axis_slice(self, lo, hi):
        """Index range of axis samples inside [lo, hi); corners must align."""
        i0 = int(np.ceil((lo + self.L) / self.h - 0.5))
        i1 = int(np.ceil((hi + self.L) / self.h - 0.5))
        i0 = max(i0, 0)
        i1 = min(i1, self.npts_axis)
        return i0, max(i1, i0)

    def cube_indices(self, cube):
        """Flat indices of samples inside the (half-open) cube."""
        ranges = [self.axis_slice(lo, hi) for lo, hi in zip(cube.lo, cube.hi)]
        if self.n == 1:
            i0, i1 = ranges[0]
            return np.arange(i0, i1)
        (i0, i1), (j0, j1) = ranges
        ii = np.arange(i0, i1)
        jj = np.arange(j0, j1)
        return (ii[:, None] * self.npts_axis + jj[None, :]).ravel()

    def ball_indices(self, center, radius):
        """Flat indices of samples y with |y - center| <= radius (shrunk a hair).

        The 1e-9 relative shrink keeps strict-inequality chain comparisons
        safe against float rounding at the ball boundary.
        """
        r = radius * (1.0 - 1e-9)
        d2 = np.sum((self.points - np.asarray(center)) ** 2, axis=1)
        return np.nonzero(d2 <= r * r)[0]

    def dyadic_cubes(self, t):
        """Cubes of the lattice t([0,1)^n + k) meeting the domain.

        t must be dyadic and resolvable by the grid; cube corners then land on
        integer multiples of h (or the cubes are h-aligned supersets of the
        domain for t > 2L).
        """
        if not _is_dyadic(t):
            raise AlignmentError("dyadic scale expected")
        ratio = t / self.h
        if ratio < 1 or abs(ratio - round(ratio)) > 0:
            raise AlignmentError(f"scale {t} does not align with spacing {self.h}")
        k0 = int(np.floor(-self.L / t))
        k1 = int(np.ceil(self.L / t))
        cubes = []
        if self.n == 1:
            for k in range(k0, k1):
                cubes.append(Cube(((k + 0.5) * t,), t))
        else:
            for kx in range(k0, k1):
                for ky in range(k0, k1):
                    cubes.append(Cube(((kx + 0.5) * t, (ky + 0.5) * t), t))
        return cubes

    def cube_of_point(self, x, t):
        """The cube of the t-lattice containing point x."""
        k = tuple(int(np.floor(xi / t)) for xi in x)
        return Cube(tuple((ki + 0.5) * t for ki in k), t)

    def aligned_cube_family(self, min_edge=None, max_edge=None):
        """All grid-aligned cubes with dyadic edges inside the domain."""
        edges = []
        e = self.h if min_edge is None else min_edge
        top = 2 * self.L if max_edge is None else max_edge
        while e <= top:
            edges.append(e)
            e *= 2
        family = []
        for e in edges:
            for c in self.dyadic_cubes(e):
                if all(lo >= -self.L - 1e-12 and hi <= self.L + 1e-12
                       for lo, hi in zip(c.lo, c.hi)):
                    family.append(c)
        return family

    def mask_to_cells(self, mask):
        """Half-open cells (integer corners, units of h) of a boolean mask."""
        idx = np.nonzero(mask.ravel())[0]
        cells = []
        for flat in idx:
            if self.n == 1:
                i = int(flat)
                cells.append(((i,), (i + 1,)))
            else:
                i, j = divmod(int(flat), self.npts_axis)
                cells.append(((i, j), (i + 1, j + 1)))
        return cells

    def cell_origin(self):
        """Offset mapping cell-integer coordinates to real units: x = (k - N/2) h."""
        return -self.L
