"""Convolutions at scale and the matrix-weighted maximal functions.

Every maximal variant of one evaluation is computed from the same cached
convolution fields and the same sample sets (one dyadic scale set, one ball
sample rule, one damping table), so the pointwise comparison chains between
variants are finite-max comparisons over nested index sets and hold without
tolerance. Ball membership is shrunk by a relative 1e-9 so the aperture
factor (1+a)^l clears float rounding with a structural margin.

The grand maximal functions take a finite dictionary of normalized test
functions and are therefore lower bounds for the suprema over the full
seminorm ball; they are used only in inequalities compatible with that.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, PreconditionError, ResolutionError
from .grid import Grid

_SEMINORM_CACHE = {}


class VectorField:
    """Sampled C^m-valued function with compact support on the grid."""

    def __init__(self, grid, values, support=None):
        values = np.asarray(values, dtype=complex).reshape(grid.size, -1)
        if not np.all(np.isfinite(values)):
            raise DomainError("non-finite field values")
        self.grid = grid
        self.values = values
        self.m = values.shape[1]
        self.support = support
        if support is not None:
            inside = np.ones(grid.size, dtype=bool)
            for axis in range(grid.n):
                x = grid.points[:, axis]
                inside &= (x >= support.lo[axis]) & (x < support.hi[axis])
            if np.any(np.abs(values[~inside]) > 0):
                raise DomainError("values do not vanish outside the support box")

    def scaled(self, c):
        return VectorField(self.grid, c * self.values, self.support)

    @property
    def n(self):
        return self.grid.n


class TestFunction:
    """Smooth profile supported in the unit ball, with cached seminorms."""

    def __init__(self, fn, name, support_radius=1.0):
        self.fn = fn
        self.name = name
        self.support_radius = support_radius
        self._integral = None

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.fn(pts)

    def integral(self, n):
        if self._integral is None:
            h = 2.0 ** -10 if n == 1 else 2.0 ** -7
            g = Grid(n, 2.0, h)
            self._integral = g.integrate(self(g.points))
        return self._integral

    def seminorm(self, N, n):
        """||psi||_{S_N} via finite differences on a fine auxiliary grid."""
        key = (self.name, N, n)
        if key not in _SEMINORM_CACHE:
            h = 2.0 ** -9 if n == 1 else 2.0 ** -6
            g = Grid(n, 2.0, h)
            shape = (g.npts_axis,) * n
            base = self(g.points).reshape(shape)
            weight = (1.0 + np.linalg.norm(g.points, axis=1)) ** (N + n + 1)
            weight = weight.reshape(shape)
            best = 0.0
            orders = ([(k,) for k in range(N + 2)] if n == 1 else
                      [(i, j) for i in range(N + 2) for j in range(N + 2)
                       if i + j <= N + 1])
            for order in orders:
                d = base
                for axis, reps in enumerate(order):
                    for _ in range(reps):
                        d = np.gradient(d, g.h, axis=axis)
                best = max(best, float(np.max(np.abs(d) * weight)))
            _SEMINORM_CACHE[key] = best
        return _SEMINORM_CACHE[key]


def _bump_values(pts, center, radius):
    r2 = np.sum(((pts - center) / radius) ** 2, axis=1)
    out = np.zeros(len(pts))
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def bump(n):
    """The standard normalized bump exp(-1/(1-|x|^2)) on B(0,1)."""
    return TestFunction(lambda pts: _bump_values(pts, 0.0, 1.0), f"bump{n}d")


def dilated_bump(n, factor):
    c = np.zeros(n)
    return TestFunction(lambda pts: _bump_values(pts, c, factor),
                        f"bump{n}d-dil{factor}")


def translated_bump(n, offset, width):
    c = np.zeros(n)
    c[0] = offset
    if abs(offset) + width > 1.0:
        raise DomainError("translate leaves the unit ball")
    return TestFunction(lambda pts: _bump_values(pts, c, width),
                        f"bump{n}d-tr{offset}w{width}")


def moment_bump(n, axis=0):
    """First-moment modulated bump x_axis * bump(x); mean zero."""
    def fn(pts):
        return pts[:, axis] * _bump_values(pts, 0.0, 1.0)
    return TestFunction(fn, f"mbump{n}d-ax{axis}")


class SchwartzDictionary:
    """Finite stand-in for the S_N ball: profiles with their seminorm divisors."""

    def __init__(self, members, N, n):
        if not members:
            raise DomainError("empty dictionary")
        self.N = N
        self.n = n
        self.members = list(members)
        self.divisors = [tf.seminorm(N, n) for tf in self.members]
        if any(d <= 0 for d in self.divisors):
            raise DomainError("member with vanishing seminorm")

    @classmethod
    def default(cls, n, N, psi=None):
        members = [psi if psi is not None else bump(n)]
        members += [dilated_bump(n, 0.5), dilated_bump(n, 0.25)]
        members += [translated_bump(n, off, 0.5) for off in (-0.4, 0.4)]
        members += [translated_bump(n, off, 0.25) for off in (-0.6, 0.6)]
        members += [moment_bump(n, axis=0)]
        if n == 2:
            members += [moment_bump(n, axis=1)]
            members += [translated_bump(n, 0.2, 0.7)]
        members += [dilated_bump(n, 0.75), translated_bump(n, -0.2, 0.75)]
        return cls(members[:12], N, n)

    def restricted(self, count):
        return SchwartzDictionary(self.members[:count], self.N, self.n)


class MaximalConfig:
    """Shared lattice parameters: scales, aperture, Peetre exponent, cube ratio."""

    def __init__(self, p, a=1.0, l=None, b=0.25, N=3, scales=None):
        if a <= 0 or b <= 0 or (l is not None and l <= 0):
            raise PreconditionError("a, b, l must be positive")
        self.p = float(p)
        self.a = float(a)
        self.l = l
        self.b = float(b)
        self.N = int(N)
        self.scales = scales

    def resolve_l(self, n, d_lower=0.0, d_upper=0.0):
        need = n / self.p + (max(d_lower, 0.0) + max(d_upper, 0.0)) / self.p
        if self.l is None:
            return need + 1.0
        if self.l <= need:
            raise PreconditionError(
                f"Peetre exponent {self.l} not above n/p + (d1+d2)/p = {need}")
        return self.l


def dyadic_scales(grid):
    """Default scale set 2^j, from ceil(log2(4h)) to ceil(log2(L))."""
    j_min = int(np.ceil(np.log2(4 * grid.h)))
    j_max = int(np.ceil(np.log2(grid.L)))
    return [2.0 ** j for j in range(j_min, j_max + 1)]


def convolve_scale(f, psi, t):
    """psi_t * f on the grid, psi_t = t^{-n} psi(./t); exact linearity in f."""
    grid = f.grid
    if t < 2 * grid.h:
        raise ResolutionError(f"scale {t} below 2h = {2 * grid.h}")
    K = int(np.floor(t * psi.support_radius / grid.h))
    offs = np.arange(-K, K + 1) * grid.h
    if grid.n == 1:
        kernel = psi(offs.reshape(-1, 1) / t) / t
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        pts = np.stack([ox.ravel(), oy.ravel()], axis=1) / t
        kernel = (psi(pts) / t ** 2).reshape(2 * K + 1, 2 * K + 1)
    out = np.empty_like(f.values)
    shape = (grid.npts_axis,) * grid.n
    for comp in range(f.m):
        comp_vals = f.values[:, comp].reshape(shape)
        conv = (fftconvolve(comp_vals.real, kernel, mode="same")
                + 1j * fftconvolve(comp_vals.imag, kernel, mode="same"))
        out[:, comp] = conv.ravel()
    return VectorField(grid, out * grid.cell_volume)


class WeightedMode:
    """Pointwise multiplier W^{1/p}(x), independent of the scale."""

    kind = "W"

    def __init__(self, weight, p):
        self.weight = weight
        self.p = float(p)
        self._field = weight.power(1.0 / p)

    def multiplier(self, t):
        return self._field


class ReducingMode:
    """Piecewise multiplier A_t(x) from a reducing family."""

    kind = "A"

    def __init__(self, family):
        self.family = family

    def multiplier(self, t):
        return self.family.matrix_field(t)[0]


class MaximalEvaluator:
    """All maximal variants of one (f, psi, mode) from shared caches."""

    def __init__(self, f, psi, mode, scales):
        self.f = f
        self.psi = psi
        self.mode = mode
        self.scales = list(scales)
        self.grid = f.grid
        self._conv = {}
        self._dist = None

    def conv(self, t):
        if t not in self._conv:
            self._conv[t] = convolve_scale(self.f, self.psi, t).values
        return self._conv[t]

    def dist_matrix(self):
        if self._dist is None:
            pts = self.grid.points
            diff = pts[:, None, :] - pts[None, :, :]
            self._dist = np.sqrt(np.sum(diff * diff, axis=2))
        return self._dist

    def g_matrix(self, t):
        """G_t[x, y] = |M_t(x) (psi_t * f)(y)| for all sample pairs."""
        M = self.mode.multiplier(t)
        V = self.conv(t)
        if self.f.m == 1:
            return np.abs(M[:, 0, 0])[:, None] * np.abs(V[:, 0])[None, :]
        U = np.einsum("xij,yj->xyi", M, V)
        return np.linalg.norm(U, axis=2)

    def radial(self):
        out = np.zeros(self.grid.size)
        for t in self.scales:
            M = self.mode.multiplier(t)
            V = self.conv(t)
            vals = np.linalg.norm(np.einsum("kij,kj->ki", M, V), axis=1)
            np.maximum(out, vals, out=out)
        return out

    def sweep(self, a=None, l=None, b=None):
        """One pass over scales accumulating every pairwise variant.

        Returns a dict with any of: nontangential, peetre, damped
        (ball-restricted Peetre terms), infimum.
        """
        size = self.grid.size
        want_nt = a is not None
        want_pe = l is not None
        want_inf = b is not None and a is not None
        acc = {}
        if want_nt:
            acc["nontangential"] = np.zeros(size)
        if want_pe:
            acc["peetre"] = np.zeros(size)
            if want_nt:
                acc["damped"] = np.zeros(size)
        if want_inf:
            acc["infimum"] = np.zeros(size)
        D = self.dist_matrix()
        for t in self.scales:
            G = self.g_matrix(t)
            if want_nt:
                ball = D <= (a * t) * (1.0 - 1e-9)
                masked = np.where(ball, G, 0.0)
                np.maximum(acc["nontangential"], masked.max(axis=1),
                           out=acc["nontangential"])
            if want_pe:
                damp = (1.0 + D / t) ** (-l)
                gd = G * damp
                np.maximum(acc["peetre"], gd.max(axis=1), out=acc["peetre"])
                if want_nt:
                    np.maximum(acc["damped"], np.where(ball, gd, 0.0).max(axis=1),
                               out=acc["damped"])
            if want_inf:
                labels = self._cube_labels(b * t)
                order = np.argsort(labels, kind="stable")
                bounds = np.flatnonzero(np.diff(labels[order], prepend=-1))
                cube_min = np.minimum.reduceat(G[:, order], bounds, axis=1)
                ball_any = np.zeros((size, len(bounds)), dtype=bool)
                hit = np.maximum.reduceat(ball[:, order].astype(np.int8),
                                          bounds, axis=1)
                ball_any = hit > 0
                cand = np.where(ball_any, cube_min, 0.0)
                np.maximum(acc["infimum"], cand.max(axis=1), out=acc["infimum"])
        return acc

    def _cube_labels(self, s):
        """Integer label of the Q_s lattice cube containing each sample."""
        idx = np.floor(self.grid.points / s).astype(np.int64)
        if self.grid.n == 1:
            return idx[:, 0] - idx[:, 0].min()
        ix = idx[:, 0] - idx[:, 0].min()
        iy = idx[:, 1] - idx[:, 1].min()
        return ix * (iy.max() + 1) + iy


def _mode_from(weight_mode, p=None, family=None, weight=None):
    if weight_mode == "W":
        return WeightedMode(weight, p)
    if weight_mode == "A":
        return ReducingMode(family)
    raise PreconditionError(f"unknown weight mode {weight_mode!r}")


def radial_maximal(f, psi, weight_mode, p=None, weight=None, family=None,
                   scales=None):
    scales = scales or dyadic_scales(f.grid)
    ev = MaximalEvaluator(f, psi, _mode_from(weight_mode, p, family, weight), scales)
    return ev.radial()


def nontangential_maximal(f, psi, a, weight_mode, p=None, weight=None,
                          family=None, scales=None):
    scales = scales or dyadic_scales(f.grid)
    ev = MaximalEvaluator(f, psi, _mode_from(weight_mode, p, family, weight), scales)
    return ev.sweep(a=a)["nontangential"]


def nontangential_infimum_maximal(f, psi, a, b, family, scales=None):
    scales = scales or dyadic_scales(f.grid)
    for t in scales:
        ratio = b * t / f.grid.h
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise PreconditionError(f"cube scale b*t = {b*t} misaligned with grid")
    ev = MaximalEvaluator(f, psi, ReducingMode(family), scales)
    return ev.sweep(a=a, b=b)["infimum"]


def peetre_maximal(f, psi, l, weight_mode, p=None, weight=None, family=None,
                   scales=None):
    scales = scales or dyadic_scales(f.grid)
    ev = MaximalEvaluator(f, psi, _mode_from(weight_mode, p, family, weight), scales)
    return ev.sweep(l=l)["peetre"]


def grand_maximal(f, dictionary, variant, weight_mode, p=None, weight=None,
                  family=None, scales=None, a=1.0, l=None):
    """Max over dictionary members of the normalized single-psi variant.

    A lower bound for the supremum over the full S_N ball.
    """
    scales = scales or dyadic_scales(f.grid)
    mode = _mode_from(weight_mode, p, family, weight)
    out = np.zeros(f.grid.size)
    for tf, div in zip(dictionary.members, dictionary.divisors):
        ev = MaximalEvaluator(f, tf, mode, scales)
        if variant == "radial":
            vals = ev.radial()
        elif variant == "nontangential":
            vals = ev.sweep(a=a)["nontangential"]
        elif variant == "peetre":
            vals = ev.sweep(l=l)["peetre"]
        else:
            raise PreconditionError(f"unknown grand variant {variant!r}")
        np.maximum(out, vals / div, out=out)
    return out


def lp_quasinorm(values, grid, p):
    """(sum |g|^p h^n)^{1/p} of a scalar field."""
    if p <= 0:
        raise PreconditionError("p must be positive")
    return float(np.sum(np.abs(values) ** p) * grid.cell_volume) ** (1.0 / p)


def hardy_quasinorm(f, psi, weight, p, variant="radial", a=1.0, scales=None):
    """L^p quasi-norm of the radial maximal function: the H^p_W proxy."""
    if abs(psi.integral(f.grid.n)) < 1e-12:
        raise PreconditionError("psi must have nonzero integral")
    if variant == "radial":
        field = radial_maximal(f, psi, "W", p=p, weight=weight, scales=scales)
    elif variant == "nontangential":
        field = nontangential_maximal(f, psi, a, "W", p=p, weight=weight,
                                      scales=scales)
    else:
        raise PreconditionError(f"unknown variant {variant!r}")
    return lp_quasinorm(field, f.grid, p)


class ChainReport:
    def __init__(self):
        self.checks = {}
        self.violations = []

    def record(self, name, lhs, rhs):
        bad = np.flatnonzero(lhs > rhs)
        self.checks[name] = len(bad) == 0
        for i in bad[:10]:
            self.violations.append((name, int(i), float(lhs[i]), float(rhs[i])))

    @property
    def ok(self):
        return not self.violations


def chain_check(f, psi, config, mode, dictionary=None, scales=None):
    """Pointwise comparison chains between maximal variants, zero tolerance.

    All fields come from one evaluator (shared scales, shared ball samples,
    shared damping), so each inequality is a max over a nested term set:
      radial <= nontangential; infimum <= nontangential (reducing mode);
      ball-damped terms <= Peetre; nontangential <= (1+a)^l Peetre;
      radial / ||psi||_{S_N} <= grand; grand_N <= grand_N' for N' <= N.
    """
    grid = f.grid
    scales = scales or config.scales or dyadic_scales(grid)
    a = config.a
    l = config.resolve_l(grid.n)
    ev = MaximalEvaluator(f, psi, mode, scales)
    radial = ev.radial()
    want_b = config.b if mode.kind == "A" else None
    acc = ev.sweep(a=a, l=l, b=want_b)
    report = ChainReport()
    report.record("radial<=nontangential", radial, acc["nontangential"])
    report.record("damped<=peetre", acc["damped"], acc["peetre"])
    report.record("nontangential<=(1+a)^l*peetre",
                  acc["nontangential"], (1.0 + a) ** l * acc["peetre"])
    if mode.kind == "A":
        report.record("infimum<=nontangential", acc["infimum"],
                      acc["nontangential"])
    if dictionary is not None:
        kwargs = dict(p=getattr(mode, "p", None),
                      weight=getattr(mode, "weight", None),
                      family=getattr(mode, "family", None))
        grand = grand_maximal(f, dictionary, "radial", mode.kind,
                              scales=scales, **kwargs)
        s_psi = psi.seminorm(dictionary.N, grid.n)
        report.record("radial/seminorm<=grand", radial / s_psi, grand)
        smaller = SchwartzDictionary(dictionary.members, max(dictionary.N - 2, 0),
                                     grid.n)
        grand_small = grand_maximal(f, smaller, "radial", mode.kind,
                                    scales=scales, **kwargs)
        report.record("grand_N<=grand_smallN", grand, grand_small)
    return report
