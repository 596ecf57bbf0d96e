"""Independent scalar (m = 1) reference implementations.

Deliberately written as plain loops against raw arrays, sharing no code
with the matrix pipeline, so that agreement within 1e-8 is meaningful
cross-validation rather than a tautology.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import PreconditionError


def _require_scalar(weight):
    if weight.m != 1:
        raise PreconditionError("scalar oracle needs m = 1")
    return weight.values[:, 0, 0].real.copy()


def scalar_a1_characteristic(weight, cubes):
    """sup_Q (avg_Q w) * max_Q (1/w), the classical A_1 quantity."""
    w = _require_scalar(weight)
    best = 0.0
    for cube in cubes:
        idx = weight.grid.cube_indices(cube)
        if idx.size == 0:
            continue
        avg = sum(w[i] for i in idx) / len(idx)
        best = max(best, max(avg / w[i] for i in idx))
    return best


def scalar_ap_characteristic(weight, p, cubes):
    """Classical scalar A_p quantity for p > 1 on the grid."""
    w = _require_scalar(weight)
    if p <= 1:
        return scalar_a1_characteristic(weight, cubes) if p == 1 else \
            _scalar_ap_small(weight, p, cubes)
    best = 0.0
    for cube in cubes:
        idx = weight.grid.cube_indices(cube)
        if idx.size == 0:
            continue
        pprime = p / (p - 1)
        total = 0.0
        for i in idx:
            inner = sum((w[i] / w[j]) ** (pprime / p) for j in idx) / len(idx)
            total += inner ** (p / pprime)
        best = max(best, total / len(idx))
    return best


def _scalar_ap_small(weight, p, cubes):
    w = _require_scalar(weight)
    best = 0.0
    for cube in cubes:
        idx = weight.grid.cube_indices(cube)
        if idx.size == 0:
            continue
        for j in idx:
            avg = sum((w[i] / w[j]) for i in idx) / len(idx)
            best = max(best, avg)
    return best


def scalar_ainfty_characteristic(weight, p, cubes):
    w = _require_scalar(weight)
    best = 0.0
    for cube in cubes:
        idx = weight.grid.cube_indices(cube)
        if idx.size == 0:
            continue
        acc = 0.0
        for j in idx:
            inner = sum(w[i] / w[j] for i in idx) / len(idx)
            acc += math.log(inner)
        best = max(best, math.exp(acc / len(idx)))
    return best


def scalar_reducing_value(weight, p, cube):
    """(avg_Q w)^{1/p}: the scalar reducing operator."""
    w = _require_scalar(weight)
    idx = weight.grid.cube_indices(cube)
    return (sum(w[i] for i in idx) / len(idx)) ** (1.0 / p)


def scalar_gamma_field(weight, p, t):
    """(w(x) / avg_Q w)^{1/p} with Q the t-lattice cube of x."""
    w = _require_scalar(weight)
    grid = weight.grid
    out = np.empty(grid.size)
    for i in range(grid.size):
        x = grid.points[i]
        cube = grid.cube_of_point(x, t)
        idx = grid.cube_indices(cube)
        avg = sum(w[j] for j in idx) / len(idx)
        out[i] = (w[i] / avg) ** (1.0 / p)
    return out


def scalar_dyadic_average(field, grid, t):
    flat = np.asarray(field, dtype=float).ravel()
    out = np.empty_like(flat)
    for cube in grid.dyadic_cubes(t):
        idx = grid.cube_indices(cube)
        if idx.size:
            mean = sum(flat[i] for i in idx) / len(idx)
            for i in idx:
                out[i] = mean
    return out


def scalar_radial_maximal(weight, p, f_values, psi, scales):
    """Brute-force w^{1/p}(x) sup_t |psi_t * f(x)| with direct O(N^2) sums."""
    w = _require_scalar(weight)
    grid = weight.grid
    pts = grid.points
    out = np.zeros(grid.size)
    fv = np.asarray(f_values, dtype=complex).reshape(grid.size)
    for t in scales:
        kern_cache = {}
        for i in range(grid.size):
            acc = 0.0 + 0.0j
            for jj in range(grid.size):
                d = pts[i] - pts[jj]
                key = tuple(np.round(d / grid.h).astype(int))
                if key not in kern_cache:
                    kern_cache[key] = float(psi(d.reshape(1, -1) / t)[0]) / t ** grid.n
                kv = kern_cache[key]
                if kv != 0.0:
                    acc += kv * fv[jj]
            val = w[i] ** (1.0 / p) * abs(acc) * grid.cell_volume
            out[i] = max(out[i], val)
    return out


def whitney_1d_oracle(intervals, max_level):
    """Maximal dyadic intervals [k 2^-j, (k+1) 2^-j] inside a 1D open set
    with l <= dist(I, complement) <= 4l; the standard selection, done with
    Fractions-free integer arithmetic at the 2^-max_level lattice.
    """
    unit = 1 << max_level
    segs = [(int(round(a * unit)), int(round(b * unit))) for a, b in intervals]

    def dist_to_complement(lo, hi):
        best = None
        for a, b in segs:
            if lo >= a and hi <= b:
                cand = min(lo - a, b - hi)
                best = cand if best is None else min(best, cand)
        return best  # None means not inside

    chosen = []
    for level in range(0, max_level + 1):
        size = 1 << (max_level - level)
        lo_all = min(a for a, _ in segs)
        hi_all = max(b for _, b in segs)
        k0 = lo_all // size
        k1 = -(-hi_all // size)
        for k in range(k0, k1):
            lo, hi = k * size, (k + 1) * size
            d = dist_to_complement(lo, hi)
            if d is None:
                continue
            if size <= d <= 4 * size:
                if not any(lo >= clo and hi <= chi for clo, chi in chosen):
                    chosen.append((lo, hi))
    return [(lo / unit, hi / unit) for lo, hi in chosen]


def gram_solve_projection(points, weights, values, degree):
    """Weighted polynomial fit by explicit normal equations (oracle)."""
    pts = np.atleast_2d(points)
    if pts.shape[1] == 1:
        monos = [pts[:, 0] ** k for k in range(degree + 1)]
    else:
        monos = [pts[:, 0] ** i * pts[:, 1] ** j
                 for tot in range(degree + 1) for i in range(tot + 1)
                 for j in [tot - i]]
    phi = np.stack(monos, axis=1)
    gram = phi.T @ (phi * weights[:, None])
    rhs = phi.T @ (values * weights[:, None])
    coef = np.linalg.solve(gram, rhs)
    return phi @ coef
