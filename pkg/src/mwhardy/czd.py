"""Partition of unity on Whitney covers and the weighted CZ decomposition.

The level set is a union of grid cells, its Whitney cover is truncated
deep enough that every grid point of the set is covered, and the partition
is normalized pointwise, so the splitting f = g + sum b_k is a float-exact
grid identity. Vanishing moments of the bad parts are inherited from the
weighted polynomial projections up to quadrature error and are measured,
not assumed.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegenerateMeasureError, DomainError, PreconditionError
from .geometry import OpenBoxUnion, whitney_decompose
from .grid import Cube
from .maximal import (MaximalEvaluator, ReducingMode, dyadic_scales,
                      grand_maximal, radial_maximal)

_RAMP_FRACTION = 1.0 / 32.0  # ramp width over cube edge; dilate 17/16


def _smoothstep(u):
    """Quintic C^2 step: 1 at u<=0 decaying to 0 at u>=1."""
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


def multi_indices(n, s):
    if n == 1:
        return [(k,) for k in range(s + 1)]
    return [(i, j) for total in range(s + 1) for i in range(total + 1)
            for j in [total - i]]


def moment_scale(values, grid, cube, gamma):
    """Natural size of the gamma moment: ||b||_1 (l(Q) + |c_Q|)^{|gamma|}."""
    l1 = grid.integrate(np.linalg.norm(values, axis=1))
    return l1 * (cube.edge + float(np.linalg.norm(cube.center))) ** sum(gamma)


def moments(values, grid, s):
    """h^n sum x^gamma v(x) for all |gamma| <= s; dict gamma -> C^m vector."""
    out = {}
    for gamma in multi_indices(grid.n, s):
        mono = np.ones(grid.size)
        for axis, power in enumerate(gamma):
            if power:
                mono = mono * grid.points[:, axis] ** power
        out[gamma] = np.sum(values * mono[:, None], axis=0) * grid.cell_volume
    return out


def level_set(f, psi_or_dict, family, alpha, scales=None):
    """Grid mask where the reducing-operator grand maximal proxy exceeds alpha.

    Returns (mask, proxy). The complement satisfies proxy <= alpha by
    construction of the mask.
    """
    if alpha <= 0:
        raise PreconditionError("alpha must be positive")
    scales = scales or dyadic_scales(f.grid)
    proxy = maximal_proxy(f, psi_or_dict, family, scales)
    return proxy > alpha, proxy


def maximal_proxy(f, psi_or_dict, family, scales=None):
    scales = scales or dyadic_scales(f.grid)
    if hasattr(psi_or_dict, "members"):
        return grand_maximal(f, psi_or_dict, "radial", "A", family=family,
                             scales=scales)
    return radial_maximal(f, psi_or_dict, "A", family=family, scales=scales)


def mask_to_open_set(mask, grid):
    """The union of grid cells of a boolean mask as an exact box union."""
    if not np.any(mask):
        raise DomainError("empty mask")
    r = int(round(np.log2(1.0 / grid.h)))
    if abs(2.0 ** -r - grid.h) > 0:
        raise DomainError("grid spacing must be a dyadic power for masks")
    base = int(round(-grid.L * 2 ** r))
    cells = []
    idx = np.nonzero(mask.ravel())[0]
    for flat in idx:
        if grid.n == 1:
            cells.append((base + int(flat),))
        else:
            i, j = divmod(int(flat), grid.npts_axis)
            cells.append((base + i, base + j))
    return OpenBoxUnion.from_cells(grid.n, cells, r), r


class PartitionOfUnity:
    """Normalized plateau bumps eta_k on the Whitney cubes of a level set."""

    def __init__(self, cover, grid, mask):
        self.cover = cover
        self.grid = grid
        self.mask = mask.ravel()
        cubes = cover.float_cubes()
        raw = []
        kept = []
        for cube in cubes:
            vals = self._plateau(cube)
            if np.any(vals > 0):
                raw.append(vals)
                kept.append(cube)
        if not raw:
            raise DomainError("no Whitney cube reaches a grid sample")
        raw = np.stack(raw, axis=0)
        raw[:, ~self.mask] = 0.0
        total = raw.sum(axis=0)
        uncovered = self.mask & (total <= 0)
        if np.any(uncovered):
            raise DomainError("grid point of the set not covered by any cube; "
                              "increase the Whitney depth")
        safe = np.where(total > 0, total, 1.0)
        self.cubes = kept
        self.bumps = raw / safe
        self.integrals = self.bumps.sum(axis=1) * grid.cell_volume

    def _plateau(self, cube):
        dilate = 1.0 + 2 * _RAMP_FRACTION
        w = _RAMP_FRACTION * cube.edge
        vals = np.ones(self.grid.size)
        for axis in range(self.grid.n):
            x = self.grid.points[:, axis]
            lo, hi = cube.lo[axis], cube.hi[axis]
            below = _smoothstep((lo - x) / w)
            above = _smoothstep((x - hi) / w)
            vals = vals * np.where(x < lo, below, np.where(x > hi, above, 1.0))
        # hard support cutoff at the closed dilate
        half = dilate * cube.edge / 2
        for axis in range(self.grid.n):
            x = self.grid.points[:, axis]
            vals = vals * ((x >= cube.center[axis] - half)
                           & (x <= cube.center[axis] + half))
        return vals

    def validate(self):
        total = self.bumps.sum(axis=0)
        report = {
            "sum_on_set": float(np.max(np.abs(total[self.mask] - 1.0))),
            "sum_off_set": float(np.max(np.abs(total[~self.mask])))
            if np.any(~self.mask) else 0.0,
            "range_ok": bool(np.all((self.bumps >= 0) & (self.bumps <= 1 + 1e-12))),
        }
        c_der = 0.0
        shape = (self.grid.npts_axis,) * self.grid.n
        for cube, vals in zip(self.cubes, self.bumps):
            arr = vals.reshape(shape)
            for axis in range(self.grid.n):
                d1 = np.gradient(arr, self.grid.h, axis=axis)
                c_der = max(c_der, float(np.max(np.abs(d1))) * cube.edge)
        report["derivative_constant"] = c_der
        ratios = [float(i) / cube.volume
                  for i, cube in zip(self.integrals, self.cubes) if i > 0]
        report["integral_ratio"] = (min(ratios), max(ratios)) if ratios else (0, 0)
        return report


class PolynomialProjector:
    """Orthonormal polynomials on Q*_k for the weighted measure eta~_k dx."""

    def __init__(self, grid, cube, degree, eta, strict=True):
        self.grid = grid
        self.cube = cube
        self.degree = degree
        idx = np.nonzero(eta > 0)[0]
        if idx.size == 0:
            raise DegenerateMeasureError("partition bump has no samples")
        self.idx = idx
        integral = float(np.sum(eta[idx])) * grid.cell_volume
        self.weights = eta[idx] * grid.cell_volume / integral  # eta~ h^n, sums to 1
        self.indices = multi_indices(grid.n, degree)
        pts = (grid.points[idx] - np.asarray(cube.center)) / cube.edge
        phi = np.stack([np.prod(pts ** np.asarray(g), axis=1)
                        for g in self.indices], axis=1)
        wsqrt = np.sqrt(self.weights)
        q, r = np.linalg.qr(phi * wsqrt[:, None])
        diag = np.abs(np.diag(r))
        self.rank = int(np.sum(diag > 1e-13 * max(diag.max(), 1e-300)))
        if self.rank < len(self.indices):
            if strict:
                raise DegenerateMeasureError(
                    f"degree {degree} basis has rank {self.rank} on "
                    f"{idx.size} samples")
            q = q[:, :self.rank]
            r = r[:self.rank, :self.rank]
        cond = diag.max() / max(diag.min(), 1e-300) if self.rank == len(diag) else np.inf
        if strict and cond > 1e10:
            raise DegenerateMeasureError(f"Gram condition {cond:.2e} exceeds 1e10")
        self.basis_values = q / wsqrt[:, None]  # e_j at the samples
        self._rinv = np.linalg.inv(r) if self.rank == r.shape[0] else None

    def gram_deviation(self):
        g = np.einsum("ki,k,kj->ij", self.basis_values, self.weights,
                      self.basis_values)
        return float(np.max(np.abs(g - np.eye(self.basis_values.shape[1]))))

    def coefficients(self, values):
        """<f, e_j eta~> per component for a (size, m) field."""
        return np.einsum("ki,k,kc->ic", self.basis_values, self.weights,
                         values[self.idx])

    def project(self, values):
        """P_k f on the full grid (nonzero on the samples only)."""
        coef = self.coefficients(values)
        out = np.zeros_like(values)
        out[self.idx] = self.basis_values @ coef
        return out, coef

    def monomial_coefficients(self, coef):
        """Coefficients in the scaled monomial basis ((x-c)/l)^gamma."""
        if self._rinv is None:
            return None
        return self._rinv @ coef


def build_partition(cover, grid, mask):
    if not cover.cubes:
        raise DomainError("degenerate cover")
    return PartitionOfUnity(cover, grid, mask)


def project_polynomial(values, projector):
    """Spec-level wrapper: coefficients plus evaluated polynomial field."""
    field, coef = projector.project(values)
    return coef, field


class CZDecomposition:
    def __init__(self, alpha, mask, proxy, cover, partition, good, bads,
                 goods, cubes_star, diagnostics):
        self.alpha = alpha
        self.mask = mask
        self.proxy = proxy
        self.cover = cover
        self.partition = partition
        self.g = good            # (size, m) values
        self.b_parts = bads      # list of (size, m) values
        self.g_parts = goods
        self.cubes_star = cubes_star
        self.diagnostics = diagnostics

    @property
    def b_total(self):
        if not self.b_parts:
            return np.zeros_like(self.g)
        return np.sum(self.b_parts, axis=0)


def whitney_depth(grid):
    """Truncation level such that no grid point stays uncovered.

    Points of the mask sit at least h/2 from the complement while uncovered
    points are within 3 sqrt(n) 2^{-max_level} of it.
    """
    r = int(round(np.log2(1.0 / grid.h)))
    extra = 3 if grid.n == 1 else 5
    return r + extra


def cz_decompose(f, weight, p, family, alpha, s, psi, dictionary=None,
                 proxy=None, scales=None, compute_bad_energy=True):
    """Split f = g + sum_k b_k at level alpha over the maximal level set.

    b_k = (f - P_k f) eta_k and g_k = (P_k f) eta_k on the Whitney cubes of
    the level set; moments, good-part bounds, and bad-part energies are
    measured and reported in diagnostics.
    """
    grid = f.grid
    scales = scales or dyadic_scales(grid)
    hypothesis_floor = grid.n * (1.0 / p - 1.0) - 1.0
    if s <= hypothesis_floor:
        raise PreconditionError(
            f"degree {s} too small: needs s > n(1/p-1) - 1 = {hypothesis_floor}")
    if proxy is None:
        proxy = maximal_proxy(f, dictionary if dictionary is not None else psi,
                              family, scales)
    mask = proxy > alpha
    diagnostics = {"alpha": alpha, "mask_measure": float(np.sum(mask)) * grid.cell_volume}
    if not np.any(mask):
        return CZDecomposition(alpha, mask, proxy, None, None,
                               f.values.copy(), [], [], [], diagnostics)
    if np.all(mask):
        warnings.warn("level set covers the whole sampled domain; the "
                      "decomposition is domain-truncated", stacklevel=2)

    omega, _ = mask_to_open_set(mask, grid)
    cover = whitney_decompose(omega, max_level=whitney_depth(grid))
    partition = build_partition(cover, grid, mask)

    a_star = 9.0 / 8.0
    bads, goods, cubes_star = [], [], []
    moment_rows = []
    good_bound = 0.0
    bad_energy = []
    for cube, eta in zip(partition.cubes, partition.bumps):
        qstar = cube.dilate(a_star)
        projector = PolynomialProjector(grid, qstar, s, eta, strict=False)
        pf, _ = projector.project(f.values)
        b_k = (f.values - pf) * eta[:, None]
        g_k = pf * eta[:, None]
        bads.append(b_k)
        goods.append(g_k)
        cubes_star.append(qstar)

        mom = moments(b_k, grid, s)
        worst = 0.0
        for gamma, vec in mom.items():
            scale = moment_scale(b_k, grid, cube, gamma)
            if scale > 0:
                worst = max(worst, float(np.linalg.norm(vec)) / scale)
        moment_rows.append(worst)

        a_q = family.operator(qstar)
        sup_val = float(np.max(np.linalg.norm(
            np.einsum("ij,kj->ki", a_q, g_k), axis=1)))
        good_bound = max(good_bound, sup_val / alpha)

        if compute_bad_energy:
            from .maximal import VectorField, WeightedMode
            bf = VectorField(grid, b_k)
            ev = MaximalEvaluator(bf, psi, WeightedMode(weight, p), scales)
            num = np.sum(ev.radial() ** p) * grid.cell_volume
            idx_star = grid.cube_indices(qstar)
            den = np.sum(proxy.ravel()[idx_star] ** p) * grid.cell_volume
            bad_energy.append(num / den if den > 0 else np.inf)

    good = f.values - np.sum(bads, axis=0)
    on_set = mask.ravel()
    g_sum = np.sum(goods, axis=0)
    recon = float(np.max(np.linalg.norm(
        (f.values - g_sum - np.sum(bads, axis=0))[on_set], axis=1), initial=0.0))
    off_dev = float(np.max(np.linalg.norm(
        np.sum(bads, axis=0)[~on_set], axis=1), initial=0.0)) if np.any(~on_set) else 0.0
    diagnostics.update({
        "moment_residual_max": max(moment_rows) if moment_rows else 0.0,
        "moment_rows": moment_rows,
        "good_bound_constant": good_bound,
        "bad_energy_ratios": bad_energy,
        "reconstruction_residual_on_set": recon,
        "bad_support_leak": off_dev,
        "partition": partition.validate(),
        "n_cubes": len(partition.cubes),
    })
    return CZDecomposition(alpha, mask, proxy, cover, partition, good, bads,
                           goods, cubes_star, diagnostics)
