"""Matrix weights, Muckenhoupt characteristics, reducing operators.

All integrals are midpoint Riemann sums on the weight's uniform grid; cube
families are grid-aligned cubes with dyadic edge lengths, so per-cube
averages are float-exact sums. Essential suprema and infima are maxima and
minima over sample points.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from . import hermitian
from .errors import (AlignmentError, ConstructionError, DomainError,
                     InsufficientRangeError, PreconditionError,
                     SingularWeightError)
from .grid import Cube, Grid

INF_CHARACTERISTIC = 1e6


# ----------------------------------------------------------------------
# weight families

class MatrixWeight:
    """Field of Hermitian positive-definite m x m matrices on [-L, L]^n."""

    def __init__(self, n, m, L, h, sampler, family="user-grid", params=None):
        if m < 1 or m > hermitian.MAX_DIM:
            raise DomainError(f"m must be in 1..{hermitian.MAX_DIM}")
        self.grid = Grid(n, L, h)
        self.n = n
        self.m = m
        self.family = family
        self.params = dict(params or {})
        self.sampler = sampler
        vals = np.asarray([sampler(x) for x in self.grid.points], dtype=complex)
        vals = vals.reshape(self.grid.size, m, m)
        if not np.all(np.isfinite(vals)):
            raise SingularWeightError("non-finite weight sample")
        herm_dev = np.max(np.abs(vals - np.swapaxes(vals, -1, -2).conj()))
        if herm_dev > 1e-12 * (1 + np.max(np.abs(vals))):
            raise SingularWeightError("weight samples are not Hermitian")
        lam = np.linalg.eigvalsh(vals)
        if np.min(lam) <= 0:
            raise SingularWeightError("weight sample not positive definite")
        self.values = vals
        self._powers = {}

    def power(self, alpha):
        """Grid field of W(x)^alpha, cached per exponent."""
        key = round(float(alpha), 12)
        if key not in self._powers:
            if self.m == 1:
                self._powers[key] = self.values.real ** float(alpha) + 0j
            else:
                self._powers[key] = hermitian.frac_power_batch(self.values, alpha)
        return self._powers[key]

    def resampled(self, h):
        """Same analytic family at a different spacing (refinement studies)."""
        return MatrixWeight(self.n, self.m, self.grid.L, h, self.sampler,
                            family=self.family, params=self.params)


def identity_weight(n, m, L, h):
    eye = np.eye(m, dtype=complex)
    return MatrixWeight(n, m, L, h, lambda x: eye, family="identity")


def scalar_power_weight(n, L, h, alpha):
    def sampler(x):
        r = float(np.linalg.norm(x))
        return np.array([[r ** alpha]], dtype=complex)
    return MatrixWeight(n, 1, L, h, sampler, family="scalar-power",
                        params={"alpha": alpha})


def step_weight(L, h, breaks, values):
    """Piecewise-constant scalar weight on the line; breaks sorted ascending."""
    breaks = [float(b) for b in breaks]
    values = [float(v) for v in values]
    if len(values) != len(breaks) + 1:
        raise DomainError("need len(values) == len(breaks) + 1")

    def sampler(x):
        v = values[int(np.searchsorted(breaks, float(x[0]), side="right"))]
        return np.array([[v]], dtype=complex)
    return MatrixWeight(1, 1, L, h, sampler, family="step",
                        params={"breaks": breaks, "values": values})


def rotating_weight(n, L, h, alpha1, alpha2, theta="linear", theta_scale=1.0):
    """2x2 weight R(theta(x)) diag(|x|^a1, |x|^a2) R(theta(x))^T."""
    def sampler(x):
        r = float(np.linalg.norm(x))
        if theta == "linear":
            ang = theta_scale * float(np.sum(x))
        elif theta == "constant":
            ang = theta_scale
        else:
            raise DomainError(f"unknown theta profile {theta!r}")
        c, s = np.cos(ang), np.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        diag = np.diag([r ** alpha1, r ** alpha2])
        return (rot @ diag @ rot.T).astype(complex)
    return MatrixWeight(n, 2, L, h, sampler, family="rotating-2x2",
                        params={"alpha1": alpha1, "alpha2": alpha2,
                                "theta": theta, "theta_scale": theta_scale})


def constant_weight(n, L, h, matrix):
    mat = np.asarray(matrix, dtype=complex)
    return MatrixWeight(n, mat.shape[0], L, h, lambda x: mat, family="constant")


# ----------------------------------------------------------------------
# characteristics

class CharacteristicReport:
    """Supremum of a cube-wise Muckenhoupt quantity over a cube family."""

    def __init__(self, kind, p, value, per_cube, infinite=False):
        self.kind = kind
        self.p = p
        self.infinite = infinite or value > INF_CHARACTERISTIC
        self.value = np.inf if self.infinite else value
        self.per_cube = per_cube  # list of (cube, value) sorted descending
        finite_val = per_cube[0][1] if per_cube else value
        if finite_val < 1 - 1e-9:
            raise ConstructionError(
                f"characteristic {finite_val} below 1; quadrature is inconsistent")

    def worst(self, count=5):
        return self.per_cube[:count]


def _pair_norms_p(weight, p, idx_x, idx_y):
    """||W^{1/p}(x) W^{-1/p}(y)||^p for all sample pairs; shape (len_x, len_y)."""
    if weight.m == 1:
        wx = weight.values[idx_x, 0, 0].real
        wy = weight.values[idx_y, 0, 0].real
        return wx[:, None] / wy[None, :]
    wp = weight.power(1.0 / p)[idx_x]
    wm = weight.power(-1.0 / p)[idx_y]
    prod = np.einsum("aij,bjk->abik", wp, wm)
    return hermitian.op_norm_batch(prod) ** p


def ap_characteristic(weight, p, cubes):
    """Muckenhoupt A_p characteristic over a cube family.

    p <= 1: sup_Q max_{y in Q} avg_x ||W^{1/p}(x) W^{-1/p}(y)||^p.
    p >  1: sup_Q avg_x [avg_y ||...||^{p'}]^{p/p'}.
    """
    if p <= 0:
        raise PreconditionError("p must be positive")
    per_cube = []
    for cube in cubes:
        idx = weight.grid.cube_indices(cube)
        if idx.size == 0:
            continue
        if p <= 1:
            norms = _pair_norms_p(weight, p, idx, idx)
            val = float(np.max(np.mean(norms, axis=0)))
        else:
            pprime = p / (p - 1)
            normsq = _pair_norms_p(weight, p, idx, idx) ** (pprime / p)
            inner = np.mean(normsq, axis=1) ** (p / pprime)
            val = float(np.mean(inner))
        per_cube.append((cube, val))
    if not per_cube:
        raise DomainError("no cube of the family contains a sample")
    per_cube.sort(key=lambda cv: -cv[1])
    return CharacteristicReport("A_p", p, per_cube[0][1], per_cube)


def ap_infty_characteristic(weight, p, cubes):
    """A_{p,infty} characteristic: log-average in y of the inner average."""
    if p <= 0:
        raise PreconditionError("p must be positive")
    per_cube = []
    for cube in cubes:
        idx = weight.grid.cube_indices(cube)
        if idx.size == 0:
            continue
        inner = np.mean(_pair_norms_p(weight, p, idx, idx), axis=0)
        if np.any(inner <= 0):
            raise SingularWeightError("vanishing inner average")
        val = float(np.exp(np.mean(np.log(inner))))
        per_cube.append((cube, val))
    if not per_cube:
        raise DomainError("no cube of the family contains a sample")
    per_cube.sort(key=lambda cv: -cv[1])
    return CharacteristicReport("A_p_infty", p, per_cube[0][1], per_cube)


# ----------------------------------------------------------------------
# reducing operators

def _sphere_directions(m, count, seed):
    """Deterministic low-discrepancy unit directions on the sphere of C^m."""
    sob = qmc.Sobol(d=2 * m, scramble=True, seed=seed)
    u = sob.random(count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    from scipy.special import ndtri
    g = ndtri(u)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[:, :m] + 1j * g[:, m:]


def _direction_averages(weight, p, idx, dirs):
    """rho(z) = [avg_E |W^{1/p}(x) z|^p]^{1/p} for each direction z."""
    wp = weight.power(1.0 / p)[idx]
    vec = np.einsum("kij,dj->kdi", wp, dirs)
    mags = np.linalg.norm(vec, axis=2)
    return np.mean(mags ** p, axis=0) ** (1.0 / p)


def _hermitian_basis(m):
    basis = []
    for i in range(m):
        b = np.zeros((m, m), dtype=complex)
        b[i, i] = 1.0
        basis.append(b)
    for i in range(m):
        for j in range(i + 1, m):
            b = np.zeros((m, m), dtype=complex)
            b[i, j] = b[j, i] = 1.0
            basis.append(b)
            b = np.zeros((m, m), dtype=complex)
            b[i, j] = 1j
            b[j, i] = -1j
            basis.append(b)
    return basis


def reducing_operator(weight, p, cube, strategy="auto", seed=0, n_directions=None):
    """Positive-definite matrix A_E with |A_E z| comparable to the p-average.

    Returns (A_E, (c_low, c_high)) where the constants are realized on an
    independent validation batch of directions.
    """
    grid = weight.grid
    idx = grid.cube_indices(cube)
    if idx.size == 0:
        raise DomainError(f"cube {cube} contains no sample")
    m = weight.m
    if strategy == "auto":
        strategy = ("exact-scalar" if m == 1 else
                    "exact-p2" if abs(p - 2.0) < 1e-14 else "direction-fit")

    if strategy == "exact-scalar":
        if m != 1:
            raise PreconditionError("exact-scalar requires m = 1")
        mean = float(np.mean(weight.values[idx, 0, 0].real))
        a = np.array([[mean ** (1.0 / p)]], dtype=complex)
    elif strategy == "exact-p2":
        if abs(p - 2.0) > 1e-14:
            raise PreconditionError("exact-p2 requires p = 2")
        mean = np.mean(weight.values[idx], axis=0)
        a = hermitian.frac_power(mean, 0.5)
    elif strategy == "direction-fit":
        count = n_directions or 64 * m * m
        dirs = _sphere_directions(m, count, seed)
        rho = _direction_averages(weight, p, idx, dirs)
        basis = _hermitian_basis(m)
        design = np.stack([np.einsum("di,ij,dj->d", dirs.conj(), b, dirs).real
                           for b in basis], axis=1)
        theta, *_ = np.linalg.lstsq(design, rho ** 2, rcond=None)
        hmat = sum(t * b for t, b in zip(theta, basis))
        lam, u = np.linalg.eigh(hmat)
        floor = 1e-12 * max(float(np.trace(hmat).real), 1e-300)
        lam = np.maximum(lam, floor)
        a = (u * np.sqrt(lam)) @ u.conj().T
        a = 0.5 * (a + a.conj().T)
    else:
        raise PreconditionError(f"unknown strategy {strategy!r}")

    n_val = 8 if strategy.startswith("exact") else (n_directions or 64 * m * m)
    val_dirs = _sphere_directions(m, n_val, seed + 1)
    rho_val = _direction_averages(weight, p, idx, val_dirs)
    az = np.abs(val_dirs @ a.T.conj()) if m == 1 else np.linalg.norm(
        np.einsum("ij,dj->di", a, val_dirs), axis=1)
    az = az.reshape(-1)
    ratios = rho_val / az
    c_low, c_high = float(np.min(ratios)), float(np.max(ratios))
    if c_high / max(c_low, 1e-300) > 100.0:
        raise ConstructionError(
            f"reducing validation spread {c_high/c_low:.2e} exceeds 100")
    return a, (c_low, c_high)


def reducing_matrix_equivalence(a_q, weight, p, cube, test_matrix):
    """||A_Q M|| over the p-average of ||W^{1/p}(x) M||; the matrix criterion."""
    idx = weight.grid.cube_indices(cube)
    if idx.size == 0:
        raise DomainError("cube contains no sample")
    m_arr = np.asarray(test_matrix, dtype=complex)
    wp = weight.power(1.0 / p)[idx]
    denom = np.mean(hermitian.op_norm_batch(wp @ m_arr) ** p) ** (1.0 / p)
    numer = hermitian.op_norm(np.asarray(a_q) @ m_arr)
    if denom == 0:
        raise DomainError("test matrix annihilated by the weight")
    return numer / denom


class ReducingFamily:
    """Cube-indexed reducing operators A_Q with realized constants, cached."""

    def __init__(self, weight, p, strategy="auto", seed=0, n_directions=None):
        self.weight = weight
        self.p = float(p)
        self.strategy = strategy
        self.seed = seed
        self.n_directions = n_directions
        self._cache = {}
        self._field_cache = {}
        self.constants = {}

    @property
    def grid(self):
        return self.weight.grid

    @property
    def m(self):
        return self.weight.m

    def operator(self, cube):
        key = cube.key()
        if key not in self._cache:
            a, consts = reducing_operator(self.weight, self.p, cube,
                                          strategy=self.strategy, seed=self.seed,
                                          n_directions=self.n_directions)
            self._cache[key] = a
            self.constants[key] = consts
        return self._cache[key]

    def matrix_field(self, t):
        """A_t(x): the piecewise field sum_{Q in Q_t} A_Q 1_Q on the grid."""
        key = round(float(t), 12)
        if key not in self._field_cache:
            grid = self.grid
            field = np.empty((grid.size, self.m, self.m), dtype=complex)
            inv = np.empty_like(field)
            for cube in grid.dyadic_cubes(t):
                idx = grid.cube_indices(cube)
                if idx.size == 0:
                    continue
                a = self.operator(cube)
                field[idx] = a
                inv[idx] = np.linalg.inv(a)
            self._field_cache[key] = (field, inv)
        return self._field_cache[key]

    def apply_field(self, t, vec_values):
        """Pointwise A_t(x) v(x) for a (size, m) complex field."""
        field, _ = self.matrix_field(t)
        return np.einsum("kij,kj->ki", field, vec_values)


def gamma_field(weight, p, family, t):
    """gamma_t(x) = ||W^{1/p}(x) A_t(x)^{-1}|| on the grid."""
    _, inv = family.matrix_field(t)
    if weight.m == 1:
        return np.abs(weight.power(1.0 / p)[:, 0, 0] * inv[:, 0, 0])
    prod = np.einsum("kij,kjl->kil", weight.power(1.0 / p), inv)
    return hermitian.op_norm_batch(prod)


def doubling_order_check(op_map, cubes, beta1, beta2, omega_exp):
    """Smallest C with ||A_Q A_R^{-1}|| <= C max{(lR/lQ)^b1,(lQ/lR)^b2}(1+dist)^w.

    op_map maps a cube to its matrix; returns (C, (Q*, R*)) at the maximum.
    """
    mats = [np.asarray(op_map(c), dtype=complex) for c in cubes]
    invs = [np.linalg.inv(a) for a in mats]
    best = 0.0
    arg = (None, None)
    for i, q in enumerate(cubes):
        for j, r in enumerate(cubes):
            lhs = hermitian.op_norm(mats[i] @ invs[j])
            lq, lr = q.edge, r.edge
            shape = max((lr / lq) ** beta1, (lq / lr) ** beta2)
            dist = np.linalg.norm(np.subtract(q.center, r.center))
            shape *= (1.0 + dist / max(lq, lr)) ** omega_exp
            ratio = lhs / shape
            if ratio > best:
                best = ratio
                arg = (q, r)
    return best, arg


# ----------------------------------------------------------------------
# dimensions and reverse Hoelder

class DimensionEstimate:
    def __init__(self, d_lower_fit, d_upper_fit, residual_lower, residual_upper,
                 lambdas, table):
        self.d_lower_fit = d_lower_fit
        self.d_upper_fit = d_upper_fit
        self.residual_lower = residual_lower
        self.residual_upper = residual_upper
        self.lambdas = list(lambdas)
        self.table = table  # lambda -> (lower_value, upper_value)


def _log_average_quantities(weight, p, cube, lam):
    grid = weight.grid
    big = cube.dilate(lam)
    if any(lo < -grid.L - 1e-12 or hi > grid.L + 1e-12
           for lo, hi in zip(big.lo, big.hi)):
        return None
    idx_q = grid.cube_indices(cube)
    idx_l = grid.cube_indices(big)
    if idx_q.size == 0 or idx_l.size == 0:
        return None
    norms_lower = _pair_norms_p(weight, p, idx_q, idx_l)
    inner_lower = np.mean(norms_lower, axis=0)          # avg over x in Q
    lower = float(np.exp(np.mean(np.log(inner_lower))))  # log-avg over y in lam Q
    norms_upper = _pair_norms_p(weight, p, idx_l, idx_q)
    inner_upper = np.mean(norms_upper, axis=0)          # avg over x in lam Q
    upper = float(np.exp(np.mean(np.log(inner_upper))))  # log-avg over y in Q
    return lower, upper


def dimension_estimates(weight, p, lambdas, cubes):
    """Log-log slopes of the dilated log-average quantities against lambda."""
    lambdas = sorted(float(x) for x in lambdas)
    table = {}
    for lam in lambdas:
        vals = [q for q in (_log_average_quantities(weight, p, c, lam)
                            for c in cubes) if q is not None]
        if vals:
            table[lam] = (max(v[0] for v in vals), max(v[1] for v in vals))
    if len(table) < 4:
        raise InsufficientRangeError(
            f"only {len(table)} dilation levels fit in the domain; need >= 4")
    xs = np.log([lam for lam in table])
    lower_ys = np.log([table[lam][0] for lam in table])
    upper_ys = np.log([table[lam][1] for lam in table])
    fit_l = np.polyfit(xs, lower_ys, 1)
    fit_u = np.polyfit(xs, upper_ys, 1)
    res_l = float(np.max(np.abs(np.polyval(fit_l, xs) - lower_ys)))
    res_u = float(np.max(np.abs(np.polyval(fit_u, xs) - upper_ys)))
    return DimensionEstimate(float(fit_l[0]), float(fit_u[0]), res_l, res_u,
                             table.keys(), table)


def reverse_holder_exponent(weight, p, family, r_grid, threshold):
    """Largest grid r with sup_Q [avg ||W^{1/p} A_Q^{-1}||^{rp}]^{1/(rp)} <= C."""
    grid = weight.grid
    cubes = grid.aligned_cube_family()
    samples = []
    for cube in cubes:
        idx = grid.cube_indices(cube)
        if idx.size == 0:
            continue
        a = family.operator(cube)
        inv = np.linalg.inv(a)
        if weight.m == 1:
            norms = np.abs(weight.power(1.0 / p)[idx, 0, 0] * inv[0, 0])
        else:
            norms = hermitian.op_norm_batch(weight.power(1.0 / p)[idx] @ inv)
        samples.append(norms)
    best = None
    capped = True
    for r in sorted(float(v) for v in r_grid):
        if r <= 1:
            raise PreconditionError("reverse Hoelder grid must lie in (1, r_max]")
        sup = max(float(np.mean(s ** (r * p)) ** (1.0 / (r * p))) for s in samples)
        if sup <= threshold:
            best = r
        else:
            capped = False
    return {"r_estimate": best, "capped": capped, "grid_max": max(r_grid)}


# ----------------------------------------------------------------------
# dyadic machinery

def dyadic_average(field, grid, t):
    """E_t(f): per-cube means of a scalar grid field, piecewise constant."""
    ratio = t / grid.h
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-12:
        raise AlignmentError(f"scale {t} misaligned with spacing {grid.h}")
    out = np.empty_like(np.asarray(field, dtype=float))
    flat = np.asarray(field, dtype=float).ravel()
    for cube in grid.dyadic_cubes(t):
        idx = grid.cube_indices(cube)
        if idx.size:
            out.ravel()[idx] = np.mean(flat[idx])
    return out


def kappa_norm(omega_levels, grid, p):
    """sup_Q [avg_Q sup_{j >= j_Q} omega_j^p]^{1/p} over dyadic cubes.

    Restricted to cubes contained in the sampled domain; a cube reaching
    past it has no faithful average on the grid.
    """
    levels = sorted(omega_levels)
    best = 0.0
    for j_q in levels:
        t = 2.0 ** (-j_q)
        if t / grid.h < 1 or t > grid.L:
            continue
        sup_field = np.max([omega_levels[j] for j in levels if j >= j_q], axis=0)
        for cube in grid.dyadic_cubes(t):
            if any(lo < -grid.L - 1e-12 or hi > grid.L + 1e-12
                   for lo, hi in zip(cube.lo, cube.hi)):
                continue
            idx = grid.cube_indices(cube)
            if idx.size:
                best = max(best, float(np.mean(sup_field.ravel()[idx] ** p)) ** (1.0 / p))
    return best


def dyadic_sup_estimate(omega_levels, f_levels, k, P, p, grid,
                        check_kappa=True):
    """Weighted dyadic sup bound with constant 2^{n/p} max{1, 2^{-kn/p}}.

    omega_levels, f_levels: dicts level j -> scalar grid field, f constant on
    the cubes of its level. Returns (lhs, rhs, ratio) where rhs carries the
    sharp constant and ratio is lhs over the unweighted norm (1 when both
    vanish). Raises PreconditionError when the kappa condition fails.
    """
    if check_kappa:
        kn = kappa_norm(omega_levels, grid, p)
        if kn > 1 + 1e-9:
            raise PreconditionError(f"kappa norm {kn} exceeds 1")
    j_p = int(round(-np.log2(P.edge)))
    sel = [j for j in sorted(f_levels) if j >= j_p + k and j in omega_levels]
    idx = grid.cube_indices(P)
    n = grid.n
    if not sel or idx.size == 0:
        return 0.0, 0.0, 1.0
    weighted = np.max([omega_levels[j].ravel()[idx] * np.abs(f_levels[j].ravel()[idx])
                       for j in sel], axis=0)
    plain = np.max([np.abs(f_levels[j].ravel()[idx]) for j in sel], axis=0)
    lhs = float(np.sum(weighted ** p) * grid.cell_volume) ** (1.0 / p)
    plain_norm = float(np.sum(plain ** p) * grid.cell_volume) ** (1.0 / p)
    bound = 2.0 ** (n / p) * max(1.0, 2.0 ** (-k * n / p))
    rhs = bound * plain_norm
    ratio = 1.0 if plain_norm == 0 else lhs / plain_norm
    if lhs > rhs * (1 + 1e-12):
        raise ConstructionError(
            f"dyadic sup estimate violated: {lhs} > {rhs}")
    return lhs, rhs, ratio


def cube_constant_field(grid, j, coeff_fn):
    """Field constant on each cube of the 2^{-j} lattice; coeff_fn(cube)->value."""
    out = np.zeros(grid.size)
    for cube in grid.dyadic_cubes(2.0 ** (-j)):
        idx = grid.cube_indices(cube)
        if idx.size:
            out[idx] = coeff_fn(cube)
    return out
