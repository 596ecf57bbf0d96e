"""Atom validation, the constructive atomic decomposition, reconstruction.

The decomposition runs the CZ splitting over the level ladder alpha = 2^j,
forms the per-cube differences with their cross-term projections on the
grid, verifies the vanishing moments of every piece numerically, and
rescales by c 2^j |Q_{j,k}|^{1/p} where the normalizing constant c is the
measured maximum good bound over the run. Only constructive upper bounds of
infimum quasi-norms are ever reported.
"""

from __future__ import annotations

import warnings

import numpy as np

from .czd import (PolynomialProjector, cz_decompose, maximal_proxy,
                  moment_scale, moments, multi_indices)
from .errors import DomainError, PreconditionError
from .grid import Cube
from .maximal import VectorField, dyadic_scales, hardy_quasinorm, lp_quasinorm


class AtomReport:
    def __init__(self, support_ok, size_value, size_bound, moment_residuals,
                 moment_tol):
        self.support_ok = support_ok
        self.size_value = size_value
        self.size_bound = size_bound
        self.moment_residuals = moment_residuals
        self.moment_tol = moment_tol

    @property
    def size_ok(self):
        return self.size_value <= self.size_bound * (1 + 1e-12)

    @property
    def size_margin(self):
        return self.size_bound / self.size_value if self.size_value > 0 else np.inf

    @property
    def moments_ok(self):
        return all(r <= t for r, t in zip(self.moment_residuals.values(),
                                          self.moment_tol.values()))

    @property
    def valid(self):
        return self.support_ok and self.size_ok and self.moments_ok


class Atom:
    """A vector field with supporting cube and (p, q, s) metadata."""

    def __init__(self, field, cube, p, q, s, flavor, report):
        self.field = field
        self.cube = cube
        self.p = p
        self.q = q
        self.s = s
        self.flavor = flavor
        self.report = report


def _size_functional(values, grid, cube, weight_or_family, p, q, flavor):
    idx = grid.cube_indices(cube)
    if idx.size == 0:
        raise DomainError("supporting cube contains no sample")
    a_vals = values[idx]
    if flavor == "W":
        wp = weight_or_family.power(1.0 / p)[idx]
        mags = np.linalg.norm(np.einsum("yij,xj->xyi", wp, a_vals), axis=2)
        inner = np.sum(mags ** p, axis=1) * grid.cell_volume  # over y in Q
        if np.isinf(q):
            return float(np.max(inner ** (1.0 / p))), 1.0
        size = float(np.sum(inner ** (q / p)) * grid.cell_volume) ** (1.0 / q)
        return size, cube.volume ** (1.0 / q)
    a_q = weight_or_family.operator(cube)
    mags = np.linalg.norm(np.einsum("ij,xj->xi", a_q, a_vals), axis=1)
    if np.isinf(q):
        return float(np.max(mags)), cube.volume ** (-1.0 / p)
    size = float(np.sum(mags ** q) * grid.cell_volume) ** (1.0 / q)
    return size, cube.volume ** (1.0 / q - 1.0 / p)


def validate_atom(field, cube, weight_or_family, p, q, s, flavor="W",
                  moment_rtol=1e-6):
    """Report-style check of the support, size, and moment conditions."""
    grid = field.grid
    inside = np.ones(grid.size, dtype=bool)
    for axis in range(grid.n):
        x = grid.points[:, axis]
        inside &= (x >= cube.lo[axis] - 1e-12) & (x <= cube.hi[axis] + 1e-12)
    support_ok = not np.any(np.abs(field.values[~inside]) > 0)

    size_value, size_bound = _size_functional(field.values, grid, cube,
                                              weight_or_family, p, q, flavor)
    mom = moments(field.values, grid, s)
    residuals = {g: float(np.linalg.norm(v)) for g, v in mom.items()}
    tols = {g: moment_rtol * max(moment_scale(field.values, grid, cube, g), 1e-300)
            for g in mom}
    return AtomReport(support_ok, size_value, size_bound, residuals, tols)


def normalize_to_atom(field, cube, weight_or_family, p, q, s, flavor="W"):
    """Rescale a moment-correct field to meet the size bound with equality.

    The size functional is positively homogeneous, so the unique multiplier
    is bound / size. Returns (atom, factor) with atom = factor * field.
    """
    size, bound = _size_functional(field.values, grid := field.grid, cube,
                                   weight_or_family, p, q, flavor)
    if size == 0:
        raise DomainError("zero field cannot be normalized to an atom")
    factor = bound / size
    scaled = VectorField(grid, field.values * factor)
    report = validate_atom(scaled, cube, weight_or_family, p, q, s, flavor)
    return Atom(scaled, cube, p, q, s, flavor, report), factor


def atom_hardy_bound(atom, psi, weight, p, rw_estimate=None, scales=None):
    """Hardy proxy of one atom, with the q-vs-reverse-Hoelder hypothesis check."""
    if rw_estimate is not None and rw_estimate > 1:
        q_floor = max(1.0, rw_estimate * p / (rw_estimate - 1.0))
        if not np.isinf(atom.q) and atom.q <= q_floor:
            warnings.warn(f"atom exponent q = {atom.q} at or below the "
                          f"hypothesis floor {q_floor:.3f}", stacklevel=2)
    return hardy_quasinorm(atom.field, psi, weight, p, scales=scales)


class AtomicDecomposition:
    def __init__(self, entries, tail, c_measured, c_table, diagnostics, f,
                 weight, p):
        self.entries = entries          # list of (j, k, lam, Atom)
        self.tail = tail                # (lam, Atom) or None
        self.c_measured = c_measured
        self.c_table = c_table          # per-atom normalizing ratios
        self.diagnostics = diagnostics
        self.f = f
        self.weight = weight
        self.p = p

    def coefficient_norm(self, include_tail=True):
        lam = [abs(l) ** self.p for _, _, l, _ in self.entries]
        if include_tail and self.tail is not None:
            lam.append(abs(self.tail[0]) ** self.p)
        return float(sum(lam)) ** (1.0 / self.p)

    def synthesize(self):
        out = np.zeros_like(self.f.values)
        for _, _, lam, atom in self.entries:
            out += lam * atom.field.values
        if self.tail is not None:
            out += self.tail[0] * self.tail[1].field.values
        return out


def _support_cube(values, grid, center):
    """Smallest cube at the given center containing all nonzero samples."""
    nz = np.nonzero(np.linalg.norm(values, axis=1) > 0)[0]
    if nz.size == 0:
        return None
    pts = grid.points[nz]
    center = np.asarray(center, dtype=float)
    reach = np.max(np.abs(pts - center)) + grid.h
    return Cube(tuple(center), 2 * reach, grid.n)


def atomic_decompose(f, weight, p, family, s, psi, j_range=None,
                     dictionary=None, scales=None, tail_rtol=0.1):
    """Constructive atomic decomposition through the CZ ladder alpha = 2^j.

    Produces reducing-operator atoms with q = infinity; the residual below
    the lowest level is assigned to a single tail atom. The ladder window is
    clipped to the levels whose level sets are nonempty.
    """
    if not (0 < p <= 1):
        raise PreconditionError("p must lie in (0, 1]")
    if s <= f.grid.n * (1.0 / p - 1.0) - 1.0:
        raise PreconditionError("degree s too small for the ladder tails")
    grid = f.grid
    scales = scales or dyadic_scales(grid)
    proxy = maximal_proxy(f, dictionary if dictionary is not None else psi,
                          family, scales)
    top = float(np.max(proxy))
    if top == 0:
        return AtomicDecomposition([], None, 0.0, [], {"empty": True}, f,
                                   weight, p)
    j_top = int(np.floor(np.log2(top)))
    if j_range is None:
        j_range = range(j_top - 6, j_top + 1)
    j_lo = j_range[0]
    j_hi = min(j_range[-1], j_top)

    decs = {}
    for j in range(j_lo, j_hi + 2):
        decs[j] = cz_decompose(f, weight, p, family, 2.0 ** j, s, psi,
                               dictionary=dictionary, proxy=proxy,
                               scales=scales, compute_bad_energy=False)

    raw_atoms = []   # (j, k, whitney_cube, values, support_cube)
    for j in range(j_lo, j_hi + 1):
        low, high = decs[j], decs[j + 1]
        if low.partition is None:
            continue
        cross = _cross_terms(f, high, s)
        for k, (cube, eta) in enumerate(zip(low.partition.cubes,
                                            low.partition.bumps)):
            values = low.b_parts[k].copy()
            for i, (pf_i, proj_i, eta_i) in enumerate(cross):
                overlap = (eta > 0) & (eta_i > 0)
                if not np.any(overlap):
                    continue
                h_vals = (f.values - pf_i) * eta[:, None]
                proj_h, _ = proj_i.project(h_vals)
                values += (proj_h - h_vals) * eta_i[:, None]
            support = _support_cube(values, grid, cube.center)
            if support is not None:
                raw_atoms.append((j, k, cube, values, support))

    if not raw_atoms:
        raise DomainError("no ladder atoms produced; widen the j-range")

    c_table = []
    for j, k, wcube, values, support in raw_atoms:
        a_q = family.operator(support)
        sup_val = float(np.max(np.linalg.norm(
            np.einsum("ij,xj->xi", a_q, values), axis=1)))
        c_table.append(sup_val * support.volume ** (1.0 / p)
                       / (2.0 ** j * wcube.volume ** (1.0 / p)))
    c_measured = max(c_table)

    entries = []
    for (j, k, wcube, values, support), _ in zip(raw_atoms, c_table):
        lam = c_measured * 2.0 ** j * wcube.volume ** (1.0 / p)
        atom_vals = values / lam
        field = VectorField(grid, atom_vals)
        report = validate_atom(field, support, family, p, np.inf, s, flavor="A")
        entries.append((j, k, lam, Atom(field, support, p, np.inf, s, "A",
                                        report)))

    synth = np.zeros_like(f.values)
    for _, _, lam, atom in entries:
        synth += lam * atom.field.values
    tail_vals = f.values - synth
    tail = None
    tail_norm = float(np.max(np.linalg.norm(tail_vals, axis=1)))
    f_norm = float(np.max(np.linalg.norm(f.values, axis=1)))
    if tail_norm > 1e-13 * f_norm:
        support = _support_cube(tail_vals, grid, (0.0,) * grid.n)
        tail_atom, factor = normalize_to_atom(VectorField(grid, tail_vals),
                                              support, family, p, np.inf, s,
                                              flavor="A")
        tail = (1.0 / factor, tail_atom)
        if tail_norm > tail_rtol * f_norm:
            warnings.warn(f"ladder window too narrow: tail holds "
                          f"{tail_norm / f_norm:.1%} of max |f|", stacklevel=2)

    diagnostics = {
        "j_window": (j_lo, j_hi),
        "proxy_max": top,
        "c_measured": c_measured,
        "c_spread": (min(c_table), max(c_table)),
        "n_atoms": len(entries),
        "tail_fraction": tail_norm / f_norm if f_norm > 0 else 0.0,
        "coefficient_sum_p": sum(abs(l) ** p for _, _, l, _ in entries),
        "proxy_energy": float(np.sum(proxy ** p) * grid.cell_volume),
    }
    return AtomicDecomposition(entries, tail, c_measured, c_table, diagnostics,
                               f, weight, p)


def _cross_terms(f, dec, s):
    """Per-cube data of the finer level needed for the correction terms."""
    if dec.partition is None:
        return []
    out = []
    for cube, eta in zip(dec.partition.cubes, dec.partition.bumps):
        projector = PolynomialProjector(dec.partition.grid, cube.dilate(9.0 / 8.0),
                                        s, eta, strict=False)
        pf, _ = projector.project(f.values)
        out.append((pf, projector, eta))
    return out


def reconstruct(decomposition, test_profiles):
    """Pairing residuals |<f, phi> - sum lam <a, phi>| per test profile."""
    f = decomposition.f
    grid = f.grid
    synth = decomposition.synthesize()
    rows = []
    for name, profile in test_profiles:
        phi = np.asarray(profile, dtype=float).ravel()
        target = np.sum(f.values * phi[:, None], axis=0) * grid.cell_volume
        got = np.sum(synth * phi[:, None], axis=0) * grid.cell_volume
        scale = float(np.sum(np.abs(f.values) * np.abs(phi)[:, None])
                      * grid.cell_volume)
        rows.append((name, float(np.linalg.norm(target - got)), scale))
    return rows


def finite_atomic_norm_upper(f, weight, p, s, psi, family, j_range=None,
                             scales=None):
    """Constructive upper bound for the finite atomic quasi-norm.

    The coefficient l^p norm of the truncated ladder plus its tail atom;
    an upper bound for the infimum over all finite decompositions, never
    the infimum itself.
    """
    dec = atomic_decompose(f, weight, p, family, s, psi, j_range=j_range,
                           scales=scales)
    if not dec.entries and dec.tail is None:
        return 0.0
    return dec.coefficient_norm(include_tail=True)
