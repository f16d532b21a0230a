"""Local product structure, maximal invariant sets on grids, the punctured
4-torus construction, and the non-premaximality witness checker.

The bracket of two nearby points follows the flow-style convention
S(x, y) in W^u(x) ∩ W^s(y): forward iterates converge to y's orbit,
backward iterates to x's.  For a linear system it is the exact intersection
of the unstable affine line through x with the stable affine line through y,
computed on the minimal lift.

Grid computations are set-oriented: a cell survives a sweep when the outer
enclosure of its image (and preimage) still meets the remaining cell set,
so the result always over-approximates the true maximal invariant set and
shrinks monotonically with more sweeps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product as iproduct
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from mpmath import mp

from .closure import SetApprox
from .torus import (
    ProductSystem,
    ToralAutomorphism,
    TorusPoint,
    minimal_lift,
    torus_distance,
    torus_distance_array,
    wrap,
)

__all__ = [
    "BracketError",
    "BracketPoint",
    "LPSFailure",
    "LPSReport",
    "GridSet",
    "NonPremaxWitness",
    "WitnessReport",
    "bracket",
    "bracket_delta_for",
    "local_product_check",
    "maximal_invariant_set",
    "crovisier_set",
    "verify_nonpremax_witness",
    "constant_family",
    "unstable_segment_family",
    "b_direction_heteroclinic_family",
]


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class BracketPoint:
    """The intersection point W^u(x) ∩ W^s(y) with the distances along each
    manifold.  `time_shift` is zero for maps and reserved for flows."""

    point: TorusPoint
    time_shift: float
    s_distance: float
    u_distance: float


def bracket_delta_for(splitting, eps: float) -> float:
    """Largest pair distance delta guaranteeing both bracket components stay
    below eps: delta = eps / max(||P_s||, ||P_u||)."""
    ds = splitting.stable_dim
    d = splitting.dim
    sel_s = np.zeros((d, d))
    sel_s[:ds, :ds] = np.eye(ds)
    sel_u = np.eye(d) - sel_s
    Ps = splitting.basis @ sel_s @ splitting.basis_inv
    Pu = splitting.basis @ sel_u @ splitting.basis_inv
    norm = max(np.linalg.norm(Ps, 2), np.linalg.norm(Pu, 2))
    return eps / norm


def bracket(map: ToralAutomorphism, x: TorusPoint, y: TorusPoint, eps: float,
            delta: float | None = None) -> BracketPoint:
    """S(x, y): unstable coordinate of x, stable coordinate of y.

    bracket(x, x) = x exactly.  Requires eps < 1/4 so the minimal lift of
    y - x is the only candidate, and d(x, y) < delta for the (eps, delta)
    pair; violations raise BracketError("no local bracket").
    """
    s = map.splitting
    if not eps < 0.25:
        raise BracketError("linear bracket needs eps < 1/4 for a unique lift")
    if s.C > 1e8:
        raise BracketError(f"near-parallel stable/unstable bases: conditioning {s.C:.2e}")
    if delta is None:
        delta = bracket_delta_for(s, eps)
    d_xy = torus_distance(x, y)
    if d_xy >= delta:
        raise BracketError(f"no local bracket: d(x,y) = {d_xy:.4g} >= delta = {delta:.4g}")
    w = minimal_lift(y.coords - x.coords)
    wu = s.unstable_component(w)
    ws = w - wu
    su, ss = float(np.linalg.norm(wu)), float(np.linalg.norm(ws))
    if su > eps or ss > eps:
        raise BracketError(
            f"no local bracket: component distances ({ss:.4g}, {su:.4g}) exceed eps = {eps}"
        )
    if np.all(w == 0.0):
        return BracketPoint(x, 0.0, 0.0, 0.0)
    return BracketPoint(TorusPoint(wrap(x.coords + wu)), 0.0, ss, su)


@dataclass(frozen=True)
class LPSFailure:
    x: np.ndarray
    y: np.ndarray
    bracket: np.ndarray
    distance_to_set: float


@dataclass(frozen=True)
class LPSReport:
    """Outcome of the local-product-structure sweep: every ordered close
    pair's bracket was tested for membership in the net."""

    epsilon: float
    delta: float
    membership_tol: float
    pairs_tested: int
    failures: tuple[LPSFailure, ...]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "membership_tol": self.membership_tol,
            "pairs_tested": self.pairs_tested,
            "passed": self.passed,
            "failures": [
                {
                    "x": f.x.tolist(),
                    "y": f.y.tolist(),
                    "bracket": f.bracket.tolist(),
                    "distance_to_set": f.distance_to_set,
                }
                for f in self.failures
            ],
        }


def local_product_check(map: ToralAutomorphism, sa: SetApprox, eps: float,
                        delta: float, membership_tol: float) -> LPSReport:
    """Test every ordered pair x != y with d(x, y) < delta: the bracket must
    land within membership_tol of the net.  Failures are data, not errors."""
    s = map.splitting
    pts = sa.points
    pairs = sa.tree.query_pairs(r=delta, output_type="ndarray")
    if len(pairs) == 0:
        return LPSReport(eps, delta, membership_tol, 0, ())
    ii = np.concatenate([pairs[:, 0], pairs[:, 1]])
    jj = np.concatenate([pairs[:, 1], pairs[:, 0]])
    w = minimal_lift(pts[jj] - pts[ii])
    z = w @ s.basis_inv.T
    z[:, : s.stable_dim] = 0.0
    wu = z @ s.basis.T
    ws = w - wu
    comp = np.maximum(np.linalg.norm(wu, axis=1), np.linalg.norm(ws, axis=1))
    if np.any(comp > eps):
        raise BracketError(
            "bracket components exceed eps for some pair; pick delta <= bracket_delta_for(eps)"
        )
    brackets = wrap(pts[ii] + wu)
    dists = sa.distance_to(brackets)
    bad = np.nonzero(dists > membership_tol)[0]
    failures = tuple(
        LPSFailure(pts[ii[k]].copy(), pts[jj[k]].copy(), brackets[k].copy(), float(dists[k]))
        for k in bad
    )
    return LPSReport(eps, delta, membership_tol, len(ii), failures)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSet:
    """Cell set at dyadic subdivision depth k: cell width 2^-k per axis,
    stored as a boolean occupancy array over the full (2^k)^d grid."""

    dim: int
    depth: int
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = 2 ** self.depth
        expected = (n,) * self.dim
        if self.mask.shape != expected:
            raise ValueError(f"mask shape {self.mask.shape} != {expected}")
        m = np.asarray(self.mask, dtype=bool)
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    @classmethod
    def full(cls, dim: int, depth: int) -> "GridSet":
        n = 2 ** depth
        return cls(dim, depth, np.ones((n,) * dim, dtype=bool))

    @property
    def width(self) -> float:
        return 2.0 ** -self.depth

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def cells(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def centers(self) -> np.ndarray:
        return (self.cells() + 0.5) * self.width

    def contains(self, point: TorusPoint | np.ndarray) -> bool:
        coords = point.coords if isinstance(point, TorusPoint) else wrap(np.asarray(point, float))
        idx = tuple(np.minimum((coords / self.width).astype(int), 2 ** self.depth - 1))
        return bool(self.mask[idx])

    def minus_ball(self, center: np.ndarray, radius: float) -> "GridSet":
        """Remove cells whose center lies within `radius` of `center` (torus
        metric)."""
        if radius <= 0:
            return self
        centers = (np.indices(self.mask.shape).reshape(self.dim, -1).T + 0.5) * self.width
        d = torus_distance_array(centers, np.asarray(center, float)[None, :])
        keep = (d >= radius).reshape(self.mask.shape)
        return GridSet(self.dim, self.depth, self.mask & keep)

    def as_set_approx(self, label: str = "") -> SetApprox:
        return SetApprox(self.centers(), self.width, label, _validate=False)

    def coarsen(self) -> "GridSet":
        """Project to depth-1: a coarse cell is occupied when any of its 2^d
        children is."""
        if self.depth == 0:
            raise ValueError("already at depth 0")
        m = self.mask
        for axis in range(self.dim):
            n = m.shape[axis] // 2
            shape = list(m.shape)
            shape[axis] = n
            shape.insert(axis + 1, 2)
            m = m.reshape(shape).any(axis=axis + 1)
        return GridSet(self.dim, self.depth - 1, m)

    def to_rle(self) -> dict:
        flat = self.mask.ravel()
        runs = []
        changes = np.nonzero(np.diff(flat.astype(np.int8)))[0] + 1
        bounds = np.concatenate([[0], changes, [flat.size]])
        for a, b in zip(bounds[:-1], bounds[1:]):
            if flat[a]:
                runs.append([int(a), int(b - a)])
        return {"dim": self.dim, "depth": self.depth, "runs": runs}

    @classmethod
    def from_rle(cls, d: dict) -> "GridSet":
        n = 2 ** d["depth"]
        flat = np.zeros(n ** d["dim"], dtype=bool)
        for start, length in d["runs"]:
            flat[start: start + length] = True
        return cls(d["dim"], d["depth"], flat.reshape((n,) * d["dim"]))


def _sweep(mask: np.ndarray, M: np.ndarray, depth: int) -> np.ndarray:
    """Keep cells whose image box under the linear map M meets the mask.

    The image of an axis box is enclosed exactly: center -> M c, halfwidth ->
    |M| h, which coincides with the hull of the mapped corners for linear M.
    """
    dim = mask.ndim
    n = 2 ** depth
    w = 1.0 / n
    idx = np.argwhere(mask)
    if len(idx) == 0:
        return mask.copy()
    centers = (idx + 0.5) * w
    img_c = centers @ M.T
    hw = (np.abs(M) @ np.full(dim, w / 2.0))
    lo = img_c - hw
    hi = img_c + hw
    base = np.floor(lo / w).astype(np.int64)
    span = np.floor(hi / w).astype(np.int64) - base  # per-cell, varies by +-1
    max_span = span.max(axis=0)
    flat = mask.ravel()
    strides = np.array([n ** (dim - 1 - k) for k in range(dim)], dtype=np.int64)
    keep = np.zeros(len(idx), dtype=bool)
    for off in iproduct(*(range(int(s) + 1) for s in max_span)):
        off_arr = np.array(off, dtype=np.int64)
        valid = ~keep & np.all(off_arr <= span, axis=1)
        if not np.any(valid):
            continue
        cells = (base[valid] + off_arr) % n
        keep[valid] = flat[cells @ strides]
    out = np.zeros_like(mask)
    out[tuple(idx[keep].T)] = True
    return out


def maximal_invariant_set(map: ToralAutomorphism, U: GridSet, n_iter: int) -> GridSet:
    """Outer approximation of I_f(U) = ∩_n f^n(U) by cell-removal sweeps.

    Each sweep drops cells whose forward or backward image enclosure leaves
    the current cell set; the result is a superset of the true invariant set
    that shrinks (or stalls) with n_iter.  Idempotent at the fixed point.
    """
    if U.count == 0:
        raise ValueError("empty grid")
    M = map.matrix.astype(float)
    Minv = map.inverse_matrix.astype(float)
    mask = U.mask
    for _ in range(n_iter):
        new = _sweep(mask, M, U.depth) & _sweep(mask, Minv, U.depth)
        if np.array_equal(new, mask):
            break
        mask = new
    return GridSet(U.dim, U.depth, mask)


def crovisier_set(product: ProductSystem, q: TorusPoint, r: TorusPoint,
                  v_radius: float, depth: int, n_iter: int, *,
                  q_period: int = 1) -> GridSet:
    """Grid approximation of Lambda = ∩_n F^n(T^4 - V) with V the ball of
    radius `v_radius` around (q, r).

    q must be fixed by A^q_period and distinct from the origin fixed point;
    the default system's A = [[3,1],[2,1]] genuinely fixes q = (1/2, 0), so
    q_period = 1 applies.  Cells are removed when their center lies in V.
    """
    A, B = product.factor_a, product.factor_b
    if torus_distance(A.iterate(q, q_period), q) > 1e-9:
        raise ValueError(f"q is not fixed by A^{q_period}")
    if torus_distance(q, TorusPoint((0,) * A.dim)) < 1e-12:
        raise ValueError("q must be distinct from the origin fixed point p")
    if torus_distance(B.apply(r), r) > 1e-9:
        raise ValueError("r is not a fixed point of B")
    F = product.as_automorphism()
    center = np.concatenate([q.coords, r.coords])
    U = GridSet.full(F.dim, depth).minus_ball(center, v_radius)
    if U.count == 0:
        raise ValueError("V swallows the whole grid; shrink v_radius")
    return maximal_invariant_set(F, U, n_iter)


# ---------------------------------------------------------------------------
# non-premaximality witness


@dataclass(frozen=True)
class NonPremaxWitness:
    """Sampled family of exact trajectories xi(n, t): a rectangular array
    over the time window [n_start, n_start + N - 1] and a uniform t-grid
    on [0, a]."""

    xi: np.ndarray          # (n_times, n_params, d)
    n_start: int
    a: float

    def __post_init__(self):
        arr = np.asarray(self.xi, dtype=float)
        if arr.ndim != 3:
            raise ValueError("xi must be a (times, params, dim) array")
        if not self.n_start <= 0 <= self.n_start + arr.shape[0] - 1:
            raise ValueError("time window must contain n = 0")
        arr = wrap(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "xi", arr)

    @property
    def zero_row(self) -> int:
        return -self.n_start

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.a, self.xi.shape[1])


@dataclass(frozen=True)
class WitnessReport:
    exact_orbit: bool
    base_in_set: bool
    uniform_approach: bool
    leaves_set: bool
    details: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return self.exact_orbit and self.base_in_set and self.uniform_approach and self.leaves_set

    def conditions(self) -> tuple[bool, bool, bool, bool]:
        return (self.exact_orbit, self.base_in_set, self.uniform_approach, self.leaves_set)

    def to_json_dict(self) -> dict:
        return {
            "exact_orbit": self.exact_orbit,
            "base_in_set": self.base_in_set,
            "uniform_approach": self.uniform_approach,
            "leaves_set": self.leaves_set,
            "all_pass": self.all_pass,
            "details": self.details,
        }


def _side_decays(vals: np.ndarray, floor: float, margin: float) -> bool:
    """Decreasing-envelope test for one time direction: the outer half sits
    at the floor, or the fitted exponential rate is at least `margin`."""
    vals = np.asarray(vals, dtype=float)
    if len(vals) < 3:
        return bool(vals[-1] <= floor)
    half = len(vals) // 2
    if float(np.max(vals[half:])) <= floor:
        return True
    env = np.maximum.accumulate(vals[::-1])[::-1]  # envelope from the edge
    y = np.log(np.maximum(env, floor * 1e-2))
    slope = float(np.polyfit(np.arange(len(env)), y, 1)[0])
    return slope <= -margin


def verify_nonpremax_witness(map: ToralAutomorphism, lam: SetApprox,
                             witness: NonPremaxWitness, tol: float, *,
                             decay_margin: float = 0.05,
                             decay_floor: float | None = None) -> WitnessReport:
    """Check the four witness conditions numerically.

    (1) each t-slice is an exact orbit up to tol; (2) xi(0,0) lies within
    tol of the set; (3) sup_t dist(xi(n,t), set) decays as a two-sided
    envelope down to the floor (limits are not observable at desk scale, so
    a fitted rate or reaching the floor counts); (4) some xi(0, t1) sits
    farther than 2 tol from the set.  Failures are reported, not raised.
    """
    xi = witness.xi
    n_times, n_params, d = xi.shape
    floor = tol if decay_floor is None else decay_floor

    defect = 0.0
    for k in range(n_times - 1):
        images = map.apply_array(xi[k])
        defect = max(defect, float(np.max(torus_distance_array(images, xi[k + 1]))))
    cond1 = defect < tol

    dists = np.array([lam.distance_to(xi[k]) for k in range(n_times)])  # (times, params)
    z = witness.zero_row
    cond2 = bool(dists[z, 0] < tol)

    m = dists.max(axis=1)
    fwd = m[z:]
    bwd = m[: z + 1][::-1]
    cond3 = _side_decays(fwd, floor, decay_margin) and _side_decays(bwd, floor, decay_margin)

    off = float(np.max(dists[z]))
    cond4 = bool(off > 2 * tol)

    return WitnessReport(cond1, cond2, cond3, cond4, details={
        "orbit_defect": defect,
        "base_distance": float(dists[z, 0]),
        "max_zero_row_distance": off,
        "sup_distance_by_n": m.tolist(),
        "n_start": witness.n_start,
    })


def _mp_frac(x):
    return x - mp.floor(x)


def _eig_2x2_extended(matrix: np.ndarray, stable: bool):
    """Eigenvalue and unit eigenvector of an integer 2x2 matrix via the
    quadratic formula, in the active mpmath precision."""
    if matrix.shape != (2, 2):
        raise ValueError("extended-precision eigendata needs a 2x2 factor")
    a, b = int(matrix[0, 0]), int(matrix[0, 1])
    c, d = int(matrix[1, 0]), int(matrix[1, 1])
    tr, det = a + d, a * d - b * c
    disc = mp.sqrt(mp.mpf(tr) ** 2 - 4 * det)
    roots = [(tr + disc) / 2, (tr - disc) / 2]
    lam = min(roots, key=abs) if stable else max(roots, key=abs)
    if b != 0:
        v = (mp.mpf(b), lam - a)
    else:
        v = (lam - d, mp.mpf(c))
    norm = mp.sqrt(v[0] ** 2 + v[1] ** 2)
    return lam, (v[0] / norm, v[1] / norm)


def _family_from_segment(map: ToralAutomorphism, seg: np.ndarray, n_window: int,
                         a: float) -> NonPremaxWitness:
    n_params = seg.shape[0]
    rows = [wrap(seg)]
    fwd = wrap(seg)
    for _ in range(n_window):
        fwd = map.apply_array(fwd)
        rows.append(fwd)
    bwd_rows = []
    bwd = wrap(seg)
    for _ in range(n_window):
        bwd = map.apply_inverse_array(bwd)
        bwd_rows.append(bwd)
    xi = np.stack(bwd_rows[::-1] + rows)
    return NonPremaxWitness(xi, -n_window, a)


def constant_family(map: ToralAutomorphism, x0: TorusPoint, n_window: int,
                    n_params: int, a: float) -> NonPremaxWitness:
    """xi(n, t) = f^n(x0) for every t: a family that never leaves the orbit."""
    seg = np.tile(x0.coords, (n_params, 1))
    return _family_from_segment(map, seg, n_window, a)


def unstable_segment_family(map: ToralAutomorphism, center: TorusPoint, a: float,
                            n_window: int, n_params: int) -> NonPremaxWitness:
    """xi(0, t) = center + t v_u: pushforwards of an unstable segment."""
    v = map.splitting.unstable_basis[:, 0]
    t = np.linspace(0.0, a, n_params)
    seg = wrap(center.coords[None, :] + t[:, None] * v[None, :])
    return _family_from_segment(map, seg, n_window, a)


def b_direction_heteroclinic_family(product: ProductSystem, q: TorusPoint,
                                    r: TorusPoint, *, s_offset: float, a: float,
                                    n_window: int, n_params: int) -> NonPremaxWitness:
    """Segments in the B factor's unstable direction, based where the A
    coordinate sits on W^s(q).

    xi(0, t) = (q + s_offset v_s(A), r + t v_u(B)).  Forward orbits converge
    to the fiber {q} x T^2 uniformly in t (the A part contracts along
    W^s(q)), backward orbits to T^2 x {r} (the B part contracts along the
    reversed unstable direction); interior t leave the union of those two
    invariant pieces.  This is the product mechanism behind the punctured
    4-torus example.

    Both offsets sit along eigenvectors of fixed points, so the orbits have
    the closed form (q + s lam_sA^n v_s, r + t lam_uB^n v_u).  The stable
    offset blown up through a 30-step backward window carries more digits
    than a double holds, so the positions are evaluated in extended
    precision before rounding to floats.
    """
    lam_max = max(product.factor_a.splitting.lambda_u,
                  product.factor_b.splitting.lambda_u)
    digits = 40 + int(np.ceil((n_window + 1) * np.log10(lam_max)))
    t = np.linspace(0.0, a, n_params)
    with mp.workdps(digits):
        lam_s, vs = _eig_2x2_extended(product.factor_a.matrix, stable=True)
        lam_u, vu = _eig_2x2_extended(product.factor_b.matrix, stable=False)
        rows = []
        for n in range(-n_window, n_window + 1):
            sa_off = mp.mpf(s_offset) * lam_s ** n
            a_part = np.array([
                float(_mp_frac(mp.mpf(float(qc)) + sa_off * vc))
                for qc, vc in zip(q.coords, vs)
            ])
            row = []
            for tk in t:
                tu_off = mp.mpf(float(tk)) * lam_u ** n
                b_part = np.array([
                    float(_mp_frac(mp.mpf(float(rc)) + tu_off * vc))
                    for rc, vc in zip(r.coords, vu)
                ])
                row.append(np.concatenate([a_part, b_part]))
            rows.append(np.array(row))
    return NonPremaxWitness(np.stack(rows), -n_window, a)
