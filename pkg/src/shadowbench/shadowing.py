"""Pseudo-orbits and shadowing for hyperbolic toral maps and their
constant-roof suspensions.

Two shadowers are provided.  `exact_shadow_linear` solves the correction
recursion u_{j+1} = A u_j - e_j in the splitting basis: stable components
are summed forward, unstable components backward, each a geometric series in
the contraction rates, which yields the unique bounded solution with
sup distance <= K * defect.  `newton_shadow` solves the orbit equations as a
sparse boundary-value problem and must agree with the series on linear maps;
the pair forms an internal cross-check.

Finite windows use free ends: the stable displacement is clamped to zero at
the left end and the unstable displacement at the right end, mirroring the
bounded-solution selection of the bi-infinite problem.  Interior indices
(further than log(tol)/log(lambda_s) from the ends) meet the bi-infinite
bounds because boundary effects decay exponentially.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .torus import (
    FlowState,
    SuspensionFlow,
    ToralAutomorphism,
    TorusPoint,
    minimal_lift,
    torus_distance,
    torus_distance_array,
    wrap,
)

__all__ = [
    "ShadowingRefusal",
    "PseudoOrbit",
    "ShadowResult",
    "pseudo_orbit_defect",
    "exact_shadow_linear",
    "newton_shadow",
    "shadow_operator",
    "shift_pseudo",
    "expansivity_test",
    "FlowPseudoTrajectory",
    "Reparameterization",
    "FlowShadowResult",
    "suspend_pseudo_orbit",
    "flow_defect",
    "flow_shadow",
]


class ShadowingRefusal(ValueError):
    """The pseudo-orbit defect exceeds the admissible gate delta_0, so the
    shadowing bound is not guaranteed and the solver declines."""

    def __init__(self, defect: float, limit: float):
        self.defect = defect
        self.limit = limit
        super().__init__(
            f"defect too large: {defect:.3e} >= delta_0 = {limit:.3e}; shadowing bound not guaranteed"
        )


def _coords(p) -> np.ndarray:
    return p.coords if isinstance(p, TorusPoint) else np.asarray(p, dtype=float)


def _points_array(points: Iterable) -> np.ndarray:
    rows = [_coords(p) for p in points]
    arr = wrap(np.array(rows, dtype=float))
    if arr.ndim != 2:
        raise ValueError("points must be a sequence of equal-dimension coordinates")
    return arr


@dataclass(frozen=True)
class PseudoOrbit:
    """Finite epsilon-pseudo-orbit x_l..x_m with l <= 0 <= m.

    `defect` is the declared bound on d(f(x_j), x_{j+1}) over consecutive
    indices (including the wrap pair when periodic).  `start_index` is l;
    periodic orbits are stored as one period with the wrap implied.
    """

    points: np.ndarray            # (n, d), rows wrapped into [0,1)
    defect: float
    periodic: bool = False
    start_index: int = 0

    def __post_init__(self):
        pts = _points_array(self.points)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.defect < 0:
            raise ValueError("defect must be nonnegative")
        if not self.periodic and not (self.start_index <= 0 <= self.end_index):
            raise ValueError("index window must contain 0")

    @classmethod
    def from_map(cls, map: ToralAutomorphism, points: Iterable, *,
                 periodic: bool = False, start_index: int = 0) -> "PseudoOrbit":
        """Build a pseudo-orbit with its defect measured from the map."""
        pts = _points_array(points)
        return cls(pts, pseudo_orbit_defect(map, pts, periodic=periodic),
                   periodic=periodic, start_index=start_index)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def end_index(self) -> int:
        return self.start_index + len(self) - 1

    def point(self, j: int) -> np.ndarray:
        """Coordinates at orbit index j (cyclic for periodic orbits)."""
        if self.periodic:
            return self.points[(j - self.start_index) % len(self)]
        if not self.start_index <= j <= self.end_index:
            raise IndexError(f"index {j} outside window [{self.start_index}, {self.end_index}]")
        return self.points[j - self.start_index]

    def indices(self) -> np.ndarray:
        return np.arange(self.start_index, self.start_index + len(self))


def pseudo_orbit_defect(map: ToralAutomorphism, points: Iterable, *,
                        periodic: bool = False) -> float:
    """Max over consecutive pairs of d(f(x_j), x_{j+1}); 0 for a true orbit."""
    pts = _points_array(points)
    if len(pts) < 2 and not periodic:
        if len(pts) < 1:
            raise ValueError("need at least one point")
        return 0.0
    images = map.apply_array(pts)
    if periodic:
        successors = np.roll(pts, -1, axis=0)
        return float(np.max(torus_distance_array(images, successors)))
    return float(np.max(torus_distance_array(images[:-1], pts[1:])))


@dataclass(frozen=True)
class ShadowResult:
    """A shadowing orbit for a pseudo-orbit.

    `point` is the orbit point at index 0, `orbit` the full window y_j, and
    `per_index` the torus distances d(y_j, x_j) aligned with the window.
    `residual` is the largest violation of y_{j+1} = f(y_j) over the window.
    """

    point: TorusPoint
    sup_distance: float
    per_index: np.ndarray
    start_index: int
    converged: bool
    iterations: int
    orbit: np.ndarray = field(repr=False)
    sup_distance_adapted: float = 0.0
    residual: float = 0.0
    method: str = "exact"

    def __post_init__(self):
        assert abs(self.sup_distance - float(np.max(self.per_index))) < 1e-15

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "sup_distance": self.sup_distance,
            "sup_distance_adapted": self.sup_distance_adapted,
            "residual": self.residual,
            "start_index": self.start_index,
            "point": self.point.coords.tolist(),
            "per_index": [
                {"index": int(j), "distance": float(v)}
                for j, v in zip(
                    range(self.start_index, self.start_index + len(self.per_index)),
                    self.per_index,
                )
            ],
        }


def _splitting_of(map: ToralAutomorphism):
    return map.splitting


def _lifted_errors(map: ToralAutomorphism, po: PseudoOrbit) -> np.ndarray:
    """e_j = x_{j+1} - A x_j as the minimal covering-space representative.

    Defects below delta_0 < 1/2 make the minimal lift unambiguous.
    """
    pts = po.points
    images = map.apply_array(pts)
    if po.periodic:
        successors = np.roll(pts, -1, axis=0)
        return minimal_lift(successors - images)
    return minimal_lift(pts[1:] - images[:-1])


def _check_gate(defect: float, splitting, max_defect: float | None) -> None:
    limit = splitting.max_shadow_defect if max_defect is None else max_defect
    if defect >= limit:
        raise ShadowingRefusal(defect, limit)


def _result_from_orbit(map: ToralAutomorphism, po: PseudoOrbit, corrections: np.ndarray,
                       *, iterations: int, converged: bool, method: str) -> ShadowResult:
    s = map.splitting
    orbit = wrap(po.points + corrections)
    per_index = torus_distance_array(orbit, po.points)
    lifts = minimal_lift(orbit - po.points)
    adapted = float(np.max(np.linalg.norm(lifts @ s.basis_inv.T, axis=1)))
    images = map.apply_array(orbit)
    if po.periodic:
        residual = float(np.max(torus_distance_array(images, np.roll(orbit, -1, axis=0))))
    elif len(po) > 1:
        residual = float(np.max(torus_distance_array(images[:-1], orbit[1:])))
    else:
        residual = 0.0
    zero_idx = (0 - po.start_index) % len(po) if po.periodic else -po.start_index
    return ShadowResult(
        point=TorusPoint(orbit[zero_idx]),
        sup_distance=float(np.max(per_index)),
        per_index=per_index,
        start_index=po.start_index,
        converged=converged,
        iterations=iterations,
        orbit=orbit,
        sup_distance_adapted=adapted,
        residual=residual,
        method=method,
    )


def exact_shadow_linear(map: ToralAutomorphism, po: PseudoOrbit, *,
                        max_defect: float | None = None) -> ShadowResult:
    """Closed-form shadowing point for a linear toral automorphism.

    In splitting coordinates the correction recursion decouples: the stable
    block is integrated forward from a zero left end, the unstable block
    backward from a zero right end (for periodic orbits, the cyclic fixed
    point of the one-period affine pass is solved in each block).  The
    result satisfies sup distance <= K * defect with
    K = C * (1/(1-lambda_s) + 1/(lambda_u-1)).
    """
    s = _splitting_of(map)
    _check_gate(po.defect, s, max_defect)
    n, d = po.points.shape
    ds = s.stable_dim
    if n == 1 and not po.periodic:
        return _result_from_orbit(map, po, np.zeros((1, d)), iterations=0,
                                  converged=True, method="exact")

    A_ad = s.basis_inv @ map.matrix.astype(float) @ s.basis
    As, Au = A_ad[:ds, :ds], A_ad[ds:, ds:]
    Au_inv = np.linalg.inv(Au)
    eta = _lifted_errors(map, po) @ s.basis_inv.T   # (n_err, d) adapted error coords
    eta_s, eta_u = eta[:, :ds], eta[:, ds:]

    zeta_s = np.zeros((n, ds))
    zeta_u = np.zeros((n, d - ds))
    if po.periodic:
        # One affine pass determines the unique cyclic fixed point per block;
        # both passes only ever apply contracting matrices.
        run = np.zeros(ds)
        Ms = np.eye(ds)
        for j in range(n):
            run = As @ run - eta_s[j]
            Ms = As @ Ms
        start_s = np.linalg.solve(np.eye(ds) - Ms, run)
        zeta_s[0] = start_s
        for j in range(n - 1):
            zeta_s[j + 1] = As @ zeta_s[j] - eta_s[j]

        du = d - ds
        run = np.zeros(du)
        Mu = np.eye(du)
        for j in range(n - 1, -1, -1):
            run = Au_inv @ (run + eta_u[j])
            Mu = Au_inv @ Mu
        start_u = np.linalg.solve(np.eye(du) - Mu, run)
        zeta_u[0] = start_u
        # backward replay keeps every factor contracting (Au_inv on E^u)
        carry = start_u  # value at the wrap index n == 0
        for j in range(n - 1, 0, -1):
            carry = Au_inv @ (carry + eta_u[j])
            zeta_u[j] = carry
    else:
        for j in range(n - 1):
            zeta_s[j + 1] = As @ zeta_s[j] - eta_s[j]
        for j in range(n - 2, -1, -1):
            zeta_u[j] = Au_inv @ (zeta_u[j + 1] + eta_u[j])

    corrections = np.hstack([zeta_s, zeta_u]) @ s.basis.T
    return _result_from_orbit(map, po, corrections, iterations=0, converged=True,
                              method="exact")


def newton_shadow(map: ToralAutomorphism, po: PseudoOrbit, *, tol: float = 1e-12,
                  max_iter: int = 20, max_defect: float | None = None) -> ShadowResult:
    """Newton solve of the orbit equations y_{j+1} = f(y_j).

    Unknowns are lifted displacements v_j from the pseudo-orbit; segments get
    the free-end clamps (stable block zero on the left, unstable on the
    right), periodic orbits get the cyclic closure.  Admissibility of the
    defect against delta_0 is checked, not assumed; that gate is what keeps
    the Newton system diagonally dominant in the adapted norm.  On linear
    maps the solution coincides with `exact_shadow_linear`.

    Non-convergence is reported through `converged=False` with the final
    residual, not an exception.
    """
    s = _splitting_of(map)
    _check_gate(po.defect, s, max_defect)
    n, d = po.points.shape
    ds = s.stable_dim
    if n == 1 and not po.periodic:
        return _result_from_orbit(map, po, np.zeros((1, d)), iterations=1,
                                  converged=True, method="newton")

    x = po.points
    A = map.matrix.astype(float)
    n_eq = n if po.periodic else n - 1

    def residual_rows(v: np.ndarray) -> np.ndarray:
        y = wrap(x + v)
        images = map.apply_array(y)
        if po.periodic:
            return minimal_lift(images - np.roll(y, -1, axis=0))
        return minimal_lift(images[:-1] - y[1:])

    rows_i, cols_i, data = [], [], []

    def add_block(r0: int, c0: int, block: np.ndarray):
        br, bc = block.shape
        for i in range(br):
            for j in range(bc):
                rows_i.append(r0 + i)
                cols_i.append(c0 + j)
                data.append(block[i, j])

    for j in range(n_eq):
        add_block(j * d, j * d, A)
        add_block(j * d, ((j + 1) % n) * d, -np.eye(d))
    if not po.periodic:
        # clamp rows: stable coords of v_0, unstable coords of v_{n-1}
        add_block(n_eq * d, 0, s.basis_inv[:ds, :])
        add_block(n_eq * d + ds, (n - 1) * d, s.basis_inv[ds:, :])
    J = sp.csr_matrix((data, (rows_i, cols_i)), shape=(n * d, n * d))

    v = np.zeros((n, d))
    res = residual_rows(v)
    res_norm = float(np.max(np.linalg.norm(res, axis=1))) if len(res) else 0.0
    iterations = 0
    converged = res_norm < tol
    while not converged and iterations < max_iter:
        rhs = np.zeros(n * d)
        rhs[: n_eq * d] = -res.ravel()
        if not po.periodic:
            rhs[n_eq * d: n_eq * d + ds] = -(s.basis_inv[:ds, :] @ v[0])
            rhs[n_eq * d + ds:] = -(s.basis_inv[ds:, :] @ v[n - 1])
        delta = spla.spsolve(J, rhs).reshape(n, d)
        v = v + delta
        res = residual_rows(v)
        res_norm = float(np.max(np.linalg.norm(res, axis=1))) if len(res) else 0.0
        iterations += 1
        converged = res_norm < tol

    return _result_from_orbit(map, po, v, iterations=max(iterations, 1),
                              converged=converged, method="newton")


def shadow_operator(map: ToralAutomorphism, po: PseudoOrbit, *,
                    max_defect: float | None = None, tol: float = 1e-12) -> ShadowResult:
    """The shadowing operator T: pseudo-orbit -> shadowing orbit point.

    Linear toral automorphisms take the exact series route; anything else
    would go through the Newton solver.  Satisfies T(sigma po) = f(T(po))
    on interior windows.
    """
    return exact_shadow_linear(map, po, max_defect=max_defect)


def shift_pseudo(po: PseudoOrbit, n: int) -> PseudoOrbit:
    """Reindex by the shift sigma^n: the new index j holds the old x_{j+n}."""
    if po.periodic:
        return PseudoOrbit(np.roll(po.points, -n, axis=0), po.defect,
                           periodic=True, start_index=po.start_index)
    return PseudoOrbit(po.points, po.defect, periodic=False,
                       start_index=po.start_index - n)


def expansivity_test(map: ToralAutomorphism, p: TorusPoint, q: TorusPoint,
                     a: float, N: int) -> bool:
    """True iff d(f^n(p), f^n(q)) < a for every |n| <= N.

    Callers should keep `a` below the splitting's expansivity estimate; a
    True result over a window N >= log(a / d(p,q)) / log(lambda_s) then
    certifies p and q coincide up to the identification tolerance.
    """
    if torus_distance(p, q) >= a:
        return False
    fp, fq = p, q
    bp, bq = p, q
    for _ in range(N):
        fp, fq = map.apply(fp), map.apply(fq)
        if torus_distance(fp, fq) >= a:
            return False
        bp, bq = map.apply_inverse(bp), map.apply_inverse(bq)
        if torus_distance(bp, bq) >= a:
            return False
    return True


# ---------------------------------------------------------------------------
# flows


@dataclass(frozen=True)
class FlowPseudoTrajectory:
    """Sampled epsilon-pseudotrajectory of a suspension flow: states at the
    uniform grid t_i = t0 + i*h with h <= 1."""

    base_points: np.ndarray     # (n, d)
    fibers: np.ndarray          # (n,)
    h: float
    t0: float = 0.0
    defect: float = 0.0

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError("sample step h must be in (0, 1]")
        pts = wrap(np.asarray(self.base_points, dtype=float))
        pts.flags.writeable = False
        fib = np.asarray(self.fibers, dtype=float)
        fib.flags.writeable = False
        object.__setattr__(self, "base_points", pts)
        object.__setattr__(self, "fibers", fib)

    def __len__(self) -> int:
        return self.base_points.shape[0]

    def time(self, i: int) -> float:
        return self.t0 + i * self.h

    def state(self, i: int) -> FlowState:
        return (TorusPoint(self.base_points[i]), float(self.fibers[i]))


def suspend_pseudo_orbit(flow: SuspensionFlow, po: PseudoOrbit, h: float) -> FlowPseudoTrajectory:
    """Sample the suspension of a base-map pseudo-orbit on a grid of step h,
    where 1/h is an integer so integer times land on the grid."""
    m = round(1.0 / h)
    if abs(m * h - 1.0) > 1e-12:
        raise ValueError("1/h must be an integer to align samples with the roof")
    if po.periodic:
        raise ValueError("suspend a segment, not a periodic orbit")
    base, fibers = [], []
    for j in range(len(po)):
        n_sub = m if j < len(po) - 1 else 1  # last base point contributes t = end only
        for k in range(n_sub):
            base.append(po.points[j])
            fibers.append(k * h)
    traj = FlowPseudoTrajectory(np.array(base), np.array(fibers), h,
                                t0=float(po.start_index), defect=0.0)
    return FlowPseudoTrajectory(traj.base_points, traj.fibers, h,
                                t0=traj.t0, defect=flow_defect(flow, traj))


def flow_defect(flow: SuspensionFlow, traj: FlowPseudoTrajectory) -> float:
    """Max over sampled t and grid offsets |tau| < 1 of
    d(g(t + tau), phi_tau(g(t)))."""
    n = len(traj)
    if n < 2:
        return 0.0
    steps = int(np.ceil(1.0 / traj.h)) - 1
    worst = 0.0
    for i in range(n):
        for k in range(-steps, steps + 1):
            if k == 0 or not 0 <= i + k < n:
                continue
            moved = flow.flow_at(traj.state(i), k * traj.h)
            worst = max(worst, flow.distance(traj.state(i + k), moved))
    return worst


@dataclass(frozen=True)
class Reparameterization:
    """Increasing piecewise-linear time change with chord slopes within
    `distortion` of 1.  Breakpoints are (t, alpha(t)) pairs."""

    breakpoints: tuple[tuple[float, float], ...]
    distortion: float

    def __post_init__(self):
        ts = [t for t, _ in self.breakpoints]
        vals = [a for _, a in self.breakpoints]
        if len(ts) < 2:
            raise ValueError("need at least two breakpoints")
        if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])) or any(
            a2 <= a1 for a1, a2 in zip(vals, vals[1:])
        ):
            raise ValueError("reparameterization must be strictly increasing")

    def __call__(self, t: float) -> float:
        ts = np.array([b[0] for b in self.breakpoints])
        vals = np.array([b[1] for b in self.breakpoints])
        return float(np.interp(t, ts, vals))

    def inverse(self) -> "Reparameterization":
        return Reparameterization(
            tuple((a, t) for t, a in self.breakpoints), self.distortion
        )

    def max_slope_deviation(self) -> float:
        """Max |chord slope - 1| over breakpoint pairs.  Chord slopes are
        convex combinations of adjacent-segment slopes, so adjacent pairs
        realize the extremes."""
        ts = np.array([b[0] for b in self.breakpoints])
        vals = np.array([b[1] for b in self.breakpoints])
        slopes = np.diff(vals) / np.diff(ts)
        return float(np.max(np.abs(slopes - 1.0)))

    @classmethod
    def identity(cls, knots: Sequence[float]) -> "Reparameterization":
        return cls(tuple((float(t), float(t)) for t in knots), 0.0)


@dataclass(frozen=True)
class FlowShadowResult:
    state: FlowState
    reparameterization: Reparameterization
    sup_distance: float
    base_result: ShadowResult = field(repr=False)


def flow_shadow(flow: SuspensionFlow, traj: FlowPseudoTrajectory, delta: float, *,
                max_defect: float | None = None) -> FlowShadowResult:
    """Shadow a sampled flow pseudotrajectory up to a reparameterization.

    Extracts the base-map pseudo-orbit at integer sample times, shadows it
    with the exact series, and suspends the result.  With a constant roof no
    time shift is needed, so alpha is the identity with knots at the integer
    times; its distortion bound is checked by assertion.  The achieved
    suspension distance on the sample grid must come in below delta.
    """
    if len(traj) < 2:
        raise ValueError("insufficient samples: need at least two")
    times = traj.t0 + np.arange(len(traj)) * traj.h
    int_mask = np.abs(times - np.rint(times)) < 1e-9
    int_idx = np.nonzero(int_mask)[0]
    if len(int_idx) < 2:
        raise ValueError("insufficient samples: need at least two integer-time samples")
    int_times = np.rint(times[int_idx]).astype(int)
    base_po = PseudoOrbit.from_map(flow.base, traj.base_points[int_idx],
                                   start_index=int(int_times[0]))
    result = exact_shadow_linear(flow.base, base_po, max_defect=max_defect)

    x0: FlowState = (result.point, 0.0)
    worst = 0.0
    for i in range(len(traj)):
        shadow_state = flow.flow_at(x0, float(times[i]))
        worst = max(worst, flow.distance(traj.state(i), shadow_state))
    if worst >= delta:
        raise ShadowingRefusal(worst, delta)

    alpha = Reparameterization.identity([float(t) for t in int_times])
    assert alpha.max_slope_deviation() <= delta, "constructed alpha violates distortion bound"
    return FlowShadowResult(state=x0, reparameterization=alpha,
                            sup_distance=worst, base_result=result)


# ---------------------------------------------------------------------------
# serialization


def pseudo_orbit_to_csv(po: PseudoOrbit, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"x{k}" for k in range(po.dim)])
        for j, row in zip(po.indices(), po.points):
            writer.writerow([int(j)] + [repr(float(v)) for v in row])


def pseudo_orbit_points_from_csv(path: str | Path) -> tuple[np.ndarray, int]:
    """Read (points, start_index) from an index/coordinates CSV.

    Raises ValueError naming the offending line on malformed rows.
    """
    rows: list[tuple[int, list[float]]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0].strip().lower() == "index":
                continue
            if not row:
                continue
            try:
                idx = int(row[0])
                coords = [float(v) for v in row[1:]]
                if len(coords) < 2:
                    raise ValueError("fewer than 2 coordinates")
            except ValueError as exc:
                raise ValueError(f"malformed CSV row at line {lineno}: {exc}") from exc
            rows.append((idx, coords))
    if not rows:
        raise ValueError("empty pseudo-orbit file")
    rows.sort(key=lambda r: r[0])
    indices = [r[0] for r in rows]
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise ValueError("pseudo-orbit indices must be consecutive")
    return np.array([r[1] for r in rows]), indices[0]


def pseudo_orbit_to_json_dict(po: PseudoOrbit) -> dict:
    return {
        "start_index": po.start_index,
        "periodic": po.periodic,
        "defect": po.defect,
        "points": po.points.tolist(),
    }


def pseudo_orbit_from_json_dict(d: dict) -> PseudoOrbit:
    return PseudoOrbit(np.array(d["points"]), float(d["defect"]),
                       periodic=bool(d["periodic"]), start_index=int(d["start_index"]))
