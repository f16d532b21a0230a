"""Shadowing closure on finite set approximations and the stabilization
iteration Lambda_{j+1} = sh(Lambda_j, delta).

A compact invariant set is represented by an r-net of points (`SetApprox`).
One closure step discretizes the delta-pseudo-orbit space as a transition
graph on the net, samples generating pseudo-orbits (cycles, cycle-to-cycle
connectors, random walks), shadows each sample, and merges the full shadow
orbit windows back into the net.  The iteration records the Hausdorff
increments nu_j, detects stabilization and neighborhood escape, and reports
whether the gamma-dichotomy (consecutive increments cannot both be small)
held along the way.

Torus nearest-neighbor machinery is scipy's periodic cKDTree (boxsize=1),
which realizes exactly the min-over-translates metric of `torus_distance`;
tests cross-check it against the brute-force definition.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from itertools import islice, product
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from .shadowing import PseudoOrbit, ShadowingRefusal, exact_shadow_linear
from .torus import ToralAutomorphism, TorusPoint, wrap

__all__ = [
    "SetApprox",
    "TransitionGraph",
    "SamplingParams",
    "ClosureTrace",
    "Verdict",
    "hausdorff",
    "directed_hausdorff",
    "build_graph",
    "sample_pseudo_orbits",
    "shadowing_closure",
    "gamma_for",
    "iterate_closure",
]


def _torus_tree(points: np.ndarray) -> cKDTree:
    return cKDTree(wrap(points), boxsize=1.0)


class SetApprox:
    """Finite r-net approximating a compact subset of T^d.

    The net condition (no two points closer than r/2) is enforced on
    construction; `build` coarsens instead of rejecting, keeping the
    earliest-inserted point of any r/2-cluster.
    """

    __slots__ = ("points", "resolution", "label", "_tree")

    def __init__(self, points: np.ndarray, resolution: float, label: str = "",
                 _validate: bool = True):
        pts = wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        if pts.size == 0:
            raise ValueError("set approximation must be nonempty")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        pts.flags.writeable = False
        self.points = pts
        self.resolution = float(resolution)
        self.label = label
        self._tree: cKDTree | None = None
        if _validate and len(pts) > 1:
            pairs = self.tree.query_pairs(r=resolution / 2.0, output_type="ndarray")
            if len(pairs):
                i, j = pairs[0]
                raise ValueError(
                    f"net condition violated: points {i} and {j} are closer than r/2"
                )

    @classmethod
    def build(cls, points: Iterable, resolution: float, label: str = "") -> "SetApprox":
        pts = wrap(np.atleast_2d(np.asarray(list(points), dtype=float)))
        kept = _greedy_net(pts, resolution / 2.0)
        return cls(kept, resolution, label, _validate=False)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = _torus_tree(self.points)
        return self._tree

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self):
        return f"SetApprox({len(self)} points, r={self.resolution}, label={self.label!r})"

    def distance_to(self, queries: np.ndarray) -> np.ndarray:
        """Torus distance from each query point to the net."""
        d, _ = self.tree.query(wrap(np.atleast_2d(queries)), k=1)
        return d

    def merge(self, new_points: np.ndarray, label: str | None = None) -> tuple["SetApprox", int]:
        """Coarsen `new_points` into the net; existing points always survive.

        Returns the merged net and the number of points actually added.
        """
        cand = wrap(np.atleast_2d(np.asarray(new_points, dtype=float)))
        if cand.size == 0:
            return self, 0
        threshold = self.resolution / 2.0
        far = self.distance_to(cand) >= threshold
        cand = cand[far]
        if len(cand) == 0:
            return (self if label is None else SetApprox(self.points, self.resolution,
                                                         label, _validate=False)), 0
        kept = _greedy_net(cand, threshold, against=self.points)
        if len(kept) == 0:
            return (self if label is None else SetApprox(self.points, self.resolution,
                                                         label, _validate=False)), 0
        merged = np.vstack([self.points, kept])
        return SetApprox(merged, self.resolution,
                         self.label if label is None else label, _validate=False), len(kept)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{k}" for k in range(self.dim)])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, resolution: float, label: str = "") -> "SetApprox":
        pts = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if lineno == 1 and row and row[0].strip().lower().startswith("x"):
                    continue
                if not row:
                    continue
                try:
                    pts.append([float(v) for v in row])
                except ValueError as exc:
                    raise ValueError(f"malformed CSV row at line {lineno}: {exc}") from exc
        return cls.build(np.array(pts), resolution, label)


def _greedy_net(points: np.ndarray, threshold: float,
                against: np.ndarray | None = None) -> np.ndarray:
    """Keep-first filter: drop any point within `threshold` of an earlier
    kept point (and of `against`, assumed already a valid net)."""
    if len(points) == 0:
        return points
    d = points.shape[1]
    n_b = max(1, int(np.floor(1.0 / max(threshold, 1e-9))))
    cell = 1.0 / n_b
    buckets: dict[tuple, list[np.ndarray]] = {}

    def bucket_of(p) -> tuple:
        return tuple((p // cell).astype(int) % n_b)

    def near(p) -> bool:
        base = (p // cell).astype(int)
        for off in product((-1, 0, 1), repeat=d):
            key = tuple((base + np.array(off)) % n_b)
            for q in buckets.get(key, ()):
                delta = np.abs(p - q)
                delta = np.minimum(delta, 1.0 - delta)
                if float(np.sqrt(np.sum(delta * delta))) < threshold:
                    return True
        return False

    if against is not None:
        for q in against:
            buckets.setdefault(bucket_of(q), []).append(q)
    kept = []
    for p in points:
        if not near(p):
            kept.append(p)
            buckets.setdefault(bucket_of(p), []).append(p)
    if against is not None:
        return np.array(kept) if kept else np.empty((0, d))
    return np.array(kept)


def directed_hausdorff(A: SetApprox | np.ndarray, B: SetApprox | np.ndarray) -> float:
    """sup over a in A of the torus distance from a to B."""
    pa = A.points if isinstance(A, SetApprox) else wrap(np.atleast_2d(A))
    tb = B.tree if isinstance(B, SetApprox) else _torus_tree(np.atleast_2d(B))
    d, _ = tb.query(pa, k=1)
    return float(np.max(d))


def hausdorff(A: SetApprox, B: SetApprox) -> float:
    """Hausdorff distance between two nets under the torus metric."""
    if len(A) == 0 or len(B) == 0:
        raise ValueError("Hausdorff distance needs nonempty sets")
    if A.dim != B.dim:
        raise ValueError("dimension mismatch")
    return max(directed_hausdorff(A, B), directed_hausdorff(B, A))


@dataclass(frozen=True)
class TransitionGraph:
    """Edges (i, j) with d(f(x_i), x_j) < delta over a net: the finite
    presentation of the delta-pseudo-orbit space.

    Dense graphs beyond `edge_cap` stay lazy: `edges` is None and neighbor
    queries go through the KD-tree on demand.
    """

    set: SetApprox
    delta: float
    images: np.ndarray = field(repr=False)
    edges: np.ndarray | None = field(repr=False)
    n_edges: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.set)

    @property
    def materialized(self) -> bool:
        return self.edges is not None

    def out_neighbors(self, i: int) -> np.ndarray:
        idx = self.set.tree.query_ball_point(self.images[i], r=self.delta)
        return np.sort(np.asarray(idx, dtype=int))

    def self_loop_nodes(self) -> np.ndarray:
        from .torus import torus_distance_array

        d = torus_distance_array(self.images, self.set.points)
        return np.nonzero(d < self.delta)[0]

    def verify_edges(self, map: ToralAutomorphism) -> bool:
        """Re-check the defining inequality on every materialized edge."""
        if self.edges is None or len(self.edges) == 0:
            return True
        from .torus import torus_distance_array

        img = map.apply_array(self.set.points[self.edges[:, 0]])
        return bool(np.all(torus_distance_array(img, self.set.points[self.edges[:, 1]]) < self.delta))


def build_graph(map: ToralAutomorphism, sa: SetApprox, delta: float, *,
                edge_cap: int = 2_000_000) -> TransitionGraph:
    """Transition graph of the net under the map at tolerance delta.

    Callers should keep delta above the net resolution, otherwise the graph
    can be edgeless even on an invariant net.  For an f-invariant net with
    resolution r < delta every node has out-degree >= 1.
    """
    if delta <= 0:
        raise ValueError("positive delta required")
    images = map.apply_array(sa.points)
    counts = sa.tree.query_ball_point(images, r=delta, return_length=True)
    total = int(np.sum(counts))
    if total > edge_cap:
        return TransitionGraph(sa, delta, images, None, total)
    neighbor_lists = sa.tree.query_ball_point(images, r=delta)
    edges = [(i, j) for i, lst in enumerate(neighbor_lists) for j in sorted(lst)]
    arr = np.array(edges, dtype=int) if edges else np.empty((0, 2), dtype=int)
    return TransitionGraph(sa, delta, images, arr, total)


@dataclass(frozen=True)
class SamplingParams:
    """Knobs for pseudo-orbit generation from a transition graph."""

    max_cycle_len: int = 8
    n_paths: int = 32
    path_len: int = 40
    seed: int = 0
    cycle_cap: int = 2000          # hard cap on enumerated cycles
    connector_budget: int = 200    # total cycle-to-cycle connecting paths
    connectors_per_pair: int = 5
    pad: int = 15                  # points of cycle padding on each connector side


@dataclass(frozen=True)
class SampledOrbits:
    orbits: tuple[PseudoOrbit, ...]
    partial: bool  # caps were hit or the graph was too dense to enumerate


def _rotate_cycle(cycle: list[int]) -> tuple[int, ...]:
    k = cycle.index(min(cycle))
    return tuple(cycle[k:] + cycle[:k])


def _pad_with_cycle(cycle: tuple[int, ...], reps: int, end_at: int | None = None,
                    start_at: int | None = None) -> list[int]:
    """Repeat a cycle so the padded block ends just before `end_at`, or
    starts just after `start_at` (both nodes on the cycle)."""
    if end_at is not None:
        k = cycle.index(end_at)
        rotated = cycle[k + 1:] + cycle[:k + 1]  # ...ends AT end_at
        return list(rotated) * reps
    k = cycle.index(start_at)
    rotated = cycle[k:] + cycle[:k]  # starts at start_at
    return list(rotated) * reps


def _segment_pseudo(points: np.ndarray, idx: Sequence[int], delta: float) -> PseudoOrbit:
    seq = np.asarray(idx, dtype=int)
    pts = points[seq]
    return PseudoOrbit(pts, delta, periodic=False, start_index=-(len(seq) // 2))


def sample_pseudo_orbits(graph: TransitionGraph, max_cycle_len: int | None = None,
                         n_paths: int | None = None, path_len: int | None = None,
                         seed: int | None = None, *,
                         params: SamplingParams | None = None) -> SampledOrbits:
    """Generate pseudo-orbits sitting on the graph, deterministically.

    Three families: (a) simple cycles up to max_cycle_len, (b) seeded random
    walks, (c) cycle-to-cycle connecting paths padded with their end cycles;
    the heteroclinic pattern p..p z q..q that makes closures grow.  Caps on
    cycle and connector counts flag the result partial instead of blowing
    up; graphs too dense to materialize fall back to self-loops, walks, and
    cycles recovered from walk self-intersections.
    """
    if graph.n_nodes == 0:
        raise ValueError("empty graph")
    p = params or SamplingParams()
    if max_cycle_len is not None:
        p = replace(p, max_cycle_len=max_cycle_len)
    if n_paths is not None:
        p = replace(p, n_paths=n_paths)
    if path_len is not None:
        p = replace(p, path_len=path_len)
    if seed is not None:
        p = replace(p, seed=seed)

    pts = graph.set.points
    delta = graph.delta
    rng = np.random.default_rng(p.seed)
    orbits: list[PseudoOrbit] = []
    partial = False

    if graph.materialized:
        G = nx.DiGraph()
        G.add_nodes_from(range(graph.n_nodes))
        G.add_edges_from(map(tuple, graph.edges))
        cycles = []
        gen = nx.simple_cycles(G, length_bound=p.max_cycle_len)
        for cyc in islice(gen, p.cycle_cap + 1):
            cycles.append(_rotate_cycle(cyc))
        if len(cycles) > p.cycle_cap:
            cycles = cycles[: p.cycle_cap]
            partial = True
        cycles.sort()
        for cyc in cycles:
            orbits.append(PseudoOrbit(pts[list(cyc)], delta, periodic=True))

        reps = lambda c: max(1, -(-p.pad // len(c)))
        budget = p.connector_budget
        for c1, c2 in product(cycles, repeat=2):
            if c1 == c2 or budget <= 0:
                continue
            pair_left = p.connectors_per_pair
            for s, t in product(c1, c2):
                if pair_left <= 0 or budget <= 0:
                    break
                for path in islice(
                    nx.all_simple_paths(G, s, t, cutoff=p.path_len), pair_left
                ):
                    head = _pad_with_cycle(c1, reps(c1), end_at=s)
                    tail = _pad_with_cycle(c2, reps(c2), start_at=t)
                    orbits.append(_segment_pseudo(pts, head[:-1] + path + tail[1:], delta))
                    pair_left -= 1
                    budget -= 1
                    if pair_left <= 0 or budget <= 0:
                        break
        if budget <= 0:
            partial = True

        adjacency = {i: np.sort(np.array(list(G.successors(i)), dtype=int))
                     for i in G.nodes}
        neighbor = lambda i: adjacency[i]
    else:
        partial = True
        loops = graph.self_loop_nodes()
        for i in loops[: p.cycle_cap]:
            orbits.append(PseudoOrbit(pts[[i]], delta, periodic=True))
        neighbor = graph.out_neighbors

    walk_cycles: set[tuple[int, ...]] = set()
    for _ in range(p.n_paths):
        node = int(rng.integers(graph.n_nodes))
        walk = [node]
        for _ in range(p.path_len - 1):
            nbrs = neighbor(walk[-1])
            if len(nbrs) == 0:
                break
            nxt = int(nbrs[rng.integers(len(nbrs))])
            if nxt in walk and not graph.materialized:
                cyc = _rotate_cycle(walk[walk.index(nxt):])
                if cyc not in walk_cycles and len(walk_cycles) < p.cycle_cap:
                    walk_cycles.add(cyc)
                    orbits.append(PseudoOrbit(pts[list(cyc)], delta, periodic=True))
            walk.append(nxt)
        if len(walk) >= 2:
            orbits.append(_segment_pseudo(pts, walk, delta))

    return SampledOrbits(tuple(orbits), partial)


@dataclass(frozen=True)
class ClosureStepStats:
    n_sampled: int
    n_refused: int
    n_added: int
    partial_sampling: bool


def _closure_step(map: ToralAutomorphism, sa: SetApprox, delta: float,
                  params: SamplingParams, *, max_defect: float | None,
                  edge_cap: int, label: str,
                  max_workers: int = 1) -> tuple[SetApprox, ClosureStepStats]:
    graph = build_graph(map, sa, delta, edge_cap=edge_cap)
    sampled = sample_pseudo_orbits(graph, params=params)

    def shadow_one(po: PseudoOrbit) -> np.ndarray | None:
        measured = PseudoOrbit.from_map(map, po.points, periodic=po.periodic,
                                        start_index=po.start_index)
        try:
            return exact_shadow_linear(map, measured, max_defect=max_defect).orbit
        except ShadowingRefusal:
            return None

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(shadow_one, sampled.orbits))
    else:
        results = [shadow_one(po) for po in sampled.orbits]
    windows = [r for r in results if r is not None]
    refused = sum(r is None for r in results)
    if sampled.orbits and refused == len(sampled.orbits):
        raise ShadowingRefusal(delta, map.splitting.max_shadow_defect
                               if max_defect is None else max_defect)
    if windows:
        merged, added = sa.merge(np.vstack(windows), label=label)
    else:
        merged, added = SetApprox(sa.points, sa.resolution, label, _validate=False), 0
    return merged, ClosureStepStats(len(sampled.orbits), refused, added, sampled.partial)


def shadowing_closure(map: ToralAutomorphism, sa: SetApprox, delta: float, *,
                      params: SamplingParams | None = None,
                      max_defect: float | None = None,
                      edge_cap: int = 2_000_000,
                      max_workers: int = 1) -> SetApprox:
    """One application of sh(., delta) at the net's resolution.

    Shadows every sampled pseudo-orbit of the net's transition graph,
    collects full orbit windows (the closure is f-invariant, so all y_j
    belong, not just y_0), merges them into the net, and coarsens.  The
    result always contains the input points.  Refused pseudo-orbits are
    skipped; if every sample is refused the call errors.
    """
    merged, _ = _closure_step(map, sa, delta, params or SamplingParams(),
                              max_defect=max_defect, edge_cap=edge_cap,
                              label=sa.label, max_workers=max_workers)
    return merged


def gamma_for(map: ToralAutomorphism, delta: float,
              domain: SetApprox | None = None, *, margin: float = 0.1) -> float:
    """The gamma of the dichotomy argument: points gamma-close stay
    delta/4-close under one application of f or f^{-1}.

    gamma = min(delta/4, delta/(4L)) * (1 - margin) with L the Lipschitz
    bound of the map and its inverse (for a linear map, the larger operator
    norm; exact, so `domain` is unused).  The margin keeps the paper-side
    inequalities strict.
    """
    if delta <= 0:
        raise ValueError("positive delta required")
    L = max(map.lipschitz, 1.0)
    return min(delta / 4.0, delta / (4.0 * L)) * (1.0 - margin)


@dataclass(frozen=True)
class Verdict:
    kind: str            # stabilized | escaped_neighborhood | budget_exhausted
    index: int | None = None

    def __str__(self):
        return f"{self.kind}({self.index})" if self.index is not None else self.kind


@dataclass(frozen=True)
class ClosureTrace:
    """Record of a stabilization run: the iterates Lambda_0..Lambda_N, the
    increments nu_j = d_H(Lambda_j, Lambda_{j-1}), gamma, and the verdict."""

    iterates: tuple[SetApprox, ...]
    nus: tuple[float, ...]
    gamma: float
    verdict: Verdict
    delta: float
    u_radius: float
    stab_tol: float
    step_stats: tuple[ClosureStepStats, ...] = ()

    def __post_init__(self):
        assert len(self.nus) == len(self.iterates) - 1

    @property
    def final(self) -> SetApprox:
        return self.iterates[-1]

    def dichotomy(self, slack: float = 0.5) -> list[dict]:
        """Check max(nu_j, nu_{j+1}) >= gamma * (1 - slack) on consecutive
        non-stabilized pairs.  Failures are reported, never swallowed."""
        rows = []
        bound = self.gamma * (1.0 - slack)
        for k in range(len(self.nus) - 1):
            a, b = self.nus[k], self.nus[k + 1]
            if a <= self.stab_tol and b <= self.stab_tol:
                continue  # stabilized pair: the claim's hypothesis fails
            rows.append({
                "j": k + 1,
                "nu_j": a,
                "nu_j1": b,
                "holds": bool(max(a, b) >= bound),
            })
        return rows

    def dichotomy_pass_rate(self, slack: float = 0.5) -> float:
        rows = self.dichotomy(slack)
        if not rows:
            return 1.0
        return sum(r["holds"] for r in rows) / len(rows)

    def to_json_dict(self, include_iterates: str = "final") -> dict:
        out = {
            "delta": self.delta,
            "u_radius": self.u_radius,
            "gamma": self.gamma,
            "stab_tol": self.stab_tol,
            "verdict": {"kind": self.verdict.kind, "index": self.verdict.index},
            "nus": list(self.nus),
            "sizes": [len(s) for s in self.iterates],
            "dichotomy": self.dichotomy(),
            "steps": [
                {"sampled": s.n_sampled, "refused": s.n_refused,
                 "added": s.n_added, "partial": s.partial_sampling}
                for s in self.step_stats
            ],
        }
        if include_iterates == "all":
            out["iterates"] = [s.points.tolist() for s in self.iterates]
        elif include_iterates == "final":
            out["final"] = self.final.points.tolist()
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "nu_j", "set_size", "verdict"])
            writer.writerow([0, "", len(self.iterates[0]), ""])
            for j, nu in enumerate(self.nus, start=1):
                tag = str(self.verdict) if j == len(self.nus) else ""
                writer.writerow([j, repr(float(nu)), len(self.iterates[j]), tag])


def iterate_closure(map: ToralAutomorphism, lam0: SetApprox, delta: float,
                    u_radius: float, max_iter: int, *,
                    params: SamplingParams | None = None,
                    stab_tol: float | None = None,
                    confirm_steps: int = 3,
                    max_defect: float | None = None,
                    edge_cap: int = 2_000_000,
                    max_workers: int = 1) -> ClosureTrace:
    """Iterate the shadowing closure and classify the outcome.

    Stabilization is declared at the first index j whose following
    `1 + confirm_steps` increments all fall below `stab_tol`; the default
    tolerance 0.45 * resolution sits strictly below the net half-spacing
    r/2, so a step that genuinely adds a net point can never read as
    stabilization.  Escape fires when a new point leaves the u_radius
    neighborhood of Lambda_0.  Budget exhaustion is a verdict, not an error.
    """
    p = params or SamplingParams()
    tol = 0.45 * lam0.resolution if stab_tol is None else stab_tol
    gamma = gamma_for(map, delta)
    iterates = [SetApprox(lam0.points, lam0.resolution, "Lambda_0", _validate=False)]
    nus: list[float] = []
    stats: list[ClosureStepStats] = []
    verdict: Verdict | None = None
    quiet_run = 0

    for i in range(1, max_iter + 1):
        step_params = replace(p, seed=p.seed * 1_000_003 + i)
        current = iterates[-1]
        new_sa, st = _closure_step(map, current, delta, step_params,
                                   max_defect=max_defect, edge_cap=edge_cap,
                                   label=f"Lambda_{i}", max_workers=max_workers)
        added = new_sa.points[len(current):]
        nu = float(np.max(current.distance_to(added))) if len(added) else 0.0
        iterates.append(new_sa)
        nus.append(nu)
        stats.append(st)

        if len(added) and float(np.max(lam0.distance_to(added))) > u_radius:
            verdict = Verdict("escaped_neighborhood", i)
            break

        if nu <= tol:
            quiet_run += 1
            if quiet_run >= 1 + confirm_steps:
                verdict = Verdict("stabilized", i - quiet_run)
                break
        else:
            quiet_run = 0

    if verdict is None:
        verdict = Verdict("budget_exhausted", max_iter)

    return ClosureTrace(tuple(iterates), tuple(nus), gamma, verdict,
                        delta, u_radius, tol, tuple(stats))
