"""Command-line workbench: shadow, closure, sft, maximality, crovisier, and
the full experiment suite.

All numerical experiments are seeded and deterministic: the same config and
seed produce byte-identical output trees.  JSON carries structured results,
CSV carries plot series.  Exit codes: 0 success, 1 input error, 2
mathematical refusal (a precondition gate fired), 3 budget exhaustion.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import maximality as maximality_mod
from .closure import SamplingParams, SetApprox, gamma_for, iterate_closure
from .maximality import crovisier_set, local_product_check
from .shadowing import (
    PseudoOrbit,
    ShadowingRefusal,
    exact_shadow_linear,
    newton_shadow,
    pseudo_orbit_points_from_csv,
    shadow_operator,
    shift_pseudo,
)
from .symbolic import (
    PeriodicWord,
    SubshiftPresentation,
    equality_witness,
    is_locally_maximal,
    is_member,
    language,
    sft_closure,
    stabilization_check,
)
from .torus import (
    ProductSystem,
    ToralAutomorphism,
    TorusPoint,
    cat_map,
    crovisier_product,
    system_from_config,
    torus_distance,
    wrap,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_REFUSAL = 2
EXIT_BUDGET = 3


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared knobs for the numerical experiments; every tolerance must be
    positive and a fixed seed pins all sampled randomness."""

    delta: float = 0.05
    epsilon: float = 1e-3
    resolution: float = 0.02
    u_radius: float = 0.35
    max_iter: int = 25
    max_cycle_len: int = 8
    n_paths: int = 16
    path_len: int = 40
    seed: int = 0
    threads: int = 1

    def violations(self) -> list[str]:
        out = []
        for name in ("delta", "epsilon", "resolution", "u_radius"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("max_iter", "max_cycle_len", "path_len"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_paths < 0:
            out.append(f"n_paths must be >= 0, got {self.n_paths}")
        if self.threads < 1:
            out.append(f"threads must be >= 1, got {self.threads}")
        return out

    def sampling(self) -> SamplingParams:
        return SamplingParams(max_cycle_len=self.max_cycle_len, n_paths=self.n_paths,
                              path_len=self.path_len, seed=self.seed)


def _emit(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _error(kind: str, message: str, code: int) -> int:
    sys.stdout.write(json.dumps({"error": {"kind": kind, "message": message}},
                                sort_keys=True) + "\n")
    return code


def _load_config(args) -> ExperimentConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    cfg = ExperimentConfig(**{k: v for k, v in base.items()
                              if k in ExperimentConfig.__dataclass_fields__})
    overrides = {}
    for name in ExperimentConfig.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None:
            overrides[name] = flag
    env_threads = os.environ.get("SHADOWBENCH_THREADS")
    if env_threads and "threads" not in overrides:
        overrides["threads"] = int(env_threads)
    cfg = replace(cfg, **overrides)
    problems = cfg.violations()
    if problems:
        raise ValueError("invalid config: " + "; ".join(problems))
    return cfg


def _load_system(args) -> ToralAutomorphism | ProductSystem:
    if getattr(args, "system", None):
        with open(args.system) as fh:
            return system_from_config(json.load(fh))
    return cat_map()


def _as_map(system) -> ToralAutomorphism:
    return system.as_automorphism() if isinstance(system, ProductSystem) else system


# ---------------------------------------------------------------------------
# subcommands


def cmd_shadow(args) -> int:
    try:
        cfg = _load_config(args)
        map = _as_map(_load_system(args))
        points, start = pseudo_orbit_points_from_csv(args.orbit)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _error("input", str(exc), EXIT_INPUT)
    try:
        po = PseudoOrbit.from_map(map, points, periodic=args.periodic,
                                  start_index=0 if args.periodic else start)
        solver = newton_shadow if args.method == "newton" else exact_shadow_linear
        result = solver(map, po)
    except ShadowingRefusal as exc:
        return _error("refusal", str(exc), EXIT_REFUSAL)
    except ValueError as exc:
        return _error("input", str(exc), EXIT_INPUT)
    payload = {"pseudo_orbit": {"defect": po.defect, "length": len(po),
                                "periodic": po.periodic},
               "result": result.to_json_dict()}
    _emit(payload, args.out)
    return EXIT_OK


def cmd_closure(args) -> int:
    try:
        cfg = _load_config(args)
        map = _as_map(_load_system(args))
        sa = SetApprox.from_csv(args.points, cfg.resolution, label="Lambda_0")
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _error("input", str(exc), EXIT_INPUT)
    try:
        trace = iterate_closure(map, sa, cfg.delta, cfg.u_radius, cfg.max_iter,
                                params=cfg.sampling(), max_workers=cfg.threads)
    except ShadowingRefusal as exc:
        return _error("refusal", str(exc), EXIT_REFUSAL)
    payload = trace.to_json_dict(include_iterates=args.include)
    _emit(payload, args.out)
    if args.out_csv:
        trace.to_csv(args.out_csv)
    return EXIT_BUDGET if trace.verdict.kind == "budget_exhausted" else EXIT_OK


def _read_words(path: str, alphabet: int) -> list[PeriodicWord]:
    words = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            words.append(PeriodicWord.from_text(line, alphabet))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if not words:
        raise ValueError("no words in file")
    return words


def cmd_sft(args) -> int:
    try:
        gens = _read_words(args.words, args.alphabet)
        s = SubshiftPresentation(args.alphabet, tuple(gens))
    except (OSError, ValueError) as exc:
        return _error("input", str(exc), EXIT_INPUT)

    payload: dict = {"alphabet": args.alphabet,
                     "generators": [g.to_text() for g in gens]}
    if args.language:
        k = args.language
        payload["language"] = {"k": k, "words": ["".join(map(str, w))
                                                 for w in language(s, k)]}
    if args.closure:
        k = args.closure
        t = sft_closure(s, k)
        payload["closure"] = {"k": k, "admissible": ["".join(map(str, w))
                                                     for w in t.sorted_words()],
                              "stabilizes": stabilization_check(s, k)}
    if args.maximal:
        k = is_locally_maximal(s, args.maximal)
        entry: dict = {"kmax": args.maximal, "k": k}
        if k is None:
            w = None
            for kk in range(1, args.maximal + 1):
                w = equality_witness(s, kk)
                if w is not None:
                    break
            entry["witness"] = w.to_text() if w is not None else None
        payload["locally_maximal"] = entry
    if args.member:
        if not args.window:
            return _error("input", "--member needs --window", EXIT_INPUT)
        try:
            w = PeriodicWord.from_text(args.member, args.alphabet)
        except ValueError as exc:
            return _error("input", str(exc), EXIT_INPUT)
        t = sft_closure(s, args.window)
        payload["member"] = {"word": w.to_text(), "window": args.window,
                             "in_closure": is_member(t, w)}
    _emit(payload, args.out)
    return EXIT_OK


def cmd_maximality(args) -> int:
    try:
        cfg = _load_config(args)
        map = _as_map(_load_system(args))
        sa = SetApprox.from_csv(args.points, cfg.resolution)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _error("input", str(exc), EXIT_INPUT)
    eps = args.eps if args.eps is not None else 0.1
    delta = args.pair_delta if args.pair_delta is not None else min(
        maximality_mod.bracket_delta_for(map.splitting, eps), 3 * cfg.resolution)
    tol = args.membership_tol if args.membership_tol is not None else 2 * cfg.resolution
    try:
        report = local_product_check(map, sa, eps, delta, tol)
    except maximality_mod.BracketError as exc:
        return _error("refusal", str(exc), EXIT_REFUSAL)
    _emit(report.to_json_dict(), args.out)
    return EXIT_OK


def cmd_crovisier(args) -> int:
    try:
        cfg = _load_config(args)
        system = _load_system(args)
        if not isinstance(system, ProductSystem):
            system = crovisier_product()
        q = TorusPoint(tuple(args.q)) if args.q else TorusPoint((0.5, 0.0))
        r = TorusPoint(tuple(args.r)) if args.r else TorusPoint((0.0, 0.0))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _error("input", str(exc), EXIT_INPUT)
    width = 2.0 ** -args.depth
    v_radius = args.v_radius if args.v_radius is not None else 2 * width
    try:
        grid = crovisier_set(system, q, r, v_radius, args.depth, args.n_iter,
                             q_period=args.q_period)
    except ValueError as exc:
        return _error("input", str(exc), EXIT_INPUT)
    payload: dict = {"depth": args.depth, "v_radius": v_radius,
                     "cells": grid.count, "grid": grid.to_rle()}
    exit_code = EXIT_OK
    if args.closure:
        F = system.as_automorphism()
        lam = grid.as_set_approx("crovisier")
        delta = args.closure_delta if args.closure_delta is not None else 4 * width
        u_radius = args.closure_u_radius if args.closure_u_radius is not None else 3 * width
        trace = iterate_closure(F, lam, delta, u_radius, cfg.max_iter,
                                params=cfg.sampling(), max_defect=np.inf,
                                max_workers=cfg.threads)
        payload["closure"] = trace.to_json_dict(include_iterates="none")
        payload["closure"]["gamma"] = gamma_for(F, delta)
        if args.out_csv:
            trace.to_csv(args.out_csv)
        if trace.verdict.kind == "budget_exhausted":
            exit_code = EXIT_BUDGET
    _emit(payload, args.out)
    return exit_code


# ---------------------------------------------------------------------------
# suite


def _suite_shadow(cfg: ExperimentConfig, map, out_dir: Path, quick: bool) -> dict:
    rng = np.random.default_rng(cfg.seed)
    K = map.splitting.shadow_bound(adapted=True)
    n_orbits = 20 if quick else 200
    length = 100 if quick else 200
    worst_ratio = 0.0
    worst_gap = 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        for _ in range(n_orbits):
            pts = _noisy_orbit(map, rng, length, eps)
            po = PseudoOrbit.from_map(map, pts, start_index=-(length // 2))
            exact = exact_shadow_linear(map, po)
            newt = newton_shadow(map, po)
            worst_ratio = max(worst_ratio, exact.sup_distance_adapted / eps)
            worst_gap = max(worst_gap, torus_distance(exact.point, newt.point))
    result = {"orbits_per_scale": n_orbits, "length": length,
              "K_adapted": K, "worst_ratio": worst_ratio,
              "worst_exact_newton_gap": worst_gap,
              "bound_holds": bool(worst_ratio <= K)}
    (out_dir / "shadow.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    return result


def _noisy_orbit(map, rng, length, eps):
    x = rng.random(map.dim)
    pts = [x]
    for _ in range(length - 1):
        step = rng.standard_normal(map.dim)
        step *= rng.uniform(0, eps) / np.linalg.norm(step)
        x = wrap(map.matrix.astype(float) @ x + step)
        pts.append(x)
    return np.array(pts)


def _suite_equivariance(cfg: ExperimentConfig, map, out_dir: Path, quick: bool) -> dict:
    rng = np.random.default_rng(cfg.seed + 1)
    n = 20 if quick else 200
    worst = 0.0
    for _ in range(n):
        pts = _noisy_orbit(map, rng, 120, 1e-3)
        po = PseudoOrbit.from_map(map, pts, start_index=-60)
        lhs = shadow_operator(map, shift_pseudo(po, 1)).point
        rhs = map.apply(shadow_operator(map, po).point)
        worst = max(worst, torus_distance(lhs, rhs))
    result = {"cases": n, "worst_discrepancy": worst, "passes": bool(worst < 1e-9)}
    (out_dir / "equivariance.json").write_text(
        json.dumps(result, sort_keys=True, indent=2) + "\n")
    return result


def closure_battery(map, resolution: float = 0.02) -> list[tuple[str, SetApprox]]:
    """Seeded stabilization inputs: fixed points, periodic nets, and
    homoclinic (horseshoe-generating) windows."""
    from .torus import TorusPoint

    entries: list[tuple[str, SetApprox]] = [
        ("fixed-point", SetApprox(np.array([[0.0, 0.0]]), resolution, "fp")),
        ("two-cycle", SetApprox(np.array([[0.8, 0.6], [0.2, 0.4]]), resolution, "2cyc")),
        ("three-cycle", SetApprox(np.array([[0.75, 0.5], [0.0, 0.25], [0.25, 0.25]]),
                                  resolution, "3cyc")),
        ("cycles-union", SetApprox(np.array([[0.8, 0.6], [0.2, 0.4],
                                             [0.75, 0.5], [0.0, 0.25], [0.25, 0.25]]),
                                   resolution, "union")),
    ]
    s = map.splitting
    vu, vs = s.unstable_basis[:, 0], s.stable_basis[:, 0]
    for tag, lattice in (("m10", (1, 0)), ("m01", (0, 1)), ("m11", (1, 1))):
        t, _ = np.linalg.solve(np.column_stack([vu, -vs]), np.array(lattice, float))
        z = wrap(t * vu)
        window = map.orbit_segment(TorusPoint(z), -3, 3)
        pts = np.vstack([[[0.0, 0.0]], window])
        entries.append((f"homoclinic-{tag}",
                        SetApprox.build(pts, resolution, f"homoclinic-{tag}")))
    for n_win, tag in ((2, "short"), (4, "long"), (5, "longer")):
        t, _ = np.linalg.solve(np.column_stack([vu, -vs]), np.array([1.0, 0.0]))
        z = wrap(t * vu)
        window = map.orbit_segment(TorusPoint(z), -n_win, n_win)
        pts = np.vstack([[[0.0, 0.0]], window])
        entries.append((f"homoclinic-{tag}",
                        SetApprox.build(pts, resolution, f"homoclinic-{tag}")))
    return entries


def _suite_closure(cfg: ExperimentConfig, map, out_dir: Path, quick: bool) -> dict:
    entries = closure_battery(map, cfg.resolution)
    if quick:
        entries = entries[:3]
    results = {}
    for name, sa in entries:
        trace = iterate_closure(map, sa, cfg.delta, cfg.u_radius, cfg.max_iter,
                                params=cfg.sampling(), max_workers=cfg.threads)
        eps = 0.1
        delta_pair = min(maximality_mod.bracket_delta_for(map.splitting, eps),
                         3 * cfg.resolution)
        lps = local_product_check(map, trace.final, eps, delta_pair,
                                  2 * cfg.resolution)
        trace.to_csv(out_dir / f"closure_{name}.csv")
        results[name] = {
            "verdict": {"kind": trace.verdict.kind, "index": trace.verdict.index},
            "nus": list(trace.nus),
            "final_size": len(trace.final),
            "gamma": trace.gamma,
            "dichotomy_pass_rate": trace.dichotomy_pass_rate(),
            "lps_passed": lps.passed,
            "lps_pairs": lps.pairs_tested,
        }
    (out_dir / "closure.json").write_text(json.dumps(results, sort_keys=True, indent=2) + "\n")
    return results


def _suite_sft(cfg: ExperimentConfig, out_dir: Path, quick: bool) -> dict:
    rng = np.random.default_rng(cfg.seed + 2)
    full = SubshiftPresentation(2, (PeriodicWord.constant(0, 2),
                                    PeriodicWord.constant(1, 2),
                                    PeriodicWord.from_cycle((0, 1), 2)))
    golden = SubshiftPresentation(2, tuple(
        PeriodicWord.from_cycle(c, 2)
        for c in ((0,), (0, 1), (0, 0, 1), (0, 0, 0, 1))))
    even = SubshiftPresentation(2, tuple(
        PeriodicWord.from_cycle(c, 2)
        for c in [(0,), (1,)] + [(0,) + (1,) * (2 * m) for m in range(1, 6)]))
    kmax_even = 4 if quick else 8
    witness = None
    for kk in range(1, kmax_even + 1):
        witness = equality_witness(even, kk, period_bound=2 * kmax_even)
        if witness is not None:
            break
    n_random = 20 if quick else 100
    k_values = (1, 2, 3) if quick else (1, 2, 3, 4)
    stab_all = all(
        stabilization_check(_random_presentation(rng), k)
        for _ in range(n_random) for k in k_values
    )
    result = {
        "full_shift_k": is_locally_maximal(full, 4),
        "golden_mean_k": is_locally_maximal(golden, 4),
        "even_shift_k": is_locally_maximal(even, kmax_even, period_bound=2 * kmax_even),
        "even_shift_witness": witness.to_text() if witness else None,
        "random_stabilization_all_true": bool(stab_all),
        "random_cases": n_random * len(k_values),
    }
    (out_dir / "sft.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    return result


def _random_presentation(rng) -> SubshiftPresentation:
    n = int(rng.integers(2, 4))
    gens = []
    for _ in range(int(rng.integers(1, 4))):
        L = tuple(int(v) for v in rng.integers(n, size=rng.integers(1, 4)))
        core = tuple(int(v) for v in rng.integers(n, size=rng.integers(0, 4)))
        R = tuple(int(v) for v in rng.integers(n, size=rng.integers(1, 4)))
        gens.append(PeriodicWord(L, core, R, n))
    return SubshiftPresentation(n, tuple(gens))


def _suite_crovisier(cfg: ExperimentConfig, out_dir: Path, quick: bool) -> dict:
    system = crovisier_product()
    depth = 3 if quick else 4
    width = 2.0 ** -depth
    q, r = TorusPoint((0.5, 0.0)), TorusPoint((0.0, 0.0))
    grid = crovisier_set(system, q, r, 2 * width, depth, n_iter=4)
    F = system.as_automorphism()
    lam = grid.as_set_approx("crovisier")
    max_iter = 3 if quick else 6
    trace = iterate_closure(
        F, lam, 4 * width, 3 * width, max_iter,
        params=SamplingParams(max_cycle_len=2, n_paths=cfg.n_paths,
                              path_len=min(cfg.path_len, 30), seed=cfg.seed + 3),
        max_defect=np.inf, max_workers=cfg.threads)
    result = {
        "depth": depth,
        "cells": grid.count,
        "verdict": {"kind": trace.verdict.kind, "index": trace.verdict.index},
        "nus": list(trace.nus),
        "gamma": trace.gamma,
        "dichotomy_pass_rate": trace.dichotomy_pass_rate(),
        "never_stabilized": trace.verdict.kind != "stabilized",
    }
    trace.to_csv(out_dir / "crovisier.csv")
    (out_dir / "crovisier.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    return result


def cmd_suite(args) -> int:
    try:
        cfg = _load_config(args)
    except ValueError as exc:
        return _error("input", str(exc), EXIT_INPUT)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    quick = args.scale == "quick"
    map = cat_map()

    shadow = _suite_shadow(cfg, map, out_dir, quick)
    equi = _suite_equivariance(cfg, map, out_dir, quick)
    closure = _suite_closure(cfg, map, out_dir, quick)
    sft = _suite_sft(cfg, out_dir, quick)
    crov = _suite_crovisier(cfg, out_dir, quick)

    summary = {
        "scale": args.scale,
        "seed": cfg.seed,
        "shadow_bound_holds": shadow["bound_holds"],
        "equivariance_passes": equi["passes"],
        "closure_all_stabilized_pass_lps": all(
            v["verdict"]["kind"] != "stabilized" or v["lps_passed"]
            for v in closure.values()),
        "dichotomy_all": all(v["dichotomy_pass_rate"] == 1.0 for v in closure.values())
        and crov["dichotomy_pass_rate"] == 1.0,
        "sft": {k: sft[k] for k in ("full_shift_k", "golden_mean_k", "even_shift_k",
                                    "random_stabilization_all_true")},
        "crovisier_never_stabilized": crov["never_stabilized"],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    sys.stdout.write(json.dumps({"out": str(out_dir), "summary": summary},
                                sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--resolution", type=float, default=None)
    p.add_argument("--u-radius", dest="u_radius", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--max-cycle-len", dest="max_cycle_len", type=int, default=None)
    p.add_argument("--n-paths", dest="n_paths", type=int, default=None)
    p.add_argument("--path-len", dest="path_len", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowbench",
        description="Shadowing, shadowing-closure stabilization, local product "
                    "structure, and symbolic dynamics on toral systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shadow", help="shadow a pseudo-orbit file")
    p.add_argument("--orbit", required=True, help="CSV of index,x0,x1,...")
    p.add_argument("--system", help="system JSON (default: cat map)")
    p.add_argument("--method", choices=("exact", "newton"), default="exact")
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--out", help="result JSON path (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_shadow)

    p = sub.add_parser("closure", help="iterate the shadowing closure")
    p.add_argument("--points", required=True, help="CSV point list for Lambda_0")
    p.add_argument("--system", help="system JSON (default: cat map)")
    p.add_argument("--include", choices=("none", "final", "all"), default="final")
    p.add_argument("--out", help="trace JSON path (default: stdout)")
    p.add_argument("--out-csv", dest="out_csv", help="(j, nu_j) CSV path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_closure)

    p = sub.add_parser("sft", help="language/closure/maximality on word files")
    p.add_argument("--words", required=True, help="file of (cycle)core(cycle) lines")
    p.add_argument("--alphabet", type=int, required=True)
    p.add_argument("--language", type=int, metavar="K")
    p.add_argument("--closure", type=int, metavar="K")
    p.add_argument("--maximal", type=int, metavar="KMAX")
    p.add_argument("--member", metavar="WORD")
    p.add_argument("--window", type=int, metavar="K")
    p.add_argument("--out", help="result JSON path (default: stdout)")
    p.set_defaults(func=cmd_sft)

    p = sub.add_parser("maximality", help="local-product-structure report")
    p.add_argument("--points", required=True)
    p.add_argument("--system", help="system JSON (default: cat map)")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--pair-delta", dest="pair_delta", type=float, default=None)
    p.add_argument("--membership-tol", dest="membership_tol", type=float, default=None)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_maximality)

    p = sub.add_parser("crovisier", help="punctured 4-torus grid set")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--v-radius", dest="v_radius", type=float, default=None)
    p.add_argument("--n-iter", dest="n_iter", type=int, default=4)
    p.add_argument("--q", type=float, nargs=2, default=None)
    p.add_argument("--r", type=float, nargs=2, default=None)
    p.add_argument("--q-period", dest="q_period", type=int, default=1)
    p.add_argument("--system", help="product system JSON")
    p.add_argument("--closure", action="store_true",
                   help="also run the stabilization iteration on the grid")
    p.add_argument("--closure-delta", dest="closure_delta", type=float, default=None)
    p.add_argument("--closure-u-radius", dest="closure_u_radius", type=float, default=None)
    p.add_argument("--out", help="result JSON path (default: stdout)")
    p.add_argument("--out-csv", dest="out_csv", help="(j, nu_j) CSV path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_crovisier)

    p = sub.add_parser("suite", help="run the full experiment battery")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", choices=("quick", "full"), default="full")
    _add_config_flags(p)
    p.set_defaults(func=cmd_suite)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _error("input", str(exc), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
