"""Reference optimizers: exhaustive grid, random sampling, and threshold-only search."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from typing import Callable, Sequence

import numpy as np

from cascadeopt._rng import PortableRng
from cascadeopt.bo import Lattice, Observation, OptimizationProblem, OptResult, _observe, _TraceCache
from cascadeopt.cascade_eval import CascadeConfig, SweepResult, evaluate_thresholds, sweep_arrays
from cascadeopt.profile_store import HyperParams, ProfileDataset, iter_architectures

log = logging.getLogger(__name__)


def _better(obj: float, key: tuple, best_obj: float, best_key: tuple | None) -> bool:
    """Lower objective wins; equal objectives go to the smaller encoding."""
    return obj < best_obj or (obj == best_obj and best_key is not None and key < best_key)


def _sweep_best(res: SweepResult) -> int | None:
    feas = np.flatnonzero(res.feasible)
    if feas.size == 0:
        return None
    # theta lattice rows are lexicographic, so argmin picks the smallest encoding on ties
    return int(feas[np.argmin(res.objective[feas])])


def _space(dataset: ProfileDataset, theta_resolution: int | None):
    space = dataset.design_space
    if theta_resolution is not None and theta_resolution != space.theta_resolution:
        space = dataclasses.replace(space, theta_resolution=theta_resolution)
    return space


def _sweep_slots(
    slots_iter, problem, traces, resolution, method, t0, progress, keep_cloud=True
) -> OptResult:
    best: Observation | None = None
    best_key = None
    clouds: dict[str, list] = {"energy": [], "error": [], "objective": [], "constraint": []}
    arch_count = 0
    for slots, key in slots_iter:
        arch_count += 1
        res = sweep_arrays(traces(slots), resolution, problem.kind)
        if keep_cloud:
            clouds["energy"].append(res.energy)
            clouds["error"].append(res.error)
            clouds["objective"].append(res.objective)
            clouds["constraint"].append(res.constraint)
        k = _sweep_best(res)
        if k is None:
            continue
        cand_key = key + tuple(res.thetas[k])
        obj = float(res.objective[k])
        if best is None or _better(obj, cand_key, best.objective, best_key):
            cfg = CascadeConfig(slots, tuple(float(t) for t in res.thetas[k]), problem.deployment)
            best = _observe(cfg, res.evaluation(k), method, 0)
            best_key = cand_key
            if progress is not None:
                progress({"method": method, "architectures": arch_count, "best_so_far": best.objective})
    cloud = {name: np.concatenate(parts) if parts else np.zeros(0) for name, parts in clouds.items()}
    return OptResult(
        method=method,
        best=best,
        history=[best] if best is not None else [],
        best_so_far=[best.objective if best else math.inf],
        wall_time_s=time.perf_counter() - t0,
        diagnostic="" if best is not None else "no feasible design",
        architectures_evaluated=arch_count,
        cloud=cloud if keep_cloud else {},
    )


def _arch_key(space, slots: Sequence[HyperParams]) -> tuple:
    key: list[float] = []
    for s, hp in zip(space.slots, slots):
        if s.optimizable:
            key.extend(d.normalize(v) for d, v in zip(s.dims, hp.values))
    return tuple(key)


def grid_search(
    problem: OptimizationProblem,
    dataset: ProfileDataset,
    theta_resolution: int | None = None,
    progress: Callable[[dict], None] | None = None,
    keep_cloud: bool = True,
) -> OptResult:
    """Exhaustive search over every (architecture x threshold) lattice point."""
    t0 = time.perf_counter()
    space = _space(dataset, theta_resolution)
    total = space.lattice_size()
    log.info("grid search over %d lattice points (%d architectures)", total, space.architecture_count())
    if progress is not None:
        progress({"method": "grid", "lattice_points": total})
    traces = _TraceCache(dataset, problem)
    slots_iter = ((slots, _arch_key(space, slots)) for slots in iter_architectures(space))
    return _sweep_slots(slots_iter, problem, traces, space.theta_resolution, "grid", t0, progress, keep_cloud)


def static_design(
    problem: OptimizationProblem,
    dataset: ProfileDataset,
    fixed_slots: Sequence[HyperParams] | None = None,
    theta_resolution: int | None = None,
) -> OptResult:
    """Threshold-only optimization with architectures frozen.

    Defaults to each slot's lattice midpoint (or its fixed network).
    """
    t0 = time.perf_counter()
    space = _space(dataset, theta_resolution)
    if fixed_slots is None:
        fixed_slots = tuple(s.midpoint() for s in space.slots)
    fixed_slots = tuple(fixed_slots)
    traces = _TraceCache(dataset, problem)
    res = _sweep_slots(
        [(fixed_slots, _arch_key(space, fixed_slots))], problem, traces, space.theta_resolution, "static", t0, None
    )
    return res


def random_search(
    problem: OptimizationProblem,
    dataset: ProfileDataset,
    budget: int,
    seed: int = 0,
    theta_resolution: int | None = None,
) -> OptResult:
    """Uniform lattice samples without replacement; ties resolved like grid search."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    t0 = time.perf_counter()
    space = _space(dataset, theta_resolution)
    lattice = Lattice(space)
    if budget > lattice.size:
        log.warning("budget %d exceeds lattice size %d; clamping", budget, lattice.size)
        budget = lattice.size
    traces = _TraceCache(dataset, problem)
    flat = PortableRng(seed, 0x5A).sample_without_replacement(lattice.size, budget)
    counts = [int(c) for c in lattice.counts]
    history: list[Observation] = []
    curve: list[float] = []
    best: Observation | None = None
    best_key = None
    for step, f in enumerate(flat.tolist(), start=1):
        idx = []
        for c in reversed(counts):
            f, r = divmod(f, c)
            idx.append(r)
        idx = tuple(reversed(idx))
        cfg = lattice.config(idx, problem.deployment)
        ev = evaluate_thresholds(traces(cfg.slots), cfg.thresholds, problem.kind)
        rec = _observe(cfg, ev, "random", step)
        history.append(rec)
        if rec.feasible:
            key = tuple(lattice.encode(np.array(idx))[0])
            if best is None or _better(rec.objective, key, best.objective, best_key):
                best, best_key = rec, key
        curve.append(best.objective if best is not None else math.inf)
    return OptResult(
        method="random",
        best=best,
        history=history,
        best_so_far=curve,
        wall_time_s=time.perf_counter() - t0,
        diagnostic="" if best is not None else "no feasible design",
        architectures_evaluated=len(traces),
    )
