"""Constrained Bayesian optimization over (architectures, thresholds).

Each iteration fits one GP to the objective and one to the constraint,
maximizes EI x PF over a random lattice pool plus the incumbent's neighbors,
evaluates the proposal, and (BO+) sweeps every threshold vector for the
proposed architectures using the cached per-image traces.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from cascadeopt import gp
from cascadeopt._rng import PortableRng
from cascadeopt.cascade_eval import (
    LOCAL,
    CascadeConfig,
    CascadeTraces,
    DeploymentModel,
    EnergyMin,
    Evaluation,
    Problem,
    build_traces,
    evaluate_thresholds,
    sweep_arrays,
)
from cascadeopt.errors import SpaceExhausted
from cascadeopt.profile_store import DesignSpace, HyperParams, ProfileDataset

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class OptimizationProblem:
    kind: Problem
    deployment: DeploymentModel = LOCAL
    image_set: str = "validation"

    @property
    def bound(self) -> float:
        return self.kind.bound


@dataclass(frozen=True)
class Observation:
    config: CascadeConfig
    objective: float
    constraint: float
    feasible: bool
    source: str  # seed-design | bo-step | fine-tune | grid | random | static
    iteration: int
    evaluation: Evaluation


@dataclass
class OptResult:
    method: str
    best: Observation | None
    history: list[Observation]
    best_so_far: list[float]
    wall_time_s: float = 0.0
    diagnostic: str = ""
    architectures_evaluated: int = 0
    cloud: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def best_objective(self) -> float:
        return self.best.objective if self.best is not None else math.inf

    @property
    def best_constraint(self) -> float:
        return self.best.constraint if self.best is not None else math.nan


# ---------------------------------------------------------------------------
# acquisition pieces


def expected_improvement(mean, variance, best):
    """EI for minimization; reduces to max(best - mean, 0) where variance is 0."""
    mean = np.asarray(mean, dtype=np.float64)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=np.float64), 0.0))
    gap = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(sigma > 0, gap / np.where(sigma > 0, sigma, 1.0), 0.0)
    ei = np.where(
        sigma > 0,
        gap * ndtr(t) + sigma * _INV_SQRT_2PI * np.exp(-0.5 * t * t),
        np.maximum(gap, 0.0),
    )
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def prob_feasible(mean, variance, bound):
    mean = np.asarray(mean, dtype=np.float64)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=np.float64), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (bound - mean) / np.where(sigma > 0, sigma, 1.0)
    pf = np.where(sigma > 0, ndtr(z), (mean <= bound).astype(np.float64))
    return float(pf) if pf.ndim == 0 else pf


def best_feasible(history: Sequence[Observation], bound: float) -> Observation | None:
    """Minimal-objective record with constraint <= bound; earliest wins ties."""
    best = None
    for rec in history:
        if rec.constraint <= bound and (best is None or rec.objective < best.objective):
            best = rec
    return best


# ---------------------------------------------------------------------------
# lattice bookkeeping


class Lattice:
    """Integer coordinates for the optimizable part of a design space.

    A point is a tuple of per-dimension indices for every optimizable slot,
    followed by one index per threshold.
    """

    def __init__(self, space: DesignSpace) -> None:
        self.space = space
        self.dims = []  # (slot, dim position, Dimension)
        for s, slot in enumerate(space.slots):
            if slot.optimizable:
                self.dims.extend((s, j, d) for j, d in enumerate(slot.dims))
        self.n_theta = space.n_slots - 1
        self.T = space.theta_resolution
        self.counts = np.array([d.count for _, _, d in self.dims] + [self.T] * self.n_theta, dtype=np.int64)
        self.size = int(np.prod(self.counts, dtype=object))

    def config(self, idx: Sequence[int], deployment: DeploymentModel) -> CascadeConfig:
        return CascadeConfig(self.architecture(idx), self.thetas(idx), deployment)

    def architecture(self, idx: Sequence[int]) -> tuple[HyperParams, ...]:
        values = [list(s.fixed.values) if s.fixed is not None else [0] * len(s.dims) for s in self.space.slots]
        for k, (s, j, d) in enumerate(self.dims):
            values[s][j] = d.min + int(idx[k]) * d.step
        return tuple(HyperParams(slot.names, tuple(v)) for slot, v in zip(self.space.slots, values))

    def thetas(self, idx: Sequence[int]) -> tuple[float, ...]:
        nd = len(self.dims)
        return tuple(float(np.float64(idx[nd + t]) / (self.T - 1)) for t in range(self.n_theta))

    def index_of(self, config: CascadeConfig) -> tuple[int, ...]:
        out = [d.index(config.slots[s].values[j]) for s, j, d in self.dims]
        out += [int(round(t * (self.T - 1))) for t in config.thresholds]
        return tuple(out)

    def encode(self, idx: np.ndarray) -> np.ndarray:
        """Same arithmetic as ``gp.encode_config`` on the corresponding config."""
        idx = np.atleast_2d(idx)
        cols = []
        for k, (_, _, d) in enumerate(self.dims):
            if d.max == d.min:
                cols.append(np.zeros(idx.shape[0]))
            else:
                v = d.min + idx[:, k] * d.step
                cols.append((v - d.min) / (d.max - d.min))
        nd = len(self.dims)
        for t in range(self.n_theta):
            cols.append(idx[:, nd + t].astype(np.float64) / (self.T - 1))
        return np.column_stack(cols) if cols else np.zeros((idx.shape[0], 0))

    def random(self, rng: PortableRng, count: int) -> np.ndarray:
        cols = [rng.integers(int(c), count) for c in self.counts]
        return np.column_stack(cols) if cols else np.zeros((count, 0), dtype=np.int64)

    def all_points(self) -> np.ndarray:
        return np.array(list(itertools.product(*(range(int(c)) for c in self.counts))), dtype=np.int64).reshape(
            -1, len(self.counts)
        )

    def neighbors(self, idx: Sequence[int]) -> np.ndarray:
        out = []
        for k, c in enumerate(self.counts):
            for step in (-1, 1):
                j = idx[k] + step
                if 0 <= j < c:
                    nb = list(idx)
                    nb[k] = j
                    out.append(nb)
        return np.array(out, dtype=np.int64).reshape(-1, len(self.counts))

    def latin_hypercube(self, rng: PortableRng, n: int) -> np.ndarray:
        cols = []
        for c in self.counts:
            strata = rng.permutation(n)
            u = rng.uniform(n)
            cols.append(np.minimum(np.floor((strata + u) / n * c).astype(np.int64), c - 1))
        return np.column_stack(cols) if cols else np.zeros((n, 0), dtype=np.int64)


# ---------------------------------------------------------------------------
# the loop


@dataclass
class _Surrogates:
    objective: gp.GpModel
    constraint: gp.GpModel


def _objective_transform(problem: OptimizationProblem, log_objective: bool) -> Callable[[np.ndarray], np.ndarray]:
    if log_objective and isinstance(problem.kind, EnergyMin):
        return np.log
    return lambda u: np.asarray(u, dtype=np.float64)


def _training_subset(history: Sequence[Observation], max_points: int, resolution: int) -> list[int]:
    """Indices of history records used to fit the surrogates.

    Seed-design and bo-step records are always kept. Fine-tune sweeps add their
    best feasible threshold, its lattice neighbours and a coarse stride; when
    over budget, the most recent sweeps win.
    """
    core = [k for k, r in enumerate(history) if r.source != "fine-tune"]
    sweeps: dict[int, list[int]] = {}
    for k, r in enumerate(history):
        if r.source == "fine-tune":
            sweeps.setdefault(r.iteration, []).append(k)
    stride = max(1, (resolution - 1) // 4)
    extra: list[list[int]] = []
    for it in sorted(sweeps, reverse=True):
        ks = sweeps[it]
        chosen = set(ks[::stride])
        chosen.add(ks[-1])
        feas = [k for k in ks if history[k].feasible]
        if feas:
            b = min(feas, key=lambda k: (history[k].objective, k))
            pos = ks.index(b)
            chosen.update(ks[max(0, pos - 1) : pos + 2])
        extra.append(sorted(chosen))
    budget = max(0, max_points - len(core))
    picked: list[int] = []
    for group in extra:
        if len(picked) + len(group) > budget:
            break
        picked.extend(group)
    return sorted(core + picked)


def _fit_surrogates(
    history: Sequence[Observation],
    lattice: Lattice,
    problem: OptimizationProblem,
    transform,
    family: str,
    seed: int,
    previous: _Surrogates | None,
    max_points: int,
) -> _Surrogates:
    rows = _training_subset(history, max_points, lattice.T)
    idx = np.array([lattice.index_of(history[k].config) for k in rows], dtype=np.int64)
    X = lattice.encode(idx)
    u = transform(np.array([history[k].objective for k in rows]))
    v = np.array([history[k].constraint for k in rows])
    restarts = 2 if previous is None else 0
    maxiter = 200 if previous is None else 40
    f_model = gp.fit(X, u, family, restarts, seed, init=previous.objective.params if previous else None, maxiter=maxiter)
    g_model = gp.fit(X, v, family, restarts, seed + 1, init=previous.constraint.params if previous else None, maxiter=maxiter)
    return _Surrogates(f_model, g_model)


def acquisition(
    models: _Surrogates, X: np.ndarray, incumbent: float | None, bound: float
) -> np.ndarray:
    """EI x PF, or PF alone while nothing feasible has been observed."""
    mg, vg = models.constraint.predict_many(X)
    pf = prob_feasible(mg, vg, bound)
    if incumbent is None:
        return np.asarray(pf)
    mf, vf = models.objective.predict_many(X)
    return np.asarray(expected_improvement(mf, vf, incumbent)) * pf


def propose_next(
    history: Sequence[Observation],
    models: _Surrogates,
    lattice: Lattice,
    problem: OptimizationProblem,
    pool_size: int,
    rng: PortableRng,
    transform=np.log,
) -> tuple[int, ...]:
    """Lattice index maximizing the acquisition among unobserved candidates."""
    observed = {lattice.index_of(r.config) for r in history}
    if len(observed) >= lattice.size:
        raise SpaceExhausted("every lattice point has been observed")
    if lattice.size <= pool_size:
        pool = lattice.all_points()
    else:
        pool = lattice.random(rng, pool_size)
    inc = best_feasible(history, problem.bound)
    anchor = inc if inc is not None else min(history, key=lambda r: r.constraint)
    pool = np.vstack([pool, lattice.neighbors(lattice.index_of(anchor.config))])
    keep = np.array([tuple(p) not in observed for p in pool.tolist()], dtype=bool)
    pool = pool[keep]
    if pool.shape[0] == 0:
        rest = (p for p in itertools.product(*(range(int(c)) for c in lattice.counts)) if p not in observed)
        pool = np.array(list(itertools.islice(rest, pool_size)), dtype=np.int64)
    pool = np.unique(pool, axis=0)
    X = lattice.encode(pool)
    incumbent = None if inc is None else float(transform(np.array([inc.objective]))[0])
    alpha = acquisition(models, X, incumbent, problem.bound)
    # highest alpha first, then lexicographically smallest encoding
    order = np.lexsort(tuple(X[:, k] for k in range(X.shape[1] - 1, -1, -1)) + (-alpha,))
    return tuple(int(v) for v in pool[order[0]])


class _TraceCache:
    def __init__(self, dataset: ProfileDataset, problem: OptimizationProblem) -> None:
        self.dataset = dataset
        self.problem = problem
        self._cache: dict[tuple[HyperParams, ...], CascadeTraces] = {}

    def __call__(self, slots: tuple[HyperParams, ...]) -> CascadeTraces:
        tr = self._cache.get(slots)
        if tr is None:
            tr = build_traces(self.dataset, slots, self.problem.deployment, self.problem.image_set)
            self._cache[slots] = tr
        return tr

    def __len__(self) -> int:
        return len(self._cache)


def _observe(config: CascadeConfig, ev: Evaluation, source: str, iteration: int) -> Observation:
    return Observation(config, ev.objective, ev.constraint_value, ev.feasible, source, iteration, ev)


def run_bo(
    problem: OptimizationProblem,
    dataset: ProfileDataset,
    iterations: int = 50,
    initial_designs: int = 5,
    fine_tune: bool = True,
    theta_resolution: int | None = None,
    seed: int = 0,
    pool_size: int = 2000,
    family: str = "matern52",
    log_objective: bool = True,
    max_gp_points: int = 150,
    progress: Callable[[dict], None] | None = None,
) -> OptResult:
    """Algorithm loop: seed designs, then ``iterations`` model-guided proposals.

    With ``fine_tune`` every proposal is followed by a sweep over all threshold
    vectors for the same architectures (BO+); without it this is plain BO.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if initial_designs < 2:
        raise ValueError("initial_designs must be at least 2")
    t0 = time.perf_counter()
    space = dataset.design_space
    if theta_resolution is not None and theta_resolution != space.theta_resolution:
        space = dataclasses.replace(space, theta_resolution=theta_resolution)
    lattice = Lattice(space)
    traces = _TraceCache(dataset, problem)
    transform = _objective_transform(problem, log_objective)
    rng = PortableRng(seed, 0xB0)
    method = "bo-plus" if fine_tune else "bo"

    history: list[Observation] = []
    seen: set[tuple[int, ...]] = set()
    curve: list[float] = []
    skipped = 0

    def add(idx: tuple[int, ...], source: str, iteration: int) -> Observation | None:
        nonlocal skipped
        if idx in seen:
            skipped += 1
            log.debug("skipping duplicate %s point %s", source, idx)
            return None
        cfg = lattice.config(idx, problem.deployment)
        ev = evaluate_thresholds(traces(cfg.slots), cfg.thresholds, problem.kind)
        rec = _observe(cfg, ev, source, iteration)
        history.append(rec)
        seen.add(idx)
        return rec

    def sweep(idx: tuple[int, ...], iteration: int) -> None:
        nonlocal skipped
        cfg = lattice.config(idx, problem.deployment)
        res = sweep_arrays(traces(cfg.slots), lattice.T, problem.kind)
        nd = len(lattice.dims)
        lattice_thetas = np.array(list(itertools.product(range(lattice.T), repeat=lattice.n_theta)), dtype=np.int64)
        for k in range(res.thetas.shape[0]):
            tidx = tuple(idx[:nd]) + tuple(int(t) for t in lattice_thetas[k].reshape(-1))
            if tidx in seen:
                skipped += 1
                continue
            c = CascadeConfig(cfg.slots, tuple(float(t) for t in res.thetas[k]), problem.deployment)
            history.append(_observe(c, res.evaluation(k), "fine-tune", iteration))
            seen.add(tidx)

    def emit(iteration: int, rec: Observation | None) -> None:
        inc = best_feasible(history, problem.bound)
        curve.append(inc.objective if inc is not None else math.inf)
        if progress is not None:
            progress(
                {
                    "method": method,
                    "seed": seed,
                    "iteration": iteration,
                    "proposal": None if rec is None else _config_text(rec.config),
                    "objective": None if rec is None else rec.objective,
                    "constraint": None if rec is None else rec.constraint,
                    "best_so_far": curve[-1] if math.isfinite(curve[-1]) else None,
                }
            )

    for idx in lattice.latin_hypercube(rng, initial_designs):
        add(tuple(int(v) for v in idx), "seed-design", 0)
    emit(0, None)

    diagnostic = ""
    models = None
    for d in range(1, iterations + 1):
        if len(history) < 2:
            idx = tuple(int(v) for v in lattice.random(rng, 1)[0])
            if idx in seen:
                diagnostic = "design space exhausted"
                break
        else:
            models = _fit_surrogates(history, lattice, problem, transform, family, seed * 7919 + d, models, max_gp_points)
            try:
                idx = propose_next(history, models, lattice, problem, pool_size, rng, transform)
            except SpaceExhausted:
                diagnostic = f"design space exhausted after {d - 1} iterations"
                log.info(diagnostic)
                break
        rec = add(idx, "bo-step", d)
        if fine_tune and lattice.n_theta > 0:
            sweep(idx, d)
        emit(d, rec)

    if skipped:
        log.info("%s seed %d skipped %d duplicate points", method, seed, skipped)
    best = best_feasible(history, problem.bound)
    if best is None:
        diagnostic = (diagnostic + "; " if diagnostic else "") + "no feasible design observed"
    return OptResult(
        method=method,
        best=best,
        history=history,
        best_so_far=curve,
        wall_time_s=time.perf_counter() - t0,
        diagnostic=diagnostic,
        architectures_evaluated=len(traces),
    )


def _config_text(config: CascadeConfig) -> str:
    return " | ".join(hp.key() for hp in config.slots) + " | theta=" + ",".join(repr(t) for t in config.thresholds)
