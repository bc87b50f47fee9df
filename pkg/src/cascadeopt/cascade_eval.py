"""Adaptive execution of a network cascade and its energy/error functionals.

Stage ``i`` exits when its score margin reaches the threshold ``theta_i``
(margin >= theta); otherwise the next stage runs. The last stage always exits.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from cascadeopt import _kernels
from cascadeopt.profile_store import (
    SCORE_SUM_TOL,
    HyperParams,
    NetworkProfile,
    ProfileDataset,
    theta_grid,
)


class Decision(enum.Enum):
    EXIT = 0
    CONTINUE = 1


@dataclass(frozen=True)
class DeploymentModel:
    """Where each stage runs and what the edge device pays for it.

    ``mode`` is ``"local"`` or ``"edge"``. In edge mode stages numbered
    ``remote_from_stage`` and later (1-based) run on the server, and the device
    draws ``idle_power_w`` for the server runtime plus the communication time.
    """

    mode: str = "local"
    remote_from_stage: int = 2
    idle_power_w: float = 2.0
    server_runtime_s: Union[float, tuple[float, ...]] = 0.01
    comm_time_s: float = 0.005
    name: str = ""

    def __post_init__(self) -> None:
        if self.mode not in ("local", "edge"):
            raise ValueError(f"deployment mode must be 'local' or 'edge', got {self.mode!r}")
        if self.mode == "edge":
            if self.remote_from_stage < 2:
                raise ValueError("remote_from_stage must be at least 2")
            times = self.server_runtime_s
            if not isinstance(times, (int, float)):
                object.__setattr__(self, "server_runtime_s", tuple(float(t) for t in times))
                times = self.server_runtime_s
            else:
                times = (times,)
            if any(t <= 0 for t in times) or self.comm_time_s <= 0:
                raise ValueError("server runtime and communication time must be positive")
            if self.idle_power_w < 0:
                raise ValueError("idle power must be non-negative")

    def is_remote(self, stage: int) -> bool:
        return self.mode == "edge" and stage >= self.remote_from_stage

    def server_time(self, stage: int) -> float:
        t = self.server_runtime_s
        if isinstance(t, tuple):
            return t[stage - 1]
        return float(t)

    def to_dict(self) -> dict:
        t = self.server_runtime_s
        return {
            "mode": self.mode,
            "remote_from_stage": self.remote_from_stage,
            "idle_power_w": self.idle_power_w,
            "server_runtime_s": list(t) if isinstance(t, tuple) else t,
            "comm_time_s": self.comm_time_s,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeploymentModel":
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown deployment keys {sorted(unknown)}")
        kwargs = dict(data)
        if isinstance(kwargs.get("server_runtime_s"), list):
            kwargs["server_runtime_s"] = tuple(kwargs["server_runtime_s"])
        return cls(**kwargs)


LOCAL = DeploymentModel(mode="local", name="local")


def deployment_preset(name: str, **overrides) -> DeploymentModel:
    """``local``, ``ethernet`` or ``wireless``; the latter two offload stages >= 2.

    The communication times (5 ms ethernet, 50 ms wireless) and the 2 W idle
    power only fix the ordering between presets; override them with measured
    values when available.
    """
    presets = {
        "local": dict(mode="local"),
        "ethernet": dict(mode="edge", comm_time_s=0.005, idle_power_w=2.0, server_runtime_s=0.01),
        "wireless": dict(mode="edge", comm_time_s=0.050, idle_power_w=2.0, server_runtime_s=0.01),
    }
    if name not in presets:
        raise ValueError(f"unknown deployment preset {name!r}; choose from {sorted(presets)}")
    return DeploymentModel(name=name, **{**presets[name], **overrides})


@dataclass(frozen=True)
class EnergyMin:
    """Minimize expected energy subject to error degradation <= bound."""

    bound: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.bound <= 1.0:
            raise ValueError(f"degradation bound must lie in [0, 1], got {self.bound}")


@dataclass(frozen=True)
class ErrorMin:
    """Minimize error rate subject to expected energy (mJ) <= bound."""

    bound: float

    def __post_init__(self) -> None:
        if not self.bound > 0.0:
            raise ValueError(f"energy budget must be positive, got {self.bound}")


Problem = Union[EnergyMin, ErrorMin]


@dataclass(frozen=True)
class CascadeConfig:
    slots: tuple[HyperParams, ...]
    thresholds: tuple[float, ...] = ()
    deployment: DeploymentModel = LOCAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not self.slots:
            raise ValueError("a cascade needs at least one network")
        if len(self.thresholds) != len(self.slots) - 1:
            raise ValueError(
                f"{len(self.slots)} networks need {len(self.slots) - 1} thresholds, "
                f"got {len(self.thresholds)}"
            )
        if any(not 0.0 <= t <= 1.0 for t in self.thresholds):
            raise ValueError(f"thresholds must lie in [0, 1]: {self.thresholds}")

    @property
    def depth(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class Evaluation:
    expected_energy_mj: float
    error_rate: float
    degradation: float
    constraint_value: float
    feasible: bool
    objective: float
    escalation_rates: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "expected_energy_mj": self.expected_energy_mj,
            "error_rate": self.error_rate,
            "degradation": self.degradation,
            "constraint_value": self.constraint_value,
            "feasible": self.feasible,
            "objective": self.objective,
            "escalation_rates": list(self.escalation_rates),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Evaluation":
        return cls(**{**data, "escalation_rates": tuple(data["escalation_rates"])})


@dataclass(frozen=True)
class PerImageTrace:
    exit_stage: int  # 1-based
    predicted_label: int
    loss: int
    energy_mj: float
    margins: tuple[float, ...]


def score_margin(scores: Sequence[float]) -> float:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("score margin needs at least two class scores")
    if abs(math.fsum(s) - 1.0) > SCORE_SUM_TOL:
        raise ValueError(f"scores sum to {math.fsum(s)!r}, not 1")
    top2 = -np.partition(-s, 1)[:2]
    return float(min(max(top2[0] - top2[1], 0.0), 1.0))


def predicted_label(scores: Sequence[float]) -> int:
    """Index of the largest score; ties go to the lowest index."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty score vector")
    return int(np.argmax(s))


def decide(margin: float, theta: float) -> Decision:
    return Decision.CONTINUE if margin < theta else Decision.EXIT


def stage_energy(profile: NetworkProfile, stage: int, deployment: DeploymentModel) -> float:
    """Energy in mJ charged to the edge device for evaluating ``stage`` (1-based)."""
    if deployment.is_remote(stage):
        return deployment.idle_power_w * (deployment.server_time(stage) + deployment.comm_time_s) * 1000.0
    return profile.power_w * profile.runtime_s * 1000.0


def simulate_image(
    config: CascadeConfig,
    per_stage_scores: Sequence[Sequence[float]],
    true_label: int,
    profiles: Sequence[NetworkProfile],
) -> PerImageTrace:
    if len(per_stage_scores) != config.depth or len(profiles) != config.depth:
        raise ValueError("need one score vector and one profile per stage")
    energy = 0.0
    margins = []
    stage = config.depth
    for i in range(config.depth):
        energy += stage_energy(profiles[i], i + 1, config.deployment)
        if i == config.depth - 1:
            break
        m = score_margin(per_stage_scores[i])
        margins.append(m)
        if decide(m, config.thresholds[i]) is Decision.EXIT:
            stage = i + 1
            break
    label = predicted_label(per_stage_scores[stage - 1])
    return PerImageTrace(stage, label, int(label != true_label), energy, tuple(margins))


@dataclass(frozen=True)
class CascadeTraces:
    """Per-image margins and losses of one architecture tuple on one image set."""

    slots: tuple[HyperParams, ...]
    margins: np.ndarray  # (M-1, n)
    losses: np.ndarray  # (M, n)
    stage_energies: np.ndarray  # (M,) mJ per evaluation under the deployment

    @property
    def n_images(self) -> int:
        return int(self.losses.shape[1])

    @property
    def depth(self) -> int:
        return int(self.losses.shape[0])


def build_traces(
    dataset: ProfileDataset,
    slots: Sequence[HyperParams],
    deployment: DeploymentModel = LOCAL,
    image_set: str = "validation",
) -> CascadeTraces:
    idx = dataset.image_indices(image_set)
    if idx.size == 0:
        raise ValueError(f"image set {image_set!r} is empty")
    stages = [dataset.stage_trace(i, hp) for i, hp in enumerate(slots)]
    energies = np.array(
        [stage_energy(dataset.profile(i, hp), i + 1, deployment) for i, hp in enumerate(slots)]
    )
    margins = np.stack([s.margins[idx] for s in stages[:-1]]) if len(stages) > 1 else np.zeros((0, idx.size))
    losses = np.stack([s.losses[idx] for s in stages])
    return CascadeTraces(tuple(slots), margins, losses, energies)


def _summarize(traces: CascadeTraces, reach: np.ndarray, loss_sum: np.ndarray, problem: Problem):
    """Vectorized aggregate quantities from walk counts; rows align with thetas."""
    n = traces.n_images
    energy = reach[:, 0] * traces.stage_energies[0]
    for i in range(1, traces.depth):
        energy = energy + reach[:, i] * traces.stage_energies[i]
    energy = energy / n
    error = loss_sum / n
    degradation = (loss_sum - int(traces.losses[-1].sum())) / n
    escalation = reach[:, 1:] / n
    if isinstance(problem, EnergyMin):
        objective, constraint = energy, degradation
    else:
        objective, constraint = error, energy
    return energy, error, degradation, objective, constraint, escalation


def evaluate_thresholds(traces: CascadeTraces, thetas: Sequence[float], problem: Problem) -> Evaluation:
    th = np.asarray(thetas, dtype=np.float64).reshape(1, traces.depth - 1)
    reach, loss_sum = _kernels.walk_counts(traces.margins, traces.losses, th)
    e, err, deg, obj, con, esc = _summarize(traces, reach, loss_sum, problem)
    return Evaluation(
        expected_energy_mj=float(e[0]),
        error_rate=float(err[0]),
        degradation=float(deg[0]),
        constraint_value=float(con[0]),
        feasible=bool(con[0] <= problem.bound),
        objective=float(obj[0]),
        escalation_rates=tuple(float(v) for v in esc[0]),
    )


def evaluate_cascade(
    config: CascadeConfig,
    dataset: ProfileDataset,
    image_set: str = "validation",
    problem: Problem = EnergyMin(1.0),
) -> Evaluation:
    """Expected energy, error and constraint value of ``config``.

    The degradation is mean(loss of the cascade) - mean(loss of the last
    network alone); for two networks it equals the mean over images of
    1[exit at stage 1] * (L1 - L2).
    """
    traces = build_traces(dataset, config.slots, config.deployment, image_set)
    return evaluate_thresholds(traces, config.thresholds, problem)


def theta_lattice(resolution: int, depth: int) -> np.ndarray:
    """All threshold vectors for ``depth`` stages, lexicographic, shape (T**(M-1), M-1)."""
    grid = theta_grid(resolution)
    if depth <= 1:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(grid, repeat=depth - 1)), dtype=np.float64)


@dataclass(frozen=True)
class SweepResult:
    """Column arrays for every point of a threshold sweep."""

    thetas: np.ndarray
    energy: np.ndarray
    error: np.ndarray
    degradation: np.ndarray
    objective: np.ndarray
    constraint: np.ndarray
    escalation: np.ndarray
    bound: float

    @property
    def feasible(self) -> np.ndarray:
        return self.constraint <= self.bound

    def evaluation(self, k: int) -> Evaluation:
        return Evaluation(
            expected_energy_mj=float(self.energy[k]),
            error_rate=float(self.error[k]),
            degradation=float(self.degradation[k]),
            constraint_value=float(self.constraint[k]),
            feasible=bool(self.constraint[k] <= self.bound),
            objective=float(self.objective[k]),
            escalation_rates=tuple(float(v) for v in self.escalation[k]),
        )


def sweep_arrays(traces: CascadeTraces, resolution: int, problem: Problem) -> SweepResult:
    thetas = theta_lattice(resolution, traces.depth)
    reach, loss_sum = _kernels.walk_counts(traces.margins, traces.losses, thetas)
    e, err, deg, obj, con, esc = _summarize(traces, reach, loss_sum, problem)
    return SweepResult(thetas, e, err, deg, obj, con, esc, problem.bound)


def theta_sweep(
    traces: CascadeTraces, resolution: int, problem: Problem
) -> list[tuple[tuple[float, ...], Evaluation]]:
    """Evaluate every threshold vector of the lattice on cached traces."""
    res = sweep_arrays(traces, resolution, problem)
    return [(tuple(float(t) for t in res.thetas[k]), res.evaluation(k)) for k in range(len(res.thetas))]


def pairwise_degradation(traces: CascadeTraces, theta: float) -> float:
    """Two-network degradation written as mean(1[exit at 1] * (L1 - L2))."""
    if traces.depth != 2:
        raise ValueError("the pairwise form is defined for two networks")
    exit_first = traces.margins[0] >= theta
    diff = traces.losses[0] - traces.losses[1]
    return float(np.sum(exit_first * diff) / traces.n_images)


def pareto_front(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated (energy, error) pairs, sorted by energy then error.

    Exact duplicates do not dominate each other and are all kept.
    """
    if len(points) == 0:
        return []
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    out = []
    best_error = math.inf  # lowest error among strictly cheaper points
    k = 0
    while k < len(order):
        e = arr[order[k], 0]
        j = k
        while j < len(order) and arr[order[j], 0] == e:
            j += 1
        group_min = arr[order[k], 1]
        if group_min < best_error:
            for idx in order[k:j]:
                if arr[idx, 1] == group_min:
                    out.append((float(arr[idx, 0]), float(arr[idx, 1])))
            best_error = group_min
        k = j
    return out
