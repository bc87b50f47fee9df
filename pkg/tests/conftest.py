import numpy as np
import pytest

from cascadeopt import presets
from cascadeopt.profile_store import (
    DesignSpace,
    Dimension,
    HyperParams,
    NetworkProfile,
    ProfileDataset,
    SlotModel,
    SlotSpace,
    SyntheticSpec,
    generate_synthetic,
)


def fixed_slot(layer: str, maps: int) -> SlotSpace:
    dims = (Dimension(f"{layer}.maps", maps, maps, 1),)
    return SlotSpace(dims, HyperParams((dims[0].name,), (maps,)))


def one_hot_ish(label_pred: int, margin: float, K: int = 3) -> list[float]:
    """Score row predicting ``label_pred`` with top-two gap ``margin``."""
    top = (2.0 + margin * K) / (2.0 + K)
    row = [(1.0 - top - (top - margin)) / (K - 2)] * K
    row[(label_pred + 1) % K] = top - margin
    row[label_pred] = top
    return row


def hand_dataset(stage_rows, labels, energies_mj, power_w=5.0, validation=None) -> ProfileDataset:
    """Dataset with one fixed network per stage and explicit score rows."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    slots = tuple(fixed_slot(f"s{i + 1}", 8 * (i + 1)) for i in range(len(stage_rows)))
    profiles = {}
    for i, (rows, e) in enumerate(zip(stage_rows, energies_mj)):
        hp = slots[i].fixed
        runtime = e / (power_w * 1000.0)
        profiles[(i, hp)] = NetworkProfile(hp, np.asarray(rows, dtype=np.float64), labels, power_w, runtime, power_w * runtime * 1000.0)
    val = np.arange(n) if validation is None else np.asarray(validation)
    test = np.setdiff1d(np.arange(n), val)
    ds = ProfileDataset(DesignSpace(slots, 101), profiles, n, len(stage_rows[0][0]), labels, val, test)
    ds.validate()
    return ds


def small_space(theta_resolution: int = 11) -> DesignSpace:
    """3 x 2 first-stage networks in front of one fixed network."""
    first = SlotSpace((Dimension("conv1.maps", 32, 96, 32), Dimension("fc1.units", 100, 200, 100)))
    return DesignSpace((first, fixed_slot("big", 256)), theta_resolution)


def small_spec(seed: int = 0, noise: float = 0.1, image_count: int = 200) -> SyntheticSpec:
    return SyntheticSpec(
        slots=(SlotModel(0.55, (0.2, 0.1)), SlotModel(0.9, (0.0,))),
        image_count=image_count,
        margin_noise=noise,
        seed=seed,
    )


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(small_spec(), small_space())


@pytest.fixture(scope="session")
def benchmark_dataset():
    return generate_synthetic(presets.benchmark_spec(), presets.benchmark_space())


BENCH_SEEDS = tuple(range(10))


@pytest.fixture(scope="session")
def benchmark_runs(benchmark_dataset):
    """Grid, BO, BO+ and random search on the benchmark problem for ten seeds.

    Shared by several test modules so the expensive runs happen once; the
    dict also records wall time per method.
    """
    import time

    from cascadeopt.baselines import grid_search, random_search
    from cascadeopt.bo import OptimizationProblem, run_bo
    from cascadeopt.cascade_eval import EnergyMin

    problem = OptimizationProblem(EnergyMin(presets.BENCHMARK_BOUND))
    out = {"problem": problem, "time": {}}
    t0 = time.perf_counter()
    out["grid"] = grid_search(problem, benchmark_dataset, keep_cloud=False)
    out["time"]["grid"] = time.perf_counter() - t0
    for name, kwargs in (("bo", dict(fine_tune=False)), ("bo-plus", dict(fine_tune=True))):
        t0 = time.perf_counter()
        out[name] = {s: run_bo(problem, benchmark_dataset, iterations=50, seed=s, **kwargs) for s in BENCH_SEEDS}
        out["time"][name] = time.perf_counter() - t0
    t0 = time.perf_counter()
    out["random"] = {s: random_search(problem, benchmark_dataset, 55, seed=s) for s in BENCH_SEEDS}
    out["time"]["random"] = time.perf_counter() - t0
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
