"""Ready-made design spaces and synthetic instances."""

from __future__ import annotations

import dataclasses

from cascadeopt.profile_store import (
    DesignSpace,
    Dimension,
    HyperParams,
    SlotModel,
    SlotSpace,
    SyntheticSpec,
)

# Allowed error-rate degradation of the benchmark problem.
BENCHMARK_BOUND = 0.01


def small_network_slot(maps_step: int = 32, units_step: int = 250) -> SlotSpace:
    """One conv layer plus one dense layer over the searched ranges."""
    return SlotSpace(
        (
            Dimension("conv1.maps", 32, 448, maps_step),
            Dimension("conv1.kernel", 2, 5, 1),
            Dimension("fc1.units", 500, 4000, units_step),
        )
    )


def big_network_slot() -> SlotSpace:
    """Two wide conv layers and a wide dense layer, pinned."""
    dims = (
        Dimension("conv1.maps", 448, 448, 1),
        Dimension("conv1.kernel", 5, 5, 1),
        Dimension("conv2.maps", 448, 448, 1),
        Dimension("conv2.kernel", 5, 5, 1),
        Dimension("fc1.units", 4000, 4000, 1),
    )
    return SlotSpace(dims, HyperParams(tuple(d.name for d in dims), (448, 5, 448, 5, 4000)))


def benchmark_space(theta_resolution: int = 101) -> DesignSpace:
    """840 searchable first-stage networks in front of one fixed large network."""
    return DesignSpace((small_network_slot(), big_network_slot()), theta_resolution)


def three_stage_space(theta_resolution: int = 21) -> DesignSpace:
    """Fixed tiny first stage, searchable middle stage, fixed large last stage."""
    tiny_dims = (Dimension("conv1.maps", 32, 32, 1), Dimension("conv1.kernel", 3, 3, 1), Dimension("fc1.units", 500, 500, 1))
    tiny = SlotSpace(tiny_dims, HyperParams(tuple(d.name for d in tiny_dims), (32, 3, 500)))
    return DesignSpace((tiny, small_network_slot(104, 500), big_network_slot()), theta_resolution)


def benchmark_spec(seed: int = 0, **overrides) -> SyntheticSpec:
    """First-stage capacity tops out at 0.85 while the large network reaches 0.93,
    so meeting a 1% degradation bound always needs some escalation."""
    base = SyntheticSpec(
        slots=(
            SlotModel(0.5, (0.2, 0.05, 0.1)),
            SlotModel(0.93, (0.0,) * 5),
        ),
        class_count=10,
        image_count=500,
        energy_scale_mj=200.0,
        energy_offset_mj=5.0,
        power_w=5.0,
        margin_noise=0.1,
        seed=seed,
        validation_fraction=0.8,
    )
    return dataclasses.replace(base, **overrides)


def three_stage_spec(seed: int = 0, **overrides) -> SyntheticSpec:
    base = benchmark_spec(seed)
    base = dataclasses.replace(
        base,
        slots=(SlotModel(0.55, (0.0, 0.0, 0.0)), SlotModel(0.5, (0.2, 0.05, 0.1)), SlotModel(0.93, (0.0,) * 5)),
    )
    return dataclasses.replace(base, **overrides)


def pathology_spec(seed: int = 0) -> SyntheticSpec:
    """Noisy first-stage margins and a large fixed energy overhead per network.

    With the first stage frozen at its lattice midpoint, a 1% bound forces so
    much escalation that the cascade costs more than the large network alone.
    """
    return benchmark_spec(seed, margin_noise=0.3, energy_offset_mj=80.0)
