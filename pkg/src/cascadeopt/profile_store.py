"""Network profiles, the discrete design space, and the on-disk dataset layout.

A profile stands in for one trained and measured network: per-image class
probabilities plus power, runtime and energy. Profiles are either loaded from a
dataset directory or synthesized from a seeded generator.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from cascadeopt._rng import PortableRng
from cascadeopt.errors import (
    ConsistencyError,
    FormatError,
    ProfileLookupError,
    ValidationError,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT_NAME = "cascadeopt-profiles"
FORMAT_VERSION = 1
SCORE_SUM_TOL = 1e-6
ENERGY_REL_TOL = 1e-6
# Margin used when a zero margin would let the lowest-index tie-break flip the label.
TIE_MARGIN = 1e-9

_ATTRS = ("maps", "kernel", "units")
_LAYER_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")


@dataclass(frozen=True)
class Dimension:
    """One integer hyper-parameter axis, named ``<layer>.<maps|kernel|units>``."""

    name: str
    min: int
    max: int
    step: int = 1

    def __post_init__(self) -> None:
        layer, _, attr = self.name.partition(".")
        if attr not in _ATTRS or not _LAYER_RE.match(layer):
            raise ValueError(
                f"dimension name {self.name!r} must look like '<layer>.maps', "
                "'<layer>.kernel' or '<layer>.units'"
            )
        if self.step <= 0:
            raise ValueError(f"{self.name}: step must be positive, got {self.step}")
        if self.min <= 0:
            raise ValueError(f"{self.name}: min must be a positive integer, got {self.min}")
        if self.min > self.max:
            raise ValueError(f"{self.name}: min {self.min} exceeds max {self.max}")
        if (self.max - self.min) % self.step:
            raise ValueError(
                f"{self.name}: range {self.min}..{self.max} is not divisible by step {self.step}"
            )

    @property
    def layer(self) -> str:
        return self.name.partition(".")[0]

    @property
    def attr(self) -> str:
        return self.name.partition(".")[2]

    @property
    def count(self) -> int:
        return (self.max - self.min) // self.step + 1

    def values(self) -> range:
        return range(self.min, self.max + 1, self.step)

    def contains(self, value: int) -> bool:
        return self.min <= value <= self.max and (value - self.min) % self.step == 0

    def index(self, value: int) -> int:
        return (value - self.min) // self.step

    def normalize(self, value: float) -> float:
        if self.max == self.min:
            return 0.0
        return (value - self.min) / (self.max - self.min)


@dataclass(frozen=True, order=True)
class HyperParams:
    """Architecture of one network, as integers aligned with dimension names."""

    names: tuple[str, ...]
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        if any(int(v) != v or v <= 0 for v in self.values):
            raise ValueError(f"hyper-parameters must be positive integers: {self.values}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.names, self.values))

    def layers(self) -> list[tuple[str, dict[str, int]]]:
        """Group values by layer, keeping template order."""
        out: dict[str, dict[str, int]] = {}
        for name, value in zip(self.names, self.values):
            layer, _, attr = name.partition(".")
            out.setdefault(layer, {})[attr] = value
        return list(out.items())

    def mac_proxy(self) -> float:
        """Sum of maps * kernel**2 over conv layers plus units over dense layers."""
        total = 0.0
        for _, attrs in self.layers():
            if "maps" in attrs:
                total += attrs["maps"] * attrs.get("kernel", 1) ** 2
            if "units" in attrs:
                total += attrs["units"]
        return total

    def key(self) -> str:
        """Canonical text encoding, e.g. ``conv1-64_k5_conv2-128_k3_fc1-2000``."""
        parts = []
        for layer, attrs in self.layers():
            if "maps" in attrs:
                parts.append(f"{layer}-{attrs['maps']}")
                if "kernel" in attrs:
                    parts.append(f"k{attrs['kernel']}")
            elif "kernel" in attrs:
                parts.append(f"{layer}-k{attrs['kernel']}")
            if "units" in attrs:
                parts.append(f"{layer}-{attrs['units']}")
        return "_".join(parts)

    @classmethod
    def from_key(cls, key: str, names: Sequence[str]) -> "HyperParams":
        """Parse a canonical encoding back into values ordered like ``names``."""
        parsed: dict[str, int] = {}
        current = None
        for token in key.split("_"):
            if re.fullmatch(r"k\d+", token) and current is not None:
                parsed[f"{current}.kernel"] = int(token[1:])
                continue
            m = re.fullmatch(r"([A-Za-z][A-Za-z0-9]*)-(k?)(\d+)", token)
            if m is None:
                raise ValueError(f"cannot parse hyper-parameter token {token!r} in {key!r}")
            current = m.group(1)
            if m.group(2):
                parsed[f"{current}.kernel"] = int(m.group(3))
            elif f"{current}.maps" in names:
                parsed[f"{current}.maps"] = int(m.group(3))
            else:
                parsed[f"{current}.units"] = int(m.group(3))
        if set(parsed) != set(names):
            raise ValueError(f"{key!r} does not match the template {list(names)}")
        return cls(tuple(names), tuple(parsed[n] for n in names))


@dataclass(frozen=True)
class SlotSpace:
    """Search range of one cascade slot; ``fixed`` pins the slot to one network."""

    dims: tuple[Dimension, ...]
    fixed: HyperParams | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise ValueError("a slot needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names {names}")
        if self.fixed is not None and not self.contains(self.fixed):
            raise ValueError(f"fixed network {self.fixed.key()} lies outside its slot range")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    @property
    def optimizable(self) -> bool:
        return self.fixed is None

    @property
    def size(self) -> int:
        return 1 if self.fixed is not None else math.prod(d.count for d in self.dims)

    def contains(self, hp: HyperParams) -> bool:
        return hp.names == self.names and all(
            d.contains(v) for d, v in zip(self.dims, hp.values)
        )

    def candidates(self) -> list[HyperParams]:
        if self.fixed is not None:
            return [self.fixed]
        return [
            HyperParams(self.names, values)
            for values in itertools.product(*(d.values() for d in self.dims))
        ]

    def midpoint(self) -> HyperParams:
        if self.fixed is not None:
            return self.fixed
        return HyperParams(
            self.names, tuple(d.min + ((d.count - 1) // 2) * d.step for d in self.dims)
        )

    def normalized(self, hp: HyperParams) -> np.ndarray:
        return np.array([d.normalize(v) for d, v in zip(self.dims, hp.values)])

    def max_mac(self) -> float:
        return HyperParams(self.names, tuple(d.max for d in self.dims)).mac_proxy()

    def to_dict(self) -> dict:
        out: dict = {"dims": [dataclasses.asdict(d) for d in self.dims]}
        if self.fixed is not None:
            out["fixed"] = self.fixed.as_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SlotSpace":
        unknown = set(data) - {"dims", "fixed"}
        if unknown:
            raise ValueError(f"unknown slot keys {sorted(unknown)}")
        dims = tuple(Dimension(**d) for d in data["dims"])
        fixed = None
        if data.get("fixed") is not None:
            names = tuple(d.name for d in dims)
            fixed = HyperParams(names, tuple(int(data["fixed"][n]) for n in names))
        return cls(dims, fixed)


def theta_grid(resolution: int) -> np.ndarray:
    """Threshold lattice {0, 1/(T-1), ..., 1}."""
    if resolution < 2:
        raise ValueError(f"theta resolution must be at least 2, got {resolution}")
    return np.arange(resolution, dtype=np.float64) / (resolution - 1)


@dataclass(frozen=True)
class DesignSpace:
    slots: tuple[SlotSpace, ...]
    theta_resolution: int = 101

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))
        if not self.slots:
            raise ValueError("design space needs at least one slot")
        theta_grid(self.theta_resolution)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def theta_values(self) -> np.ndarray:
        return theta_grid(self.theta_resolution)

    def architecture_count(self) -> int:
        return math.prod(s.size for s in self.slots)

    def lattice_size(self) -> int:
        return self.architecture_count() * self.theta_resolution ** (self.n_slots - 1)

    def max_mac(self) -> float:
        return max(s.max_mac() for s in self.slots)

    def to_dict(self) -> dict:
        return {
            "slots": [s.to_dict() for s in self.slots],
            "theta_resolution": self.theta_resolution,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DesignSpace":
        unknown = set(data) - {"slots", "theta_resolution"}
        if unknown:
            raise ValueError(f"unknown design-space keys {sorted(unknown)}")
        return cls(
            tuple(SlotSpace.from_dict(s) for s in data["slots"]),
            int(data.get("theta_resolution", 101)),
        )


def enumerate_space(design_space: DesignSpace, slot: int) -> list[HyperParams]:
    """All lattice points of an optimizable slot, in lexicographic order."""
    space = design_space.slots[slot]
    if not space.optimizable:
        raise ValueError(f"slot {slot + 1} is fixed and cannot be enumerated")
    return space.candidates()


@dataclass(frozen=True, eq=False)
class NetworkProfile:
    hyperparams: HyperParams
    scores: np.ndarray
    labels: np.ndarray
    power_w: float
    runtime_s: float
    energy_mj: float
    platform_tag: str = "synthetic"

    @property
    def image_count(self) -> int:
        return int(self.labels.shape[0])

    @property
    def class_count(self) -> int:
        return int(self.scores.shape[1])

    def validate(self) -> None:
        if self.scores.ndim != 2 or self.scores.shape[0] != self.labels.shape[0]:
            raise ConsistencyError(
                f"{self.hyperparams.key()}: {self.scores.shape[0]} score rows "
                f"for {self.labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError(f"{self.hyperparams.key()}: non-finite scores")
        bad = np.flatnonzero((self.scores < 0.0) | (self.scores > 1.0))
        if bad.size:
            row = int(bad[0] // self.class_count)
            raise ValidationError(f"{self.hyperparams.key()}: row {row} has a score outside [0, 1]", row)
        sums = self.scores.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > SCORE_SUM_TOL)
        if bad.size:
            row = int(bad[0])
            raise ValidationError(
                f"{self.hyperparams.key()}: row {row} scores sum to {sums[row]!r}, not 1", row
            )
        if np.any((self.labels < 0) | (self.labels >= self.class_count)):
            row = int(np.flatnonzero((self.labels < 0) | (self.labels >= self.class_count))[0])
            raise ValidationError(f"{self.hyperparams.key()}: row {row} label out of range", row)
        for name in ("power_w", "runtime_s", "energy_mj"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{self.hyperparams.key()}: {name}={value!r} invalid")
        expected = self.power_w * self.runtime_s * 1000.0
        if not math.isclose(self.energy_mj, expected, rel_tol=ENERGY_REL_TOL, abs_tol=1e-12):
            raise ValidationError(
                f"{self.hyperparams.key()}: energy_mj {self.energy_mj!r} != power*runtime*1000 "
                f"({expected!r})"
            )


@dataclass(frozen=True)
class StageTrace:
    """Per-image quantities of one network that the cascade walk needs."""

    margins: np.ndarray  # float64, clipped to [0, 1]
    losses: np.ndarray  # int64 0-1 loss
    predicted: np.ndarray
    power_w: float
    runtime_s: float


def score_margins(scores: np.ndarray) -> np.ndarray:
    """Row-wise largest minus second-largest score."""
    top2 = -np.partition(-scores, 1, axis=1)[:, :2]
    return np.clip(top2[:, 0] - top2[:, 1], 0.0, 1.0)


@dataclass(eq=False)
class ProfileDataset:
    design_space: DesignSpace
    profiles: dict[tuple[int, HyperParams], NetworkProfile]
    image_count: int
    class_count: int
    labels: np.ndarray
    validation_index: np.ndarray
    test_index: np.ndarray
    split_seed: int = 0
    split_fraction: float = 0.8
    platform_tag: str = "synthetic"
    deployment: dict = field(default_factory=dict)
    _traces: dict = field(default_factory=dict, repr=False)

    def profile(self, slot: int, hp: HyperParams) -> NetworkProfile:
        try:
            return self.profiles[(slot, hp)]
        except KeyError:
            raise ProfileLookupError(slot, hp.key()) from None

    def image_indices(self, image_set: str) -> np.ndarray:
        if image_set == "validation":
            return self.validation_index
        if image_set == "test":
            return self.test_index
        if image_set == "all":
            return np.arange(self.image_count)
        raise ValueError(f"unknown image set {image_set!r}")

    def stage_trace(self, slot: int, hp: HyperParams) -> StageTrace:
        """Margins and losses over all images, computed once per profile."""
        cached = self._traces.get((slot, hp))
        if cached is None:
            prof = self.profile(slot, hp)
            predicted = np.argmax(prof.scores, axis=1)
            cached = StageTrace(
                margins=score_margins(prof.scores),
                losses=(predicted != self.labels).astype(np.int64),
                predicted=predicted,
                power_w=prof.power_w,
                runtime_s=prof.runtime_s,
            )
            self._traces[(slot, hp)] = cached
        return cached

    def validate(self) -> None:
        if self.image_count <= 0 or self.class_count <= 0:
            raise ValidationError("image_count and class_count must be positive")
        if self.labels.shape != (self.image_count,):
            raise ConsistencyError("label sequence length differs from image_count")
        for (slot, hp), prof in self.profiles.items():
            if not 0 <= slot < self.design_space.n_slots:
                raise ConsistencyError(f"profile {hp.key()} refers to missing slot {slot + 1}")
            if prof.image_count != self.image_count:
                raise ConsistencyError(
                    f"slot {slot + 1} {hp.key()}: {prof.image_count} images, "
                    f"dataset declares {self.image_count}"
                )
            if prof.class_count != self.class_count:
                raise ConsistencyError(
                    f"slot {slot + 1} {hp.key()}: {prof.class_count} classes, "
                    f"dataset declares {self.class_count}"
                )
            if not np.array_equal(prof.labels, self.labels):
                raise ConsistencyError(f"slot {slot + 1} {hp.key()}: label sequence differs")
            prof.validate()
        both = np.concatenate([self.validation_index, self.test_index])
        if both.size != self.image_count or not np.array_equal(
            np.sort(both), np.arange(self.image_count)
        ):
            raise ConsistencyError("validation and test indices do not partition the images")


# ---------------------------------------------------------------------------
# splitting


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def split_indices(image_count: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"validation fraction must lie in (0, 1), got {fraction}")
    if image_count < 2:
        raise ValueError("splitting needs at least 2 images")
    n_val = round_half_away(fraction * image_count)
    perm = PortableRng(seed, 0x5711).permutation(image_count)
    return np.sort(perm[:n_val]), np.sort(perm[n_val:])


def split_images(dataset: ProfileDataset, validation_fraction: float, seed: int) -> ProfileDataset:
    """Return a copy of ``dataset`` with a fresh validation/test partition.

    The validation size is ``round(fraction * image_count)`` with halves rounded
    away from zero, so 0.5 of 3 images gives 2 validation and 1 test image.
    """
    val, test = split_indices(dataset.image_count, validation_fraction, seed)
    return dataclasses.replace(
        dataset,
        validation_index=val,
        test_index=test,
        split_seed=seed,
        split_fraction=validation_fraction,
        _traces=dataset._traces,
    )


# ---------------------------------------------------------------------------
# synthetic profiles


@dataclass(frozen=True)
class SlotModel:
    """Capacity of one slot as an affine function of normalized hyper-parameters."""

    capacity_intercept: float
    capacity_weights: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "capacity_weights", tuple(float(w) for w in self.capacity_weights))
        if any(w < 0 for w in self.capacity_weights):
            raise ValueError("capacity weights must be non-negative")


@dataclass(frozen=True)
class SyntheticSpec:
    slots: tuple[SlotModel, ...]
    class_count: int = 10
    image_count: int = 500
    energy_scale_mj: float = 200.0  # mJ per unit of normalized MAC proxy
    energy_offset_mj: float = 5.0
    power_w: float = 5.0
    margin_noise: float = 0.0
    seed: int = 0
    validation_fraction: float = 0.8
    platform_tag: str = "synthetic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticSpec":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown synthetic-spec keys {sorted(unknown)}")
        kwargs = dict(data)
        kwargs["slots"] = tuple(
            SlotModel(s["capacity_intercept"], tuple(s["capacity_weights"])) for s in data["slots"]
        )
        return cls(**kwargs)


def capacity(model: SlotModel, space: SlotSpace, hp: HyperParams) -> float:
    raw = model.capacity_intercept + float(np.dot(model.capacity_weights, space.normalized(hp)))
    return min(max(raw, 0.5), 0.99)


def synth_scores(
    difficulty: np.ndarray,
    labels: np.ndarray,
    cap: float,
    noise: np.ndarray,
    choice: np.ndarray,
    class_count: int,
) -> np.ndarray:
    """Score rows whose argmax and top-two margin follow the capacity rule.

    ``choice`` holds two uniforms per image used to pick the competing classes.
    Non-top mass is split so the runner-up gets ``top - margin`` and the rest
    share what remains equally (each at half the runner-up's score).
    """
    n = difficulty.shape[0]
    K = class_count
    correct = difficulty < cap
    margin = np.clip(0.1 + 1.5 * (cap - difficulty) + noise, 0.0, 1.0)
    rows = np.arange(n)

    u1, u2 = choice[:, 0], choice[:, 1]
    # first pick among the K-1 classes other than the label
    a = np.minimum(np.floor(u1 * (K - 1)).astype(np.int64), K - 2)
    a = a + (a >= labels)
    top = np.where(correct, labels, a)
    if K >= 3:
        # second pick among the K-2 classes other than the label and `a`
        b = np.minimum(np.floor(u2 * (K - 2)).astype(np.int64), K - 3)
        lo, hi = np.minimum(labels, a), np.maximum(labels, a)
        b = b + (b >= lo)
        b = b + (b >= hi)
        wrong_top, wrong_run = np.minimum(a, b), np.maximum(a, b)
        top = np.where(correct, labels, wrong_top)
        runner = np.where(correct, a, wrong_run)
    else:
        runner = np.where(correct, a, labels)

    margin = np.where((margin == 0.0) & (runner < top), TIE_MARGIN, margin)
    p_top = (2.0 + margin * K) / (2.0 + K)
    p_run = p_top - margin
    scores = np.empty((n, K))
    if K > 2:
        rest = (1.0 - p_top - p_run) / (K - 2)
        scores[:] = np.maximum(rest, 0.0)[:, None]
    scores[rows, runner] = p_run
    scores[rows, top] = p_top
    return scores


def generate_synthetic(spec: SyntheticSpec, design_space: DesignSpace) -> ProfileDataset:
    """Synthesize one profile per lattice point of every slot.

    Each image has a difficulty in [0, 1) shared across networks; a network of
    capacity ``c`` classifies it correctly iff ``difficulty < c``. Energy is
    ``a * mac / mac_max + b`` with ``mac_max`` taken over the whole space.
    """
    if spec.image_count <= 0:
        raise ValueError("image_count must be positive")
    if spec.class_count < 2:
        raise ValueError("class_count must be at least 2")
    if len(spec.slots) != design_space.n_slots:
        raise ValueError(
            f"synthetic spec has {len(spec.slots)} slot models for {design_space.n_slots} slots"
        )
    for i, (model, space) in enumerate(zip(spec.slots, design_space.slots)):
        if len(model.capacity_weights) != len(space.dims):
            raise ValueError(f"slot {i + 1}: {len(model.capacity_weights)} weights for {len(space.dims)} dims")
    if spec.power_w <= 0 or spec.energy_offset_mj <= 0 or spec.energy_scale_mj < 0:
        raise ValueError("power and energy offset must be positive, energy scale non-negative")

    n, K = spec.image_count, spec.class_count
    base = PortableRng(spec.seed, 0)
    difficulty = base.uniform(n)
    labels = base.integers(K, n)
    mac_max = design_space.max_mac()

    profiles: dict[tuple[int, HyperParams], NetworkProfile] = {}
    for slot, (model, space) in enumerate(zip(spec.slots, design_space.slots)):
        for hp in space.candidates():
            rng = PortableRng(spec.seed, 1, slot, *hp.values)
            noise = rng.normal(n) * spec.margin_noise
            choice = rng.uniform(2 * n).reshape(n, 2)
            scores = synth_scores(difficulty, labels, capacity(model, space, hp), noise, choice, K)
            energy = spec.energy_scale_mj * hp.mac_proxy() / mac_max + spec.energy_offset_mj
            runtime = energy / (spec.power_w * 1000.0)
            profiles[(slot, hp)] = NetworkProfile(
                hyperparams=hp,
                scores=scores,
                labels=labels,
                power_w=spec.power_w,
                runtime_s=runtime,
                energy_mj=spec.power_w * runtime * 1000.0,
                platform_tag=spec.platform_tag,
            )

    val, test = split_indices(n, spec.validation_fraction, spec.seed)
    return ProfileDataset(
        design_space=design_space,
        profiles=profiles,
        image_count=n,
        class_count=K,
        labels=labels,
        validation_index=val,
        test_index=test,
        split_seed=spec.seed,
        split_fraction=spec.validation_fraction,
        platform_tag=spec.platform_tag,
    )


# ---------------------------------------------------------------------------
# persistence


def record_filename(slot: int, hp: HyperParams) -> str:
    return f"slot{slot + 1}__{hp.key()}.txt"


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(dataset: ProfileDataset, path: str | os.PathLike) -> None:
    """Write ``manifest.json`` plus one text record per profile."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for (slot, hp), prof in sorted(dataset.profiles.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        name = record_filename(slot, hp)
        lines = [",".join(_fmt(v) for v in (prof.power_w, prof.runtime_s, prof.energy_mj))]
        for label, row in zip(prof.labels.tolist(), prof.scores.tolist()):
            lines.append(",".join([str(label)] + [repr(v) for v in row]))
        (root / name).write_text("\n".join(lines) + "\n")
        entries.append(
            {
                "slot": slot + 1,
                "hyperparams": hp.as_dict(),
                "file": name,
                "platform_tag": prof.platform_tag,
            }
        )
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "class_count": dataset.class_count,
        "image_count": dataset.image_count,
        "platform_tag": dataset.platform_tag,
        "design_space": dataset.design_space.to_dict(),
        "split": {"seed": dataset.split_seed, "validation_fraction": dataset.split_fraction},
        "deployment": dataset.deployment,
        "labels": dataset.labels.tolist(),
        "profiles": entries,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")


def _parse_float(token: str, where: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"{where}: {token!r} is not a decimal number") from None
    if not math.isfinite(value):
        raise ValidationError(f"{where}: non-finite value {token!r}")
    return value


def _read_record(path: Path, K: int, n: int, hp: HyperParams, tag: str) -> NetworkProfile:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError(f"missing record file {path.name}") from None
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path.name}: empty record file")
    header = lines[0].split(",")
    if len(header) != 3:
        raise FormatError(f"{path.name}: header must hold power_w, runtime_s, energy_mj")
    power, runtime, energy = (_parse_float(t, f"{path.name} header") for t in header)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise ConsistencyError(f"{path.name}: {len(body)} image rows, manifest declares {n}")
    labels = np.empty(n, dtype=np.int64)
    scores = np.empty((n, K))
    for i, line in enumerate(body):
        tokens = line.split(",")
        if len(tokens) != K + 1:
            raise ConsistencyError(
                f"{path.name}: row {i} has {len(tokens) - 1} scores, manifest declares K={K}"
            )
        try:
            labels[i] = int(tokens[0])
        except ValueError:
            raise FormatError(f"{path.name}: row {i} label {tokens[0]!r} is not an integer") from None
        where = f"{path.name} row {i}"
        scores[i] = [_parse_float(t, where) for t in tokens[1:]]
        if abs(math.fsum(scores[i]) - 1.0) > SCORE_SUM_TOL:
            raise ValidationError(f"{path.name}: row {i} scores sum to {math.fsum(scores[i])!r}, not 1", i)
    return NetworkProfile(hp, scores, labels, power, runtime, energy, tag)


def load_dataset(path: str | os.PathLike) -> ProfileDataset:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"{root}: no {MANIFEST}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{root / MANIFEST}: {exc}") from None
    if manifest.get("format") != FORMAT_NAME:
        raise FormatError(f"{root / MANIFEST}: not a {FORMAT_NAME} manifest")
    try:
        K = int(manifest["class_count"])
        n = int(manifest["image_count"])
        space = DesignSpace.from_dict(manifest["design_space"])
        split = manifest["split"]
        entries = manifest["profiles"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{root / MANIFEST}: malformed manifest ({exc})") from None

    profiles: dict[tuple[int, HyperParams], NetworkProfile] = {}
    labels = None
    for entry in entries:
        slot = int(entry["slot"]) - 1
        if not 0 <= slot < space.n_slots:
            raise ConsistencyError(f"profile {entry['file']} refers to missing slot {slot + 1}")
        names = space.slots[slot].names
        try:
            hp = HyperParams(names, tuple(int(entry["hyperparams"][nm]) for nm in names))
        except KeyError as exc:
            raise ConsistencyError(f"profile {entry['file']} lacks hyper-parameter {exc}") from None
        prof = _read_record(root / entry["file"], K, n, hp, entry.get("platform_tag", ""))
        if labels is None:
            labels = prof.labels
        elif not np.array_equal(labels, prof.labels):
            raise ConsistencyError(f"{entry['file']}: label sequence differs from other profiles")
        profiles[(slot, hp)] = NetworkProfile(
            hp, prof.scores, labels, prof.power_w, prof.runtime_s, prof.energy_mj, prof.platform_tag
        )

    if labels is None:
        stored = manifest.get("labels")
        labels = np.asarray(stored if stored is not None else np.zeros(n), dtype=np.int64)
    if n >= 2:
        val, test = split_indices(n, float(split["validation_fraction"]), int(split["seed"]))
    else:
        val, test = np.arange(n), np.arange(0)
    dataset = ProfileDataset(
        design_space=space,
        profiles=profiles,
        image_count=n,
        class_count=K,
        labels=labels,
        validation_index=val,
        test_index=test,
        split_seed=int(split["seed"]),
        split_fraction=float(split["validation_fraction"]),
        platform_tag=manifest.get("platform_tag", ""),
        deployment=manifest.get("deployment", {}),
    )
    dataset.validate()
    return dataset


def iter_architectures(design_space: DesignSpace) -> Iterator[tuple[HyperParams, ...]]:
    """Every architecture tuple (h_1, ..., h_M) in lexicographic order."""
    return itertools.product(*(s.candidates() for s in design_space.slots))
