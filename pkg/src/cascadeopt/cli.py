"""Command-line entry point: ``cascadeopt <generate|evaluate|optimize|pareto|validate>``.

Exit codes: 0 success, 2 validation error, 3 infeasible result, 4 I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from cascadeopt import presets
from cascadeopt.baselines import grid_search, random_search, static_design
from cascadeopt.bo import OptimizationProblem, OptResult, run_bo
from cascadeopt.cascade_eval import (
    CascadeConfig,
    DeploymentModel,
    EnergyMin,
    ErrorMin,
    deployment_preset,
    evaluate_cascade,
    pareto_front,
)
from cascadeopt.errors import ConsistencyError, FormatError, ProfileLookupError, ValidationError
from cascadeopt.profile_store import (
    DesignSpace,
    HyperParams,
    ProfileDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from cascadeopt.results import _num, read_points, summary_rows, write_csv, write_result

log = logging.getLogger("cascadeopt")

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4
METHODS = ("bo", "bo-plus", "grid", "random", "static")


class CliError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to rerun a command; persisted next to its outputs."""

    problem: str = "energy-min"  # energy-min | error-min
    bound: float = presets.BENCHMARK_BOUND
    deployment: Any = "local"  # preset name or {"preset": name, **overrides}
    design_space: dict | None = None
    method: str = "bo-plus"
    iterations: int = 50
    initial_designs: int = 5
    theta_resolution: int = 101
    seeds: list[int] = field(default_factory=lambda: [0])
    dataset: str | None = None
    synthetic: dict | None = None
    image_set: str = "validation"
    pool_size: int = 2000
    budget: int | None = None
    static_slots: list[str] | None = None
    out: str = "results"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def validate(self) -> None:
        if self.problem not in ("energy-min", "error-min"):
            raise CliError(f"problem: expected 'energy-min' or 'error-min', got {self.problem!r}")
        if self.method not in METHODS:
            raise CliError(f"method: expected one of {', '.join(METHODS)}, got {self.method!r}")
        if self.dataset is not None and self.synthetic is not None:
            raise CliError("dataset and synthetic are mutually exclusive")
        if self.iterations < 1:
            raise CliError("iterations: must be at least 1")
        if not self.seeds:
            raise CliError("seeds: need at least one seed")
        self.problem_kind()
        self.deployment_model()

    def problem_kind(self):
        try:
            return EnergyMin(self.bound) if self.problem == "energy-min" else ErrorMin(self.bound)
        except ValueError as exc:
            raise CliError(f"bound: {exc}") from None

    def deployment_model(self) -> DeploymentModel:
        spec = self.deployment
        try:
            if isinstance(spec, str):
                return deployment_preset(spec)
            spec = dict(spec)
            name = spec.pop("preset", "local")
            return deployment_preset(name, **spec)
        except (ValueError, TypeError) as exc:
            raise CliError(f"deployment: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _load_config(args) -> ExperimentConfig:
    data: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise CliError(f"{args.config}: top level must be an object")
    cfg = ExperimentConfig.from_dict(data)
    for attr, dest in (
        ("method", "method"),
        ("iters", "iterations"),
        ("bound", "bound"),
        ("out", "out"),
        ("dataset", "dataset"),
        ("problem", "problem"),
        ("theta_resolution", "theta_resolution"),
        ("image_set", "image_set"),
        ("budget", "budget"),
        ("initial_designs", "initial_designs"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, dest, value)
    if getattr(args, "deployment", None) is not None:
        cfg.deployment = args.deployment
    if getattr(args, "seeds", None) is not None:
        cfg.seeds = args.seeds
    if getattr(args, "dataset", None) is not None:
        cfg.synthetic = None
    cfg.validate()
    return cfg


def _synthetic_parts(cfg: ExperimentConfig) -> tuple[SyntheticSpec, DesignSpace]:
    try:
        space = (
            DesignSpace.from_dict(cfg.design_space)
            if cfg.design_space is not None
            else presets.benchmark_space(cfg.theta_resolution)
        )
        spec = SyntheticSpec.from_dict(cfg.synthetic) if cfg.synthetic is not None else presets.benchmark_spec()
    except (KeyError, TypeError) as exc:
        raise CliError(f"design_space/synthetic: malformed entry ({exc})") from None
    return spec, space


def _dataset(cfg: ExperimentConfig) -> ProfileDataset:
    if cfg.dataset is not None:
        ds = load_dataset(cfg.dataset)
    else:
        spec, space = _synthetic_parts(cfg)
        ds = generate_synthetic(spec, space)
    if ds.design_space.theta_resolution != cfg.theta_resolution:
        ds = dataclasses.replace(
            ds, design_space=dataclasses.replace(ds.design_space, theta_resolution=cfg.theta_resolution)
        )
    return ds


def _parse_seeds(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    spec, space = _synthetic_parts(cfg)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.images is not None:
        overrides["image_count"] = args.images
    if args.noise is not None:
        overrides["margin_noise"] = args.noise
    spec = dataclasses.replace(spec, **overrides)
    ds = generate_synthetic(spec, space)
    ds.deployment = cfg.deployment_model().to_dict()
    out = Path(cfg.out)
    save_dataset(ds, out)
    (out / "generate_config.json").write_text(
        json.dumps({**cfg.to_dict(), "synthetic": spec.to_dict(), "design_space": space.to_dict()}, indent=1) + "\n"
    )
    print(
        f"wrote {len(ds.profiles)} profiles to {out}: lattice {space.lattice_size()} points "
        f"({space.architecture_count()} architectures x {space.theta_resolution} thresholds^{space.n_slots - 1}), "
        f"K={ds.class_count}, images={ds.image_count}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = load_dataset(args.path)
    print(f"ok: {len(ds.profiles)} profiles, K={ds.class_count}, images={ds.image_count}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    ds = _dataset(cfg)
    if len(args.slot) != ds.design_space.n_slots:
        raise CliError(f"--slot: need {ds.design_space.n_slots} networks, got {len(args.slot)}")
    slots = tuple(
        HyperParams.from_key(key, space.names) for key, space in zip(args.slot, ds.design_space.slots)
    )
    thetas = tuple(args.theta or ())
    config = CascadeConfig(slots, thetas, cfg.deployment_model())
    ev = evaluate_cascade(config, ds, cfg.image_set, cfg.problem_kind())
    record = {
        "slots": [hp.key() for hp in slots],
        "thresholds": list(thetas),
        "image_set": cfg.image_set,
        "problem": cfg.problem,
        "bound": cfg.bound,
        "deployment": config.deployment.to_dict(),
        "evaluation": ev.to_dict(),
    }
    text = json.dumps(record, indent=1)
    print(text)
    if args.record is not None:
        Path(args.record).write_text(text + "\n")
    return EXIT_OK


def _run_one(cfg: ExperimentConfig, ds: ProfileDataset, seed: int, outdir: Path) -> OptResult:
    problem = OptimizationProblem(cfg.problem_kind(), cfg.deployment_model(), cfg.image_set)
    outdir.mkdir(parents=True, exist_ok=True)
    progress_lines: list[str] = []

    def progress(rec: dict) -> None:
        progress_lines.append(json.dumps(rec, sort_keys=True))

    if cfg.method in ("bo", "bo-plus"):
        res = run_bo(
            problem,
            ds,
            iterations=cfg.iterations,
            initial_designs=cfg.initial_designs,
            fine_tune=cfg.method == "bo-plus",
            seed=seed,
            pool_size=cfg.pool_size,
            progress=progress,
        )
    elif cfg.method == "grid":
        res = grid_search(problem, ds, progress=progress)
    elif cfg.method == "random":
        budget = cfg.budget if cfg.budget is not None else cfg.iterations
        res = random_search(problem, ds, budget, seed)
    else:
        fixed = None
        if cfg.static_slots is not None:
            fixed = tuple(HyperParams.from_key(k, s.names) for k, s in zip(cfg.static_slots, ds.design_space.slots))
        res = static_design(problem, ds, fixed)
    (outdir / "progress.jsonl").write_text("".join(line + "\n" for line in progress_lines))
    write_result(res, seed, outdir)
    return res


def _worker(cfg_dict: dict, seed: int, outdir: str) -> tuple[int, OptResult]:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return seed, _run_one(cfg, _dataset(cfg), seed, Path(outdir))


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    # grid and static are deterministic; one run covers every seed
    seeds = cfg.seeds if cfg.method in ("bo", "bo-plus", "random") else cfg.seeds[:1]
    results: list[tuple[int, OptResult]] = []
    if args.jobs > 1 and len(seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            futs = [pool.submit(_worker, cfg.to_dict(), s, str(out / f"seed-{s}")) for s in seeds]
            results = sorted((f.result() for f in futs), key=lambda t: t[0])
    else:
        ds = _dataset(cfg)
        for s in seeds:
            results.append((s, _run_one(cfg, ds, s, out / f"seed-{s}")))
    header, rows = summary_rows(cfg.method, results)
    write_csv(out / "summary.csv", header, rows)
    for s, r in results:
        state = f"best objective {r.best_objective!r}" if r.best is not None else "infeasible"
        print(f"{cfg.method} seed {s}: {state} ({r.wall_time_s:.2f} s)")
    if all(r.best is None for _, r in results):
        print("no feasible design found", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_pareto(args) -> int:
    points: list[tuple[float, float]] = []
    for path in args.inputs:
        points.extend(read_points(Path(path)))
    front = pareto_front(points)
    rows = [[_num(e), _num(r)] for e, r in front]
    if args.out is not None:
        write_csv(Path(args.out), ["expected_energy_mj", "error_rate"], rows)
    else:
        sys.stdout.write("expected_energy_mj,error_rate\n")
        sys.stdout.writelines(f"{e},{r}\n" for e, r in rows)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; unknown keys are rejected")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deployment", help="local | ethernet | wireless")
    p.add_argument("--bound", type=float, help="degradation bound B or energy budget E_max (mJ)")
    p.add_argument("--problem", choices=("energy-min", "error-min"))
    p.add_argument("--theta-resolution", type=int, dest="theta_resolution")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadeopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a profile dataset")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--images", type=int)
    p.add_argument("--noise", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="evaluate one cascade configuration")
    _add_common(p)
    p.add_argument("--dataset", help="profile dataset directory (default: synthetic benchmark)")
    p.add_argument("--slot", action="append", required=True, help="network encoding, once per stage in order")
    p.add_argument("--theta", type=float, action="append", help="threshold, once per decision")
    p.add_argument("--image-set", dest="image_set", choices=("validation", "test", "all"))
    p.add_argument("--record", help="also write the evaluation record to this JSON file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="run an optimizer for one or more seeds")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--seeds", "--seed", type=_parse_seeds, dest="seeds", help="e.g. 0-9 or 1,4,7")
    p.add_argument("--iters", type=int, help="BO iterations (default 50)")
    p.add_argument("--initial-designs", type=int, dest="initial_designs")
    p.add_argument("--budget", type=int, help="random-search sample count (default: --iters)")
    p.add_argument("--image-set", dest="image_set", choices=("validation", "test", "all"))
    p.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("pareto", help="non-dominated (energy, error) pairs of result CSVs")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("validate", help="check a profile dataset directory")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, FormatError, ValidationError, ConsistencyError, ProfileLookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
