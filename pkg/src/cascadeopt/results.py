"""CSV and JSON persistence for optimization results.

Floats are written with ``repr`` so equal runs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from pathlib import Path
from typing import Iterable, Sequence

from cascadeopt.bo import Observation, OptResult
from cascadeopt.cascade_eval import CascadeConfig, pareto_front


def _num(x: float) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def history_rows(history: Sequence[Observation]) -> tuple[list[str], list[list[str]]]:
    depth = history[0].config.depth if history else 0
    header = (
        ["index", "source", "iteration"]
        + [f"slot{i + 1}" for i in range(depth)]
        + [f"theta{i + 1}" for i in range(depth - 1)]
        + ["expected_energy_mj", "error_rate", "degradation", "objective", "constraint", "feasible"]
    )
    rows = []
    for k, rec in enumerate(history):
        ev = rec.evaluation
        rows.append(
            [str(k), rec.source, str(rec.iteration)]
            + [hp.key() for hp in rec.config.slots]
            + [_num(t) for t in rec.config.thresholds]
            + [_num(ev.expected_energy_mj), _num(ev.error_rate), _num(ev.degradation)]
            + [_num(rec.objective), _num(rec.constraint), _num(rec.feasible)]
        )
    return header, rows


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def history_csv(history: Sequence[Observation]) -> str:
    header, rows = history_rows(history)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def config_dict(config: CascadeConfig) -> dict:
    return {
        "slots": [hp.key() for hp in config.slots],
        "thresholds": list(config.thresholds),
        "deployment": config.deployment.to_dict(),
    }


def write_result(result: OptResult, seed: int, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "history.csv").write_text(history_csv(result.history))
    write_csv(
        outdir / "best_so_far.csv",
        ["iteration", "best_objective"],
        ([str(i), _num(v)] for i, v in enumerate(result.best_so_far)),
    )
    meta = {
        "method": result.method,
        "seed": seed,
        "feasible": result.best is not None,
        "best": None
        if result.best is None
        else {"config": config_dict(result.best.config), "evaluation": result.best.evaluation.to_dict()},
        "best_objective": None if result.best is None else result.best.objective,
        "best_constraint": None if result.best is None else result.best.constraint,
        "history_length": len(result.history),
        "architectures_evaluated": result.architectures_evaluated,
        "wall_time_s": result.wall_time_s,
        "diagnostic": result.diagnostic,
    }
    (outdir / "result.json").write_text(json.dumps(meta, indent=1) + "\n")
    if result.cloud:
        energy, error = result.cloud["energy"], result.cloud["error"]
        write_csv(
            outdir / "cloud.csv",
            ["expected_energy_mj", "error_rate", "objective", "constraint"],
            (
                [_num(a), _num(b), _num(c), _num(d)]
                for a, b, c, d in zip(energy, error, result.cloud["objective"], result.cloud["constraint"])
            ),
        )
        write_csv(
            outdir / "pareto.csv",
            ["expected_energy_mj", "error_rate"],
            ([_num(e), _num(r)] for e, r in pareto_front(list(zip(energy, error)))),
        )


def summary_rows(method: str, results: Sequence[tuple[int, OptResult]]) -> tuple[list[str], list[list[str]]]:
    header = ["method", "seeds", "feasible_runs", "median_best", "min_best", "max_best", "median_wall_time_s"]
    best = [r.best_objective for _, r in results if r.best is not None]
    times = [r.wall_time_s for _, r in results]
    row = [
        method,
        str(len(results)),
        str(len(best)),
        _num(statistics.median(best)) if best else "",
        _num(min(best)) if best else "",
        _num(max(best)) if best else "",
        _num(statistics.median(times)) if times else "",
    ]
    return header, [row]


def read_points(path: Path) -> list[tuple[float, float]]:
    """(energy, error) pairs from a history, cloud or pareto CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if "expected_energy_mj" not in reader.fieldnames or "error_rate" not in reader.fieldnames:
            raise ValueError(f"{path}: needs expected_energy_mj and error_rate columns")
        return [(float(r["expected_energy_mj"]), float(r["error_rate"])) for r in reader]
