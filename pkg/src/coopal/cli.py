"""Command line entry point and grid runner.

    coopal run --config cfg.json [--out DIR] [--seed-override N]
    coopal validate --config cfg.json
    coopal synth --classes 4 --features 18 --per-class 200 --seed 0 --out data.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Sequence

from .config import GridConfig, RunConfig, config_from_dict, parse_config
from .core import InvariantError, Mode, ValidationError
from .dataset import synthesize
from .integration import Method
from .simulator import CSV_HEADER, MetricsRow, RunMetrics, prepare, run_experiment

log = logging.getLogger("coopal")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _row_tuple(r: MetricsRow) -> tuple:
    return (
        r.step,
        r.online_size,
        r.mode,
        r.method,
        r.policy,
        r.seed,
        r.labeling_accuracy,
        r.classification_accuracy,
        r.cum_bytes,
    )


def average_over_seeds(runs: Sequence[RunMetrics]) -> list[tuple]:
    """Per-step means across seeds; a run that stopped early holds its last row."""
    length = max(len(r.rows) for r in runs)
    out = []
    first = runs[0].rows[0]
    for step in range(length):
        picked = [r.rows[min(step, len(r.rows) - 1)] for r in runs]
        n = len(picked)
        out.append(
            (
                step,
                step,
                first.mode,
                first.method,
                first.policy,
                "mean",
                sum(p.labeling_accuracy for p in picked) / n,
                sum(p.classification_accuracy for p in picked) / n,
                sum(p.cum_bytes for p in picked) / n,
            )
        )
    return out


def cell_name(mode: Mode, method: Method, policy: str) -> str:
    return f"cell_{Mode(mode).value}_{Method(method).value}_{policy}.csv"


@lru_cache(maxsize=16)
def _setup_cached(config_json: str, seed: int):
    return prepare(RunConfig.model_validate_json(config_json), seed)


def _setup_key(config: RunConfig) -> str:
    # cell-specific fields do not influence the setup
    return config.model_copy(update={"mode": Mode.SAMPLES, "policy": "qds", "grid": None}).model_dump_json(
        exclude={"integration"}
    )


def run_cell(config: RunConfig, out_dir: str | None = None) -> list[RunMetrics]:
    """All seeds of one fixed (mode, method, policy) config; optionally writes the per-cell CSV."""
    key = _setup_key(config)
    runs = [run_experiment(config, s, _setup_cached(key, s)) for s in config.seeds]
    if out_dir is not None:
        method = config.integration.resolved_method()
        _write_rows(Path(out_dir) / cell_name(config.mode, method, config.policy), average_over_seeds(runs))
    return runs


def _run_cell_json(config_json: str, out_dir: str) -> list[RunMetrics]:
    return run_cell(RunConfig.model_validate_json(config_json), out_dir)


def grid_cells(config: RunConfig, grid: GridConfig | None = None) -> list[RunConfig]:
    grid = grid or config.grid
    if grid is None:
        return [config.cell(config.mode, config.integration.resolved_method(), config.policy)]
    cells = list(product(grid.modes, grid.methods, grid.policies))
    if not cells:
        raise ValidationError("grid is empty: modes, methods and policies each need at least one entry")
    return [config.cell(m, meth, pol) for m, meth, pol in cells]


def _threads() -> int:
    raw = os.environ.get("COOPAL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"COOPAL_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_grid(config: RunConfig, grid: GridConfig | None = None, out_dir: str | Path | None = None) -> dict:
    """Run every grid cell over all seeds and write per-cell and combined CSVs.

    Returns ``{"cells": [paths], "combined": path, "runs": {cell file name: [RunMetrics]}}``.
    """
    cells = grid_cells(config, grid)
    out = Path(out_dir or config.output)
    out.mkdir(parents=True, exist_ok=True)

    workers = min(_threads(), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell_json, c.model_dump_json(), str(out)) for c in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(c, str(out)) for c in cells]

    combined = []
    runs = {}
    names = []
    for cfg, cell_runs in zip(cells, results):
        name = cell_name(cfg.mode, cfg.integration.resolved_method(), cfg.policy)
        names.append(out / name)
        runs[name] = cell_runs
        for run in cell_runs:
            combined.extend(_row_tuple(r) for r in run.rows)
    _write_rows(out / "combined.csv", combined)

    summary = {
        name: [
            {"seed": r.rows[0].seed, "n_star": r.n_star, "target_met": r.target_met, "ego": r.ego_kind}
            for r in cell_runs
        ]
        for name, cell_runs in runs.items()
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %d cell files to %s", len(names), out)
    return {"cells": names, "combined": out / "combined.csv", "runs": runs}


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.seed_override is not None:
        config = config_from_dict({**config.model_dump(mode="json", exclude_none=True), "seeds": [args.seed_override]})
    res = run_grid(config, out_dir=args.out)
    print(res["combined"])
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = parse_config(args.config)
    n = len(grid_cells(config))
    print(f"ok: {n} cell(s) x {len(config.seeds)} seed(s)")
    return EXIT_OK


def _cmd_synth(args) -> int:
    ds = synthesize(args.classes, args.features, args.per_class, args.spread, args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, k in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in x] + [ds.class_names[k]])
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopal", description="Cooperative active learning simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured experiment grid")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides config 'output')")
    r.add_argument("--seed-override", type=int, default=None)
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=_cmd_validate)

    s = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--features", type=int, default=18)
    s.add_argument("--per-class", type=int, default=200)
    s.add_argument("--spread", type=float, default=1.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvariantError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
