"""Command-line entry point: run, sweep, compare, topo-report, stability."""

import argparse
import itertools
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dgossip.engine import ExperimentResult, build_setup, run_experiment
from dgossip.metrics import format_rounds, records_frame, stability_probe
from dgossip.schemas import AlgorithmKind, ExperimentConfig, load_experiment
from dgossip.topology import (
    TopologyKind,
    TopologySpec,
    beta_theory_bound,
    build_mixing,
    psi_formulas,
)
from dgossip.utils import (
    ConfigError,
    DGossipException,
    DivergenceError,
    StorageError,
    flatten_keys,
    get_module_logger,
    parse_override,
)

logger = get_module_logger()

SUMMARY_FILE = "summary.json"
METRICS_FILE = "metrics.csv"
PARTITION_FILE = "partition.json"
DEFAULT_TOPO_KINDS = "fully_connected,exponential,grid,ring"
DEFAULT_COMPARE = "oled_sam,oled_sgd,dfedsam,dfedavgm,dfedavg,dpsgd"


class RunManifest(BaseModel):
    config: Path = Field(default=Path("config.yaml"), description="Experiment YAML")
    out: Path = Field(default=Path("runs"), description="Output directory")
    overrides: List[str] = Field(default_factory=list, description="Dotted KEY=VALUE overrides")
    workers: int = Field(default=1, ge=1, description="Client-training threads")
    force: bool = Field(default=False, description="Overwrite existing artifacts")
    progress: bool = Field(default=False, description="Show a round progress bar")

    model_config = ConfigDict(extra="forbid")

    def load(self, extra: Sequence[str] = ()) -> ExperimentConfig:
        return load_experiment(self.config, [*self.overrides, *extra])


def resolve_workers(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    try:
        workers = int(value)
    except ValueError as e:
        raise ConfigError(6031, "--workers must be an integer or 'auto'", value) from e
    if workers < 1:
        raise ConfigError(6031, "--workers must be >= 1", value)
    return workers


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise StorageError(7004, "Could not write CSV", f"{path}: {e}") from e
    logger.info(f"wrote {path}")


def write_json(payload: Dict[str, Any], path: Path) -> None:
    try:
        with open(path, "w") as f:
            json.dump(_json_safe(payload), f, indent=2)
    except OSError as e:
        raise StorageError(7005, "Could not write JSON", f"{path}: {e}") from e
    logger.info(f"wrote {path}")


def prepare_out_dir(out: Path, force: bool, guarded: str = SUMMARY_FILE) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(7006, "Could not create output directory", f"{out}: {e}") from e
    if (out / guarded).exists() and not force:
        raise StorageError(7007, "Refusing to overwrite existing results", f"{out / guarded} (use --force)")
    return out


def execute_run(
    cfg: ExperimentConfig, out: Path, workers: int, force: bool, progress: bool = False
) -> ExperimentResult:
    """One experiment with its metrics.csv, summary.json and partition.json."""
    prepare_out_dir(out, force)
    result = run_experiment(cfg, workers=workers, progress=progress)
    write_csv(records_frame(result.records), out / METRICS_FILE)
    write_json(result.summary, out / SUMMARY_FILE)
    if result.setup is not None and result.setup.plan is not None:
        result.setup.plan.dump(out / PARTITION_FILE)
    return result


def cmd_run(manifest: RunManifest) -> int:
    cfg = manifest.load()
    execute_run(cfg, manifest.out, manifest.workers, manifest.force, manifest.progress)
    return 0


def parse_axis(spec: str) -> Tuple[str, List[str]]:
    key, sep, raw = spec.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(6032, "Axis must look like KEY=V1,V2,...", spec)
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigError(6033, "empty sweep", key)
    return key, values


def _first_target(result: ExperimentResult) -> Optional[str | int]:
    targets = result.summary["rounds_to_targets"]
    if not targets:
        return None
    rounds = result.summary["config"]["rounds"]
    return format_rounds(next(iter(targets.values())), rounds)


def cmd_sweep(manifest: RunManifest, axes: Sequence[str]) -> int:
    """Cartesian product of the axes, one sub-run per cell, combined into sweep.csv."""
    if not axes:
        raise ConfigError(6033, "empty sweep", "no --axis given")
    parsed = [parse_axis(a) for a in axes]

    known = set(flatten_keys(manifest.load().echo()))
    for key, _ in parsed:
        if key not in known:
            raise ConfigError(6034, "Unknown sweep key", key)

    out = prepare_out_dir(manifest.out, manifest.force, guarded="sweep.csv")
    rows = []
    for cell in itertools.product(*[values for _, values in parsed]):
        assignments = [f"{key}={value}" for (key, _), value in zip(parsed, cell)]
        label = "|".join(cell)
        row: Dict[str, Any] = {"value": label}
        for (key, _), value in zip(parsed, cell):
            row[key] = parse_override(f"{key}={value}")[1]

        cell_dir = out / "__".join(a.replace("/", "_") for a in assignments)
        try:
            cfg = manifest.load(assignments)
            result = execute_run(cfg, cell_dir, manifest.workers, manifest.force)
        except DivergenceError as e:
            logger.warning(f"sweep cell {label} diverged: {e}")
            rows.append({**row, "status": "diverged"})
            continue
        except ConfigError as e:
            logger.warning(f"sweep cell {label} invalid: {e}")
            rows.append({**row, "status": "invalid"})
            continue

        final = result.summary["final"] or {}
        rows.append(
            {
                **row,
                "best_acc": result.summary["best_acc"],
                "rounds_to_first_target": _first_target(result),
                "final_delta_t": result.summary["final_delta_t"],
                "final_grad_norm_sq": final.get("grad_norm_sq"),
                "status": "ok",
            }
        )

    columns = ["value", *[key for key, _ in parsed], "best_acc", "rounds_to_first_target",
               "final_delta_t", "final_grad_norm_sq", "status"]
    frame = pd.DataFrame(rows, columns=columns)
    write_csv(frame, out / "sweep.csv")

    finished = frame[frame["status"] == "ok"]
    if not finished.empty:
        best = finished.loc[finished["best_acc"].idxmax()]
        logger.info(f"best cell {best['value']}: best_acc={best['best_acc']:.4f}")
    return 0


def _speedup_cell(hit: Optional[int], reference: Optional[int], rounds: int) -> str:
    if hit is None:
        return f"> {rounds}"
    count = hit + 1
    if reference is None:
        return f"{count} (-)"
    return f"{count} ({(reference + 1) / count:.1f}x)"


def cmd_compare(manifest: RunManifest, algorithms: Sequence[str], reference: str) -> int:
    """Rounds-to-target of several algorithms on one base config, with speed-up vs ``reference``."""
    try:
        kinds = [AlgorithmKind(a.strip()) for a in algorithms if a.strip()]
        reference_kind = AlgorithmKind(reference)
    except ValueError as e:
        raise ConfigError(6035, "Unknown algorithm", str(e)) from e
    if not kinds:
        raise ConfigError(6036, "Nothing to compare", "")
    if reference_kind not in kinds:
        kinds.append(reference_kind)

    out = prepare_out_dir(manifest.out, manifest.force, guarded="compare.csv")
    results: Dict[AlgorithmKind, ExperimentResult] = {}
    for kind in kinds:
        cfg = manifest.load([f"algorithm={kind.value}", "optimizer.method=null"])
        results[kind] = execute_run(cfg, out / kind.value, manifest.workers, manifest.force)

    targets = results[reference_kind].summary["rounds_to_targets"]
    if not targets:
        logger.warning("No targets configured: compare.csv only reports best accuracy")
    rounds = results[reference_kind].summary["config"]["rounds"]
    rows = []
    for kind, result in results.items():
        row = {"algorithm": kind.value, "best_acc": result.summary["best_acc"],
               "final_delta_t": result.summary["final_delta_t"]}
        for target, hit in result.summary["rounds_to_targets"].items():
            row[f"rounds@{target}"] = _speedup_cell(hit, targets[target], rounds)
        rows.append(row)
    write_csv(pd.DataFrame(rows), out / "compare.csv")
    return 0


def cmd_topo_report(kinds: Sequence[str], ms: Sequence[int], k: int, seed: int, out: Optional[Path]) -> int:
    formulas = psi_formulas()
    rows = []
    for name in kinds:
        try:
            kind = TopologyKind(name.strip())
        except ValueError as e:
            raise ConfigError(6037, "Unknown topology kind", name) from e
        for m in ms:
            try:
                spec = TopologySpec(
                    kind=kind, m=m, k=k if kind == TopologyKind.RANDOM_K else None, seed=seed
                )
            except ValidationError as e:
                raise ConfigError(1008, "Invalid topology", "; ".join(err["msg"] for err in e.errors())) from e
            mixing = build_mixing(spec)
            rows.append(
                {
                    "kind": kind.value,
                    "m": m,
                    "psi": mixing.psi,
                    "beta_theory_bound": beta_theory_bound(mixing.psi),
                    "asymptotic_psi": formulas.get(kind.value, ""),
                }
            )

    frame = pd.DataFrame(rows)
    if out is not None:
        prepare_out_dir(out, force=True)
        write_csv(frame, out / "topo_report.csv")
    sys.stdout.write(frame.to_csv(index=False, lineterminator="\n"))
    return 0


def cmd_stability(
    manifest: RunManifest, client: int, sample: int, test_row: int, identical: bool
) -> int:
    """Coupled twin runs differing in one training sample; writes stability.csv."""
    cfg = manifest.load()
    replacement = None
    if not identical:
        test = build_setup(cfg).test
        if test is None or not 0 <= test_row < test.n:
            raise ConfigError(6038, "Replacement row out of range", f"test_row={test_row}")
        replacement = (test.features[test_row], int(test.labels[test_row]))

    out = prepare_out_dir(manifest.out, manifest.force, guarded="stability.csv")
    trace = stability_probe(cfg, client, sample, replacement, workers=manifest.workers)
    write_csv(trace.to_frame(), out / "stability.csv")
    return 0


def _int_list(raw: str) -> List[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(6039, "Expected a comma-separated integer list", raw) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgossip",
        description="Decentralized federated learning simulator (Ole-initialised gossip and baselines)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=Path("config.yaml"), help="Experiment YAML")
        p.add_argument("--out", type=Path, default=Path("runs"), help="Output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Dotted override, repeatable; applied after the file and DGOSSIP_SEED")
        p.add_argument("--workers", default="1", help="Client-training threads (N or 'auto')")
        p.add_argument("--force", action="store_true", help="Overwrite existing results")
        p.add_argument("--progress", action="store_true", help="Show a round progress bar")

    experiment_flags(sub.add_parser("run", help="Run one experiment"))

    sweep = sub.add_parser("sweep", help="Run the cartesian product of one or more axes")
    experiment_flags(sweep)
    sweep.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2",
                       help="Swept key and values, repeatable")

    compare = sub.add_parser("compare", help="Rounds-to-target of several algorithms")
    experiment_flags(compare)
    compare.add_argument("--algorithms", default=DEFAULT_COMPARE, help="Comma-separated algorithm kinds")
    compare.add_argument("--reference", default=AlgorithmKind.DFEDAVG.value, help="Speed-up reference kind")

    topo = sub.add_parser("topo-report", help="Spectral quantities of topologies")
    topo.add_argument("--kinds", default=DEFAULT_TOPO_KINDS, help="Comma-separated topology kinds")
    topo.add_argument("--m", default="16", help="Comma-separated client counts")
    topo.add_argument("--k", type=int, default=10, help="Partners per node (random_k)")
    topo.add_argument("--seed", type=int, default=0, help="Seed (random_k)")
    topo.add_argument("--out", type=Path, default=None, help="Also write topo_report.csv here")

    stability = sub.add_parser("stability", help="Coupled-run stability probe")
    experiment_flags(stability)
    stability.add_argument("--client", type=int, default=0, help="Client holding the swapped sample")
    stability.add_argument("--sample", type=int, default=0, help="Row within that client's shard")
    stability.add_argument("--test-row", type=int, default=0, help="Held-out row used as replacement")
    stability.add_argument("--identical", action="store_true", help="Replace the sample by itself")
    return parser


def _manifest(args: argparse.Namespace) -> RunManifest:
    return RunManifest(
        config=args.config,
        out=args.out,
        overrides=args.overrides,
        workers=resolve_workers(args.workers),
        force=args.force,
        progress=args.progress,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "topo-report":
            return cmd_topo_report(
                args.kinds.split(","), _int_list(args.m), args.k, args.seed, args.out
            )
        manifest = _manifest(args)
        if args.command == "run":
            return cmd_run(manifest)
        if args.command == "sweep":
            return cmd_sweep(manifest, args.axis)
        if args.command == "compare":
            return cmd_compare(manifest, args.algorithms.split(","), args.reference)
        return cmd_stability(manifest, args.client, args.sample, args.test_row, args.identical)
    except DGossipException as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except yaml.YAMLError as e:
        print(f"error: {e}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return StorageError.exit_code
