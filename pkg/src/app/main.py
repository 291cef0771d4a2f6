"""Command-line entry point: ``python -m src.app.main <command> [flags]``.

Commands: train, evaluate, infer, compare, gen-synth. Every output lands under
``--out`` next to a ``run.cfg`` manifest that re-parses to the same run.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric/capacity error.
"""
import argparse
import contextlib
import json
import logging
import os
import pathlib
import sys
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from src import __version__
from src.app.errors import ConfigError, DataError, EvaluationError, QpbError
from src.app.logging import configure_logging, event
from src.app.run_config import RunConfig, load_run_config
from src.app.schemas import AutoencoderConfig, ComparisonRow, EvalReport, SeedResult
from src.app.settings import settings
from src.baseline.dense import DenseAutoencoder, train_baseline
from src.baseline.dense import infer_map as dense_infer_map
from src.evaluation.metrics import aggregate, evaluate
from src.evaluation.report import (
    comparison_table,
    print_table,
    summary_table,
    write_aggregate_csv,
    write_comparison_csv,
    write_eval_report,
)
from src.imaging.dataio import DatasetSplit, generate_synthetic, load_busi_layout, load_mvtec_layout, read_gray, write_dataset
from src.imaging.patchflow import ImageTensor, ScoreMap
from src.imaging.pgm import to_uint16, write_pgm
from src.quantum.ansatz import MpsParams, compression_percentage
from src.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint, write_loss_csv
from src.training.logger import get_run_logger
from src.training.train import TrainState, fit, infer_map

logger = logging.getLogger(__name__)

MANIFEST_NAME = "run.cfg"
LOCK_NAME = ".lock"

# flag name -> RunConfig field
_FLAG_FIELDS = {
    "seed": "seed",
    "seeds": "seeds",
    "patch_size": "patch_size",
    "stride": "stride",
    "bottleneck": "bottleneck",
    "model": "model",
    "data_root": "data_root",
    "category": "category",
    "dataset": "dataset",
    "out": "out",
    "shots": "shots",
    "reset_trash_before_decode": "reset_trash_before_decode",
    "epochs": "epochs",
}


# ---------------------------------------------------------------- helpers


@contextlib.contextmanager
def output_lock(out_dir: pathlib.Path) -> Iterator[pathlib.Path]:
    """Exclusive writer lock on an output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise DataError(f"output directory {out_dir} is locked by another run ({lock})") from exc
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


def load_split(cfg: RunConfig) -> DatasetSplit:
    if cfg.dataset == "synthetic" and cfg.data_root is None:
        return generate_synthetic(cfg.synth_spec())
    if cfg.data_root is None:
        raise ConfigError(f"dataset={cfg.dataset} needs --data-root")
    if cfg.dataset == "busi":
        return load_busi_layout(pathlib.Path(cfg.data_root), seed=cfg.data_seed, mask_rule=cfg.mask_rule)
    return load_mvtec_layout(pathlib.Path(cfg.data_root), cfg.category, seed=cfg.data_seed, mask_rule=cfg.mask_rule)


def _checkpoint_fields(cfg: RunConfig, seed: int, epoch: int) -> dict:
    return {
        "model_kind": cfg.model,
        "autoencoder": cfg.autoencoder(),
        "patch_size": cfg.patch_size,
        "stride": cfg.stride,
        "seed": seed,
        "epoch": epoch,
    }


def _param_arrays(cfg: RunConfig, params) -> Dict[str, np.ndarray]:
    return {"theta": params.angles} if cfg.model == "quantum" else params.to_dict()


def train_one(cfg: RunConfig, split: DatasetSplit, seed: int) -> TrainState:
    if cfg.model == "quantum":
        return fit(split.train, split.val, cfg.train_config(seed), cfg.autoencoder(), cfg.patch_size, cfg.stride)
    return train_baseline(split.train, split.val, cfg.train_config(seed), cfg.patch_size, cfg.stride, cfg.bottleneck)


def scoring_autoencoder(checkpoint: Checkpoint, cfg: Optional[RunConfig] = None) -> AutoencoderConfig:
    """Checkpoint geometry with this command's test-phase flags (shots, trash reset) applied."""
    acfg = checkpoint.autoencoder
    if cfg is None:
        return acfg
    return acfg.model_copy(update={"shots": cfg.shots, "reset_trash_before_decode": cfg.reset_trash_before_decode})


def model_maps(checkpoint: Checkpoint, images: Sequence[ImageTensor], cfg: Optional[RunConfig] = None) -> List[ScoreMap]:
    """Anomaly maps for ``images`` from a loaded checkpoint."""
    P, S = checkpoint.patch_size, checkpoint.stride
    arrays = checkpoint.arrays()
    if checkpoint.model_kind == "quantum":
        acfg = scoring_autoencoder(checkpoint, cfg)
        params = MpsParams(arrays["theta"], acfg.n_data_qubits)
        rng = np.random.default_rng(checkpoint.seed) if acfg.shots else None
        if acfg.shots:
            logger.info(f"test scores estimated from {acfg.shots} shots, rng seed {checkpoint.seed}")
        return [infer_map(img, params, acfg, P, S, rng) for img in images]
    model = DenseAutoencoder.from_dict(arrays)
    return [dense_infer_map(img, model, P, S) for img in images]


def save_training(cfg: RunConfig, state: TrainState, seed_dir: pathlib.Path, seed: int) -> pathlib.Path:
    best = Checkpoint.from_arrays(
        _param_arrays(cfg, state.best_params), **_checkpoint_fields(cfg, seed, state.best_epoch)
    )
    best.optimizer = state.optimizer.state_dict()
    final = Checkpoint.from_arrays(_param_arrays(cfg, state.params), **_checkpoint_fields(cfg, seed, cfg.epochs))
    final.optimizer = state.optimizer.state_dict()
    save_checkpoint(final, seed_dir / "checkpoint_final.json")
    write_loss_csv(state.history, seed_dir / "loss.csv")
    return save_checkpoint(best, seed_dir / "checkpoint.json")


def write_manifest(cfg: RunConfig, out_dir: pathlib.Path, split: Optional[DatasetSplit] = None, extra: Optional[dict] = None) -> None:
    cfg.write(out_dir / MANIFEST_NAME)
    acfg = cfg.autoencoder()
    info = {
        "version": __version__,
        "config": cfg.model_dump(),
        "seeds": cfg.run_seeds,
        "n_train": acfg.n_train if cfg.model == "quantum" else None,
        "compression_percentage": str(compression_percentage(acfg)),
        **(extra or {}),
    }
    if split is not None:
        info["dataset"] = split.manifest()
    (out_dir / "manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True, default=str), encoding="utf-8")


def _checkpoint_paths(path: pathlib.Path) -> List[pathlib.Path]:
    if path.is_file():
        return [path]
    found = sorted(path.glob("seed_*/checkpoint.json"))
    if not found:
        raise DataError(f"no checkpoints under {path}")
    return found


def evaluate_checkpoint(cfg: RunConfig, checkpoint: Checkpoint, split: DatasetSplit) -> EvalReport:
    checkpoint.check_geometry(cfg.patch_size, cfg.stride)
    if not split.test:
        raise EvaluationError("test set is empty")
    maps = model_maps(checkpoint, split.test_images, cfg)
    return evaluate(maps, split.test_masks, per_image_auroc=cfg.per_image_auroc, pro_averaging=cfg.pro_averaging)


# ---------------------------------------------------------------- commands


def cmd_train(cfg: RunConfig) -> int:
    out_dir = pathlib.Path(cfg.out)
    with output_lock(out_dir):
        split = load_split(cfg)
        write_manifest(cfg, out_dir, split)
        run_log = get_run_logger("train")
        for seed in cfg.run_seeds:
            state = train_one(cfg, split, seed)
            path = save_training(cfg, state, out_dir / f"seed_{seed}", seed)
            run_log.info(f"seed={seed} best_epoch={state.best_epoch} checkpoint={path}")
            event("trained", {"model": cfg.model, "seed": seed, "best_epoch": state.best_epoch})
    return 0


def cmd_evaluate(cfg: RunConfig, checkpoint_path: pathlib.Path) -> int:
    out_dir = pathlib.Path(cfg.out)
    with output_lock(out_dir):
        split = load_split(cfg)
        reports = []
        for path in _checkpoint_paths(checkpoint_path):
            checkpoint = load_checkpoint(path)
            report = evaluate_checkpoint(cfg, checkpoint, split)
            write_eval_report(report, out_dir / f"seed_{checkpoint.seed}")
            reports.append(report)
        stats = aggregate(reports)
        write_aggregate_csv(stats, len(reports), out_dir / "aggregate.csv")
        write_manifest(cfg, out_dir, split, {"checkpoints": [str(p) for p in _checkpoint_paths(checkpoint_path)]})
        print_table(summary_table(stats, title=f"{cfg.model} P={cfg.patch_size} S={cfg.stride} BD={cfg.bottleneck}"))
    return 0


def cmd_infer(cfg: RunConfig, checkpoint_path: pathlib.Path, image_path: pathlib.Path) -> int:
    out_dir = pathlib.Path(cfg.out)
    with output_lock(out_dir):
        checkpoint = load_checkpoint(_checkpoint_paths(checkpoint_path)[0])
        img = ImageTensor(read_gray(image_path))
        anomaly = model_maps(checkpoint, [img], cfg)[0]
        stem = pathlib.Path(image_path).stem
        write_pgm(out_dir / f"{stem}_anomaly.pgm", to_uint16(anomaly.values))
        np.savetxt(out_dir / f"{stem}_anomaly.csv", anomaly.values, delimiter=",", fmt="%.17g")
        logger.info(f"anomaly map for {image_path} written to {out_dir} (mean {anomaly.mean():.4f})")
    return 0


def _seed_result(kind: str, seed: int, report: EvalReport, n_parameters: int) -> SeedResult:
    return SeedResult(model_kind=kind, seed=seed, auroc=report.auroc, aupro=report.aupro, n_parameters=n_parameters)


def compare_runs(cfg: RunConfig, split: DatasetSplit) -> List[ComparisonRow]:
    """Train and evaluate both models on the same data, geometry and seeds."""
    rows = []
    results: Dict[str, List[SeedResult]] = {"quantum": [], "classical": []}
    for seed in cfg.run_seeds:
        for kind in ("quantum", "classical"):
            kcfg = cfg.model_copy(update={"model": kind})
            state = train_one(kcfg, split, seed)
            arrays = _param_arrays(kcfg, state.best_params)
            checkpoint = Checkpoint.from_arrays(arrays, **_checkpoint_fields(kcfg, seed, state.best_epoch))
            report = evaluate_checkpoint(kcfg, checkpoint, split)
            results[kind].append(_seed_result(kind, seed, report, checkpoint.n_parameters))
        q, c = results["quantum"][-1], results["classical"][-1]
        rows.append(
            ComparisonRow(
                seed=seed,
                quantum_auroc=q.auroc,
                quantum_aupro=q.aupro,
                classical_auroc=c.auroc,
                classical_aupro=c.aupro,
                quantum_parameters=q.n_parameters,
                classical_parameters=c.n_parameters,
            )
        )
    for label, reduce in (("mean", np.mean), ("std", np.std)):
        rows.append(
            ComparisonRow(
                seed=None,
                label=label,
                quantum_auroc=float(reduce([r.quantum_auroc for r in rows if r.seed is not None])),
                quantum_aupro=float(reduce([r.quantum_aupro for r in rows if r.seed is not None])),
                classical_auroc=float(reduce([r.classical_auroc for r in rows if r.seed is not None])),
                classical_aupro=float(reduce([r.classical_aupro for r in rows if r.seed is not None])),
                quantum_parameters=rows[0].quantum_parameters,
                classical_parameters=rows[0].classical_parameters,
            )
        )
    return rows


def cmd_compare(cfg: RunConfig) -> int:
    out_dir = pathlib.Path(cfg.out)
    with output_lock(out_dir):
        split = load_split(cfg)
        rows = compare_runs(cfg, split)
        write_comparison_csv(rows, out_dir / "comparison.csv")
        write_manifest(cfg, out_dir, split)
        print_table(comparison_table(rows))
    return 0


def cmd_gen_synth(cfg: RunConfig) -> int:
    out_dir = pathlib.Path(cfg.out)
    with output_lock(out_dir):
        split = generate_synthetic(cfg.synth_spec())
        write_dataset(split, out_dir, cfg.category, extra={"synth_spec": cfg.synth_spec().model_dump()})
        cfg.write(out_dir / MANIFEST_NAME)
    return 0


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path, help="key=value run configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", type=int, nargs="+", help="run seeds (default: --seed)")
    common.add_argument("--patch-size", type=int, dest="patch_size")
    common.add_argument("--stride", type=int)
    common.add_argument("--bottleneck", type=int)
    common.add_argument("--model", choices=["quantum", "classical"])
    common.add_argument("--dataset", choices=["synthetic", "mvtec", "busi"])
    common.add_argument("--data-root", dest="data_root")
    common.add_argument("--category")
    common.add_argument("--out")
    common.add_argument("--epochs", type=int)
    common.add_argument("--shots", type=int, help="estimate test scores from this many ancilla measurements")
    common.add_argument(
        "--reset-trash-before-decode",
        dest="reset_trash_before_decode",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    common.add_argument("--log-level", default=None)

    parser = argparse.ArgumentParser(prog="qpb-ae", description="Quantum patch-based autoencoder for anomaly segmentation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train and write checkpoints")
    ev = sub.add_parser("evaluate", parents=[common], help="AUROC, AUPRO and Dice/IoU curves")
    ev.add_argument("--checkpoint", type=pathlib.Path, required=True, help="checkpoint file or training output dir")
    inf = sub.add_parser("infer", parents=[common], help="anomaly map for one image")
    inf.add_argument("--checkpoint", type=pathlib.Path, required=True)
    inf.add_argument("--image", type=pathlib.Path, required=True)
    sub.add_parser("compare", parents=[common], help="quantum vs classical over the seed list")
    sub.add_parser("gen-synth", parents=[common], help="write the synthetic dataset to --out")
    return parser


def _manifest_near(path: Optional[pathlib.Path]) -> Optional[pathlib.Path]:
    """run.cfg of the training run a checkpoint belongs to."""
    if path is None:
        return None
    for candidate in (path, path.parent, path.parent.parent):
        if (candidate / MANIFEST_NAME).is_file():
            return candidate / MANIFEST_NAME
    return None


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {field: getattr(args, flag, None) for flag, field in _FLAG_FIELDS.items()}
    config_path = args.config
    if config_path is None and args.command in ("evaluate", "infer"):
        config_path = _manifest_near(args.checkpoint)
        # a training manifest's output dir is not this command's output dir
        if config_path is not None and overrides.get("out") is None:
            overrides["out"] = str(pathlib.Path(args.checkpoint if args.checkpoint.is_dir() else args.checkpoint.parent) / args.command)
    return load_run_config(config_path, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level)
    try:
        cfg = resolve_config(args)
        event("command", {"command": args.command, "model": cfg.model, "out": cfg.out})
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint)
        if args.command == "infer":
            return cmd_infer(cfg, args.checkpoint, args.image)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_gen_synth(cfg)
    except QpbError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return exc.exit_code
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return DataError.exit_code
    except Exception:
        logger.exception("unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
