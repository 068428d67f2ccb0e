"""Experiment configuration and the stage-by-stage pipeline driver.

Every stage reads its inputs from, and writes its outputs to, the experiment
output directory, so stages can be run one at a time (the CLI) or in sequence
(:func:`run_experiment`) with the same result. Each stage leaves a stamp
holding a hash of everything it depended on and is skipped when the stamp is
current.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .data import (
    DEFAULT_CLIP_LIMIT,
    DEFAULT_TILE_GRID,
    DatasetTag,
    FundusSample,
    clahe,
    discover,
    extract_green,
    load_sample,
    make_folds,
    read_raster,
    write_png,
)
from .errors import ConfigurationError, DatasetError, MissingArtifactError
from .evaluate import (
    MetricsReport,
    confusion,
    dataset_metrics,
    estimate_class_weights,
    pr_trajectory_plot,
    write_per_image_csv,
    write_results_table,
    write_summary_json,
)
from .losses import ClassWeights, WeightSampler
from .nets import Checkpoint
from .published import VARIANT_LABELS, VARIANTS
from .srs import SRSConfig, from_export_raster, partition, save_partition
from .stage1 import (
    LikelihoodMap,
    TrainConfig,
    infer_likelihood,
    threshold_likelihood,
    train_stage1,
    write_trace_csv,
)
from .targeted import (
    PatchGeometry,
    check_coverage,
    extract_patches,
    merge,
    predict_ambiguous,
    select_seeds,
    train_stage2,
)

log = logging.getLogger(__name__)

CACHE_ENV = "VESSELPIPE_CACHE"
STAGES = ("preprocess", "train1", "infer", "srs", "train2", "predict", "evaluate")


def parse_triple(text: str | WeightSampler) -> WeightSampler:
    if isinstance(text, WeightSampler):
        return text
    lo, hi, step = (float(v) for v in str(text).replace(" ", "").split(","))
    return WeightSampler(lo, hi, step)


def parse_pair(text: str | ClassWeights | None) -> ClassWeights | None:
    if text is None or isinstance(text, ClassWeights):
        return text
    text = str(text).strip()
    if text in ("", "class", "none"):
        return None
    w0, w1 = (float(v) for v in text.replace(" ", "").split(","))
    return ClassWeights(w0, w1)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetTag
    data_root: Path
    variant: str = "dynamic+targeted"
    out: Path = Path("runs/experiment")
    seed: int = 0
    folds: int = 5
    stage1: TrainConfig = TrainConfig()
    stage2: TrainConfig = TrainConfig.stage2_defaults()
    srs: SRSConfig = SRSConfig()
    fixed_weights: ClassWeights | None = None  # None with a fixed variant -> estimate
    clip_limit: float = DEFAULT_CLIP_LIMIT
    tile_grid: tuple[int, int] = DEFAULT_TILE_GRID
    use_fov: bool = True
    cache: Path | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not Path(self.data_root).is_dir():
            raise ConfigurationError(f"data root {self.data_root} does not exist")
        if self.stage2.beta_sampler is None and self.targeted:
            raise ConfigurationError("targeted variants need a stage-2 beta sampler")

    @property
    def targeted(self) -> bool:
        return self.variant.endswith("+targeted")

    @property
    def dynamic(self) -> bool:
        return self.variant.startswith("dynamic")

    @property
    def patch_geometry(self) -> PatchGeometry:
        g = self.stage2.geometry()
        return PatchGeometry.for_network(g.input_size, g.output_size)

    def cache_dir(self) -> Path:
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return Path(self.cache) if self.cache is not None else Path(self.out) / "cache"

    # flat key/value form -------------------------------------------------

    def to_flat(self) -> dict[str, Any]:
        s1, s2 = self.stage1, self.stage2
        sampler = s1.weight_sampler
        return {
            "dataset": self.dataset.value,
            "data_root": str(self.data_root),
            "variant": self.variant,
            "out": str(self.out),
            "seed": self.seed,
            "folds": self.folds,
            "support": self.srs.support,
            "resistance": self.srs.resistance,
            "epochs1": s1.epochs,
            "epochs2": s2.epochs,
            "lr": s1.learning_rate,
            "lr2": s2.learning_rate,
            "batch_size": s1.batch_size,
            "batch_size2": s2.batch_size,
            "depth1": s1.depth,
            "input1": s1.input_size,
            "base1": s1.base_channels,
            "input2": s2.input_size,
            "base2": s2.base_channels,
            "sampler1": None if sampler is None else f"{sampler.low},{sampler.high},{sampler.step}",
            "beta": f"{s2.beta_sampler.low},{s2.beta_sampler.high},{s2.beta_sampler.step}" if s2.beta_sampler else None,
            "fixed_weights": None if self.fixed_weights is None else f"{self.fixed_weights.w_background},{self.fixed_weights.w_vessel}",
            "augment": s1.augment,
            "clip_limit": self.clip_limit,
            "tile_grid": f"{self.tile_grid[0]},{self.tile_grid[1]}",
            "use_fov": self.use_fov,
            "cache": None if self.cache is None else str(self.cache),
        }

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "ExperimentConfig":
        known = {
            "dataset", "data_root", "variant", "out", "seed", "folds", "support", "resistance",
            "epochs1", "epochs2", "lr", "lr2", "batch_size", "batch_size2", "depth1", "input1",
            "base1", "input2", "base2", "sampler1", "beta", "fixed_weights", "augment",
            "clip_limit", "tile_grid", "use_fov", "cache",
        }
        unknown = set(flat) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("dataset", "data_root"):
            if flat.get(key) is None:
                raise ConfigurationError(f"config is missing {key!r}")
        get = lambda k, d: d if flat.get(k) is None else flat[k]
        try:
            seed = int(get("seed", 0))
            augment = bool(get("augment", True))
            variant = str(get("variant", "dynamic+targeted"))
            sampler = parse_triple(get("sampler1", "1,100,1"))
            stage1 = TrainConfig(
                learning_rate=float(get("lr", 1e-3)),
                batch_size=int(get("batch_size", 4)),
                epochs=int(get("epochs1", 250)),
                weight_sampler=sampler if variant.startswith("dynamic") else None,
                fixed_weights=None,
                seed=seed,
                depth=int(get("depth1", 4)),
                input_size=int(get("input1", 572)),
                base_channels=int(get("base1", 64)),
                augment=augment,
            )
            stage2 = TrainConfig.stage2_defaults(
                learning_rate=float(get("lr2", get("lr", 1e-3))),
                batch_size=int(get("batch_size2", get("batch_size", 4))),
                epochs=int(get("epochs2", 60)),
                beta_sampler=parse_triple(get("beta", "1,2,0.1")),
                seed=seed,
                input_size=int(get("input2", 140)),
                base_channels=int(get("base2", 64)),
                augment=augment,
            )
            grid = str(get("tile_grid", "8,8")).split(",")
            return cls(
                dataset=DatasetTag(str(flat["dataset"])),
                data_root=Path(str(flat["data_root"])),
                variant=variant,
                out=Path(str(get("out", "runs/experiment"))),
                seed=seed,
                folds=int(get("folds", 5)),
                stage1=stage1,
                stage2=stage2,
                srs=SRSConfig(int(get("support", 20)), int(get("resistance", 235))),
                fixed_weights=parse_pair(flat.get("fixed_weights")),
                clip_limit=float(get("clip_limit", DEFAULT_CLIP_LIMIT)),
                tile_grid=(int(grid[0]), int(grid[1])),
                use_fov=bool(get("use_fov", True)),
                cache=None if flat.get("cache") is None else Path(str(flat["cache"])),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid config value: {exc}") from exc

    def replace(self, **changes) -> "ExperimentConfig":
        flat = self.to_flat()
        flat.update(changes)
        return ExperimentConfig.from_flat(flat)


def load_config_file(path: str | Path) -> dict[str, Any]:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ConfigurationError(f"{path} must be a flat key: value file")
    return data


# --- bookkeeping ---------------------------------------------------------------


def _digest(payload: Any) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _stamp_path(out: Path, stage: str, fold: int | None) -> Path:
    name = stage if fold is None else f"fold{fold}/{stage}"
    return out / "stamps" / f"{name}.json"


def _read_stamp(out: Path, stage: str, fold: int | None = None) -> str | None:
    path = _stamp_path(out, stage, fold)
    if not path.is_file():
        return None
    return json.loads(path.read_text())["key"]


def _write_stamp(out: Path, stage: str, fold: int | None, key: str, **extra) -> None:
    path = _stamp_path(out, stage, fold)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"key": key, **extra}, sort_keys=True))


def _require(out: Path, stage: str, fold: int | None, needed_by: str) -> str:
    key = _read_stamp(out, stage, fold)
    if key is None:
        where = "" if fold is None else f" for fold {fold}"
        raise MissingArtifactError(f"'{needed_by}' needs the output of '{stage}'{where}; run `vesselpipe {stage}` first")
    return key


def fold_dir(cfg: ExperimentConfig, fold: int) -> Path:
    return Path(cfg.out) / f"fold{fold}"


@dataclasses.dataclass
class StageOutcome:
    stage: str
    ran: int = 0
    skipped: int = 0
    failures: list[str] = dataclasses.field(default_factory=list)
    warnings: list[str] = dataclasses.field(default_factory=list)


def echo_config(cfg: ExperimentConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_flat(), sort_keys=True))


# --- stage: preprocess ---------------------------------------------------------


def _manifest_path(cfg: ExperimentConfig) -> Path:
    return cfg.cache_dir() / cfg.dataset.value / "manifest.json"


def cmd_preprocess(cfg: ExperimentConfig) -> StageOutcome:
    """Green channel + CLAHE for every image, cached by content hash."""
    outcome = StageOutcome("preprocess")
    cache = cfg.cache_dir() / cfg.dataset.value
    cache.mkdir(parents=True, exist_ok=True)
    manifest_file = _manifest_path(cfg)
    manifest = json.loads(manifest_file.read_text()) if manifest_file.is_file() else {}
    params = {"clip_limit": cfg.clip_limit, "tile_grid": list(cfg.tile_grid)}
    current = {}
    for entry in discover(cfg.data_root, cfg.dataset):
        target = cache / f"{entry.stem}.png"
        try:
            key = _digest({"src": _file_digest(entry.image), **params})
            if manifest.get(entry.stem) == key and target.is_file():
                outcome.skipped += 1
                current[entry.stem] = key
                continue
            sample = load_sample(entry, cfg.dataset)
            if sample is None:
                outcome.failures.append(f"{entry.image}: label/mask size mismatch")
                continue
            green = clahe(extract_green(sample).green, cfg.clip_limit, cfg.tile_grid)
            write_png(target, green)
            current[entry.stem] = key
            outcome.ran += 1
        except DatasetError as exc:
            outcome.failures.append(str(exc))
    manifest_file.write_text(json.dumps(current, indent=1, sort_keys=True))
    _write_stamp(Path(cfg.out), "preprocess", None, _digest(current))
    return outcome


def load_samples(cfg: ExperimentConfig, ids: list[str] | None = None) -> dict[str, FundusSample]:
    """Dataset samples with their cached preprocessed green raster attached."""
    _require(Path(cfg.out), "preprocess", None, "load")
    manifest = json.loads(_manifest_path(cfg).read_text())
    cache = cfg.cache_dir() / cfg.dataset.value
    wanted = None if ids is None else set(ids)
    samples = {}
    for entry in discover(cfg.data_root, cfg.dataset):
        if entry.stem not in manifest or (wanted is not None and entry.stem not in wanted):
            continue
        sample = load_sample(entry, cfg.dataset)
        if sample is None:
            continue
        green = read_raster(cache / f"{entry.stem}.png", "L")
        samples[entry.stem] = dataclasses.replace(sample, green=green)
    return samples


def plan_folds(cfg: ExperimentConfig) -> list[tuple[list[str], list[str], list[str]]]:
    out = Path(cfg.out)
    path = out / "folds.json"
    manifest = json.loads(_manifest_path(cfg).read_text())
    ids = sorted(manifest)
    key = _digest({"ids": ids, "seed": cfg.seed, "k": cfg.folds, "tag": cfg.dataset.value})
    if path.is_file():
        stored = json.loads(path.read_text())
        if stored["key"] == key:
            return [tuple(f) for f in stored["folds"]]
    plan = make_folds(ids, cfg.dataset, cfg.folds, np.random.default_rng([cfg.seed, 7]))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"key": key, "folds": plan.folds}, indent=1))
    return plan.folds


# --- stage: train1 -------------------------------------------------------------


def stage1_config(cfg: ExperimentConfig, train: list[FundusSample]) -> TrainConfig:
    if cfg.dynamic:
        return dataclasses.replace(cfg.stage1, fixed_weights=None)
    weights = cfg.fixed_weights or estimate_class_weights(train, use_fov=cfg.use_fov)
    return dataclasses.replace(cfg.stage1, weight_sampler=None, fixed_weights=weights)


def cmd_train1(cfg: ExperimentConfig) -> StageOutcome:
    outcome = StageOutcome("train1")
    out = Path(cfg.out)
    pre = _require(out, "preprocess", None, "train1")
    for k, (train_ids, val_ids, test_ids) in enumerate(plan_folds(cfg)):
        fd = fold_dir(cfg, k)
        key = _digest({"pre": pre, "train": train_ids, "val": val_ids, "variant": cfg.variant,
                       "stage1": dataclasses.asdict(cfg.stage1), "fixed": str(cfg.fixed_weights),
                       "use_fov": cfg.use_fov})
        if _read_stamp(out, "train1", k) == key and (fd / "stage1_best.ckpt").is_file():
            outcome.skipped += 1
            continue
        samples = load_samples(cfg, train_ids + val_ids)
        train = [samples[i] for i in train_ids]
        val = [samples[i] for i in val_ids] or train
        tcfg = stage1_config(cfg, train)
        result = train_stage1(train, val, tcfg)
        result.best.meta.update(best_epoch=result.best_epoch)
        result.best.save(fd / "stage1_best.ckpt")
        result.final.save(fd / "stage1_final.ckpt")
        write_trace_csv(result.trace, fd / "trace.csv")
        pr_trajectory_plot(result.trace, fd / "pr_trajectory.png")
        weights = tcfg.fixed_weights
        _write_stamp(out, "train1", k, key, best_epoch=result.best_epoch,
                     fixed_weights=None if weights is None else [weights.w_background, weights.w_vessel],
                     checkpoint=_file_digest(fd / "stage1_best.ckpt"))
        outcome.ran += 1
    return outcome


# --- stage: infer --------------------------------------------------------------


def _load_likelihood(cfg: ExperimentConfig, fold: int, sample_id: str) -> LikelihoodMap:
    path = fold_dir(cfg, fold) / "likelihood" / f"{sample_id}.png"
    if not path.is_file():
        raise MissingArtifactError(f"likelihood map {path} missing; run `vesselpipe infer` first")
    return LikelihoodMap(values=read_raster(path, "L"), source_id=sample_id)


def cmd_infer(cfg: ExperimentConfig) -> StageOutcome:
    outcome = StageOutcome("infer")
    out = Path(cfg.out)
    for k, (train_ids, val_ids, test_ids) in enumerate(plan_folds(cfg)):
        upstream = _require(out, "train1", k, "infer")
        key = _digest({"train1": upstream})
        if _read_stamp(out, "infer", k) == key:
            outcome.skipped += 1
            continue
        ckpt = Checkpoint.load(fold_dir(cfg, k) / "stage1_best.ckpt")
        net = ckpt.build()
        ids = train_ids + val_ids + test_ids
        for sid, sample in load_samples(cfg, ids).items():
            lik = infer_likelihood(net, sample)
            write_png(fold_dir(cfg, k) / "likelihood" / f"{sid}.png", lik.values)
            if sid in test_ids:
                write_png(Path(cfg.out) / "likelihood" / f"{sid}.png", lik.values)
        _write_stamp(out, "infer", k, key)
        outcome.ran += 1
    return outcome


# --- stage: srs ----------------------------------------------------------------


def cmd_srs(cfg: ExperimentConfig) -> StageOutcome:
    outcome = StageOutcome("srs")
    out = Path(cfg.out)
    for k, (train_ids, val_ids, test_ids) in enumerate(plan_folds(cfg)):
        upstream = _require(out, "infer", k, "srs")
        key = _digest({"infer": upstream, "srs": dataclasses.asdict(cfg.srs)})
        if _read_stamp(out, "srs", k) == key:
            outcome.skipped += 1
            continue
        for sid in train_ids + val_ids + test_ids:
            lik = _load_likelihood(cfg, k, sid)
            save_partition(fold_dir(cfg, k) / "srs" / f"{sid}.png", partition(lik.values, cfg.srs))
        _write_stamp(out, "srs", k, key)
        outcome.ran += 1
    return outcome


def _load_partition(cfg: ExperimentConfig, fold: int, sample_id: str):
    path = fold_dir(cfg, fold) / "srs" / f"{sample_id}.png"
    if not path.is_file():
        raise MissingArtifactError(f"partition {path} missing; run `vesselpipe srs` first")
    return from_export_raster(read_raster(path, "L"), cfg.srs)


def _write_seeds(path: Path, seeds) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col"])
        w.writerows(seeds)


# --- stage: train2 -------------------------------------------------------------


def cmd_train2(cfg: ExperimentConfig) -> StageOutcome:
    outcome = StageOutcome("train2")
    out = Path(cfg.out)
    for k, (train_ids, val_ids, test_ids) in enumerate(plan_folds(cfg)):
        upstream = _require(out, "srs", k, "train2")
        key = _digest({"srs": upstream, "variant": cfg.variant, "stage2": dataclasses.asdict(cfg.stage2)})
        if _read_stamp(out, "train2", k) == key:
            outcome.skipped += 1
            continue
        fd = fold_dir(cfg, k)
        if not cfg.targeted:
            _write_stamp(out, "train2", k, key, trained=False, reason="variant without targeted prediction")
            outcome.skipped += 1
            continue
        geom = cfg.patch_geometry
        samples = load_samples(cfg, train_ids)
        patches = []
        for sid in train_ids:
            lik = _load_likelihood(cfg, k, sid)
            part = _load_partition(cfg, k, sid)
            seeds, _ = select_seeds(lik.values, part, geom)
            patches += extract_patches(lik.values, part, seeds, gt=samples[sid].gt)
        if not patches:
            msg = f"fold {k}: no ambiguous pixels in the training images; stage 2 skipped"
            log.warning(msg)
            outcome.warnings.append(msg)
            _write_stamp(out, "train2", k, key, trained=False, reason="no training patches")
            continue
        result = train_stage2(patches, cfg.stage2)
        result.checkpoint.save(fd / "stage2.ckpt")
        with (fd / "beta_log.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "betas"])
            for e, (loss, betas) in enumerate(zip(result.epoch_losses, result.beta_log), 1):
                w.writerow([e, f"{loss:.6f}", " ".join(f"{b:g}" for b in betas)])
        _write_stamp(out, "train2", k, key, trained=True, n_patches=len(patches))
        outcome.ran += 1
    return outcome


# --- stage: predict ------------------------------------------------------------


def cmd_predict(cfg: ExperimentConfig) -> StageOutcome:
    outcome = StageOutcome("predict")
    out = Path(cfg.out)
    for k, (train_ids, val_ids, test_ids) in enumerate(plan_folds(cfg)):
        upstream = _require(out, "train2", k, "predict") if cfg.targeted else _require(out, "infer", k, "predict")
        key = _digest({"up": upstream, "srs": _read_stamp(out, "srs", k) if cfg.targeted else None})
        if _read_stamp(out, "predict", k) == key:
            outcome.skipped += 1
            continue
        fd = fold_dir(cfg, k)
        ckpt = None
        if cfg.targeted and (fd / "stage2.ckpt").is_file():
            ckpt = Checkpoint.load(fd / "stage2.ckpt")
        for sid in test_ids:
            lik = _load_likelihood(cfg, k, sid)
            if not cfg.targeted:
                seg = threshold_likelihood(lik.values)
            else:
                part = _load_partition(cfg, k, sid)
                if not part.ambiguous.any() or ckpt is None:
                    msg = f"{sid}: stage 2 skipped, easy labels copied"
                    log.warning(msg)
                    outcome.warnings.append(msg)
                    seg = merge(part, None)
                else:
                    seeds, _ = select_seeds(lik.values, part, cfg.patch_geometry)
                    uncovered = check_coverage(seeds, part)
                    if uncovered:
                        raise RuntimeError(f"{sid}: {uncovered} ambiguous pixels not covered by any patch")
                    _write_seeds(fd / "seeds" / f"{sid}.csv", seeds.seeds)
                    patches = extract_patches(lik.values, part, seeds)
                    probs = predict_ambiguous(ckpt, patches, lik.values.shape)
                    seg = merge(part, probs)
            write_png(out / "seg" / f"{sid}.png", (seg * 255).astype(np.uint8))
        _write_stamp(out, "predict", k, key)
        outcome.ran += 1
    return outcome


# --- stage: evaluate -----------------------------------------------------------


@dataclasses.dataclass
class ReportBundle:
    report: MetricsReport
    fold_reports: list[MetricsReport]
    out: Path

    def summary(self) -> dict:
        return {
            "aggregate": self.report.summary(),
            "folds": [r.summary() for r in self.fold_reports],
        }


def cmd_evaluate(cfg: ExperimentConfig) -> ReportBundle:
    out = Path(cfg.out)
    folds = plan_folds(cfg)
    for k in range(len(folds)):
        _require(out, "predict", k, "evaluate")
    all_ids = [i for f in folds for i in f[2]]
    samples = load_samples(cfg, all_ids)
    rows, fold_reports = [], []
    for train_ids, val_ids, test_ids in folds:
        fold_rows = []
        for sid in test_ids:
            seg = read_raster(out / "seg" / f"{sid}.png", "L") > 127
            s = samples[sid]
            if s.gt is None:
                raise DatasetError(f"test image {sid} has no ground truth")
            fold_rows.append((sid, confusion(seg, s.gt, s.fov() if cfg.use_fov else None)))
        fold_reports.append(dataset_metrics(fold_rows))
        rows += fold_rows
    report = dataset_metrics(rows)
    metrics = out / "metrics"
    write_per_image_csv(report, metrics / "per_image.csv")
    write_results_table([(VARIANT_LABELS[cfg.variant], report)], metrics / "results.csv")
    bundle = ReportBundle(report=report, fold_reports=fold_reports, out=out)
    write_summary_json({"variant": cfg.variant, "dataset": cfg.dataset.value, **bundle.summary()}, metrics / "summary.json")
    return bundle


STAGE_COMMANDS = {
    "preprocess": cmd_preprocess,
    "train1": cmd_train1,
    "infer": cmd_infer,
    "srs": cmd_srs,
    "train2": cmd_train2,
    "predict": cmd_predict,
}


def run_experiment(cfg: ExperimentConfig) -> ReportBundle:
    """Run every stage in order for one dataset and pipeline variant."""
    echo_config(cfg)
    for name in ("preprocess", "train1", "infer", "srs", "train2", "predict"):
        outcome = STAGE_COMMANDS[name](cfg)
        if outcome.failures:
            raise DatasetError(f"{name} failed: {outcome.failures}")
    return cmd_evaluate(cfg)
