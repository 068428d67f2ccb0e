"""Likelihood-map stage: U-net training with stochastic class weights and tiled inference."""
from __future__ import annotations

import csv
import dataclasses
import logging
from pathlib import Path

import numpy as np
import torch

from .data import FundusSample, random_flip
from .errors import ConfigurationError
from .evaluate import confusion, dataset_metrics
from .losses import ClassWeights, WeightSampler, sample_class_weights, weighted_nll
from .nets import Checkpoint, Rect, UNet, build_unet, inside_mask, mirror_extract, receptive_geometry, tile_plan

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings shared by both stages.

    Exactly one of ``weight_sampler`` / ``fixed_weights`` drives stage-1 cross
    entropy; ``beta_sampler`` drives the stage-2 dice loss.
    """

    learning_rate: float = 1e-3
    batch_size: int = 4
    epochs: int = 250
    weight_sampler: WeightSampler | None = WeightSampler(1, 100, 1)
    fixed_weights: ClassWeights | None = None
    beta_sampler: WeightSampler | None = None
    seed: int = 0
    optimizer: str = "adam"
    depth: int = 4
    input_size: int = 572
    base_channels: int = 64
    batch_norm: bool = False
    augment: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be >= 1")
        if self.optimizer != "adam":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")

    @classmethod
    def stage2_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(
            epochs=60,
            weight_sampler=None,
            beta_sampler=WeightSampler(1, 2, 0.1),
            depth=2,
            input_size=140,
        )
        base.update(overrides)
        return cls(**base)

    def geometry(self):
        return receptive_geometry(self.depth, self.input_size, self.base_channels)


@dataclasses.dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_precision: float
    train_recall: float
    val_precision: float
    val_recall: float
    val_f1: float
    drawn_weights: list[tuple[float, float]]


@dataclasses.dataclass
class TrainTrace:
    records: list[EpochRecord] = dataclasses.field(default_factory=list)

    def __len__(self):
        return len(self.records)


@dataclasses.dataclass
class LikelihoodMap:
    values: np.ndarray  # uint8, probability * 255
    source_id: str


@dataclasses.dataclass
class Stage1Result:
    best: Checkpoint
    final: Checkpoint
    trace: TrainTrace
    best_epoch: int


def seeded_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream per (seed, epoch, purpose, batch...) key."""
    return np.random.default_rng([int(seed), *map(int, keys)])


def make_optimizer(cfg: TrainConfig, net: torch.nn.Module) -> torch.optim.Optimizer:
    return torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)


def _tiles_for(sample: FundusSample, geom):
    """Input crops, labels and valid masks for every tile of one preprocessed sample."""
    image = sample.green.astype(np.float32) / 255.0
    fov = sample.fov()
    plan = tile_plan(sample.shape, geom)
    out = geom.output_size
    xs, ys, vs = [], [], []
    for tile in plan.tiles:
        ow = tile.output_window
        full = Rect(ow.top, ow.left, out, out)
        xs.append(mirror_extract(image, tile.input_window))
        ys.append(mirror_extract(sample.gt, full))
        vs.append(mirror_extract(fov, full).astype(bool) & inside_mask(full, sample.shape))
    return xs, ys, vs


def quantize(prob: np.ndarray) -> np.ndarray:
    """probability -> 0..255 with halves rounded up."""
    return np.clip(np.floor(np.asarray(prob, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


@torch.no_grad()
def predict_probability(net: UNet, image: np.ndarray, batch_size: int = 4) -> np.ndarray:
    """Stitched vessel probability for a 2-D image scaled to [0, 1]."""
    geom = net.geometry
    plan = tile_plan(image.shape, geom)
    prob = np.zeros(image.shape, dtype=np.float64)
    tiles = list(plan.tiles)
    for start in range(0, len(tiles), batch_size):
        chunk = tiles[start : start + batch_size]
        x = np.stack([mirror_extract(image, t.input_window) for t in chunk])[:, None]
        p = net.probabilities(torch.from_numpy(x.astype(np.float32)))[:, 1].double().numpy()
        for t, tile_prob in zip(chunk, p):
            ow = t.output_window
            prob[ow.top : ow.bottom, ow.left : ow.right] = tile_prob[: ow.height, : ow.width]
    return prob


def _require_green(sample: FundusSample) -> np.ndarray:
    if sample.green is None:
        raise ValueError(f"sample {sample.id!r} has not been preprocessed (green raster missing)")
    return sample.green


def infer_likelihood(checkpoint: Checkpoint | UNet, sample: FundusSample, batch_size: int = 4) -> LikelihoodMap:
    net = checkpoint.build() if isinstance(checkpoint, Checkpoint) else checkpoint
    green = _require_green(sample)
    if green.ndim != 2:
        raise ValueError(f"expected a single-channel raster, got shape {green.shape}")
    if net.in_channels != 1:
        raise ValueError(f"stage-1 network must take one channel, checkpoint has {net.in_channels}")
    was_training = net.training
    net.eval()
    prob = predict_probability(net, green.astype(np.float32) / 255.0, batch_size)
    net.train(was_training)
    return LikelihoodMap(values=quantize(prob), source_id=sample.id)


def threshold_likelihood(values: np.ndarray) -> np.ndarray:
    """Plain stage-1 segmentation: vessel wherever the vessel probability wins."""
    return (np.asarray(values) >= 128).astype(np.uint8)


def _validation_scores(net: UNet, samples: list[FundusSample]) -> tuple[float, float, float]:
    rows = []
    for s in samples:
        lik = infer_likelihood(net, s)
        rows.append((s.id, confusion(threshold_likelihood(lik.values), s.gt, s.fov())))
    report = dataset_metrics(rows)
    return report.mean_precision, report.mean_recall, report.f1


def train_stage1(
    samples: list[FundusSample], val: list[FundusSample], cfg: TrainConfig
) -> Stage1Result:
    """Adam on tiled inputs; one class-weight draw per mini-batch.

    Returns the checkpoint with the best validation F1 alongside the last one.
    """
    for s in list(samples) + list(val):
        if s.gt is None:
            raise ValueError(f"sample {s.id!r} has no ground truth")
        _require_green(s)
    if not samples:
        raise ValueError("stage 1 has no training samples")
    if not val:
        raise ValueError("stage 1 needs at least one validation sample")
    if (cfg.weight_sampler is None) == (cfg.fixed_weights is None):
        raise ConfigurationError("set exactly one of weight_sampler and fixed_weights")

    geom = cfg.geometry()
    net = build_unet(geom, in_channels=1, seed=cfg.seed, batch_norm=cfg.batch_norm)
    opt = make_optimizer(cfg, net)
    trace = TrainTrace()
    best_state, best_f1, best_epoch = None, -1.0, 0

    for epoch in range(cfg.epochs):
        net.train()
        flip_rng = seeded_rng(cfg.seed, epoch, 0)
        xs, ys, vs = [], [], []
        for s in samples:
            if cfg.augment:
                s = random_flip(s, flip_rng)
            x, y, v = _tiles_for(s, geom)
            xs += x
            ys += y
            vs += v
        order = seeded_rng(cfg.seed, epoch, 1).permutation(len(xs))
        tp = fp = fn = 0
        total, n_batches, drawn_log = 0.0, 0, []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            valid = torch.from_numpy(np.stack([vs[i] for i in idx]))
            if not valid.any():
                continue
            x = torch.from_numpy(np.stack([xs[i] for i in idx])[:, None].astype(np.float32))
            y = torch.from_numpy(np.stack([ys[i] for i in idx]).astype(np.int64))
            if cfg.weight_sampler is not None:
                weights = sample_class_weights(cfg.weight_sampler, seeded_rng(cfg.seed, epoch, 2, b))
            else:
                weights = cfg.fixed_weights
            log_q = torch.log_softmax(net(x), dim=1)
            loss = weighted_nll(log_q, y, weights, valid)
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch + 1}, batch {b}, weights {weights}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            n_batches += 1
            drawn_log.append((weights.w_background, weights.w_vessel))
            with torch.no_grad():
                hard = log_q[:, 1] > log_q[:, 0]
                truth = y.bool()
                tp += int((hard & truth & valid).sum())
                fp += int((hard & ~truth & valid).sum())
                fn += int((~hard & truth & valid).sum())

        train_p = tp / (tp + fp) if tp + fp else 0.0
        train_r = tp / (tp + fn) if tp + fn else 0.0
        val_p, val_r, val_f1 = _validation_scores(net, val)
        trace.records.append(
            EpochRecord(
                epoch=epoch + 1,
                train_loss=total / max(n_batches, 1),
                train_precision=train_p,
                train_recall=train_r,
                val_precision=val_p,
                val_recall=val_r,
                val_f1=val_f1,
                drawn_weights=drawn_log,
            )
        )
        log.info(
            "stage1 epoch %d loss %.4f train P/R %.3f/%.3f val P/R %.3f/%.3f",
            epoch + 1, trace.records[-1].train_loss, train_p, train_r, val_p, val_r,
        )
        if val_f1 > best_f1:
            best_f1, best_epoch = val_f1, epoch + 1
            best_state = Checkpoint.from_net(net, stage=1, epoch=epoch + 1, seed=cfg.seed)

    net.eval()
    final = Checkpoint.from_net(net, stage=1, epoch=cfg.epochs, seed=cfg.seed)
    return Stage1Result(best=best_state, final=final, trace=trace, best_epoch=best_epoch)


def write_trace_csv(trace: TrainTrace, path: str | Path) -> None:
    """One row per epoch; the weight columns hold that epoch's mean draw."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["epoch", "train_loss", "train_P", "train_R", "val_P", "val_R", "w_bg", "w_vessel"])
        for r in trace.records:
            w = np.array(r.drawn_weights, dtype=float).reshape(-1, 2)
            w_bg, w_v = (w.mean(0) if len(w) else (float("nan"), float("nan")))
            out.writerow(
                [r.epoch, f"{r.train_loss:.6f}", f"{r.train_precision:.6f}", f"{r.train_recall:.6f}",
                 f"{r.val_precision:.6f}", f"{r.val_recall:.6f}", f"{w_bg:.4f}", f"{w_v:.4f}"]
            )


def read_trace_csv(path: str | Path) -> TrainTrace:
    trace = TrainTrace()
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            p, r = float(row["val_P"]), float(row["val_R"])
            trace.records.append(
                EpochRecord(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    train_precision=float(row["train_P"]),
                    train_recall=float(row["train_R"]),
                    val_precision=p,
                    val_recall=r,
                    val_f1=2 * p * r / (p + r) if p + r else 0.0,
                    drawn_weights=[(float(row["w_bg"]), float(row["w_vessel"]))],
                )
            )
    return trace
