"""Targeted prediction of ambiguous pixels with a patch-level mini U-net.

Steps: threshold the likelihood map at the support level, skeletonize the
largest connected component, seed patches where the skeleton crosses a
regular lattice, then classify the ambiguous pixels of each patch and merge
them with the easy labels.
"""
from __future__ import annotations

import dataclasses
import logging

import numpy as np
import torch
from scipy import ndimage

from .errors import ConfigurationError
from .losses import f_beta_from_pr, sample_weight, soft_precision_recall
from .nets import Checkpoint, Rect, build_mini_unet, inside_mask, mirror_extract, receptive_geometry
from .srs import Band, SRSPartition
from .stage1 import TrainConfig, make_optimizer, seeded_rng

log = logging.getLogger(__name__)

EIGHT = np.ones((3, 3), dtype=bool)


class NoVascularStructure(ValueError):
    """The high-recall mask is empty, so there is nothing to skeletonize."""


@dataclasses.dataclass(frozen=True)
class PatchGeometry:
    p: int = 100
    context: int = 140
    lattice_spacing: int = 50

    def __post_init__(self):
        if self.context <= self.p:
            raise ConfigurationError("context window must be larger than the prediction window")
        if (self.context - self.p) % 2:
            raise ConfigurationError("context and prediction windows must share a centre")
        if self.lattice_spacing != self.p // 2 or self.p % 2:
            raise ConfigurationError("lattice spacing must equal p/2 for an even p")

    @classmethod
    def for_network(cls, input_size: int, output_size: int) -> "PatchGeometry":
        return cls(p=output_size, context=input_size, lattice_spacing=output_size // 2)

    def window(self, seed: tuple[int, int]) -> Rect:
        return Rect(seed[0] - self.p // 2, seed[1] - self.p // 2, self.p, self.p)

    def context_window(self, seed: tuple[int, int]) -> Rect:
        return Rect(seed[0] - self.context // 2, seed[1] - self.context // 2, self.context, self.context)


@dataclasses.dataclass
class SeedSet:
    seeds: list[tuple[int, int]]
    geometry: PatchGeometry
    n_lattice: int = 0  # how many seeds came from skeleton/lattice crossings


@dataclasses.dataclass
class TwoChannelPatch:
    """Network input around one seed.

    ``values`` is channels-first (2, context, context): the likelihood map
    scaled to [0, 1] and the same map restricted to ambiguous pixels.
    """

    values: np.ndarray
    seed: tuple[int, int]
    ambig_mask: np.ndarray
    valid: np.ndarray
    gt_window: np.ndarray | None = None


# --- raw estimate and morphology -----------------------------------------------


def raw_estimate(values: np.ndarray, support: int) -> np.ndarray:
    values = np.asarray(getattr(values, "values", values))
    return (values >= support).astype(np.uint8)


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep the largest 8-connected component; ties go to the one met first in raster order."""
    labels, n = ndimage.label(np.asarray(mask) > 0, structure=EIGHT)
    if n == 0:
        raise NoVascularStructure("mask has no foreground pixels")
    sizes = np.bincount(labels.ravel())[1:]
    # labels are assigned in raster order, so argmax already breaks ties correctly
    keep = int(np.argmax(sizes)) + 1
    return (labels == keep).astype(np.uint8)


def _neighbours(img: np.ndarray) -> list[np.ndarray]:
    """P2..P9 of each pixel (N, NE, E, SE, S, SW, W, NW) as arrays."""
    pad = np.pad(img, 1)
    h, w = img.shape
    at = lambda dr, dc: pad[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
    return [at(-1, 0), at(-1, 1), at(0, 1), at(1, 1), at(1, 0), at(1, -1), at(0, -1), at(-1, -1)]


def _zhang_suen_pass(img: np.ndarray, first: bool) -> np.ndarray:
    p2, p3, p4, p5, p6, p7, p8, p9 = nb = _neighbours(img)
    ring = nb + [p2]
    count = sum(nb)
    transitions = sum(((a == 0) & (b == 1)).astype(np.uint8) for a, b in zip(ring, ring[1:]))
    if first:
        c3, c4 = p2 * p4 * p6, p4 * p6 * p8
    else:
        c3, c4 = p2 * p4 * p8, p2 * p6 * p8
    return (img == 1) & (count >= 2) & (count <= 6) & (transitions == 1) & (c3 == 0) & (c4 == 0)


def connectivity_number(img: np.ndarray, r: int, c: int) -> tuple[int, int]:
    """(8-connectivity crossing number, foreground neighbour count) at one pixel."""
    h, w = img.shape

    def px(dr, dc):
        rr, cc = r + dr, c + dc
        return int(img[rr, cc]) if 0 <= rr < h and 0 <= cc < w else 0

    # E, NE, N, NW, W, SW, S, SE
    x = [px(0, 1), px(-1, 1), px(-1, 0), px(-1, -1), px(0, -1), px(1, -1), px(1, 0), px(1, 1)]
    xb = [1 - v for v in x] + [1 - x[0]]
    c8 = sum(xb[k] - xb[k] * xb[k + 1] * xb[k + 2] for k in (0, 2, 4, 6))
    return c8, sum(x)


def is_removable(img: np.ndarray, r: int, c: int) -> bool:
    """A non-end pixel whose deletion leaves the local topology intact."""
    c8, n = connectivity_number(img, r, c)
    return c8 == 1 and n >= 2


def _remove_staircase(img: np.ndarray) -> None:
    """Sequentially delete redundant corner pixels so the skeleton is one pixel wide."""
    while True:
        changed = False
        for r, c in zip(*np.nonzero(img)):
            if is_removable(img, r, c):
                img[r, c] = 0
                changed = True
        if not changed:
            return


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning followed by a corner clean-up pass, 8-connected output."""
    img = (np.asarray(mask) > 0).astype(np.uint8)
    if not img.any():
        return img
    while True:
        changed = False
        for first in (True, False):
            delete = _zhang_suen_pass(img, first)
            if not delete.any():
                continue
            # parallel deletion erases 2x2 blocks completely; keep one pixel of any
            # component that would otherwise vanish
            labels, n = ndimage.label(img, structure=EIGHT)
            remaining = np.bincount(labels[(img == 1) & ~delete], minlength=n + 1)
            for lab in np.nonzero(remaining[1:] == 0)[0] + 1:
                r, c = np.argwhere(labels == lab)[0]
                delete[r, c] = False
            img[delete] = 0
            changed = True
        if not changed:
            break
    _remove_staircase(img)
    return img


# --- seeds ---------------------------------------------------------------------


def lattice_points(skeleton: np.ndarray, spacing: int) -> list[tuple[int, int]]:
    rows, cols = np.nonzero(skeleton)
    on = (rows % spacing == 0) | (cols % spacing == 0)
    return [(int(r), int(c)) for r, c in zip(rows[on], cols[on])]


def dedupe_seeds(points: list[tuple[int, int]], min_distance: float) -> list[tuple[int, int]]:
    kept: list[tuple[int, int]] = []
    for r, c in sorted(points):
        if all(max(abs(r - kr), abs(c - kc)) >= min_distance for kr, kc in kept):
            kept.append((r, c))
    return kept


def coverage_mask(seeds: list[tuple[int, int]], geometry: PatchGeometry, shape) -> np.ndarray:
    covered = np.zeros(shape, dtype=bool)
    h, w = shape
    for seed in seeds:
        win = geometry.window(seed)
        covered[max(win.top, 0) : min(win.bottom, h), max(win.left, 0) : min(win.right, w)] = True
    return covered


def lattice_seeds(
    skeleton: np.ndarray | None, geometry: PatchGeometry, partition: SRSPartition
) -> SeedSet:
    """Seeds on skeleton/lattice crossings, plus repair seeds for any uncovered ambiguous pixel."""
    shape = partition.labels.shape
    if skeleton is None:
        skeleton = np.zeros(shape, dtype=np.uint8)
    seeds = dedupe_seeds(lattice_points(skeleton, geometry.lattice_spacing), geometry.p / 4)
    n_lattice = len(seeds)
    covered = coverage_mask(seeds, geometry, shape)
    ambig = partition.ambiguous
    h, w = shape
    while True:
        left = np.flatnonzero(ambig & ~covered)
        if left.size == 0:
            break
        r, c = divmod(int(left[0]), shape[1])
        seeds.append((r, c))
        win = geometry.window((r, c))
        covered[max(win.top, 0) : min(win.bottom, h), max(win.left, 0) : min(win.right, w)] = True
    return SeedSet(seeds=seeds, geometry=geometry, n_lattice=n_lattice)


def check_coverage(seedset: SeedSet, partition: SRSPartition) -> int:
    """Number of ambiguous pixels outside every seed window (0 when covered)."""
    covered = coverage_mask(seedset.seeds, seedset.geometry, partition.labels.shape)
    return int(np.count_nonzero(partition.ambiguous & ~covered))


def select_seeds(
    values: np.ndarray, partition: SRSPartition, geometry: PatchGeometry
) -> tuple[SeedSet, np.ndarray | None]:
    """Raw estimate -> largest component -> skeleton -> lattice seeds."""
    raw = raw_estimate(values, partition.config.support)
    try:
        skel = skeletonize(largest_component(raw))
    except NoVascularStructure:
        log.warning("no vascular structure above support; seeds come from coverage repair only")
        skel = None
    return lattice_seeds(skel, geometry, partition), skel


# --- patches -------------------------------------------------------------------


def extract_patch(
    values: np.ndarray,
    partition: SRSPartition,
    seed: tuple[int, int],
    geometry: PatchGeometry,
    gt: np.ndarray | None = None,
) -> TwoChannelPatch:
    values = np.asarray(getattr(values, "values", values))
    h, w = values.shape
    r, c = seed
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"seed {seed} is outside the {h}x{w} image")
    ctx = geometry.context_window(seed)
    lik = mirror_extract(values, ctx).astype(np.float32) / 255.0
    amb_ctx = mirror_extract(partition.ambiguous, ctx)
    win = geometry.window(seed)
    valid = inside_mask(win, (h, w))
    ambig = mirror_extract(partition.ambiguous, win) & valid
    gt_win = None
    if gt is not None:
        gt_win = (mirror_extract(np.asarray(gt), win) * valid).astype(np.uint8)
    return TwoChannelPatch(
        values=np.stack([lik, lik * amb_ctx]),
        seed=(int(r), int(c)),
        ambig_mask=ambig,
        valid=valid,
        gt_window=gt_win,
    )


def extract_patches(values, partition, seedset: SeedSet, gt=None) -> list[TwoChannelPatch]:
    return [extract_patch(values, partition, s, seedset.geometry, gt) for s in seedset.seeds]


# --- stage 2 training and prediction -------------------------------------------


@dataclasses.dataclass
class Stage2Result:
    checkpoint: Checkpoint
    epoch_losses: list[float]
    beta_log: list[list[float]]  # one list of per-batch draws per epoch


def _flip_patch_arrays(x: np.ndarray, y: np.ndarray, v: np.ndarray, rng):
    if rng.random() < 0.5:
        x, y, v = x[..., ::-1], y[..., ::-1], v[..., ::-1]
    if rng.random() < 0.5:
        x, y, v = x[..., ::-1, :], y[..., ::-1, :], v[..., ::-1, :]
    return np.ascontiguousarray(x), np.ascontiguousarray(y), np.ascontiguousarray(v)


def train_stage2(patches: list[TwoChannelPatch], cfg: TrainConfig) -> Stage2Result:
    """Fit the mini U-net with a dice loss whose beta is redrawn every mini-batch."""
    if not patches:
        raise ValueError("stage 2 has no training data")
    if any(p.gt_window is None for p in patches):
        raise ValueError("every stage-2 training patch needs a gt window")
    if cfg.beta_sampler is None:
        raise ConfigurationError("stage-2 training needs a beta sampler")
    geom = receptive_geometry(2, cfg.input_size, cfg.base_channels)
    ctx = patches[0].values.shape[-1]
    if ctx != geom.input_size or patches[0].gt_window.shape[-1] != geom.output_size:
        raise ConfigurationError(
            f"patches are {ctx}->{patches[0].gt_window.shape[-1]} but the network is "
            f"{geom.input_size}->{geom.output_size}"
        )
    net = build_mini_unet(geom, seed=cfg.seed, batch_norm=cfg.batch_norm)
    opt = make_optimizer(cfg, net)
    x_all = np.stack([p.values for p in patches]).astype(np.float32)
    y_all = np.stack([p.gt_window for p in patches]).astype(np.float32)
    v_all = np.stack([p.valid for p in patches]).astype(np.float32)

    losses, beta_log = [], []
    for epoch in range(cfg.epochs):
        net.train()
        order = seeded_rng(cfg.seed, epoch, 0).permutation(len(patches))
        aug_rng = seeded_rng(cfg.seed, epoch, 2)
        total, n_batches, betas = 0.0, 0, []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            x, y, v = x_all[idx], y_all[idx], v_all[idx]
            if cfg.augment:
                x, y, v = _flip_patch_arrays(x, y, v, aug_rng)
            beta = sample_weight(cfg.beta_sampler, seeded_rng(cfg.seed, epoch, 1, b))
            q = torch.softmax(net(torch.from_numpy(x)), dim=1)[:, 1]
            prec, rec = soft_precision_recall(q, torch.from_numpy(y), torch.from_numpy(v) > 0)
            loss = 1 - f_beta_from_pr(prec, rec, beta)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite stage-2 loss at epoch {epoch}, beta={beta}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            n_batches += 1
            betas.append(beta)
        losses.append(total / n_batches)
        beta_log.append(betas)
        log.info("stage2 epoch %d loss %.4f", epoch + 1, losses[-1])
    net.eval()
    ckpt = Checkpoint.from_net(net, stage=2, epochs=cfg.epochs, seed=cfg.seed)
    return Stage2Result(checkpoint=ckpt, epoch_losses=losses, beta_log=beta_log)


@torch.no_grad()
def patch_probabilities(checkpoint: Checkpoint, patches: list[TwoChannelPatch], batch_size: int = 16) -> np.ndarray:
    net = checkpoint.build()
    if checkpoint.in_channels != 2:
        raise ValueError("stage-2 checkpoint must take two input channels")
    out = []
    for start in range(0, len(patches), batch_size):
        x = np.stack([p.values for p in patches[start : start + batch_size]]).astype(np.float32)
        if x.shape[-1] != checkpoint.geometry.input_size:
            raise ValueError(
                f"patch size {x.shape[-1]} does not match the checkpoint input {checkpoint.geometry.input_size}"
            )
        out.append(net.probabilities(torch.from_numpy(x))[:, 1].double().numpy())
    if not out:
        return np.zeros((0, checkpoint.geometry.output_size, checkpoint.geometry.output_size))
    return np.concatenate(out)


def average_patch_probabilities(
    patches: list[TwoChannelPatch], probs: np.ndarray, shape: tuple[int, int]
) -> np.ndarray:
    """Average per-patch vessel probabilities onto ambiguous pixels; NaN elsewhere."""
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    h, w = shape
    for patch, prob in zip(patches, probs):
        p = prob.shape[-1]
        top, left = patch.seed[0] - p // 2, patch.seed[1] - p // 2
        keep = patch.ambig_mask
        rr, cc = np.nonzero(keep)
        np.add.at(acc, (rr + top, cc + left), prob[rr, cc])
        np.add.at(cnt, (rr + top, cc + left), 1)
    out = np.full(shape, np.nan)
    hit = cnt > 0
    out[hit] = acc[hit] / cnt[hit]
    return out


def predict_ambiguous(
    checkpoint: Checkpoint, patches: list[TwoChannelPatch], shape: tuple[int, int]
) -> np.ndarray:
    return average_patch_probabilities(patches, patch_probabilities(checkpoint, patches), shape)


def merge(partition: SRSPartition, ambig_probs: np.ndarray | None) -> np.ndarray:
    """Final 0/1 segmentation: easy labels kept, ambiguous pixels thresholded at 0.5."""
    labels = partition.labels
    seg = (labels == Band.VESSEL_EASY).astype(np.uint8)
    ambig = labels == Band.AMBIG
    if ambig_probs is None:
        return seg
    probs = np.asarray(ambig_probs)
    if probs.shape != labels.shape:
        raise ValueError("ambiguous probability map does not match the partition")
    missing = ambig & np.isnan(probs)
    if missing.any():
        raise RuntimeError(f"coverage violation: {int(missing.sum())} ambiguous pixels lack a prediction")
    seg[ambig & (np.nan_to_num(probs) > 0.5)] = 1
    return seg
