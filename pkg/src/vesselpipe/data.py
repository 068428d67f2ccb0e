"""Dataset ingestion, preprocessing, augmentation and fold planning.

Datasets live under ``<root>/<TAG>/{images,labels,masks}/<stem>.<ext>``.
Labels and masks are binary rasters stored as 0/255 and are matched to
images by file stem.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import re
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .errors import ConfigurationError, DatasetError

log = logging.getLogger(__name__)

RASTER_SUFFIXES = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".ppm", ".gif")

DEFAULT_CLIP_LIMIT = 2.0
DEFAULT_TILE_GRID = (8, 8)


class DatasetTag(str, enum.Enum):
    DRIVE = "DRIVE"
    STARE = "STARE"
    CHASE_DB = "CHASE_DB"
    AV_WIDE = "AV_WIDE"
    VEVIO_MOSAIC = "VEVIO_MOSAIC"
    VEVIO_FRAME = "VEVIO_FRAME"
    CUSTOM = "CUSTOM"


@dataclasses.dataclass
class FundusSample:
    """One retinal image with optional FOV mask and vessel ground truth.

    ``rgb`` is H x W x 3 (or H x W for grayscale sources), ``green`` is the
    single-channel working raster filled in by preprocessing. ``gt`` and
    ``fov_mask`` hold 0/1 values.
    """

    id: str
    rgb: np.ndarray | None
    green: np.ndarray | None = None
    fov_mask: np.ndarray | None = None
    gt: np.ndarray | None = None
    dataset_tag: DatasetTag = DatasetTag.CUSTOM

    def __post_init__(self):
        shapes = {
            name: arr.shape[:2]
            for name, arr in (
                ("rgb", self.rgb),
                ("green", self.green),
                ("fov_mask", self.fov_mask),
                ("gt", self.gt),
            )
            if arr is not None
        }
        if not shapes:
            raise ValueError(f"sample {self.id!r} carries no raster")
        if len(set(shapes.values())) != 1:
            raise ValueError(f"sample {self.id!r} has mismatched raster sizes: {shapes}")
        for name in ("gt", "fov_mask"):
            arr = getattr(self, name)
            if arr is not None and not np.isin(arr, (0, 1)).all():
                raise ValueError(f"sample {self.id!r}: {name} must contain only 0/1")

    @property
    def shape(self) -> tuple[int, int]:
        for arr in (self.green, self.rgb, self.gt, self.fov_mask):
            if arr is not None:
                return arr.shape[:2]
        raise AssertionError("unreachable")

    def fov(self) -> np.ndarray:
        """FOV mask, or a full-frame mask of ones when the dataset has none."""
        if self.fov_mask is not None:
            return self.fov_mask
        return np.ones(self.shape, dtype=np.uint8)


@dataclasses.dataclass
class FoldPlan:
    folds: list[tuple[list[str], list[str], list[str]]]
    k: int

    def __post_init__(self):
        for train, val, test in self.folds:
            a, b, c = set(train), set(val), set(test)
            if a & b or a & c or b & c:
                raise ValueError("train/val/test ids overlap within a fold")


@dataclasses.dataclass(frozen=True)
class SampleFiles:
    stem: str
    image: Path
    label: Path | None
    mask: Path | None


def _find_stem(directory: Path, stem: str) -> Path | None:
    if not directory.is_dir():
        return None
    for suffix in RASTER_SUFFIXES:
        for cand in (directory / f"{stem}{suffix}", directory / f"{stem}{suffix.upper()}"):
            if cand.is_file():
                return cand
    return None


def dataset_dir(root: str | Path, tag: DatasetTag | str) -> Path:
    return Path(root) / DatasetTag(tag).value


def discover(root: str | Path, tag: DatasetTag | str) -> list[SampleFiles]:
    """List the image files of a dataset together with matching label/mask files."""
    base = dataset_dir(root, tag)
    images = base / "images"
    if not images.is_dir():
        raise ConfigurationError(f"dataset directory not found: {images}")
    found = []
    for path in sorted(images.iterdir()):
        if path.suffix.lower() not in RASTER_SUFFIXES:
            continue
        found.append(
            SampleFiles(
                stem=path.stem,
                image=path,
                label=_find_stem(base / "labels", path.stem),
                mask=_find_stem(base / "masks", path.stem),
            )
        )
    return found


def read_raster(path: str | Path, mode: str | None = None) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if mode is not None:
                im = im.convert(mode)
            elif im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im).copy()
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot decode raster {path}: {exc}") from exc


def write_png(path: str | Path, raster: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(raster)).save(path, format="PNG")


def load_sample(files: SampleFiles, tag: DatasetTag | str = DatasetTag.CUSTOM) -> FundusSample | None:
    """Decode one sample. Returns None (with a logged diagnostic) on size mismatch."""
    rgb = read_raster(files.image)
    gt = fov = None
    if files.label is not None:
        gt = (read_raster(files.label, "L") > 127).astype(np.uint8)
    if files.mask is not None:
        fov = (read_raster(files.mask, "L") > 127).astype(np.uint8)
    for name, arr in (("label", gt), ("mask", fov)):
        if arr is not None and arr.shape != rgb.shape[:2]:
            log.warning(
                "rejecting %s: %s is %s but image is %s", files.stem, name, arr.shape, rgb.shape[:2]
            )
            return None
    return FundusSample(id=files.stem, rgb=rgb, fov_mask=fov, gt=gt, dataset_tag=DatasetTag(tag))


def load_dataset(root: str | Path, tag: DatasetTag | str) -> list[FundusSample]:
    entries = discover(root, tag)
    if not entries:
        log.warning("no images found under %s", dataset_dir(root, tag))
    samples = []
    for entry in entries:
        sample = load_sample(entry, tag)
        if sample is not None:
            samples.append(sample)
    return samples


def extract_green(sample: FundusSample) -> FundusSample:
    if sample.rgb is None:
        raise ValueError(f"sample {sample.id!r} has no rgb raster")
    if sample.rgb.ndim == 2 or sample.rgb.shape[2] == 1:
        log.warning("sample %s is single-channel; copying it through as green", sample.id)
        green = sample.rgb.reshape(sample.rgb.shape[:2]).copy()
    else:
        green = sample.rgb[:, :, 1].copy()
    return dataclasses.replace(sample, green=green)


def clahe(
    green: np.ndarray,
    clip_limit: float = DEFAULT_CLIP_LIMIT,
    tile_grid: tuple[int, int] = DEFAULT_TILE_GRID,
) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization of an 8-bit raster."""
    green = np.asarray(green)
    if green.ndim != 2 or green.size == 0:
        raise ValueError("clahe expects a non-empty 2-D raster")
    if clip_limit <= 0:
        raise ConfigurationError("clip_limit must be positive")
    rows, cols = int(tile_grid[0]), int(tile_grid[1])
    if rows < 1 or cols < 1:
        raise ConfigurationError("tile grid dimensions must be >= 1")
    h, w = green.shape
    if rows > h or cols > w:
        rows = cols = 1
    # OpenCV takes the grid as (columns, rows).
    op = cv2.createCLAHE(clipLimit=float(clip_limit), tileGridSize=(cols, rows))
    return op.apply(np.ascontiguousarray(green, dtype=np.uint8))


def preprocess(
    sample: FundusSample,
    clip_limit: float = DEFAULT_CLIP_LIMIT,
    tile_grid: tuple[int, int] = DEFAULT_TILE_GRID,
) -> FundusSample:
    sample = extract_green(sample)
    return dataclasses.replace(sample, green=clahe(sample.green, clip_limit, tile_grid))


def random_flip(sample: FundusSample, rng: np.random.Generator) -> FundusSample:
    """Independently flip left-right and up-down, each with probability 1/2."""
    flip_h = rng.random() < 0.5
    flip_v = rng.random() < 0.5
    if not (flip_h or flip_v):
        return sample

    def flip(arr):
        if arr is None:
            return None
        if flip_h:
            arr = arr[:, ::-1]
        if flip_v:
            arr = arr[::-1]
        return np.ascontiguousarray(arr)

    return dataclasses.replace(
        sample,
        rgb=flip(sample.rgb),
        green=flip(sample.green),
        fov_mask=flip(sample.fov_mask),
        gt=flip(sample.gt),
    )


_LEADING_INT = re.compile(r"^(\d+)")


def drive_test_ids(ids: list[str]) -> list[str]:
    """The official DRIVE test images: stems tagged ``test`` or numbered 01-20."""
    test = []
    for i in ids:
        m = _LEADING_INT.match(i)
        if "test" in i.lower() or (m is not None and "training" not in i.lower() and int(m.group(1)) <= 20):
            test.append(i)
    return test


def _split_train_val(ids: list[str], rng: np.random.Generator) -> tuple[list[str], list[str]]:
    ids = list(ids)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train = int(round(0.75 * len(shuffled)))
    if shuffled and n_train == 0:
        n_train = 1
    return shuffled[:n_train], shuffled[n_train:]


def make_folds(
    ids: list[str], tag: DatasetTag | str, k: int, rng: np.random.Generator
) -> FoldPlan:
    ids = list(ids)
    if not ids:
        raise ConfigurationError("cannot plan folds over an empty id list")
    if len(set(ids)) != len(ids):
        raise ConfigurationError("sample ids must be unique")
    if DatasetTag(tag) is DatasetTag.DRIVE:
        test = drive_test_ids(ids)
        if not test:
            raise ConfigurationError("no DRIVE test images found among the ids")
        test_set = set(test)
        train, val = _split_train_val([i for i in ids if i not in test_set], rng)
        return FoldPlan(folds=[(train, val, test)], k=1)

    if k < 2:
        raise ConfigurationError("k must be >= 2")
    if k > len(ids):
        raise ConfigurationError(f"k={k} exceeds the number of samples ({len(ids)})")
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    folds = []
    for chunk in np.array_split(np.arange(len(shuffled)), k):
        test = [shuffled[i] for i in chunk]
        test_set = set(test)
        train, val = _split_train_val([i for i in shuffled if i not in test_set], rng)
        folds.append((train, val, test))
    return FoldPlan(folds=folds, k=k)
