"""Support-resistance split of a likelihood map into easy and ambiguous pixels."""
from __future__ import annotations

import dataclasses
import enum
from pathlib import Path

import numpy as np

from .data import write_png
from .errors import ConfigurationError


class Band(enum.IntEnum):
    BG_EASY = 0
    AMBIG = 1
    VESSEL_EASY = 2


# grey levels used when a partition is exported for inspection
EXPORT_LEVELS = {Band.BG_EASY: 0, Band.AMBIG: 128, Band.VESSEL_EASY: 255}


@dataclasses.dataclass(frozen=True)
class SRSConfig:
    support: int = 20
    resistance: int = 235

    def __post_init__(self):
        for name in ("support", "resistance"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ConfigurationError(f"{name} must be in [0, 255], got {v}")
        if self.support >= self.resistance:
            raise ConfigurationError(
                f"support ({self.support}) must be below resistance ({self.resistance})"
            )


@dataclasses.dataclass
class SRSPartition:
    labels: np.ndarray  # uint8 raster of Band codes
    config: SRSConfig

    @property
    def ambiguous(self) -> np.ndarray:
        return self.labels == Band.AMBIG

    @property
    def easy_vessel(self) -> np.ndarray:
        return self.labels == Band.VESSEL_EASY

    @property
    def easy_background(self) -> np.ndarray:
        return self.labels == Band.BG_EASY


def partition(values: np.ndarray, cfg: SRSConfig) -> SRSPartition:
    """Label each 0-255 likelihood value: below support, above resistance, or in between.

    Both thresholds are inclusive on the ambiguous side.
    """
    values = np.asarray(getattr(values, "values", values))
    labels = np.full(values.shape, Band.AMBIG, dtype=np.uint8)
    labels[values < cfg.support] = Band.BG_EASY
    labels[values > cfg.resistance] = Band.VESSEL_EASY
    return SRSPartition(labels=labels, config=cfg)


def band_stats(p: SRSPartition) -> tuple[dict[Band, int], dict[Band, float]]:
    total = p.labels.size
    counts = {band: int(np.count_nonzero(p.labels == band)) for band in Band}
    fractions = {band: (c / total if total else 0.0) for band, c in counts.items()}
    return counts, fractions


def to_export_raster(p: SRSPartition) -> np.ndarray:
    lut = np.zeros(256, dtype=np.uint8)
    for band, level in EXPORT_LEVELS.items():
        lut[band] = level
    return lut[p.labels]


def from_export_raster(raster: np.ndarray, cfg: SRSConfig) -> SRSPartition:
    labels = np.full(raster.shape, Band.AMBIG, dtype=np.uint8)
    labels[raster < 64] = Band.BG_EASY
    labels[raster > 192] = Band.VESSEL_EASY
    return SRSPartition(labels=labels, config=cfg)


def save_partition(path: str | Path, p: SRSPartition) -> None:
    write_png(path, to_export_raster(p))
