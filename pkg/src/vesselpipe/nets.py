"""Valid-convolution U-net, its size arithmetic, and overlap-tile planning."""
from __future__ import annotations

import dataclasses
import io
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError

CHECKPOINT_MAGIC = b"VESSELPIPE-CKPT-1\n"


@dataclasses.dataclass(frozen=True)
class UNetGeometry:
    """Size ledger of a valid-convolution U-net.

    ``encoder_sizes[l]`` is the feature size after the conv block at level
    ``l`` (the tensor that gets cropped into the skip connection) and
    ``decoder_sizes[l]`` the size right after upsampling into level ``l``.
    """

    depth: int
    input_size: int
    output_size: int
    base_channels: int = 64
    convs_per_block: int = 2
    kernel: int = 3
    encoder_sizes: tuple[int, ...] = ()
    bottom_size: int = 0
    decoder_sizes: tuple[int, ...] = ()

    @property
    def margin(self) -> int:
        return (self.input_size - self.output_size) // 2

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level


def receptive_geometry(depth: int, input_size: int, base_channels: int = 64) -> UNetGeometry:
    if depth < 0:
        raise ConfigurationError("depth must be >= 0")
    shrink = 2 * (3 - 1)  # two unpadded 3x3 convs per block
    size = input_size
    encoder = []
    for level in range(depth):
        size -= shrink
        if size <= 0 or size % 2:
            raise ConfigurationError(
                f"input size {input_size} inadmissible: encoder level {level} "
                f"gives {size} before pooling (needs a positive even size)"
            )
        encoder.append(size)
        size //= 2
    size -= shrink
    if size <= 0:
        raise ConfigurationError(f"input size {input_size} inadmissible: bottleneck size {size}")
    bottom = size
    decoder = [0] * depth
    for level in reversed(range(depth)):
        size *= 2
        decoder[level] = size
        if (encoder[level] - size) % 2:
            raise ConfigurationError(
                f"input size {input_size} inadmissible: skip crop at level {level} is not centred"
            )
        size -= shrink
        if size <= 0:
            raise ConfigurationError(
                f"input size {input_size} inadmissible: decoder level {level} gives {size}"
            )
    return UNetGeometry(
        depth=depth,
        input_size=input_size,
        output_size=size,
        base_channels=base_channels,
        encoder_sizes=tuple(encoder),
        bottom_size=bottom,
        decoder_sizes=tuple(decoder),
    )


def admissible_sizes(depth: int, lo: int, hi: int) -> list[int]:
    out = []
    for n in range(lo, hi + 1):
        try:
            receptive_geometry(depth, n)
        except ConfigurationError:
            continue
        out.append(n)
    return out


def _double_conv(cin: int, cout: int, batch_norm: bool) -> nn.Sequential:
    layers: list[nn.Module] = []
    for c in (cin, cout):
        layers.append(nn.Conv2d(c, cout, kernel_size=3, padding=0))
        if batch_norm:
            layers.append(nn.BatchNorm2d(cout))
        layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


def center_crop(x: torch.Tensor, size: int) -> torch.Tensor:
    off_h = (x.shape[-2] - size) // 2
    off_w = (x.shape[-1] - size) // 2
    return x[..., off_h : off_h + size, off_w : off_w + size]


class UNet(nn.Module):
    """Unpadded U-net; ``forward`` returns 2-class logits, ``probabilities`` their softmax."""

    def __init__(self, geometry: UNetGeometry, in_channels: int = 1, batch_norm: bool = False):
        super().__init__()
        self.geometry = geometry
        self.in_channels = in_channels
        depth, ch = geometry.depth, geometry.channels
        self.down = nn.ModuleList()
        cin = in_channels
        for level in range(depth):
            self.down.append(_double_conv(cin, ch(level), batch_norm))
            cin = ch(level)
        self.bottom = _double_conv(cin, ch(depth), batch_norm)
        self.up = nn.ModuleList()
        self.up_conv = nn.ModuleList()
        for level in reversed(range(depth)):
            self.up.append(nn.ConvTranspose2d(ch(level + 1), ch(level), kernel_size=2, stride=2))
            self.up_conv.append(_double_conv(2 * ch(level), ch(level), batch_norm))
        self.head = nn.Conv2d(ch(0), 2, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels or x.shape[-1] != self.geometry.input_size or x.shape[-2] != self.geometry.input_size:
            raise ValueError(
                f"expected input (N, {self.in_channels}, {self.geometry.input_size}, "
                f"{self.geometry.input_size}), got {tuple(x.shape)}"
            )
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottom(x)
        for up, conv, skip in zip(self.up, self.up_conv, reversed(skips)):
            x = up(x)
            x = conv(torch.cat([center_crop(skip, x.shape[-1]), x], dim=1))
        return self.head(x)

    def probabilities(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.forward(x), dim=1)


def init_weights(net: nn.Module, seed: int) -> None:
    """Fan-in variance scaling (He normal) from a private generator."""
    gen = torch.Generator().manual_seed(int(seed))
    for m in net.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu", generator=gen)
            nn.init.zeros_(m.bias)


def build_unet(
    geom: UNetGeometry, in_channels: int = 1, seed: int = 0, batch_norm: bool = False
) -> UNet:
    if geom.output_size <= 0 or geom.base_channels < 1:
        raise ConfigurationError(f"invalid geometry {geom}")
    check = receptive_geometry(geom.depth, geom.input_size, geom.base_channels)
    if check.output_size != geom.output_size:
        raise ConfigurationError("geometry output size disagrees with its input size")
    net = UNet(geom, in_channels=in_channels, batch_norm=batch_norm)
    init_weights(net, seed)
    return net


def build_mini_unet(
    geom: UNetGeometry, in_channels: int = 2, seed: int = 0, batch_norm: bool = False
) -> UNet:
    """The two-pooling network used for patch refinement (140 -> 100 by default)."""
    if geom.depth != 2:
        raise ConfigurationError(f"the mini U-net has depth 2, got {geom.depth}")
    return build_unet(geom, in_channels=in_channels, seed=seed, batch_norm=batch_norm)


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


# --- tiling ---------------------------------------------------------------


class Rect(NamedTuple):
    top: int
    left: int
    height: int
    width: int

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width


@dataclasses.dataclass(frozen=True)
class Tile:
    output_window: Rect  # clipped to the image
    input_window: Rect  # full network input, may leave the image
    needs_mirror: bool


@dataclasses.dataclass(frozen=True)
class TilePlan:
    image_dims: tuple[int, int]
    tiles: tuple[Tile, ...]
    output_size: int
    margin: int


def tile_plan(image_dims: tuple[int, int], geom: UNetGeometry) -> TilePlan:
    h, w = image_dims
    if h < 1 or w < 1:
        raise ValueError(f"image dims must be positive, got {image_dims}")
    out, m, size = geom.output_size, geom.margin, geom.input_size
    tiles = []
    for top in range(0, h, out):
        for left in range(0, w, out):
            inp = Rect(top - m, left - m, size, size)
            tiles.append(
                Tile(
                    output_window=Rect(top, left, min(out, h - top), min(out, w - left)),
                    input_window=inp,
                    needs_mirror=inp.top < 0 or inp.left < 0 or inp.bottom > h or inp.right > w,
                )
            )
    return TilePlan(image_dims=(h, w), tiles=tuple(tiles), output_size=out, margin=m)


def reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary indices into [0, n) by reflection without repeating the border."""
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    r = np.mod(idx, period)
    return np.where(r < n, r, period - r)


def mirror_extract(raster: np.ndarray, window: Rect) -> np.ndarray:
    """Crop ``window`` from ``raster`` (H x W or H x W x C), mirroring outside the image."""
    h, w = raster.shape[:2]
    top, left, wh, ww = window
    if top >= h or left >= w or top + wh <= 0 or left + ww <= 0:
        raise ValueError(f"window {window} lies entirely outside the {h}x{w} image")
    if top >= 0 and left >= 0 and top + wh <= h and left + ww <= w:
        return raster[top : top + wh, left : left + ww].copy()
    rows = reflect_index(np.arange(top, top + wh), h)
    cols = reflect_index(np.arange(left, left + ww), w)
    return raster[rows[:, None], cols[None, :]]


def inside_mask(window: Rect, image_dims: tuple[int, int]) -> np.ndarray:
    """Boolean mask over ``window`` marking pixels that lie inside the image."""
    h, w = image_dims
    rows = np.arange(window.top, window.bottom)
    cols = np.arange(window.left, window.right)
    return ((rows >= 0) & (rows < h))[:, None] & ((cols >= 0) & (cols < w))[None, :]


# --- checkpoints ----------------------------------------------------------


@dataclasses.dataclass
class Checkpoint:
    """Trained network parameters together with what is needed to rebuild the net."""

    geometry: UNetGeometry
    in_channels: int
    state_dict: dict
    batch_norm: bool = False
    meta: dict = dataclasses.field(default_factory=dict)

    def build(self) -> UNet:
        net = UNet(self.geometry, in_channels=self.in_channels, batch_norm=self.batch_norm)
        net.load_state_dict(self.state_dict)
        net.eval()
        return net

    @classmethod
    def from_net(cls, net: UNet, **meta) -> "Checkpoint":
        state = {k: v.detach().clone() for k, v in net.state_dict().items()}
        batch_norm = any(isinstance(m, nn.BatchNorm2d) for m in net.modules())
        return cls(net.geometry, net.in_channels, state, batch_norm, dict(meta))

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        torch.save(
            {
                "geometry": dataclasses.asdict(self.geometry),
                "in_channels": self.in_channels,
                "batch_norm": self.batch_norm,
                "state_dict": self.state_dict,
                "meta": self.meta,
            },
            buf,
        )
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        if not raw.startswith(CHECKPOINT_MAGIC):
            raise ValueError(f"{path} is not a vesselpipe checkpoint")
        payload = torch.load(io.BytesIO(raw[len(CHECKPOINT_MAGIC) :]), weights_only=True)
        geom = payload["geometry"]
        for key in ("encoder_sizes", "decoder_sizes"):
            geom[key] = tuple(geom[key])
        return cls(
            geometry=UNetGeometry(**geom),
            in_channels=payload["in_channels"],
            state_dict=payload["state_dict"],
            batch_norm=payload["batch_norm"],
            meta=payload["meta"],
        )
