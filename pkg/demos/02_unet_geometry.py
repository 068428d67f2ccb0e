"""
Valid-convolution U-net sizes and overlap tiling
=================================================
"""
import numpy as np
import torch

from vesselpipe.nets import (
    Rect,
    admissible_sizes,
    build_mini_unet,
    build_unet,
    count_parameters,
    mirror_extract,
    receptive_geometry,
    tile_plan,
)

# each conv block loses 4 pixels, so the output is smaller than the input
g = receptive_geometry(4, 572)
print("depth 4:", g.input_size, "->", g.output_size, "margin", g.margin)
print("  encoder", g.encoder_sizes, "bottom", g.bottom_size, "decoder", g.decoder_sizes)
print("depth 2:", receptive_geometry(2, 140).output_size)

# not every input size works: pooling needs even sizes all the way down
print("admissible depth-4 inputs in [180, 400]:", admissible_sizes(4, 180, 400))

full = build_unet(g)
mini = build_mini_unet(receptive_geometry(2, 140))
print(f"parameters: full {count_parameters(full):,}  mini {count_parameters(mini):,}")

# a DRIVE-sized image needs 2x2 tiles of 388 output pixels
plan = tile_plan((584, 565), g)
for t in plan.tiles:
    print("output", tuple(t.output_window), "input", tuple(t.input_window), "mirror" if t.needs_mirror else "")

# outside the image the input is filled by reflection (no repeated border pixel)
ramp = np.tile(np.arange(8), (2, 1))
print(mirror_extract(ramp, Rect(0, -3, 2, 8)))

small = build_unet(receptive_geometry(2, 60, base_channels=4))
with torch.no_grad():
    print("probability tile:", small.probabilities(torch.rand(1, 1, 60, 60)).shape)
