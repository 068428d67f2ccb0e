"""
Easy and ambiguous pixels, skeleton seeds and patches
======================================================

Builds a likelihood map from a synthetic image, splits it into bands, picks
patch seeds along the skeleton and checks that every ambiguous pixel falls
inside some patch. A figure is written to demos/out/ambiguous.png.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy import ndimage

from vesselpipe.srs import SRSConfig, band_stats, partition
from vesselpipe.synthetic import make_samples
from vesselpipe.targeted import (
    PatchGeometry,
    check_coverage,
    extract_patches,
    largest_component,
    raw_estimate,
    select_seeds,
    skeletonize,
)

sample = make_samples(1, size=(200, 200), seed=4)[0]

# stand-in for a stage-1 output: blurred ground truth plus noise
rng = np.random.default_rng(1)
lik = ndimage.gaussian_filter(sample.gt.astype(float), 1.5) * 1.6 + rng.normal(0, 0.03, sample.gt.shape)
lik = (np.clip(lik, 0, 1) * 255).astype(np.uint8)

part = partition(lik, SRSConfig(20, 235))
counts, fractions = band_stats(part)
for band, n in counts.items():
    print(f"{band.name:12s} {n:6d} pixels ({fractions[band]:.1%})")

# only the largest connected vessel tree is skeletonized; ambiguous pixels on
# the other, disconnected vessels are reached by coverage-repair seeds
skeleton = skeletonize(largest_component(raw_estimate(lik, 20)))
geom = PatchGeometry(p=40, context=80, lattice_spacing=20)
seeds, _ = select_seeds(lik, part, geom)
print(f"{len(seeds.seeds)} seeds, {seeds.n_lattice} on the lattice, "
      f"{len(seeds.seeds) - seeds.n_lattice} added for coverage")
print("uncovered ambiguous pixels:", check_coverage(seeds, part))

patches = extract_patches(lik, part, seeds, gt=sample.gt)
print("patch input shape:", patches[0].values.shape)

fig, ax = plt.subplots(1, 3, figsize=(12, 4))
ax[0].imshow(lik, cmap="gray")
ax[0].set_title("likelihood")
ax[1].imshow(part.labels, cmap="viridis")
ax[1].set_title("bands")
ax[2].imshow(skeleton, cmap="gray")
r, c = zip(*seeds.seeds)
ax[2].scatter(c, r, s=12, c="red")
ax[2].set_title("skeleton and seeds")
for a in ax:
    a.axis("off")
out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
fig.savefig(out / "ambiguous.png", dpi=80)
print("wrote", out / "ambiguous.png")
