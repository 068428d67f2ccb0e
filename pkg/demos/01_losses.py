"""
Stochastic class weights and the soft F-beta loss
==================================================

Draw a few class-weight pairs, score a toy prediction under each, then
look at how beta trades precision against recall.
"""
import numpy as np
import torch

from vesselpipe.losses import (
    PixelPrediction,
    WeightSampler,
    dynamic_cross_entropy,
    dynamic_dice_loss,
    f_beta_from_pr,
)

rng = np.random.default_rng(0)

# a 1x8x8 prediction: the network is fairly sure about background,
# unsure about the thin vessel running down column 3
target = np.zeros((1, 8, 8), dtype=np.int64)
target[0, :, 3] = 1
q = np.where(target == 1, 0.6, 0.1)
probs = torch.from_numpy(np.stack([1 - q, q], axis=1))
pred = PixelPrediction(probs, torch.from_numpy(target))

# every mini-batch gets a fresh (background, vessel) pair from {1, ..., 100}
sampler = WeightSampler(1, 100, 1)
for batch in range(5):
    loss, w = dynamic_cross_entropy(pred, sampler, rng)
    print(f"batch {batch}: weights ({w.w_background:5.1f}, {w.w_vessel:5.1f})  loss {float(loss):.4f}")

# the degenerate sampler is ordinary cross entropy
loss, _ = dynamic_cross_entropy(pred, WeightSampler(1, 1, 1), rng)
print("plain cross entropy:", round(float(loss), 4))

# F-beta leans towards recall as beta grows
p, r = 0.9, 0.6
for beta in (0.5, 1.0, 1.5, 2.0):
    print(f"beta {beta}: F = {f_beta_from_pr(p, r, beta):.4f}")

# the stage-2 loss redraws beta from {1.0, 1.1, ..., 2.0} every batch
betas = WeightSampler(1, 2, 0.1)
for _ in range(3):
    loss, beta = dynamic_dice_loss(pred, betas, rng)
    print(f"dice loss with beta {beta}: {float(loss):.4f}")
