"""Evaluate each style and content loss on random VGG features."""

import torch

from pyramid_style import (
    Extractor,
    cosine_cost,
    extract,
    mean_variance_loss,
    perceptual_loss,
    random_weights,
    remd_loss,
    self_similarity_loss,
)
from pyramid_style.losses import to_vectors

torch.manual_seed(0)
vgg = Extractor(random_weights(0))

content = torch.rand(1, 3, 64, 64)
style = torch.rand(1, 3, 64, 64).pow(3)
fc = to_vectors(extract(vgg, content, ["3_1"])["3_1"])
fs = to_vectors(extract(vgg, style, ["3_1"])["3_1"])
print("feature vectors", tuple(fc.shape))

print("cosine cost matrix", tuple(cosine_cost(fs, fc).shape))
print(f"remd(style, content)          {remd_loss(fs, fc).item():.4f}")
print(f"remd(style, style)            {remd_loss(fs, fs).item():.4f}")
print(f"mean-variance(style, content) {mean_variance_loss(fs, fc).item():.4f}")
print(f"perceptual(content, content)  {perceptual_loss(fc, fc).item():.4f}")
print(f"perceptual(content, style)    {perceptual_loss(fc, fs).item():.4f}")
print(f"self-similarity(c, s)         {self_similarity_loss(fc, fs).item():.4f}")

# rEMD ignores the order of feature positions
perm = torch.randperm(fc.shape[-2])
print("remd permutation gap", abs(remd_loss(fs, fc) - remd_loss(fs, fc[..., perm, :])).item())
