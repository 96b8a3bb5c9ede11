"""Split an image into a Laplacian pyramid, inspect the bands, rebuild it."""

import torch

from pyramid_style import aggregate, decompose, downsample, upsample
from pyramid_style.testing import synthetic_image
from pyramid_style.imagery import from_uint8

img = from_uint8(synthetic_image(256, 256, seed=3))
print("image", tuple(img.shape))

pyr = decompose(img, 3)
print("base", tuple(pyr.base.shape))
for i, r in enumerate(pyr.residuals):
    print(f"residual {i}", tuple(r.shape), f"mean |r| = {r.abs().mean():.4f}")

# the residual is whatever the blurred copy loses
half = downsample(img)
detail = img - upsample(half)
print("finest residual matches", torch.allclose(detail, pyr.residuals[-1]))

back = aggregate(pyr.base, pyr.residuals)
print(f"round trip max error {(back - img).abs().max():.2e}")

# dropping the finest band gives a smooth but correctly sized image
soft = aggregate(pyr.base, [pyr.residuals[0], torch.zeros_like(pyr.residuals[1])])
print(f"without finest band, max error {(soft - img).abs().max():.3f}")
