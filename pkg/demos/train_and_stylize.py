"""Train a tiny drafting net and one revision level, then stylize at 256 px.

Uses a synthetic corpus and random extractor weights, so the output is only
a smoke check of the pipeline. Pass real data through the CLI for actual use.
"""

import tempfile
import time
from pathlib import Path

import torch

from pyramid_style import (
    Extractor,
    TrainingConfig,
    load_bundle,
    random_weights,
    read_loss_log,
    save_bundle,
    save_image,
    stylize_pyramid,
    train_drafting,
    train_revision,
)
from pyramid_style.features import save_extractor_weights
from pyramid_style.imagery import load_image
from pyramid_style.testing import write_corpus, write_style

root = Path(tempfile.mkdtemp(prefix="pyramid_demo_"))
write_corpus(root / "content", 6, seed=0)
write_style(root / "style.png")
save_extractor_weights(random_weights(0), root / "vgg.safetensors")
vgg = Extractor(random_weights(0))

common = dict(content_dir=str(root / "content"), style_image=str(root / "style.png"),
              extractor_weights=str(root / "vgg.safetensors"), batch_size=1, seed=0)

t = time.time()
draft = train_drafting(TrainingConfig(resolution=64, iterations=20, log_path=str(root / "draft.log"),
                                      **common), vgg)
totals = [v for _, n, v in read_loss_log(root / "draft.log") if n == "total"]
print(f"draft: {len(totals)} steps in {time.time() - t:.1f}s, loss {totals[0]:.1f} -> {totals[-1]:.1f}")

t = time.time()
bundle = train_revision(TrainingConfig(stage="revision-1", resolution=128, iterations=5,
                                       log_path=str(root / "rev.log"), **common), draft)
print(f"revision: 5 steps in {time.time() - t:.1f}s")

save_bundle(bundle, root / "model.safetensors")
stack = load_bundle(root / "model.safetensors").stack()
print("levels", stack.levels, "resolutions", stack.resolutions())

content = load_image(next((root / "content").iterdir()), 256).unsqueeze(0)
with torch.no_grad():
    t = time.time()
    out = stylize_pyramid(content, stack)
    print(f"stylized {tuple(out.shape)} in {time.time() - t:.2f}s")
save_image(out[0].clamp(0, 1), root / "stylized.png")
print("wrote", root / "stylized.png")
