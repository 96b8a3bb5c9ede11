"""Shared test helpers (imported by test modules and conftest)."""

import torch

from pyramid_style import DraftingNet, ModelBundle, RevisionNet, build_style_context
from pyramid_style.discriminator import PatchDiscriminator

CRITERIA = []


def record_criterion(number, title, passed, detail=""):
    """Collect one acceptance line; printed in the terminal summary."""
    CRITERIA.append((number, title, passed, detail))


def make_bundle(extractor, levels=2, seed=0, perturb=True):
    """Untrained bundle; ``perturb`` gives the last revision conv non-zero weights."""
    torch.manual_seed(seed)
    style = torch.rand(1, 3, 128, 128, generator=torch.Generator().manual_seed(seed))
    drafting = DraftingNet(extractor)
    ctx = build_style_context(extractor, style)
    revisions = []
    for _ in range(levels):
        net = RevisionNet()
        if perturb:
            with torch.no_grad():
                net.conv3b.weight.normal_(0, 0.01)
        revisions.append(net)
    discs = [PatchDiscriminator() for _ in range(levels)]
    return ModelBundle.from_models(drafting, ctx, revisions, discs)
