"""Style, content and adversarial objectives.

Feature "vectors" are ``(..., N, C)`` tensors: N spatial positions, C
channels.  Every loss reduces over the last two axes and then averages over
any leading batch axes, so a batch of outputs can be scored against a single
style feature set by broadcasting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import torch

from .errors import DimensionError, ParameterError
from .features import STD_EPS, Extractor, extract

COS_EPS = 1e-8
MAX_POSITIONS = 1024


@dataclass
class LossWeights:
    """Weights of the combined objective.

    total = (perceptual + self_similarity * l_ss) + style * (mean_var + remd * l_r),
    plus ``adversarial`` times the generator's adversarial loss for revision levels.
    """

    self_similarity: float = 16.0
    remd: float = 3.0
    style: float = 3.0
    adversarial: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not v >= 0 or v == float("inf"):
                raise ParameterError(f"loss weight {f.name} must be finite and >= 0, got {v}")
            setattr(self, f.name, v)


@dataclass(frozen=True)
class LayerSchedule:
    remd: tuple[str, ...] = ("3_1", "4_1")
    self_similarity: tuple[str, ...] = ("3_1", "4_1")
    mean_variance: tuple[str, ...] = ("1_1", "2_1", "3_1", "4_1", "5_1")
    perceptual: tuple[str, ...] = ("1_1", "2_1", "3_1", "4_1", "5_1")

    @property
    def style_layers(self) -> set[str]:
        return set(self.remd) | set(self.mean_variance)

    @property
    def content_layers(self) -> set[str]:
        return set(self.self_similarity) | set(self.perceptual)

    @property
    def all_layers(self) -> set[str]:
        return self.style_layers | self.content_layers


def to_vectors(fmap: torch.Tensor) -> torch.Tensor:
    """``(..., C, H, W)`` feature map -> ``(..., H*W, C)`` position vectors."""
    return fmap.flatten(-2).transpose(-1, -2)


def _check_pair(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.dim() < 2 or b.dim() < 2:
        raise DimensionError(f"{what}: expected (..., N, C) tensors")
    if a.shape[-2] < 1 or b.shape[-2] < 1:
        raise ParameterError(f"{what}: empty feature set")
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"{what}: channel mismatch {a.shape[-1]} vs {b.shape[-1]}")


def _cosine_similarity(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    dots = a @ b.transpose(-1, -2)
    norms = a.norm(dim=-1).unsqueeze(-1) * b.norm(dim=-1).unsqueeze(-2)
    return dots / (norms + COS_EPS)


def cosine_cost(fs: torch.Tensor, fcs: torch.Tensor) -> torch.Tensor:
    """Cosine distance matrix ``C[i, j] = 1 - cos(fs_i, fcs_j)``, values in [0, 2]."""
    _check_pair(fs, fcs, "cosine_cost")
    return 1.0 - _cosine_similarity(fs, fcs)


def remd_loss(fs: torch.Tensor, fcs: torch.Tensor) -> torch.Tensor:
    """Relaxed earth mover distance: the larger of the two nearest-neighbour mean costs."""
    cost = cosine_cost(fs, fcs)
    to_cs = cost.min(dim=-1).values.mean(dim=-1)
    to_s = cost.min(dim=-2).values.mean(dim=-1)
    return torch.maximum(to_cs, to_s).mean()


def _moments(f: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    mean = f.mean(dim=-2)
    std = torch.sqrt(f.var(dim=-2, unbiased=False) + STD_EPS)
    return mean, std


def mean_variance_loss(fs: torch.Tensor, fcs: torch.Tensor) -> torch.Tensor:
    _check_pair(fs, fcs, "mean_variance_loss")
    mu_s, sd_s = _moments(fs)
    mu_cs, sd_cs = _moments(fcs)
    return ((mu_s - mu_cs).norm(dim=-1) + (sd_s - sd_cs).norm(dim=-1)).mean()


def channel_normalize(f: torch.Tensor) -> torch.Tensor:
    mean, std = _moments(f)
    return (f - mean.unsqueeze(-2)) / std.unsqueeze(-2)


def perceptual_loss(fc: torch.Tensor, fcs: torch.Tensor) -> torch.Tensor:
    """Euclidean distance between per-channel standardised feature sets."""
    _check_pair(fc, fcs, "perceptual_loss")
    if fc.shape[-2:] != fcs.shape[-2:]:
        raise DimensionError(f"perceptual_loss: shape mismatch {tuple(fc.shape)} vs {tuple(fcs.shape)}")
    diff = channel_normalize(fc) - channel_normalize(fcs)
    return diff.flatten(-2).norm(dim=-1).mean()


def _column_normalized_similarity(f: torch.Tensor) -> torch.Tensor:
    d = _cosine_similarity(f, f)
    s = d.sum(dim=-2, keepdim=True)
    s = torch.where(s.abs() < COS_EPS, torch.full_like(s, COS_EPS), s)
    return d / s


def self_similarity_loss(fc: torch.Tensor, fcs: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference of the column-normalised self-similarity matrices."""
    if fc.dim() < 2 or fcs.dim() < 2:
        raise DimensionError("self_similarity_loss: expected (..., N, C) tensors")
    if fc.shape[-2] != fcs.shape[-2]:
        raise DimensionError(f"self_similarity_loss: position count {fc.shape[-2]} vs {fcs.shape[-2]}")
    if fc.shape[-2] < 1:
        raise ParameterError("self_similarity_loss: empty feature set")
    diff = _column_normalized_similarity(fc) - _column_normalized_similarity(fcs)
    return diff.abs().mean(dim=(-1, -2)).mean()


def sample_positions(n: int, max_positions: int, generator: torch.Generator | None = None):
    """Indices of a uniform subset of at most ``max_positions`` out of ``n`` (None if no cut is needed)."""
    if n <= max_positions:
        return None
    return torch.randperm(n, generator=generator)[:max_positions]


def subsample_positions(f: torch.Tensor, max_positions: int, generator: torch.Generator | None = None):
    """Keep at most ``max_positions`` rows of ``(..., N, C)``; the same rows across the batch."""
    idx = sample_positions(f.shape[-2], max_positions, generator)
    return f if idx is None else f.index_select(-2, idx.to(f.device))


@dataclass
class LossTerms:
    """Per-component values of the base objective, each already summed over its layers."""

    perceptual: torch.Tensor
    self_similarity: torch.Tensor
    mean_variance: torch.Tensor
    remd: torch.Tensor
    total: torch.Tensor
    extra: dict = field(default_factory=dict)

    def components(self) -> dict[str, float]:
        out = {
            "perceptual": float(self.perceptual.detach()),
            "self_similarity": float(self.self_similarity.detach()),
            "mean_variance": float(self.mean_variance.detach()),
            "remd": float(self.remd.detach()),
        }
        out.update({k: float(v.detach()) for k, v in self.extra.items()})
        out["total"] = float(self.total.detach())
        return out


def combine(perceptual, self_similarity, mean_variance, remd, w: LossWeights):
    return (perceptual + w.self_similarity * self_similarity) + w.style * (mean_variance + w.remd * remd)


def draft_loss_from_features(content: dict, style: dict, output: dict, w: LossWeights,
                             schedule: LayerSchedule = LayerSchedule(),
                             max_positions: int = MAX_POSITIONS,
                             generator: torch.Generator | None = None) -> LossTerms:
    """Base objective from precomputed feature maps (``(B, C, H, W)`` or ``(C, H, W)``).

    ``style`` maps may carry a batch of one; they are broadcast over the output batch.
    """
    def vec(maps, tag):
        return to_vectors(maps[tag])

    zero = next(iter(output.values())).new_zeros(())
    lp = sum((perceptual_loss(vec(content, t), vec(output, t)) for t in schedule.perceptual), zero)
    lss = zero
    for t in schedule.self_similarity:
        fc, fcs = vec(content, t), vec(output, t)
        idx = sample_positions(fc.shape[-2], max_positions, generator)
        if idx is not None:
            fc, fcs = fc.index_select(-2, idx), fcs.index_select(-2, idx)
        lss = lss + self_similarity_loss(fc, fcs)
    lm = sum((mean_variance_loss(vec(style, t), vec(output, t)) for t in schedule.mean_variance), zero)
    lr = zero
    for t in schedule.remd:
        fs = subsample_positions(vec(style, t), max_positions, generator)
        fcs = subsample_positions(vec(output, t), max_positions, generator)
        lr = lr + remd_loss(fs, fcs)
    return LossTerms(lp, lss, lm, lr, combine(lp, lss, lm, lr, w))


def draft_loss(content: torch.Tensor, style: torch.Tensor, output: torch.Tensor, extractor: Extractor,
               w: LossWeights | None = None, schedule: LayerSchedule = LayerSchedule(),
               max_positions: int = MAX_POSITIONS,
               generator: torch.Generator | None = None) -> LossTerms:
    """Base objective on images of equal resolution; gradients flow only into ``output``."""
    w = w or LossWeights()
    if not (content.shape[-2:] == style.shape[-2:] == output.shape[-2:]):
        raise DimensionError(
            f"content {tuple(content.shape[-2:])}, style {tuple(style.shape[-2:])} and "
            f"output {tuple(output.shape[-2:])} must share a resolution"
        )
    with torch.no_grad():
        fc = extract(extractor, content, schedule.content_layers)
        fs = extract(extractor, style, schedule.style_layers)
    fcs = extract(extractor, output, schedule.all_layers)
    return draft_loss_from_features(fc, fs, fcs, w, schedule, max_positions, generator)


def _finite(x: torch.Tensor, name: str) -> None:
    if not torch.isfinite(x).all():
        raise ParameterError(f"{name} scores contain non-finite values")


def generator_adversarial_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    _finite(fake_scores, "fake")
    return ((fake_scores - 1.0) ** 2).mean()


def discriminator_adversarial_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    _finite(real_scores, "real")
    _finite(fake_scores, "fake")
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores**2).mean()


def adversarial_losses(real_scores: torch.Tensor, fake_scores: torch.Tensor):
    """Least-squares GAN pair ``(g_loss, d_loss)``."""
    return generator_adversarial_loss(fake_scores), discriminator_adversarial_loss(real_scores, fake_scores)
