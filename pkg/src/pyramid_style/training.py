"""Two-stage optimisation: the drafting network first, then each revision level in turn."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import torch

from .bundle import ModelBundle, file_sha256, save_bundle
from .config import TrainingConfig
from .data import iterate_content
from .discriminator import PatchDiscriminator, disc_forward
from .drafting import DraftingNet, build_style_context, draft_forward
from .errors import ConfigurationError, ParameterError, TrainingError
from .features import Extractor, extract, load_extractor
from .imagery import decompose, load_image, upsample
from .losses import (
    LayerSchedule,
    discriminator_adversarial_loss,
    draft_loss_from_features,
    generator_adversarial_loss,
)
from .revision import RevisionNet, revise_forward

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)


class LossLog:
    """Line-delimited ``step=<n> component=<name> value=<float>`` records."""

    def __init__(self, path=None):
        self.records: list[tuple[int, str, float]] = []
        self._fh = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w")

    def write(self, step: int, components: dict[str, float]) -> None:
        for name, value in components.items():
            self.records.append((step, name, value))
            if self._fh is not None:
                self._fh.write(f"step={step} component={name} value={value!r}\n")
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def series(self, component: str) -> dict[int, float]:
        return {s: v for s, n, v in self.records if n == component}


def read_loss_log(path) -> list[tuple[int, str, float]]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        parts = dict(tok.split("=", 1) for tok in line.split())
        records.append((int(parts["step"]), parts["component"], float(parts["value"])))
    return records


def _check_finite(components: dict[str, float], step: int) -> None:
    for name, value in components.items():
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss component {name!r} at step {step}: {value}")


class Checkpointer:
    def __init__(self, cfg: TrainingConfig):
        self.dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
        self.every = cfg.checkpoint_every
        self.keep = cfg.keep_checkpoints
        self.stage = cfg.stage
        self.saved: list[Path] = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def maybe_save(self, step: int, make_bundle) -> None:
        if self.dir is None or step % self.every:
            return
        path = self.dir / f"{self.stage}-step{step:06d}.safetensors"
        save_bundle(make_bundle(), path)
        self.saved.append(path)
        while len(self.saved) > self.keep:
            self.saved.pop(0).unlink(missing_ok=True)

    def final(self, bundle: ModelBundle) -> None:
        if self.dir is not None:
            save_bundle(bundle, self.dir / f"{self.stage}-final.safetensors")


def _optimizer(params, cfg: TrainingConfig):
    return torch.optim.Adam(params, lr=cfg.learning_rate, betas=ADAM_BETAS, weight_decay=0.0)


def _optimizer_manifest(cfg: TrainingConfig) -> dict:
    return {"name": "adam", "lr": cfg.learning_rate, "betas": list(ADAM_BETAS), "weight_decay": 0.0}


def _load_style(cfg: TrainingConfig) -> torch.Tensor:
    return load_image(cfg.style_image, size=cfg.resolution).unsqueeze(0)


def train_drafting(cfg: TrainingConfig, extractor: Extractor | None = None,
                   loss_log: LossLog | None = None) -> ModelBundle:
    """Optimise the drafting decoder on ``cfg.resolution`` crops; the encoder stays frozen."""
    if cfg.level != 0:
        raise ConfigurationError(f"train_drafting needs stage 'draft', got {cfg.stage!r}")
    torch.manual_seed(cfg.seed)
    sampler = torch.Generator().manual_seed(cfg.seed + 1)
    extractor = extractor if extractor is not None else load_extractor(cfg.extractor_weights)
    schedule = LayerSchedule()

    style = _load_style(cfg)
    style_ctx = build_style_context(extractor, style)
    with torch.no_grad():
        style_feats = extract(extractor, style, schedule.style_layers)

    net = DraftingNet(extractor)
    opt = _optimizer(net.decoder.parameters(), cfg)
    manifest = {
        "style_image_sha256": file_sha256(cfg.style_image),
        "stage_resolutions": {"draft": cfg.resolution, "revision": {}},
        "configs": {"draft": cfg.snapshot()},
        "optimizer": _optimizer_manifest(cfg),
    }

    def make_bundle():
        return ModelBundle.from_models(net, style_ctx, manifest=manifest)

    own_log = loss_log is None
    loss_log = loss_log or LossLog(cfg.log_path)
    ckpt = Checkpointer(cfg)
    try:
        stream = iterate_content(cfg.content_dir, cfg.resolution, cfg.batch_size, cfg.seed) if cfg.iterations else None
        for step in range(1, cfg.iterations + 1):
            content = next(stream)
            output = draft_forward(content, style_ctx, net)
            with torch.no_grad():
                content_feats = extract(extractor, content, schedule.content_layers)
            output_feats = extract(extractor, output, schedule.all_layers)
            terms = draft_loss_from_features(content_feats, style_feats, output_feats, cfg.weights,
                                             schedule, cfg.max_positions, sampler)
            components = terms.components()
            _check_finite(components, step)
            opt.zero_grad(set_to_none=True)
            terms.total.backward()
            opt.step()
            loss_log.write(step, components)
            if step % 50 == 0:
                log.info("draft step %d total %.4f", step, components["total"])
            ckpt.maybe_save(step, make_bundle)
    finally:
        if own_log:
            loss_log.close()
    bundle = make_bundle()
    ckpt.final(bundle)
    return bundle


def train_revision(cfg: TrainingConfig, prior: ModelBundle, level: int | None = None,
                   loss_log: LossLog | None = None) -> ModelBundle:
    """Train revision level ``level`` (default: the config's stage) with all lower levels frozen.

    Each iteration takes one discriminator step and then one generator step.
    With a zero adversarial weight the discriminator is not built at all.
    """
    level = cfg.level if level is None else level
    if level < 1:
        raise ConfigurationError(f"revision level must be >= 1, got {level}")
    missing = [ns for ns in ["drafting", "style", "extractor"] + [f"revision/{j}" for j in range(1, level)]
               if not prior.has(ns)]
    if missing:
        raise ConfigurationError(f"prior bundle lacks namespace(s) {', '.join(m + '/' for m in missing)}")
    if cfg.resolution % (16 * 2**level):
        raise ConfigurationError(f"resolution {cfg.resolution} is not divisible by {16 * 2**level}")

    torch.manual_seed(cfg.seed)
    sampler = torch.Generator().manual_seed(cfg.seed + 1)
    schedule = LayerSchedule()
    extractor = prior.extractor()
    drafting = prior.drafting(extractor).requires_grad_(False).eval()
    frozen = [prior.revision(j).requires_grad_(False).eval() for j in range(1, level)]
    style_ctx = prior.style_context()

    style = _load_style(cfg)
    with torch.no_grad():
        style_feats = extract(extractor, style, schedule.style_layers)

    beta = cfg.weights.adversarial
    rev = RevisionNet()
    disc = PatchDiscriminator() if beta > 0 else None
    opt_g = _optimizer(rev.parameters(), cfg)
    opt_d = _optimizer(disc.parameters(), cfg) if disc is not None else None

    configs = dict(prior.manifest.get("configs", {}), **{f"revision-{level}": cfg.snapshot()})
    updates = {"configs": configs, "optimizer": _optimizer_manifest(cfg)}

    def make_bundle():
        return prior.with_revision(level, rev, disc, cfg.resolution, **updates)

    own_log = loss_log is None
    loss_log = loss_log or LossLog(cfg.log_path)
    ckpt = Checkpointer(cfg)
    try:
        stream = iterate_content(cfg.content_dir, cfg.resolution, cfg.batch_size, cfg.seed) if cfg.iterations else None
        for step in range(1, cfg.iterations + 1):
            content = next(stream)
            with torch.no_grad():
                pyr = decompose(content, level + 1)
                current = draft_forward(pyr.base, style_ctx, drafting)
                for j, net in enumerate(frozen):
                    up = upsample(current)
                    current = up + revise_forward(pyr.residuals[j], up, net)
                up = upsample(current)
            output = up + revise_forward(pyr.residuals[level - 1], up, rev)

            adv_d = None
            if disc is not None:
                try:
                    adv_d = discriminator_adversarial_loss(disc_forward(style, disc),
                                                           disc_forward(output.detach(), disc))
                except ParameterError as exc:
                    raise TrainingError(f"discriminator step {step}: {exc}") from exc
                _check_finite({"adv_d": float(adv_d.detach())}, step)
                opt_d.zero_grad(set_to_none=True)
                adv_d.backward()
                opt_d.step()

            with torch.no_grad():
                content_feats = extract(extractor, content, schedule.content_layers)
            output_feats = extract(extractor, output, schedule.all_layers)
            terms = draft_loss_from_features(content_feats, style_feats, output_feats, cfg.weights,
                                             schedule, cfg.max_positions, sampler)
            total = terms.total
            components = terms.components()
            components["base"] = components.pop("total")
            if disc is not None:
                try:
                    adv_g = generator_adversarial_loss(disc_forward(output, disc))
                except ParameterError as exc:
                    raise TrainingError(f"generator step {step}: {exc}") from exc
                total = total + beta * adv_g
                components["adv_g"] = float(adv_g.detach())
                components["adv_d"] = float(adv_d.detach())
            components["total"] = float(total.detach())
            _check_finite(components, step)
            opt_g.zero_grad(set_to_none=True)
            total.backward()
            opt_g.step()
            loss_log.write(step, components)
            if step % 50 == 0:
                log.info("revision-%d step %d total %.4f", level, step, components["total"])
            ckpt.maybe_save(step, make_bundle)
    finally:
        if own_log:
            loss_log.close()
    bundle = make_bundle()
    ckpt.final(bundle)
    return bundle
