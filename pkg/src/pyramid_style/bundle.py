"""Versioned model bundles: every trained parameter plus a JSON manifest.

Tensor namespaces inside the archive::

    extractor/conv<tag>.{weight,bias}     frozen encoder
    style/<tap>/{mean,std}                style statistics for AdaIN
    drafting/<decoder param>              drafting decoder
    revision/<k>/<param>                  revision level k (1-based)
    discriminator/<k>/<param>             discriminator used to train level k
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from .archive import payload_digest, read_archive, read_manifest, write_archive
from .discriminator import PatchDiscriminator
from .drafting import DraftingNet, StyleContext
from .errors import ConfigurationError, IncompatibleBundleError
from .features import Extractor
from .revision import CONCAT_ORDER, RevisionNet, StylizationStack

FORMAT_VERSION = 1


def checksum(obj) -> str:
    """SHA-256 over a module's state dict or a dict of tensors."""
    state = obj.state_dict() if isinstance(obj, nn.Module) else obj
    return payload_digest(state)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _prefixed(prefix: str, state: dict) -> dict:
    return {f"{prefix}/{k}": v.detach().clone() for k, v in state.items()}


@dataclass
class ModelBundle:
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def namespace(self, prefix: str) -> dict[str, torch.Tensor]:
        p = prefix.rstrip("/") + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}

    def has(self, prefix: str) -> bool:
        p = prefix.rstrip("/") + "/"
        return any(k.startswith(p) for k in self.tensors)

    @property
    def revision_levels(self) -> int:
        k = 0
        while self.has(f"revision/{k + 1}"):
            k += 1
        return k

    @property
    def base_resolution(self) -> int:
        return int(self.manifest.get("stage_resolutions", {}).get("draft", 128))

    def namespace_checksum(self, prefix: str) -> str:
        return checksum(self.namespace(prefix))

    # model reconstruction

    def extractor(self) -> Extractor:
        if not self.has("extractor"):
            raise ConfigurationError("bundle has no extractor/ namespace")
        return Extractor(self.namespace("extractor"))

    def style_context(self) -> StyleContext:
        if not self.has("style"):
            raise ConfigurationError("bundle has no style/ namespace")
        return StyleContext.from_tensors(self.namespace("style"))

    def drafting(self, extractor: Extractor | None = None) -> DraftingNet:
        if not self.has("drafting"):
            raise ConfigurationError("bundle has no drafting/ namespace")
        net = DraftingNet(extractor if extractor is not None else self.extractor())
        net.decoder.load_state_dict(self.namespace("drafting"))
        return net

    def revision(self, level: int) -> RevisionNet:
        if not self.has(f"revision/{level}"):
            raise ConfigurationError(
                f"bundle has no revision/{level}/ namespace (available levels: 1..{self.revision_levels})"
            )
        net = RevisionNet()
        net.load_state_dict(self.namespace(f"revision/{level}"))
        return net

    def discriminator(self, level: int) -> PatchDiscriminator:
        net = PatchDiscriminator()
        net.load_state_dict(self.namespace(f"discriminator/{level}"))
        return net

    def stack(self, levels: int | None = None, extractor: Extractor | None = None) -> StylizationStack:
        available = self.revision_levels
        levels = available if levels is None else levels
        if levels > available:
            raise ConfigurationError(
                f"bundle provides {available} revision level(s) (0..{available}); {levels} requested"
            )
        order = self.manifest.get("concat_order")
        if order is not None and tuple(order) != CONCAT_ORDER:
            raise ConfigurationError(f"unsupported revision input order {order}")
        drafting = self.drafting(extractor)
        revisions = [self.revision(k) for k in range(1, levels + 1)]
        stack = StylizationStack(drafting, self.style_context(), revisions, self.base_resolution)
        stack.eval()
        return stack

    # construction

    @classmethod
    def from_models(cls, drafting: DraftingNet, style: StyleContext, revisions=(), discriminators=(),
                    manifest: dict | None = None) -> "ModelBundle":
        tensors = {}
        tensors.update(_prefixed("extractor", drafting.encoder.weights()))
        tensors.update(_prefixed("style", style.to_tensors()))
        tensors.update(_prefixed("drafting", drafting.decoder.state_dict()))
        for k, net in enumerate(revisions, start=1):
            tensors.update(_prefixed(f"revision/{k}", net.state_dict()))
        for k, net in enumerate(discriminators, start=1):
            if net is not None:
                tensors.update(_prefixed(f"discriminator/{k}", net.state_dict()))
        m = {
            "format_version": FORMAT_VERSION,
            "concat_order": list(CONCAT_ORDER),
            "stage_resolutions": {"draft": 128, "revision": {}},
        }
        m.update(manifest or {})
        b = cls(tensors, m)
        b.manifest["extractor_sha256"] = b.namespace_checksum("extractor")
        return b

    def with_revision(self, level: int, net: RevisionNet, disc: PatchDiscriminator | None,
                      resolution: int, **manifest_updates) -> "ModelBundle":
        tensors = {k: v for k, v in self.tensors.items()
                   if not k.startswith(f"revision/{level}/") and not k.startswith(f"discriminator/{level}/")}
        tensors.update(_prefixed(f"revision/{level}", net.state_dict()))
        if disc is not None:
            tensors.update(_prefixed(f"discriminator/{level}", disc.state_dict()))
        manifest = dict(self.manifest)
        res = dict(manifest.get("stage_resolutions", {}))
        res["revision"] = dict(res.get("revision", {}), **{str(level): resolution})
        manifest["stage_resolutions"] = res
        manifest.update(manifest_updates)
        return ModelBundle(tensors, manifest)


def save_bundle(bundle: ModelBundle, path) -> None:
    manifest = dict(bundle.manifest, format_version=bundle.manifest.get("format_version", FORMAT_VERSION))
    write_archive(path, bundle.tensors, manifest)


def load_bundle(path) -> ModelBundle:
    """Load a bundle; IncompatibleBundleError on version mismatch, IntegrityError on corruption."""
    manifest = read_manifest(path)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise IncompatibleBundleError(
            f"{path}: bundle format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )
    tensors, manifest = read_archive(path)
    for key in ("payload_sha256", "manifest_sha256"):
        manifest.pop(key, None)
    return ModelBundle(tensors, manifest)
