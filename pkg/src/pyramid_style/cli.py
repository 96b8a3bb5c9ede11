"""Command line: train stages, stylize images and videos, benchmark inference.

Exit codes: 0 success, 1 usage/configuration, 2 data, 3 integrity.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import __version__
from .bundle import load_bundle, save_bundle
from .config import ENV_PREFIX, load_config
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    IncompatibleBundleError,
    IntegrityError,
    LoadError,
    StyleTransferError,
    TrainingError,
)
from .features import from_torchvision_vgg19, random_weights, save_extractor_weights
from .imagery import from_uint8, load_image, to_uint8
from .revision import stylize_pyramid

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTEGRITY = 0, 1, 2, 3

# Published single-image GPU timings (Titan X), printed as context only.
REFERENCE_SECONDS = {256: 0.008, 512: 0.009}

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}

log = logging.getLogger("pyramid_style")


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _add_training_flags(p):
    p.add_argument("--config", help="TOML config file; flags override it")
    p.add_argument("--content-dir")
    p.add_argument("--style-image")
    p.add_argument("--extractor-weights")
    p.add_argument("--resolution", type=int)
    p.add_argument("--iterations", type=_nonneg_int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--self-similarity-weight", type=float)
    p.add_argument("--remd-weight", type=float)
    p.add_argument("--style-weight", type=float)
    p.add_argument("--adversarial-weight", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--log-path")
    p.add_argument("--max-positions", type=int)
    p.add_argument("--out", required=True, help="bundle file to write")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="pyramid-style",
        description="Laplacian-pyramid style transfer. "
        f"Training options may also be set through {ENV_PREFIX}<FIELD> environment variables.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-draft", help="train the drafting network")
    _add_training_flags(p)

    p = sub.add_parser("train-revision", help="train one revision level on top of a bundle")
    _add_training_flags(p)
    p.add_argument("--prior", required=True, help="bundle holding the drafting net and lower levels")
    p.add_argument("--level", type=int, default=None, help="revision level to train (default: next free)")

    p = sub.add_parser("stylize", help="stylize one image")
    p.add_argument("--bundle", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=_nonneg_int, default=None, help="revision levels to apply (default: all)")

    p = sub.add_parser("video", help="stylize a video (file or frame directory) frame by frame")
    p.add_argument("--bundle", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="video file (.avi/.mp4) or directory for PNG frames")
    p.add_argument("--levels", type=_nonneg_int, default=None)
    p.add_argument("--fps", type=float, default=25.0, help="frame rate when reading a frame directory")

    p = sub.add_parser("benchmark", help="time end-to-end inference")
    p.add_argument("--bundle", required=True)
    p.add_argument("--resolution", type=int, choices=(256, 512), required=True)
    p.add_argument("--iters", type=_nonneg_int, default=20)
    p.add_argument("--warmup", type=_nonneg_int, default=3)
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("extractor", help="write a feature-extractor weights archive")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--from-torchvision", metavar="PTH", help="torchvision vgg19 state dict (.pth)")
    src.add_argument("--random-seed", type=int, help="Kaiming-initialised stand-in weights")
    p.add_argument("--out", required=True)
    return parser


# ---------------------------------------------------------------- training

_TRAINING_KEYS = (
    "content_dir", "style_image", "extractor_weights", "resolution", "iterations", "batch_size",
    "learning_rate", "self_similarity_weight", "remd_weight", "style_weight", "adversarial_weight",
    "seed", "checkpoint_every", "checkpoint_dir", "log_path", "max_positions",
)


def _training_config(args, stage: str, defaults: dict | None = None):
    overrides = {k: getattr(args, k) for k in _TRAINING_KEYS if getattr(args, k) is not None}
    overrides["stage"] = stage
    return load_config(args.config, overrides, defaults=defaults)


def cmd_train_draft(args) -> int:
    from .training import train_drafting

    cfg = _training_config(args, "draft")
    bundle = train_drafting(cfg)
    save_bundle(bundle, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train_revision(args) -> int:
    from .training import train_revision

    prior = load_bundle(args.prior)
    level = args.level if args.level is not None else prior.revision_levels + 1
    cfg = _training_config(args, f"revision-{level}", {"resolution": prior.base_resolution * 2**level})
    bundle = train_revision(cfg, prior, level)
    save_bundle(bundle, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- inference

def pad_to_multiple(img: torch.Tensor, multiple: int):
    """Reflection-pad ``(3, H, W)`` on the bottom/right up to a multiple; returns (padded, (h, w))."""
    h, w = img.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if not ph and not pw:
        return img, (h, w)
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(img.unsqueeze(0), (0, pw, 0, ph), mode=mode).squeeze(0), (h, w)


class Stylizer:
    """A loaded stack plus the padding policy shared by the image and video commands."""

    def __init__(self, bundle_path, levels: int | None):
        bundle = load_bundle(bundle_path)
        available = bundle.revision_levels
        if levels is not None and levels > available:
            raise ConfigurationError(
                f"--levels {levels} requested but the bundle has revision levels 0..{available}"
            )
        self.stack = bundle.stack(levels)
        self.levels = self.stack.levels
        self.multiple = 16 * 2**self.levels

    @torch.inference_mode()
    def __call__(self, img: torch.Tensor, timings: dict | None = None):
        padded, (h, w) = pad_to_multiple(img, self.multiple)
        out = stylize_pyramid(padded, self.stack, clamp=True, timings=timings)
        pad_note = None if padded.shape == img.shape else (tuple(img.shape[-2:]), tuple(padded.shape[-2:]))
        return out[..., :h, :w], pad_note


def _write_image_atomic(img: torch.Tensor, path: Path, info: dict) -> None:
    from PIL import Image as PILImage
    from PIL.PngImagePlugin import PngInfo

    tmp = path.with_name(f".{path.name}.partial")
    pil = PILImage.fromarray(to_uint8(img))
    fmt = {".jpg": "JPEG", ".jpeg": "JPEG"}.get(path.suffix.lower(), "PNG")
    if fmt == "PNG":
        meta = PngInfo()
        for k, v in info.items():
            meta.add_text(f"pyramid_style:{k}", str(v))
        pil.save(tmp, format=fmt, pnginfo=meta)
    else:
        pil.save(tmp, format=fmt, quality=95)
    os.replace(tmp, path)


def cmd_stylize(args) -> int:
    timings = {}
    t0 = time.perf_counter()
    stylizer = Stylizer(args.bundle, args.levels)
    timings["load"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    content = load_image(args.content)
    timings["decode"] = time.perf_counter() - t0
    out, pad_note = stylizer(content, timings)
    info = {"levels": stylizer.levels}
    if pad_note:
        info["padding"] = f"{pad_note[0][0]}x{pad_note[0][1]}->{pad_note[1][0]}x{pad_note[1][1]}"
        print(f"padded {info['padding']} (reflection) and cropped back")
    t0 = time.perf_counter()
    _write_image_atomic(out, Path(args.out), info)
    timings["encode"] = time.perf_counter() - t0
    h, w = out.shape[-2:]
    print(f"stylized {args.content} -> {args.out} ({w}x{h}, {stylizer.levels} revision level(s))")
    for stage, secs in timings.items():
        print(f"  {stage:<12s} {secs * 1000:9.2f} ms")
    return EXIT_OK


def _frame_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_frames(source, default_fps: float = 25.0):
    """Return (fps, iterator of (index, (3, H, W) tensor)); decode errors name the frame index."""
    import cv2

    source = Path(source)
    if source.is_dir():
        files = _frame_files(source)
        if not files:
            raise DataError(f"no frames in {source}")

        def gen():
            for i, f in enumerate(files):
                try:
                    yield i, load_image(f)
                except DataError as exc:
                    raise DataError(f"frame {i}: {exc}") from exc

        return default_fps, gen()

    cap = cv2.VideoCapture(str(source))
    if not cap.isOpened():
        raise DataError(f"cannot open video {source}")
    fps = cap.get(cv2.CAP_PROP_FPS) or default_fps
    expected = int(cap.get(cv2.CAP_PROP_FRAME_COUNT) or 0)

    def gen():
        i = 0
        try:
            while True:
                ok, frame = cap.read()
                if not ok:
                    if i < expected:
                        raise DataError(f"frame {i}: decode failed ({expected} frames expected)")
                    break
                yield i, from_uint8(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
                i += 1
            if i == 0:
                raise DataError(f"frame 0: no decodable frames in {source}")
        finally:
            cap.release()

    return fps, gen()


class FrameWriter:
    def __init__(self, target, fps: float):
        self.target = Path(target)
        self.fps = fps
        self.to_dir = self.target.suffix.lower() not in {".avi", ".mp4", ".mov", ".mkv"}
        self.writer = None
        self.count = 0
        if self.to_dir:
            self.target.mkdir(parents=True, exist_ok=True)

    def write(self, img: torch.Tensor) -> None:
        import cv2

        arr = to_uint8(img)
        if self.to_dir:
            _write_image_atomic(img, self.target / f"frame_{self.count:06d}.png", {})
        else:
            if self.writer is None:
                fourcc = cv2.VideoWriter_fourcc(*("mp4v" if self.target.suffix.lower() == ".mp4" else "MJPG"))
                h, w = arr.shape[:2]
                self.writer = cv2.VideoWriter(str(self.target), fourcc, self.fps, (w, h))
                if not self.writer.isOpened():
                    raise DataError(f"cannot open video writer for {self.target}")
            self.writer.write(cv2.cvtColor(arr, cv2.COLOR_RGB2BGR))
        self.count += 1

    def close(self) -> None:
        if self.writer is not None:
            self.writer.release()


def cmd_video(args) -> int:
    stylizer = Stylizer(args.bundle, args.levels)
    fps, frames = read_frames(args.input, args.fps)
    writer = FrameWriter(args.out, fps)
    t0 = time.perf_counter()
    try:
        for _, frame in frames:
            out, _ = stylizer(frame)
            writer.write(out)
    finally:
        writer.close()
    elapsed = time.perf_counter() - t0
    print(f"stylized {writer.count} frame(s) at {fps:g} fps -> {args.out} "
          f"({elapsed / max(writer.count, 1) * 1000:.1f} ms/frame)")
    return EXIT_OK


def device_description() -> str:
    cpu = platform.processor() or platform.machine()
    return f"cpu ({cpu}), {torch.get_num_threads()} thread(s), torch {torch.__version__}"


def run_benchmark(bundle_path, resolution: int, iters: int, warmup: int) -> dict:
    """Time ``stylize_pyramid`` on a random image; decode/encode are excluded."""
    bundle = load_bundle(bundle_path)
    base = bundle.base_resolution
    ratio = resolution / base
    levels = int(round(math.log2(ratio))) if ratio >= 1 else -1
    if levels < 0 or base * 2**levels != resolution:
        raise ConfigurationError(f"{resolution}px is not a power-of-two multiple of the {base}px draft")
    if levels > bundle.revision_levels:
        raise ConfigurationError(
            f"{resolution}px needs {levels} revision level(s); bundle has {bundle.revision_levels}"
        )
    stack = bundle.stack(levels)
    x = torch.rand(1, 3, resolution, resolution, generator=torch.Generator().manual_seed(0))
    times = []
    with torch.inference_mode():
        for _ in range(warmup):
            stylize_pyramid(x, stack)
        for _ in range(iters):
            t0 = time.perf_counter()
            stylize_pyramid(x, stack)
            times.append(time.perf_counter() - t0)
    report = {
        "resolution": resolution,
        "levels": levels,
        "iters": iters,
        "warmup": warmup,
        "device": device_description(),
        "reference_seconds": REFERENCE_SECONDS.get(resolution),
    }
    if times:
        arr = np.asarray(times)
        report.update(
            mean=float(arr.mean()),
            median=float(statistics.median(times)),
            p95=float(np.percentile(arr, 95)),
            images_per_sec=float(1.0 / arr.mean()),
        )
    return report


def cmd_benchmark(args) -> int:
    report = run_benchmark(args.bundle, args.resolution, args.iters, args.warmup)
    if args.json:
        print(json.dumps(report))
        return EXIT_OK
    ref = report["reference_seconds"]
    print(f"benchmark {report['resolution']}px, {report['levels']} revision level(s), device: {report['device']}")
    print(f"reference (context only, not comparable across hardware): published Titan X GPU time {ref} s/image")
    if report["iters"] == 0:
        print(f"warmup only ({report['warmup']} run(s)); no timed iterations, no statistics")
        return EXIT_OK
    print(f"  mean    {report['mean']:.4f} s")
    print(f"  median  {report['median']:.4f} s")
    print(f"  p95     {report['p95']:.4f} s")
    print(f"  throughput {report['images_per_sec']:.2f} images/s over {report['iters']} iteration(s)")
    return EXIT_OK


def cmd_extractor(args) -> int:
    if args.from_torchvision:
        state = torch.load(args.from_torchvision, map_location="cpu", weights_only=True)
        weights = from_torchvision_vgg19(state)
    else:
        weights = random_weights(args.random_seed)
    save_extractor_weights(weights, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {
    "train-draft": cmd_train_draft,
    "train-revision": cmd_train_revision,
    "stylize": cmd_stylize,
    "video": cmd_video,
    "benchmark": cmd_benchmark,
    "extractor": cmd_extractor,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (IntegrityError, IncompatibleBundleError, LoadError) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (DataError, DimensionError, TrainingError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, StyleTransferError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
