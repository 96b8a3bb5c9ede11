import json

import numpy as np
import pytest
import torch
from PIL import Image

from pyramid_style import load_bundle, load_image, read_loss_log, save_image, stylize_pyramid
from pyramid_style.cli import main, pad_to_multiple, read_frames, run_benchmark


def write_content(path, size, seed=0):
    img = torch.rand(3, *size, generator=torch.Generator().manual_seed(seed))
    save_image(img, path)
    return path


def png_array(path):
    return np.asarray(Image.open(path).convert("RGB"))


class TestStylize:
    def test_draft_only(self, tmp_path, bundle_path, capsys):
        src = write_content(tmp_path / "in.png", (128, 128))
        out = tmp_path / "out.png"
        assert main(["stylize", "--bundle", str(bundle_path), "--content", str(src), "--out", str(out),
                     "--levels", "0"]) == 0
        assert png_array(out).shape == (128, 128, 3)
        text = capsys.readouterr().out
        assert "draft" in text and "ms" in text and "revision-1" not in text

    def test_two_levels_512(self, tmp_path, bundle_path, capsys):
        src = write_content(tmp_path / "in.png", (512, 512))
        out = tmp_path / "out.png"
        assert main(["stylize", "--bundle", str(bundle_path), "--content", str(src), "--out", str(out),
                     "--levels", "2"]) == 0
        assert png_array(out).shape == (512, 512, 3)
        assert "revision-2" in capsys.readouterr().out
        assert Image.open(out).text["pyramid_style:levels"] == "2"

    def test_matches_library_path(self, tmp_path, bundle_path):
        src = write_content(tmp_path / "in.png", (256, 256), seed=3)
        out = tmp_path / "out.png"
        main(["stylize", "--bundle", str(bundle_path), "--content", str(src), "--out", str(out), "--levels", "1"])
        with torch.no_grad():
            expected = stylize_pyramid(load_image(src), load_bundle(bundle_path).stack(1))
        assert np.array_equal(png_array(out), (expected.clamp(0, 1) * 255).round().byte().permute(1, 2, 0).numpy())

    def test_pure_function(self, tmp_path, bundle_path):
        src = write_content(tmp_path / "in.png", (128, 128))
        for name in ("a.png", "b.png"):
            main(["stylize", "--bundle", str(bundle_path), "--content", str(src), "--out", str(tmp_path / name)])
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_padding_is_reported_and_cropped(self, tmp_path, bundle_path, capsys):
        src = write_content(tmp_path / "in.png", (100, 150))
        out = tmp_path / "out.png"
        assert main(["stylize", "--bundle", str(bundle_path), "--content", str(src), "--out", str(out),
                     "--levels", "1"]) == 0
        assert png_array(out).shape == (100, 150, 3)
        assert "padded 100x150->128x160" in capsys.readouterr().out
        assert Image.open(out).text["pyramid_style:padding"] == "100x150->128x160"

    def test_missing_levels(self, tmp_path, bundle_path, capsys):
        src = write_content(tmp_path / "in.png", (128, 128))
        out = tmp_path / "out.png"
        code = main(["stylize", "--bundle", str(bundle_path), "--content", str(src), "--out", str(out),
                     "--levels", "5"])
        assert code == 1
        assert "0..2" in capsys.readouterr().err
        assert not out.exists()

    def test_corrupted_bundle(self, tmp_path, bundle_path, capsys):
        bad = tmp_path / "bad.safetensors"
        bad.write_bytes(bundle_path.read_bytes()[:5000])
        src = write_content(tmp_path / "in.png", (128, 128))
        out = tmp_path / "out.png"
        assert main(["stylize", "--bundle", str(bad), "--content", str(src), "--out", str(out)]) == 3
        assert "integrity" in capsys.readouterr().err
        assert not out.exists()
        assert list(tmp_path.glob("*.partial")) == []

    def test_bad_content(self, tmp_path, bundle_path):
        bad = tmp_path / "in.png"
        bad.write_bytes(b"nope")
        assert main(["stylize", "--bundle", str(bundle_path), "--content", str(bad),
                     "--out", str(tmp_path / "o.png")]) == 2

    def test_usage_errors(self, capsys):
        assert main(["stylize", "--bundle", "x"]) == 1
        assert main(["nonsense"]) == 1
        assert main(["stylize", "--bundle", "x", "--content", "y", "--out", "z", "--levels", "-1"]) == 1


def test_pad_to_multiple():
    img = torch.arange(2 * 3 * 5, dtype=torch.float32).reshape(1, 5, 6).expand(3, 5, 6)
    padded, (h, w) = pad_to_multiple(img, 4)
    assert padded.shape == (3, 8, 8) and (h, w) == (5, 6)
    assert torch.equal(padded[:, :5, :6], img)
    # reflection mirrors the rows above the edge
    assert torch.equal(padded[:, 5, :6], img[:, 3])
    same, _ = pad_to_multiple(torch.zeros(3, 8, 8), 4)
    assert same.shape == (3, 8, 8)


class TestVideo:
    def frames_dir(self, tmp_path, count, identical=False, size=(128, 128)):
        d = tmp_path / "frames"
        d.mkdir()
        for i in range(count):
            write_content(d / f"{i:03d}.png", size, seed=0 if identical else i)
        return d

    def test_single_frame_matches_stylize(self, tmp_path, bundle_path):
        d = self.frames_dir(tmp_path, 1)
        assert main(["video", "--bundle", str(bundle_path), "--in", str(d), "--out", str(tmp_path / "o")]) == 0
        main(["stylize", "--bundle", str(bundle_path), "--content", str(d / "000.png"),
              "--out", str(tmp_path / "single.png")])
        assert np.array_equal(png_array(tmp_path / "o" / "frame_000000.png"), png_array(tmp_path / "single.png"))

    def test_identical_frames_stay_identical(self, tmp_path, bundle_path):
        d = self.frames_dir(tmp_path, 10, identical=True, size=(64, 96))
        assert main(["video", "--bundle", str(bundle_path), "--in", str(d), "--out", str(tmp_path / "o"),
                     "--levels", "1"]) == 0
        frames = [png_array(p) for p in sorted((tmp_path / "o").iterdir())]
        assert len(frames) == 10
        assert all(np.array_equal(f, frames[0]) for f in frames)
        assert frames[0].shape == (64, 96, 3)

    def test_corrupt_frame_is_named(self, tmp_path, bundle_path, capsys):
        d = self.frames_dir(tmp_path, 5)
        (d / "003.png").write_bytes(b"garbage")
        assert main(["video", "--bundle", str(bundle_path), "--in", str(d), "--out", str(tmp_path / "o")]) == 2
        assert "frame 3" in capsys.readouterr().err

    def test_video_file_round_trip(self, tmp_path, bundle_path):
        cv2 = pytest.importorskip("cv2")
        src = tmp_path / "in.avi"
        writer = cv2.VideoWriter(str(src), cv2.VideoWriter_fourcc(*"MJPG"), 12.0, (64, 64))
        for i in range(4):
            writer.write(np.full((64, 64, 3), 30 * i, dtype=np.uint8))
        writer.release()
        out = tmp_path / "out.avi"
        assert main(["video", "--bundle", str(bundle_path), "--in", str(src), "--out", str(out)]) == 0
        fps, frames = read_frames(out)
        frames = list(frames)
        assert len(frames) == 4 and fps == pytest.approx(12.0)
        assert frames[0][1].shape == (3, 64, 64)

    def test_unreadable_video(self, tmp_path, bundle_path):
        bad = tmp_path / "in.avi"
        bad.write_bytes(b"\0" * 100)
        assert main(["video", "--bundle", str(bundle_path), "--in", str(bad), "--out", str(tmp_path / "o")]) == 2


class TestBenchmark:
    @pytest.mark.parametrize("res", [256, 512])
    def test_report(self, bundle_path, res):
        r = run_benchmark(bundle_path, res, iters=2, warmup=1)
        assert r["levels"] == {256: 1, 512: 2}[res]
        assert r["mean"] > 0 and r["median"] > 0 and r["p95"] >= r["median"] * 0.5
        assert r["images_per_sec"] == pytest.approx(1 / r["mean"])
        assert r["reference_seconds"] == {256: 0.008, 512: 0.009}[res]

    def test_text_output(self, bundle_path, capsys):
        assert main(["benchmark", "--bundle", str(bundle_path), "--resolution", "256", "--iters", "1",
                     "--warmup", "0"]) == 0
        out = capsys.readouterr().out
        assert "published Titan X GPU time 0.008" in out
        assert "median" in out and "p95" in out and "images/s" in out and "device" in out

    def test_warmup_only(self, bundle_path, capsys):
        assert main(["benchmark", "--bundle", str(bundle_path), "--resolution", "256", "--iters", "0",
                     "--warmup", "1"]) == 0
        out = capsys.readouterr().out
        assert "warmup only" in out and "median" not in out

    def test_json(self, bundle_path, capsys):
        main(["benchmark", "--bundle", str(bundle_path), "--resolution", "256", "--iters", "1", "--json"])
        assert json.loads(capsys.readouterr().out)["iters"] == 1

    def test_consecutive_runs_agree(self, bundle_path):
        a = run_benchmark(bundle_path, 256, iters=7, warmup=1)
        b = run_benchmark(bundle_path, 256, iters=7, warmup=1)
        assert abs(a["median"] - b["median"]) <= 0.2 * min(a["median"], b["median"])

    def test_unsupported_resolution(self, bundle_path):
        assert main(["benchmark", "--bundle", str(bundle_path), "--resolution", "384"]) == 1

    def test_bundle_too_shallow(self, tmp_path, extractor, capsys):
        from helpers import make_bundle
        from pyramid_style import save_bundle

        p = tmp_path / "one.safetensors"
        save_bundle(make_bundle(extractor, levels=1), p)
        assert main(["benchmark", "--bundle", str(p), "--resolution", "512"]) == 1
        assert "bundle has 1" in capsys.readouterr().err


class TestTrainingCommands:
    def test_draft_then_revision(self, tmp_path, data_dir, capsys):
        common = ["--content-dir", str(data_dir / "content"), "--style-image", str(data_dir / "style.png"),
                  "--extractor-weights", str(data_dir / "vgg.safetensors"), "--batch-size", "1"]
        draft = tmp_path / "draft.safetensors"
        assert main(["train-draft", *common, "--resolution", "32", "--iterations", "2",
                     "--log-path", str(tmp_path / "d.log"), "--out", str(draft)]) == 0
        assert load_bundle(draft).base_resolution == 32
        assert len(read_loss_log(tmp_path / "d.log")) == 10

        rev = tmp_path / "rev.safetensors"
        assert main(["train-revision", *common, "--prior", str(draft), "--iterations", "1",
                     "--adversarial-weight", "0", "--out", str(rev)]) == 0
        b = load_bundle(rev)
        assert b.revision_levels == 1
        # default resolution doubles the draft's
        assert b.manifest["stage_resolutions"]["revision"]["1"] == 64
        assert not b.has("discriminator/1")

    def test_config_file_and_env(self, tmp_path, data_dir, monkeypatch):
        cfg = tmp_path / "train.toml"
        cfg.write_text(
            f'content_dir = "{data_dir / "content"}"\nstyle_image = "{data_dir / "style.png"}"\n'
            f'extractor_weights = "{data_dir / "vgg.safetensors"}"\nresolution = 32\niterations = 5\n'
        )
        monkeypatch.setenv("PYRAMID_STYLE_ITERATIONS", "1")
        monkeypatch.setenv("PYRAMID_STYLE_BATCH_SIZE", "1")
        out = tmp_path / "d.safetensors"
        assert main(["train-draft", "--config", str(cfg), "--log-path", str(tmp_path / "l.log"),
                     "--out", str(out)]) == 0
        assert {s for s, _, _ in read_loss_log(tmp_path / "l.log")} == {1}

    def test_bad_resolution(self, tmp_path, data_dir, capsys):
        code = main(["train-draft", "--content-dir", str(data_dir / "content"), "--style-image",
                     str(data_dir / "style.png"), "--resolution", "50", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "resolution" in capsys.readouterr().err

    def test_missing_content(self, tmp_path, data_dir):
        code = main(["train-draft", "--content-dir", str(tmp_path / "none"), "--style-image",
                     str(data_dir / "style.png"), "--extractor-weights", str(data_dir / "vgg.safetensors"),
                     "--resolution", "32", "--iterations", "1", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_bad_extractor(self, tmp_path, data_dir):
        bad = tmp_path / "vgg.safetensors"
        bad.write_bytes(b"junk")
        code = main(["train-draft", "--content-dir", str(data_dir / "content"), "--style-image",
                     str(data_dir / "style.png"), "--extractor-weights", str(bad),
                     "--resolution", "32", "--iterations", "1", "--out", str(tmp_path / "x")])
        assert code == 3

    def test_extractor_command(self, tmp_path):
        out = tmp_path / "vgg.safetensors"
        assert main(["extractor", "--random-seed", "3", "--out", str(out)]) == 0
        from pyramid_style import load_extractor

        load_extractor(out)

    def test_extractor_from_torchvision(self, tmp_path):
        torchvision = pytest.importorskip("torchvision")
        pth = tmp_path / "vgg19.pth"
        torch.save(torchvision.models.vgg19(weights=None).state_dict(), pth)
        out = tmp_path / "vgg.safetensors"
        assert main(["extractor", "--from-torchvision", str(pth), "--out", str(out)]) == 0
