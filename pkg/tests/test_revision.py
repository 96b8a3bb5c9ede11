import pytest
import torch

from pyramid_style import (
    ConfigurationError,
    DimensionError,
    DraftingNet,
    RevisionNet,
    StylizationStack,
    build_style_context,
    decompose,
    draft_forward,
    revise_forward,
    stylize_pyramid,
    upsample,
)
from pyramid_style.revision import CONCAT_ORDER


def rand(*shape, seed=0):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed))


def perturbed_revision(seed):
    torch.manual_seed(seed)
    net = RevisionNet()
    with torch.no_grad():
        net.conv3b.weight.normal_(0, 0.05)
        net.conv3b.bias.normal_(0, 0.05)
    return net


@pytest.fixture(scope="module")
def stack(extractor):
    torch.manual_seed(1)
    drafting = DraftingNet(extractor)
    style = build_style_context(extractor, rand(1, 3, 64, 64, seed=50))
    return StylizationStack(drafting, style, [perturbed_revision(2), perturbed_revision(3)], base_resolution=32)


class TestRevisionNet:
    def test_shapes(self):
        net = RevisionNet()
        with torch.no_grad():
            out, stages = revise_forward(rand(1, 3, 256, 256), rand(1, 3, 256, 256, seed=1), net, return_stages=True)
        assert out.shape == (1, 3, 256, 256)
        assert stages["r1"].shape == (1, 64, 128, 128)
        assert stages["r2"].shape == (1, 64, 128, 128)

    def test_zero_init_is_identity(self):
        net = RevisionNet()
        with torch.no_grad():
            out = revise_forward(rand(2, 3, 32, 32), rand(2, 3, 32, 32, seed=1), net)
        assert torch.equal(out, torch.zeros_like(out))

    def test_input_and_output_channels(self):
        net = RevisionNet()
        assert net.conv1a.in_channels == 6
        assert net.conv3b.out_channels == 3
        assert CONCAT_ORDER == ("residual", "draft_up")

    def test_concat_order(self):
        net = perturbed_revision(0)
        r, d = rand(1, 3, 16, 16), rand(1, 3, 16, 16, seed=1)
        with torch.no_grad():
            assert torch.equal(revise_forward(r, d, net), net(torch.cat([r, d], dim=1)))
            assert not torch.equal(revise_forward(r, d, net), revise_forward(d, r, net))

    def test_deterministic(self):
        net = perturbed_revision(1)
        r, d = rand(3, 16, 16), rand(3, 16, 16, seed=1)
        with torch.no_grad():
            assert torch.equal(revise_forward(r, d, net), revise_forward(r, d, net))

    def test_parameter_count_is_resolution_free(self):
        net = RevisionNet()
        count = sum(p.numel() for p in net.parameters())
        with torch.no_grad():
            revise_forward(rand(1, 3, 16, 16), rand(1, 3, 16, 16), net)
            revise_forward(rand(1, 3, 64, 32), rand(1, 3, 64, 32), net)
        assert sum(p.numel() for p in net.parameters()) == count

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            revise_forward(rand(1, 3, 16, 16), rand(1, 3, 32, 32), RevisionNet())

    def test_odd(self):
        with pytest.raises(DimensionError):
            revise_forward(rand(1, 3, 15, 16), rand(1, 3, 15, 16), RevisionNet())


class TestStylizePyramid:
    def test_zero_levels_equals_draft(self, stack):
        x = rand(1, 3, 32, 32, seed=4)
        with torch.no_grad():
            expected = draft_forward(x, stack.style, stack.drafting).clamp(0, 1)
            assert torch.equal(stylize_pyramid(x, stack, levels=0), expected)

    def test_zero_residual_passes_upsampled_draft(self, extractor):
        stack = StylizationStack(DraftingNet(extractor), build_style_context(extractor, rand(1, 3, 32, 32)),
                                 [RevisionNet()])
        x = rand(1, 3, 64, 64, seed=5)
        with torch.no_grad():
            out = stylize_pyramid(x, stack, clamp=False)
            draft = draft_forward(decompose(x, 2).base, stack.style, stack.drafting)
        assert torch.allclose(out, upsample(draft), atol=1e-6)

    def test_level_sizes_128_256_512(self, stack):
        x = rand(1, 3, 512, 512, seed=6)
        with torch.no_grad():
            out, trace = stylize_pyramid(x, stack, return_levels=True)
        assert [o.shape[-1] for o in trace["outputs"]] == [128, 256, 512]
        assert out.shape == x.shape

    def test_residuality(self, stack):
        x = rand(2, 3, 128, 128, seed=7)
        with torch.no_grad():
            _, trace = stylize_pyramid(x, stack, return_levels=True, clamp=False)
        outs = trace["outputs"]
        for k in range(stack.levels):
            diff = outs[k + 1] - upsample(outs[k])
            assert torch.allclose(diff, trace["residuals"][k], atol=1e-6)
            assert trace["residuals"][k].abs().max() > 0

    def test_shape_closure_non_square(self, stack):
        x = rand(3, 64, 192, seed=8)
        with torch.no_grad():
            assert stylize_pyramid(x, stack).shape == x.shape

    def test_output_is_clamped_by_default(self, stack):
        with torch.no_grad():
            out = stylize_pyramid(rand(1, 3, 64, 64), stack)
        assert out.min() >= 0 and out.max() <= 1

    def test_timings(self, stack):
        t = {}
        with torch.no_grad():
            stylize_pyramid(rand(1, 3, 64, 64), stack, timings=t)
        assert set(t) == {"pyramid", "draft", "revision-1", "revision-2"}

    def test_resolutions(self, stack):
        assert stack.resolutions() == [32, 64, 128]

    def test_too_many_levels(self, stack):
        with pytest.raises(ConfigurationError):
            stylize_pyramid(rand(1, 3, 128, 128), stack, levels=3)

    def test_indivisible_content(self, stack):
        with pytest.raises(ConfigurationError):
            stylize_pyramid(rand(1, 3, 96, 96), stack)
