import numpy as np
import pytest
import torch

from src.domain.models.diffusion_models import ConditionBundle, TimeVariantCondition
from src.domain.models.errors import InvalidArgumentError
from src.domain.models.mapping_models import DocumentImage
from src.domain.models.run_config import NetConfig
from src.infrastructure.diffusion_service import diffusion_loss
from src.infrastructure.net.dvd_network import (
    build_network,
    count_parameters,
    extract_features,
    parameter_breakdown,
)
from src.infrastructure.net.feature_extractors import heuristic_masks

from .conftest import textured_image


def random_inputs(cfg, batch=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    size = cfg.latent_size

    def grid(channels):
        return torch.randn(batch, channels, size, size, generator=g)

    cond = ConditionBundle(
        grid(cfg.feat_dim), grid(cfg.feat_dim), grid(cfg.feat_dim),
        TimeVariantCondition(grid(2), grid(cfg.feat_dim), valid=True),
    )
    t = torch.randint(1, 1001, (batch,), generator=g)
    return grid(2), t, cond


@pytest.fixture
def network(tiny_net):
    torch.manual_seed(0)
    return build_network(tiny_net).eval()


@pytest.mark.parametrize("latent", [8, 16, 32, 64])
def test_output_shape(latent):
    torch.manual_seed(0)
    cfg = NetConfig(latent_size=latent, dim=16, n_ceb=1, n_fgb=1, n_heads=2,
                    time_dim=16, feat_dim=8, input_size=64)
    net = build_network(cfg).eval()
    m_t, t, cond = random_inputs(cfg, batch=1)
    with torch.no_grad():
        assert net(m_t, t, cond).shape == (1, 2, latent, latent)
        images = torch.rand(1, 3, 96, 96)
        masks = torch.ones(1, 1, 96, 96)
        for features in net.extract_features(images, masks, masks):
            assert features.shape == (1, 8, latent, latent)


def test_batch_order_is_respected(network, tiny_net):
    m_t, t, cond = random_inputs(tiny_net, batch=3)
    order = torch.tensor([2, 0, 1])
    with torch.no_grad():
        out = network(m_t, t, cond)
        permuted = network(m_t[order], t[order], cond.select(order))
    assert torch.allclose(permuted, out[order], atol=1e-5)


def test_zeroed_refinement_matches_terminal_condition(network, tiny_net):
    m_t, t, cond = random_inputs(tiny_net)
    terminal = cond.with_refinement(TimeVariantCondition.empty(2, tiny_net.latent_size, tiny_net.feat_dim))
    with torch.no_grad():
        assert torch.equal(network(m_t, t, cond.ablate(["refinement"])), network(m_t, t, terminal))


def test_image_ablation_drops_dewarped_features_too(tiny_net):
    _, _, cond = random_inputs(tiny_net)
    ablated = cond.ablate(["image"])
    assert torch.count_nonzero(ablated.f_d) == 0
    assert torch.count_nonzero(ablated.r_t.f_dewarped) == 0
    assert torch.equal(ablated.r_t.m_prev, cond.r_t.m_prev) and ablated.r_t.valid
    assert torch.equal(ablated.f_m, cond.f_m)


def test_time_embedding_is_consumed(network, tiny_net):
    m_t, _, cond = random_inputs(tiny_net)
    with torch.no_grad():
        early = network(m_t, torch.full((2,), 1000), cond)
        late = network(m_t, torch.full((2,), 1), cond)
    assert not torch.allclose(early, late)


@pytest.mark.parametrize("stream", ["image", "foreground", "textline", "refinement"])
def test_every_stream_is_consumed(network, tiny_net, stream):
    m_t, t, cond = random_inputs(tiny_net)
    with torch.no_grad():
        full = network(m_t, t, cond)
        ablated = network(m_t, t, cond.ablate([stream]))
    assert (full - ablated).abs().max() > 1e-6


def test_every_part_receives_gradient(tiny_net):
    torch.manual_seed(1)
    net = build_network(tiny_net)
    images = torch.rand(2, 3, 32, 32)
    fg = torch.ones(2, 1, 32, 32)
    tl = (torch.rand(2, 1, 32, 32) > 0.6).float()
    f_d, f_m, f_l = net.extract_features(images, fg, tl)
    m_t, t, cond = random_inputs(tiny_net)
    cond = ConditionBundle(f_d, f_m, f_l, cond.r_t)
    diffusion_loss(torch.rand(2, 2, 8, 8), net(m_t, t, cond)).backward()
    for name, child in net.named_children():
        grads = [p.grad for p in child.parameters()]
        assert all(g is not None for g in grads), name
        assert sum(float(g.abs().sum()) for g in grads) > 0, name


def test_identical_inputs_give_identical_features(network):
    image = textured_image(size=48, seed=2, channels=3)
    fg, tl = heuristic_masks(image)
    with torch.no_grad():
        first = extract_features(network, image, fg, tl)
        second = extract_features(network, image, fg, tl)
    for a, b in zip(first, second):
        assert torch.equal(a, b)
        assert a.shape == (1, 8, 8, 8)


def test_zero_mask_gives_constant_features(network):
    image = textured_image(size=32, seed=1)
    zeros = np.zeros((32, 32), dtype=np.uint8)
    with torch.no_grad():
        _, f_m, _ = extract_features(network, image, zeros, zeros)
    flat = f_m[0].flatten(1)
    assert torch.allclose(flat, flat[:, :1].expand_as(flat), atol=1e-6)


def test_mask_shape_mismatch(network):
    image = textured_image(size=32)
    with pytest.raises(InvalidArgumentError):
        extract_features(network, image, np.ones((16, 16)), np.ones((16, 16)))


def test_condition_shape_mismatch(network, tiny_net):
    m_t, t, cond = random_inputs(tiny_net)
    with pytest.raises(InvalidArgumentError):
        network(m_t[:, :, :4, :4], t, cond)


def test_parameter_counts():
    toy = NetConfig.toy()
    assert count_parameters(toy) < 5_000_000
    breakdown = parameter_breakdown(toy)
    assert set(breakdown) == {"extractor", "latent_embed", "stream_embeds", "t_embedder",
                              "blocks", "fusion", "head"}
    assert sum(breakdown.values()) == count_parameters(toy)

    narrow = parameter_breakdown(NetConfig.toy(dim=32, n_heads=4))["blocks"]
    wide = parameter_breakdown(NetConfig.toy(dim=64, n_heads=4))["blocks"]
    assert 3.5 < wide / narrow <= 4.0


def test_block_counts_must_be_positive():
    with pytest.raises(InvalidArgumentError):
        count_parameters({"n_ceb": 0})
    with pytest.raises(InvalidArgumentError):
        build_network({"dim": 30, "n_heads": 4})


def test_heuristic_masks_find_dark_text():
    pixels = np.full((64, 64), 0.9)
    pixels[20:24, 8:56] = 0.1
    fg, tl = heuristic_masks(DocumentImage(pixels))
    assert fg.all()
    assert tl[21, 30] == 1
    assert tl[5, 5] == 0
