"""
DvD Network
x0-predicting denoiser over the latent coordinate grid.

Latent tokens (one per grid cell) pass through condition embedding blocks,
each time-modulated with four parallel cross-attentions over the image,
foreground, text-line and refinement streams, then through fusion
generation blocks (self-attention + feed-forward) and a three-layer head.
"""

import logging
import math
from typing import Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ...domain.models.diffusion_models import ConditionBundle
from ...domain.models.errors import InvalidArgumentError
from ...domain.models.mapping_models import DocumentImage
from ...domain.models.run_config import NetConfig
from ..run_config_service import parse_net_config
from .feature_extractors import MultiFeatureExtractor, image_to_tensor, mask_to_tensor

logger = logging.getLogger(__name__)

N_STREAMS = 4


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


def sincos_pos_embed_1d(embed_dim: int, pos: np.ndarray) -> np.ndarray:
    omega = np.arange(embed_dim // 2, dtype=np.float64)
    omega /= embed_dim / 2.0
    omega = 1.0 / 10000 ** omega
    out = np.einsum("m,d->md", pos.reshape(-1), omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def sincos_pos_embed_2d(embed_dim: int, grid_size: int) -> np.ndarray:
    """(grid_size * grid_size, embed_dim) fixed 2-D sine-cosine embedding, row-major tokens."""
    coords = np.arange(grid_size, dtype=np.float64)
    grid_w, grid_h = np.meshgrid(coords, coords)
    emb_h = sincos_pos_embed_1d(embed_dim // 2, grid_h)
    emb_w = sincos_pos_embed_1d(embed_dim // 2, grid_w)
    return np.concatenate([emb_h, emb_w], axis=1)


class TimestepEmbedder(nn.Module):
    """Sinusoidal timestep features projected by a two-layer MLP."""

    def __init__(self, hidden_size: int, frequency_embedding_size: int = 256):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_size),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size),
        )
        self.frequency_embedding_size = frequency_embedding_size

    @staticmethod
    def timestep_embedding(t: torch.Tensor, dim: int, max_period: int = 10000) -> torch.Tensor:
        half = dim // 2
        freqs = torch.exp(
            -math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half
        )
        args = t[:, None].float() * freqs[None]
        embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        if dim % 2:
            embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
        return embedding

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        freq = self.timestep_embedding(t, self.frequency_embedding_size)
        return self.mlp(freq.to(self.mlp[0].weight.dtype))


class Attention(nn.Module):
    """Multi-head attention; self-attention when `context` is None."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, 2 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, context: Optional[torch.Tensor] = None) -> torch.Tensor:
        context = x if context is None else context
        batch, n_query, dim = x.shape
        head_dim = dim // self.num_heads
        q = self.q(x).reshape(batch, n_query, self.num_heads, head_dim).transpose(1, 2)
        k, v = self.kv(context).reshape(batch, -1, 2, self.num_heads, head_dim).permute(2, 0, 3, 1, 4)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(batch, n_query, dim))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU(approximate="tanh")
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class ConditionEmbeddingBlock(nn.Module):
    """
    Time-modulated block with four parallel cross-attentions (one per
    condition stream); their outputs are concatenated and projected back
    to the model width.
    """

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.context_norms = nn.ModuleList([nn.LayerNorm(dim, eps=1e-6) for _ in range(N_STREAMS)])
        self.cross_attns = nn.ModuleList([Attention(dim, num_heads) for _ in range(N_STREAMS)])
        self.fuse = nn.Linear(N_STREAMS * dim, dim)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))

    def forward(self, x: torch.Tensor, c: torch.Tensor, streams: Tuple[torch.Tensor, ...]) -> torch.Tensor:
        shift_ca, scale_ca, gate_ca, shift_mlp, scale_mlp, gate_mlp = self.adaLN_modulation(c).chunk(6, dim=1)
        query = modulate(self.norm1(x), shift_ca, scale_ca)
        attended = [
            attn(query, norm(stream))
            for attn, norm, stream in zip(self.cross_attns, self.context_norms, streams)
        ]
        x = x + gate_ca.unsqueeze(1) * self.fuse(torch.cat(attended, dim=-1))
        x = x + gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(x), shift_mlp, scale_mlp))
        return x


class FusionGenerationBlock(nn.Module):
    """Self-attention and feed-forward with adaptive layer-norm modulation."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.adaLN_modulation(c).chunk(6, dim=1)
        x = x + gate_msa.unsqueeze(1) * self.attn(modulate(self.norm1(x), shift_msa, scale_msa))
        x = x + gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(x), shift_mlp, scale_mlp))
        return x


class MappingHead(nn.Module):
    """Three linear layers: dim -> dim -> dim/2 -> 2."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim, eps=1e-6)
        self.layers = nn.Sequential(
            nn.Linear(dim, dim),
            nn.GELU(),
            nn.Linear(dim, dim // 2),
            nn.GELU(),
            nn.Linear(dim // 2, 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(self.norm(x))


def _tokens(grid: torch.Tensor) -> torch.Tensor:
    """(batch, channels, h, w) -> (batch, h*w, channels)."""
    return grid.flatten(2).transpose(1, 2)


class DvdNetwork(nn.Module):
    """The denoiser: feature extractors plus the conditional transformer."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        dim = cfg.dim
        self.extractor = MultiFeatureExtractor(cfg)
        self.latent_embed = nn.Linear(2, dim)
        self.stream_embeds = nn.ModuleList([
            nn.Linear(cfg.feat_dim, dim),
            nn.Linear(cfg.feat_dim, dim),
            nn.Linear(cfg.feat_dim, dim),
            nn.Linear(2 + cfg.feat_dim, dim),
        ])
        self.t_embedder = TimestepEmbedder(dim, frequency_embedding_size=cfg.time_dim)
        self.blocks = nn.ModuleList([
            ConditionEmbeddingBlock(dim, cfg.n_heads, cfg.mlp_ratio) for _ in range(cfg.n_ceb)
        ])
        self.fusion = nn.ModuleList([
            FusionGenerationBlock(dim, cfg.n_heads, cfg.mlp_ratio) for _ in range(cfg.n_fgb)
        ])
        self.head = MappingHead(dim)
        pos = torch.from_numpy(sincos_pos_embed_2d(dim, cfg.latent_size)).float().unsqueeze(0)
        self.register_buffer("pos_embed", pos, persistent=False)
        self.initialize_weights()
        logger.info(f"DvdNetwork initialized: latent {cfg.latent_size}, dim {dim}, "
                    f"{cfg.n_ceb} CEB, {cfg.n_fgb} FGB, {count_module_parameters(self):,} parameters")

    def initialize_weights(self) -> None:
        def _basic_init(module):
            if isinstance(module, nn.Linear):
                torch.nn.init.xavier_uniform_(module.weight)
                if module.bias is not None:
                    nn.init.constant_(module.bias, 0)
        for part in (self.latent_embed, self.stream_embeds, self.blocks, self.fusion, self.head):
            part.apply(_basic_init)
        nn.init.normal_(self.t_embedder.mlp[0].weight, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[2].weight, std=0.02)

    def extract_features(self, images: torch.Tensor, fg_masks: torch.Tensor,
                         textline_masks: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return self.extractor(images, fg_masks, textline_masks)

    def _check_shapes(self, m_t: torch.Tensor, cond: ConditionBundle) -> None:
        size, feat = self.cfg.latent_size, self.cfg.feat_dim
        batch = m_t.shape[0]
        if tuple(m_t.shape[1:]) != (2, size, size):
            raise InvalidArgumentError(f"m_t must be (batch, 2, {size}, {size}), got {tuple(m_t.shape)}")
        for name, grid, channels in (("f_d", cond.f_d, feat), ("f_m", cond.f_m, feat),
                                     ("f_l", cond.f_l, feat), ("m_0|t", cond.r_t.m_prev, 2),
                                     ("f_0|t", cond.r_t.f_dewarped, feat)):
            if tuple(grid.shape) != (batch, channels, size, size):
                raise InvalidArgumentError(
                    f"{name} must be ({batch}, {channels}, {size}, {size}), got {tuple(grid.shape)}"
                )

    def forward(self, m_t: torch.Tensor, t: torch.Tensor, cond: ConditionBundle) -> torch.Tensor:
        """
        Predict the clean mapping.

        Args:
            m_t: (batch, 2, h, w) noisy latent mapping
            t: (batch,) integer timesteps
            cond: compound condition with grids at the latent size

        Returns:
            (batch, 2, h, w) x0 prediction
        """
        self._check_shapes(m_t, cond)
        batch, _, height, width = m_t.shape
        c = self.t_embedder(t.to(m_t.device))
        x = self.latent_embed(_tokens(m_t)) + self.pos_embed
        refinement = torch.cat([cond.r_t.m_prev, cond.r_t.f_dewarped], dim=1)
        streams = tuple(
            embed(_tokens(grid)) + self.pos_embed
            for embed, grid in zip(self.stream_embeds, (cond.f_d, cond.f_m, cond.f_l, refinement))
        )
        for block in self.blocks:
            x = block(x, c, streams)
        for block in self.fusion:
            x = block(x, c)
        out = self.head(x)
        return out.transpose(1, 2).reshape(batch, 2, height, width)


def build_network(cfg: Union[NetConfig, Dict]) -> DvdNetwork:
    if not isinstance(cfg, NetConfig):
        cfg = parse_net_config(cfg)
    return DvdNetwork(cfg)


def count_module_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def count_parameters(cfg: Union[NetConfig, Dict]) -> int:
    """Exact trainable parameter count of the network built from `cfg`."""
    return count_module_parameters(build_network(cfg))


def parameter_breakdown(cfg: Union[NetConfig, Dict]) -> Dict[str, int]:
    """Parameter counts per top-level part."""
    net = build_network(cfg)
    return {name: count_module_parameters(child) for name, child in net.named_children()}


def extract_features(network: DvdNetwork, warped: DocumentImage, fg_mask: np.ndarray,
                     textline_mask: np.ndarray) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Features of one image, each (1, feat_dim, latent, latent)."""
    if fg_mask.shape != (warped.height, warped.width) or textline_mask.shape != fg_mask.shape:
        raise InvalidArgumentError(
            f"mask shapes {fg_mask.shape}/{textline_mask.shape} do not match image "
            f"{warped.height}x{warped.width}"
        )
    size = network.cfg.input_size
    device = next(network.parameters()).device
    images = image_to_tensor(warped, size)[None].to(device)
    fg = mask_to_tensor(fg_mask, size)[None].to(device)
    tl = mask_to_tensor(textline_mask, size)[None].to(device)
    return network.extract_features(images, fg, tl)
