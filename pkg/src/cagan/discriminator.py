from __future__ import annotations

from typing import List, Optional

import numpy as np

from src.core.rng import Rng
from src.autodiff import ops
from src.autodiff.params import ModelParams
from src.autodiff.tensor import Tensor
from src.cagan.config import NetConfig
from src.cagan.generator import check_input, encoder, plan_encoder, plan_stem, stem
from src.cagan.layers import LayerSpec, apply_conv, conv_spec, init_params


def plan_discriminator(cfg: NetConfig) -> List[LayerSpec]:
    return plan_stem(cfg) + plan_encoder(cfg) + [
        conv_spec("head", cfg.bottleneck_channels, 1, bias=True, scale=cfg.size_multiple, positions="global")
    ]


def init_discriminator(cfg: NetConfig, rng: Rng, dtype: Optional[np.dtype] = None, name: str = "disc") -> ModelParams:
    return init_params(name, plan_discriminator(cfg), rng, dtype)


def discriminator_forward(x: Tensor, params: ModelParams, cfg: NetConfig) -> Tensor:
    """Probability, shape (N, 1), that each input is a real image."""
    check_input(x, cfg)
    scope = params.scope()
    y = stem(x, scope, cfg)
    y, _ = encoder(y, scope, cfg)
    logits = apply_conv(ops.global_avg_pool(y), scope, "head", bias=True)
    return ops.sigmoid(ops.reshape(logits, (x.shape[0], 1)))


__all__ = ["plan_discriminator", "init_discriminator", "discriminator_forward"]
