"""Generator/discriminator pairs of the two domains and the batched forward passes that chain them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from src.core.rng import Rng, derive_seed
from src.core.types import uniform_angles
from src.autodiff import ops
from src.autodiff.optim import AdamState
from src.autodiff.params import ModelParams
from src.autodiff.tensor import Tensor, no_grad
from src.cagan.discriminator import discriminator_forward, init_discriminator
from src.cagan.generator import generator_forward, init_generator
from src.tomo.fbp import FbpOperator
from src.tomo.geometry import Geometry
from src.trainer.config import ExperimentConfig
from src.trainer.dataset import Dataset
from src.trainer.normalization import DomainNorm


DOMAINS = ("radon", "image")


def generator_name(domain: str) -> str:
    return f"g_{domain}"


def discriminator_name(domain: str) -> str:
    return f"d_{domain}"


@lru_cache(maxsize=8)
def _operator(size: int, views: int, window: str) -> FbpOperator:
    return FbpOperator(Geometry.create(size, uniform_angles(views)), window)


def fbp_operator(cfg: ExperimentConfig) -> FbpOperator:
    return _operator(cfg.phantom.size, cfg.views.full, cfg.fbp_window)


def batch_fbp(op: FbpOperator, samples: np.ndarray) -> np.ndarray:
    """(N, 1, V, D) sinograms -> (N, 1, S, S) masked FBP images."""
    return np.stack([op.forward(s[0]) for s in samples])[:, np.newaxis]


def batch_fbp_adjoint(op: FbpOperator, images: np.ndarray) -> np.ndarray:
    return np.stack([op.adjoint(img[0]) for img in images])[:, np.newaxis]


def fbp_tensor(x: Tensor, cfg: ExperimentConfig) -> Tensor:
    """Differentiable FBP of an unpadded (N, 1, views, detectors) sinogram batch."""
    op = fbp_operator(cfg)
    return ops.linear_op(x, lambda a: batch_fbp(op, a), lambda g: batch_fbp_adjoint(op, g), name="fbp")


def fit_norms(dataset: Dataset) -> Dict[str, DomainNorm]:
    train = dataset["train"]
    return {
        "radon": DomainNorm.fit(s.r_gt.samples for s in train),
        "image": DomainNorm.fit(s.phantom for s in train),
    }


@dataclass
class DualDomainModels:
    cfg: ExperimentConfig
    norms: Dict[str, DomainNorm]
    generators: Dict[str, ModelParams] = field(default_factory=dict)
    discriminators: Dict[str, ModelParams] = field(default_factory=dict)

    @classmethod
    def initialize(cls, cfg: ExperimentConfig, norms: Dict[str, DomainNorm]) -> "DualDomainModels":
        models = cls(cfg=cfg, norms=dict(norms))
        for domain in DOMAINS:
            g = generator_name(domain)
            models.generators[domain] = init_generator(cfg.net, Rng(derive_seed(cfg.seed, "init", g)), cfg.dtype, name=g)
            if cfg.loss.discriminator:
                d = discriminator_name(domain)
                models.discriminators[domain] = init_discriminator(cfg.net, Rng(derive_seed(cfg.seed, "init", d)), cfg.dtype, name=d)
        return models

    def stage_models(self, domains: tuple[str, ...]) -> list[ModelParams]:
        out = [self.generators[d] for d in domains]
        out += [self.discriminators[d] for d in domains if d in self.discriminators]
        return out

    def optimizers(self, domains: tuple[str, ...]) -> Dict[str, AdamState]:
        return {m.name: AdamState.for_params(m) for m in self.stage_models(domains)}

    def discriminator(self, domain: str) -> Optional[ModelParams]:
        return self.discriminators.get(domain)

    def set_training(self, mode: bool) -> None:
        for model in [*self.generators.values(), *self.discriminators.values()]:
            model.train(mode)

    # -- forward passes ------------------------------------------------------------------

    def repair_radon(self, r_fv: Tensor) -> Tensor:
        """Normalized Radon-domain generator output for a physical padded sinogram batch."""
        norm = self.norms["radon"]
        return generator_forward(norm.apply_tensor(r_fv), self.generators["radon"], self.cfg.net)

    def reconstruct(self, repaired_normalized: Tensor) -> Tensor:
        """Crop the padding, undo normalization and reconstruct with FBP (physical image units)."""
        physical = self.norms["radon"].invert_tensor(repaired_normalized)
        cropped = ops.slice_axis(physical, 2, 0, self.cfg.views.full)
        return fbp_tensor(cropped, self.cfg)

    def repair_image(self, image: Tensor) -> Tensor:
        """Normalized image-domain generator output for a physical image batch."""
        norm = self.norms["image"]
        return generator_forward(norm.apply_tensor(image), self.generators["image"], self.cfg.net)

    def stage1_images(self, r_fv: np.ndarray) -> np.ndarray:
        """FBP(crop(G_R(R_fv))) without gradients; the image stage's inputs."""
        with no_grad():
            return self.reconstruct(self.repair_radon(Tensor(r_fv.astype(self.cfg.dtype)))).data

    def dual(self, r_fv: np.ndarray) -> np.ndarray:
        with no_grad():
            repaired = self.repair_image(Tensor(self.stage1_images(r_fv)))
            return self.norms["image"].invert_tensor(repaired).data

    def image_only(self, fbp_images: np.ndarray) -> np.ndarray:
        with no_grad():
            repaired = self.repair_image(Tensor(fbp_images.astype(self.cfg.dtype)))
            return self.norms["image"].invert_tensor(repaired).data

    def discriminate(self, domain: str, x: Tensor) -> Optional[Tensor]:
        disc = self.discriminators.get(domain)
        return None if disc is None else discriminator_forward(x, disc, self.cfg.net)


__all__ = [
    "DOMAINS",
    "DualDomainModels",
    "generator_name",
    "discriminator_name",
    "fbp_operator",
    "fbp_tensor",
    "batch_fbp",
    "batch_fbp_adjoint",
    "fit_norms",
]
