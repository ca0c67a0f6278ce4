# cropsim/traits/estimator.py
import logging

import torch

from cropsim.traits.biomass import BiomassRegressor, biomass_estimates
from cropsim.traits.models import TraitEstimate
from cropsim.traits.pla import ColorThresholdSegmenter, MaskProvider, pla_from_masks

logger = logging.getLogger(__name__)


class TraitEstimator:
    """Applies the same PLA and biomass estimators to real and generated images."""

    def __init__(
        self,
        segmenter: MaskProvider | None = None,
        regressor: BiomassRegressor | None = None,
        gsd_mm: float = 1.0,
    ):
        self.segmenter = segmenter or ColorThresholdSegmenter()
        self.regressor = regressor
        self.gsd_mm = gsd_mm
        self.stats = {"pla_images": 0, "bm_images": 0, "no_plant": 0}

    @property
    def trait_keys(self) -> tuple[str, ...]:
        return ("pla_pct", "bm_sw", "bm_fb") if self.regressor is not None else ("pla_pct",)

    def pla(self, images: torch.Tensor) -> list[TraitEstimate]:
        out = []
        for image in images:
            est = pla_from_masks(self.segmenter.predict(image), self.gsd_mm)
            if "no-plant" in est.flags:
                self.stats["no_plant"] += 1
            out.append(est)
        self.stats["pla_images"] += len(out)
        return out

    def biomass(self, images: torch.Tensor) -> list[TraitEstimate] | None:
        if self.regressor is None:
            return None
        self.stats["bm_images"] += len(images)
        return biomass_estimates(images, self.regressor)

    def estimate(self, images: torch.Tensor) -> tuple[list[TraitEstimate], list[TraitEstimate] | None]:
        return self.pla(images), self.biomass(images)

    def values(self, images: torch.Tensor) -> dict[str, list[float]]:
        """Trait name -> one value per image."""
        return self.as_values(*self.estimate(images))

    @staticmethod
    def as_values(
        pla: list[TraitEstimate], bm: list[TraitEstimate] | None
    ) -> dict[str, list[float]]:
        out = {"pla_pct": [e.pla_pct for e in pla]}
        if bm is not None:
            out["bm_sw"] = [e.bm_sw for e in bm]
            out["bm_fb"] = [e.bm_fb for e in bm]
        return out
