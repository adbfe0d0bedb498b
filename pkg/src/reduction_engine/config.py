from typing import Optional

import yaml
from pydantic import BaseModel, Field, model_validator

from src.easi_core.costmodel import check_dimensions
from src.easi_core.easi import EasiConfig
from src.easi_core.modes import PipelineMode

TERM_FIELDS = ("include_second_order", "include_higher_order")


class PipelineConfig(BaseModel):
    """
    Reduction pipeline configuration. The mode forces the EASI term flags:
    pca -> second-order only, ica -> both, rp+ica -> higher-order only
    (both when keep_second_order is set); rp does not train.
    """

    mode: PipelineMode
    m: int = Field(..., ge=1)
    p: Optional[int] = None
    n: Optional[int] = None
    rp_seed: int = Field(0, ge=0)
    rp_scale: float = Field(1.0, gt=0)
    easi: EasiConfig = Field(default_factory=EasiConfig)
    standardize_input: bool = False
    keep_second_order: bool = False
    cache_projection: bool = False

    @model_validator(mode="after")
    def _apply_mode(self):
        self.p, self.n = check_dimensions(self.mode, self.m, self.p, self.n)
        if self.keep_second_order and self.mode is not PipelineMode.RP_THEN_ICA:
            raise ValueError("keep_second_order only applies to rp+ica mode")
        if not self.mode.uses_separation:
            return self

        forced = self.terms
        explicit = self.easi.model_fields_set
        for name, wanted in zip(TERM_FIELDS, forced):
            if name in explicit and getattr(self.easi, name) != wanted:
                raise ValueError(
                    f"mode {self.mode.value} forces {name}={wanted}, got {getattr(self.easi, name)}"
                )
        self.easi = self.easi.model_copy(update=dict(zip(TERM_FIELDS, forced)))
        return self

    @property
    def terms(self):
        """(second_order, higher_order) flags of the EASI stage."""
        if self.mode is PipelineMode.RP_THEN_ICA and self.keep_second_order:
            return (True, True)
        return self.mode.forced_terms()

    @property
    def easi_input_dim(self) -> int:
        return self.p if self.mode is PipelineMode.RP_THEN_ICA else self.m

    @classmethod
    def from_yaml(cls, path: str) -> "PipelineConfig":
        """Load configuration from a YAML file."""
        with open(path, "r") as f:
            data = yaml.safe_load(f)
        return cls(**data)
