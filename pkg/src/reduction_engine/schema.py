import yaml
from typing import List, Literal, Optional
from pydantic import BaseModel, Field, model_validator

from src.easi_core.easi import EasiConfig
from src.easi_core.modes import PipelineMode
from src.reduction_engine.evaluation import MlpConfig


class ReproductionRow(BaseModel):
    """
    One configuration of a reproduced table.
    """
    mode: PipelineMode
    m: int
    p: Optional[int] = None
    n: int
    reference_accuracy: Optional[float] = None


class ReproductionPlan(BaseModel):
    """
    A table reproduction: dataset protocol, trainer settings and the rows to run.
    """
    name: str
    table: Literal["table1", "table2"]
    n_samples: int = 5000
    drop_last_k: int = 8
    n_train: int = 4000
    standardize_input: bool = True
    # scale projected features by sqrt(p/m) so they keep roughly unit variance
    normalize_projection: bool = True
    easi: EasiConfig = Field(default_factory=EasiConfig)
    mlp: MlpConfig = Field(default_factory=MlpConfig)
    rows: List[ReproductionRow] = Field(..., description="Configurations to run, in table order")

    @model_validator(mode="after")
    def _rows_fit_dataset(self):
        if self.table == "table1":
            features = 40 - self.drop_last_k
            for row in self.rows:
                if row.m != features:
                    raise ValueError(f"row has m={row.m} but the dataset has {features} features")
        return self

    @classmethod
    def from_yaml(cls, path: str) -> "ReproductionPlan":
        """Load a reproduction plan from a YAML file."""
        with open(path, "r") as f:
            data = yaml.safe_load(f)
        return cls(**data)
