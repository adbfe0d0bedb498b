"""Enumerations shared by the reduction core and engine."""

from enum import Enum

import numpy as np


class PipelineMode(Enum):
    """Datapath configurations of the reduction pipeline."""

    RP = "rp"
    PCA_WHITEN = "pca"
    ICA = "ica"
    RP_THEN_ICA = "rp+ica"

    @property
    def uses_projection(self) -> bool:
        return self in (PipelineMode.RP, PipelineMode.RP_THEN_ICA)

    @property
    def uses_separation(self) -> bool:
        return self is not PipelineMode.RP

    def forced_terms(self):
        """(second_order, higher_order) term flags the mode forces on the EASI update."""
        return MODE_TERMS[self]


# RP has no EASI stage; its entry is never read by the update path.
MODE_TERMS = {
    PipelineMode.RP: (False, False),
    PipelineMode.PCA_WHITEN: (True, False),
    PipelineMode.ICA: (True, True),
    PipelineMode.RP_THEN_ICA: (False, True),
}


class InitScheme(Enum):
    """Initial separation matrix.

    PRINCIPAL is computed from the training samples: the leading eigenvectors of their
    second-moment matrix, scaled so the initial outputs are white.
    """

    TRUNCATED_IDENTITY = "truncated_identity"
    SEEDED_ORTHONORMAL = "seeded_orthonormal"
    PRINCIPAL = "principal"


class SourceDistribution(Enum):
    """Source laws for synthetic mixtures (all zero-mean, unit-variance)."""

    UNIFORM = "uniform"
    LAPLACE = "laplace"
    SIGN = "sign"


class Nonlinearity(Enum):
    """Nonlinearity g(.) of the higher-order term."""

    CUBIC = "cubic"


class Precision(Enum):
    """Floating-point width of the EASI arithmetic."""

    DOUBLE = "double"
    SINGLE = "single"

    @property
    def dtype(self):
        return np.float64 if self is Precision.DOUBLE else np.float32
