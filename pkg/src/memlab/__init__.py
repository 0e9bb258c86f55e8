from .utils import (
    BadProfileError,
    CheckpointError,
    DegenerateMetricError,
    FrameSolveFailedError,
    InsufficientJetError,
    InsufficientSamplesError,
    InterpolationOutOfSlabError,
    InvalidInputError,
    MemlabError,
    OriginSingularError,
    OutOfHistoryError,
    SolverBlowUpError,
    VerificationFailedError,
)

__version__ = "0.1.0"
