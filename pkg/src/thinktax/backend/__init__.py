from .base import (
    Backend,
    BackendError,
    FatalBackendError,
    GenerationOutcome,
    GenerationRequest,
    RetryableBackendError,
)
from .remote import EndpointConfig, RemoteBackend, remote_generate
from .simulator import LengthLaw, QuestionLatents, SimModelConfig, SimulatedBackend, sim_question_latents

__all__ = [
    "Backend",
    "BackendError",
    "EndpointConfig",
    "FatalBackendError",
    "GenerationOutcome",
    "GenerationRequest",
    "LengthLaw",
    "QuestionLatents",
    "RemoteBackend",
    "RetryableBackendError",
    "SimModelConfig",
    "SimulatedBackend",
    "remote_generate",
    "sim_question_latents",
]
