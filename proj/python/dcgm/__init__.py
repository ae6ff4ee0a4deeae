"""Context-sensitive response generation: models, retrieval, rescoring and metrics."""
from ._dcgm import *  # noqa: F401,F403
