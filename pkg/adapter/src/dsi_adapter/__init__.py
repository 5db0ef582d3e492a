"""Image-directory adapter emitting the dsi-audit detection wire format."""

__version__ = "0.1.0"

from .adapter import AdapterConfig, Prompt, SkipReport, run_adapter
from .backends import MockBackend, load_backend

__all__ = [
    "AdapterConfig",
    "MockBackend",
    "Prompt",
    "SkipReport",
    "load_backend",
    "run_adapter",
    "__version__",
]
