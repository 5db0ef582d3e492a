"""Model backends for the adapter.

A backend answers one (image, prompt) query with either a confidence in
[0, 1] or a bare yes/no. Yes/no answers are mapped downstream to the
synthetic confidences 0.9/0.1, since binary-answer vision-language models
expose no score of their own.

Only the mock backend ships here; real models plug in through
``module:factory`` specs so CI never needs model weights.
"""

from __future__ import annotations

import hashlib
import importlib
from typing import Protocol, Union

Answer = Union[float, bool]


class Backend(Protocol):
    def classify(self, image_bytes: bytes, prompt: str) -> Answer:
        """Answer one prompt for one image."""


class MockBackend:
    """Deterministic pseudo-model: confidence from sha256(image || prompt).

    The same file bytes and prompt always produce the same confidence, which
    is what the contract tests rely on.
    """

    def classify(self, image_bytes: bytes, prompt: str) -> float:
        digest = hashlib.sha256()
        digest.update(hashlib.sha256(image_bytes).digest())
        digest.update(prompt.encode("utf-8"))
        numerator = int.from_bytes(digest.digest()[:8], "big")
        return round(numerator / 2**64, 6)


def load_backend(spec: str) -> Backend:
    """Resolve a backend spec: "mock" or a "module:factory" entry point."""
    if spec == "mock":
        return MockBackend()
    if ":" in spec:
        module_name, factory_name = spec.split(":", 1)
        module = importlib.import_module(module_name)
        factory = getattr(module, factory_name)
        return factory()
    raise ValueError(
        f"unknown backend {spec!r}: use 'mock' or a 'module:factory' spec "
        "pointing at your model integration"
    )
