"""Run manifests: an audit record for every pipeline invocation.

Every analysis run writes exactly one manifest into its output directory.
The gate verdict is recorded in the manifest before any analysis output is
produced, so a blocked run still leaves a manifest documenting the refusal.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .ci import GateDecision, InformationFlow
from .errors import DataError

MANIFEST_NAME = "run_manifest.json"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return digest.hexdigest()


def sha256_obj(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


@dataclass(slots=True)
class RunManifest:
    command: str
    argv: list[str]
    config_hash: str
    inputs: dict[str, str] = field(default_factory=dict)
    flow: dict | None = None
    verdict: dict | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    version: str = __version__

    @classmethod
    def start(cls, command: str, argv: list[str], config: dict) -> "RunManifest":
        return cls(command=command, argv=list(argv), config_hash=sha256_obj(config))

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def record_gate(self, flow: InformationFlow | None, decision: GateDecision) -> None:
        self.flow = flow.to_json_obj() if flow is not None else None
        self.verdict = decision.verdict.to_json_obj()

    def add_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        payload = {
            "command": self.command,
            "argv": self.argv,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "flow": self.flow,
            "verdict": self.verdict,
            "outputs": self.outputs,
            "timings": self.timings,
            "version": self.version,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


class StageTimer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest = manifest
        self.stage = stage

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.stage] = time.perf_counter() - self._t0
        return False
