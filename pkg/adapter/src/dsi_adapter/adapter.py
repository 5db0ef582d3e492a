"""Run a backend over an image directory and emit detection lines.

The output is the dsi-audit detections format: one JSON object per line
with fields image_id, ts, lat, lon, label, conf. Geotags come from a
sidecar document mapping image_id (the file name relative to the image
directory) to lat, lon, and an ISO-8601 timestamp with offset. Images
without a usable sidecar entry are skipped and reported, never silently
dropped, and never emitted in a form the strict ingest would reject.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .backends import Backend, load_backend

YES_CONF = 0.9  # synthetic confidence for bare "yes" answers
NO_CONF = 0.1


@dataclass(frozen=True)
class Prompt:
    label: str
    text: str

    def __post_init__(self):
        if not self.label or not self.text:
            raise ValueError("prompt needs both a label and text")


@dataclass(frozen=True)
class AdapterConfig:
    image_dir: Path
    prompts: tuple[Prompt, ...]
    sidecar_path: Path
    output_path: Path
    model: str = "mock"

    @classmethod
    def from_doc(cls, doc: dict, base_dir: Path | None = None) -> "AdapterConfig":
        base = Path(base_dir) if base_dir else Path(".")

        def resolve(key: str) -> Path:
            try:
                raw = Path(doc[key])
            except KeyError:
                raise ValueError(f"config is missing {key!r}") from None
            return raw if raw.is_absolute() else base / raw

        prompts = tuple(
            Prompt(p["label"], p["text"]) for p in doc.get("prompts", [])
        )
        if not prompts:
            raise ValueError("config needs at least one prompt")
        return cls(
            image_dir=resolve("image_dir"),
            prompts=prompts,
            sidecar_path=resolve("sidecar"),
            output_path=resolve("output"),
            model=doc.get("model", "mock"),
        )


@dataclass
class SkipReport:
    skipped: list[dict] = field(default_factory=list)

    def add(self, image_id: str, reason: str) -> None:
        self.skipped.append({"image_id": image_id, "reason": reason})


def _valid_sidecar_entry(image_id: str, entry, report: SkipReport):
    if not isinstance(entry, dict):
        report.add(image_id, "sidecar entry is not an object")
        return None
    try:
        lat = float(entry["lat"])
        lon = float(entry["lon"])
        ts = str(entry["ts"])
    except (KeyError, TypeError, ValueError):
        report.add(image_id, "sidecar entry missing lat/lon/ts")
        return None
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        report.add(image_id, f"sidecar lat {lat} out of range")
        return None
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        report.add(image_id, f"sidecar lon {lon} out of range")
        return None
    normalized = ts[:-1] + "+00:00" if ts.endswith(("Z", "z")) else ts
    try:
        parsed = datetime.fromisoformat(normalized)
    except ValueError:
        report.add(image_id, f"sidecar ts {ts!r} is not ISO-8601")
        return None
    if parsed.tzinfo is None:
        report.add(image_id, f"sidecar ts {ts!r} has no UTC offset")
        return None
    return lat, lon, ts


def _answer_to_conf(answer) -> float:
    if isinstance(answer, bool):
        return YES_CONF if answer else NO_CONF
    conf = float(answer)
    if not 0.0 <= conf <= 1.0 or not math.isfinite(conf):
        raise ValueError(f"backend returned confidence {conf} outside [0, 1]")
    return round(conf, 6)


def run_adapter(config: AdapterConfig, backend: Backend | None = None) -> SkipReport:
    """Classify every image under config.image_dir with every prompt.

    Writes one detection line per (image, prompt) to config.output_path and
    returns the skip report. Deterministic for a fixed directory tree and
    backend; output lines are sorted by (image_id, label).
    """
    if backend is None:
        backend = load_backend(config.model)
    if not config.image_dir.is_dir():
        raise FileNotFoundError(f"image directory {config.image_dir} does not exist")
    with open(config.sidecar_path, "r", encoding="utf-8") as handle:
        sidecar = json.load(handle)
    if not isinstance(sidecar, dict):
        raise ValueError("sidecar must be a JSON object keyed by image_id")

    report = SkipReport()
    rows: list[tuple[str, str, dict]] = []
    images = sorted(
        p for p in config.image_dir.rglob("*") if p.is_file()
    )
    for path in images:
        image_id = path.relative_to(config.image_dir).as_posix()
        if image_id not in sidecar:
            report.add(image_id, "no sidecar entry")
            continue
        entry = _valid_sidecar_entry(image_id, sidecar[image_id], report)
        if entry is None:
            continue
        lat, lon, ts = entry
        try:
            image_bytes = path.read_bytes()
        except OSError as exc:
            report.add(image_id, f"unreadable image: {exc}")
            continue
        for prompt in config.prompts:
            conf = _answer_to_conf(backend.classify(image_bytes, prompt.text))
            rows.append(
                (
                    image_id,
                    prompt.label,
                    {
                        "image_id": image_id,
                        "ts": ts,
                        "lat": lat,
                        "lon": lon,
                        "label": prompt.label,
                        "conf": conf,
                    },
                )
            )

    rows.sort(key=lambda r: (r[0], r[1]))
    config.output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config.output_path, "w", encoding="utf-8") as handle:
        for _, _, obj in rows:
            handle.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return report
