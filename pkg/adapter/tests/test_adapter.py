"""Adapter contract tests, including the strict-ingest round trip."""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from dsi_adapter import AdapterConfig, MockBackend, Prompt, load_backend, run_adapter


def make_fixture(tmp_path: Path, n_images: int = 10):
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    sidecar = {}
    for i in range(n_images):
        name = f"frame{i:03d}.png"
        # content only needs to be stable bytes; the mock hashes them
        (image_dir / name).write_bytes(b"\x89PNG\r\n" + bytes([i]) * 64)
        sidecar[name] = {
            "lat": 40.70 + i * 0.001,
            "lon": -73.95 - i * 0.001,
            "ts": f"2023-08-11T10:{i:02d}:00-04:00",
        }
    sidecar_path = tmp_path / "sidecar.json"
    sidecar_path.write_text(json.dumps(sidecar))
    return image_dir, sidecar_path, sidecar


def make_config(tmp_path: Path, **overrides) -> AdapterConfig:
    image_dir, sidecar_path, _ = make_fixture(tmp_path)
    params = dict(
        image_dir=image_dir,
        prompts=(Prompt("food_truck", "Is there a food truck in this image?"),),
        sidecar_path=sidecar_path,
        output_path=tmp_path / "detections.jsonl",
        model="mock",
    )
    params.update(overrides)
    return AdapterConfig(**params)


class TestMockBackend:
    def test_deterministic_per_digest_and_prompt(self):
        backend = MockBackend()
        a = backend.classify(b"bytes", "prompt one")
        assert backend.classify(b"bytes", "prompt one") == a
        assert backend.classify(b"bytes", "prompt two") != a
        assert backend.classify(b"other", "prompt one") != a
        assert 0.0 <= a <= 1.0

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            load_backend("cambrian-13b")

    def test_module_factory_spec(self):
        backend = load_backend("dsi_adapter.backends:MockBackend")
        assert isinstance(backend, MockBackend)


class TestRunAdapter:
    def test_ten_image_fixture(self, tmp_path):
        config = make_config(tmp_path)
        report = run_adapter(config)
        assert report.skipped == []
        lines = config.output_path.read_text().splitlines()
        assert len(lines) == 10
        objs = [json.loads(line) for line in lines]
        assert all(o["label"] == "food_truck" for o in objs)
        assert [o["image_id"] for o in objs] == sorted(o["image_id"] for o in objs)

    def test_empty_directory_succeeds(self, tmp_path):
        image_dir = tmp_path / "empty"
        image_dir.mkdir()
        sidecar = tmp_path / "sidecar.json"
        sidecar.write_text("{}")
        config = AdapterConfig(
            image_dir=image_dir,
            prompts=(Prompt("x", "anything?"),),
            sidecar_path=sidecar,
            output_path=tmp_path / "out.jsonl",
        )
        report = run_adapter(config)
        assert report.skipped == []
        assert config.output_path.read_text() == ""

    def test_missing_sidecar_entry_skipped_and_reported(self, tmp_path):
        image_dir, sidecar_path, sidecar = make_fixture(tmp_path)
        sidecar.pop("frame003.png")
        sidecar_path.write_text(json.dumps(sidecar))
        config = AdapterConfig(
            image_dir=image_dir,
            prompts=(Prompt("food_truck", "Is there a food truck in this image?"),),
            sidecar_path=sidecar_path,
            output_path=tmp_path / "detections.jsonl",
        )
        report = run_adapter(config)
        assert [s["image_id"] for s in report.skipped] == ["frame003.png"]
        lines = config.output_path.read_text().splitlines()
        assert len(lines) == 9

    def test_bad_sidecar_coordinates_skipped(self, tmp_path):
        image_dir, sidecar_path, sidecar = make_fixture(tmp_path)
        sidecar["frame001.png"]["lat"] = 123.0
        sidecar["frame002.png"]["ts"] = "yesterday"
        sidecar_path.write_text(json.dumps(sidecar))
        config = AdapterConfig(
            image_dir=image_dir,
            prompts=(Prompt("food_truck", "Is there a food truck in this image?"),),
            sidecar_path=sidecar_path,
            output_path=tmp_path / "detections.jsonl",
        )
        report = run_adapter(config)
        assert {s["image_id"] for s in report.skipped} == {
            "frame001.png", "frame002.png",
        }

    def test_deterministic_across_runs(self, tmp_path):
        config = make_config(tmp_path)
        run_adapter(config)
        first = config.output_path.read_bytes()
        run_adapter(config)
        assert config.output_path.read_bytes() == first

    def test_multiple_prompts_one_line_each(self, tmp_path):
        config = make_config(
            tmp_path,
            prompts=(
                Prompt("food_truck", "Is there a food truck in this image?"),
                Prompt("bike_box", "Is there a bike rider with a box on their back in this image?"),
            ),
        )
        run_adapter(config)
        lines = [json.loads(l) for l in config.output_path.read_text().splitlines()]
        assert len(lines) == 20
        labels = {o["label"] for o in lines}
        assert labels == {"food_truck", "bike_box"}

    def test_yes_no_backend_maps_to_synthetic_conf(self, tmp_path):
        class YesNo:
            def classify(self, image_bytes, prompt):
                return image_bytes[-1] % 2 == 0

        config = make_config(tmp_path)
        run_adapter(config, backend=YesNo())
        confs = {
            json.loads(l)["conf"] for l in config.output_path.read_text().splitlines()
        }
        assert confs <= {0.9, 0.1}


class TestStrictIngestContract:
    """[SECONDARY] mock output is accepted by `dsi-audit ingest --strict`."""

    def test_output_passes_strict_ingest(self, tmp_path):
        config = make_config(tmp_path)
        run_adapter(config)
        first_digest = config.output_path.read_bytes()

        out_dir = tmp_path / "ingested"
        proc = subprocess.run(
            [
                "dsi-audit", "ingest",
                "--detections", str(config.output_path),
                "--strict", "--out", str(out_dir),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads((out_dir / "ingest_report.json").read_text())
        assert report["detections"]["errors"] == []
        assert report["detections"]["records"] == 10

        # determinism across runs, byte for byte
        run_adapter(config)
        assert config.output_path.read_bytes() == first_digest

    def test_cli_round_trip(self, tmp_path):
        image_dir, sidecar_path, _ = make_fixture(tmp_path)
        config_doc = {
            "image_dir": str(image_dir),
            "prompts": [{"label": "food_truck", "text": "Is there a food truck in this image?"}],
            "sidecar": str(sidecar_path),
            "output": str(tmp_path / "det.jsonl"),
            "model": "mock",
        }
        config_path = tmp_path / "adapter.json"
        config_path.write_text(json.dumps(config_doc))
        proc = subprocess.run(
            [sys.executable, "-m", "dsi_adapter.cli", "--config", str(config_path),
             "--skip-report", str(tmp_path / "skips.json")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        skips = json.loads((tmp_path / "skips.json").read_text())
        assert skips == {"skipped": []}
        assert (tmp_path / "det.jsonl").exists()
