"""CLI for the adapter: config in, detection file plus skip report out."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adapter import AdapterConfig, run_adapter


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dsi-audit-adapter", description=__doc__)
    parser.add_argument("--config", required=True, help="adapter config JSON")
    parser.add_argument(
        "--skip-report", help="where to write the skip report (default: stdout)"
    )
    args = parser.parse_args(sys.argv[1:] if argv is None else argv)

    config_path = Path(args.config)
    try:
        with open(config_path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
        config = AdapterConfig.from_doc(doc, base_dir=config_path.parent)
        report = run_adapter(config)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    payload = json.dumps({"skipped": report.skipped}, indent=2, sort_keys=True)
    if args.skip_report:
        Path(args.skip_report).write_text(payload + "\n")
    else:
        print(payload)
    print(
        f"adapter: wrote {config.output_path} ({len(report.skipped)} skipped)",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
