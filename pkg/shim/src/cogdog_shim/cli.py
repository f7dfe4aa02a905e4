"""Shim entry point: host configured models behind the wire protocol."""

from __future__ import annotations

import argparse
import sys
import time

from .config import load_config
from .server import ShimServer


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cogdog-shim",
        description="Serve /v1/next_step and /v1/vision over hosted models",
    )
    parser.add_argument("--planner-model", help="stub[:script file] | http:<completion url>")
    parser.add_argument("--vision-model", help="stub[:table file] | http:<vqa url>")
    parser.add_argument("--template", choices=("plain", "chat"), default=None)
    parser.add_argument("--detection-grammar", choices=("bracket", "angle"), default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--config", help="JSON config file")
    args = parser.parse_args(argv)

    try:
        config = load_config(
            planner_model=args.planner_model,
            vision_model=args.vision_model,
            prompt_template=args.template,
            detection_grammar=args.detection_grammar,
            port=args.port,
            config_file=args.config,
        )
        server = ShimServer(config).start()
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"shim serving on {server.base_url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
