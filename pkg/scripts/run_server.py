#!/usr/bin/env python3
"""Start the gateway server.

    python3 scripts/run_server.py [config.json]

Equivalent to ``workbench serve --config config.json``; WORKBENCH_* env
vars override file values.  A provider must be configured: either
``transcript_dir`` (scripted fixtures keyed by goal slug) or
``provider_url`` + models for a live chat-completions endpoint.
"""

from __future__ import annotations

import sys

from workbench.config import load_config
from workbench.gateway import serve


def main() -> None:
    config_path = sys.argv[1] if len(sys.argv) > 1 else None
    serve(load_config(config_path))


if __name__ == "__main__":
    main()
