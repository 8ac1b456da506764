"""Service configuration.

A single frozen dataclass carries every tunable; values come from defaults,
an optional JSON config file, and ``WORKBENCH_*`` environment variables
(env wins over file, file wins over defaults).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

KIB = 1024
MIB = 1024 * 1024

# Packages the sandboxed code tool may import by default.  Network-capable
# modules are always stripped from the effective list unless exec_network
# is enabled.
DEFAULT_CODE_ALLOWLIST: tuple[str, ...] = (
    # third-party compute stack
    "numpy", "pandas", "torch", "scipy", "sklearn", "matplotlib", "sympy",
    "statsmodels", "PIL",
    # stdlib, side-effect-light
    "math", "cmath", "statistics", "decimal", "fractions", "random",
    "itertools", "functools", "operator", "collections", "heapq", "bisect",
    "array", "json", "csv", "re", "string", "textwrap", "unicodedata",
    "datetime", "time", "calendar", "zoneinfo",
    "dataclasses", "enum", "typing", "abc", "copy", "pprint", "sys",
    "io", "pathlib", "zipfile", "gzip", "bz2", "lzma", "tarfile",
    "hashlib", "hmac", "base64", "binascii", "struct", "uuid",
)

NETWORK_MODULES: frozenset[str] = frozenset({
    "socket", "ssl", "requests", "urllib", "urllib3", "http", "httpx",
    "aiohttp", "ftplib", "smtplib", "poplib", "imaplib", "telnetlib",
    "socketserver", "xmlrpc", "websockets", "asyncio",
})

DEFAULT_SHELL_ALLOWLIST: tuple[str, ...] = (
    "ls", "cat", "head", "tail", "wc", "grep", "sort", "uniq", "cut", "tr",
    "echo", "printf", "date", "pwd", "stat", "du", "find", "diff",
    "md5sum", "sha256sum", "mkdir", "cp", "mv", "touch", "rm",
)

NETWORK_COMMANDS: frozenset[str] = frozenset({
    "curl", "wget", "nc", "ncat", "ssh", "scp", "ftp", "telnet", "ping",
})


@dataclass(frozen=True)
class ServiceConfig:
    # operational ceilings
    max_rounds: int = 30
    max_workers: int = 50

    # workspace sizing
    workspace_quota_bytes: int = 512 * MIB
    workspace_warn_bytes: int = 100 * MIB
    inline_threshold_bytes: int = 64 * KIB
    attachment_cap_bytes: int = 64 * MIB

    # tool limits
    exec_timeout_s: float = 120.0
    search_timeout_s: float = 30.0
    exec_network: bool = False
    browser_enabled: bool = False
    code_allowlist: tuple[str, ...] = DEFAULT_CODE_ALLOWLIST
    shell_allowlist: tuple[str, ...] = DEFAULT_SHELL_ALLOWLIST

    # plan editing
    live_edit: bool = False

    # streaming
    heartbeat_interval_s: float = 15.0

    # agent loop retry policy
    parse_retries: int = 2
    transport_retries: int = 3
    retry_backoff_s: float = 0.5

    # prompt composition
    event_digest_window: int = 20

    # request policy (regex denylist; empty = everything allowed)
    denylist_patterns: tuple[str, ...] = ()

    # integration endpoints (None/"" = not configured)
    search_backend_url: str = ""
    search_fixture_dir: str = ""
    extractor_endpoints: dict = field(default_factory=dict)  # modality -> url
    browser_driver_url: str = ""
    provider_url: str = ""
    provider_api_key: str = ""
    planner_model: str = ""
    executor_model: str = ""
    transcript_dir: str = ""

    # storage; None means a fresh temporary directory per manager
    data_dir: str = ""

    # server
    host: str = "127.0.0.1"
    port: int = 8700

    def data_path(self) -> Path | None:
        return Path(self.data_dir) if self.data_dir else None


_ENV_PREFIX = "WORKBENCH_"


def _coerce(raw: str, kind: type):
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    """Build a config from defaults, then a JSON file, then environment."""
    cfg = ServiceConfig()
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(ServiceConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("code_allowlist", "shell_allowlist", "denylist_patterns"):
            if key in data:
                data[key] = tuple(data[key])
        cfg = replace(cfg, **data)

    env = os.environ if env is None else env
    overrides = {}
    for f in fields(ServiceConfig):
        raw = env.get(_ENV_PREFIX + f.name.upper())
        if raw is None:
            continue
        if f.name in ("code_allowlist", "shell_allowlist", "denylist_patterns"):
            overrides[f.name] = tuple(s for s in raw.split(",") if s)
        elif f.name == "extractor_endpoints":
            overrides[f.name] = json.loads(raw)
        else:
            overrides[f.name] = _coerce(raw, type(getattr(cfg, f.name)))
    return replace(cfg, **overrides) if overrides else cfg
