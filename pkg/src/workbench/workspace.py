"""Per-task sandboxed, versioned file store.

Files live twice: as real bytes under the workspace root (so subprocess
tools see an ordinary directory) and as content-addressed blobs in a store
shared across workspaces (so branches are copy-on-write and history is
immutable).  Every mutation appends a new ``FileVersion``; nothing is ever
rewritten, which is what makes rollback, diffing, and audit trivial.
"""

from __future__ import annotations

import base64
import difflib
import hashlib
import io
import json
import re
import threading
import time
import zipfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .config import ServiceConfig
from .errors import (
    PathEscapesSandbox,
    ReservedPath,
    UnknownContent,
    UnknownVersion,
    WorkspaceQuotaExceeded,
)
from .events import EventKind

HASH_ALGORITHM = "sha256"
PLAN_FILENAME = "TODO.md"
MANIFEST_NAME = "MANIFEST.json"

_WINDOWS_DRIVE = re.compile(r"^[A-Za-z]:")


class Origin(str, Enum):
    """Who authored a change; plans only ever use agent/human."""

    AGENT = "agent"
    HUMAN = "human"
    TOOL = "tool"


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def is_binary(data: bytes) -> bool:
    # null byte in the first 8 KiB marks content as binary
    return b"\x00" in data[:8192]


@dataclass(frozen=True)
class ContentRef:
    hash: str
    size_bytes: int
    inline: bytes | None = None


@dataclass(frozen=True)
class FileVersion:
    path: str
    version_no: int
    hash: str
    size_bytes: int
    author: Origin
    parent: int | None
    created_at: float

    def summary(self) -> dict:
        return {
            "path": self.path,
            "version_no": self.version_no,
            "hash": self.hash,
            "size_bytes": self.size_bytes,
            "author": self.author.value,
        }


@dataclass(frozen=True)
class DiffRecord:
    path: str
    from_version: int
    to_version: int
    binary: bool
    changed: bool
    unified: str
    encoding: str
    lines_added: int
    lines_removed: int

    def summary(self) -> dict:
        return {
            "binary": self.binary,
            "changed": self.changed,
            "lines_added": self.lines_added,
            "lines_removed": self.lines_removed,
        }


@dataclass(frozen=True)
class SnapshotArchive:
    data: bytes
    manifest: list[dict]


def normalize_path(raw: str) -> str:
    """Collapse a user-supplied path to a confined relative POSIX path.

    Raises PathEscapesSandbox for absolute paths, drive letters, parent
    traversal, null bytes, or an empty result.
    """
    if not isinstance(raw, str) or raw == "" or "\x00" in raw:
        raise PathEscapesSandbox(f"invalid path: {raw!r}")
    cleaned = raw.replace("\\", "/")
    if cleaned.startswith("/") or _WINDOWS_DRIVE.match(cleaned):
        raise PathEscapesSandbox(f"absolute path not allowed: {raw!r}")
    parts = []
    for seg in cleaned.split("/"):
        if seg in ("", "."):
            continue
        if seg == "..":
            raise PathEscapesSandbox(f"parent traversal not allowed: {raw!r}")
        parts.append(seg)
    if not parts:
        raise PathEscapesSandbox(f"empty path: {raw!r}")
    normalized = "/".join(parts)
    if normalized == MANIFEST_NAME:
        raise ReservedPath(f"{MANIFEST_NAME} is reserved for archive manifests")
    return normalized


def split_lines(text: str) -> list[str]:
    # plain "\n" split: lossless (join inverts it), unlike splitlines()
    return text.split("\n")


def unified_text_diff(a: str, b: str, label_a: str = "a", label_b: str = "b") -> str:
    lines = difflib.unified_diff(
        split_lines(a), split_lines(b), fromfile=label_a, tofile=label_b, lineterm=""
    )
    return "\n".join(lines)


def content_body(data: bytes, threshold: int) -> dict:
    """Event payload body for file content: inline under the lazy threshold,
    hash+size reference above it."""
    body: dict = {"hash": digest(data), "size_bytes": len(data)}
    if len(data) <= threshold:
        try:
            body["inline"] = {"text": data.decode("utf-8", errors="strict")}
        except UnicodeDecodeError:
            body["inline"] = {"base64": base64.b64encode(data).decode("ascii")}
    return body


def text_body(text: str, threshold: int) -> dict:
    return content_body(text.encode("utf-8"), threshold)


class ContentStore:
    """Append-only hash -> bytes map, shared by all workspaces of a server."""

    def __init__(self):
        self._blobs: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, data: bytes) -> ContentRef:
        h = digest(data)
        with self._lock:
            self._blobs.setdefault(h, bytes(data))
        return ContentRef(hash=h, size_bytes=len(data))

    def get(self, hash_: str) -> bytes:
        with self._lock:
            blob = self._blobs.get(hash_)
        if blob is None:
            raise UnknownContent(f"no content stored for hash {hash_}")
        return blob

    def __contains__(self, hash_: str) -> bool:
        with self._lock:
            return hash_ in self._blobs


class Workspace:
    """Confined directory namespace with per-path linear version chains."""

    def __init__(
        self,
        task_id: str,
        root: Path,
        store: ContentStore,
        config: ServiceConfig,
        emit=None,
    ):
        self.task_id = task_id
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.store = store
        self.config = config
        self._emit = emit
        self._files: dict[str, list[FileVersion]] = {}
        self._live: set[str] = set()
        self._lock = threading.RLock()
        self._warned_size = False

    # -- internals ------------------------------------------------------

    def exclusive(self):
        """Reentrant lock guarding all metadata and tree mutations; tool runs
        hold it so agent and human mutations serialize per workspace."""
        return self._lock

    def _resolve(self, normalized: str) -> Path:
        target = (self.root / normalized).resolve()
        if target != self.root and self.root not in target.parents:
            raise PathEscapesSandbox(f"path resolves outside workspace: {normalized!r}")
        return target

    def _emit_event(self, kind: EventKind, payload: dict) -> None:
        if self._emit is not None:
            self._emit(kind, payload)

    @property
    def total_bytes(self) -> int:
        with self._lock:
            return sum(self._files[p][-1].size_bytes for p in self._live)

    def _check_quota(self, path: str, new_size: int) -> None:
        old = self._files[path][-1].size_bytes if path in self._live else 0
        projected = self.total_bytes - old + new_size
        if projected > self.config.workspace_quota_bytes:
            raise WorkspaceQuotaExceeded(
                f"write of {new_size} bytes would put workspace at {projected} bytes "
                f"(cap {self.config.workspace_quota_bytes})"
            )
        if projected > self.config.workspace_warn_bytes and not self._warned_size:
            self._warned_size = True
            self._emit_event(EventKind.MESSAGE, {
                "notice": "workspace_size_warning",
                "total_bytes": projected,
                "warn_bytes": self.config.workspace_warn_bytes,
            })

    def _append_version(self, path: str, data: bytes, author: Origin) -> FileVersion:
        ref = self.store.put(data)
        chain = self._files.setdefault(path, [])
        version = FileVersion(
            path=path,
            version_no=len(chain) + 1,
            hash=ref.hash,
            size_bytes=ref.size_bytes,
            author=author,
            parent=len(chain) or None,
            created_at=time.time(),
        )
        chain.append(version)
        self._live.add(path)
        return version

    def _file_change_payload(self, version: FileVersion, data: bytes) -> dict:
        prev_no = version.parent
        if prev_no is not None:
            record = self._diff(version.path, prev_no, version.version_no)
            diff_summary = record.summary()
            if not record.binary and len(record.unified.encode("utf-8")) <= self.config.inline_threshold_bytes:
                diff_summary["unified"] = record.unified
        else:
            diff_summary = {"binary": is_binary(data), "changed": True, "created": True}
        payload = version.summary()
        payload["diff"] = diff_summary
        payload["content"] = content_body(data, self.config.inline_threshold_bytes)
        return payload

    # -- operations -------------------------------------------------------

    def write_file(self, path: str, data: bytes, author: Origin, emit: bool = True) -> FileVersion:
        normalized = normalize_path(path)
        with self._lock:
            target = self._resolve(normalized)
            self._check_quota(normalized, len(data))
            version = self._append_version(normalized, data, author)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
            if emit:
                self._emit_event(EventKind.FILE_CHANGE, self._file_change_payload(version, data))
            return version

    def read_head(self, path: str) -> bytes:
        normalized = normalize_path(path)
        with self._lock:
            if normalized not in self._live:
                raise UnknownVersion(f"no such file: {normalized}")
            return self.store.get(self._files[normalized][-1].hash)

    def read_version(self, path: str, version_no: int) -> bytes:
        normalized = normalize_path(path)
        with self._lock:
            chain = self._files.get(normalized)
            if not chain or not (1 <= version_no <= len(chain)):
                raise UnknownVersion(f"{normalized} has no version {version_no}")
            return self.store.get(chain[version_no - 1].hash)

    def head(self, path: str) -> FileVersion | None:
        normalized = normalize_path(path)
        with self._lock:
            if normalized not in self._live:
                return None
            return self._files[normalized][-1]

    def list_heads(self) -> list[FileVersion]:
        with self._lock:
            return [self._files[p][-1] for p in sorted(self._live)]

    def history(self, path: str) -> list[FileVersion]:
        normalized = normalize_path(path)
        with self._lock:
            return list(self._files.get(normalized, []))

    def _diff(self, path: str, v_a: int, v_b: int) -> DiffRecord:
        chain = self._files.get(path)
        if not chain:
            raise UnknownVersion(f"no such file: {path}")
        for v in (v_a, v_b):
            if not (1 <= v <= len(chain)):
                raise UnknownVersion(f"{path} has no version {v}")
        bytes_a = self.store.get(chain[v_a - 1].hash)
        bytes_b = self.store.get(chain[v_b - 1].hash)
        if is_binary(bytes_a) or is_binary(bytes_b):
            return DiffRecord(
                path=path, from_version=v_a, to_version=v_b, binary=True,
                changed=bytes_a != bytes_b, unified="", encoding="",
                lines_added=0, lines_removed=0,
            )
        try:
            text_a, text_b, encoding = bytes_a.decode("utf-8"), bytes_b.decode("utf-8"), "utf-8"
        except UnicodeDecodeError:
            # latin-1 round-trips every byte, keeping the diff applyable
            text_a, text_b, encoding = bytes_a.decode("latin-1"), bytes_b.decode("latin-1"), "latin-1"
        unified = unified_text_diff(text_a, text_b, f"{path}@v{v_a}", f"{path}@v{v_b}")
        # headers only precede the first hunk; after it, the first character
        # is always the line's tag (so deleting a "--" line counts correctly)
        added = removed = 0
        in_hunks = False
        for line in unified.split("\n"):
            if line.startswith("@@ "):
                in_hunks = True
            elif in_hunks:
                added += line.startswith("+")
                removed += line.startswith("-")
        return DiffRecord(
            path=path, from_version=v_a, to_version=v_b, binary=False,
            changed=bytes_a != bytes_b, unified=unified, encoding=encoding,
            lines_added=added, lines_removed=removed,
        )

    def diff_versions(self, path: str, v_a: int, v_b: int) -> DiffRecord:
        normalized = normalize_path(path)
        with self._lock:
            return self._diff(normalized, v_a, v_b)

    def rollback(self, path: str, to_version: int, author: Origin = Origin.HUMAN) -> FileVersion:
        """Append a new head whose content equals ``to_version``; history is kept."""
        normalized = normalize_path(path)
        with self._lock:
            data = self.read_version(normalized, to_version)
            target = self._resolve(normalized)
            self._check_quota(normalized, len(data))
            version = self._append_version(normalized, data, author)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
            payload = self._file_change_payload(version, data)
            payload["rollback_of"] = to_version
            self._emit_event(EventKind.FILE_CHANGE, payload)
            return version

    def record_external_changes(self, author: Origin = Origin.TOOL, emit: bool = True) -> list[FileVersion]:
        """Rescan the directory tree and version files a subprocess created
        or modified; files deleted on disk drop out of the live set."""
        changed: list[FileVersion] = []
        with self._lock:
            on_disk: dict[str, Path] = {}
            for fs_path in sorted(self.root.rglob("*")):
                if fs_path.is_file() and not fs_path.is_symlink():
                    rel = fs_path.relative_to(self.root).as_posix()
                    if rel == MANIFEST_NAME:
                        continue
                    on_disk[rel] = fs_path
            for rel, fs_path in on_disk.items():
                data = fs_path.read_bytes()
                current = self._files.get(rel)
                if rel in self._live and current and current[-1].hash == digest(data):
                    continue
                self._check_quota(rel, len(data))
                version = self._append_version(rel, data, author)
                changed.append(version)
                if emit:
                    self._emit_event(EventKind.FILE_CHANGE, self._file_change_payload(version, data))
            for gone in sorted(self._live - set(on_disk)):
                self._live.discard(gone)
        return changed

    def branch(self, task_id: str, root: Path) -> "Workspace":
        """Copy-on-write fork: shares the content store, copies version chains."""
        with self._lock:
            child = Workspace(task_id, root, self.store, self.config, emit=None)
            child._files = {p: list(chain) for p, chain in self._files.items()}
            child._live = set(self._live)
            for path in child._live:
                data = self.store.get(child._files[path][-1].hash)
                target = child._resolve(path)
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
            return child

    def export_archive(self) -> SnapshotArchive:
        """Zip of every current head plus a MANIFEST.json listing path/hash/size."""
        with self._lock:
            heads = [self._files[p][-1] for p in sorted(self._live)]
            manifest_files = [
                {"path": v.path, "hash": v.hash, "size": v.size_bytes} for v in heads
            ]
            manifest = {
                "hash_algorithm": HASH_ALGORITHM,
                "task_id": self.task_id,
                "files": manifest_files,
            }
            buf = io.BytesIO()
            with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
                info = zipfile.ZipInfo(MANIFEST_NAME, date_time=(1980, 1, 1, 0, 0, 0))
                zf.writestr(info, json.dumps(manifest, indent=2, sort_keys=True))
                for v in heads:
                    info = zipfile.ZipInfo(v.path, date_time=(1980, 1, 1, 0, 0, 0))
                    zf.writestr(info, self.store.get(v.hash))
            return SnapshotArchive(data=buf.getvalue(), manifest=manifest_files)

    def tree_hash(self) -> str:
        """Digest over the sorted (path, head hash) pairs of live files."""
        with self._lock:
            acc = hashlib.sha256()
            for p in sorted(self._live):
                acc.update(p.encode("utf-8"))
                acc.update(b"\x00")
                acc.update(self._files[p][-1].hash.encode("ascii"))
                acc.update(b"\x00")
            return acc.hexdigest()

    def fetch_content(self, hash_: str) -> bytes:
        return self.store.get(hash_)

    def stash_body(self, data: bytes) -> dict:
        """Event payload body for loose content (tool output, diffs): the bytes
        go into the content store first so a lazy reference stays fetchable."""
        self.store.put(data)
        return content_body(data, self.config.inline_threshold_bytes)

    def stash_text(self, text: str) -> dict:
        return self.stash_body(text.encode("utf-8"))
