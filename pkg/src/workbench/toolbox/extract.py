"""Modality-dispatched document extraction.

Text-ish formats (txt/json/xml/csv) and zip archives are handled in
process.  Image/audio/video/pdf/office formats are stubs that return a
typed ``not_configured`` payload unless an external extractor endpoint is
configured for the modality; an endpoint that is configured but failing
raises ``ExtractorUnavailable``.  Every extraction writes its payload to a
sibling ``<name>.extraction.json`` artifact and emits a vetting event so a
human can edit or discard the result before the agent builds on it.
"""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
import zipfile
from pathlib import PurePosixPath

from ..errors import ExtractorUnavailable, PathEscapesSandbox
from ..events import EventKind
from ..workspace import Origin, digest, is_binary

MAX_ROWS = 10_000

TEXT_EXTS = {".txt", ".md", ".log"}
STUB_MODALITIES = {
    ".jpg": "image", ".jpeg": "image", ".png": "image", ".gif": "image",
    ".mp3": "audio", ".wav": "audio", ".m4a": "audio",
    ".mov": "video", ".mp4": "video", ".avi": "video",
    ".pdf": "pdf", ".docx": "docx", ".pptx": "pptx", ".xlsx": "xlsx",
}


def _extract_text(data: bytes) -> dict:
    return {"kind": "text", "text": data.decode("utf-8", errors="replace")}


def _extract_json(data: bytes) -> dict:
    try:
        return {"kind": "json", "data": json.loads(data.decode("utf-8", errors="replace"))}
    except json.JSONDecodeError as exc:
        payload = _extract_text(data)
        payload["warning"] = f"invalid json: {exc}"
        return payload


def _outline(element: ET.Element, depth: int = 0, max_depth: int = 2) -> dict:
    node: dict = {"tag": element.tag, "attributes": dict(element.attrib)}
    text = (element.text or "").strip()
    if text:
        node["text"] = text[:200]
    if depth < max_depth:
        children = [_outline(c, depth + 1, max_depth) for c in list(element)[:20]]
        if children:
            node["children"] = children
    else:
        node["child_count"] = len(list(element))
    return node


def _extract_xml(data: bytes) -> dict:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        payload = _extract_text(data)
        payload["warning"] = f"invalid xml: {exc}"
        return payload
    return {"kind": "xml", "root": root.tag, "outline": _outline(root)}


def _extract_csv(data: bytes) -> dict:
    text = data.decode("utf-8", errors="replace")
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for i, row in enumerate(reader):
        if i >= MAX_ROWS:
            break
        rows.append(dict(row))
    return {"kind": "rows", "fields": reader.fieldnames or [], "rows": rows}


def _extract_zip(ctx, path: str, data: bytes) -> dict:
    stem = PurePosixPath(path).stem
    out_dir = f"{stem}_extracted"
    members, skipped, written = [], [], []
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        for info in zf.infolist():
            members.append(info.filename)
            if info.is_dir():
                continue
            try:
                version = ctx.workspace.write_file(
                    f"{out_dir}/{info.filename}", zf.read(info), Origin.TOOL
                )
                written.append(version)
            except PathEscapesSandbox:
                skipped.append(info.filename)
    return {
        "kind": "archive",
        "members": members,
        "extracted_to": out_dir,
        "skipped": skipped,
        "_artifacts": written,
    }


def _call_endpoint(url: str, path: str, data: bytes, timeout_s: float) -> dict:
    import httpx

    try:
        resp = httpx.post(url, content=data, params={"name": path}, timeout=timeout_s)
        resp.raise_for_status()
        return {"kind": "external", "data": resp.json()}
    except Exception as exc:
        raise ExtractorUnavailable(f"extractor endpoint {url} failed: {exc}") from exc


def extract_payload(ctx, path: str, data: bytes) -> dict:
    suffix = PurePosixPath(path).suffix.lower()
    if suffix in TEXT_EXTS:
        return _extract_text(data)
    if suffix == ".json":
        return _extract_json(data)
    if suffix == ".xml":
        return _extract_xml(data)
    if suffix == ".csv":
        return _extract_csv(data)
    if suffix == ".zip":
        return _extract_zip(ctx, path, data)
    if suffix in STUB_MODALITIES:
        modality = STUB_MODALITIES[suffix]
        endpoint = ctx.config.extractor_endpoints.get(modality, "")
        if endpoint:
            return _call_endpoint(endpoint, path, data, ctx.config.search_timeout_s)
        ctx.emit(EventKind.VETTING_REQUEST, {
            "reason": "extractor_unavailable",
            "path": path,
            "modality": modality,
            "detail": f"no {modality} extractor endpoint configured",
        })
        return {"kind": "not_configured", "modality": modality}
    if suffix == "" and not is_binary(data):
        return _extract_text(data)
    # unknown extension: fall back to a binary summary
    return {
        "kind": "binary_summary",
        "extension": suffix,
        "size_bytes": len(data),
        "hash": digest(data),
    }


def extract_document_tool(ctx, path: str):
    from . import ToolOutput

    data = ctx.workspace.read_head(path)
    payload = extract_payload(ctx, path, data)
    artifacts = payload.pop("_artifacts", [])

    artifact_path = f"{path}.extraction.json"
    artifact_bytes = json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True).encode("utf-8")
    version = ctx.workspace.write_file(artifact_path, artifact_bytes, Origin.TOOL)
    artifacts = list(artifacts) + [version]

    ctx.emit(EventKind.VETTING_REQUEST, {
        "reason": "review_extraction",
        "path": path,
        "artifact": artifact_path,
        "kind": payload.get("kind"),
    })
    return ToolOutput(payload={"path": path, "extraction": payload, "artifact": artifact_path},
                      artifacts=artifacts)
