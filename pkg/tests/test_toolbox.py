from __future__ import annotations

import io
import json
import zipfile

import pytest

from conftest import Recorder, fast_config
from workbench.errors import DuplicateToolName, SchemaViolation, UnknownTool, UnknownVersion
from workbench.events import EventKind
from workbench.toolbox import (
    Effect,
    ParamSpec,
    ToolCall,
    ToolContext,
    ToolDescriptor,
    Toolbox,
    ToolOutput,
    build_default_toolbox,
    validate_arguments,
)
from workbench.workspace import ContentStore, Origin, Workspace


@pytest.fixture
def ctx(tmp_path):
    config = fast_config(tmp_path)
    recorder = Recorder()
    ws = Workspace("task-0001", tmp_path / "files", ContentStore(), config, emit=recorder)
    context = ToolContext(
        task_id="task-0001", workspace=ws, config=config, emit=recorder, session=None,
    )
    context.recorder = recorder
    return context


def _echo_descriptor(name="echo"):
    return ToolDescriptor(
        name=name,
        description="echo its argument",
        params=(ParamSpec("text", "string"),),
        effect=Effect.READ_ONLY,
    )


def _echo(ctx, text: str) -> ToolOutput:
    return ToolOutput(payload={"echo": text})


def test_register_and_list():
    box = Toolbox().register(_echo_descriptor(), _echo)
    assert "echo" in box.names()


def test_duplicate_name_rejected():
    box = Toolbox().register(_echo_descriptor(), _echo)
    with pytest.raises(DuplicateToolName):
        box.register(_echo_descriptor(), _echo)


def test_unknown_tool(ctx):
    box = Toolbox()
    with pytest.raises(UnknownTool):
        box.invoke(ctx, ToolCall("c1", "task-0001", "missing", {}))


def test_schema_validation():
    desc = ToolDescriptor(
        name="t", description="", effect=Effect.READ_ONLY,
        params=(ParamSpec("a", "string"), ParamSpec("b", "integer", required=False)),
    )
    validate_arguments(desc, {"a": "x"})
    validate_arguments(desc, {"a": "x", "b": 3})
    with pytest.raises(SchemaViolation):
        validate_arguments(desc, {})  # missing required
    with pytest.raises(SchemaViolation):
        validate_arguments(desc, {"a": "x", "z": 1})  # unknown arg
    with pytest.raises(SchemaViolation):
        validate_arguments(desc, {"a": 5})  # wrong type
    with pytest.raises(SchemaViolation):
        validate_arguments(desc, {"a": "x", "b": True})  # bool is not integer


def test_invoke_emits_call_before_result(ctx):
    box = Toolbox().register(_echo_descriptor(), _echo)
    result = box.invoke(ctx, ToolCall("c1", "task-0001", "echo", {"text": "hi"}))
    assert result.ok and result.payload == {"echo": "hi"}
    kinds = [k for k, _ in ctx.recorder.events]
    call_idx = kinds.index(EventKind.TOOL_CALL)
    result_idx = kinds.index(EventKind.TOOL_RESULT)
    assert call_idx < result_idx
    call_payload = ctx.recorder.of_kind(EventKind.TOOL_CALL)[0]
    assert call_payload["arguments"] == {"text": "hi"}


def test_handler_error_becomes_failure_result(ctx):
    def boom(ctx_, text: str) -> ToolOutput:
        raise UnknownVersion("nothing here")

    box = Toolbox().register(_echo_descriptor(), boom)
    result = box.invoke(ctx, ToolCall("c1", "task-0001", "echo", {"text": "x"}))
    assert not result.ok
    assert "unknown_version" in result.error
    assert ctx.recorder.of_kind(EventKind.TOOL_RESULT)[0]["outcome"] == "failure"


def test_default_toolbox_contents(tmp_path):
    config = fast_config(tmp_path)
    box = build_default_toolbox(config)
    assert set(box.names()) >= {
        "read_file", "write_file", "list_files", "extract_document",
        "search", "deepen", "execute_code",
    }
    assert "browser" not in box.names()


def test_browser_toggle_registers_stub(ctx, tmp_path):
    config = fast_config(tmp_path, browser_enabled=True)
    box = build_default_toolbox(config)
    assert "browser" in box.names()
    result = box.invoke(ctx, ToolCall("c1", "t", "browser", {"url": "https://x"}))
    assert result.ok
    assert result.payload["kind"] == "not_configured"


def test_read_write_list_round_trip(ctx):
    box = build_default_toolbox(ctx.config)
    write = box.invoke(ctx, ToolCall("c1", "t", "write_file", {"path": "a.txt", "content": "data"}))
    assert write.ok and write.artifacts[0].path == "a.txt"
    read = box.invoke(ctx, ToolCall("c2", "t", "read_file", {"path": "a.txt"}))
    assert read.payload["content"]["inline"]["text"] == "data"
    listing = box.invoke(ctx, ToolCall("c3", "t", "list_files", {}))
    assert [f["path"] for f in listing.payload["files"]] == ["a.txt"]


def test_read_missing_file_is_failure_not_crash(ctx):
    box = build_default_toolbox(ctx.config)
    result = box.invoke(ctx, ToolCall("c1", "t", "read_file", {"path": "ghost.txt"}))
    assert not result.ok


# -- extraction ------------------------------------------------------------------

def test_extract_csv_two_rows(ctx):
    ctx.workspace.write_file("data.csv", b"name,age\nada,36\nalan,41\n", Origin.HUMAN)
    box = build_default_toolbox(ctx.config)
    result = box.invoke(ctx, ToolCall("c1", "t", "extract_document", {"path": "data.csv"}))
    extraction = result.payload["extraction"]
    assert extraction["kind"] == "rows"
    assert extraction["fields"] == ["name", "age"]
    assert extraction["rows"] == [{"name": "ada", "age": "36"}, {"name": "alan", "age": "41"}]
    # sibling artifact written and vetting event emitted
    assert ctx.workspace.read_head("data.csv.extraction.json")
    reasons = [p["reason"] for p in ctx.recorder.of_kind(EventKind.VETTING_REQUEST)]
    assert "review_extraction" in reasons


def test_extract_zip_members_and_recursive_extraction(ctx):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("b.txt", "inner text")
        zf.writestr("sub/c.txt", "deeper")
    ctx.workspace.write_file("a.zip", buf.getvalue(), Origin.HUMAN)
    box = build_default_toolbox(ctx.config)
    result = box.invoke(ctx, ToolCall("c1", "t", "extract_document", {"path": "a.zip"}))
    extraction = result.payload["extraction"]
    assert extraction["members"] == ["b.txt", "sub/c.txt"]
    assert ctx.workspace.read_head("a_extracted/b.txt") == b"inner text"
    assert ctx.workspace.read_head("a_extracted/sub/c.txt") == b"deeper"


def test_extract_zip_slip_member_skipped(ctx):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("ok.txt", "fine")
        zf.writestr("../evil.txt", "escape attempt")
    ctx.workspace.write_file("a.zip", buf.getvalue(), Origin.HUMAN)
    box = build_default_toolbox(ctx.config)
    result = box.invoke(ctx, ToolCall("c1", "t", "extract_document", {"path": "a.zip"}))
    assert result.payload["extraction"]["skipped"] == ["../evil.txt"]
    assert ctx.workspace.head("a_extracted/ok.txt") is not None


def test_extract_image_without_endpoint_degrades_not_fatally(ctx):
    ctx.workspace.write_file("photo.jpg", b"\xff\xd8\xff\xe0fakejpeg", Origin.HUMAN)
    box = build_default_toolbox(ctx.config)
    result = box.invoke(ctx, ToolCall("c1", "t", "extract_document", {"path": "photo.jpg"}))
    assert result.ok  # the run continues
    assert result.payload["extraction"] == {"kind": "not_configured", "modality": "image"}
    reasons = [p["reason"] for p in ctx.recorder.of_kind(EventKind.VETTING_REQUEST)]
    assert "extractor_unavailable" in reasons


def test_extract_unknown_extension_binary_summary(ctx):
    ctx.workspace.write_file("blob.xyz", b"\x00\x01\x02", Origin.HUMAN)
    box = build_default_toolbox(ctx.config)
    result = box.invoke(ctx, ToolCall("c1", "t", "extract_document", {"path": "blob.xyz"}))
    extraction = result.payload["extraction"]
    assert extraction["kind"] == "binary_summary"
    assert extraction["size_bytes"] == 3


def test_extract_json_and_xml(ctx):
    ctx.workspace.write_file("d.json", b'{"k": [1, 2]}', Origin.HUMAN)
    ctx.workspace.write_file("d.xml", b"<root a='1'><child/></root>", Origin.HUMAN)
    box = build_default_toolbox(ctx.config)
    j = box.invoke(ctx, ToolCall("c1", "t", "extract_document", {"path": "d.json"}))
    assert j.payload["extraction"]["data"] == {"k": [1, 2]}
    x = box.invoke(ctx, ToolCall("c2", "t", "extract_document", {"path": "d.xml"}))
    assert x.payload["extraction"]["root"] == "root"


def test_artifact_completeness_tree_delta_equals_artifacts(ctx):
    """After any tool call the tree changes by exactly the listed artifacts."""
    box = build_default_toolbox(ctx.config)
    ctx.workspace.write_file("seed.txt", b"seed", Origin.HUMAN)
    calls = [
        ToolCall("c1", "t", "write_file", {"path": "made.txt", "content": "x"}),
        ToolCall("c2", "t", "execute_code", {"script": "open('run.txt','w').write('y')"}),
        ToolCall("c3", "t", "extract_document", {"path": "seed.txt"}),
        ToolCall("c4", "t", "read_file", {"path": "seed.txt"}),
        ToolCall("c5", "t", "list_files", {}),
    ]
    for call in calls:
        heads_before = {v.path: v.hash for v in ctx.workspace.list_heads()}
        result = box.invoke(ctx, call)
        assert result.ok
        expected = dict(heads_before)
        for version in result.artifacts:
            expected[version.path] = version.hash
        heads_after = {v.path: v.hash for v in ctx.workspace.list_heads()}
        assert heads_after == expected, call.name


def test_search_tool_uses_fixture_backend_and_emits_vetting(ctx, tmp_path):
    fixture_dir = tmp_path / "searches"
    fixture_dir.mkdir()
    (fixture_dir / "q.json").write_text(json.dumps({
        "query": "test query",
        "results": [
            {"url": "https://one", "title": "one", "snippet": "exact test query words"},
            {"url": "https://two", "title": "two", "snippet": "irrelevant"},
        ],
    }))
    config = fast_config(tmp_path, search_fixture_dir=str(fixture_dir))
    ctx.config = config
    box = build_default_toolbox(config)
    result = box.invoke(ctx, ToolCall("c1", "t", "search", {"query": "test query", "k": 2}))
    assert result.ok
    assert result.payload["results"][0]["url"] == "https://one"
    vetting = ctx.recorder.of_kind(EventKind.SEARCH_RESULT)
    assert len(vetting) == 2
    assert vetting[0]["vetting"] == ["accept", "reject", "deepen"]
