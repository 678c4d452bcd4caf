from __future__ import annotations

import json

import pytest

from graphmem.cli import main
from graphmem.store import Graph


@pytest.fixture
def cli(tmp_path, capsys):
    graph = tmp_path / "g.kmho"

    def run(*argv):
        code = main(["--graph", str(graph), "--project", "demo", "--clock", "logical", *argv])
        out = capsys.readouterr()
        return code, out.out, out.err

    run.graph = graph
    return run


def test_ingest_recall_show(cli):
    code, out, _ = cli("ingest", "--title", "Favorite color", "--summary", "User's favorite color is blue",
                       "--topics", "preferences", "--tags", "color,blue")
    assert code == 0
    assert out.strip() == "kref://demo/memory/favorite-color.conversation?r=1"
    code, out, _ = cli("recall", "favorite color")
    assert code == 0
    hit = json.loads(out.splitlines()[0])
    assert hit["kref"].endswith("favorite-color.conversation?r=1")
    assert hit["search_mode"] == "hybrid"
    code, out, _ = cli("show", "kref://demo/memory/favorite-color.conversation")
    assert json.loads(out)["summary"] == "User's favorite color is blue"


def test_second_ingest_revises(cli):
    cli("ingest", "--title", "Favorite color", "--summary", "blue")
    code, out, _ = cli("ingest", "--title", "Favorite color", "--summary", "black")
    assert out.strip().endswith("?r=2")
    g = Graph.load(cli.graph)
    assert len(g.edges()) == 1 and g.edges()[0].edge_type.value == "SUPERSEDES"


def test_contract_and_rollback(cli):
    cli("ingest", "--title", "Fact", "--summary", "sky is green", "--kind", "fact")
    k = "kref://demo/memory/fact.fact"
    code, out, _ = cli("contract", k, "--value", "sky is green")
    assert code == 0
    assert cli("show", k)[0] == 3  # deprecated items are hidden by default
    assert cli("show", k + "?r=1", "--include-deprecated")[0] == 0
    assert cli("rollback", k, "latest", "1")[0] == 0
    assert json.loads(cli("show", k)[1])["deprecated"] is False


def test_inspect_impact_and_path(cli):
    cli("ingest", "--title", "Color pref", "--name", "color-pref", "--kind", "decision", "--summary", "warm tones")
    cli("ingest", "--title", "Palette", "--kind", "decision", "--summary", "earth tones",
        "--depends-on", "kref://demo/memory/color-pref.decision?r=1")
    code, out, _ = cli("inspect", "kref://demo/memory/color-pref.decision?r=1", "--impact", "--depth", "2")
    assert code == 0
    visited = [v["kref"] for v in json.loads(out)["visited"]]
    assert visited == ["kref://demo/memory/palette.decision?r=1"]
    code, out, _ = cli("inspect", "kref://demo/memory/palette.decision?r=1", "--path",
                       "kref://demo/memory/color-pref.decision?r=1")
    assert json.loads(out)["path"] == [["kref://demo/memory/color-pref.decision?r=1", "DEPENDS_ON"]]
    code, out, _ = cli("inspect", "kref://demo/memory/color-pref.decision?r=1", "--impact", "--dot")
    assert out.startswith("digraph")


def test_exit_codes(cli):
    assert cli("show", "kref://demo/memory/missing.fact")[0] == 3
    assert cli("show", "not-a-kref")[0] == 2
    cli("ingest", "--title", "x", "--summary", "y")
    assert cli("inspect", "kref://demo/memory/x.conversation?r=1", "--depth", "0")[0] == 2
    assert cli("inspect", "kref://demo/memory/x.conversation?r=1", "--depth", "21")[0] == 2
    assert cli("recall", "x", "-k", "0")[0] == 2
    assert cli("dream", "--ratio", "0.95")[0] == 2


def test_dream_and_resume(cli, tmp_path):
    for i in range(4):
        cli("ingest", "--title", f"note {i}", "--summary", f"note number {i}", "--topics", "work")
    code, out, _ = cli("dream", "--dry-run")
    assert code == 0 and "## Cursor" in out
    code, out, _ = cli("dream", "--report-dir", str(tmp_path / "reports"))
    assert code == 0
    assert out.strip().startswith("kref://demo/_dream_state/_dream_state.system?r=")
    assert list((tmp_path / "reports").glob("dream-report-*.md"))
    code, out, _ = cli("resume", "--report-dir", str(tmp_path / "reports"))
    assert code == 0


def test_dream_guard_exit_code(cli, tmp_path):
    for i in range(4):
        cli("ingest", "--title", f"dup {i}", "--summary", "the same thing")
    code, out, _ = cli("dream", "--ratio", "0.5", "--report-dir", str(tmp_path))
    assert code == 4


def test_agm_check(cli):
    code, out, _ = cli("agm-check")
    assert code == 0
    assert "49 scenarios: 49 passed, 0 failed." in out
    code, out, _ = cli("agm-check", "--only", "K2/simple", "--json")
    assert json.loads(out)["total"] == 1
    assert cli("agm-check", "--only", "Nope")[0] == 2


def test_export_import_round_trip(cli, tmp_path):
    cli("ingest", "--title", "a", "--summary", "alpha", "--artifact", "doc=/tmp/a.md")
    cli("ingest", "--title", "a", "--summary", "alpha two")
    dump = tmp_path / "dump.jsonl"
    events = tmp_path / "events.jsonl"
    dot = tmp_path / "g.dot"
    assert cli("export", "--jsonl", str(dump), "--events", str(events), "--dot", str(dot))[0] == 0
    original = cli.graph.read_bytes()
    cli.graph.unlink()
    assert cli("import", "--jsonl", str(dump))[0] == 0
    assert cli.graph.read_bytes() == original
    assert len(events.read_text().splitlines()) == 3
    assert cli("export")[0] == 2
