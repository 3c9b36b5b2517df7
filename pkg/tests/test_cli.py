import shutil
from pathlib import Path

import pytest

from oracles import naive_evaluate
from xwarehouse import __version__
from xwarehouse.cli import run
from xwarehouse.query import read_query, read_result
from xwarehouse.store import read_store
from xwarehouse.viewsel import read_views

SAMPLE = Path(__file__).resolve().parent.parent / "sample"


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def pipeline(work):
    """Every subcommand in order on the bundled sample; returns produced paths."""
    w = Path(work)
    steps = [
        ["ingest", "--src", str(SAMPLE / "sources"), "--annotations", str(SAMPLE / "annotations.xml"),
         "--out", str(w / "ods"), "--mtime", "2026-01-01T00:00:00Z"],
        ["build-cube", "--mcm", str(SAMPLE / "mcm.xml"), "--docs", str(SAMPLE / "docs"), "--out", str(w / "cube")],
        ["import", "--cube", str(w / "cube"), "--out", str(w / "store")],
        ["index", "build", "--store", str(w / "store"), "--index", str(w / "Index.xml")],
        ["index", "check", "--store", str(w / "store"), "--index", str(w / "Index.xml")],
        ["views", "select", "--store", str(w / "store"), "--workload", str(SAMPLE / "workload"),
         "--threshold", "0.3", "--budget", "100000", "--lam", "0", "--out", str(w / "selection.xml")],
        ["views", "materialize", "--store", str(w / "store"), "--selection", str(w / "selection.xml"),
         "--out", str(w / "views")],
        ["opac", "--store", str(w / "store"), "--dimension", "Dim0", "--measures", "quantity,amount",
         "--k", "3", "--out", str(w / "opac")],
        ["mine-structure", "--corpus", str(SAMPLE / "docs"), "--minsup", "0.3", "--minconf", "0.8",
         "--out", str(w / "rules.xml")],
    ]
    for argv in steps:
        assert run(argv) == 0, argv
    for q in sorted((SAMPLE / "workload").glob("*.xml")):
        assert run(["query", "--store", str(w / "store"), "--query", str(q),
                    "--out", str(w / "results" / "direct" / q.name)]) == 0
        assert run(["query", "--store", str(w / "store"), "--query", str(q), "--via-index", str(w / "Index.xml"),
                    "--out", str(w / "results" / "indexed" / q.name)]) == 0
    return w


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    return pipeline(tmp_path_factory.mktemp("run1"))


def test_full_pipeline_artifacts(pipeline_run):
    w = pipeline_run
    for rel in ("ods/unreadable.xml", "cube/schema.xml", "store/Dimensions.xml", "store/Facts.xml", "Index.xml",
                "selection.xml", "opac/dendrogram.xml", "opac/scores.xml", "opac/opac3.xml", "rules.xml",
                "rules.dtd.xml"):
        assert (w / rel).is_file(), rel
    assert list((w / "views").glob("*.xml"))


def test_pipeline_equivalence(pipeline_run):
    w = pipeline_run
    s = read_store(w / "store")
    views = read_views(w / "views")
    for q_path in sorted((SAMPLE / "workload").glob("*.xml")):
        q = read_query(q_path)
        direct = (w / "results" / "direct" / q_path.name).read_bytes()
        assert (w / "results" / "indexed" / q_path.name).read_bytes() == direct
        header, rows = read_result(direct)
        assert len(rows) == len(naive_evaluate(s, q))
        if any(v.covers(q) for v in views):
            out = w / "results" / "views" / q_path.name
            assert run(["views", "answer", "--views", str(w / "views"), "--query", str(q_path),
                        "--out", str(out)]) == 0
            assert out.read_bytes() == direct


def test_level_query(pipeline_run, tmp_path):
    w = pipeline_run
    q = tmp_path / "q.xml"
    q.write_text('<query id="lv"><group dimension="Dim0" attribute="opac3"/>'
                 '<aggregate function="SUM" measure="quantity"/></query>')
    assert run(["query", "--store", str(w / "store"), "--query", str(q), "--level", str(w / "opac" / "opac3.xml"),
                "--out", str(tmp_path / "r.xml")]) == 0
    _, rows = read_result(tmp_path / "r.xml")
    assert 1 <= len(rows) <= 3


def test_reruns_byte_identical(tmp_path_factory):
    first = pipeline(tmp_path_factory.mktemp("first"))
    second = pipeline(tmp_path_factory.mktemp("second"))
    assert snapshot(second) == snapshot(first)


def test_inputs_untouched(pipeline_run):
    before = snapshot(SAMPLE)
    pipeline(pipeline_run.parent / "run3")
    assert snapshot(SAMPLE) == before


def test_exit_codes(tmp_path, capsys, pipeline_run):
    assert run(["query", "--store", str(tmp_path / "absent"), "--query", str(SAMPLE / "workload" / "q001.xml")]) == 1
    assert "usage" in capsys.readouterr().err
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
    assert run(["nope"]) == 1
    assert run(["mine-structure", "--corpus", str(SAMPLE / "docs"), "--minsup", "2", "--minconf", "0.5",
                "--out", str(tmp_path / "r.xml")]) == 1
    bad = tmp_path / "bad.xml"
    for clause in ("<group dimension='Dim0' attribute='nope'/>", "<groupBy dimension='Dim0' attribute='level0'/>"):
        bad.write_text(f"<query>{clause}<aggregate function='COUNT' measure='*'/></query>")
        assert run(["query", "--store", str(pipeline_run / "store"), "--query", str(bad)]) == 2


def test_stale_index_check(pipeline_run, tmp_path):
    store = tmp_path / "store"
    shutil.copytree(pipeline_run / "store", store)
    facts = (store / "Facts.xml").read_text()
    cut = facts.rindex("<Cell")
    (store / "Facts.xml").write_text(facts[:cut] + "</Facts>\n")
    assert run(["index", "check", "--store", str(store), "--index", str(pipeline_run / "Index.xml")]) == 2


def test_env_default(monkeypatch, pipeline_run, tmp_path):
    monkeypatch.setenv("XWAREHOUSE_DATA", str(pipeline_run))
    assert run(["query", "--query", str(SAMPLE / "workload" / "q001.xml"), "--out", str(tmp_path / "r.xml")]) == 0
    assert (tmp_path / "r.xml").read_bytes() == (pipeline_run / "results" / "direct" / "q001.xml").read_bytes()


def test_gen(tmp_path):
    assert run(["gen", "--out", str(tmp_path), "--cells", "20", "--queries", "3", "--seed", "2"]) == 0
    assert len(list((tmp_path / "docs").glob("*.xml"))) == 20
    assert len(list((tmp_path / "workload").glob("*.xml"))) == 3
