import os
import random
import string
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xwarehouse.errors import MalformedDocument
from xwarehouse.ingest import (
    ComplexObjectDescriptor,
    SubDocument,
    describe,
    descriptor_element,
    media_kind,
    read_annotations,
    read_descriptor,
    read_descriptors,
    write_report,
)
from xwarehouse.validation import to_bytes

SAMPLE = Path(__file__).resolve().parent.parent / "sample"
PINNED = "2026-01-01T00:00:00Z"


def test_empty_file(tmp_path):
    (tmp_path / "empty.txt").write_bytes(b"")
    [d] = describe(tmp_path).descriptors
    assert d.subdocuments[0].get("size") == "0"
    assert d.subdocuments[0].kind == "text"


def test_annotations_merged():
    report = describe(SAMPLE / "sources", SAMPLE / "annotations.xml", mtime=PINNED)
    by_id = {d.id: d for d in report.descriptors}
    assert ("language", "fr") in by_id["notes/record.txt"].specific
    assert dict(by_id["images/scan1.png"].specific)
    assert by_id["images/scan1.png"].subdocuments[0].kind == "image"


def test_sizes_match_stat(tmp_path):
    rng = random.Random(3)
    expected = {}
    for i in range(25):
        sub = tmp_path / rng.choice(["", "a", "b/c"])
        sub.mkdir(parents=True, exist_ok=True)
        name = f"f{i}." + rng.choice(["txt", "png", "wav", "bin", "xml"])
        data = os.urandom(rng.randint(0, 5000))
        (sub / name).write_bytes(data)
        expected[(sub / name).relative_to(tmp_path).as_posix()] = len(data)
    report = describe(tmp_path)
    assert len(report.descriptors) == 25
    for d in report.descriptors:
        path = tmp_path / d.id
        assert int(d.subdocuments[0].get("size")) == os.stat(path).st_size == expected[d.id]
        assert d.subdocuments[0].get("name") == path.name
    assert [d.id for d in report.descriptors] == sorted(expected)


def test_unreadable_recorded(tmp_path):
    (tmp_path / "ok.txt").write_text("x")
    report = describe([tmp_path / "ok.txt", tmp_path / "missing.txt", tmp_path])
    assert [d.id for d in report.descriptors] == [(tmp_path / "ok.txt").as_posix()]
    assert len(report.unreadable) == 2


def test_idempotent_and_threads(tmp_path):
    out1, out2, out3 = tmp_path / "o1", tmp_path / "o2", tmp_path / "o3"
    write_report(describe(SAMPLE / "sources", SAMPLE / "annotations.xml", mtime=PINNED), out1)
    write_report(describe(SAMPLE / "sources", SAMPLE / "annotations.xml", mtime=PINNED), out2)
    write_report(describe(SAMPLE / "sources", SAMPLE / "annotations.xml", mtime=PINNED, threads=4), out3)
    names = sorted(p.name for p in out1.iterdir())
    for other in (out2, out3):
        assert sorted(p.name for p in other.iterdir()) == names
        for n in names:
            assert (out1 / n).read_bytes() == (other / n).read_bytes()
    assert [d.id for d in read_descriptors(out1)] == sorted(d.id for d in describe(SAMPLE / "sources").descriptors)


def test_descriptor_invariants():
    sub = SubDocument("a", "text", (("name", "a"), ("size", "1")))
    with pytest.raises(MalformedDocument):
        ComplexObjectDescriptor("a", (sub,), (("k", "1"), ("k", "2")))
    with pytest.raises(MalformedDocument):
        ComplexObjectDescriptor("a", (SubDocument("a", "text", (("name", "a"),)),))


def test_bad_annotation_file(tmp_path):
    (tmp_path / "a.xml").write_text("<notes/>")
    with pytest.raises(MalformedDocument):
        read_annotations(tmp_path / "a.xml")


def test_media_kind():
    assert media_kind("x.png") == "image"
    assert media_kind("x.wav") == "audio"
    assert media_kind("x.qqq") == "unknown"


words = st.text(alphabet=string.ascii_letters + string.digits + " éà-_./", min_size=1, max_size=12)


@st.composite
def descriptors(draw):
    subs = []
    for _ in range(draw(st.integers(1, 3))):
        extra = draw(st.dictionaries(words.filter(lambda w: w not in ("name", "size")), words, max_size=3))
        chars = (("name", draw(words)), ("size", str(draw(st.integers(0, 10**9))))) + tuple(extra.items())
        subs.append(SubDocument(draw(words), draw(st.sampled_from(["text", "image", "audio", "unknown"])), chars))
    specific = tuple(draw(st.dictionaries(words, words, max_size=4)).items())
    return ComplexObjectDescriptor(draw(words), tuple(subs), specific)


@settings(max_examples=200, deadline=None)
@given(descriptors())
def test_descriptor_round_trip(d):
    assert read_descriptor(to_bytes(descriptor_element(d))) == d
