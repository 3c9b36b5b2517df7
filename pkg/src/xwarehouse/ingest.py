"""XML descriptors for heterogeneous source files.

Each source file becomes one complex object with a single subdocument::

    <complexObject id="photos/scan1.png">
      <subdocument source="photos/scan1.png" kind="image">
        <characteristic name="name" value="scan1.png"/>
        <characteristic name="size" value="2048"/>
        <characteristic name="extension" value="png"/>
        <characteristic name="modified" value="2026-01-01T00:00:00Z"/>
      </subdocument>
      <specific>
        <characteristic name="language" value="fr"/>
      </specific>
    </complexObject>

Only filesystem facts are computed. Media-specific characteristics
(duration, resolution, ...) come from the annotation file::

    <annotations>
      <object id="photos/scan1.png">
        <characteristic name="resolution" value="300dpi"/>
      </object>
    </annotations>
"""

from __future__ import annotations

import mimetypes
import os
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import MalformedDocument, UnreadableSource
from .validation import as_element, write_xml

Characteristic = Tuple[str, str]


@dataclass(frozen=True)
class SubDocument:
    source: str
    kind: str
    characteristics: Tuple[Characteristic, ...]

    def get(self, name: str) -> Optional[str]:
        return dict(self.characteristics).get(name)


@dataclass(frozen=True)
class ComplexObjectDescriptor:
    id: str
    subdocuments: Tuple[SubDocument, ...]
    specific: Tuple[Characteristic, ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.specific]
        if len(names) != len(set(names)):
            raise MalformedDocument(f"{self.id}: duplicate specific characteristic")
        for sub in self.subdocuments:
            if sub.get("name") is None or sub.get("size") is None:
                raise MalformedDocument(f"{self.id}: subdocument without name or size")


@dataclass(frozen=True)
class IngestReport:
    descriptors: Tuple[ComplexObjectDescriptor, ...]
    unreadable: Tuple[Tuple[str, str], ...]


def media_kind(path: os.PathLike | str) -> str:
    """Top-level media type guessed from the extension (``image``, ``text``, ...) or ``unknown``."""
    guessed, _ = mimetypes.guess_type(str(path), strict=False)
    return guessed.split("/")[0] if guessed else "unknown"


def _timestamp(seconds: float) -> str:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def describe_file(path: Path, ident: str, mtime: Optional[str] = None) -> SubDocument:
    try:
        st = path.stat()
        if not path.is_file():
            raise UnreadableSource(f"{ident}: not a regular file")
        with open(path, "rb"):
            pass
    except OSError as exc:
        raise UnreadableSource(f"{ident}: {exc.strerror or exc}") from exc
    chars = [("name", path.name), ("size", str(st.st_size))]
    if path.suffix:
        chars.append(("extension", path.suffix[1:].lower()))
    chars.append(("modified", mtime if mtime is not None else _timestamp(st.st_mtime)))
    return SubDocument(ident, media_kind(path), tuple(chars))


def read_annotations(source) -> Dict[str, Tuple[Characteristic, ...]]:
    root = as_element(source)
    if root.tag != "annotations":
        raise MalformedDocument("annotation file root must be <annotations>")
    out: Dict[str, Tuple[Characteristic, ...]] = {}
    for obj in root.findall("object"):
        ident = obj.get("id")
        if ident is None:
            raise MalformedDocument("annotation object without id")
        chars = dict(out.get(ident, ()))
        for c in obj.findall("characteristic"):
            name = c.get("name")
            if name is None:
                raise MalformedDocument(f"{ident}: characteristic without name")
            chars[name] = c.get("value", "")
        out[ident] = tuple(chars.items())
    return out


def source_files(directory: os.PathLike | str) -> List[Tuple[str, Path]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise UnreadableSource(f"{directory}: source directory not found")
    return sorted(((p.relative_to(directory).as_posix(), p) for p in directory.rglob("*")
                   if not p.is_dir()), key=lambda e: e[0])


def describe(sources, annotations=None, *, mtime: Optional[str] = None, threads: int = 1) -> IngestReport:
    """One descriptor per readable source; unreadable ones are recorded.

    ``sources`` is a directory or a sequence of paths / (id, path) pairs.
    Output is ordered by id. ``mtime`` pins the ``modified`` characteristic,
    for byte-stable output.
    """
    if isinstance(sources, (str, os.PathLike)):
        entries = source_files(sources)
    else:
        entries = sorted(((e[0], Path(e[1])) if isinstance(e, tuple) else (Path(e).as_posix(), Path(e))
                          for e in sources), key=lambda e: e[0])
    notes = read_annotations(annotations) if annotations is not None else {}

    def one(entry):
        ident, path = entry
        try:
            return describe_file(path, ident, mtime), None
        except UnreadableSource as exc:
            return None, (ident, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, entries))
    else:
        results = [one(e) for e in entries]
    descriptors, unreadable = [], []
    for (ident, _), (sub, failure) in zip(entries, results):
        if failure is not None:
            unreadable.append(failure)
            continue
        descriptors.append(ComplexObjectDescriptor(ident, (sub,), notes.get(ident, ())))
    return IngestReport(tuple(descriptors), tuple(unreadable))


# -- serialization ---------------------------------------------------------------------


def descriptor_element(d: ComplexObjectDescriptor) -> ET.Element:
    root = ET.Element("complexObject", {"id": d.id})
    for sub in d.subdocuments:
        s = ET.SubElement(root, "subdocument", {"source": sub.source, "kind": sub.kind})
        for name, value in sub.characteristics:
            ET.SubElement(s, "characteristic", {"name": name, "value": value})
    if d.specific:
        specific_el = ET.SubElement(root, "specific")
        for name, value in d.specific:
            ET.SubElement(specific_el, "characteristic", {"name": name, "value": value})
    return root


def read_descriptor(source) -> ComplexObjectDescriptor:
    root = as_element(source)
    if root.tag != "complexObject" or root.get("id") is None:
        raise MalformedDocument("not a complex object descriptor")

    def chars(el) -> Tuple[Characteristic, ...]:
        return tuple((c.get("name", ""), c.get("value", "")) for c in el.findall("characteristic"))

    subs = tuple(SubDocument(s.get("source", ""), s.get("kind", "unknown"), chars(s))
                 for s in root.findall("subdocument"))
    specific_el = root.find("specific")
    return ComplexObjectDescriptor(root.get("id"), subs, chars(specific_el) if specific_el is not None else ())


def descriptor_filename(ident: str) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in ident)
    return safe + ".xml"


def write_report(report: IngestReport, out: os.PathLike | str) -> List[Path]:
    """One descriptor file per object, plus ``unreadable.xml`` listing failures."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    seen = set()
    for d in report.descriptors:
        name = descriptor_filename(d.id)
        stem = name[:-4]
        n = 1
        while name in seen:
            n += 1
            name = f"{stem}~{n}.xml"
        seen.add(name)
        written.append(write_xml(descriptor_element(d), out / name))
    failures = ET.Element("unreadable")
    for ident, reason in report.unreadable:
        ET.SubElement(failures, "source", {"id": ident, "reason": reason})
    written.append(write_xml(failures, out / "unreadable.xml"))
    return written


def read_descriptors(directory: os.PathLike | str) -> List[ComplexObjectDescriptor]:
    directory = Path(directory)
    return sorted((read_descriptor(p) for p in sorted(directory.glob("*.xml")) if p.name != "unreadable.xml"),
                  key=lambda d: d.id)
