"""Admission of input documents into an XML cube.

Every input document is turned into an attribute tree and fused with the
model's minimal-content tree. Accepted documents are re-instantiated in the
merged shape and validated; the others are recorded with the mandatory
paths they lack.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Tuple

from .attree import AttributeTree, LabelPath, format_path, fuse, parse_path, tree_from_document
from .errors import InvalidMCM, IoFailure, MalformedDocument
from .mcm import MCM, ElementDecl, LogicalSchema, logical_schema, minimal_content_tree, validate_mcm
from .validation import XmlSource, as_element, is_valid_value, to_bytes, write_xml


@dataclass(frozen=True)
class FactDocument:
    id: str
    element: ET.Element

    def to_bytes(self) -> bytes:
        return to_bytes(self.element)


@dataclass(frozen=True)
class Rejection:
    document: str
    missing: Tuple[LabelPath, ...]
    reason: str = "missing"


@dataclass(frozen=True)
class XmlCube:
    schema: LogicalSchema
    facts: Tuple[FactDocument, ...] = ()
    rejected: Tuple[Rejection, ...] = ()
    malformed: Tuple[Tuple[str, str], ...] = ()


# -- validation --------------------------------------------------------------


def _problems(el: ET.Element, decl: ElementDecl, prefix: LabelPath, out: List[LabelPath]) -> None:
    path = prefix + (decl.name,)
    if el.tag != decl.name:
        out.append(path)
        return
    declared = {a.name: a for a in decl.attributes}
    for name in el.attrib:
        if name not in declared:
            out.append(path + ("@" + name,))
    for attr in decl.attributes:
        value = el.get(attr.name)
        if value is None:
            if attr.mandatory:
                out.append(path + ("@" + attr.name,))
        elif not is_valid_value(value, attr.type):
            out.append(path + ("@" + attr.name,))
    if el.text and el.text.strip():
        out.append(path)
    seen = set()
    for child in el:
        child_decl = decl.child(child.tag) if isinstance(child.tag, str) else None
        if child_decl is None or child.tag in seen:
            out.append(path + (str(child.tag),))
            continue
        seen.add(child.tag)
        _problems(child, child_decl, path, out)
    for child_decl in decl.children:
        if child_decl.name not in seen and child_decl.is_mandatory():
            out.append(path + (child_decl.name,))


def fact_problems(doc: XmlSource, schema: LogicalSchema) -> List[LabelPath]:
    """Label paths where ``doc`` departs from ``schema`` (empty when valid)."""
    out: List[LabelPath] = []
    _problems(as_element(doc), schema.root, (), out)
    return out


def validate_fact(doc: XmlSource, schema) -> bool:
    """True when ``doc`` is a valid XML fact of ``schema``.

    Structure must match the declarations, mandatory attributes must be
    present, and every present value must parse as its declared type.
    """
    if not isinstance(schema, LogicalSchema):
        schema = LogicalSchema.from_element(schema)
    return not fact_problems(doc, schema)


# -- building ------------------------------------------------------------------


def fact_instances(root: ET.Element, fact_name: str) -> List[ET.Element]:
    """Split a document into its fact-shaped subtrees (outermost ones only)."""
    if root.tag == fact_name:
        return [root]
    found: List[ET.Element] = []

    def walk(el: ET.Element) -> None:
        for child in el:
            if child.tag == fact_name:
                found.append(child)
            else:
                walk(child)

    walk(root)
    return found or [root]


def instantiate(source: ET.Element, merged: AttributeTree) -> ET.Element:
    """Copy the values of ``source`` into the shape of ``merged``.

    Repeated sibling elements contribute their first occurrence only.
    """

    def build(node_id: int, el: ET.Element) -> ET.Element:
        out = ET.Element(el.tag)
        for child_id in merged.children(node_id):
            label = merged.label(child_id)
            if label.startswith("@"):
                value = el.get(label[1:])
                if value is not None:
                    out.set(label[1:], value)
            else:
                sub = el.find(label)
                if sub is not None:
                    out.append(build(child_id, sub))
        return out

    return build(merged.root, source)


def _admit(item, reference: AttributeTree, schema: LogicalSchema):
    doc_id, doc = item
    try:
        root = as_element(doc)
    except (MalformedDocument, IoFailure) as exc:
        return [], [], [(doc_id, str(exc))]
    facts, rejected = [], []
    instances = fact_instances(root, schema.fact_name)
    for j, inst in enumerate(instances, start=1):
        inst_id = doc_id if len(instances) == 1 else f"{doc_id}#{j}"
        outcome = fuse(reference, tree_from_document(inst))
        if not outcome.accepted:
            rejected.append(Rejection(inst_id, outcome.missing, "missing"))
            continue
        fact = instantiate(inst, outcome.merged)
        problems = fact_problems(fact, schema)
        if problems:
            rejected.append(Rejection(inst_id, tuple(problems), "invalid"))
        else:
            facts.append(FactDocument(inst_id, fact))
    return facts, rejected, []


def _label_docs(docs: Iterable) -> List[Tuple[str, XmlSource]]:
    labelled = []
    for i, doc in enumerate(docs):
        if isinstance(doc, tuple) and len(doc) == 2:
            labelled.append((str(doc[0]), doc[1]))
        else:
            labelled.append((f"doc{i + 1}", doc))
    return labelled


def build_cube(m: MCM, docs: Iterable, *, threads: int = 1) -> XmlCube:
    """Run the admission pipeline over ``docs``.

    ``docs`` holds documents (elements, XML text, bytes or paths) or
    ``(id, document)`` pairs. Malformed documents are recorded and skipped.
    Output order follows input order whatever the thread count.
    """
    report = validate_mcm(m)
    if report:
        raise InvalidMCM("; ".join(report))
    schema = logical_schema(m)
    reference = minimal_content_tree(m)
    labelled = _label_docs(docs)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda it: _admit(it, reference, schema), labelled))
    else:
        results = [_admit(it, reference, schema) for it in labelled]
    facts, rejected, malformed = [], [], []
    for f, r, bad in results:
        facts.extend(f)
        rejected.extend(r)
        malformed.extend(bad)
    return XmlCube(schema, tuple(facts), tuple(rejected), tuple(malformed))


# -- persistence ---------------------------------------------------------------


def rejections_element(cube: XmlCube) -> ET.Element:
    root = ET.Element("rejections", {
        "facts": str(len(cube.facts)), "rejected": str(len(cube.rejected)),
        "malformed": str(len(cube.malformed)),
    })
    for rej in cube.rejected:
        el = ET.SubElement(root, "rejected", {"document": rej.document, "reason": rej.reason})
        for path in rej.missing:
            ET.SubElement(el, "path", {"value": format_path(path)})
    for doc_id, message in cube.malformed:
        ET.SubElement(root, "malformed", {"document": doc_id, "message": message})
    return root


def write_cube(cube: XmlCube, out_dir: os.PathLike | str) -> Path:
    """Write ``schema.xml``, ``facts/NNNNNN.xml``, ``manifest.xml``, ``rejections.xml``."""
    out = Path(out_dir)
    stale = out / "facts"
    if stale.is_dir():
        for old in stale.glob("*.xml"):
            old.unlink()
    write_xml(cube.schema.to_element(), out / "schema.xml")
    manifest = ET.Element("manifest")
    for i, fact in enumerate(cube.facts, start=1):
        name = f"{i:06d}.xml"
        write_xml(fact.element, out / "facts" / name)
        ET.SubElement(manifest, "fact", {"id": fact.id, "file": f"facts/{name}"})
    write_xml(manifest, out / "manifest.xml")
    write_xml(rejections_element(cube), out / "rejections.xml")
    return out


def read_cube(cube_dir: os.PathLike | str) -> XmlCube:
    base = Path(cube_dir)
    schema = LogicalSchema.from_element(base / "schema.xml")
    manifest = as_element(base / "manifest.xml")
    facts = tuple(
        FactDocument(el.get("id", ""), as_element(base / el.get("file", "")))
        for el in manifest.findall("fact")
    )
    rejected, malformed = [], []
    report_path = base / "rejections.xml"
    if report_path.exists():
        report = as_element(report_path)
        for el in report.findall("rejected"):
            paths = tuple(parse_path(p.get("value", "")) for p in el.findall("path"))
            rejected.append(Rejection(el.get("document", ""), paths, el.get("reason", "missing")))
        for el in report.findall("malformed"):
            malformed.append((el.get("document", ""), el.get("message", "")))
    return XmlCube(schema, facts, tuple(rejected), tuple(malformed))
