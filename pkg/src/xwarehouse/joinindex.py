"""Join-eliminating index: dimension attributes inlined into every cell.

``Index.xml`` layout::

    <Index fact="Sales" store="<sha256 of store>" built="2026-01-01T00:00:00Z">
      <Catalog>
        <Measure name="amount" type="decimal"/>
        <Dimension name="Time"><Attribute name="year" type="integer"/></Dimension>
      </Catalog>
      <Cell>
        <dimension id="Time" node="Time-3f2a9c01d4">
          <attribute name="year" value="1999"/>
        </dimension>
        <fact id="amount" value="12.50"/>
      </Cell>
    </Index>

Dimensions follow catalog order and attributes are sorted by name, so the
file is bit-stable. ``built`` is omitted when no timestamp is supplied.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import MalformedDocument, StaleIndex
from .query import AnalyticalQuery, Catalog, Compiled, ResultTable, compile_query, run
from .store import NODE_ATTRIBUTE, PlanStats, XCubeStore
from .validation import as_element, format_value, parse_value, write_xml

INDEX_FILE = "Index.xml"


@dataclass(frozen=True)
class IndexDimension:
    id: str
    node: str
    attributes: Tuple[Tuple[str, object], ...]


@dataclass(frozen=True)
class IndexCell:
    facts: Tuple[Tuple[str, object], ...]
    dimensions: Tuple[IndexDimension, ...]


@dataclass(frozen=True)
class Provenance:
    store: str
    built: Optional[str] = None


@dataclass(frozen=True)
class IndexDocument:
    fact_name: str
    measure_catalog: Tuple[Tuple[str, str], ...]
    dimension_catalog: Tuple[Tuple[str, Tuple[Tuple[str, str], ...]], ...]
    cells: Tuple[IndexCell, ...]
    provenance: Provenance

    @cached_property
    def catalog(self) -> Catalog:
        return Catalog(self.measure_catalog, self.dimension_catalog)

    @cached_property
    def columns(self) -> Dict[Tuple[str, str], list]:
        """Inlined attribute values as one list per (dimension, attribute)."""
        cols: Dict[Tuple[str, str], list] = {}
        n = len(self.cells)
        for dim, attrs in self.dimension_catalog:
            cols[(dim, NODE_ATTRIBUTE)] = [None] * n
            for attr, _ in attrs:
                cols[(dim, attr)] = [None] * n
        for i, cell in enumerate(self.cells):
            for d in cell.dimensions:
                cols[(d.id, NODE_ATTRIBUTE)][i] = d.node
                for attr, value in d.attributes:
                    cols[(d.id, attr)][i] = value
        return cols

    @cached_property
    def fact_maps(self) -> List[Dict[str, object]]:
        return [dict(cell.facts) for cell in self.cells]

    def warm(self) -> "IndexDocument":
        self.columns, self.fact_maps
        return self


def build_index(s: XCubeStore, built: Optional[str] = None) -> IndexDocument:
    """Denormalize every fact cell with the attributes of its members.

    Raises ``DanglingCoordinate`` when a cell references a missing member.
    """
    cells = []
    for cell in s.cells:
        coords = dict(cell.coordinates)
        dims = []
        for dim in s.dimension_names:
            node = coords.get(dim)
            if node is None:
                continue
            member = s.member(dim, node)
            dims.append(IndexDimension(dim, node, tuple(sorted(member.attributes, key=lambda a: a[0]))))
        cells.append(IndexCell(cell.measures, tuple(dims)))
    return IndexDocument(s.fact_name, s.measure_catalog, s.dimension_catalog, tuple(cells),
                         Provenance(s.fingerprint, built))


# -- query rewriting ---------------------------------------------------------------


@dataclass(frozen=True)
class IndexPath:
    dimension: str
    attribute: str

    @property
    def xpath(self) -> str:
        base = f"Cell/dimension[@id='{self.dimension}']"
        if self.attribute == NODE_ATTRIBUTE:
            return base + "/@node"
        return base + f"/attribute[@name='{self.attribute}']/@value"


@dataclass(frozen=True)
class FactPath:
    measure: str

    @property
    def xpath(self) -> str:
        if self.measure == "*":
            return "Cell"
        return f"Cell/fact[@id='{self.measure}']/@value"


@dataclass(frozen=True)
class IndexQuery:
    """A query addressed entirely within index cells; no join step."""

    predicates: Tuple[Tuple[IndexPath, str, str], ...]
    group_by: Tuple[IndexPath, ...]
    aggregates: Tuple[Tuple[str, FactPath], ...]
    source: AnalyticalQuery

    @property
    def plan(self) -> Tuple[str, ...]:
        return ("scan Index.xml/Cell", "filter", "group", "aggregate")


def rewrite_query(q: AnalyticalQuery, catalog=None) -> IndexQuery:
    """Re-address selections, groupings and aggregates to inlined cell paths.

    With a ``catalog`` (store, index, or ``Catalog``) unknown attributes raise
    ``UnknownAttribute``.
    """
    if catalog is not None:
        cat = Catalog.of(catalog)
        for ref in q.attributes():
            cat.attribute_type(*ref)
    return IndexQuery(
        tuple((IndexPath(p.dimension, p.attribute), p.op, p.literal) for p in q.selections),
        tuple(IndexPath(d, a) for d, a in q.group_by),
        tuple((a.function, FactPath(a.measure)) for a in q.aggregates),
        q,
    )


def _index_records(i: IndexDocument, compiled: Compiled):
    n = len(i.cells)
    facts = i.fact_maps
    if not compiled.refs:
        return (((), f) for f in facts)
    columns = [i.columns.get(ref) or [None] * n for ref in compiled.refs]
    return zip(zip(*columns), facts)


def evaluate_indexed(i: IndexDocument, q: AnalyticalQuery, store: Optional[XCubeStore] = None,
                     stats: Optional[PlanStats] = None) -> ResultTable:
    """Answer ``q`` from the index alone.

    When ``store`` is given its fingerprint must match the index provenance,
    else ``StaleIndex``. No member lookup happens on this route.
    """
    if store is not None and store.fingerprint != i.provenance.store:
        raise StaleIndex("index was built from a different store state; rebuild it")
    rewritten = rewrite_query(q, i.catalog)
    compiled = compile_query(rewritten.source, i.catalog)
    if stats is not None:
        stats.cells_scanned += len(i.cells)
    return run(compiled, _index_records(i, compiled))


def reconstruct(i: IndexDocument):
    """Cells and member tuples recovered from the index alone."""
    return [
        (cell.facts, tuple((d.id, d.node, d.attributes) for d in cell.dimensions))
        for cell in i.cells
    ]


# -- serialization -------------------------------------------------------------------


def index_element(i: IndexDocument) -> ET.Element:
    root = ET.Element("Index", {"fact": i.fact_name, "store": i.provenance.store})
    if i.provenance.built is not None:
        root.set("built", i.provenance.built)
    catalog = ET.SubElement(root, "Catalog")
    for name, type_ in i.measure_catalog:
        ET.SubElement(catalog, "Measure", {"name": name, "type": type_})
    for dim, attrs in i.dimension_catalog:
        d = ET.SubElement(catalog, "Dimension", {"name": dim})
        for attr, type_ in attrs:
            ET.SubElement(d, "Attribute", {"name": attr, "type": type_})
    for cell in i.cells:
        c = ET.SubElement(root, "Cell")
        for dim in cell.dimensions:
            d = ET.SubElement(c, "dimension", {"id": dim.id, "node": dim.node})
            for attr, value in dim.attributes:
                ET.SubElement(d, "attribute", {"name": attr, "value": format_value(value)})
        for name, value in cell.facts:
            ET.SubElement(c, "fact", {"id": name, "value": format_value(value)})
    return root


def write_index(i: IndexDocument, path: os.PathLike | str) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / INDEX_FILE
    return write_xml(index_element(i), path)


def read_index(path: os.PathLike | str) -> IndexDocument:
    path = Path(path)
    if path.is_dir():
        path = path / INDEX_FILE
    root = as_element(path)
    if root.tag != "Index" or root.get("store") is None:
        raise MalformedDocument(f"{path}: not an index document")
    catalog_el = root.find("Catalog")
    if catalog_el is None:
        raise MalformedDocument(f"{path}: index has no catalog")
    measures = tuple((m.get("name", ""), m.get("type", "decimal")) for m in catalog_el.findall("Measure"))
    dims = tuple(
        (d.get("name", ""), tuple((a.get("name", ""), a.get("type", "string")) for a in d.findall("Attribute")))
        for d in catalog_el.findall("Dimension")
    )
    mtypes = dict(measures)
    atypes = {d: dict(a) for d, a in dims}
    cells = []
    try:
        for c in root.findall("Cell"):
            dimensions = []
            for d in c.findall("dimension"):
                types = atypes[d.get("id")]
                attrs = tuple((a.get("name"), parse_value(a.get("value", ""), types[a.get("name")]))
                              for a in d.findall("attribute"))
                dimensions.append(IndexDimension(d.get("id"), d.get("node", ""), attrs))
            facts = tuple((f.get("id"), parse_value(f.get("value", ""), mtypes[f.get("id")]))
                          for f in c.findall("fact"))
            cells.append(IndexCell(facts, tuple(dimensions)))
    except (KeyError, ValueError) as exc:
        raise MalformedDocument(f"{path}: inconsistent index cell ({exc})") from exc
    return IndexDocument(root.get("fact", ""), measures, dims, tuple(cells),
                         Provenance(root.get("store"), root.get("built")))
