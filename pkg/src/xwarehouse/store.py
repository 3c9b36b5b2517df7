"""Two-document physical warehouse: ``Dimensions.xml`` and ``Facts.xml``.

Layout of ``Dimensions.xml``::

    <Dimensions fact="Sales">
      <Dimension name="Time">
        <Attribute name="year" type="integer"/>
        <Member node="Time-3f2a9c01d4">
          <attribute name="year" value="1999"/>
        </Member>
      </Dimension>
    </Dimensions>

Layout of ``Facts.xml``::

    <Facts fact="Sales">
      <Measure name="amount" type="decimal"/>
      <Cell Time="Time-3f2a9c01d4" Product="Product-07be11aa90">
        <measure name="amount" value="12.50"/>
      </Cell>
    </Facts>

Cell attributes reference members in dimension-catalog order; measure
children follow measure-catalog order. Member identifiers are content
hashes of the member's attribute tuple.
"""

from __future__ import annotations

import hashlib
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from .cube import XmlCube
from .errors import (
    DanglingCoordinate,
    InconsistentFact,
    MalformedDocument,
    MalformedStoreFile,
    UnknownAttribute,
    UnknownMeasure,
)
from .mcm import ElementDecl
from .validation import as_element, format_value, parse_value, to_bytes, write_xml

FACTS_FILE = "Facts.xml"
DIMENSIONS_FILE = "Dimensions.xml"

# pseudo-attribute addressing a member's identifier in queries
NODE_ATTRIBUTE = "@node"


@dataclass(frozen=True)
class DimensionMember:
    dimension: str
    node: str
    attributes: Tuple[Tuple[str, object], ...] = ()

    @cached_property
    def values(self) -> Dict[str, object]:
        return dict(self.attributes)

    def get(self, name: str):
        if name == NODE_ATTRIBUTE:
            return self.node
        return self.values.get(name)


@dataclass(frozen=True)
class FactCell:
    coordinates: Tuple[Tuple[str, str], ...]
    measures: Tuple[Tuple[str, object], ...]

    @cached_property
    def measure_values(self) -> Dict[str, object]:
        return dict(self.measures)


class PlanStats:
    """Counters filled in by evaluators (member lookups = join probes)."""

    def __init__(self):
        self.member_lookups = 0
        self.cells_scanned = 0
        self.store_accesses = 0


def member_id(dimension: str, attributes: Iterable[Tuple[str, object]]) -> str:
    text = "\x1f".join([dimension] + [f"{k}={format_value(v)}" for k, v in attributes])
    return f"{dimension}-{hashlib.sha1(text.encode('utf-8')).hexdigest()[:10]}"


@dataclass(frozen=True)
class XCubeStore:
    fact_name: str
    measure_catalog: Tuple[Tuple[str, str], ...]
    dimension_catalog: Tuple[Tuple[str, Tuple[Tuple[str, str], ...]], ...]
    members: Tuple[DimensionMember, ...] = ()
    cells: Tuple[FactCell, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "measure_catalog", tuple(tuple(m) for m in self.measure_catalog))
        object.__setattr__(self, "dimension_catalog", tuple(
            (d, tuple(tuple(a) for a in attrs)) for d, attrs in self.dimension_catalog))
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "cells", tuple(self.cells))

    # -- catalogs -----------------------------------------------------------

    @cached_property
    def _measure_types(self) -> Dict[str, str]:
        return dict(self.measure_catalog)

    @cached_property
    def _attribute_types(self) -> Dict[str, Dict[str, str]]:
        return {d: dict(attrs) for d, attrs in self.dimension_catalog}

    @property
    def dimension_names(self) -> Tuple[str, ...]:
        return tuple(d for d, _ in self.dimension_catalog)

    @property
    def measure_names(self) -> Tuple[str, ...]:
        return tuple(m for m, _ in self.measure_catalog)

    def measure_type(self, name: str) -> str:
        try:
            return self._measure_types[name]
        except KeyError:
            raise UnknownMeasure(name) from None

    def attribute_type(self, dimension: str, attribute: str) -> str:
        attrs = self._attribute_types.get(dimension)
        if attrs is None:
            raise UnknownAttribute(f"{dimension}.{attribute}")
        if attribute == NODE_ATTRIBUTE:
            return "string"
        try:
            return attrs[attribute]
        except KeyError:
            raise UnknownAttribute(f"{dimension}.{attribute}") from None

    # -- members ------------------------------------------------------------

    @cached_property
    def _member_index(self) -> Dict[Tuple[str, str], DimensionMember]:
        return {(m.dimension, m.node): m for m in self.members}

    def member(self, dimension: str, node: str, stats: Optional[PlanStats] = None) -> DimensionMember:
        if stats is not None:
            stats.member_lookups += 1
        try:
            return self._member_index[(dimension, node)]
        except KeyError:
            raise DanglingCoordinate(f"cell references unknown member {dimension}:{node}") from None

    def members_of(self, dimension: str) -> List[DimensionMember]:
        return [m for m in self.members if m.dimension == dimension]

    def check(self) -> "XCubeStore":
        """Verify member uniqueness and referential integrity of every cell."""
        if len(self._member_index) != len(self.members):
            raise DanglingCoordinate("duplicate (dimension, node) member")
        dims = set(self.dimension_names)
        for m in self.members:
            if m.dimension not in dims:
                raise DanglingCoordinate(f"member of unknown dimension {m.dimension!r}")
        for i, cell in enumerate(self.cells):
            if not cell.measures:
                raise InconsistentFact(f"cell {i} has no measure")
            names = [d for d, _ in cell.coordinates]
            if len(set(names)) != len(names):
                raise InconsistentFact(f"cell {i} repeats a dimension")
            for dim, node in cell.coordinates:
                if (dim, node) not in self._member_index:
                    raise DanglingCoordinate(f"cell {i} references unknown member {dim}:{node}")
        return self

    def with_members(self, members: Iterable[DimensionMember], dimension_catalog=None) -> "XCubeStore":
        return XCubeStore(self.fact_name, self.measure_catalog,
                          dimension_catalog if dimension_catalog is not None else self.dimension_catalog,
                          tuple(members), self.cells)

    # -- identity -------------------------------------------------------------

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(to_bytes(dimensions_element(self)))
        digest.update(to_bytes(facts_element(self)))
        return digest.hexdigest()


# -- import from an XML cube ---------------------------------------------------


def _flatten_decl(decl: ElementDecl) -> List[Tuple[str, str]]:
    attrs = [(a.name, a.type) for a in decl.attributes]

    def nested(el: ElementDecl) -> None:
        for child in el.children:
            attrs.extend((f"{child.name}.{a.name}", a.type) for a in child.attributes)
            nested(child)

    nested(decl)
    return attrs


def _flatten_values(el: ET.Element, decl: ElementDecl, types: Dict[str, str], where: str):
    values = []

    def take(node: ET.Element, node_decl: ElementDecl, prefix: str) -> None:
        for attr in node_decl.attributes:
            raw = node.get(attr.name)
            if raw is None:
                continue
            name = prefix + attr.name
            try:
                values.append((name, parse_value(raw, types[name])))
            except ValueError as exc:
                raise InconsistentFact(f"{where}: {exc}") from None
        for child_decl in node_decl.children:
            sub = node.find(child_decl.name)
            if sub is not None:
                take(sub, child_decl, child_decl.name + ".")

    take(el, decl, "")
    return tuple(values)


def import_cube(c: XmlCube) -> XCubeStore:
    """Turn every XML fact into one cell, deduplicating dimension members."""
    schema = c.schema
    measure_types = schema.measure_types()
    roles = {decl.name: decl for decl in schema.coordinates()}
    dimension_catalog = tuple((name, tuple(_flatten_decl(decl))) for name, decl in roles.items())
    types = {name: dict(attrs) for name, attrs in dimension_catalog}
    members: Dict[Tuple[str, tuple], DimensionMember] = {}
    cells = []
    for fact in c.facts:
        el = fact.element
        if el.tag != schema.fact_name:
            raise InconsistentFact(f"{fact.id}: root <{el.tag}> is not the fact {schema.fact_name!r}")
        measures = []
        for name, type_ in measure_types.items():
            raw = el.get(name)
            if raw is None:
                continue
            try:
                measures.append((name, parse_value(raw, type_)))
            except ValueError as exc:
                raise InconsistentFact(f"{fact.id}: {exc}") from None
        if set(el.attrib) - set(measure_types):
            raise InconsistentFact(f"{fact.id}: undeclared measure attribute")
        if not measures:
            raise InconsistentFact(f"{fact.id}: fact carries no measure")
        coords = []
        for child in el:
            decl = roles.get(child.tag)
            if decl is None:
                raise InconsistentFact(f"{fact.id}: <{child.tag}> is not a dimension of the cube")
            values = _flatten_values(child, decl, types[child.tag], fact.id)
            key = (child.tag, values)
            if key not in members:
                members[key] = DimensionMember(child.tag, member_id(child.tag, values), values)
            coords.append((child.tag, members[key].node))
        if not coords:
            raise InconsistentFact(f"{fact.id}: fact has no dimension coordinate")
        order = {name: i for i, name in enumerate(roles)}
        coords.sort(key=lambda c: order[c[0]])
        cells.append(FactCell(tuple(coords), tuple(measures)))
    order = {name: i for i, name in enumerate(roles)}
    ordered = sorted(members.values(), key=lambda m: order[m.dimension])
    return XCubeStore(schema.fact_name, tuple(measure_types.items()), dimension_catalog,
                      tuple(ordered), tuple(cells)).check()


# -- serialization -------------------------------------------------------------


def dimensions_element(s: XCubeStore) -> ET.Element:
    root = ET.Element("Dimensions", {"fact": s.fact_name})
    by_dim: Dict[str, ET.Element] = {}
    for name, attrs in s.dimension_catalog:
        el = ET.SubElement(root, "Dimension", {"name": name})
        for attr, type_ in attrs:
            ET.SubElement(el, "Attribute", {"name": attr, "type": type_})
        by_dim[name] = el
    for m in s.members:
        parent = by_dim.get(m.dimension)
        if parent is None:
            parent = by_dim[m.dimension] = ET.SubElement(root, "Dimension", {"name": m.dimension})
        el = ET.SubElement(parent, "Member", {"node": m.node})
        for attr, value in m.attributes:
            ET.SubElement(el, "attribute", {"name": attr, "value": format_value(value)})
    return root


def facts_element(s: XCubeStore) -> ET.Element:
    root = ET.Element("Facts", {"fact": s.fact_name})
    for name, type_ in s.measure_catalog:
        ET.SubElement(root, "Measure", {"name": name, "type": type_})
    for cell in s.cells:
        el = ET.SubElement(root, "Cell", dict(cell.coordinates))
        for name, value in cell.measures:
            ET.SubElement(el, "measure", {"name": name, "value": format_value(value)})
    return root


def write_store(s: XCubeStore, directory: os.PathLike | str) -> Tuple[Path, Path]:
    base = Path(directory)
    return (write_xml(dimensions_element(s), base / DIMENSIONS_FILE),
            write_xml(facts_element(s), base / FACTS_FILE))


def _need(el: ET.Element, name: str, where: str) -> str:
    value = el.get(name)
    if value is None:
        raise MalformedStoreFile(f"{where}: <{el.tag}> lacks @{name}")
    return value


def _typed(raw: str, type_: str, where: str):
    try:
        return parse_value(raw, type_)
    except ValueError as exc:
        raise MalformedStoreFile(f"{where}: {exc}") from None


def read_store(directory: os.PathLike | str) -> XCubeStore:
    base = Path(directory)
    try:
        dims_root = as_element(base / DIMENSIONS_FILE)
        facts_root = as_element(base / FACTS_FILE)
    except MalformedDocument as exc:
        raise MalformedStoreFile(str(exc)) from exc
    if dims_root.tag != "Dimensions" or facts_root.tag != "Facts":
        raise MalformedStoreFile("store files must have <Dimensions> and <Facts> roots")
    fact_name = _need(facts_root, "fact", FACTS_FILE)
    catalog, members = [], []
    for dim_el in dims_root:
        if dim_el.tag != "Dimension":
            raise MalformedStoreFile(f"{DIMENSIONS_FILE}: unexpected <{dim_el.tag}>")
        dim = _need(dim_el, "name", DIMENSIONS_FILE)
        attrs = []
        for el in dim_el:
            if el.tag == "Attribute":
                attrs.append((_need(el, "name", DIMENSIONS_FILE), _need(el, "type", DIMENSIONS_FILE)))
        types = dict(attrs)
        catalog.append((dim, tuple(attrs)))
        for el in dim_el:
            if el.tag == "Attribute":
                continue
            if el.tag != "Member":
                raise MalformedStoreFile(f"{DIMENSIONS_FILE}: unexpected <{el.tag}> in {dim}")
            values = []
            for a in el:
                name = _need(a, "name", DIMENSIONS_FILE)
                if a.tag != "attribute" or name not in types:
                    raise MalformedStoreFile(f"{DIMENSIONS_FILE}: bad attribute {name!r} in {dim}")
                values.append((name, _typed(_need(a, "value", DIMENSIONS_FILE), types[name], DIMENSIONS_FILE)))
            members.append(DimensionMember(dim, _need(el, "node", DIMENSIONS_FILE), tuple(values)))
    measure_catalog = []
    cells = []
    dim_names = [d for d, _ in catalog]
    for el in facts_root:
        if el.tag == "Measure":
            measure_catalog.append((_need(el, "name", FACTS_FILE), _need(el, "type", FACTS_FILE)))
            continue
        if el.tag != "Cell":
            raise MalformedStoreFile(f"{FACTS_FILE}: unexpected <{el.tag}>")
        types = dict(measure_catalog)
        unknown = set(el.attrib) - set(dim_names)
        if unknown:
            raise MalformedStoreFile(f"{FACTS_FILE}: cell references unknown dimension {sorted(unknown)}")
        coords = tuple((d, el.get(d)) for d in dim_names if el.get(d) is not None)
        measures = []
        for m in el:
            name = _need(m, "name", FACTS_FILE)
            if m.tag != "measure" or name not in types:
                raise MalformedStoreFile(f"{FACTS_FILE}: unknown measure {name!r}")
            measures.append((name, _typed(_need(m, "value", FACTS_FILE), types[name], FACTS_FILE)))
        cells.append(FactCell(coords, tuple(measures)))
    store = XCubeStore(fact_name, tuple(measure_catalog), tuple(catalog), tuple(members), tuple(cells))
    try:
        return store.check()
    except (DanglingCoordinate, InconsistentFact) as exc:
        raise MalformedStoreFile(str(exc)) from exc
