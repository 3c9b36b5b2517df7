"""Multidimensional conceptual model (MCM) and its XML logical schemas.

The MCM is read from a small XML configuration file::

    <mcm fact="Sales">
      <measure name="amount" type="decimal" mandatory="true"/>
      <dimension name="Time" multiplicity="1">
        <attribute name="year" type="integer"/>
      </dimension>
      <hierarchy dimension="Time">
        <level name="Day"><attribute name="day"/></level>
        <level name="Month"><attribute name="month"/></level>
      </hierarchy>
    </mcm>

``mandatory`` defaults to true, ``type`` to decimal for measures and string
for dimension attributes, ``multiplicity`` to 1.

The emitted logical schema document has the form::

    <schema fact="Sales">
      <element name="Sales">
        <attribute name="amount" type="decimal" mandatory="true"/>
        <element name="Time" dimension="Time">
          <attribute name="year" type="integer" mandatory="true"/>
        </element>
      </element>
    </schema>

A dimension linked ``k > 1`` times to the fact yields ``k`` elements named
``<dimension>_1`` .. ``<dimension>_k`` carrying ``link="i"``; distinct names
keep the instances apart in the attribute tree.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .attree import AttributeTree, tree_from_schema
from .errors import InvalidMCM, MalformedDocument, MalformedSchema
from .validation import NUMERIC_TYPES, VALUE_TYPES, XmlSource, as_element, check_name


def _tuple(obj, name):
    object.__setattr__(obj, name, tuple(getattr(obj, name)))


@dataclass(frozen=True)
class Measure:
    name: str
    type: str = "decimal"
    mandatory: bool = True


@dataclass(frozen=True)
class DimAttribute:
    name: str
    type: str = "string"
    mandatory: bool = True


@dataclass(frozen=True)
class Dimension:
    name: str
    attributes: Tuple[DimAttribute, ...] = ()
    multiplicity: int = 1

    def __post_init__(self):
        _tuple(self, "attributes")

    def role_names(self, base: Optional[str] = None) -> List[str]:
        base = base or self.name
        if self.multiplicity == 1:
            return [base]
        return [f"{base}_{i}" for i in range(1, self.multiplicity + 1)]


@dataclass(frozen=True)
class Hierarchy:
    """Levels of a dimension, finest first; each level is a ``Dimension``."""

    dimension: str
    levels: Tuple[Dimension, ...] = ()

    def __post_init__(self):
        _tuple(self, "levels")


@dataclass(frozen=True)
class MCM:
    fact_name: str
    measures: Tuple[Measure, ...] = ()
    dimensions: Tuple[Dimension, ...] = ()
    hierarchies: Tuple[Hierarchy, ...] = ()

    def __post_init__(self):
        for name in ("measures", "dimensions", "hierarchies"):
            _tuple(self, name)

    def dimension(self, name: str) -> Dimension:
        for dim in self.dimensions:
            if dim.name == name:
                return dim
        raise KeyError(name)

    def hierarchies_of(self, name: str) -> List[Hierarchy]:
        return [h for h in self.hierarchies if h.dimension == name]


# -- logical schema document ---------------------------------------------------


@dataclass(frozen=True)
class AttributeDecl:
    name: str
    type: str
    mandatory: bool = True


@dataclass(frozen=True)
class ElementDecl:
    name: str
    attributes: Tuple[AttributeDecl, ...] = ()
    children: Tuple["ElementDecl", ...] = ()
    dimension: Optional[str] = None
    link: Optional[int] = None

    def __post_init__(self):
        _tuple(self, "attributes")
        _tuple(self, "children")

    def attribute(self, name: str) -> Optional[AttributeDecl]:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None

    def child(self, name: str) -> Optional["ElementDecl"]:
        for el in self.children:
            if el.name == name:
                return el
        return None

    def is_mandatory(self) -> bool:
        return any(a.mandatory for a in self.attributes) or any(c.is_mandatory() for c in self.children)

    def to_element(self) -> ET.Element:
        el = ET.Element("element", {"name": self.name})
        if self.dimension is not None:
            el.set("dimension", self.dimension)
        if self.link is not None:
            el.set("link", str(self.link))
        for attr in self.attributes:
            ET.SubElement(el, "attribute", {
                "name": attr.name, "type": attr.type, "mandatory": str(attr.mandatory).lower(),
            })
        for child in self.children:
            el.append(child.to_element())
        return el

    @classmethod
    def from_element(cls, el: ET.Element) -> "ElementDecl":
        if el.tag != "element" or not el.get("name"):
            raise MalformedSchema(f"expected a named <element>, got <{el.tag}>")
        attrs, children = [], []
        for child in el:
            if child.tag == "attribute":
                if child.get("type", "string") not in VALUE_TYPES:
                    raise MalformedSchema(f"unknown type {child.get('type')!r}")
                attrs.append(AttributeDecl(child.get("name", ""), child.get("type", "string"),
                                           child.get("mandatory", "true") == "true"))
            elif child.tag == "element":
                children.append(cls.from_element(child))
            else:
                raise MalformedSchema(f"unexpected declaration <{child.tag}>")
        link = el.get("link")
        return cls(el.get("name"), tuple(attrs), tuple(children), el.get("dimension"),
                   int(link) if link is not None else None)


@dataclass(frozen=True)
class LogicalSchema:
    """Warehouse logical schema: a single root element for the fact."""

    root: ElementDecl

    @property
    def fact_name(self) -> str:
        return self.root.name

    def coordinates(self) -> Tuple[ElementDecl, ...]:
        """Root children, i.e. the dimension roles of a fact."""
        return self.root.children

    def measure_types(self) -> dict:
        return {a.name: a.type for a in self.root.attributes}

    def to_element(self) -> ET.Element:
        schema = ET.Element("schema", {"fact": self.root.name})
        schema.append(self.root.to_element())
        return schema

    @classmethod
    def from_element(cls, source: XmlSource) -> "LogicalSchema":
        try:
            root = as_element(source)
        except MalformedDocument as exc:
            raise MalformedSchema(str(exc)) from exc
        tops = [el for el in root if el.tag == "element"]
        if root.tag != "schema" or len(tops) != 1:
            raise MalformedSchema("schema must declare exactly one root element")
        return cls(ElementDecl.from_element(tops[0]))


# -- operations --------------------------------------------------------------


def _duplicates(names) -> List[str]:
    seen, dups = set(), []
    for name in names:
        if name in seen and name not in dups:
            dups.append(name)
        seen.add(name)
    return dups


def validate_mcm(m: MCM) -> List[str]:
    """Return the list of violations; an empty list means the model is valid."""
    report = []

    def name_ok(name, what):
        try:
            check_name(name, what)
        except ValueError as exc:
            report.append(str(exc))

    name_ok(m.fact_name, "fact name")
    if not any(ms.mandatory for ms in m.measures):
        report.append("no mandatory measure: at least one measure must be mandatory")
    for dup in _duplicates(ms.name for ms in m.measures):
        report.append(f"duplicate measure name {dup!r}")
    for ms in m.measures:
        name_ok(ms.name, "measure name")
        if ms.type not in NUMERIC_TYPES:
            report.append(f"measure {ms.name!r} has non-numeric type {ms.type!r}")
    for dup in _duplicates(d.name for d in m.dimensions):
        report.append(f"duplicate dimension name {dup!r}")

    def check_dimension(dim: Dimension, where: str) -> None:
        name_ok(dim.name, "dimension name")
        for dup in _duplicates(a.name for a in dim.attributes):
            report.append(f"duplicate attribute {dup!r} in {where}")
        for attr in dim.attributes:
            name_ok(attr.name, "attribute name")
            if attr.type not in VALUE_TYPES:
                report.append(f"attribute {dim.name}.{attr.name} has unknown type {attr.type!r}")

    for dim in m.dimensions:
        check_dimension(dim, f"dimension {dim.name!r}")
        if dim.multiplicity < 1:
            report.append(f"dimension {dim.name!r} has multiplicity {dim.multiplicity} < 1")
    names = {d.name for d in m.dimensions}
    for h in m.hierarchies:
        if h.dimension not in names:
            report.append(f"hierarchy on unknown dimension {h.dimension!r}")
        if not h.levels:
            report.append(f"empty hierarchy on dimension {h.dimension!r}")
        for dup in _duplicates(level.name for level in h.levels):
            report.append(f"duplicate level {dup!r} in hierarchy of {h.dimension!r}")
        for level in h.levels:
            check_dimension(level, f"level {level.name!r} of {h.dimension!r}")
    if not report:
        for schema in (star_schema_of(m, check=False), snowflake_schema_of(m, check=False)):
            for dup in _duplicates(c.name for c in schema.root.children):
                report.append(f"element name {dup!r} used twice under the fact {m.fact_name!r}")
    return sorted(set(report), key=report.index)


def _require_valid(m: MCM) -> None:
    report = validate_mcm(m)
    if report:
        raise InvalidMCM("; ".join(report))


def _attrs(dim: Dimension) -> Tuple[AttributeDecl, ...]:
    return tuple(AttributeDecl(a.name, a.type, a.mandatory) for a in dim.attributes)


def _root_attrs(m: MCM) -> Tuple[AttributeDecl, ...]:
    return tuple(AttributeDecl(ms.name, ms.type, ms.mandatory) for ms in m.measures)


def _links(dim: Dimension, base: str):
    names = dim.role_names(base)
    if len(names) == 1:
        return [(names[0], None)]
    return [(name, i) for i, name in enumerate(names, start=1)]


def star_schema_of(m: MCM, *, check: bool = True) -> LogicalSchema:
    """XML star schema: measures on the root, one flat element per dimension link.

    Hierarchies, if any, are ignored here; see ``snowflake_schema_of``.
    """
    if check:
        _require_valid(m)
    children = []
    for dim in m.dimensions:
        for role, link in _links(dim, dim.name):
            children.append(ElementDecl(role, _attrs(dim), (), dim.name, link))
    return LogicalSchema(ElementDecl(m.fact_name, _root_attrs(m), tuple(children)))


def _chain(levels: Tuple[Dimension, ...]) -> Tuple[Tuple[AttributeDecl, ...], Tuple[ElementDecl, ...]]:
    """Attributes of the head level and its nested descendants."""
    nested: Tuple[ElementDecl, ...] = ()
    for level in reversed(levels[1:]):
        nested = (ElementDecl(level.name, _attrs(level), nested),)
    return _attrs(levels[0]), nested


def snowflake_schema_of(m: MCM, *, check: bool = True) -> LogicalSchema:
    """XML snowflake schema: every hierarchy becomes a chain of nested elements.

    Each level ``D_t`` is a subelement of ``D_{t-1}``; a chain is repeated once
    per link of its dimension. Dimensions without a hierarchy stay flat, and
    so do one-level hierarchies, whose single level is the dimension itself.
    """
    if check:
        _require_valid(m)
    children = []
    for dim in m.dimensions:
        hierarchies = [h for h in m.hierarchies_of(dim.name) if len(h.levels) > 1]
        if not hierarchies:
            for role, link in _links(dim, dim.name):
                children.append(ElementDecl(role, _attrs(dim), (), dim.name, link))
            continue
        for h in hierarchies:
            attrs, nested = _chain(h.levels)
            for role, link in _links(dim, h.levels[0].name):
                children.append(ElementDecl(role, attrs, nested, dim.name, link))
    return LogicalSchema(ElementDecl(m.fact_name, _root_attrs(m), tuple(children)))


def logical_schema(m: MCM) -> LogicalSchema:
    """Snowflake schema when the model declares hierarchies, star otherwise."""
    return snowflake_schema_of(m) if m.hierarchies else star_schema_of(m)


def minimal_content_tree(m: MCM) -> AttributeTree:
    """Reference attribute tree carrying the user's mandatory flags."""
    return tree_from_schema(logical_schema(m))


def level_hierarchies(m: MCM):
    """Query-engine hierarchies (finest first) induced by the model's hierarchies.

    The key of each level is its first attribute; nested levels are addressed
    as ``Level.attribute`` because the store flattens a chain into one member.
    """
    from .query import LevelHierarchy

    result = []
    for h in m.hierarchies:
        dim = m.dimension(h.dimension)
        if len(h.levels) < 2:
            continue
        keys = []
        for t, level in enumerate(h.levels):
            if not level.attributes:
                continue
            attr = level.attributes[0].name
            keys.append(attr if t == 0 else f"{level.name}.{attr}")
        for role, _ in _links(dim, h.levels[0].name):
            result.append(LevelHierarchy(role, tuple(keys)))
    return result


# -- configuration file --------------------------------------------------------


def _bool(el: ET.Element, name: str = "mandatory") -> bool:
    value = el.get(name, "true").lower()
    if value not in ("true", "false"):
        raise InvalidMCM(f"{name} must be true or false, got {value!r}")
    return value == "true"


def _read_dimension(el: ET.Element) -> Dimension:
    attrs = tuple(
        DimAttribute(a.get("name", ""), a.get("type", "string"), _bool(a))
        for a in el.findall("attribute")
    )
    try:
        multiplicity = int(el.get("multiplicity", "1"))
    except ValueError:
        raise InvalidMCM(f"bad multiplicity {el.get('multiplicity')!r}") from None
    return Dimension(el.get("name", ""), attrs, multiplicity)


def read_mcm(source: XmlSource) -> MCM:
    root = as_element(source)
    if root.tag != "mcm":
        raise InvalidMCM(f"expected <mcm> root, got <{root.tag}>")
    measures = tuple(
        Measure(el.get("name", ""), el.get("type", "decimal"), _bool(el))
        for el in root.findall("measure")
    )
    dimensions = tuple(_read_dimension(el) for el in root.findall("dimension"))
    hierarchies = tuple(
        Hierarchy(el.get("dimension", ""), tuple(_read_dimension(lv) for lv in el.findall("level")))
        for el in root.findall("hierarchy")
    )
    return MCM(root.get("fact", ""), measures, dimensions, hierarchies)


def mcm_to_element(m: MCM) -> ET.Element:
    root = ET.Element("mcm", {"fact": m.fact_name})
    for ms in m.measures:
        ET.SubElement(root, "measure", {"name": ms.name, "type": ms.type,
                                        "mandatory": str(ms.mandatory).lower()})

    def put(parent: ET.Element, tag: str, dim: Dimension, multiplicity: bool):
        el = ET.SubElement(parent, tag, {"name": dim.name})
        if multiplicity:
            el.set("multiplicity", str(dim.multiplicity))
        for a in dim.attributes:
            ET.SubElement(el, "attribute", {"name": a.name, "type": a.type,
                                            "mandatory": str(a.mandatory).lower()})

    for dim in m.dimensions:
        put(root, "dimension", dim, True)
    for h in m.hierarchies:
        hel = ET.SubElement(root, "hierarchy", {"dimension": h.dimension})
        for level in h.levels:
            put(hel, "level", level, False)
    return root
