"""Analytical queries over an ``XCubeStore``: select, group, aggregate.

Query file format::

    <query id="q1">
      <select dimension="Time" attribute="year" op="&gt;=" value="1999"/>
      <group dimension="Product" attribute="category"/>
      <aggregate function="SUM" measure="amount"/>
      <aggregate function="COUNT" measure="*"/>
    </query>

``COUNT`` over ``*`` counts cells; over a measure it counts cells carrying
that measure. Absent measure values are skipped by every aggregate. ``AVG``
is the exact sum divided by the count, rounded half-even to
``AVG_PLACES`` decimal places.
"""

from __future__ import annotations

import decimal
import operator
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from .errors import HierarchyMismatch, MalformedDocument, TypeMismatch, UnknownAttribute, UnknownMeasure
from .store import NODE_ATTRIBUTE, PlanStats, XCubeStore
from .validation import XmlSource, as_element, format_value, parse_value

AVG_PLACES = 6
_AVG_QUANTUM = Decimal(1).scaleb(-AVG_PLACES)
DECIMAL_CONTEXT = decimal.Context(prec=80, rounding=decimal.ROUND_HALF_EVEN)

FUNCTIONS = ("SUM", "AVG", "COUNT", "MIN", "MAX")
OPERATORS: Dict[str, Callable] = {
    "=": operator.eq, "!=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}
_ALIASES = {"==": "=", "<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}

AttrRef = Tuple[str, str]


@dataclass(frozen=True)
class Predicate:
    dimension: str
    attribute: str
    op: str
    literal: str

    def __post_init__(self):
        op = _ALIASES.get(self.op, self.op)
        if op not in OPERATORS:
            raise ValueError(f"unknown comparator {self.op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "literal", str(self.literal))

    @property
    def ref(self) -> AttrRef:
        return (self.dimension, self.attribute)


@dataclass(frozen=True)
class Aggregate:
    function: str
    measure: str

    def __post_init__(self):
        function = self.function.upper()
        if function not in FUNCTIONS:
            raise ValueError(f"unknown aggregate function {self.function!r}")
        if self.measure == "*" and function != "COUNT":
            raise ValueError(f"{function}(*) is not defined")
        object.__setattr__(self, "function", function)

    @property
    def label(self) -> str:
        return f"{self.function}({self.measure})"


@dataclass(frozen=True)
class AnalyticalQuery:
    selections: Tuple[Predicate, ...] = ()
    group_by: Tuple[AttrRef, ...] = ()
    aggregates: Tuple[Aggregate, ...] = ()
    id: str = "q"

    def __post_init__(self):
        object.__setattr__(self, "selections", tuple(self.selections))
        object.__setattr__(self, "group_by", tuple(tuple(g) for g in self.group_by))
        object.__setattr__(self, "aggregates", tuple(self.aggregates))
        if not self.aggregates:
            raise ValueError("a query needs at least one aggregate")

    def attributes(self) -> List[AttrRef]:
        """Attributes used in selections or grouping, first-use order."""
        seen: Dict[AttrRef, None] = {}
        for p in self.selections:
            seen.setdefault(p.ref)
        for g in self.group_by:
            seen.setdefault(g)
        return list(seen)

    def measures(self) -> List[str]:
        return sorted({a.measure for a in self.aggregates if a.measure != "*"})

    def replace(self, **changes) -> "AnalyticalQuery":
        fields = dict(selections=self.selections, group_by=self.group_by,
                      aggregates=self.aggregates, id=self.id)
        fields.update(changes)
        return AnalyticalQuery(**fields)


@dataclass(frozen=True)
class ResultTable:
    header: Tuple[str, ...]
    rows: Tuple[tuple, ...]

    def __len__(self) -> int:
        return len(self.rows)


# -- compilation -----------------------------------------------------------------


class Catalog:
    """Type information needed to compile a query."""

    def __init__(self, measure_catalog, dimension_catalog):
        self.measures = dict(measure_catalog)
        self.attributes = {d: dict(a) for d, a in dimension_catalog}

    @classmethod
    def of(cls, source) -> "Catalog":
        if isinstance(source, Catalog):
            return source
        return cls(source.measure_catalog, source.dimension_catalog)

    def attribute_type(self, dimension: str, attribute: str) -> str:
        attrs = self.attributes.get(dimension)
        if attrs is not None and attribute == NODE_ATTRIBUTE:
            return "string"
        if attrs is None or attribute not in attrs:
            raise UnknownAttribute(f"{dimension}.{attribute}")
        return attrs[attribute]

    def measure_type(self, name: str) -> str:
        try:
            return self.measures[name]
        except KeyError:
            raise UnknownMeasure(name) from None

    def has_attribute(self, ref: AttrRef) -> bool:
        try:
            self.attribute_type(*ref)
        except UnknownAttribute:
            return False
        return True


class Compiled(NamedTuple):
    refs: Tuple[AttrRef, ...]
    predicates: Tuple[Tuple[int, Callable, object], ...]
    group_slots: Tuple[int, ...]
    measures: Tuple[str, ...]
    aggregates: Tuple[Aggregate, ...]
    header: Tuple[str, ...]


def compile_query(q: AnalyticalQuery, catalog) -> Compiled:
    catalog = Catalog.of(catalog)
    refs = tuple(q.attributes())
    slot = {r: i for i, r in enumerate(refs)}
    predicates = []
    for p in q.selections:
        type_ = catalog.attribute_type(p.dimension, p.attribute)
        try:
            literal = parse_value(p.literal, type_)
        except ValueError:
            raise TypeMismatch(
                f"{p.dimension}.{p.attribute} is {type_}, literal {p.literal!r} does not compare") from None
        predicates.append((slot[p.ref], OPERATORS[p.op], literal))
    for g in q.group_by:
        catalog.attribute_type(*g)
    for measure in q.measures():
        catalog.measure_type(measure)
    header = tuple(f"{d}.{a}" for d, a in q.group_by) + tuple(a.label for a in q.aggregates)
    return Compiled(refs, tuple(predicates), tuple(slot[g] for g in q.group_by),
                    tuple(q.measures()), q.aggregates, header)


# -- aggregation core ------------------------------------------------------------
# A group state is [cell_count, partials] with one [count, sum, min, max] per
# measure. Views store exactly these partials, so the same finisher serves
# every evaluation route.


def new_state(n_measures: int) -> list:
    return [0, [[0, None, None, None] for _ in range(n_measures)]]


def add_cell(state: list, measures: Sequence[str], values: Dict[str, object]) -> None:
    state[0] += 1
    for partial, name in zip(state[1], measures):
        v = values.get(name)
        if v is None:
            continue
        if partial[0] == 0:
            partial[0], partial[1], partial[2], partial[3] = 1, v, v, v
        else:
            partial[0] += 1
            partial[1] = partial[1] + v
            if v < partial[2]:
                partial[2] = v
            if v > partial[3]:
                partial[3] = v


def merge_state(state: list, cells: int, partials: Sequence[Sequence]) -> None:
    """Fold a pre-aggregated group (cell count + per-measure partials) into ``state``."""
    state[0] += cells
    for partial, other in zip(state[1], partials):
        if not other[0]:
            continue
        if partial[0] == 0:
            partial[:] = list(other)
        else:
            partial[0] += other[0]
            partial[1] = partial[1] + other[1]
            partial[2] = min(partial[2], other[2])
            partial[3] = max(partial[3], other[3])


def average(total, count: int) -> Optional[Decimal]:
    if not count:
        return None
    with decimal.localcontext(DECIMAL_CONTEXT):
        return (Decimal(total) / count).quantize(_AVG_QUANTUM)


def finish(state: list, measures: Sequence[str], aggregates: Sequence[Aggregate]) -> tuple:
    index = {m: i for i, m in enumerate(measures)}
    out = []
    for agg in aggregates:
        if agg.measure == "*":
            out.append(state[0])
            continue
        count, total, low, high = state[1][index[agg.measure]]
        if agg.function == "COUNT":
            out.append(count)
        elif agg.function == "SUM":
            out.append(total)
        elif agg.function == "MIN":
            out.append(low)
        elif agg.function == "MAX":
            out.append(high)
        else:
            out.append(average(total, count))
    return tuple(out)


def sort_key(key: tuple) -> tuple:
    return tuple((v is None, v) for v in key)


def table_from_groups(groups: Dict[tuple, list], compiled: Compiled) -> ResultTable:
    rows = [key + finish(groups[key], compiled.measures, compiled.aggregates)
            for key in sorted(groups, key=sort_key)]
    return ResultTable(compiled.header, tuple(rows))


def run(compiled: Compiled, records: Iterable[Tuple[Sequence, Dict[str, object]]]) -> ResultTable:
    """Filter, group and aggregate ``(attribute values, measure values)`` records."""
    return table_from_groups(group_states(compiled, records), compiled)


def group_states(compiled: Compiled, records) -> Dict[tuple, list]:
    predicates, group_slots, measures = compiled.predicates, compiled.group_slots, compiled.measures
    groups: Dict[tuple, list] = {}
    with decimal.localcontext(DECIMAL_CONTEXT):
        for values, measure_values in records:
            for slot, test, literal in predicates:
                v = values[slot]
                if v is None or not test(v, literal):
                    break
            else:
                key = tuple([values[s] for s in group_slots])
                state = groups.get(key)
                if state is None:
                    state = groups[key] = new_state(len(measures))
                add_cell(state, measures, measure_values)
    return groups


# -- direct evaluation -----------------------------------------------------------


def joined_records(s: XCubeStore, compiled: Compiled, stats: PlanStats):
    by_dim: Dict[str, List[Tuple[str, int]]] = {}
    for i, (dim, attr) in enumerate(compiled.refs):
        by_dim.setdefault(dim, []).append((attr, i))
    plan = list(by_dim.items())
    width = len(compiled.refs)
    for cell in s.cells:
        stats.cells_scanned += 1
        values = [None] * width
        if plan:
            coords = dict(cell.coordinates)
            for dim, attrs in plan:
                node = coords.get(dim)
                if node is None:
                    continue
                member = s.member(dim, node, stats)
                for attr, slot in attrs:
                    values[slot] = member.get(attr)
        yield values, cell.measure_values


def evaluate(s: XCubeStore, q: AnalyticalQuery, stats: Optional[PlanStats] = None) -> ResultTable:
    """Answer ``q`` by joining every cell with its dimension members."""
    compiled = compile_query(q, s)
    stats = stats if stats is not None else PlanStats()
    stats.store_accesses += 1
    return run(compiled, joined_records(s, compiled, stats))


# -- hierarchy navigation ----------------------------------------------------------


@dataclass(frozen=True)
class LevelHierarchy:
    """Grouping levels of one dimension, finest first."""

    dimension: str
    levels: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise ValueError("a hierarchy needs at least one level")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError("hierarchy levels must be distinct")


class Navigation(NamedTuple):
    query: AnalyticalQuery
    boundary: bool


def _navigate(q: AnalyticalQuery, h: LevelHierarchy, step: int) -> Navigation:
    for pos, (dim, attr) in enumerate(q.group_by):
        if dim == h.dimension and attr in h.levels:
            target = h.levels.index(attr) + step
            if not 0 <= target < len(h.levels):
                return Navigation(q, True)
            replacement = (dim, h.levels[target])
            group_by = [g for g in q.group_by]
            group_by[pos] = replacement
            deduped = [g for i, g in enumerate(group_by) if g not in group_by[:i]]
            return Navigation(q.replace(group_by=tuple(deduped)), False)
    raise HierarchyMismatch(f"query does not group on any level of {h.dimension}")


def rollup(q: AnalyticalQuery, h: LevelHierarchy) -> Navigation:
    """Replace the grouped level of ``h`` with the next coarser one."""
    return _navigate(q, h, +1)


def drilldown(q: AnalyticalQuery, h: LevelHierarchy) -> Navigation:
    """Replace the grouped level of ``h`` with the next finer one."""
    return _navigate(q, h, -1)


# -- file formats ------------------------------------------------------------------


def query_to_element(q: AnalyticalQuery) -> ET.Element:
    root = ET.Element("query", {"id": q.id})
    for p in q.selections:
        ET.SubElement(root, "select", {"dimension": p.dimension, "attribute": p.attribute,
                                       "op": p.op, "value": p.literal})
    for dim, attr in q.group_by:
        ET.SubElement(root, "group", {"dimension": dim, "attribute": attr})
    for a in q.aggregates:
        ET.SubElement(root, "aggregate", {"function": a.function, "measure": a.measure})
    return root


def read_query(source: XmlSource) -> AnalyticalQuery:
    root = as_element(source)
    if root.tag != "query":
        raise MalformedDocument(f"expected <query>, got <{root.tag}>")
    unknown = sorted({el.tag for el in root} - {"select", "group", "aggregate"})
    if unknown:
        raise MalformedDocument(f"unknown query clause <{unknown[0]}>")
    try:
        return AnalyticalQuery(
            tuple(Predicate(el.get("dimension", ""), el.get("attribute", ""), el.get("op", "="),
                            el.get("value", "")) for el in root.findall("select")),
            tuple((el.get("dimension", ""), el.get("attribute", "")) for el in root.findall("group")),
            tuple(Aggregate(el.get("function", ""), el.get("measure", ""))
                  for el in root.findall("aggregate")),
            root.get("id", "q"),
        )
    except ValueError as exc:
        raise MalformedDocument(f"bad query: {exc}") from exc


def result_to_element(table: ResultTable, query_id: Optional[str] = None) -> ET.Element:
    root = ET.Element("result")
    if query_id is not None:
        root.set("query", query_id)
    header = ET.SubElement(root, "header")
    for name in table.header:
        ET.SubElement(header, "column", {"name": name})
    for row in table.rows:
        row_el = ET.SubElement(root, "row")
        for value in row:
            cell = ET.SubElement(row_el, "v")
            if value is None:
                cell.set("null", "true")
            else:
                cell.text = format_value(value)
    return root


def read_result(source: XmlSource) -> Tuple[Tuple[str, ...], Tuple[Tuple[Optional[str], ...], ...]]:
    """Header and raw (untyped) cell texts of a result document."""
    root = as_element(source)
    header = tuple(c.get("name", "") for c in root.findall("header/column"))
    rows = tuple(
        tuple(None if v.get("null") == "true" else (v.text or "") for v in row.findall("v"))
        for row in root.findall("row")
    )
    return header, rows
