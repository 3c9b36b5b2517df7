"""Seeded synthetic warehouses, source documents and query workloads.

Every dimension ``Dim<k>`` has attributes ``level0`` .. ``level<n-1>``; each
level is a function of the previous one, so the attributes form a
roll-up hierarchy (finest first). Measures are ``amount`` (decimal),
``quantity`` (integer) and the optional ``discount`` (decimal).
"""

from __future__ import annotations

import random
import xml.etree.ElementTree as ET
from decimal import Decimal
from typing import List, Optional, Sequence, Tuple

from .mcm import MCM, DimAttribute, Dimension, Measure
from .query import Aggregate, AnalyticalQuery, LevelHierarchy, Predicate
from .validation import format_value

_LEVEL_TYPES = ("integer", "integer", "string", "string", "integer", "string")


def synthetic_mcm(n_dims: int = 3, n_attrs: int = 4, fact: str = "Sales") -> MCM:
    measures = (
        Measure("amount", "decimal", True),
        Measure("quantity", "integer", True),
        Measure("discount", "decimal", False),
    )
    dims = tuple(
        Dimension(f"Dim{k}", tuple(
            DimAttribute(f"level{j}", _LEVEL_TYPES[j % len(_LEVEL_TYPES)]) for j in range(n_attrs)))
        for k in range(n_dims)
    )
    return MCM(fact, measures, dims)


def synthetic_hierarchies(m: MCM) -> List[LevelHierarchy]:
    return [LevelHierarchy(d.name, tuple(a.name for a in d.attributes)) for d in m.dimensions]


def level_values(key: int, n_attrs: int, fanout: int = 3) -> List[object]:
    """Values of every level for a finest-level key; level j = key // fanout**j."""
    values = []
    for j in range(n_attrs):
        code = key // (fanout ** j)
        if _LEVEL_TYPES[j % len(_LEVEL_TYPES)] == "integer":
            values.append(code)
        else:
            values.append(f"L{j}-{code}")
    return values


def fact_document(m: MCM, rng: random.Random, keys: int = 27, *, with_noise: bool = False) -> ET.Element:
    root = ET.Element(m.fact_name)
    root.set("amount", format_value(Decimal(rng.randint(1, 100000)).scaleb(-2)))
    root.set("quantity", str(rng.randint(1, 50)))
    if rng.random() < 0.7:
        root.set("discount", format_value(Decimal(rng.randint(0, 500)).scaleb(-2)))
    for dim in m.dimensions:
        key = rng.randrange(keys)
        values = level_values(key, len(dim.attributes))
        el = ET.SubElement(root, dim.name)
        for attr, value in zip(dim.attributes, values):
            el.set(attr.name, str(value))
    if with_noise:
        note = ET.SubElement(root, "Note", {"source": f"feed{rng.randint(1, 3)}"})
        note.text = "free text outside the model"
    return root


def facts_documents(m: MCM, n: int, seed: int = 0, keys: int = 27,
                    with_noise: bool = False) -> List[Tuple[str, ET.Element]]:
    rng = random.Random(seed)
    return [(f"doc{i + 1:05d}", fact_document(m, rng, keys, with_noise=with_noise)) for i in range(n)]


def drop_paths(doc: ET.Element, rng: random.Random, rate: float) -> ET.Element:
    """Copy of ``doc`` where each attribute/element is removed with probability ``rate``."""
    clone = ET.fromstring(ET.tostring(doc))

    def walk(el: ET.Element) -> None:
        for name in list(el.attrib):
            if rng.random() < rate:
                del el.attrib[name]
        for child in list(el):
            if rng.random() < rate:
                el.remove(child)
            else:
                walk(child)

    walk(clone)
    return clone


def synthetic_store(n_cells: int = 1000, n_dims: int = 3, n_attrs: int = 4, seed: int = 0,
                    keys: int = 27):
    """Store produced by the full admission + import pipeline."""
    from .cube import build_cube
    from .store import import_cube

    m = synthetic_mcm(n_dims, n_attrs)
    cube = build_cube(m, facts_documents(m, n_cells, seed, keys))
    return import_cube(cube)


# -- queries -----------------------------------------------------------------------


def _domain(store, dim: str, attr: str) -> List[object]:
    values = {m.get(attr) for m in store.members_of(dim)}
    values.discard(None)
    return sorted(values, key=lambda v: (str(type(v)), v))


def random_query(store, rng: random.Random, qid: str = "q", *, max_predicates: int = 2,
                 max_groups: int = 2, max_aggregates: int = 3,
                 attributes: Optional[Sequence[Tuple[str, str]]] = None) -> AnalyticalQuery:
    refs = list(attributes) if attributes is not None else [
        (d, a) for d, attrs in store.dimension_catalog for a, _ in attrs]
    predicates = []
    for _ in range(rng.randint(0, max_predicates)):
        dim, attr = rng.choice(refs)
        domain = _domain(store, dim, attr)
        if not domain:
            continue
        literal = rng.choice(domain)
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        predicates.append(Predicate(dim, attr, op, format_value(literal)))
    group_by = rng.sample(refs, rng.randint(0, min(max_groups, len(refs))))
    functions = [Aggregate("COUNT", "*")] + [
        Aggregate(f, m) for m in store.measure_names for f in ("SUM", "AVG", "COUNT", "MIN", "MAX")]
    aggregates = rng.sample(functions, rng.randint(1, max_aggregates))
    return AnalyticalQuery(tuple(predicates), tuple(group_by), tuple(aggregates), qid)


def random_queries(store, n: int, seed: int = 0, **kwargs) -> List[AnalyticalQuery]:
    rng = random.Random(seed)
    return [random_query(store, rng, f"q{i + 1:03d}", **kwargs) for i in range(n)]
