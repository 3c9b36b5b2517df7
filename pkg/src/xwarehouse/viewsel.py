"""Materialized-view selection driven by query clustering.

Pipeline: workload -> query-attribute matrix -> complete-linkage clustering
on Jaccard similarity -> one candidate view per cluster -> greedy selection
under a storage budget.

Cost model (storage unit = one view row):

* cost of a query without views: number of store cells scanned;
* cost with a set ``S``: row count of the smallest view in ``S`` able to
  answer it;
* maintenance of a view: its row count per refresh;
* ``F_S(v) = (sum_q freq_q * (cost(q, S) - cost(q, S + v)) - lam * rows(v)) / rows(v)``.

``F`` is a benefit density and the greedy loop takes the view maximising it.
The chosen sequence does not depend on the budget; the budget only decides
where the sequence stops, so a larger budget always selects a superset.
"""

from __future__ import annotations

import decimal
import itertools
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from .errors import MalformedDocument, NotCovered
from .query import (
    DECIMAL_CONTEXT,
    AnalyticalQuery,
    AttrRef,
    Catalog,
    Compiled,
    ResultTable,
    compile_query,
    group_states,
    joined_records,
    merge_state,
    new_state,
    read_query,
    sort_key,
    table_from_groups,
)
from .store import PlanStats, XCubeStore
from .validation import as_element, check_fraction, format_value, parse_value, write_xml


@dataclass(frozen=True)
class Workload:
    queries: Tuple[AnalyticalQuery, ...]
    frequencies: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        freqs = tuple(self.frequencies) or (1.0,) * len(self.queries)
        object.__setattr__(self, "frequencies", tuple(float(f) for f in freqs))
        if not self.queries:
            raise ValueError("a workload needs at least one query")
        if len(self.frequencies) != len(self.queries):
            raise ValueError("one frequency per query is required")
        ids = [q.id for q in self.queries]
        if len(set(ids)) != len(ids):
            raise ValueError("query identifiers must be unique")

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(q.id for q in self.queries)

    def frequency(self, qid: str) -> float:
        return self.frequencies[self.ids.index(qid)]


def extract_attributes(w: Workload) -> List[AttrRef]:
    """Attributes found in any selection or grouping clause, sorted."""
    found = set()
    for q in w.queries:
        found.update(q.attributes())
    return sorted(found)


@dataclass(frozen=True)
class QueryAttributeMatrix:
    query_ids: Tuple[str, ...]
    attributes: Tuple[AttrRef, ...]
    values: np.ndarray = field(compare=False)

    def __eq__(self, other):
        if not isinstance(other, QueryAttributeMatrix):
            return NotImplemented
        return (self.query_ids == other.query_ids and self.attributes == other.attributes
                and np.array_equal(self.values, other.values))

    def row(self, i: int) -> np.ndarray:
        return self.values[i]


def build_matrix(w: Workload) -> QueryAttributeMatrix:
    attributes = extract_attributes(w)
    column = {a: j for j, a in enumerate(attributes)}
    values = np.zeros((len(w.queries), len(attributes)), dtype=np.int8)
    for i, q in enumerate(w.queries):
        for ref in q.attributes():
            values[i, column[ref]] = 1
    return QueryAttributeMatrix(w.ids, tuple(attributes), values)


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """Jaccard similarity of binary rows; two empty rows are identical (1.0)."""
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def cluster_queries(m: QueryAttributeMatrix, threshold: float = 0.5) -> List[Tuple[int, ...]]:
    """Complete-linkage agglomeration on Jaccard similarity.

    Two clusters merge only while their least similar pair of queries stays at
    or above ``threshold``; the most similar eligible pair merges first, ties
    going to the smallest pair of cluster ids (a cluster's id is its smallest
    query index). Returns clusters as sorted tuples of query row indices.
    """
    check_fraction(threshold, "threshold", low_open=False)
    n = len(m.query_ids)
    sim = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            sim[i, j] = sim[j, i] = jaccard(m.values[i], m.values[j])
    clusters: Dict[int, List[int]] = {i: [i] for i in range(n)}
    link = {(i, j): sim[i, j] for i in range(n) for j in range(i + 1, n)}
    while len(clusters) > 1:
        best = None
        for (a, b), s in link.items():
            if s >= threshold and (best is None or s > best[0] or (s == best[0] and (a, b) < best[1])):
                best = (s, (a, b))
        if best is None:
            break
        a, b = best[1]
        clusters[a] = sorted(clusters[a] + clusters.pop(b))
        link = {k: v for k, v in link.items() if b not in k}
        for c in clusters:
            if c != a:
                key = (min(a, c), max(a, c))
                link[key] = min(sim[x, y] for x in clusters[a] for y in clusters[c])
    return [tuple(members) for _, members in sorted(clusters.items())]


# -- candidates and costs -----------------------------------------------------------


@dataclass(frozen=True)
class StoreStatistics:
    cell_count: int
    distinct: Dict[AttrRef, int] = field(compare=False)
    catalog: Catalog = field(compare=False, default=None)
    fingerprint: Optional[str] = None

    def estimate_rows(self, attributes: Sequence[AttrRef]) -> int:
        """Product of distinct counts, capped by the cell count (at least 1)."""
        product = 1
        for ref in attributes:
            product *= max(1, self.distinct.get(ref, 1))
            if product >= self.cell_count:
                break
        return max(1, min(product, self.cell_count))


def store_statistics(s: XCubeStore, attributes: Optional[Iterable[AttrRef]] = None) -> StoreStatistics:
    """Distinct value counts (absent values counted as one value) over the cells."""
    if attributes is None:
        attributes = [(d, a) for d, attrs in s.dimension_catalog for a, _ in attrs]
    refs = tuple(attributes)
    compiled = Compiled(refs, (), (), (), (), ())
    seen = [set() for _ in refs]
    for values, _ in joined_records(s, compiled, PlanStats()):
        for bucket, v in zip(seen, values):
            bucket.add(v)
    return StoreStatistics(len(s.cells), {r: len(b) for r, b in zip(refs, seen)}, Catalog.of(s), s.fingerprint)


@dataclass(frozen=True)
class CandidateView:
    id: str
    attributes: Tuple[AttrRef, ...]
    measures: Tuple[str, ...]
    cluster: Tuple[str, ...]
    resolvable: Tuple[str, ...]
    size: int
    benefit: float = 0.0

    def covers(self, q: AnalyticalQuery) -> bool:
        return set(q.attributes()) <= set(self.attributes) and set(q.measures()) <= set(self.measures)


class CostModel:
    """Scan-count costs against a store of ``cell_count`` cells."""

    def __init__(self, cell_count: int, frequencies: Dict[str, float], lam: float = 1.0):
        self.cell_count = cell_count
        self.frequencies = dict(frequencies)
        self.lam = float(lam)

    @classmethod
    def for_workload(cls, w: Workload, stats: StoreStatistics, lam: float = 1.0) -> "CostModel":
        return cls(stats.cell_count, dict(zip(w.ids, w.frequencies)), lam)

    def query_cost(self, qid: str, views: Iterable[CandidateView]) -> int:
        cost = self.cell_count
        for v in views:
            if qid in v.resolvable and v.size < cost:
                cost = v.size
        return cost

    def maintenance(self, v: CandidateView) -> float:
        return float(v.size)

    def gain(self, v: CandidateView, selected: Sequence[CandidateView]) -> float:
        with_v = list(selected) + [v]
        total = 0.0
        for qid in v.resolvable:
            freq = self.frequencies.get(qid, 0.0)
            total += freq * (self.query_cost(qid, selected) - self.query_cost(qid, with_v))
        return total

    def objective(self, v: CandidateView, selected: Sequence[CandidateView]) -> float:
        """``F`` of ``v`` relative to the already selected views."""
        return (self.gain(v, selected) - self.lam * self.maintenance(v)) / v.size

    def value(self, views: Sequence[CandidateView]) -> float:
        """Net value of a configuration: weighted scan savings minus maintenance."""
        saved = sum(f * (self.cell_count - self.query_cost(qid, views)) for qid, f in self.frequencies.items())
        return saved - self.lam * sum(self.maintenance(v) for v in views)


def candidate_views(clusters: Sequence[Sequence[int]], w: Workload, stats: StoreStatistics,
                    lam: float = 1.0) -> List[CandidateView]:
    """One candidate per cluster: grouped on the union of its attributes."""
    model = CostModel.for_workload(w, stats, lam)
    width = max(3, len(str(len(clusters))))
    views = []
    for k, members in enumerate(clusters, start=1):
        queries = [w.queries[i] for i in members]
        attrs = tuple(sorted({ref for q in queries for ref in q.attributes()}))
        measures = tuple(sorted({m for q in queries for m in q.measures()}))
        size = stats.estimate_rows(attrs)
        draft = CandidateView(f"v{k:0{width}d}", attrs, measures, tuple(q.id for q in queries), (), size)
        resolvable = tuple(q.id for q in w.queries if draft.covers(q))
        view = CandidateView(draft.id, attrs, measures, draft.cluster, resolvable, size)
        views.append(CandidateView(view.id, attrs, measures, view.cluster, resolvable, size,
                                   model.objective(view, [])))
    return views


@dataclass(frozen=True)
class SelectionResult:
    selected: Tuple[str, ...]
    log: Tuple[Tuple[str, float], ...]
    budget_used: int
    budget: float
    stop: str


def greedy_select(V: Sequence[CandidateView], budget: float, model: CostModel) -> SelectionResult:
    """Greedy search: repeatedly add the remaining view with the largest ``F``.

    Stops when the best ``F`` is not positive, when every view is selected,
    or when the best view no longer fits in the budget. Ties go to the
    lexicographically smallest view id.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    remaining = sorted(V, key=lambda v: v.id)
    selected: List[CandidateView] = []
    log: List[Tuple[str, float]] = []
    used = 0
    stop = "all views selected"
    while remaining:
        scored = sorted(((model.objective(v, selected), v) for v in remaining), key=lambda t: (-t[0], t[1].id))
        f, best = scored[0]
        if f <= 0:
            stop = "no improvement"
            break
        if used + best.size > budget:
            stop = "storage space full"
            break
        selected.append(best)
        log.append((best.id, f))
        used += best.size
        remaining.remove(best)
    return SelectionResult(tuple(v.id for v in selected), tuple(log), used, budget, stop)


def exhaustive_select(V: Sequence[CandidateView], budget: float, model: CostModel):
    """Best feasible subset by ``model.value`` (ties: fewest views, then ids)."""
    best_value, best = model.value([]), ()
    views = sorted(V, key=lambda v: v.id)
    for r in range(1, len(views) + 1):
        for combo in itertools.combinations(views, r):
            if sum(v.size for v in combo) > budget:
                continue
            value = model.value(combo)
            if value > best_value:
                best_value, best = value, tuple(v.id for v in combo)
    return best, best_value


# -- materialization --------------------------------------------------------------


@dataclass(frozen=True)
class MaterializedView:
    id: str
    attributes: Tuple[AttrRef, ...]
    attribute_types: Tuple[str, ...]
    measures: Tuple[Tuple[str, str], ...]
    rows: Tuple[Tuple[tuple, int, tuple], ...]
    store: Optional[str] = None

    @property
    def measure_names(self) -> Tuple[str, ...]:
        return tuple(m for m, _ in self.measures)

    @cached_property
    def catalog(self) -> Catalog:
        dims: Dict[str, List[Tuple[str, str]]] = {}
        for (d, a), t in zip(self.attributes, self.attribute_types):
            dims.setdefault(d, []).append((a, t))
        return Catalog(self.measures, [(d, tuple(a)) for d, a in dims.items()])

    def covers(self, q: AnalyticalQuery) -> bool:
        return set(q.attributes()) <= set(self.attributes) and set(q.measures()) <= set(self.measure_names)


def materialize(s: XCubeStore, v: CandidateView) -> MaterializedView:
    """Pre-aggregate the store on the view attributes.

    Each row keeps the cell count and, per measure, (count, sum, min, max).
    """
    for ref in v.attributes:
        s.attribute_type(*ref)
    measures = tuple((m, s.measure_type(m)) for m in v.measures)
    compiled = Compiled(v.attributes, (), tuple(range(len(v.attributes))), v.measures, (), ())
    groups = group_states(compiled, joined_records(s, compiled, PlanStats()))
    rows = tuple((key, groups[key][0], tuple(tuple(p) for p in groups[key][1]))
                 for key in sorted(groups, key=sort_key))
    types = tuple(s.attribute_type(*ref) for ref in v.attributes)
    return MaterializedView(v.id, v.attributes, types, measures, rows, s.fingerprint)


def covering_view(views: Sequence[MaterializedView], q: AnalyticalQuery) -> Optional[MaterializedView]:
    covering = [v for v in views if v.covers(q)]
    if not covering:
        return None
    return min(covering, key=lambda v: (len(v.rows), v.id))


def answer_from_views(views: Sequence[MaterializedView], q: AnalyticalQuery) -> ResultTable:
    """Answer ``q`` from the smallest covering view, never touching the store.

    SUM, COUNT, MIN and MAX re-aggregate directly; AVG is rebuilt from SUM and
    COUNT. Raises ``NotCovered`` when no view holds the needed attributes and
    measures.
    """
    view = covering_view(views, q)
    if view is None:
        raise NotCovered(f"no materialized view covers query {q.id!r}")
    compiled = compile_query(q, view.catalog)
    position = {ref: i for i, ref in enumerate(view.attributes)}
    slots = [position[ref] for ref in compiled.refs]
    measure_pos = {m: i for i, m in enumerate(view.measure_names)}
    wanted = [measure_pos[m] for m in compiled.measures]
    groups: Dict[tuple, list] = {}
    with decimal.localcontext(DECIMAL_CONTEXT):
        _fold_rows(view, compiled, slots, wanted, groups)
    return table_from_groups(groups, compiled)


def _fold_rows(view, compiled, slots, wanted, groups) -> None:
    for key, cells, partials in view.rows:
        values = [key[i] for i in slots]
        for slot, test, literal in compiled.predicates:
            v = values[slot]
            if v is None or not test(v, literal):
                break
        else:
            group = tuple(values[s] for s in compiled.group_slots)
            state = groups.get(group)
            if state is None:
                state = groups[group] = new_state(len(compiled.measures))
            merge_state(state, cells, [partials[i] for i in wanted])


# -- estimator facade ---------------------------------------------------------------


class ViewSelector(BaseEstimator):
    """Estimator-style wrapper around the whole selection pipeline.

    ``fit(workload, store)`` computes ``matrix_``, ``clusters_``,
    ``candidates_`` and ``selection_``; ``transform(store)`` materializes the
    selected views.
    """

    def __init__(self, threshold: float = 0.5, budget: float = 1000.0, lam: float = 1.0):
        self.threshold = threshold
        self.budget = budget
        self.lam = lam

    def fit(self, workload: Workload, store: XCubeStore):
        check_fraction(self.threshold, "threshold", low_open=False)
        self.matrix_ = build_matrix(workload)
        self.clusters_ = cluster_queries(self.matrix_, self.threshold)
        self.statistics_ = store_statistics(store, self.matrix_.attributes)
        self.candidates_ = candidate_views(self.clusters_, workload, self.statistics_, self.lam)
        self.cost_model_ = CostModel.for_workload(workload, self.statistics_, self.lam)
        self.selection_ = greedy_select(self.candidates_, self.budget, self.cost_model_)
        return self

    @property
    def selected_views_(self) -> List[CandidateView]:
        chosen = set(self.selection_.selected)
        return [v for v in self.candidates_ if v.id in chosen]

    def transform(self, store: XCubeStore) -> List[MaterializedView]:
        return [materialize(store, v) for v in self.selected_views_]


# -- files --------------------------------------------------------------------------


def read_workload(directory: os.PathLike | str) -> Workload:
    """Query files ``*.xml`` of a directory plus optional ``frequencies.xml``."""
    base = Path(directory)
    queries = [read_query(p) for p in sorted(base.glob("*.xml")) if p.name != "frequencies.xml"]
    weights = {}
    manifest = base / "frequencies.xml"
    if manifest.exists():
        for el in as_element(manifest).findall("query"):
            weights[el.get("id")] = float(el.get("weight", "1"))
    return Workload(tuple(queries), tuple(weights.get(q.id, 1.0) for q in queries))


def _fmt(x: float) -> str:
    return repr(float(x))


def selection_element(candidates: Sequence[CandidateView], result: SelectionResult) -> ET.Element:
    used = str(result.budget_used)
    root = ET.Element("selection", {"budget": _fmt(result.budget), "used": used, "stop": result.stop})
    for v in candidates:
        el = ET.SubElement(root, "candidate", {"id": v.id, "size": str(v.size), "benefit": _fmt(v.benefit)})
        for d, a in v.attributes:
            ET.SubElement(el, "attribute", {"dimension": d, "name": a})
        for m in v.measures:
            ET.SubElement(el, "measure", {"name": m})
        for qid in v.cluster:
            ET.SubElement(el, "member", {"query": qid})
        for qid in v.resolvable:
            ET.SubElement(el, "resolves", {"query": qid})
    for step, (vid, f) in enumerate(result.log, start=1):
        ET.SubElement(root, "iteration", {"step": str(step), "view": vid, "F": _fmt(f)})
    return root


def read_selection(source) -> Tuple[List[CandidateView], SelectionResult]:
    root = as_element(source)
    candidates = []
    for el in root.findall("candidate"):
        candidates.append(CandidateView(
            el.get("id"),
            tuple((a.get("dimension"), a.get("name")) for a in el.findall("attribute")),
            tuple(m.get("name") for m in el.findall("measure")),
            tuple(m.get("query") for m in el.findall("member")),
            tuple(m.get("query") for m in el.findall("resolves")),
            int(el.get("size")), float(el.get("benefit")),
        ))
    log = tuple((el.get("view"), float(el.get("F"))) for el in root.findall("iteration"))
    result = SelectionResult(tuple(v for v, _ in log), log, int(root.get("used")),
                             float(root.get("budget")), root.get("stop"))
    return candidates, result


def view_element(v: MaterializedView) -> ET.Element:
    root = ET.Element("View", {"id": v.id})
    if v.store is not None:
        root.set("store", v.store)
    for (d, a), t in zip(v.attributes, v.attribute_types):
        ET.SubElement(root, "group", {"dimension": d, "attribute": a, "type": t})
    for m, t in v.measures:
        ET.SubElement(root, "measure", {"name": m, "type": t})
    for key, cells, partials in v.rows:
        row = ET.SubElement(root, "Row", {"cells": str(cells)})
        for value in key:
            k = ET.SubElement(row, "key")
            if value is None:
                k.set("null", "true")
            else:
                k.text = format_value(value)
        for (m, _), (count, total, low, high) in zip(v.measures, partials):
            attrs = {"measure": m, "count": str(count)}
            if count:
                attrs.update(sum=format_value(total), min=format_value(low), max=format_value(high))
            ET.SubElement(row, "partial", attrs)
    return root


def write_view(v: MaterializedView, directory: os.PathLike | str) -> Path:
    return write_xml(view_element(v), Path(directory) / f"{v.id}.xml")


def read_view(source) -> MaterializedView:
    root = as_element(source)
    if root.tag != "View":
        raise MalformedDocument(f"expected <View>, got <{root.tag}>")
    groups = [(g.get("dimension"), g.get("attribute"), g.get("type", "string")) for g in root.findall("group")]
    measures = tuple((m.get("name"), m.get("type", "decimal")) for m in root.findall("measure"))
    rows = []
    try:
        for row in root.findall("Row"):
            keys = tuple(
                None if k.get("null") == "true" else parse_value(k.text or "", t)
                for k, (_, _, t) in zip(row.findall("key"), groups)
            )
            partials = []
            for p, (_, t) in zip(row.findall("partial"), measures):
                count = int(p.get("count", "0"))
                if count:
                    partials.append((count, parse_value(p.get("sum"), t), parse_value(p.get("min"), t),
                                     parse_value(p.get("max"), t)))
                else:
                    partials.append((0, None, None, None))
            rows.append((keys, int(row.get("cells")), tuple(partials)))
    except (TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad view row: {exc}") from exc
    return MaterializedView(root.get("id"), tuple((d, a) for d, a, _ in groups), tuple(t for _, _, t in groups),
                            measures, tuple(rows), root.get("store"))


def read_views(directory: os.PathLike | str) -> List[MaterializedView]:
    return [read_view(p) for p in sorted(Path(directory).glob("*.xml"))]
