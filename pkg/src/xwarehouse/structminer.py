"""Tag-structure association rules over an XML corpus.

Items are full tag paths (``Article/Author/Name``), so one tag met in two
places of the hierarchy gives two distinct items. The level-wise search
skips any itemset holding both a path and one of its ancestors: the
ancestor is implied by the descendant, so such itemsets say nothing about
structure.

Rules are ranked by lift (confidence as tiebreak); ``quality`` is a
pluggable function of (support(A∪B), support(A), support(B)).
"""

from __future__ import annotations

import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from sklearn.base import BaseEstimator

from .attree import AttributeTree, format_path, parse_path, tree_from_document
from .errors import MalformedDocument, UnknownPath, XWarehouseError
from .validation import as_element, check_fraction

Item = str
Itemset = FrozenSet[Item]
VIRTUAL_ROOT = "#corpus"


def load_corpus(directory: os.PathLike | str) -> List[Tuple[str, Path]]:
    """``*.xml`` files of a directory (recursive), as (relative id, path) sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MalformedDocument(f"{directory}: corpus directory not found")
    files = sorted(p for p in directory.rglob("*.xml") if p.is_file())
    return [(p.relative_to(directory).as_posix(), p) for p in files]


def _entries(corpus) -> List[Tuple[str, object]]:
    if isinstance(corpus, (str, os.PathLike)):
        return load_corpus(corpus)
    out = []
    for i, entry in enumerate(corpus):
        if isinstance(entry, tuple) and len(entry) == 2:
            out.append((str(entry[0]), entry[1]))
        elif isinstance(entry, (str, os.PathLike)) and Path(entry).is_file():
            out.append((Path(entry).name, entry))
        else:
            out.append((f"doc{i + 1}", entry))
    return out


def document_paths(doc) -> FrozenSet[Item]:
    """Distinct tag paths of one document (attributes ignored)."""
    return frozenset(format_path(p) for p in tree_from_document(doc, attributes=False).path_set())


@dataclass(frozen=True)
class MinimalDtd:
    """Union tag hierarchy of a corpus with per-path document counts."""

    counts: Tuple[Tuple[Item, int], ...]
    documents: int
    malformed: Tuple[Tuple[str, str], ...] = ()

    @property
    def paths(self) -> FrozenSet[Item]:
        return frozenset(p for p, _ in self.counts)

    def count(self, path: Item) -> int:
        return dict(self.counts).get(path, 0)

    @property
    def tree(self) -> AttributeTree:
        """The hierarchy as an attribute tree; several root tags hang under a virtual root."""
        paths = [parse_path(p) for p, _ in self.counts]
        roots = {p[0] for p in paths}
        if len(roots) > 1:
            paths = [(VIRTUAL_ROOT,) + p for p in paths]
        return AttributeTree.from_paths(paths)


def build_minimal_dtd(corpus) -> MinimalDtd:
    """Malformed documents are recorded, not fatal; the corpus must hold at least one document."""
    entries = _entries(corpus)
    if not entries:
        raise MalformedDocument("empty corpus")
    counts: Dict[Item, int] = {}
    malformed = []
    good = 0
    for ident, doc in entries:
        try:
            paths = document_paths(doc)
        except XWarehouseError as exc:
            malformed.append((ident, str(exc)))
            continue
        good += 1
        for p in paths:
            counts[p] = counts.get(p, 0) + 1
    return MinimalDtd(tuple(sorted(counts.items(), key=lambda kv: parse_path(kv[0]))), good, tuple(malformed))


@dataclass(frozen=True)
class Transaction:
    document: str
    items: Itemset


def extract_transactions(corpus, dtd: MinimalDtd) -> List[Transaction]:
    """One transaction per well-formed document, in corpus order."""
    known = dtd.paths
    out = []
    for ident, doc in _entries(corpus):
        try:
            items = document_paths(doc)
        except XWarehouseError:
            continue
        unknown = items - known
        if unknown:
            raise UnknownPath(f"{ident}: path {sorted(unknown)[0]!r} is not in the minimal DTD; rebuild it")
        out.append(Transaction(ident, items))
    return out


def nested(a: Item, b: Item) -> bool:
    """True when one path is an ancestor of (or equal to) the other."""
    return a == b or b.startswith(a + "/") or a.startswith(b + "/")


def is_antichain(items: Iterable[Item]) -> bool:
    items = sorted(items)
    return not any(nested(a, b) for a, b in combinations(items, 2))


def min_count(minsup: float, n: int) -> int:
    """Smallest transaction count whose support reaches ``minsup``."""
    return max(1, math.ceil(minsup * n - 1e-9))


def apriori(transactions: Sequence[Transaction], minsup: float) -> Dict[Itemset, int]:
    """Frequent path-antichains mapped to their transaction counts."""
    check_fraction(minsup, "minsup")
    if not transactions:
        raise ValueError("apriori needs at least one transaction")
    sets = [t.items if isinstance(t, Transaction) else frozenset(t) for t in transactions]
    threshold = min_count(minsup, len(sets))
    counts: Dict[Item, int] = {}
    for s in sets:
        for item in s:
            counts[item] = counts.get(item, 0) + 1
    level = {frozenset([i]): c for i, c in counts.items() if c >= threshold}
    frequent = dict(level)
    k = 1
    while level:
        ordered = sorted(tuple(sorted(s)) for s in level)
        candidates = set()
        for x, y in combinations(ordered, 2):
            if x[:-1] != y[:-1]:
                continue
            if nested(x[-1], y[-1]):
                continue
            c = frozenset(x + (y[-1],))
            if all(c - {i} in level for i in c):
                candidates.add(c)
        k += 1
        tallies = {c: 0 for c in candidates}
        for s in sets:
            if len(s) < k:
                continue
            for c in candidates:
                if c <= s:
                    tallies[c] += 1
        level = {c: n for c, n in tallies.items() if n >= threshold}
        frequent.update(level)
    return frequent


def lift(joint: float, antecedent: float, consequent: float) -> float:
    return joint / (antecedent * consequent)


@dataclass(frozen=True)
class AssociationRule:
    antecedent: Tuple[Item, ...]
    consequent: Tuple[Item, ...]
    support: float
    confidence: float
    quality: float


def extract_rules(frequent: Dict[Itemset, int], minconf: float, n_transactions: int,
                  quality: Callable[[float, float, float], float] = lift) -> List[AssociationRule]:
    """All rules A -> B, A ∪ B frequent, confidence >= minconf; best quality first."""
    check_fraction(minconf, "minconf")
    rules = []
    for itemset, joint in frequent.items():
        if len(itemset) < 2:
            continue
        items = sorted(itemset)
        for r in range(1, len(items)):
            for ante in combinations(items, r):
                a = frozenset(ante)
                b = itemset - a
                conf = joint / frequent[a]
                if conf < minconf - 1e-12:
                    continue
                sup = joint / n_transactions
                score = quality(sup, frequent[a] / n_transactions, frequent[b] / n_transactions)
                rules.append(AssociationRule(tuple(ante), tuple(sorted(b)), sup, conf, score))
    rules.sort(key=lambda r: (-r.quality, -r.confidence, -r.support, r.antecedent, r.consequent))
    return rules


# -- XML outputs -----------------------------------------------------------------------


def emit_rules_xml(rules: Sequence[AssociationRule], *, minsup: Optional[float] = None,
                   minconf: Optional[float] = None, transactions: Optional[int] = None) -> ET.Element:
    root = ET.Element("rules")
    for name, value in (("minsup", minsup), ("minconf", minconf)):
        if value is not None:
            root.set(name, repr(float(value)))
    if transactions is not None:
        root.set("transactions", str(transactions))
    for r in rules:
        el = ET.SubElement(root, "rule", {"support": repr(r.support), "confidence": repr(r.confidence),
                                          "quality": repr(r.quality)})
        for side, items in (("antecedent", r.antecedent), ("consequent", r.consequent)):
            s = ET.SubElement(el, side)
            for item in items:
                ET.SubElement(s, "item", {"path": item})
    return root


def read_rules_xml(source) -> List[AssociationRule]:
    root = as_element(source)
    if root.tag != "rules":
        raise MalformedDocument("not a rules document")
    rules = []
    try:
        for el in root.findall("rule"):
            sides = {}
            for side in ("antecedent", "consequent"):
                s = el.find(side)
                sides[side] = tuple(i.get("path", "") for i in s.findall("item")) if s is not None else ()
            rules.append(AssociationRule(sides["antecedent"], sides["consequent"], float(el.get("support")),
                                         float(el.get("confidence")), float(el.get("quality"))))
    except (TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad rule metrics: {exc}") from exc
    return rules


def dtd_element(dtd: MinimalDtd) -> ET.Element:
    root = ET.Element("minimalDtd", {"documents": str(dtd.documents)})
    by_path: Dict[Tuple[str, ...], ET.Element] = {(): root}
    for path, count in dtd.counts:
        p = parse_path(path)
        by_path[p] = ET.SubElement(by_path[p[:-1]], "tag", {"name": p[-1], "count": str(count)})
    for ident, reason in dtd.malformed:
        ET.SubElement(root, "malformed", {"document": ident, "reason": reason})
    return root


def read_dtd(source) -> MinimalDtd:
    root = as_element(source)
    counts = []

    def walk(el: ET.Element, prefix: Tuple[str, ...]) -> None:
        for t in el.findall("tag"):
            p = prefix + (t.get("name", ""),)
            counts.append((format_path(p), int(t.get("count", "0"))))
            walk(t, p)

    walk(root, ())
    counts.sort(key=lambda kv: parse_path(kv[0]))
    malformed = tuple((m.get("document", ""), m.get("reason", "")) for m in root.findall("malformed"))
    return MinimalDtd(tuple(counts), int(root.get("documents", "0")), malformed)


class StructureMiner(BaseEstimator):
    """Estimator wrapper: ``fit(corpus)`` sets ``dtd_``, ``transactions_``, ``itemsets_`` and ``rules_``."""

    def __init__(self, minsup: float = 0.1, minconf: float = 0.5):
        self.minsup = minsup
        self.minconf = minconf

    def fit(self, corpus, y=None):
        check_fraction(self.minsup, "minsup")
        check_fraction(self.minconf, "minconf")
        entries = _entries(corpus)
        self.dtd_ = build_minimal_dtd(entries)
        self.transactions_ = extract_transactions(entries, self.dtd_)
        if not self.transactions_:
            raise MalformedDocument("no well-formed document in corpus")
        self.itemsets_ = apriori(self.transactions_, self.minsup)
        self.rules_ = extract_rules(self.itemsets_, self.minconf, len(self.transactions_))
        return self

    def to_element(self) -> ET.Element:
        return emit_rules_xml(self.rules_, minsup=self.minsup, minconf=self.minconf,
                              transactions=len(self.transactions_))
