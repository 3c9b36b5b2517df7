"""Attribute trees and the pruning/grafting/fusion algebra.

An attribute tree is a rooted labelled tree describing the shape of a
warehouse schema or of an input document. Nodes are matched across trees by
their root-to-node *label path*. Element nodes carry the element name as
label; XML attributes become leaf nodes labelled ``@name``.
"""

from __future__ import annotations

import enum
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import (
    CannotGraftRoot,
    CannotPruneRoot,
    InvalidTree,
    MalformedDocument,
    MalformedSchema,
    UnknownNode,
)
from .validation import XmlSource, as_element

LabelPath = Tuple[str, ...]


@dataclass(frozen=True)
class Node:
    id: int
    label: str
    mandatory: bool = True


def format_path(path: Sequence[str]) -> str:
    return "/".join(path)


def parse_path(text: str) -> LabelPath:
    return tuple(text.split("/"))


class AttributeTree:
    """Immutable rooted tree with unique sibling labels.

    Equality is structural: two trees are equal when they have the same label
    paths with the same mandatory flags, whatever their node ids.
    """

    __slots__ = ("_nodes", "_parent", "_children", "_root", "_paths")

    def __init__(
        self,
        nodes: Iterable[Node],
        edges: Iterable[Tuple[int, int]],
        root: Optional[int] = None,
    ):
        self._nodes: Dict[int, Node] = {}
        for node in nodes:
            if node.id in self._nodes:
                raise InvalidTree(f"duplicate node id {node.id}")
            self._nodes[node.id] = node
        self._parent: Dict[int, Optional[int]] = {n: None for n in self._nodes}
        self._children: Dict[int, List[int]] = {n: [] for n in self._nodes}
        for parent, child in edges:
            if parent not in self._nodes or child not in self._nodes:
                raise InvalidTree(f"edge {parent}->{child} references an unknown node")
            if self._parent[child] is not None:
                raise InvalidTree(f"node {child} has more than one parent")
            self._parent[child] = parent
            self._children[parent].append(child)
        roots = [n for n, p in self._parent.items() if p is None]
        if len(roots) != 1:
            raise InvalidTree(f"expected exactly one root, found {len(roots)}")
        if root is not None and root != roots[0]:
            raise InvalidTree(f"declared root {root} has a parent")
        self._root = roots[0]
        self._paths: Dict[LabelPath, int] = {}
        stack = [(self._root, (self._nodes[self._root].label,))]
        seen = 0
        while stack:
            node, path = stack.pop()
            seen += 1
            if seen > len(self._nodes):
                raise InvalidTree("cycle detected")
            self._paths[path] = node
            labels = set()
            for child in self._children[node]:
                label = self._nodes[child].label
                if label in labels:
                    raise InvalidTree(f"duplicate sibling label {label!r} under {format_path(path)}")
                labels.add(label)
                stack.append((child, path + (label,)))
        if seen != len(self._nodes):
            raise InvalidTree("graph is not weakly connected")

    # -- construction helpers ---------------------------------------------

    @classmethod
    def from_paths(cls, paths: Mapping[LabelPath, bool] | Iterable[LabelPath]) -> "AttributeTree":
        """Build a tree from label paths (optionally mapped to mandatory flags).

        Missing ancestors are created as optional nodes. Nodes are numbered in
        first-seen order.
        """
        if not isinstance(paths, Mapping):
            paths = {tuple(p): True for p in paths}
        ids: Dict[LabelPath, int] = {}
        flags: Dict[LabelPath, bool] = {}
        edges = []
        for path, mandatory in paths.items():
            path = tuple(path)
            for depth in range(1, len(path) + 1):
                prefix = path[:depth]
                if prefix not in ids:
                    ids[prefix] = len(ids)
                    flags[prefix] = False
                    if depth > 1:
                        edges.append((ids[prefix[:-1]], ids[prefix]))
            flags[path] = bool(mandatory)
        if not ids:
            raise InvalidTree("a tree needs at least one node")
        nodes = [Node(i, p[-1], flags[p]) for p, i in ids.items()]
        return cls(nodes, edges)

    # -- accessors ----------------------------------------------------------

    @property
    def root(self) -> int:
        return self._root

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple(self._nodes[n] for n in self.preorder())

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((p, c) for c, p in self._parent.items() if p is not None)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._nodes

    def node(self, node_id: int) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def label(self, node_id: int) -> str:
        return self.node(node_id).label

    def is_mandatory(self, node_id: int) -> bool:
        return self.node(node_id).mandatory

    def parent(self, node_id: int) -> Optional[int]:
        self.node(node_id)
        return self._parent[node_id]

    def children(self, node_id: int) -> Tuple[int, ...]:
        self.node(node_id)
        return tuple(self._children[node_id])

    def preorder(self, start: Optional[int] = None) -> List[int]:
        order = []
        stack = [self._root if start is None else start]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(reversed(self._children[node]))
        return order

    def subtree(self, node_id: int) -> List[int]:
        self.node(node_id)
        return self.preorder(node_id)

    def path(self, node_id: int) -> LabelPath:
        labels = []
        current: Optional[int] = self.node(node_id).id
        while current is not None:
            labels.append(self._nodes[current].label)
            current = self._parent[current]
        return tuple(reversed(labels))

    def paths(self) -> Dict[LabelPath, int]:
        """Map every label path to its node id, in preorder."""
        return {self.path(n): n for n in self.preorder()}

    def path_set(self) -> frozenset:
        return frozenset(self._paths)

    def mandatory_paths(self) -> List[LabelPath]:
        return [self.path(n) for n in self.preorder() if self._nodes[n].mandatory]

    def find(self, path: Sequence[str]) -> Optional[int]:
        return self._paths.get(tuple(path))

    def leaves(self) -> List[int]:
        return [n for n in self.preorder() if not self._children[n]]

    def depth(self) -> int:
        return max(len(p) for p in self._paths)

    def flags(self) -> Dict[LabelPath, bool]:
        return {self.path(n): self._nodes[n].mandatory for n in self.preorder()}

    def with_all_mandatory(self, mandatory: bool = True) -> "AttributeTree":
        nodes = [Node(n.id, n.label, mandatory) for n in self._nodes.values()]
        return AttributeTree(nodes, self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttributeTree):
            return NotImplemented
        return self.flags() == other.flags()

    def __hash__(self) -> int:
        return hash(frozenset(self.flags().items()))

    def __repr__(self) -> str:
        return f"AttributeTree(root={self.label(self._root)!r}, nodes={len(self)})"

    # -- diagnostic serialization ------------------------------------------

    def to_element(self) -> ET.Element:
        def build(node_id: int) -> ET.Element:
            node = self._nodes[node_id]
            el = ET.Element("node", {"label": node.label, "mandatory": str(node.mandatory).lower()})
            for child in self._children[node_id]:
                el.append(build(child))
            return el

        root = ET.Element("attributeTree")
        root.append(build(self._root))
        return root

    @classmethod
    def from_element(cls, source: XmlSource) -> "AttributeTree":
        root = as_element(source)
        tops = list(root) if root.tag == "attributeTree" else [root]
        if len(tops) != 1 or tops[0].tag != "node":
            raise MalformedDocument("attribute tree file must hold exactly one top node")
        flags: Dict[LabelPath, bool] = {}

        def walk(el: ET.Element, prefix: LabelPath) -> None:
            path = prefix + (el.get("label", ""),)
            flags[path] = el.get("mandatory", "true") == "true"
            for child in el:
                walk(child, path)

        walk(tops[0], ())
        return cls.from_paths(flags)


class Status(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class FusionOutcome:
    status: Status
    merged: Optional[AttributeTree] = None
    missing: Tuple[LabelPath, ...] = field(default=())

    def __post_init__(self):
        accepted = self.status is Status.ACCEPTED
        if accepted != (not self.missing) or accepted != (self.merged is not None):
            raise ValueError("inconsistent fusion outcome")

    @property
    def accepted(self) -> bool:
        return self.status is Status.ACCEPTED


# -- tree extraction ---------------------------------------------------------


def tree_from_schema(schema) -> AttributeTree:
    """Attribute tree of a warehouse logical schema document.

    ``schema`` is a ``LogicalSchema`` (anything with ``to_element()``) or the
    schema document itself. Element declarations become nodes, attribute
    declarations become ``@name`` leaves, mandatory flags are copied.
    """
    try:
        root = schema.to_element() if hasattr(schema, "to_element") else as_element(schema)
    except MalformedDocument as exc:
        raise MalformedSchema(str(exc)) from exc
    tops = [el for el in root if el.tag == "element"]
    if root.tag != "schema" or len(tops) != 1:
        raise MalformedSchema(f"schema must declare exactly one root element, found {len(tops)}")
    flags: Dict[LabelPath, bool] = {}

    def walk(el: ET.Element, prefix: LabelPath) -> bool:
        name = el.get("name")
        if not name:
            raise MalformedSchema("element declaration without a name")
        path = prefix + (name,)
        if path in flags:
            raise MalformedSchema(f"duplicate declaration {format_path(path)}")
        flags[path] = False
        needed = False
        for child in el:
            if child.tag == "attribute":
                attr = child.get("name")
                if not attr:
                    raise MalformedSchema("attribute declaration without a name")
                apath = path + ("@" + attr,)
                if apath in flags:
                    raise MalformedSchema(f"duplicate declaration {format_path(apath)}")
                mandatory = child.get("mandatory", "true") == "true"
                flags[apath] = mandatory
                needed |= mandatory
            elif child.tag == "element":
                needed |= walk(child, path)
            else:
                raise MalformedSchema(f"unexpected declaration <{child.tag}>")
        flags[path] = needed or el.get("mandatory") == "true"
        return flags[path]

    walk(tops[0], ())
    flags[(tops[0].get("name"),)] = True
    return AttributeTree.from_paths(flags)


def tree_from_document(doc: XmlSource, *, attributes: bool = True) -> AttributeTree:
    """Attribute tree of an XML document: one node per distinct label path.

    Repeated sibling elements collapse into one node. With ``attributes``
    false only element tags are kept.
    """
    root = as_element(doc)
    flags: Dict[LabelPath, bool] = {}

    def walk(el: ET.Element, prefix: LabelPath) -> None:
        if not isinstance(el.tag, str):
            return
        path = prefix + (el.tag,)
        flags.setdefault(path, True)
        if attributes:
            for name in el.attrib:
                flags.setdefault(path + ("@" + name,), True)
        for child in el:
            walk(child, path)

    walk(root, ())
    return AttributeTree.from_paths(flags)


# -- tree algebra ------------------------------------------------------------


def _mutable(t: AttributeTree):
    nodes = {n.id: n for n in t.nodes}
    children = {n: list(t.children(n)) for n in nodes}
    return nodes, children


def _rebuild(root: int, nodes: Dict[int, Node], children: Dict[int, List[int]]) -> AttributeTree:
    keep, edges, stack = [], [], [root]
    while stack:
        n = stack.pop()
        keep.append(nodes[n])
        for c in children[n]:
            edges.append((n, c))
        stack.extend(children[n])
    return AttributeTree(keep, edges)


def prune(t: AttributeTree, n: int) -> AttributeTree:
    """Remove node ``n`` together with its whole subtree."""
    t.node(n)
    if n == t.root:
        raise CannotPruneRoot("the root of an attribute tree cannot be pruned")
    nodes, children = _mutable(t)
    children[t.parent(n)].remove(n)
    return _rebuild(t.root, nodes, children)


def graft(t: AttributeTree, n: int) -> AttributeTree:
    """Remove node ``n`` and reattach its children to its parent.

    A promoted child whose label collides with an existing sibling is merged
    into it: mandatory flags are OR-ed and the children sets unioned
    recursively.
    """
    t.node(n)
    if n == t.root:
        raise CannotGraftRoot("the root of an attribute tree cannot be grafted")
    nodes, children = _mutable(t)
    parent = t.parent(n)

    def absorb(keep: int, drop: int) -> None:
        if nodes[drop].mandatory and not nodes[keep].mandatory:
            nodes[keep] = Node(keep, nodes[keep].label, True)
        for grandchild in children[drop]:
            insert(keep, grandchild)

    def insert(under: int, child: int) -> None:
        label = nodes[child].label
        for sibling in children[under]:
            if nodes[sibling].label == label:
                absorb(sibling, child)
                return
        children[under].append(child)

    siblings = children[parent]
    position = siblings.index(n)
    before, after = siblings[:position], siblings[position + 1:]
    # promoted children take the grafted node's position
    children[parent] = before
    for child in children[n]:
        insert(parent, child)
    for sibling in after:
        insert(parent, sibling)
    return _rebuild(t.root, nodes, children)


def fuse(reference: AttributeTree, candidate: AttributeTree) -> FusionOutcome:
    """Decide whether ``candidate`` holds the mandatory content of ``reference``.

    On acceptance the merged tree is the reference shape restricted to the
    paths the candidate actually provides: optional reference nodes the
    candidate lacks are grafted out, candidate-only nodes never enter.
    """
    available = candidate.path_set()
    missing = tuple(p for p in reference.mandatory_paths() if p not in available)
    if missing:
        return FusionOutcome(Status.REJECTED, None, missing)
    merged = reference
    for node_id in reversed(reference.preorder()):
        if reference.path(node_id) not in available:
            merged = graft(merged, node_id)
    return FusionOutcome(Status.ACCEPTED, merged, ())
