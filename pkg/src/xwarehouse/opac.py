"""Aggregation by clustering: Ward AHC over the members of a dimension.

Each member of the analysed dimension becomes one individual whose
coordinates are the sums of its cells' measures plus its own descriptors
(numeric descriptors as values, categorical ones one-hot encoded), every
coordinate standardized. Cutting the dendrogram at ``k`` clusters yields a
new, coarser level of the dimension that the query engine can roll up to.

Merge heights follow the usual Ward convention: two singletons merge at
their Euclidean distance, and a merge's ``height**2 / 2`` is the increase in
within-cluster inertia it causes.
"""

from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.metrics import silhouette_score
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import BadK, EmptyDimension, TooFewIndividuals, UnknownAttribute, UnknownMeasure
from .query import LevelHierarchy
from .store import NODE_ATTRIBUTE, DimensionMember, XCubeStore
from .validation import NUMERIC_TYPES, as_element


@dataclass(frozen=True)
class FactVector:
    id: str
    coordinates: Tuple[float, ...]


class Encoding(NamedTuple):
    """Column layout of a vectorization: one entry per kept coordinate."""

    columns: Tuple[Tuple[str, str, Optional[str]], ...]  # (kind, name, category)
    dropped: Tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray


def _raw_matrix(s: XCubeStore, dimension: str, measures: Sequence[str], descriptors: Sequence[str]):
    members = sorted(s.members_of(dimension), key=lambda m: m.node)
    if not members:
        raise EmptyDimension(f"dimension {dimension!r} has no member")
    for m in measures:
        if m not in s.measure_names:
            raise UnknownMeasure(m)
    types = {}
    for d in descriptors:
        types[d] = s.attribute_type(dimension, d)
    row_of = {m.node: i for i, m in enumerate(members)}
    sums = np.zeros((len(members), len(measures)))
    for cell in s.cells:
        node = dict(cell.coordinates).get(dimension)
        if node is None:
            continue
        values = cell.measure_values
        for j, name in enumerate(measures):
            v = values.get(name)
            if v is not None:
                sums[row_of[node], j] += float(v)
    columns: List[Tuple[str, str, Optional[str]]] = [("measure", m, None) for m in measures]
    blocks = [sums]
    for d in descriptors:
        raw = [m.get(d) for m in members]
        if types[d] in NUMERIC_TYPES:
            blocks.append(np.array([[float(v) if v is not None else np.nan] for v in raw]))
            columns.append(("numeric", d, None))
        else:
            categories = sorted({str(v) for v in raw if v is not None})
            onehot = np.array([[1.0 if v is not None and str(v) == c else 0.0 for c in categories] for v in raw])
            blocks.append(onehot.reshape(len(members), len(categories)))
            columns.extend(("category", d, c) for c in categories)
    X = np.hstack(blocks) if blocks else np.zeros((len(members), 0))
    if np.isnan(X).any():
        col_mean = np.nanmean(X, axis=0)
        X = np.where(np.isnan(X), col_mean, X)
    return members, X, columns


def _standardize(X: np.ndarray, columns):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    dropped = tuple(f"{kind}:{name}" + (f"={cat}" if cat is not None else "")
                    for (kind, name, cat), k in zip(columns, keep) if not k)
    if dropped:
        warnings.warn(f"constant coordinates dropped: {', '.join(dropped)}", RuntimeWarning, stacklevel=3)
    Z = (X[:, keep] - mean[keep]) / std[keep]
    kept = tuple(c for c, k in zip(columns, keep) if k)
    return Z, Encoding(kept, dropped, mean[keep], std[keep])


def vectorize(s: XCubeStore, dimension: str, measures: Sequence[str],
              descriptors: Sequence[str] = ()) -> List[FactVector]:
    """One standardized vector per member of ``dimension`` (ordered by node id)."""
    members, X, columns = _raw_matrix(s, dimension, measures, descriptors)
    Z, _ = _standardize(X, columns)
    return [FactVector(m.node, tuple(float(x) for x in row)) for m, row in zip(members, Z)]


class FactVectorizer(TransformerMixin, BaseEstimator):
    """Transformer producing the OpAC individual-by-coordinate matrix of a store."""

    def __init__(self, dimension: str = "", measures: Sequence[str] = (), descriptors: Sequence[str] = ()):
        self.dimension = dimension
        self.measures = measures
        self.descriptors = descriptors

    def fit(self, store: XCubeStore, y=None):
        members, X, columns = _raw_matrix(store, self.dimension, list(self.measures), list(self.descriptors))
        _, self.encoding_ = _standardize(X, columns)
        self.ids_ = [m.node for m in members]
        return self

    def transform(self, store: XCubeStore) -> np.ndarray:
        check_is_fitted(self, "encoding_")
        members, X, columns = _raw_matrix(store, self.dimension, list(self.measures), list(self.descriptors))
        index = {c: i for i, c in enumerate(columns)}
        cols = [index[c] if c in index else None for c in self.encoding_.columns]
        raw = np.column_stack([X[:, i] if i is not None else np.zeros(len(members)) for i in cols]) \
            if cols else np.zeros((len(members), 0))
        return (raw - self.encoding_.mean) / self.encoding_.scale


# -- agglomerative clustering --------------------------------------------------------


class Merge(NamedTuple):
    step: int
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge list in scipy order: leaves 0..n-1, merge ``t`` creates cluster ``n + t``."""

    n: int
    merges: Tuple[Merge, ...]

    def linkage_matrix(self) -> np.ndarray:
        return np.array([[m.a, m.b, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])


def ahc(vectors, linkage: str = "ward", distance: str = "euclidean") -> Dendrogram:
    """Ward agglomerative clustering with Lance-Williams updates.

    At each step the pair with the smallest Ward distance merges; exact ties
    go to the lexicographically smallest (cluster id, cluster id) pair.
    """
    if linkage != "ward" or distance != "euclidean":
        raise ValueError("only Ward linkage on Euclidean distance is supported")
    X = _as_matrix(vectors)
    n = X.shape[0]
    if n < 2:
        raise TooFewIndividuals(f"clustering needs at least 2 individuals, got {n}")
    diff = X[:, None, :] - X[None, :, :]
    D = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(D, np.inf)
    ids = np.arange(n)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    for step in range(n - 1):
        low = D.min()
        ii, jj = np.nonzero(D == low)
        pairs = sorted((min(ids[i], ids[j]), max(ids[i], ids[j]), i, j) for i, j in zip(ii, jj))
        a_id, b_id, i, j = pairs[0]
        if ids[i] != a_id:
            i, j = j, i
        ni, nj = sizes[i], sizes[j]
        nk = sizes
        updated = ((ni + nk) * D[i] + (nj + nk) * D[j] - nk * low) / (ni + nj + nk)
        merges.append(Merge(step, int(a_id), int(b_id), float(np.sqrt(low)), int(ni + nj)))
        D[i, :] = updated
        D[:, i] = updated
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        active[j] = False
        sizes[i] = ni + nj
        sizes[j] = 0
        ids[i] = n + step
    return Dendrogram(n, tuple(merges))


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, (list, tuple)) and vectors and isinstance(vectors[0], FactVector):
        vectors = [v.coordinates for v in vectors]
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        if X.size == 0:
            return X.reshape(0, 0)
        X = X.reshape(len(X), -1)
    return X


def cut(d: Dendrogram, k: int) -> np.ndarray:
    """Labels of the ``k``-cluster partition (undo the last ``k - 1`` merges).

    Labels are 0..k-1 numbered by each cluster's smallest individual.
    """
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= d.n:
        raise BadK(f"k must be an integer in [1, {d.n}], got {k!r}")
    parent = list(range(d.n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    leader = {i: i for i in range(d.n)}
    for m in d.merges[: d.n - k]:
        ra, rb = find(leader[m.a]), find(leader[m.b])
        parent[rb] = ra
        leader[d.n + m.step] = ra
    roots = [find(i) for i in range(d.n)]
    numbering: Dict[int, int] = {}
    for r in roots:
        numbering.setdefault(r, len(numbering))
    return np.array([numbering[r] for r in roots])


def partition(labels: Sequence[int]) -> List[frozenset]:
    groups: Dict[int, set] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)


class PartitionScore(NamedTuple):
    k: int
    intra: float
    inter: float
    ward: Optional[float]
    separability: Optional[float]


def inertia(X: np.ndarray, labels: np.ndarray) -> Tuple[float, float, float]:
    """(intra, inter, total) inertia of a labelled point set."""
    g = X.mean(axis=0)
    total = float(((X - g) ** 2).sum())
    intra = inter = 0.0
    for lab in np.unique(labels):
        part = X[labels == lab]
        c = part.mean(axis=0)
        intra += float(((part - c) ** 2).sum())
        inter += len(part) * float(((c - g) ** 2).sum())
    return intra, inter, total


def score_partitions(d: Dendrogram, vectors) -> List[PartitionScore]:
    """Quality criteria for every ``k`` from 1 to n.

    ``ward`` is the height of the merge that would reduce ``k`` clusters to
    ``k - 1`` (none for k = 1). ``separability`` is the mean silhouette
    coefficient, defined for 2 <= k <= n - 1.
    """
    X = _as_matrix(vectors)
    scores = []
    for k in range(1, d.n + 1):
        labels = cut(d, k)
        intra, inter, _ = inertia(X, labels)
        ward = d.merges[d.n - k].height if k > 1 else None
        sep = float(silhouette_score(X, labels)) if 2 <= k <= d.n - 1 else None
        scores.append(PartitionScore(k, intra, inter, ward, sep))
    return scores


def recommended_k(scores: Sequence[PartitionScore]) -> int:
    """Largest separability wins; ties go to the smaller k; k = 1 when none is defined."""
    best = None
    for s in scores:
        if s.separability is not None and (best is None or s.separability > best.separability):
            best = s
    return best.k if best is not None else 1


class OpAC(ClusterMixin, BaseEstimator):
    """Ward AHC estimator with partition scoring.

    ``n_clusters=None`` picks the recommended partition. After ``fit``:
    ``dendrogram_``, ``scores_``, ``n_clusters_`` and ``labels_``.
    """

    def __init__(self, n_clusters: Optional[int] = None):
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        X = _as_matrix(X)
        if X.shape[0] >= 2 and X.shape[1] > 0:
            X = check_array(X)
        self.dendrogram_ = ahc(X)
        self.scores_ = score_partitions(self.dendrogram_, X)
        self.n_clusters_ = self.n_clusters if self.n_clusters is not None else recommended_k(self.scores_)
        self.labels_ = cut(self.dendrogram_, self.n_clusters_)
        return self


# -- dimension aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class AggregateLevel:
    dimension: str
    name: str
    k: int
    mapping: Tuple[Tuple[str, str], ...]  # (member node, cluster label)

    def hierarchy(self) -> LevelHierarchy:
        return LevelHierarchy(self.dimension, (NODE_ATTRIBUTE, self.name))


def opac_aggregate(s: XCubeStore, dimension: str, k: int, measures: Optional[Sequence[str]] = None,
                   descriptors: Sequence[str] = (), name: Optional[str] = None) -> AggregateLevel:
    """Cluster the members of ``dimension`` into ``k`` aggregates.

    Labels ``C1`` .. ``Ck`` are given in order of each cluster's first member
    (members ordered by node id).
    """
    measures = list(measures) if measures is not None else list(s.measure_names)
    members = sorted(s.members_of(dimension), key=lambda m: m.node)
    if not members:
        raise EmptyDimension(f"dimension {dimension!r} has no member")
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= len(members):
        raise BadK(f"k must be in [1, {len(members)}], got {k!r}")
    if len(members) == 1:
        labels = np.zeros(1, dtype=int)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            vectors = vectorize(s, dimension, measures, descriptors)
        labels = cut(ahc(vectors), k)
    level = name or f"opac{k}"
    mapping = tuple((m.node, f"C{int(lab) + 1}") for m, lab in zip(members, labels))
    return AggregateLevel(dimension, level, int(k), mapping)


def attach_level(s: XCubeStore, level: AggregateLevel) -> XCubeStore:
    """Store whose members of ``level.dimension`` carry the aggregate label."""
    labels = dict(level.mapping)
    members = []
    for m in s.members:
        if m.dimension == level.dimension:
            attrs = tuple(a for a in m.attributes if a[0] != level.name)
            label = labels.get(m.node)
            if label is not None:
                attrs = attrs + ((level.name, label),)
            m = DimensionMember(m.dimension, m.node, attrs)
        members.append(m)
    catalog = []
    found = False
    for dim, attrs in s.dimension_catalog:
        if dim == level.dimension:
            found = True
            attrs = tuple(a for a in attrs if a[0] != level.name) + ((level.name, "string"),)
        catalog.append((dim, attrs))
    if not found:
        raise UnknownAttribute(f"unknown dimension {level.dimension!r}")
    return s.with_members(members, tuple(catalog))


def level_element(level: AggregateLevel) -> ET.Element:
    root = ET.Element("AggregateLevel", {"dimension": level.dimension, "name": level.name, "k": str(level.k)})
    for node, label in level.mapping:
        ET.SubElement(root, "member", {"node": node, "label": label})
    return root


def read_level(source) -> AggregateLevel:
    root = as_element(source)
    return AggregateLevel(root.get("dimension", ""), root.get("name", ""), int(root.get("k", "0")),
                          tuple((m.get("node", ""), m.get("label", "")) for m in root.findall("member")))


def dendrogram_element(d: Dendrogram, ids: Optional[Sequence[str]] = None) -> ET.Element:
    root = ET.Element("dendrogram", {"individuals": str(d.n)})
    if ids is not None:
        for i, ident in enumerate(ids):
            ET.SubElement(root, "leaf", {"cluster": str(i), "id": ident})
    for m in d.merges:
        ET.SubElement(root, "merge", {"step": str(m.step + 1), "a": str(m.a), "b": str(m.b),
                                      "cluster": str(d.n + m.step), "height": repr(m.height),
                                      "size": str(m.size)})
    return root


def scores_element(scores: Sequence[PartitionScore], recommended: int) -> ET.Element:
    root = ET.Element("scores", {"recommended": str(recommended)})
    for s in scores:
        attrs = {"k": str(s.k), "intra": repr(s.intra), "inter": repr(s.inter)}
        if s.ward is not None:
            attrs["ward"] = repr(s.ward)
        if s.separability is not None:
            attrs["separability"] = repr(s.separability)
        ET.SubElement(root, "partition", attrs)
    return root
