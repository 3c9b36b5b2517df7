import random

import numpy as np
import pytest

from oracles import brute_complete_linkage, clause_attributes, matrix_oracle
from strategies import view_instance
from xwarehouse.errors import NotCovered
from xwarehouse.generate import random_queries
from xwarehouse.query import Aggregate, AnalyticalQuery, Predicate, evaluate
from xwarehouse.validation import to_bytes
from xwarehouse.viewsel import (
    CandidateView,
    CostModel,
    QueryAttributeMatrix,
    ViewSelector,
    Workload,
    answer_from_views,
    build_matrix,
    candidate_views,
    cluster_queries,
    exhaustive_select,
    extract_attributes,
    greedy_select,
    materialize,
    read_selection,
    read_view,
    read_workload,
    selection_element,
    store_statistics,
    view_element,
)

COUNT = (Aggregate("COUNT", "*"),)


def test_extract_attributes_examples():
    q = AnalyticalQuery((Predicate("Time", "year", "=", "1999"),), (("Product", "category"),), COUNT, "a")
    assert extract_attributes(Workload((q,))) == [("Product", "category"), ("Time", "year")]
    assert extract_attributes(Workload((q, q.replace(id="b")))) == extract_attributes(Workload((q,)))


def test_matrix_examples():
    q1 = AnalyticalQuery((Predicate("Time", "year", "=", "1999"),), (("Product", "category"),), COUNT, "a")
    assert build_matrix(Workload((q1,))).values.tolist() == [[1, 1]]
    q2 = AnalyticalQuery((), (("Shop", "city"),), COUNT, "b")
    m = build_matrix(Workload((q1, q2)))
    assert int(m.row(0) @ m.row(1)) == 0


def test_matrix_oracle_random_workloads(store_200):
    for seed in range(50):
        w = Workload(tuple(random_queries(store_200, 12, seed=seed)))
        m = build_matrix(w)
        assert set(m.attributes) == set().union(*(clause_attributes(q) for q in w.queries))
        assert np.array_equal(m.values, matrix_oracle(w.queries, m.attributes))
        assert (m.values.sum(axis=0) > 0).all()


def matrix(rows):
    rows = np.array(rows, dtype=np.int8)
    return QueryAttributeMatrix(tuple(f"q{i}" for i in range(len(rows))),
                                tuple(("D", f"a{j}") for j in range(rows.shape[1])), rows)


def test_cluster_examples():
    assert cluster_queries(matrix([[1, 1, 0]] * 4), 0.5) == [(0, 1, 2, 3)]
    assert cluster_queries(matrix(np.eye(4)), 0.1) == [(0,), (1,), (2,), (3,)]


def test_cluster_matches_brute_force():
    rng = random.Random(17)
    for _ in range(40):
        rows = [[rng.random() < 0.4 for _ in range(6)] for _ in range(10)]
        theta = rng.choice([0.3, 0.5, 0.7])
        clusters = cluster_queries(matrix(rows), theta)
        assert clusters == brute_complete_linkage(rows, theta)
        assert sorted(i for c in clusters for i in c) == list(range(10))


def test_candidate_examples(store_200):
    qa = AnalyticalQuery((Predicate("Dim0", "level1", "=", "1"),), (), (Aggregate("SUM", "quantity"),), "a")
    qb = AnalyticalQuery((Predicate("Dim1", "level2", ">", "0"),), (), COUNT, "b")
    w = Workload((qa, qb))
    stats = store_statistics(store_200)
    single = candidate_views([(0,), (1,)], w, stats)
    assert single[0].attributes == (("Dim0", "level1"),)
    pair = candidate_views([(0, 1)], w, stats)[0]
    assert pair.attributes == (("Dim0", "level1"), ("Dim1", "level2"))
    assert set(pair.resolvable) == {"a", "b"}


def test_size_estimate_against_materialization(store_1k):
    stats = store_statistics(store_1k)
    rng = random.Random(5)
    refs = [(d, a) for d, attrs in store_1k.dimension_catalog for a, _ in attrs]
    for _ in range(30):
        attrs = tuple(sorted(rng.sample(refs, rng.randint(1, 3))))
        estimate = stats.estimate_rows(attrs)
        v = CandidateView("v", attrs, (), (), (), estimate)
        actual = len(materialize(store_1k, v).rows)
        assert actual <= estimate <= len(store_1k.cells)
        if len(attrs) == 1:
            assert actual == estimate


def test_greedy_trivial():
    views, model = view_instance(random.Random(1), 3)
    assert greedy_select(views, 0, model).selected == ()
    only = CandidateView("v1", (), (), ("q0",), ("q0",), 10)
    model = CostModel(1000, {"q0": 1.0})
    assert greedy_select([only], 10, model).selected == ("v1",)


def test_greedy_invariants_and_monotone_budget():
    rng = random.Random(99)
    for _ in range(200):
        views, model = view_instance(rng, rng.randint(1, 10))
        previous = ()
        for budget in sorted(rng.sample(range(0, 3000), 6)):
            res = greedy_select(views, budget, model)
            sizes = {v.id: v.size for v in views}
            assert sum(sizes[v] for v in res.selected) == res.budget_used <= budget
            assert all(f > 0 for _, f in res.log)
            assert set(previous) <= set(res.selected)
            previous = res.selected


def test_greedy_suboptimal_on_adversarial_instance():
    small = CandidateView("a", (), (), ("q1",), ("q1",), 2)
    large = CandidateView("b", (), (), ("q2",), ("q2",), 50)
    model = CostModel(100, {"q1": 10.0, "q2": 100.0})
    res = greedy_select([small, large], 50, model)
    assert res.selected == ("a",) and res.stop == "storage space full"
    best, value = exhaustive_select([small, large], 50, model)
    assert best == ("b",)
    assert model.value([small]) == 978.0 and value == 4950.0


def test_greedy_against_exhaustive_reports_ratio():
    rng = random.Random(2024)
    ratios = []
    for _ in range(100):
        views, model = view_instance(rng, rng.randint(1, 10))
        budget = rng.randint(0, 2000)
        res = greedy_select(views, budget, model)
        chosen = [v for v in views if v.id in res.selected]
        _, optimum = exhaustive_select(views, budget, model)
        greedy_value = model.value(chosen)
        assert greedy_value <= optimum + 1e-9
        base = model.value([])
        if optimum > base:
            ratios.append((greedy_value - base) / (optimum - base))
    assert ratios
    print(f"greedy/optimum gain ratio: min {min(ratios):.3f} mean {sum(ratios) / len(ratios):.3f}")


def test_answer_from_views_equals_evaluate(store_1k):
    queries = random_queries(store_1k, 80, seed=12)
    w = Workload(tuple(queries))
    selector = ViewSelector(threshold=0.3, budget=10**9, lam=0.0).fit(w, store_1k)
    views = selector.transform(store_1k)
    assert views
    covered = 0
    for q in queries:
        if any(v.covers(q) for v in views):
            covered += 1
            assert answer_from_views(views, q).rows == evaluate(store_1k, q).rows, q
    assert covered >= len(queries) // 2


def test_view_defining_query_answered_without_store(store_200):
    v = CandidateView("v1", (("Dim0", "level1"), ("Dim2", "level0")), ("quantity",), (), (), 1)
    mv = materialize(store_200, v)
    q = AnalyticalQuery((), v.attributes, (Aggregate("SUM", "quantity"), Aggregate("AVG", "quantity")))
    assert answer_from_views([mv], q).rows == evaluate(store_200, q).rows
    with pytest.raises(NotCovered):
        answer_from_views([mv], AnalyticalQuery((), (("Dim1", "level0"),), COUNT))
    with pytest.raises(NotCovered):
        answer_from_views([mv], AnalyticalQuery((), (("Dim0", "level1"),), (Aggregate("SUM", "discount"),)))


def test_view_and_selection_files(store_200, tmp_path):
    w = Workload(tuple(random_queries(store_200, 20, seed=4)))
    sel = ViewSelector(threshold=0.5, budget=500, lam=1.0).fit(w, store_200)
    doc = to_bytes(selection_element(sel.candidates_, sel.selection_))
    candidates, result = read_selection(doc)
    assert candidates == sel.candidates_
    assert result.selected == sel.selection_.selected and result.log == sel.selection_.log
    for mv in ViewSelector(threshold=0.5, budget=10**9).fit(w, store_200).transform(store_200):
        back = read_view(to_bytes(view_element(mv)))
        assert back == mv


def test_read_workload(store_200, tmp_path):
    from xwarehouse.query import query_to_element
    from xwarehouse.validation import write_xml
    import xml.etree.ElementTree as ET

    qs = random_queries(store_200, 3, seed=1)
    for q in qs:
        write_xml(query_to_element(q), tmp_path / f"{q.id}.xml")
    manifest = ET.Element("frequencies")
    ET.SubElement(manifest, "query", {"id": qs[1].id, "weight": "4"})
    write_xml(manifest, tmp_path / "frequencies.xml")
    w = read_workload(tmp_path)
    assert w.queries == tuple(qs) and w.frequencies == (1.0, 4.0, 1.0)


def test_workload_validation():
    with pytest.raises(ValueError):
        Workload(())
    q = AnalyticalQuery(aggregates=COUNT, id="a")
    with pytest.raises(ValueError):
        Workload((q, q))

