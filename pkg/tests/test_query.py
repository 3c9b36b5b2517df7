import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_evaluate
from xwarehouse.errors import HierarchyMismatch, TypeMismatch, UnknownAttribute, UnknownMeasure
from xwarehouse.generate import random_queries, random_query, synthetic_hierarchies, synthetic_mcm, synthetic_store
from xwarehouse.query import (
    Aggregate,
    AnalyticalQuery,
    LevelHierarchy,
    Predicate,
    drilldown,
    evaluate,
    query_to_element,
    read_query,
    read_result,
    result_to_element,
    rollup,
)
from xwarehouse.store import PlanStats, read_store
from xwarehouse.validation import to_bytes

SUM_Q = Aggregate("SUM", "quantity")


def test_full_aggregation(store_200):
    table = evaluate(store_200, AnalyticalQuery(aggregates=(SUM_Q, Aggregate("COUNT", "*"))))
    total = sum(c.measure_values["quantity"] for c in store_200.cells)
    assert table.rows == ((total, len(store_200.cells)),)
    assert table.header == ("SUM(quantity)", "COUNT(*)")


def test_empty_selection(store_200):
    q = AnalyticalQuery((Predicate("Dim0", "level0", ">", "1000000"),), (), (SUM_Q,))
    assert evaluate(store_200, q).rows == ()


def test_golden_query_and_result(golden):
    s = read_store(golden / "store")
    q = read_query(golden / "query_q1.xml")
    assert to_bytes(query_to_element(q)) == (golden / "query_q1.xml").read_bytes()
    table = evaluate(s, q)
    assert to_bytes(result_to_element(table, q.id)) == (golden / "result_q1.xml").read_bytes()
    header, rows = read_result(golden / "result_q1.xml")
    assert header == table.header and rows[0] == ("books", "19.75", "3.000000", "2")


def test_errors(store_200):
    with pytest.raises(UnknownAttribute):
        evaluate(store_200, AnalyticalQuery((), (("Dim0", "nope"),), (SUM_Q,)))
    with pytest.raises(UnknownMeasure):
        evaluate(store_200, AnalyticalQuery(aggregates=(Aggregate("SUM", "nope"),)))
    with pytest.raises(TypeMismatch):
        evaluate(store_200, AnalyticalQuery((Predicate("Dim0", "level0", "<", "abc"),), (), (SUM_Q,)))
    with pytest.raises(ValueError):
        AnalyticalQuery()
    with pytest.raises(ValueError):
        Predicate("D", "a", "~", "1")


def test_absent_measures():
    s = synthetic_store(300, seed=2)
    q = AnalyticalQuery(aggregates=(Aggregate("COUNT", "discount"), Aggregate("COUNT", "*"),
                                    Aggregate("AVG", "discount")))
    count, cells, avg = evaluate(s, q).rows[0]
    present = [c.measure_values["discount"] for c in s.cells if "discount" in c.measure_values]
    assert count == len(present) < cells
    assert avg == (sum(present) / len(present)).quantize(Decimal("0.000001"))


def test_avg_rounding_half_even():
    from xwarehouse.query import average
    assert average(Decimal("0.0000005"), 1) == Decimal("0.000000")
    assert average(Decimal("0.0000015"), 1) == Decimal("0.000002")
    assert average(Decimal(1), 3) == Decimal("0.333333")
    assert average(None, 0) is None


def test_matches_naive_join(store_1k, queries_1k):
    for q in queries_1k:
        assert evaluate(store_1k, q).rows == naive_evaluate(store_1k, q), q


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_naive_join_random(seed):
    rng = random.Random(seed)
    s = synthetic_store(rng.randint(1, 200), seed=seed, keys=rng.choice([3, 9, 27]))
    q = random_query(s, rng)
    assert evaluate(s, q).rows == naive_evaluate(s, q)


def test_node_pseudo_attribute(store_200):
    q = AnalyticalQuery((), (("Dim1", "@node"),), (Aggregate("COUNT", "*"),))
    rows = evaluate(store_200, q).rows
    assert len(rows) == len(store_200.members_of("Dim1"))
    assert sum(r[1] for r in rows) == len(store_200.cells)


def test_rows_sorted_and_distinct(store_1k, queries_1k):
    for q in queries_1k:
        table = evaluate(store_1k, q)
        keys = [r[: len(q.group_by)] for r in table.rows]
        assert len(keys) == len(set(keys))
        assert keys == sorted(keys, key=lambda k: tuple((v is None, v) for v in k))


def test_count_total_equals_sum_of_groups(store_1k):
    total = evaluate(store_1k, AnalyticalQuery(aggregates=(Aggregate("COUNT", "*"),))).rows[0][0]
    for dim, attrs in store_1k.dimension_catalog:
        for attr, _ in attrs:
            rows = evaluate(store_1k, AnalyticalQuery((), ((dim, attr),), (Aggregate("COUNT", "*"),))).rows
            assert sum(r[1] for r in rows) == total


def parent_map(store, dim, fine, coarse):
    out = {}
    for m in store.members_of(dim):
        out.setdefault(m.get(fine), set()).add(m.get(coarse))
    assert all(len(v) == 1 for v in out.values()), "levels must be functional"
    return {k: next(iter(v)) for k, v in out.items()}


def check_additivity(store, dim, fine, coarse, measure="quantity"):
    agg = (Aggregate("SUM", measure),)
    fine_rows = evaluate(store, AnalyticalQuery((), ((dim, fine),), agg)).rows
    coarse_rows = dict(evaluate(store, AnalyticalQuery((), ((dim, coarse),), agg)).rows)
    up = parent_map(store, dim, fine, coarse)
    rolled = {}
    for value, total in fine_rows:
        rolled[up[value]] = rolled.get(up[value], 0) + total
    assert rolled == coarse_rows


def test_additivity_every_generated_hierarchy(store_1k):
    for h in synthetic_hierarchies(synthetic_mcm()):
        for fine, coarse in zip(h.levels, h.levels[1:]):
            check_additivity(store_1k, h.dimension, fine, coarse)


def test_rollup_and_drilldown():
    h = LevelHierarchy("Time", ("Day", "Month", "Year"))
    q = AnalyticalQuery((), (("Time", "Day"),), (SUM_Q,))
    up = rollup(q, h)
    assert up.query.group_by == (("Time", "Month"),) and not up.boundary
    down = drilldown(q, h)
    assert down.boundary and down.query == q
    top = AnalyticalQuery((), (("Time", "Year"),), (SUM_Q,))
    assert rollup(top, h).boundary
    mid = AnalyticalQuery((), (("Time", "Month"),), (SUM_Q,))
    assert drilldown(rollup(mid, h).query, h).query == mid
    assert rollup(drilldown(mid, h).query, h).query == mid
    with pytest.raises(HierarchyMismatch):
        rollup(AnalyticalQuery((), (("Shop", "city"),), (SUM_Q,)), h)


def test_rollup_result_additive(store_1k):
    h = synthetic_hierarchies(synthetic_mcm())[0]
    q = AnalyticalQuery((), ((h.dimension, h.levels[0]),), (SUM_Q,))
    while True:
        nav = rollup(q, h)
        if nav.boundary:
            break
        check_additivity(store_1k, h.dimension, q.group_by[0][1], nav.query.group_by[0][1])
        q = nav.query


def test_plan_counters(store_200):
    stats = PlanStats()
    evaluate(store_200, AnalyticalQuery((), (("Dim0", "level1"),), (SUM_Q,)), stats)
    assert stats.cells_scanned == len(store_200.cells)
    assert stats.member_lookups == len(store_200.cells)


def test_query_file_round_trip(store_200):
    for q in random_queries(store_200, 50, seed=9):
        assert read_query(to_bytes(query_to_element(q))) == q
