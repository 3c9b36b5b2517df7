import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings

from xwarehouse.cube import XmlCube, FactDocument, build_cube
from xwarehouse.errors import DanglingCoordinate, InconsistentFact, MalformedStoreFile
from xwarehouse.generate import facts_documents, synthetic_mcm
from xwarehouse.mcm import MCM, DimAttribute, Dimension, Hierarchy, Measure, star_schema_of
from xwarehouse.store import (
    FactCell,
    XCubeStore,
    dimensions_element,
    facts_element,
    import_cube,
    member_id,
    read_store,
    write_store,
)
from xwarehouse.validation import to_bytes

from strategies import stores

MODEL = MCM("Sales", (Measure("amount"), Measure("quantity", "integer", False)),
            (Dimension("Time", (DimAttribute("year", "integer"),)),
             Dimension("Product", (DimAttribute("category"),))))


def fact(amount, year, category, quantity=None):
    el = ET.Element("Sales", {"amount": amount})
    if quantity is not None:
        el.set("quantity", quantity)
    ET.SubElement(el, "Time", {"year": year})
    ET.SubElement(el, "Product", {"category": category})
    return el


def test_two_facts_one_dimension():
    m = MCM("Sales", (Measure("amount"),), (Dimension("Time", (DimAttribute("year", "integer"),)),))
    cube = build_cube(m, ["<Sales amount='1'><Time year='1999'/></Sales>", "<Sales amount='2'><Time year='2000'/></Sales>"])
    s = import_cube(cube)
    assert len(s.cells) == 2 and len(s.members) <= 2


def test_shared_members_deduplicated():
    cube = build_cube(MODEL, [fact("1", "1999", "books"), fact("2", "1999", "books")])
    s = import_cube(cube)
    assert len(s.cells) == 2
    assert len(s.members_of("Time")) == 1 and len(s.members_of("Product")) == 1
    assert s.cells[0].coordinates == s.cells[1].coordinates


def test_member_count_matches_distinct_combinations():
    m = synthetic_mcm()
    docs = facts_documents(m, 500, seed=8)
    s = import_cube(build_cube(m, docs))
    assert len(s.cells) == 500
    combos = {(child.tag, tuple(sorted(child.attrib.items()))) for _, d in docs for child in d}
    assert len(s.members) == len(combos)


def test_measure_values_preserved():
    s = import_cube(build_cube(MODEL, [fact("12.50", "1999", "books", "3")]))
    values = s.cells[0].measure_values
    assert values["quantity"] == 3 and isinstance(values["quantity"], int)
    assert str(values["amount"]) == "12.50"


def test_member_ids_are_content_hashes():
    attrs = (("year", 1999),)
    assert member_id("Time", attrs) == member_id("Time", attrs)
    assert member_id("Time", attrs) != member_id("Time", (("year", 2000),))
    assert member_id("Time", attrs).startswith("Time-")


def test_inconsistent_fact():
    schema = star_schema_of(MODEL)
    bad = XmlCube(schema, (FactDocument("x", fact("1", "1999", "books")),
                           FactDocument("y", ET.fromstring("<Sales amount='1'><Shop/></Sales>"))))
    with pytest.raises(InconsistentFact):
        import_cube(bad)


def test_snowflake_chain_flattened():
    levels = (Dimension("Day", (DimAttribute("day", "integer"),)),
              Dimension("Month", (DimAttribute("month", "integer"),)))
    m = MCM("Sales", (Measure("amount"),), (Dimension("Time", (DimAttribute("day", "integer"),)),),
            (Hierarchy("Time", levels),))
    s = import_cube(build_cube(m, ["<Sales amount='1'><Day day='3'><Month month='1'/></Day></Sales>"]))
    assert s.dimension_catalog == (("Day", (("day", "integer"), ("Month.month", "integer"))),)
    assert s.members[0].values == {"day": 3, "Month.month": 1}


def test_golden_layout(golden, tmp_path):
    docs = ['<Sales amount="12.50" quantity="3"><Time year="1999"/><Product category="books"/></Sales>',
            '<Sales amount="7.25"><Time year="2000"/><Product category="books"/></Sales>',
            '<Sales amount="1.00" quantity="1"><Time year="1999"/><Product category="music"/></Sales>']
    s = import_cube(build_cube(MODEL, docs))
    write_store(s, tmp_path)
    for name in ("Dimensions.xml", "Facts.xml"):
        assert (tmp_path / name).read_bytes() == (golden / "store" / name).read_bytes()
    assert read_store(golden / "store") == s


def test_empty_store_round_trip(tmp_path):
    s = XCubeStore("Sales", (("amount", "decimal"),), (("Time", (("year", "integer"),)),))
    write_store(s, tmp_path)
    assert read_store(tmp_path) == s


def test_dangling_reference_rejected(golden, tmp_path):
    text = (golden / "store" / "Facts.xml").read_text().replace("Time-0b16073be5", "Time-ffffffffff")
    (tmp_path / "Facts.xml").write_text(text)
    (tmp_path / "Dimensions.xml").write_bytes((golden / "store" / "Dimensions.xml").read_bytes())
    with pytest.raises(MalformedStoreFile):
        read_store(tmp_path)


def test_layout_violations(golden, tmp_path):
    (tmp_path / "Dimensions.xml").write_bytes((golden / "store" / "Dimensions.xml").read_bytes())
    (tmp_path / "Facts.xml").write_text("<Facts fact='Sales'><Row/></Facts>")
    with pytest.raises(MalformedStoreFile):
        read_store(tmp_path)
    (tmp_path / "Facts.xml").write_text("<Facts fact='Sales'><Cell")
    with pytest.raises(MalformedStoreFile):
        read_store(tmp_path)


def test_check_detects_dangling():
    s = XCubeStore("F", (("m", "integer"),), (("D", (("a", "string"),)),), (),
                   (FactCell((("D", "D-x"),), (("m", 1),)),))
    with pytest.raises(DanglingCoordinate):
        s.check()


@settings(max_examples=200, deadline=None)
@given(stores())
def test_round_trip_identity(tmp_path_factory, s):
    d = tmp_path_factory.mktemp("store")
    write_store(s, d)
    back = read_store(d)
    assert back == s
    assert to_bytes(dimensions_element(back)) == to_bytes(dimensions_element(s))
    assert to_bytes(facts_element(back)) == to_bytes(facts_element(s))
    assert back.fingerprint == s.fingerprint


def test_fingerprint_changes_with_content(store_200):
    cells = list(store_200.cells)
    first = cells[0]
    cells[0] = FactCell(first.coordinates, tuple((n, v + 1) for n, v in first.measures))
    changed = XCubeStore(store_200.fact_name, store_200.measure_catalog, store_200.dimension_catalog,
                         store_200.members, tuple(cells))
    assert changed.fingerprint != store_200.fingerprint
