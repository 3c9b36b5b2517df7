"""Random instance generators shared by several test modules."""

from hypothesis import strategies as st

from xwarehouse.viewsel import CandidateView, CostModel

from xwarehouse.store import DimensionMember, FactCell, XCubeStore, member_id

text = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=0x2FF, blacklist_characters="\x7f"),
               max_size=8)
decimals = st.decimals(min_value=-10**6, max_value=10**6, places=3, allow_nan=False, allow_infinity=False)


@st.composite
def stores(draw):
    n_dims = draw(st.integers(1, 3))
    catalog = []
    members = []
    for k in range(n_dims):
        attrs = (("code", "integer"), ("label", "string"), ("weight", "decimal"))[: draw(st.integers(1, 3))]
        catalog.append((f"D{k}", attrs))
        seen = set()
        for _ in range(draw(st.integers(1, 4))):
            values = []
            for name, type_ in attrs:
                if type_ == "integer":
                    values.append((name, draw(st.integers(-1000, 1000))))
                elif type_ == "decimal":
                    values.append((name, draw(decimals)))
                elif draw(st.booleans()):
                    values.append((name, draw(text)))
            node = member_id(f"D{k}", values)
            if node not in seen:
                seen.add(node)
                members.append(DimensionMember(f"D{k}", node, tuple(values)))
    measures = (("amount", "decimal"), ("qty", "integer"))
    cells = []
    for _ in range(draw(st.integers(0, 12))):
        coords = []
        for dim, _ in catalog:
            options = [m.node for m in members if m.dimension == dim]
            coords.append((dim, draw(st.sampled_from(options))))
        ms = [("amount", draw(decimals))]
        if draw(st.booleans()):
            ms.append(("qty", draw(st.integers(-50, 50))))
        cells.append(FactCell(tuple(coords), tuple(ms)))
    return XCubeStore("Sales", measures, tuple(catalog), tuple(members), tuple(cells))


def view_instance(rng, n_views, n_queries=8, cell_count=1000):
    """Random candidate views over a random workload, with their cost model."""
    qids = [f"q{i}" for i in range(n_queries)]
    freqs = {q: float(rng.randint(1, 20)) for q in qids}
    views = []
    for k in range(n_views):
        resolvable = tuple(sorted(rng.sample(qids, rng.randint(1, n_queries))))
        size = rng.randint(1, cell_count // 2)
        views.append(CandidateView(f"v{k:03d}", (), (), resolvable[:1], resolvable, size))
    return views, CostModel(cell_count, freqs, lam=rng.choice([0.0, 1.0, 5.0]))


def gaussian_blobs(seed, n=40, separation=10.0, dim=2):
    """Two isotropic unit-variance blobs of n/2 points, centres ``separation`` sigma apart."""
    import numpy as np

    rng = np.random.default_rng(seed)
    centre = np.zeros(dim)
    centre[0] = separation
    half = n // 2
    return np.vstack([rng.normal(size=(half, dim)), centre + rng.normal(size=(n - half, dim))])


def shop_store(rng, n_members=12, n_cells=60):
    """Small store with one ``Shop`` dimension of ``n_members`` members and integer measures."""
    regions = ["north", "south", "east"]
    members = tuple(DimensionMember("Shop", f"Shop-{i:02d}", (("region", regions[i % 3]), ("surface", i * 10)))
                    for i in range(n_members))
    cells = tuple(FactCell((("Shop", members[rng.randrange(n_members)].node),),
                           (("qty", rng.randint(0, 100)), ("visits", rng.randint(1, 9))))
                  for _ in range(n_cells))
    return XCubeStore("Sales", (("qty", "integer"), ("visits", "integer")),
                      (("Shop", (("region", "string"), ("surface", "integer"))),), members, cells)


def random_corpus(rng, n_docs=None, max_paths=15, tags=("a", "b", "c", "d", "e")):
    """Random documents redrawn until the corpus holds at most ``max_paths`` distinct tag paths."""
    from oracles import element_paths, random_tag_document

    while True:
        docs = [random_tag_document(rng, list(tags), depth=3, fanout=3)
                for _ in range(n_docs or rng.randint(2, 25))]
        paths = set().union(*(element_paths(d, attributes=False) for d in docs))
        if len(paths) <= max_paths:
            return docs
