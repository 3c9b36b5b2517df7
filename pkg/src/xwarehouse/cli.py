"""Command-line entry point: ``xwarehouse <subcommand> ...``.

Exit codes: 0 success, 1 usage error (bad flags, missing input paths),
2 data error (malformed documents, stale index, uncovered query, ...).

When ``XWAREHOUSE_DATA`` is set, unspecified warehouse paths default to
``$XWAREHOUSE_DATA/store`` (store), ``$XWAREHOUSE_DATA/cube`` (cube) and
``$XWAREHOUSE_DATA/views`` (views).
"""

from __future__ import annotations

import argparse
import os
import random
import sys
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .errors import XWarehouseError
from .validation import check_fraction, to_bytes, write_xml

DATA_ENV = "XWAREHOUSE_DATA"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default(sub: str) -> Optional[str]:
    base = os.environ.get(DATA_ENV)
    return str(Path(base) / sub) if base else None


def _need_path(value: Optional[str], flag: str, *, kind: str = "any") -> Path:
    if value is None:
        raise UsageError(f"{flag} is required (or set {DATA_ENV})")
    p = Path(value)
    if kind == "dir" and not p.is_dir():
        raise UsageError(f"{flag}: directory not found: {value}")
    if kind == "file" and not p.is_file():
        raise UsageError(f"{flag}: file not found: {value}")
    if kind == "any" and not p.exists():
        raise UsageError(f"{flag}: path not found: {value}")
    return p


def _emit(element, out: Optional[str]) -> None:
    if out:
        write_xml(element, out)
    else:
        sys.stdout.buffer.write(to_bytes(element))
        sys.stdout.flush()


def _fraction(name: str, low_open: bool = True):
    def parse(text: str) -> float:
        try:
            return check_fraction(float(text), name, low_open=low_open)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _non_negative(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {value}")
    return value


def _list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# -- subcommands -------------------------------------------------------------------


def cmd_ingest(args) -> int:
    from .ingest import describe, write_report

    src = _need_path(args.src, "--src", kind="dir")
    notes = _need_path(args.annotations, "--annotations", kind="file") if args.annotations else None
    report = describe(src, notes, mtime=args.mtime, threads=args.threads)
    write_report(report, args.out)
    print(f"{len(report.descriptors)} descriptors, {len(report.unreadable)} unreadable", file=sys.stderr)
    return 0


def cmd_build_cube(args) -> int:
    from .cube import build_cube, write_cube
    from .mcm import read_mcm

    mcm_path = _need_path(args.mcm, "--mcm", kind="file")
    docs_dir = _need_path(args.docs, "--docs", kind="dir")
    out = args.out or _default("cube")
    if out is None:
        raise UsageError(f"--out is required (or set {DATA_ENV})")
    m = read_mcm(mcm_path)
    docs = [(p.relative_to(docs_dir).as_posix(), p) for p in sorted(docs_dir.rglob("*.xml"))]
    cube = build_cube(m, docs, threads=args.threads)
    write_cube(cube, out)
    print(f"{len(cube.facts)} facts, {len(cube.rejected)} rejected, {len(cube.malformed)} malformed",
          file=sys.stderr)
    return 0


def cmd_import(args) -> int:
    from .cube import read_cube
    from .store import import_cube, write_store

    cube_dir = _need_path(args.cube or _default("cube"), "--cube", kind="dir")
    out = args.out or _default("store")
    if out is None:
        raise UsageError(f"--out is required (or set {DATA_ENV})")
    s = import_cube(read_cube(cube_dir))
    write_store(s, out)
    print(f"{len(s.members)} members, {len(s.cells)} cells", file=sys.stderr)
    return 0


def cmd_index(args) -> int:
    from .joinindex import INDEX_FILE, build_index, read_index, write_index
    from .store import read_store

    store_dir = _need_path(args.store or _default("store"), "--store", kind="dir")
    target = Path(args.index) if args.index else store_dir / INDEX_FILE
    s = read_store(store_dir)
    if args.action == "build":
        write_index(build_index(s, args.built), target)
        print(f"index written to {target}", file=sys.stderr)
        return 0
    _need_path(str(target), "--index", kind="file")
    i = read_index(target)
    if i.provenance.store != s.fingerprint:
        print(f"stale: index provenance {i.provenance.store[:12]} != store {s.fingerprint[:12]}", file=sys.stderr)
        return 2
    print("fresh", file=sys.stderr)
    return 0


def cmd_views(args) -> int:
    from .query import read_query, result_to_element
    from .store import read_store
    from .viewsel import (ViewSelector, answer_from_views, materialize, read_selection, read_views,
                          read_workload, selection_element, write_view)

    if args.action == "select":
        store_dir = _need_path(args.store or _default("store"), "--store", kind="dir")
        workload_dir = _need_path(args.workload, "--workload", kind="dir")
        s = read_store(store_dir)
        selector = ViewSelector(threshold=args.threshold, budget=args.budget, lam=args.lam)
        selector.fit(read_workload(workload_dir), s)
        _emit(selection_element(selector.candidates_, selector.selection_), args.out)
        return 0
    if args.action == "materialize":
        store_dir = _need_path(args.store or _default("store"), "--store", kind="dir")
        selection = _need_path(args.selection, "--selection", kind="file")
        out = args.out or _default("views") or str(store_dir / "views")
        s = read_store(store_dir)
        candidates, result = read_selection(selection)
        chosen = set(result.selected)
        Path(out).mkdir(parents=True, exist_ok=True)
        for v in candidates:
            if v.id in chosen:
                write_view(materialize(s, v), out)
        print(f"{len(chosen)} views written to {out}", file=sys.stderr)
        return 0
    views_dir = _need_path(args.views or _default("views"), "--views", kind="dir")
    q = read_query(_need_path(args.query, "--query", kind="file"))
    _emit(result_to_element(answer_from_views(read_views(views_dir), q), q.id), args.out)
    return 0


def cmd_query(args) -> int:
    from .joinindex import read_index, evaluate_indexed
    from .opac import attach_level, read_level
    from .query import evaluate, read_query, result_to_element
    from .store import PlanStats, read_store
    from .viewsel import answer_from_views, read_views

    store_dir = _need_path(args.store or _default("store"), "--store", kind="dir")
    q = read_query(_need_path(args.query, "--query", kind="file"))
    if args.via_index and args.via_views:
        raise UsageError("--via-index and --via-views are mutually exclusive")
    if args.level and (args.via_index or args.via_views):
        raise UsageError("--level applies to direct evaluation only")
    s = read_store(store_dir)
    stats = PlanStats()
    if args.via_index:
        table = evaluate_indexed(read_index(_need_path(args.via_index, "--via-index", kind="file")), q,
                                 store=s, stats=stats)
    elif args.via_views:
        views = read_views(_need_path(args.via_views, "--via-views", kind="dir"))
        table = answer_from_views(views, q)
    else:
        for level_file in args.level or ():
            s = attach_level(s, read_level(_need_path(level_file, "--level", kind="file")))
        table = evaluate(s, q, stats)
    _emit(result_to_element(table, q.id), args.out)
    if args.stats:
        print(f"member_lookups={stats.member_lookups} cells_scanned={stats.cells_scanned}", file=sys.stderr)
    return 0


def cmd_opac(args) -> int:
    from .opac import (dendrogram_element, level_element, opac_aggregate, recommended_k, score_partitions,
                       scores_element, vectorize, ahc)
    from .store import read_store

    store_dir = _need_path(args.store or _default("store"), "--store", kind="dir")
    s = read_store(store_dir)
    out = Path(args.out) if args.out else store_dir / "opac"
    measures = args.measures
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vectors = vectorize(s, args.dimension, measures, args.descriptors)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    d = ahc(vectors)
    scores = score_partitions(d, vectors)
    best = recommended_k(scores)
    k = args.k if args.k is not None else best
    level = opac_aggregate(s, args.dimension, k, measures, args.descriptors, name=args.name)
    out.mkdir(parents=True, exist_ok=True)
    write_xml(dendrogram_element(d, [v.id for v in vectors]), out / "dendrogram.xml")
    write_xml(scores_element(scores, best), out / "scores.xml")
    write_xml(level_element(level), out / f"{level.name}.xml")
    print(f"k={k} (recommended {best}); outputs in {out}", file=sys.stderr)
    return 0


def cmd_mine(args) -> int:
    from .structminer import StructureMiner, dtd_element

    corpus = _need_path(args.corpus, "--corpus", kind="dir")
    miner = StructureMiner(args.minsup, args.minconf).fit(corpus)
    write_xml(miner.to_element(), args.out)
    dtd_path = Path(args.dtd) if args.dtd else Path(args.out).with_name(Path(args.out).stem + ".dtd.xml")
    write_xml(dtd_element(miner.dtd_), dtd_path)
    print(f"{len(miner.rules_)} rules from {len(miner.transactions_)} documents", file=sys.stderr)
    return 0


def cmd_gen(args) -> int:
    from .generate import drop_paths, facts_documents, random_queries, synthetic_mcm, synthetic_store
    from .mcm import mcm_to_element
    from .query import query_to_element

    out = Path(args.out)
    m = synthetic_mcm(args.dims, args.attrs)
    write_xml(mcm_to_element(m), out / "mcm.xml")
    rng = random.Random(args.seed + 1)
    docs = facts_documents(m, args.cells, args.seed, with_noise=False)
    for i, (ident, doc) in enumerate(docs):
        if rng.random() < args.noise:
            doc = drop_paths(doc, rng, 0.15)
        write_xml(doc, out / "docs" / f"{ident}.xml")
    if args.queries:
        s = synthetic_store(args.cells, args.dims, args.attrs, args.seed)
        for q in random_queries(s, args.queries, args.seed):
            write_xml(query_to_element(q), out / "workload" / f"{q.id}.xml")
    print(f"generated {args.cells} documents and {args.queries} queries in {out}", file=sys.stderr)
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xwarehouse", description="XML data warehouse: cube building, storage, OLAP queries, "
                                               "indexing, view selection, clustering and structure mining.")
    p.add_argument("--version", action="version", version=f"xwarehouse {__version__}")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker cap for parallel stages")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="<command>")
    sub.required = True

    s = sub.add_parser("ingest", help="describe source files as XML complex-object descriptors")
    s.add_argument("--src", required=True, help="directory of source files")
    s.add_argument("--annotations", help="annotation file (<annotations><object id=...>)")
    s.add_argument("--out", required=True, help="output directory for descriptor documents")
    s.add_argument("--mtime", help="pin the 'modified' characteristic (ISO timestamp)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("build-cube", help="admit source documents into an XML cube")
    s.add_argument("--mcm", required=True, help="MCM config file")
    s.add_argument("--docs", required=True, help="directory of source XML documents")
    s.add_argument("--out", help="cube output directory")
    s.set_defaults(func=cmd_build_cube)

    s = sub.add_parser("import", help="import a cube into Facts.xml/Dimensions.xml")
    s.add_argument("--cube", help="cube directory")
    s.add_argument("--out", help="store output directory")
    s.set_defaults(func=cmd_import)

    s = sub.add_parser("index", help="build or check the join-eliminating index")
    s.add_argument("action", choices=["build", "check"])
    s.add_argument("--store", help="store directory")
    s.add_argument("--index", help="index file (default <store>/Index.xml)")
    s.add_argument("--built", help="timestamp recorded in the index provenance")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("views", help="select, materialize or query materialized views")
    s.add_argument("action", choices=["select", "materialize", "answer"])
    s.add_argument("--store", help="store directory")
    s.add_argument("--workload", help="workload directory (select)")
    s.add_argument("--threshold", type=_fraction("threshold", low_open=False), default=0.5,
                   help="query similarity threshold in [0, 1]")
    s.add_argument("--budget", type=_non_negative, default=1000.0, help="storage budget in rows")
    s.add_argument("--lam", type=_non_negative, default=1.0, help="maintenance-cost weight")
    s.add_argument("--selection", help="selection report (materialize)")
    s.add_argument("--views", help="views directory (answer)")
    s.add_argument("--query", help="query file (answer)")
    s.add_argument("--out", help="output file (select/answer) or directory (materialize)")
    s.set_defaults(func=cmd_views)

    s = sub.add_parser("query", help="evaluate an analytical query")
    s.add_argument("--store", help="store directory")
    s.add_argument("--query", required=True, help="query file")
    s.add_argument("--via-index", help="answer from this Index.xml")
    s.add_argument("--via-views", help="answer from the views in this directory")
    s.add_argument("--level", action="append", help="aggregate-level mapping file produced by opac")
    s.add_argument("--out", help="result file (default stdout)")
    s.add_argument("--stats", action="store_true", help="print plan counters to stderr")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("opac", help="cluster the members of a dimension into an aggregate level")
    s.add_argument("--store", help="store directory")
    s.add_argument("--dimension", required=True)
    s.add_argument("--measures", type=_list, required=True, help="comma-separated measure names")
    s.add_argument("--descriptors", type=_list, default=[], help="comma-separated member attributes")
    s.add_argument("--k", type=_positive_int, help="cluster count (default: recommended)")
    s.add_argument("--name", help="name of the new level (default opac<k>)")
    s.add_argument("--out", help="output directory (default <store>/opac)")
    s.set_defaults(func=cmd_opac)

    s = sub.add_parser("mine-structure", help="association rules over the tag structure of a corpus")
    s.add_argument("--corpus", required=True, help="directory of XML documents")
    s.add_argument("--minsup", type=_fraction("minsup"), required=True)
    s.add_argument("--minconf", type=_fraction("minconf"), required=True)
    s.add_argument("--out", required=True, help="rules XML file")
    s.add_argument("--dtd", help="minimal DTD file (default <out stem>.dtd.xml)")
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("gen", help="seeded synthetic MCM, source documents and workload")
    s.add_argument("--out", required=True)
    s.add_argument("--cells", type=_positive_int, default=300)
    s.add_argument("--dims", type=_positive_int, default=3)
    s.add_argument("--attrs", type=_positive_int, default=4)
    s.add_argument("--queries", type=int, default=20)
    s.add_argument("--noise", type=_fraction("noise", low_open=False), default=0.05,
                   help="fraction of documents with randomly dropped paths")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"xwarehouse: error: {exc}", file=sys.stderr)
        return 1
    except (XWarehouseError, ValueError, KeyError) as exc:
        print(f"xwarehouse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
