"""In-memory relational store and algebra kernel.

One table per non-abstract ontology class; relations are immutable
values with set semantics (no duplicate rows). The algebra (natural
join, projection, selection) is the substrate of assignable-set
computation.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

from . import values
from .errors import (
    CellParseError,
    NoExtentError,
    SchemaError,
    TagMismatchError,
    UnknownColumnError,
)
from .ontology import OntologyGraph
from .protocol import Condition, eval_condition


@dataclass(frozen=True)
class Relation:
    """Named schema plus a set of rows.

    ``columns`` and ``tags`` are aligned; rows are tuples in column
    order. Cells are plain values (see values module) or None for null.
    """

    columns: tuple[str, ...]
    tags: tuple[str, ...]
    rows: frozenset[tuple]
    name: str = ""

    def __post_init__(self):
        if len(self.columns) != len(set(self.columns)):
            raise SchemaError(f"duplicate column in relation {self.name!r}")
        if len(self.columns) != len(self.tags):
            raise SchemaError("columns and tags must align")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise SchemaError(
                    f"row arity {len(row)} does not match schema of {self.name!r}"
                )

    def index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise UnknownColumnError(
                f"no column {column!r} in relation {self.name!r}"
            ) from None

    def tag(self, column: str) -> str:
        return self.tags[self.index(column)]

    def sorted_rows(self) -> list[tuple]:
        return sorted(self.rows, key=lambda r: tuple(values.sort_key(v) for v in r))

    def row_dicts(self):
        for row in self.rows:
            yield dict(zip(self.columns, row))

    def is_empty(self) -> bool:
        return not self.rows


def relation(name, columns, tags, rows) -> Relation:
    return Relation(tuple(columns), tuple(tags), frozenset(tuple(r) for r in rows), name)


def canonical_rows(r: Relation) -> frozenset[tuple]:
    """Rows with columns sorted by name; for order-insensitive comparison."""
    order = sorted(range(len(r.columns)), key=lambda i: r.columns[i])
    return frozenset(tuple(row[i] for i in order) for row in r.rows)


# --- algebra ---

def natural_join(r1: Relation, r2: Relation) -> Relation:
    """Join on all shared column names; null never matches anything.

    Disjoint schemas degenerate to the Cartesian product.
    """
    shared = [c for c in r1.columns if c in r2.columns]
    for c in shared:
        if r1.tag(c) != r2.tag(c):
            raise TagMismatchError(
                f"shared column {c!r} has tags {r1.tag(c)!r} and {r2.tag(c)!r}"
            )
    extra = [c for c in r2.columns if c not in r1.columns]
    out_columns = tuple(r1.columns) + tuple(extra)
    out_tags = tuple(r1.tags) + tuple(r2.tag(c) for c in extra)
    i1 = [r1.index(c) for c in shared]
    i2 = [r2.index(c) for c in shared]
    iextra = [r2.index(c) for c in extra]

    buckets: dict[tuple, list[tuple]] = {}
    for row in r2.rows:
        key = tuple(row[i] for i in i2)
        if any(v is None for v in key):
            continue
        buckets.setdefault(key, []).append(row)

    out = set()
    if shared:
        for row in r1.rows:
            key = tuple(row[i] for i in i1)
            if any(v is None for v in key):
                continue
            for other in buckets.get(key, ()):
                out.add(row + tuple(other[i] for i in iextra))
    else:
        for row in r1.rows:
            for other in r2.rows:
                out.add(row + tuple(other[i] for i in iextra))
    return Relation(out_columns, out_tags, frozenset(out))


def project(r: Relation, cols) -> Relation:
    """Restrict to the given columns, eliminating duplicate rows."""
    cols = list(cols)
    idx = [r.index(c) for c in cols]
    tags = tuple(r.tags[i] for i in idx)
    rows = frozenset(tuple(row[i] for i in idx) for row in r.rows)
    return Relation(tuple(cols), tags, rows, r.name)


def select(r: Relation, conds, mode: str = "conjunction") -> Relation:
    """Keep rows satisfying the conditions combined under the given mode.

    An empty condition list is the identity in either mode.
    """
    conds = list(conds)
    for cond in conds:
        for var in cond.variables():
            r.index(var)  # raises UnknownColumnError
    if not conds:
        return r
    combine = all if mode == "conjunction" else any
    out = set()
    for row in r.rows:
        env = dict(zip(r.columns, row))
        if combine(eval_condition(c, env) for c in conds):
            out.add(row)
    return Relation(r.columns, r.tags, frozenset(out), r.name)


def rename(r: Relation, mapping: dict[str, str]) -> Relation:
    new_columns = tuple(mapping.get(c, c) for c in r.columns)
    return Relation(new_columns, r.tags, r.rows, r.name)


# --- database ---

class Database:
    """Tables for exactly the non-abstract classes of a server ontology."""

    def __init__(self, tables: dict[str, Relation], ontology: OntologyGraph,
                 property_tags: dict[str, str]):
        self.tables = dict(tables)
        self.ontology = ontology
        self.property_tags = dict(property_tags)

    def with_tables(self, tables: dict[str, Relation]) -> "Database":
        """Copy with some tables replaced; used by deletion experiments."""
        merged = dict(self.tables)
        merged.update(tables)
        return Database(merged, self.ontology, self.property_tags)


def load_database(source_dir, server: OntologyGraph) -> Database:
    """Load a data directory (one CSV per non-abstract class plus a
    manifest declaring column tags) and validate it against the ontology."""
    manifest_path = os.path.join(source_dir, "manifest.json")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"missing manifest.json in {source_dir}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed manifest.json: {exc}") from exc

    property_tags: dict[str, str] = {}
    for cls_name, cols in manifest.items():
        node = server.find_match(cls_name)
        if node is None:
            raise SchemaError(f"manifest names unknown class {cls_name!r}")
        for col, tag in cols.items():
            if tag not in values.TAGS:
                raise SchemaError(f"unknown tag {tag!r} for {cls_name}.{col}")
            if property_tags.setdefault(col, tag) != tag:
                raise TagMismatchError(
                    f"property {col!r} declared with conflicting tags"
                )

    non_abstract = {
        name for name, node in server.classes.items() if not node.abstract
    }
    for entry in sorted(os.listdir(source_dir)):
        if not entry.endswith(".csv"):
            continue
        stem = entry[:-4]
        node = server.find_match(stem)
        if node is None:
            raise SchemaError(f"table file {entry!r} names unknown class")
        if node.abstract:
            raise SchemaError(
                f"table file {entry!r} backs abstract class {node.name!r}"
            )

    tables: dict[str, Relation] = {}
    for cls_name in sorted(non_abstract):
        path = os.path.join(source_dir, f"{cls_name}.csv")
        if not os.path.exists(path):
            raise SchemaError(f"missing table file for class {cls_name!r}")
        expected = server.effective_properties(cls_name)
        declared = manifest.get(cls_name, {})
        if set(declared) != set(expected):
            missing = sorted(set(expected) - set(declared))
            extra = sorted(set(declared) - set(expected))
            raise SchemaError(
                f"manifest for {cls_name!r} drifts from ontology "
                f"(missing {missing}, extra {extra})"
            )
        tables[cls_name] = _load_table(path, cls_name, expected, property_tags)
    return Database(tables, server, property_tags)


def _load_table(path, cls_name, expected_cols, property_tags) -> Relation:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        if set(header) != set(expected_cols) or len(header) != len(set(header)):
            raise SchemaError(
                f"{path}: header {header} does not cover columns "
                f"{sorted(expected_cols)}"
            )
        columns = tuple(sorted(expected_cols))
        tags = tuple(property_tags[c] for c in columns)
        reorder = [header.index(c) for c in columns]
        rows = set()
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise SchemaError(f"{path}:{lineno}: wrong arity")
            cells = []
            for i, col in zip(reorder, columns):
                try:
                    cells.append(values.parse_cell(raw[i], property_tags[col]))
                except ValueError as exc:
                    raise CellParseError(
                        f"{path}:{lineno}: column {col!r}: {exc}"
                    ) from exc
            rows.add(tuple(cells))
    return Relation(columns, tags, frozenset(rows), cls_name)


def class_extent(db: Database, class_name: str) -> Relation:
    """The relation a query ``from C`` scans: the class's own table
    unioned with all non-abstract descendants' tables, projected onto the
    class's effective properties."""
    node = db.ontology.find_match(class_name)
    if node is None:
        raise NoExtentError(f"unknown class {class_name!r}")
    columns = tuple(sorted(db.ontology.effective_properties(node.name)))
    contributors = extent_tables(db, node.name)
    if not contributors:
        raise NoExtentError(
            f"class {node.name!r} has no table and no non-abstract descendant"
        )
    tags = tuple(db.property_tags[c] for c in columns)
    rows = set()
    for table_name in contributors:
        table = db.tables[table_name]
        idx = [table.index(c) for c in columns]
        for row in table.rows:
            rows.add(tuple(row[i] for i in idx))
    return Relation(columns, tags, frozenset(rows), node.name)


def extent_tables(db: Database, class_name: str) -> list[str]:
    """Names of the tables contributing rows to a class's extent."""
    node = db.ontology.find_match(class_name)
    if node is None:
        raise NoExtentError(f"unknown class {class_name!r}")
    names = {node.name} | set(db.ontology.descendants(node.name))
    return sorted(n for n in names if n in db.tables)
